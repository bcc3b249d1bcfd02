"""Classical worldline dynamics generated by the weights ``R = |W|^2``.

Sampling a plumbed state in the Z basis is ancestral sampling of a causal
vertex network: each vertex reads its two input bits ``(i, j)`` and draws its
outputs ``(m, n)`` with probability ``R[2i+j, 2m+n]``.  Two geometries are
provided:

* the open square patch of :class:`LatticeSpec` (same network as the circuit),
* a brickwork cylinder of ``L_x`` slots (periodic) and ``L_t`` layers, the 45
  degree rotated frame in which the bits are particle worldlines.

In the brickwork frame slice ``t`` holds bits ``s[t, a]``.  The layer after
slice ``t`` pairs ``(a, a+1)`` with ``a = t mod 2``; inputs are ``i = s[t, a]``
and ``j = s[t, a+1]``, outputs are ``m = s[t+1, a+1]`` and ``n = s[t+1, a]``.
Each trajectory draws random numbers from its own stream seeded by
``(seed, index)``, so results do not depend on how work is split.
"""

from __future__ import annotations

import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import DomainError, ResourceError, ValidationError
from .lattice import LatticeSpec
from .tensors import WeightMatrix, WMatrix, weight_matrix

CHUNK = 4096
TRANSFER_MAX_L = 6


@dataclass(frozen=True, eq=False)
class VertexNetwork:
    """Causally ordered vertices; ``in0, in1 -> out0, out1`` index into the edge bits."""

    n_edges: int
    in0: np.ndarray
    in1: np.ndarray
    out0: np.ndarray
    out1: np.ndarray
    boundary: np.ndarray
    shape: tuple[int, ...] = ()

    @property
    def n_vertices(self) -> int:
        return self.in0.size


def square_network(lattice: LatticeSpec) -> VertexNetwork:
    verts = [lattice.vertex_edges(x, y) for x, y in lattice.vertices]
    arr = np.array(verts, dtype=np.int64).reshape(-1, 4)
    return VertexNetwork(
        lattice.n_qubits,
        arr[:, 0].copy(),
        arr[:, 1].copy(),
        arr[:, 2].copy(),
        arr[:, 3].copy(),
        np.array(lattice.boundary_edges, dtype=np.int64),
    )


def brickwork_network(L_x: int, L_t: int) -> VertexNetwork:
    if L_x < 2 or L_x % 2:
        raise DomainError(f"L_x must be even and >= 2, got {L_x}")
    if L_t < 1:
        raise DomainError(f"L_t must be >= 1, got {L_t}")
    in0, in1, out0, out1 = [], [], [], []
    for t in range(L_t):
        for a in range(t % 2, L_x, 2):
            b = (a + 1) % L_x
            in0.append(t * L_x + a)
            in1.append(t * L_x + b)
            out0.append((t + 1) * L_x + b)
            out1.append((t + 1) * L_x + a)
    as_arr = lambda v: np.array(v, dtype=np.int64)
    return VertexNetwork(
        (L_t + 1) * L_x, as_arr(in0), as_arr(in1), as_arr(out0), as_arr(out1), np.arange(L_x, dtype=np.int64), (L_t + 1, L_x)
    )


# random numbers: splitmix64 per trajectory


@numba.njit(cache=True, inline="always")
def _splitmix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@numba.njit(cache=True)
def _stream_start(seed, index):
    s = np.uint64(seed) * np.uint64(0xD1B54A32D192ED03) + np.uint64(index)
    s, z = _splitmix(s)
    s, z = _splitmix(s ^ z)
    return s


@numba.njit(cache=True, inline="always")
def _uniform(state):
    state, z = _splitmix(state)
    return state, (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _run_one(cum, in0, in1, out0, out1, boundary, fixed, use_fixed, state, conf):
    for k in range(boundary.size):
        if use_fixed:
            conf[boundary[k]] = fixed[k]
        else:
            state, u = _uniform(state)
            conf[boundary[k]] = 1 if u < 0.5 else 0
    for v in range(in0.size):
        row = 2 * conf[in0[v]] + conf[in1[v]]
        state, u = _uniform(state)
        col = 3
        for c in range(3):
            if u < cum[row, c]:
                col = c
                break
        conf[out0[v]] = col >> 1
        conf[out1[v]] = col & 1
    return state


@numba.njit(cache=True, nogil=True)
def _sample_chunk(cum, in0, in1, out0, out1, boundary, fixed, use_fixed, n_edges, seed, start, count):
    out = np.zeros((count, n_edges), dtype=np.uint8)
    for s in range(count):
        state = _stream_start(seed, start + s)
        _run_one(cum, in0, in1, out0, out1, boundary, fixed, use_fixed, state, out[s])
    return out


@numba.njit(cache=True, nogil=True)
def _correlate_chunk(
    cum, in0, in1, out0, out1, boundary, fixed, use_fixed, n_edges, seed, start, count, pa, pb, pr, n_r, sites
):
    conf = np.zeros(n_edges, dtype=np.uint8)
    acc = np.zeros(n_r)
    acc2 = np.zeros(n_r)
    npairs = np.zeros(n_r)
    for k in range(pr.size):
        npairs[pr[k]] += 1.0
    site_sum = np.zeros(sites.size)
    tmp = np.zeros(n_r)
    for s in range(count):
        state = _stream_start(seed, start + s)
        _run_one(cum, in0, in1, out0, out1, boundary, fixed, use_fixed, state, conf)
        tmp[:] = 0.0
        for k in range(pa.size):
            za = 1 - 2 * conf[pa[k]]
            zb = 1 - 2 * conf[pb[k]]
            tmp[pr[k]] += za * zb
        for r in range(n_r):
            m = tmp[r] / npairs[r]
            acc[r] += m
            acc2[r] += m * m
        for k in range(sites.size):
            site_sum[k] += 1 - 2 * conf[sites[k]]
    return acc, acc2, site_sum


def _cumulative(w: WMatrix | WeightMatrix) -> np.ndarray:
    r = w if isinstance(w, WeightMatrix) else weight_matrix(w)
    if r.dim_virtual != 2:
        raise ValidationError("worldline sampling needs D = 2")
    if not r.is_stochastic(1e-10):
        raise ValidationError("weight matrix rows must sum to 1")
    cum = np.cumsum(r.entries, axis=1)
    cum[:, -1] = 1.0
    return np.ascontiguousarray(cum)


def _boundary_args(net: VertexNetwork, boundary) -> tuple[np.ndarray, bool]:
    if isinstance(boundary, str) and not (boundary and set(boundary) <= {"0", "1"}):
        if boundary != "plus":
            raise ValidationError(f"unknown boundary {boundary!r} (use a bitstring or 'plus')")
        return np.zeros(net.boundary.size, dtype=np.uint8), False
    bits = np.asarray([int(b) for b in boundary], dtype=np.uint8)
    if bits.size != net.boundary.size:
        raise ValidationError(f"boundary has {bits.size} bits, network needs {net.boundary.size}")
    return bits, True


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One sampled configuration; ``config`` is shaped ``(L_t+1, L_x)`` on the brickwork."""

    config: np.ndarray
    boundary: str
    seed: int
    index: int

    def particle_numbers(self) -> np.ndarray:
        return self.config.reshape(self.config.shape[0], -1).sum(axis=1)

    def vertex_positions(self, t: int) -> np.ndarray:
        """Occupied slots of slice ``t`` mapped to the left slot of the vertex they enter.

        In this coordinate a lone particle at ``g = 0`` hops by exactly +-1 per layer.
        """
        occ = np.flatnonzero(self.config[t])
        return occ - ((occ - t) % 2)


def sample_configurations(
    w: WMatrix | WeightMatrix, net: VertexNetwork, boundary, n: int, seed: int, start: int = 0
) -> np.ndarray:
    """``n`` configurations as a ``(n, n_edges)`` uint8 array (trajectories ``start .. start+n-1``)."""
    cum = _cumulative(w)
    fixed, use_fixed = _boundary_args(net, boundary)
    return _sample_chunk(cum, net.in0, net.in1, net.out0, net.out1, net.boundary, fixed, use_fixed, net.n_edges, seed, start, n)


def sample_trajectory(w: WMatrix | WeightMatrix, L_x: int, L_t: int, boundary, seed: int, index: int = 0) -> TrajectoryRecord:
    net = brickwork_network(L_x, L_t)
    conf = sample_configurations(w, net, boundary, 1, seed, index)[0]
    label = boundary if isinstance(boundary, str) else "".join(str(int(b)) for b in boundary)
    return TrajectoryRecord(conf.reshape(net.shape), label, seed, index)


def trajectory_distribution(w: WMatrix | WeightMatrix, net: VertexNetwork, boundary_bits: Sequence[int]) -> np.ndarray:
    """Exact distribution over edge configurations (bit ``e`` of the index is edge ``e``)."""
    if net.n_edges > 22:
        raise ResourceError("enumeration limited to 22 edges")
    r = (w if isinstance(w, WeightMatrix) else weight_matrix(w)).entries
    probs = {0: 1.0}
    start = 0
    for q, b in zip(net.boundary, boundary_bits):
        start |= int(b) << int(q)
    probs = {start: 1.0}
    for v in range(net.n_vertices):
        nxt: dict[int, float] = {}
        a, b, m, n = (int(net.in0[v]), int(net.in1[v]), int(net.out0[v]), int(net.out1[v]))
        for conf, p in probs.items():
            row = 2 * ((conf >> a) & 1) + ((conf >> b) & 1)
            for col in range(4):
                if r[row, col] == 0:
                    continue
                c2 = conf | ((col >> 1) << m) | ((col & 1) << n)
                nxt[c2] = nxt.get(c2, 0.0) + p * r[row, col]
        probs = nxt
    out = np.zeros(2**net.n_edges)
    for conf, p in probs.items():
        out[conf] = p
    return out


# correlations


@dataclass(frozen=True)
class CorrelationEstimate:
    direction: str
    r: int
    mean: float
    stderr: float
    samples: int


def bulk_window(L_t: int, fraction: float = 0.25) -> tuple[int, int]:
    """Slices ``t_lo .. t_hi`` (inclusive) kept after dropping ``fraction`` of the rows at each end."""
    if not 0 <= fraction < 0.5:
        raise DomainError(f"window fraction must lie in [0, 0.5), got {fraction}")
    cut = int(np.floor(fraction * L_t))
    return cut, L_t - cut


def correlation_pairs(L_x: int, L_t: int, direction: str, r_max: int, fraction: float = 0.25):
    """Site pairs ``(a, b, r)`` inside the bulk window for the given direction.

    ``t``: ``s[t, a]`` with ``s[t+r, a]``; ``x``: ``s[t, a]`` with ``s[t, a+r]``;
    ``diag45``: along the straight ``i -> m`` line, ``s[t, a]`` with
    ``s[t+r, a+r]`` for ``a = t mod 2``.
    """
    lo, hi = bulk_window(L_t, fraction)
    if r_max < 1:
        raise DomainError("r_max must be >= 1")
    if direction in ("t", "diag45") and r_max > hi - lo:
        raise DomainError(f"separation {r_max} does not fit the bulk window of {hi - lo} slices")
    if direction == "x" and r_max > L_x // 2:
        raise DomainError(f"x separation {r_max} exceeds half the ring {L_x // 2}")
    if direction not in ("t", "x", "diag45"):
        raise DomainError(f"unknown direction {direction!r}")
    pa, pb, pr = [], [], []
    for r in range(1, r_max + 1):
        for t in range(lo, hi + 1):
            for a in range(L_x):
                if direction == "t":
                    if t + r > hi:
                        continue
                    u, b = t + r, a
                elif direction == "x":
                    u, b = t, (a + r) % L_x
                else:
                    if a % 2 != t % 2 or t + r > hi:
                        continue
                    u, b = t + r, (a + r) % L_x
                pa.append(t * L_x + a)
                pb.append(u * L_x + b)
                pr.append(r - 1)
    return np.array(pa, dtype=np.int64), np.array(pb, dtype=np.int64), np.array(pr, dtype=np.int64)


def correlate(
    w: WMatrix | WeightMatrix,
    L_x: int,
    L_t: int,
    boundary,
    direction: str,
    samples: int,
    seed: int,
    r_max: int | None = None,
    workers: int = 1,
    window_fraction: float = 0.25,
) -> list[CorrelationEstimate]:
    """Connected ``<Z Z>`` against separation, averaged over bulk pairs and trajectories.

    The standard error is the spread of the per-trajectory pair averages; the
    disconnected part uses the sample means of the single-site ``Z``.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    net = brickwork_network(L_x, L_t)
    if r_max is None:
        lo, hi = bulk_window(L_t, window_fraction)
        r_max = L_x // 2 if direction == "x" else max(1, (hi - lo) // 2)
    pa, pb, pr = correlation_pairs(L_x, L_t, direction, r_max, window_fraction)
    sites = np.unique(np.concatenate([pa, pb]))
    pos = {int(s): k for k, s in enumerate(sites)}
    cum = _cumulative(w)
    fixed, use_fixed = _boundary_args(net, boundary)
    starts = list(range(0, samples, CHUNK))

    def job(start):
        count = min(CHUNK, samples - start)
        return _correlate_chunk(
            cum, net.in0, net.in1, net.out0, net.out1, net.boundary, fixed, use_fixed, net.n_edges,
            seed, start, count, pa, pb, pr, r_max, sites,
        )

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(job, starts))
    else:
        results = [job(s) for s in starts]
    acc = np.zeros(r_max)
    acc2 = np.zeros(r_max)
    site_sum = np.zeros(sites.size)
    # combine in chunk order so the sums do not depend on the worker count
    for a, a2, ss in results:
        acc += a
        acc2 += a2
        site_sum += ss
    zbar = site_sum / samples
    disc = np.zeros(r_max)
    cnt = np.zeros(r_max)
    ia = np.array([pos[int(s)] for s in pa])
    ib = np.array([pos[int(s)] for s in pb])
    np.add.at(disc, pr, zbar[ia] * zbar[ib])
    np.add.at(cnt, pr, 1.0)
    disc /= cnt
    mean = acc / samples
    var = np.maximum(acc2 / samples - mean**2, 0.0)
    err = np.sqrt(var / max(samples - 1, 1))
    return [
        CorrelationEstimate(direction, r + 1, float(mean[r] - disc[r]), float(err[r]), samples) for r in range(r_max)
    ]


@dataclass(frozen=True)
class FitResult:
    slope: float
    slope_stderr: float
    intercept: float
    r_values: tuple[int, ...]


def _weighted_line(x, y, sigma) -> FitResult:
    wts = 1.0 / np.asarray(sigma) ** 2
    A = np.vstack([x, np.ones_like(x)]).T
    cov = np.linalg.inv(A.T @ (A * wts[:, None]))
    coef = cov @ (A.T @ (wts * y))
    return coef, cov


def fit_power_law(estimates: Sequence[CorrelationEstimate], r_min: int = 4, r_max: int | None = None) -> FitResult:
    """Least squares of ``log C`` on ``log r`` over ``r_min <= r <= r_max``."""
    pts = [e for e in estimates if e.r >= r_min and (r_max is None or e.r <= r_max) and e.mean > 0]
    if len(pts) < 2:
        raise ValidationError("not enough positive points for a power-law fit")
    x = np.log([e.r for e in pts])
    y = np.log([e.mean for e in pts])
    sig = np.array([max(e.stderr, 1e-300) / e.mean for e in pts])
    coef, cov = _weighted_line(x, y, sig)
    return FitResult(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), tuple(e.r for e in pts))


def family_z_threshold(n_tests: int, p_family: float = 0.0027) -> float:
    """Two-sided |z| bound keeping the family-wise false-alarm rate at ``p_family`` (3 sigma by default)."""
    from scipy.stats import norm

    if n_tests < 1:
        raise DomainError("need at least one test")
    return float(norm.isf(p_family / (2 * n_tests)))


def fit_exponential(
    estimates: Sequence[CorrelationEstimate], r_min: int = 1, r_max: int = 12, min_snr: float = 3.0
) -> FitResult:
    """Semilog least squares of ``log C`` on ``r``; points below ``min_snr`` standard errors are dropped."""
    pts = [e for e in estimates if r_min <= e.r <= r_max and e.mean > min_snr * e.stderr]
    if len(pts) < 2:
        raise ValidationError("not enough resolved points for an exponential fit")
    x = np.array([e.r for e in pts], dtype=float)
    y = np.log([e.mean for e in pts])
    sig = np.array([e.stderr / e.mean for e in pts])
    coef, cov = _weighted_line(x, y, sig)
    return FitResult(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), tuple(e.r for e in pts))


def estimates_to_csv(estimates: Sequence[CorrelationEstimate]) -> str:
    buf = io.StringIO()
    buf.write("direction,r,C,stderr,samples\n")
    for e in estimates:
        buf.write(f"{e.direction},{e.r},{e.mean!r},{e.stderr!r},{e.samples}\n")
    return buf.getvalue()


# transfer matrix on the L x L torus


def transfer_matrix(w: WMatrix | WeightMatrix, L: int) -> np.ndarray:
    """Layer map on ``2L`` slots of the skewed ``L x L`` torus.

    Vertex ``x`` reads slots ``(2x, 2x+1)`` as ``(left, bottom)`` and writes its
    right output to slot ``2(x+1) mod 2L`` and its top output to slot ``2x+1``.
    Slot ``k`` is bit ``k`` of the state index.
    """
    if L < 1:
        raise DomainError("L must be >= 1")
    if L > TRANSFER_MAX_L:
        raise ResourceError(f"2^(2L) transfer matrix for L={L} exceeds budget (L <= {TRANSFER_MAX_L})")
    r = (w if isinstance(w, WeightMatrix) else weight_matrix(w)).tensor()
    dim = 4**L
    s = np.arange(dim, dtype=np.int64)
    src = s[:, None]
    dst = s[None, :]
    m = np.ones((dim, dim))
    for x in range(L):
        i = (src >> (2 * x)) & 1
        j = (src >> (2 * x + 1)) & 1
        mm = (dst >> ((2 * (x + 1)) % (2 * L))) & 1
        nn = (dst >> (2 * x + 1)) & 1
        m = m * r[i, j, mm, nn]
    return m


def norm_via_transfer(w: WMatrix | WeightMatrix, L: int) -> float:
    m = transfer_matrix(w, L)
    return float(np.trace(np.linalg.matrix_power(m, L)))


def perron_eigenvalue(w: WMatrix | WeightMatrix, L: int) -> complex:
    ev = np.linalg.eigvals(transfer_matrix(w, L))
    return complex(ev[np.argmax(np.abs(ev))])


def torus_partition_sum(w: WMatrix | WeightMatrix, L: int) -> float:
    """Sum over all edge configurations of the periodic ``L x L`` lattice of the product of ``R``."""
    if 2 * L * L > 24:
        raise ResourceError("brute-force torus sum limited to 24 edges")
    r = (w if isinstance(w, WeightMatrix) else weight_matrix(w)).tensor()
    h = lambda x, y: 2 * ((y % L) * L + (x % L))
    v = lambda x, y: 2 * ((y % L) * L + (x % L)) + 1
    n = 2 * L * L
    idx = np.arange(2**n, dtype=np.int64)
    bit = lambda q: (idx >> q) & 1
    total = np.ones(idx.size)
    for x, y in itertools.product(range(L), range(L)):
        total *= r[bit(h(x, y)), bit(v(x, y)), bit(h(x + 1, y)), bit(v(x, y + 1))]
    return float(total.sum())
