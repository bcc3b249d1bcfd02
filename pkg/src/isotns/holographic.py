"""Sequential measure-and-reset sampling of plumbed lattice states.

The live register is the staircase frontier of the lattice.  Vertex ``(x, y)``
consumes its left and bottom edges, which sit next to each other in the
frontier, and puts its top and right outputs in their place.  Once the gate
has acted the two inputs are final and are measured immediately; dangling
outputs are measured as soon as they are written.  Measured qubits are reset
and reused, so the register never holds more than ``n_vx + n_vy + 2`` qubits.

Two register backends are provided:

* ``dense``: exact amplitudes over the live qubits, batched over shots.
* ``mps``: the frontier stored as a matrix-product state in mixed-canonical
  form, truncated to bond dimension ``chi`` after every vertex.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ResamplingError,
    ResourceError,
    UnsupportedObservableError,
    ValidationError,
)
from .lattice import BoundaryState, LatticeSpec
from .pauli import BASIS_ROTATION, PAULI, PauliString
from .tensors import WMatrix, w_set_path

DENSE_MAX_LIVE = 22
ENUMERATE_MAX_QUBITS = 20
TRUNCATION_CAP = 1e-8


def _rotation(basis: str) -> np.ndarray:
    return BASIS_ROTATION[basis.upper()]


def _resolve_w(g: float | WMatrix) -> tuple[WMatrix, float | None]:
    if isinstance(g, WMatrix):
        return g, None
    return w_set_path(float(g)), float(g)


def _defect_set(lattice: LatticeSpec, defects: Iterable[tuple[int, int]]) -> frozenset:
    out: set = set()
    for x, y in defects:
        lattice.check_vertex(x, y)
        out ^= {(int(x), int(y))}
    return frozenset(out)


def basis_table(lattice: LatticeSpec, bases: str | Mapping[int, str]) -> dict[int, str]:
    n = lattice.n_qubits
    if isinstance(bases, str):
        if len(bases) == 1:
            table = {q: bases.upper() for q in range(n)}
        elif len(bases) == n:
            table = {q: c.upper() for q, c in enumerate(bases)}
        else:
            raise ValidationError(f"basis string has length {len(bases)}, lattice has {n} qubits")
    else:
        table = {int(q): str(b).upper() for q, b in bases.items()}
    missing = [q for q in range(n) if q not in table]
    if missing:
        raise ValidationError(f"no basis assigned to qubits {missing}")
    bad = {b for b in table.values() if b not in ("X", "Y", "Z")}
    if bad:
        raise ValidationError(f"unknown bases {sorted(bad)}")
    return table


class DenseRegister:
    """Exact frontier amplitudes with a leading batch axis (one entry per shot or branch)."""

    def __init__(
        self,
        lattice: LatticeSpec,
        w: WMatrix,
        boundary: BoundaryState,
        batch: int = 1,
        defects: Iterable[tuple[int, int]] = (),
        max_live: int = DENSE_MAX_LIVE,
    ):
        boundary.validate(lattice)
        width = len(lattice.boundary_edges)
        if width + 2 > max_live:
            raise ResourceError(
                f"frontier of {width} qubits is too wide for the dense register (limit {max_live - 2}); use mode='mps'"
            )
        self.lattice = lattice
        self.w = w.tensor()
        self.boundary = boundary
        self.defects = _defect_set(lattice, defects)
        self.row = 0
        if boundary.is_product:
            self.data = np.ones((batch,), dtype=complex)
            self.labels: list[int] = []
        else:
            edges = lattice.boundary_edges
            vec = boundary.boundary_vector(lattice).reshape((2,) * len(edges))
            self.data = np.broadcast_to(vec, (batch,) + vec.shape).copy()
            self.labels = list(reversed(edges))
        self.peak_live = len(self.labels)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    def _axis(self, q: int) -> int:
        return 1 + self.labels.index(q)

    def _ensure(self, q: int) -> None:
        if q in self.labels:
            return
        if not self.boundary.is_product or q not in self.lattice.boundary_edges:
            raise ValidationError(f"edge {q} is not live")
        self.data = np.multiply.outer(self.data, self.boundary.factor(q))
        self.labels.append(q)

    def apply_vertex(self, x: int, y: int) -> None:
        l, b, r, t = self.lattice.vertex_edges(x, y)
        self._ensure(l)
        self._ensure(b)
        wt = self.w[:, :, :, ::-1] if (x, y) in self.defects else self.w
        d = np.moveaxis(self.data, [self._axis(l), self._axis(b)], [-2, -1])
        labels = [q for q in self.labels if q not in (l, b)] + [l, b]
        self.data = d[..., None, None] * wt
        self.labels = labels + [r, t]
        self.peak_live = max(self.peak_live, len(self.labels))

    def _project(self, q: int, basis: str) -> np.ndarray:
        """Branches ``[k]`` of the state with qubit ``q`` projected on outcome ``k`` (axis removed)."""
        ax = self._axis(q)
        u = _rotation(basis)
        proj = np.tensordot(self.data, u, axes=([ax], [1]))
        return np.moveaxis(proj, -1, 0)

    def measure(self, q: int, basis: str, uniforms: np.ndarray | None = None, outcomes=None) -> tuple[np.ndarray, np.ndarray]:
        """Measure ``q`` on every batch entry, drawing with ``uniforms`` or forcing ``outcomes``.

        Returns ``(outcomes, conditional probabilities)`` and leaves each
        entry normalized.
        """
        br = self._project(q, basis)
        weights = np.sum(np.abs(br.reshape(2, self.batch, -1)) ** 2, axis=2)
        total = weights.sum(axis=0)
        if np.any(total < 1e-300) or not np.all(np.isfinite(total)):
            raise ResamplingError(f"register norm underflow while measuring edge {q}")
        p1 = weights[1] / total
        if outcomes is None:
            outcomes = (np.asarray(uniforms) < p1).astype(np.int64)
        outcomes = np.asarray(outcomes, dtype=np.int64)
        probs = np.where(outcomes == 1, p1, 1 - p1)
        if np.any(probs <= 0):
            raise ResamplingError(f"forced outcome has zero probability at edge {q}")
        chosen = np.where(
            (outcomes == 1).reshape((-1,) + (1,) * (br.ndim - 2)), br[1], br[0]
        )
        self.data = chosen / np.sqrt(probs * total).reshape((-1,) + (1,) * (chosen.ndim - 1))
        self.labels.remove(q)
        return outcomes, probs

    def branch(self, q: int, basis: str) -> None:
        """Split every batch entry into its two outcomes (unnormalized); outcome is the slow index."""
        br = self._project(q, basis)
        self.data = br.reshape((2 * self.batch,) + br.shape[2:])
        self.labels.remove(q)


class MpsRegister:
    """Frontier as an MPS over the staircase chain, truncated to ``chi``."""

    def __init__(
        self,
        lattice: LatticeSpec,
        w: WMatrix,
        boundary: BoundaryState,
        chi: int,
        defects: Iterable[tuple[int, int]] = (),
        truncation_cap: float = TRUNCATION_CAP,
    ):
        if chi < 1:
            raise ValidationError("chi must be >= 1")
        boundary.validate(lattice)
        self.lattice = lattice
        self.w = w.tensor()
        self.chi = int(chi)
        self.defects = _defect_set(lattice, defects)
        self.truncation_cap = truncation_cap
        self.discarded_weight = 0.0
        self.step_discards: list[float] = []
        self.warnings: list[str] = []
        self.row = 0
        edges = list(lattice.boundary_edges)
        self.labels = edges
        if boundary.is_product:
            self.sites = [boundary.factor(q).reshape(1, 2, 1).astype(complex) for q in edges]
        else:
            self.sites = self._from_vector(boundary.boundary_vector(lattice), len(edges))
        self.center = 0
        self._canonicalize()

    def _from_vector(self, vec: np.ndarray, n: int) -> list[np.ndarray]:
        # chain position k is bit k, so the first chain site is the last tensor axis
        t = vec.reshape((2,) * n).transpose(list(reversed(range(n))))
        sites = []
        rest = t.reshape(1, -1)
        for k in range(n - 1):
            left = rest.shape[0]
            m = rest.reshape(left * 2, -1)
            u, s, vh = np.linalg.svd(m, full_matrices=False)
            keep = self._keep(s)
            sites.append(u[:, :keep].reshape(left, 2, keep))
            rest = s[:keep, None] * vh[:keep]
        sites.append(rest.reshape(rest.shape[0], 2, 1))
        return sites

    def _keep(self, s: np.ndarray) -> int:
        nonzero = int(np.sum(s > 1e-14 * max(s[0], 1e-300)))
        keep = max(1, min(self.chi, nonzero))
        total = float(np.sum(s**2))
        lost = float(np.sum(s[keep:] ** 2)) / total if total > 0 else 0.0
        self.discarded_weight += lost
        self.step_discards.append(lost)
        if lost > self.truncation_cap:
            msg = f"discarded weight {lost:.3e} exceeds cap {self.truncation_cap:.1e} (chi={self.chi})"
            self.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return keep

    @property
    def bond_dims(self) -> list[int]:
        return [a.shape[2] for a in self.sites[:-1]]

    def _canonicalize(self) -> None:
        # right-canonical everywhere, center at site 0
        for k in range(len(self.sites) - 1, 0, -1):
            self._shift_left(k)
        self.center = 0
        self._normalize_center()

    def _normalize_center(self) -> None:
        nrm = np.linalg.norm(self.sites[self.center])
        if nrm < 1e-300 or not np.isfinite(nrm):
            raise ResamplingError("MPS norm underflow")
        self.sites[self.center] = self.sites[self.center] / nrm

    def _shift_left(self, k: int) -> None:
        a = self.sites[k]
        left, d, right = a.shape
        q, r = np.linalg.qr(a.reshape(left, d * right).T)
        self.sites[k] = q.T.reshape(-1, d, right)
        self.sites[k - 1] = np.tensordot(self.sites[k - 1], r.T, axes=([2], [0]))

    def _shift_right(self, k: int) -> None:
        a = self.sites[k]
        left, d, right = a.shape
        q, r = np.linalg.qr(a.reshape(left * d, right))
        self.sites[k] = q.reshape(left, d, -1)
        self.sites[k + 1] = np.tensordot(r, self.sites[k + 1], axes=([1], [0]))

    def _move_center(self, p: int) -> None:
        while self.center < p:
            self._shift_right(self.center)
            self.center += 1
        while self.center > p:
            self._shift_left(self.center)
            self.center -= 1

    def step(self, x: int, y: int, bases: Mapping[int, str], uniforms=None, outcomes=None) -> tuple[list[int], list[int], list[float]]:
        """Apply vertex ``(x, y)``, measure its completed edges and re-split.

        Returns ``(edges, outcomes, conditional probabilities)``.
        """
        lat = self.lattice
        l, b, r, t = lat.vertex_edges(x, y)
        p = self.labels.index(l)
        if self.labels[p + 1] != b:
            raise ValidationError(f"inputs of vertex {(x, y)} are not adjacent in the frontier")
        self._move_center(p)
        theta = np.tensordot(self.sites[p], self.sites[p + 1], axes=([2], [0]))  # a, l, b, c
        wt = self.w[:, :, :, ::-1] if (x, y) in self.defects else self.w
        # phi[a, l, b, t, r, c]
        phi = np.einsum("albc,lbrt->albtrc", theta, wt)
        legs = {l: 1, b: 2, t: 3, r: 4}
        done = lat.completed_by(x, y)
        out_edges, out_bits, out_probs = [], [], []
        for k, e in enumerate(done):
            ax = legs[e]
            u = _rotation(bases[e])
            br = np.moveaxis(np.tensordot(phi, u, axes=([ax], [1])), -1, 0)
            weights = np.array([np.sum(np.abs(br[0]) ** 2), np.sum(np.abs(br[1]) ** 2)])
            total = weights.sum()
            if total < 1e-300 or not np.isfinite(total):
                raise ResamplingError(f"register norm underflow while measuring edge {e} at vertex {(x, y)}")
            p1 = weights[1] / total
            bit = int(outcomes[k]) if outcomes is not None else int(uniforms[k] < p1)
            prob = p1 if bit else 1 - p1
            if prob <= 0:
                raise ResamplingError(f"forced outcome has zero probability at edge {e}")
            phi = br[bit] / np.sqrt(total * prob)
            for q, a in list(legs.items()):
                if a > ax:
                    legs[q] = a - 1
            del legs[e]
            out_edges.append(e)
            out_bits.append(bit)
            out_probs.append(float(prob))
        remaining = [q for q in (t, r) if q in legs]
        self._resplit(p, phi, remaining)
        return out_edges, out_bits, out_probs

    def _resplit(self, p: int, phi: np.ndarray, remaining: list[int]) -> None:
        left, right = phi.shape[0], phi.shape[-1]
        if len(remaining) == 2:
            m = phi.reshape(left * 2, 2 * right)
            u, s, vh = np.linalg.svd(m, full_matrices=False)
            keep = self._keep(s)
            s = s[:keep] / np.linalg.norm(s[:keep])
            self.sites[p] = u[:, :keep].reshape(left, 2, keep)
            self.sites[p + 1] = (s[:, None] * vh[:keep]).reshape(keep, 2, right)
            self.labels[p : p + 2] = remaining
            self.center = p + 1
        elif len(remaining) == 1:
            self.sites[p : p + 2] = [phi.reshape(left, 2, right)]
            self.labels[p : p + 2] = remaining
            self.center = p
        else:
            mat = phi.reshape(left, right)
            del self.sites[p : p + 2]
            del self.labels[p : p + 2]
            if p < len(self.sites):
                self.sites[p] = np.tensordot(mat, self.sites[p], axes=([1], [0]))
                self.center = p
            elif p > 0:
                self.sites[p - 1] = np.tensordot(self.sites[p - 1], mat, axes=([2], [0]))
                self.center = p - 1
            else:
                self.center = 0
                return
        if self.sites:
            self._normalize_center()


@dataclass
class SampleRecord:
    """One shot: measured bits row by row (row ``k`` is anti-diagonal layer ``k``)."""

    lattice: tuple[int, int]
    g: float | None
    seed: int
    shot: int
    mode: str
    chi: int | None
    row_edges: list[list[int]]
    row_bases: list[list[str]]
    row_bits: list[list[int]]
    discarded_weight: float = 0.0
    log_probability: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for k, (e, b, v) in enumerate(zip(self.row_edges, self.row_bases, self.row_bits)):
            if not (len(e) == len(b) == len(v)):
                raise ValidationError(f"row {k} has inconsistent lengths")

    def bits(self) -> dict[int, int]:
        return {e: v for row_e, row_v in zip(self.row_edges, self.row_bits) for e, v in zip(row_e, row_v)}

    def bitstring(self, n_qubits: int) -> str:
        table = self.bits()
        return "".join(str(table[q]) for q in range(n_qubits))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _shot_uniforms(seed: int, shot: int, n: int) -> np.ndarray:
    return np.random.default_rng([int(seed), int(shot)]).random(n)


def _records_from_bits(lattice, gval, seed, shots, mode, chi, bases, bits, logp, discarded=None, warns=None):
    records = []
    for s, shot in enumerate(shots):
        edges, bs, vs = [], [], []
        for k in range(lattice.n_layers):
            row = list(lattice.row_edges(k))
            edges.append(row)
            bs.append([bases[e] for e in row])
            vs.append([int(bits[s][e]) for e in row])
        records.append(
            SampleRecord(
                (lattice.n_vx, lattice.n_vy),
                gval,
                int(seed),
                int(shot),
                mode,
                chi,
                edges,
                bs,
                vs,
                0.0 if discarded is None else discarded[s],
                float(logp[s]),
                [] if warns is None else warns[s],
            )
        )
    return records


def holo_sample(
    lattice: LatticeSpec,
    g: float | WMatrix,
    boundary: BoundaryState | None = None,
    bases: str | Mapping[int, str] = "Z",
    shots: int = 1,
    seed: int = 0,
    mode: str = "dense",
    chi: int | None = None,
    defects: Iterable[tuple[int, int]] = (),
    shot_offset: int = 0,
    batch_size: int = 2048,
) -> list[SampleRecord]:
    """Sample ``shots`` configurations with the measure-and-reset protocol.

    Shot ``s`` draws its uniforms from ``default_rng([seed, s])`` so results do
    not depend on batching.
    """
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    boundary = boundary if boundary is not None else BoundaryState.zeros()
    w, gval = _resolve_w(g)
    table = basis_table(lattice, bases)
    schedule = [(v, lattice.completed_by(*v)) for v in lattice.vertices]
    n_meas = lattice.n_qubits
    shot_ids = list(range(shot_offset, shot_offset + shots))

    if mode == "dense":
        out = []
        for start in range(0, shots, batch_size):
            ids = shot_ids[start : start + batch_size]
            uni = np.stack([_shot_uniforms(seed, s, n_meas) for s in ids])
            reg = DenseRegister(lattice, w, boundary, batch=len(ids), defects=defects)
            bits = np.zeros((len(ids), lattice.n_qubits), dtype=np.int64)
            logp = np.zeros(len(ids))
            k = 0
            for (x, y), done in schedule:
                reg.apply_vertex(x, y)
                for e in done:
                    o, p = reg.measure(e, table[e], uniforms=uni[:, k])
                    bits[:, e] = o
                    logp += np.log(p)
                    k += 1
            out.extend(_records_from_bits(lattice, gval, seed, ids, mode, None, table, bits, logp))
        return out
    if mode == "mps":
        if chi is None:
            raise ValidationError("mps mode needs chi")
        out = []
        for s in shot_ids:
            uni = _shot_uniforms(seed, s, n_meas)
            reg = MpsRegister(lattice, w, boundary, chi, defects=defects)
            bits = np.zeros(lattice.n_qubits, dtype=np.int64)
            logp = 0.0
            k = 0
            for (x, y), done in schedule:
                edges, bs, ps = reg.step(x, y, table, uniforms=uni[k : k + len(done)])
                for e, v, p in zip(edges, bs, ps):
                    bits[e] = v
                    logp += np.log(p)
                k += len(done)
            out.extend(
                _records_from_bits(
                    lattice, gval, seed, [s], mode, chi, table, [bits], [logp], [reg.discarded_weight], [list(reg.warnings)]
                )
            )
        return out
    raise ValidationError(f"unknown mode {mode!r} (expected 'dense' or 'mps')")


def holo_distribution(
    lattice: LatticeSpec,
    g: float | WMatrix,
    boundary: BoundaryState | None = None,
    bases: str | Mapping[int, str] = "Z",
    defects: Iterable[tuple[int, int]] = (),
) -> np.ndarray:
    """Exact outcome distribution of the protocol by enumerating the measurement tree.

    Index bit ``q`` is the outcome on qubit ``q`` (same convention as the
    statevector engine).
    """
    n = lattice.n_qubits
    if n > ENUMERATE_MAX_QUBITS:
        raise ResourceError(f"enumeration over {n} qubits exceeds limit {ENUMERATE_MAX_QUBITS}")
    boundary = boundary if boundary is not None else BoundaryState.zeros()
    w, _ = _resolve_w(g)
    table = basis_table(lattice, bases)
    reg = DenseRegister(lattice, w, boundary, batch=1, defects=defects)
    order: list[int] = []
    for x, y in lattice.vertices:
        reg.apply_vertex(x, y)
        for e in lattice.completed_by(x, y):
            reg.branch(e, table[e])
            order.append(e)
    probs_tree = np.sum(np.abs(reg.data.reshape(reg.batch, -1)) ** 2, axis=1)
    # each branch puts its outcome on the slowest axis, so the first measured edge is least significant
    probs = np.zeros(2**n)
    idx = np.arange(2**n, dtype=np.int64)
    target = np.zeros(2**n, dtype=np.int64)
    for pos, e in enumerate(order):
        bit = (idx >> pos) & 1
        target |= bit << e
    probs[target] = probs_tree
    return probs / probs.sum()


def mps_step_truncate(
    register: MpsRegister, layer: int, bases: Mapping[int, str], outcomes: Sequence[int]
) -> tuple[MpsRegister, float]:
    """Advance ``register`` through anti-diagonal ``layer`` conditioned on ``outcomes``.

    ``outcomes`` follow ``lattice.row_edges(layer)``.  Returns the register and
    the conditional probability of the row.
    """
    lat = register.lattice
    outcomes = list(outcomes)
    expected = len(lat.row_edges(layer))
    if len(outcomes) != expected:
        raise ValidationError(f"layer {layer} has {expected} measured edges, got {len(outcomes)} outcomes")
    prob = 1.0
    k = 0
    for x, y in lat.layer(layer):
        done = lat.completed_by(x, y)
        _, _, ps = register.step(x, y, bases, outcomes=outcomes[k : k + len(done)])
        prob *= float(np.prod(ps))
        k += len(done)
    register.row = layer + 1
    return register, prob


def _observable_bases(lattice: LatticeSpec, observable) -> tuple[dict[int, str], complex]:
    if isinstance(observable, PauliString):
        if not observable.is_hermitian:
            raise UnsupportedObservableError("observable must be Hermitian (phase +1 or -1)")
        support = dict(observable.ops)
        phase = complex(observable.phase)
    elif isinstance(observable, Mapping):
        support, phase = {}, 1.0 + 0j
        for q, op in observable.items():
            if isinstance(op, str):
                op = op.upper()
                if op not in PAULI:
                    raise UnsupportedObservableError(f"unknown single-site operator {op!r}")
                if op != "I":
                    support[int(q)] = op
                continue
            m = np.asarray(op, dtype=complex)
            if m.shape != (2, 2):
                raise UnsupportedObservableError("only single-site operators are supported")
            for name in "XYZI":
                for sgn in (1, -1):
                    if np.allclose(m, sgn * PAULI[name]):
                        phase *= sgn
                        if name != "I":
                            support[int(q)] = name
                        break
                else:
                    continue
                break
            else:
                raise UnsupportedObservableError("single-site operators must be signed Pauli matrices")
    else:
        raise UnsupportedObservableError(
            "observable must be a PauliString or a mapping of single-site operators"
        )
    if any(q >= lattice.n_qubits for q in support):
        raise ValidationError("observable acts outside the lattice")
    return support, phase


def holo_expect(
    lattice: LatticeSpec,
    g: float | WMatrix,
    boundary: BoundaryState | None,
    observable,
    shots: int,
    seed: int,
    mode: str = "dense",
    chi: int | None = None,
    defects: Iterable[tuple[int, int]] = (),
) -> tuple[float, float]:
    """Monte Carlo estimate of a product of single-site Paulis, with its standard error."""
    support, phase = _observable_bases(lattice, observable)
    if not support:
        return float(phase.real), 0.0
    bases = {q: support.get(q, "Z") for q in range(lattice.n_qubits)}
    recs = holo_sample(lattice, g, boundary, bases, shots, seed, mode, chi, defects)
    vals = np.empty(len(recs))
    qs = list(support)
    for k, rec in enumerate(recs):
        bits = rec.bits()
        vals[k] = (-1) ** sum(bits[q] for q in qs)
    vals = vals * phase.real
    stderr = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else float("nan")
    return float(vals.mean()), stderr


def records_to_jsonl(records: Iterable[SampleRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def records_to_csv(records: Sequence[SampleRecord], n_qubits: int) -> str:
    lines = ["shot_index,bitstring"]
    lines += [f"{r.shot},{r.bitstring(n_qubits)}" for r in records]
    return "\n".join(lines) + "\n"


def empirical_distribution(records: Sequence[SampleRecord], n_qubits: int) -> np.ndarray:
    counts = np.zeros(2**n_qubits)
    for r in records:
        idx = sum(v << e for e, v in r.bits().items())
        counts[idx] += 1
    return counts / counts.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
