"""Parent Hamiltonians of the 2D and 1D paths and their low-lying spectra.

The 2D model acts on four qubits per vertex, labelled ``A`` (left), ``B``
(bottom), ``C`` (right) and ``D`` (top).  Around a plaquette the corner
vertices are ``a`` (bottom-left), ``b`` (bottom-right), ``c`` (top-right) and
``d`` (top-left).  All vertex factors are diagonal in Z, so the exponentials
and secants in the plaquette terms are evaluated configuration by
configuration.

Qubit ``q`` is bit ``q`` of the basis index, as in :mod:`statevector`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .circuit import sequential_program
from .errors import ConsistencyError, DomainError, ResourceError, SolverError, ValidationError
from .lattice import BoundaryState, LatticeSpec
from .pauli import PauliString
from .statevector import StateVector, run
from .tensors import MpsWMatrix, mps_w_path_1d

ED_MAX_QUBITS = 20
CLUSTER_TOL = 1e-6


@dataclass(frozen=True)
class BetaParams:
    beta1: float
    beta2: complex


def beta_params(g: float) -> BetaParams:
    """Imaginary-time parameters; ``log g`` is continued as ``log|g| + i pi`` for ``g < 0``."""
    if not -1.0 <= g <= 1.0:
        raise DomainError(f"g must lie in [-1, 1], got {g}")
    if g == 0:
        raise DomainError("beta2 diverges at g = 0")
    b1 = 0.5 * (math.log(2.0) - math.log(1.0 + abs(g)))
    log_g = complex(math.log(abs(g)), math.pi if g < 0 else 0.0)
    return BetaParams(b1, b1 + 0.5 * log_g)


@dataclass(frozen=True)
class Geometry:
    """Vertices as ``(A, B, C, D)`` qubit tuples; plaquettes as corner indices ``(a, b, c, d)``."""

    n_qubits: int
    vertices: tuple[tuple[int, int, int, int], ...]
    plaquettes: tuple[tuple[int, int, int, int], ...]
    label: str

    def plaquette_edges(self, p: int) -> tuple[int, int, int, int]:
        """``(bottom, right, top, left)`` edges of plaquette ``p``."""
        a, b, c, d = self.plaquettes[p]
        va, vb, vc, vd = (self.vertices[k] for k in (a, b, c, d))
        return va[2], vb[3], vd[2], va[3]


def torus_geometry(n_px: int, n_py: int) -> Geometry:
    """Periodic lattice with one vertex and one plaquette per cell: ``h(x,y) = 2(y n_px + x)``, ``v = h + 1``."""
    if n_px < 2 or n_py < 2:
        raise DomainError("torus needs at least 2 x 2 plaquettes")
    cell = lambda x, y: (y % n_py) * n_px + (x % n_px)
    verts = []
    for y in range(n_py):
        for x in range(n_px):
            verts.append((2 * cell(x, y), 2 * cell(x, y) + 1, 2 * cell(x + 1, y), 2 * cell(x, y + 1) + 1))
    plaqs = []
    for y in range(n_py):
        for x in range(n_px):
            plaqs.append((cell(x, y), cell(x + 1, y), cell(x + 1, y + 1), cell(x, y + 1)))
    return Geometry(2 * n_px * n_py, tuple(verts), tuple(plaqs), f"torus {n_px}x{n_py}")


def open_geometry(lattice: LatticeSpec) -> Geometry:
    index = {v: k for k, v in enumerate(lattice.vertices)}
    verts = tuple(lattice.vertex_edges(x, y) for x, y in lattice.vertices)
    plaqs = tuple(
        (index[(x, y)], index[(x + 1, y)], index[(x + 1, y + 1)], index[(x, y + 1)]) for x, y in lattice.plaquettes()
    )
    return Geometry(lattice.n_qubits, verts, plaqs, f"open {lattice.n_vx}x{lattice.n_vy}")


@dataclass(eq=False)
class SparseOperator:
    """Sum of tagged sparse terms; ``matrix`` is their total."""

    n_qubits: int
    matrix: sp.csr_matrix
    terms: list[tuple[str, sp.csr_matrix]] = field(default_factory=list)
    blocks: list[np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def hermiticity_residual(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _check_budget(n: int) -> None:
    if n > ED_MAX_QUBITS:
        raise ResourceError(f"{n} qubits exceeds the exact-diagonalization budget of {ED_MAX_QUBITS}")


def _bits(n: int) -> np.ndarray:
    idx = np.arange(2**n, dtype=np.int64)
    return np.stack([(idx >> q) & 1 for q in range(n)])


def pauli_sparse(op: PauliString, n_qubits: int) -> sp.csr_matrix:
    idx = np.arange(2**n_qubits, dtype=np.int64)
    flip = 0
    phase = np.full(idx.size, complex(op.phase))
    for q, _ in op.ops.items():
        f, ph = op.local_action(q)
        flip |= f << q
        phase *= ph[(idx >> q) & 1]
    return sp.csr_matrix((phase, (idx ^ flip, idx)), shape=(idx.size, idx.size))


# 2D parent Hamiltonian


def _vertex_z(bits: np.ndarray, vertex: tuple[int, int, int, int]) -> tuple[np.ndarray, ...]:
    return tuple(1 - 2 * bits[q] for q in vertex)


def _lambda_coeffs(z) -> tuple[np.ndarray, np.ndarray]:
    """``Lambda_v`` as coefficients of ``(beta1, beta2)``."""
    za, zb, zc, zd = z
    m = 0.25 * (1 + za * zb) * (1 + zc * zd) * za * zd
    return -m, m


def _o_coeffs(z) -> tuple[np.ndarray, np.ndarray]:
    """``O_v`` as coefficients of ``(beta1, beta2)``."""
    za, zb, zc, zd = z
    s = -0.25 * (za * zb + zc * zd)
    return s * (1 + za * zd), s * (1 - za * zd)


def _plaquette_values(k1: np.ndarray, k2: np.ndarray, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal ``1/(1+e^{-2E})`` and off-diagonal ``-1/(2 cosh E)`` for ``E = k1 b1 + k2 b2``.

    At ``g = 0`` ``b2 -> -inf``: configurations with ``k2 != 0`` take the limit.
    """
    if g == 0:
        b1 = 0.5 * math.log(2.0)
        e = k1 * b1
        finite = np.abs(k2) < 1e-12
        diag = np.where(finite, 1.0 / (1.0 + np.exp(-2 * np.where(finite, e, 0.0))), np.where(k2 < 0, 1.0, 0.0))
        off = np.where(finite, -0.5 / np.cosh(np.where(finite, e, 0.0)), 0.0)
        return diag.astype(complex), off.astype(complex)
    bp = beta_params(g)
    e = k1 * bp.beta1 + k2 * bp.beta2
    return 1.0 / (1.0 + np.exp(-2 * e)), -0.5 / np.cosh(e)


def vertex_term(geometry: Geometry, v: int, bits: np.ndarray | None = None) -> sp.csr_matrix:
    """``A_v = (1 - Z_A Z_B Z_C Z_D) / 2``."""
    bits = _bits(geometry.n_qubits) if bits is None else bits
    par = np.bitwise_xor.reduce(bits[list(geometry.vertices[v])], axis=0)
    return sp.diags(par.astype(complex), format="csr")


def plaquette_term(geometry: Geometry, p: int, g: float, bits: np.ndarray | None = None) -> sp.csr_matrix:
    """``B_p(g) P_p`` restricted to configurations with all four corners closed."""
    n = geometry.n_qubits
    bits = _bits(n) if bits is None else bits
    a, b, c, d = geometry.plaquettes[p]
    corners = [geometry.vertices[k] for k in (a, b, c, d)]
    closed = np.ones(bits.shape[1], dtype=bool)
    for vert in corners:
        closed &= np.bitwise_xor.reduce(bits[list(vert)], axis=0) == 0
    k1 = np.zeros(bits.shape[1])
    k2 = np.zeros(bits.shape[1])
    for vert, kind in zip(corners, ("L", "O", "L", "O")):
        c1, c2 = (_lambda_coeffs if kind == "L" else _o_coeffs)(_vertex_z(bits, vert))
        k1 += c1
        k2 += c2
    diag, off = _plaquette_values(k1, k2, g)
    idx = np.flatnonzero(closed)
    flip = 0
    for q in geometry.plaquette_edges(p):
        flip |= 1 << q
    rows = np.concatenate([idx, idx ^ flip])
    cols = np.concatenate([idx, idx])
    vals = np.concatenate([diag[idx], off[idx]])
    dim = 2**n
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def _syndrome_blocks(geometry: Geometry, bits: np.ndarray) -> list[np.ndarray]:
    key = np.zeros(bits.shape[1], dtype=np.int64)
    for k, vert in enumerate(geometry.vertices):
        key |= np.bitwise_xor.reduce(bits[list(vert)], axis=0).astype(np.int64) << k
    order = np.argsort(key, kind="stable")
    cuts = np.flatnonzero(np.diff(key[order])) + 1
    return np.split(order, cuts)


def build_parent_h_2d(g: float, n_px: int, n_py: int, bc: str = "torus") -> SparseOperator:
    """Vertex projectors plus plaquette projectors on an ``n_px x n_py`` torus or open patch.

    ``bc="open"`` uses the ``(n_px, n_py)`` vertex patch of :class:`LatticeSpec`.
    """
    if not -1.0 <= g <= 1.0:
        raise DomainError(f"g must lie in [-1, 1], got {g}")
    if bc == "torus":
        geometry = torus_geometry(n_px, n_py)
    elif bc == "open":
        geometry = open_geometry(LatticeSpec(n_px, n_py))
    else:
        raise DomainError(f"unknown boundary condition {bc!r}")
    return parent_h_on(geometry, g)


def parent_h_on(geometry: Geometry, g: float) -> SparseOperator:
    _check_budget(geometry.n_qubits)
    bits = _bits(geometry.n_qubits)
    terms = [(f"vertex:{v}", vertex_term(geometry, v, bits)) for v in range(len(geometry.vertices))]
    terms += [(f"plaquette:{p}", plaquette_term(geometry, p, g, bits)) for p in range(len(geometry.plaquettes))]
    total = sum((t for _, t in terms), sp.csr_matrix((2**geometry.n_qubits,) * 2, dtype=complex))
    op = SparseOperator(geometry.n_qubits, total.tocsr(), terms, _syndrome_blocks(geometry, bits))
    if op.hermiticity_residual() > 1e-10:
        raise ConsistencyError(f"parent Hamiltonian is not Hermitian (residual {op.hermiticity_residual():.3g})")
    return op


def toric_code_h(geometry: Geometry) -> sp.csr_matrix:
    """``sum_v A_v + sum_p (1 - b_p)/2`` without the closed-loop projectors."""
    n = geometry.n_qubits
    bits = _bits(n)
    h = sum((vertex_term(geometry, v, bits) for v in range(len(geometry.vertices))), sp.csr_matrix((2**n,) * 2))
    eye = sp.identity(2**n, format="csr")
    for p in range(len(geometry.plaquettes)):
        h = h + 0.5 * (eye - pauli_sparse(PauliString.product("X", geometry.plaquette_edges(p)), n))
    return h.tocsr()


def imaginary_time_state(
    g: float, lattice: LatticeSpec, boundary: BoundaryState | None = None
) -> StateVector:
    """``prod_v exp(b1 P1_v + b2 P2_v)`` applied to the ``g = 1`` circuit state, normalized.

    ``P1`` marks vertices with ``ABCD`` in ``{0000, 1111}``, ``P2`` those in ``{0011, 1100}``.
    """
    _check_budget(lattice.n_qubits)
    tc = run(sequential_program(lattice, 1.0, boundary))
    bits = _bits(lattice.n_qubits)
    n1 = np.zeros(bits.shape[1])
    n2 = np.zeros(bits.shape[1])
    for x, y in lattice.vertices:
        a, b, c, d = (bits[q] for q in lattice.vertex_edges(x, y))
        loop = (a == b) & (c == d)
        n1 += loop & (a == d)
        n2 += loop & (a != d)
    if g == 0:
        factor = np.where(n2 > 0, 0.0, np.exp(n1 * 0.5 * math.log(2.0))).astype(complex)
    else:
        bp = beta_params(g)
        factor = np.exp(n1 * bp.beta1 + n2 * bp.beta2)
    amps = tc.amplitudes * factor
    nrm = np.linalg.norm(amps)
    if nrm == 0:
        raise ConsistencyError("imaginary-time state vanished")
    return StateVector(lattice.n_qubits, amps / nrm)


# 1D chain


def chain_couplings(g: float) -> tuple[float, float, float]:
    """``(g_zxz, g_zz, g_x)``."""
    return (1 - g) ** 2, 2 * (1 - g * g), (1 + g) ** 2


def build_parent_h_1d(g: float, n: int, bc: str = "open") -> SparseOperator:
    """``g_zxz sum ZXZ - g_zz sum ZZ - g_x sum X``.

    The open chain keeps the site terms ``i = 1 .. n-2``, each carrying its two
    neighbouring ``ZZ`` bonds at half weight; the two end qubits only enter
    through those terms.
    """
    if not -1.0 <= g <= 1.0:
        raise DomainError(f"g must lie in [-1, 1], got {g}")
    if n < 3:
        raise DomainError("chain needs at least 3 sites")
    _check_budget(n)
    gzxz, gzz, gx = chain_couplings(g)
    terms: list[tuple[str, sp.csr_matrix]] = []
    if bc == "open":
        for i in range(1, n - 1):
            t = (
                gzxz * pauli_sparse(PauliString({i - 1: "Z", i: "X", i + 1: "Z"}), n)
                - 0.5 * gzz * pauli_sparse(PauliString({i - 1: "Z", i: "Z"}), n)
                - 0.5 * gzz * pauli_sparse(PauliString({i: "Z", i + 1: "Z"}), n)
                - gx * pauli_sparse(PauliString({i: "X"}), n)
            )
            terms.append((f"site:{i}", t.tocsr()))
    elif bc == "periodic":
        for i in range(n):
            l, r = (i - 1) % n, (i + 1) % n
            t = (
                gzxz * pauli_sparse(PauliString({l: "Z", i: "X", r: "Z"}), n)
                - gzz * pauli_sparse(PauliString({i: "Z", r: "Z"}), n)
                - gx * pauli_sparse(PauliString({i: "X"}), n)
            )
            terms.append((f"site:{i}", t.tocsr()))
    else:
        raise DomainError(f"unknown boundary condition {bc!r}")
    total = sum((t for _, t in terms), sp.csr_matrix((2**n, 2**n), dtype=complex))
    return SparseOperator(n, total.tocsr(), terms)


def mps_state(w: MpsWMatrix | float, n: int, boundary: Sequence[complex] = (1.0, 0.0)) -> StateVector:
    """Chain state ``A[s_0] W[s_0, s_1] ... W[s_{n-2}, s_{n-1}]`` with qubit ``k`` holding ``s_k``."""
    if not isinstance(w, MpsWMatrix):
        w = mps_w_path_1d(w)
    if n < 1:
        raise DomainError("n must be >= 1")
    _check_budget(n)
    m = w.entries
    psi = np.asarray(boundary, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    for _ in range(n - 1):
        psi = np.einsum("...i,ij->...ij", psi, m)
    # axes are (s_0, .., s_{n-1}); qubit 0 must be least significant
    psi = np.transpose(psi.reshape((w.chi,) * n), list(range(n))[::-1]).reshape(-1)
    return StateVector(n, psi)


# diagonalization


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    levels: tuple[tuple[float, int], ...]
    residual: float

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground_degeneracy(self) -> int:
        return self.levels[0][1]

    @property
    def gap(self) -> float:
        if len(self.levels) < 2:
            raise ValidationError("only one level resolved; request more eigenvalues")
        return self.levels[1][0] - self.levels[0][0]


def cluster_levels(energies: np.ndarray, tol: float = CLUSTER_TOL) -> tuple[tuple[float, int], ...]:
    levels: list[list[float]] = []
    for e in np.sort(energies):
        if levels and e - levels[-1][-1] <= tol:
            levels[-1].append(float(e))
        else:
            levels.append([float(e)])
    return tuple((float(np.mean(l)), len(l)) for l in levels)


def spectrum(h: SparseOperator, k: int, method: str = "auto", tol: float = 1e-12) -> Spectrum:
    """Lowest ``k`` eigenvalues in ascending order.

    ``lanczos`` runs ARPACK on the full matrix.  A single Krylov start vector
    can miss copies of an exactly degenerate level, so ``auto`` prefers
    ``blocks`` when the operator carries its conserved vertex-parity blocks:
    each block is diagonalized densely and the results merged.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    a = h.matrix
    if method == "auto":
        method = "blocks" if h.blocks is not None else "lanczos"
    if method == "blocks":
        if h.blocks is None:
            raise ValidationError("operator carries no block structure")
        perm = np.concatenate(h.blocks)
        ordered = a[perm][:, perm].tocsr()
        evs = []
        start = 0
        for blk in h.blocks:
            stop = start + blk.size
            sub = ordered[start:stop, start:stop].toarray()
            if not np.any(sub.imag):
                sub = sub.real
            top = min(k, blk.size) - 1
            evs.append(scipy.linalg.eigvalsh(sub, subset_by_index=[0, top], driver="evr"))
            start = stop
        energies = np.sort(np.concatenate(evs))[:k]
        return Spectrum(energies, cluster_levels(energies), 0.0)
    if method != "lanczos":
        raise ValidationError(f"unknown method {method!r}")
    if k >= a.shape[0] - 1 or a.shape[0] <= 256:
        energies = np.linalg.eigvalsh(a.toarray())[:k]
        return Spectrum(energies, cluster_levels(energies), 0.0)
    real = abs(a.imag).max() < 1e-14 if a.nnz else True
    m = a.real.tocsr() if real else a
    v0 = np.random.default_rng(0).standard_normal(a.shape[0])
    try:
        vals, vecs = sla.eigsh(m, k=k, which="SA", tol=tol, v0=v0, ncv=max(2 * k + 1, 40), maxiter=100000)
    except sla.ArpackNoConvergence as exc:
        raise SolverError(f"eigensolver did not converge: {len(exc.eigenvalues)} of {k} eigenvalues") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    resid = float(np.max(np.linalg.norm(m @ vecs - vecs * vals, axis=0)))
    if resid > 1e-8:
        raise SolverError(f"eigensolver residual {resid:.3g} above 1e-8")
    return Spectrum(vals, cluster_levels(vals), resid)


def spectrum_to_csv(rows: Sequence[tuple[float, Spectrum]]) -> str:
    lines = ["g,level,energy"]
    for g, s in rows:
        lines += [f"{g!r},{k},{e!r}" for k, e in enumerate(s.energies)]
    return "\n".join(lines) + "\n"
