"""Diagnostics that tell the two symmetry-enriched phases of the path apart."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse.linalg as sla

from .errors import ConsistencyError, DomainError, ResourceError, ValidationError
from .lattice import LatticeSpec
from .pauli import PauliString
from .plumbed import PlumbedState
from .statevector import StateVector, expect
from .tensors import WMatrix, plumb

ETA_MAX_L = 5
S_GATE = np.diag([1.0, 1j])
X_GATE = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class MembraneSpec:
    """X-type membrane: ``interior`` flips plus alternating ``strings``, perimeter ``L``.

    ``L = 0`` with empty supports is the identity membrane.
    """

    interior: frozenset[int]
    strings: tuple[frozenset[int], ...]
    perimeter: int

    def __post_init__(self) -> None:
        seen = set(self.interior)
        for s in self.strings:
            if seen & s:
                raise ValidationError("membrane supports overlap")
            seen |= s
        if self.perimeter < 0 or self.perimeter % 2:
            raise ValidationError(f"perimeter must be even and non-negative, got {self.perimeter}")

    @property
    def support(self) -> frozenset[int]:
        out = set(self.interior)
        for s in self.strings:
            out |= s
        return frozenset(out)

    def operator(self) -> PauliString:
        return PauliString.product("X", sorted(self.support))


def build_defect_membrane(lattice: LatticeSpec, defect: tuple[int, int], radius: int) -> MembraneSpec:
    """Membrane made of the ``2l x 2l`` plaquettes around ``defect``.

    The plaquette X operators multiply to X on the edges covered an odd number
    of times, which is the outline of the block (``8l`` edges).

    ::

        +--x--+--x--+
        x     |     x
        +-----D-----+      l = 1, D the defect vertex
        x     |     x
        +--x--+--x--+
    """
    if radius < 0:
        raise DomainError("radius must be non-negative")
    dx, dy = defect
    lattice.check_vertex(dx, dy)
    if radius == 0:
        return MembraneSpec(frozenset(), (), 0)
    xs = range(dx - radius, dx + radius)
    ys = range(dy - radius, dy + radius)
    if xs.start < 0 or ys.start < 0 or xs.stop > lattice.n_vx - 1 or ys.stop > lattice.n_vy - 1:
        raise DomainError(f"radius-{radius} block around {defect} does not fit inside the lattice")
    odd: set[int] = set()
    for x in xs:
        for y in ys:
            odd ^= set(lattice.plaquette_edges(x, y))
    return MembraneSpec(frozenset(odd), (), 4 * radius)


def membrane_expectation(state: StateVector | PlumbedState, spec: MembraneSpec) -> float:
    op = spec.operator()
    if isinstance(state, PlumbedState):
        return float(state.normalized_expect(op).real)
    if op.ops and op.max_qubit() >= state.n_qubits:
        raise ValidationError("membrane reaches outside the register")
    return float(expect(state, op).real / state.norm() ** 2)


def membrane_order(state: StateVector | PlumbedState, spec: MembraneSpec) -> float:
    """``|<U>|^(1/L)``; the identity membrane gives 1."""
    if spec.perimeter == 0:
        return 1.0
    return float(abs(membrane_expectation(state, spec)) ** (1.0 / spec.perimeter))


# boundary operator


def boundary_operator(g: float, L: int) -> np.ndarray:
    """``V = (prod X) diag(s^(n(n-1)/2))`` on ``L`` bonds, ``n`` the number of ones."""
    if L < 1:
        raise DomainError("L must be >= 1")
    s = 1.0 if g >= 0 else -1.0
    idx = np.arange(2**L)
    n = np.array([bin(k).count("1") for k in idx])
    diag = s ** (n * (n - 1) // 2)
    v = np.zeros((2**L, 2**L))
    v[idx ^ (2**L - 1), idx] = diag
    return v


def v_invariant(g: float, L: int, parity: int) -> int:
    if L < 4 or L % 4:
        raise DomainError(f"L must be a positive multiple of 4, got {L}")
    if parity not in (0, 1):
        raise DomainError("parity must be 0 or 1")
    v = boundary_operator(g, L)
    vv = v.conj() @ v
    sector = np.array([k for k in range(2**L) if bin(k).count("1") % 2 == parity])
    block = vv[np.ix_(sector, sector)]
    lam = block[0, 0]
    if abs(abs(lam) - 1) > 1e-12 or np.max(np.abs(block - lam * np.eye(sector.size))) > 1e-12:
        raise ConsistencyError("conj(V) V is not proportional to the identity on the parity sector")
    return int(round(lam.real))


# pulling a spin flip through one tensor


def pull_through_check(w: WMatrix, q: np.ndarray) -> float:
    """Residual of ``T[s^1, r^1] = (Q^-1 x Q^-1) T[s, r] (Q x Q)`` over all legs."""
    q = np.asarray(q, dtype=complex)
    if q.shape != (w.dim_virtual, w.dim_virtual):
        raise DomainError(f"Q must be {w.dim_virtual}x{w.dim_virtual}")
    if abs(np.linalg.det(q)) < 1e-12:
        raise DomainError("Q is singular")
    qi = np.linalg.inv(q)
    t = plumb(w).array
    flipped = t[::-1, ::-1]
    dressed = np.einsum("ia,jb,srabcd,cm,dn->srijmn", qi, qi, t, q, q)
    return float(np.max(np.abs(flipped - dressed)))


def symmetry_q(g: float) -> np.ndarray:
    return X_GATE.copy() if g >= 0 else X_GATE @ S_GATE


# transfer operator with an on-site operator inserted


def double_layer_vertex(w: WMatrix, onsite: np.ndarray, antiunitary: bool = True) -> np.ndarray:
    """``E[(i,i'), (j,j'), (m,m'), (n,n')] = conj(W_ijmn) O_ii' O_jj' W~_i'j'm'n'``.

    ``W~`` is ``conj(W)`` for an antiunitary operator ``O K`` and ``W`` otherwise.
    """
    wt = w.tensor()
    ket = wt.conj() if antiunitary else wt
    o = np.asarray(onsite, dtype=complex)
    e = np.einsum("ijmn,ia,jb,abcd->iajbmcnd", wt.conj(), o, o, ket)
    d = w.dim_virtual
    return e.reshape((d * d,) * 4)


class _RingTransfer(sla.LinearOperator):
    """Layer map on ``2L`` double-layer slots of the skewed ring.

    Vertex ``x`` reads slots ``(2x, 2x+1)`` and writes slots ``(2x+2 mod 2L, 2x+1)``.
    """

    def __init__(self, vertex: np.ndarray, L: int):
        self.vertex = vertex
        self.L = L
        self.k = vertex.shape[0]
        n = self.k ** (2 * L)
        super().__init__(dtype=complex, shape=(n, n))

    def _matvec(self, v):
        L = self.L
        t = np.asarray(v, dtype=complex).reshape((self.k,) * (2 * L))
        labels = list(range(2 * L))
        for x in range(L):
            ax = [labels.index(2 * x), labels.index(2 * x + 1)]
            t = np.tensordot(t, self.vertex, axes=(ax, [0, 1]))
            labels = [l for l in labels if l not in (2 * x, 2 * x + 1)]
            labels += [("r", x), ("t", x)]
        target = []
        for k in range(2 * L):
            target.append(("t", (k - 1) // 2) if k % 2 else ("r", (k // 2 - 1) % L))
        t = np.transpose(t, [labels.index(lab) for lab in target])
        return t.reshape(-1)


def symmetry_eta(w: WMatrix, onsite: np.ndarray, L: int, antiunitary: bool = True) -> complex:
    """Largest-modulus eigenvalue of the ring transfer operator with ``onsite`` on every physical leg."""
    if L < 1:
        raise DomainError("L must be >= 1")
    if L > ETA_MAX_L:
        raise ResourceError(f"ring of L={L} exceeds the transfer-operator budget (L <= {ETA_MAX_L})")
    op = _RingTransfer(double_layer_vertex(w, onsite, antiunitary), L)
    if op.shape[0] <= 256:
        dense = op.matmat(np.eye(op.shape[0], dtype=complex))
        ev = np.linalg.eigvals(dense)
    else:
        rng = np.random.default_rng(0)
        ev = sla.eigs(op, k=1, which="LM", v0=rng.standard_normal(op.shape[0]), tol=1e-12, maxiter=10000)[0]
    return complex(ev[np.argmax(np.abs(ev))])


def broken_symmetry_w() -> WMatrix:
    """Toric-code W with row ``00`` reweighted to ``(sqrt 0.8, 0, 0, sqrt 0.2)``; no longer flip symmetric."""
    from .tensors import w_toric_code

    m = w_toric_code().entries.copy()
    m[0] = [np.sqrt(0.8), 0, 0, np.sqrt(0.2)]
    return WMatrix(m)


@dataclass(frozen=True)
class DiagnosticsRow:
    g: float
    L: int
    membrane: float
    v_invariant: int
    eta_abs: float


def diagnostics_sweep(
    g_grid: Iterable[float], lattice: LatticeSpec, defect: tuple[int, int], radius: int, ring: int = 4
) -> list[DiagnosticsRow]:
    """Membrane order, ``V`` invariant (odd sector, ``L=4``) and ``|eta|`` for each ``g``."""
    from .tensors import w_set_path

    spec = build_defect_membrane(lattice, defect, radius)
    rows = []
    for g in g_grid:
        w = w_set_path(g)
        state = PlumbedState(lattice, w, defects=[defect])
        rows.append(
            DiagnosticsRow(
                float(g), spec.perimeter, membrane_order(state, spec), v_invariant(g, 4, 1),
                abs(symmetry_eta(w, X_GATE, ring)),
            )
        )
    return rows


def sweep_to_csv(rows: Iterable[DiagnosticsRow]) -> str:
    lines = ["g,L,membrane,v_invariant,eta_abs"]
    lines += [f"{r.g!r},{r.L},{r.membrane!r},{r.v_invariant},{r.eta_abs!r}" for r in rows]
    return "\n".join(lines) + "\n"
