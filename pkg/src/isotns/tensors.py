"""Plumbed isometric tensors and the parameterized paths built from them.

A plumbed tensor is fixed by a single ``D^2 x D^2`` matrix ``W``.  The row
index is the incoming virtual pair ``(i, j)`` (left, bottom) and the column
index is the outgoing pair ``(m, n)`` (right, top); pairs are flattened
row-major, ``2*i + j`` for ``D = 2``.  The physical legs are copies of the
incoming virtual legs, so the tensor is an isometry exactly when every row
of ``W`` has unit norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError

DEFAULT_TOL = 1e-12
SQRT1_2 = 1.0 / np.sqrt(2.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_g(g: float) -> float:
    g = float(g)
    if not -1.0 <= g <= 1.0 or not np.isfinite(g):
        raise DomainError(f"path parameter g={g} outside [-1, 1]")
    return g


def _path_amplitudes(g: float) -> tuple[float, float, float]:
    """Return ``(1/sqrt(1+|g|), sqrt(|g|/(1+|g|)), sign(g))``."""
    ag = abs(g)
    return 1.0 / np.sqrt(1.0 + ag), np.sqrt(ag / (1.0 + ag)), float(np.sign(g))


@dataclass(frozen=True, eq=False)
class WMatrix:
    """Weight matrix of a plumbed tensor with bond dimension ``D``."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"W must be square, got shape {a.shape}")
        d = int(round(np.sqrt(a.shape[0])))
        if d < 2 or d * d != a.shape[0]:
            raise ShapeError(f"W must be D^2 x D^2 with D >= 2, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("W has non-finite entries")
        object.__setattr__(self, "entries", _readonly(a))

    @property
    def dim_virtual(self) -> int:
        return int(round(np.sqrt(self.entries.shape[0])))

    def tensor(self) -> np.ndarray:
        """Entries reshaped to ``W[i, j, m, n]``."""
        d = self.dim_virtual
        return self.entries.reshape(d, d, d, d)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(np.array_equal(self.entries, other.entries))

    def __hash__(self) -> int:
        return hash(self.entries.tobytes())

    def to_dict(self) -> dict:
        flat = self.entries.ravel()
        return {"D": self.dim_virtual, "entries": [[float(z.real), float(z.imag)] for z in flat]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> WMatrix:
        d = int(data["D"])
        flat = np.array([complex(re, im) for re, im in data["entries"]])
        if flat.size != d**4:
            raise ShapeError(f"expected {d**4} entries for D={d}, got {flat.size}")
        return cls(flat.reshape(d * d, d * d))

    @classmethod
    def from_json(cls, text: str) -> WMatrix:
        return cls.from_dict(json.loads(text))


class IsometryReport(NamedTuple):
    ok: bool
    max_deviation: float


def _as_matrix(w: WMatrix | np.ndarray) -> np.ndarray:
    if isinstance(w, WMatrix):
        return w.entries
    a = np.asarray(w, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"W must be square, got shape {a.shape}")
    return a


def check_isometry(w: WMatrix | np.ndarray, tol: float = DEFAULT_TOL) -> IsometryReport:
    """Check that every row of ``w`` has unit squared norm.

    Returns ``(ok, max_deviation)`` where the deviation is the largest
    ``|sum_mn |W_ijmn|^2 - 1|`` over rows.
    """
    a = _as_matrix(w)
    if a.shape[0] < 1:
        raise ShapeError("empty W")
    dev = float(np.max(np.abs(np.sum(np.abs(a) ** 2, axis=1) - 1.0)))
    return IsometryReport(dev < tol, dev)


def w_toric_code() -> WMatrix:
    """The toric-code fixed point: all eight even-parity entries ``1/sqrt(2)``."""
    return w_set_path(1.0)


def w_set_path(g: float) -> WMatrix:
    """The D=2 path between the toric code (g=1) and the nontrivial SET point (g=-1)."""
    g = _check_g(g)
    a, c, s = _path_amplitudes(g)
    h = SQRT1_2
    entries = np.array(
        [
            [a, 0.0, 0.0, s * c],
            [0.0, h, h, 0.0],
            [0.0, h, h, 0.0],
            [c, 0.0, 0.0, a],
        ],
        dtype=complex,
    )
    return WMatrix(entries)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Classical vertex weights ``R_ijmn = |W_ijmn|^2`` (row-stochastic)."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"R must be square, got shape {a.shape}")
        if np.any(a < 0):
            raise DomainError("weights must be nonnegative")
        object.__setattr__(self, "entries", _readonly(a))

    @property
    def dim_virtual(self) -> int:
        return int(round(np.sqrt(self.entries.shape[0])))

    def tensor(self) -> np.ndarray:
        d = self.dim_virtual
        return self.entries.reshape(d, d, d, d)

    def support_count(self, tol: float = DEFAULT_TOL) -> int:
        return int(np.count_nonzero(self.entries > tol))

    def is_stochastic(self, tol: float = DEFAULT_TOL) -> bool:
        return bool(np.all(np.abs(self.entries.sum(axis=1) - 1.0) < tol))


def weight_matrix(w: WMatrix | np.ndarray) -> WeightMatrix:
    return WeightMatrix(np.abs(_as_matrix(w)) ** 2)


@dataclass(frozen=True, eq=False)
class MpsWMatrix:
    """The ``chi x chi`` weight matrix of a plumbed 1D matrix-product state."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"MPS W must be square, got shape {a.shape}")
        object.__setattr__(self, "entries", _readonly(a))

    @property
    def chi(self) -> int:
        return self.entries.shape[0]

    def bulk_tensor(self) -> np.ndarray:
        """Plumbed bulk tensor ``B[sigma, left, right] = delta(sigma, left) W[left, right]``."""
        chi = self.chi
        b = np.zeros((chi, chi, chi), dtype=complex)
        for s in range(chi):
            b[s, s, :] = self.entries[s, :]
        return b


def mps_w_path_1d(g: float) -> MpsWMatrix:
    """The 2x2 path from the product state (g=1) through GHZ (g=0) to the cluster state (g=-1)."""
    g = _check_g(g)
    a, c, s = _path_amplitudes(g)
    return MpsWMatrix(np.array([[a, s * c], [c, a]], dtype=complex))


@dataclass(frozen=True, eq=False)
class PlumbedTensor:
    """Rank-6 tensor ``T[sigma, rho, i, j, m, n] = delta(sigma,i) delta(rho,j) W[i,j,m,n]``."""

    w: WMatrix
    array: np.ndarray

    def isometry_contraction(self) -> np.ndarray:
        """``sum_{sigma rho m n} conj(T[..,i,j,m,n]) T[..,i',j',m,n]`` as a ``D^2 x D^2`` matrix."""
        d = self.w.dim_virtual
        g = np.einsum("abijmn,abklmn->ijkl", self.array.conj(), self.array)
        return g.reshape(d * d, d * d)

    def isometry_residual(self) -> float:
        c = self.isometry_contraction()
        return float(np.max(np.abs(c - np.eye(c.shape[0]))))


def plumb(w: WMatrix) -> PlumbedTensor:
    d = w.dim_virtual
    t = np.zeros((d,) * 6, dtype=complex)
    wt = w.tensor()
    for i in range(d):
        for j in range(d):
            t[i, j, i, j] = wt[i, j]
    return PlumbedTensor(w, _readonly(t))


# Double-line construction (bond dimension 4 on the domain walls)

_DL_LISTED = ("0010", "0111", "1101", "1000", "0011", "0110", "1100", "1001")


@dataclass(frozen=True, eq=False)
class DoubleLineTensor:
    """Tensor ``A[a, c, d', b']`` of the double-line W-matrix.

    ``W[(a,b,c,d), (a',b',c',d')] = A[a,c,d',b'] delta(a,a') delta(b,c) delta(d,d') delta(b',c')``.
    """

    a: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.a, dtype=complex)
        if arr.shape != (2, 2, 2, 2):
            raise ShapeError(f"A must have shape (2,2,2,2), got {arr.shape}")
        object.__setattr__(self, "a", _readonly(arr))

    def sum_rule_deviation(self) -> float:
        """Largest ``|sum_b' |A[a,c,d',b']|^2 - 1|``."""
        return float(np.max(np.abs(np.sum(np.abs(self.a) ** 2, axis=3) - 1.0)))

    def w_matrix(self) -> np.ndarray:
        """The 16x16 double-line W; rows with ``b != c`` vanish identically."""
        w = np.zeros((2,) * 8, dtype=complex)
        for a, b, d, bp in np.ndindex(2, 2, 2, 2):
            w[a, b, b, d, a, bp, bp, d] = self.a[a, b, d, bp]
        return w.reshape(16, 16)

    def plumbed(self) -> np.ndarray:
        """``T[rho, sigma, a, b, c, d, a', b', c', d']`` with domain-wall plumbing.

        The physical spin on a link records the domain wall between the two
        virtual lines it separates: ``rho = a xor b`` and ``sigma = c xor d``.
        """
        w = self.w_matrix().reshape((2,) * 8)
        t = np.zeros((2, 2) + (2,) * 8, dtype=complex)
        for a, b, c, d in np.ndindex(2, 2, 2, 2):
            t[a ^ b, c ^ d, a, b, c, d] = w[a, b, c, d]
        return t

    def isometry_residual(self) -> float:
        """Deviation of ``T^dagger T`` from the projector onto allowed inputs ``b == c``."""
        t = self.plumbed().reshape(4, 16, 16)
        g = np.einsum("sim,sjm->ij", t.conj(), t)
        allowed = np.array([((k >> 2) & 1) == ((k >> 1) & 1) for k in range(16)], dtype=float)
        return float(np.max(np.abs(g - np.diag(allowed))))


def doubleline_path(g: float) -> DoubleLineTensor:
    """Double-line path from the double semion (g=-1) to the toric code (g=1).

    Elements not fixed by the path formulas are ``1/sqrt(2)``; this keeps the
    sum rule and reproduces both fixed points.
    """
    g = _check_g(g)
    a_, c_, s = _path_amplitudes(g)
    vals = {
        "0010": a_,
        "0111": a_,
        "1101": a_,
        "1000": a_,
        "0011": s * c_,
        "0110": s * c_,
        "1100": c_,
        "1001": c_,
    }
    arr = np.full((2, 2, 2, 2), SQRT1_2, dtype=complex)
    for key in _DL_LISTED:
        arr[tuple(int(ch) for ch in key)] = vals[key]
    return DoubleLineTensor(arr)
