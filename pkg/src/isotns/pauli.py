"""Pauli strings and single-qubit basis changes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DomainError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

# Rotation U with U^dagger Z U = P, so that measuring Z after U measures P.
# Y uses the quarter turn exp(-i pi X / 4); outcome 0 <-> eigenvalue +1.
_RX_HALF_PI = np.array([[1, -1j], [-1j, 1]], dtype=complex) / np.sqrt(2.0)
BASIS_ROTATION = {"Z": I2, "X": H, "Y": _RX_HALF_PI}


def basis_vectors(basis: str) -> np.ndarray:
    """Rows are the eigenvectors for outcome 0 and 1 of a measurement in ``basis``.

    ``basis_vectors(b)[k]`` is the state that the rotation maps to ``|k>``.
    """
    u = BASIS_ROTATION[basis.upper()]
    return u.conj()


@dataclass(frozen=True)
class PauliString:
    """Tensor product of X/Y/Z on selected qubits, identity elsewhere."""

    ops: Mapping[int, str] = field(default_factory=dict)
    phase: complex = 1.0

    def __post_init__(self) -> None:
        clean = {}
        for q, p in dict(self.ops).items():
            p = str(p).upper()
            if p not in PAULI:
                raise DomainError(f"unknown Pauli {p!r}")
            if int(q) < 0:
                raise DomainError(f"negative qubit index {q}")
            if p != "I":
                clean[int(q)] = p
        object.__setattr__(self, "ops", dict(sorted(clean.items())))

    @classmethod
    def product(cls, pauli: str, qubits: Iterable[int]) -> PauliString:
        return cls({q: pauli for q in qubits})

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.ops)

    @property
    def is_hermitian(self) -> bool:
        return abs(abs(self.phase) - 1) < 1e-14 and abs(complex(self.phase).imag) < 1e-14

    def max_qubit(self) -> int:
        return max(self.ops, default=-1)

    def __mul__(self, other: PauliString) -> PauliString:
        phase = self.phase * other.phase
        ops = dict(self.ops)
        for q, p in other.ops.items():
            if q not in ops:
                ops[q] = p
                continue
            m = PAULI[ops[q]] @ PAULI[p]
            for name in "IXYZ":
                ref = PAULI[name]
                k = np.vdot(ref, m) / 2
                if abs(abs(k) - 1) < 1e-12:
                    phase *= k
                    ops[q] = name
                    break
        return PauliString(ops, phase)

    def local_action(self, q: int) -> tuple[int, np.ndarray]:
        """``(flip, phases)`` with ``P_q |c> = phases[c] |c xor flip>``."""
        p = self.ops.get(q, "I")
        if p == "I":
            return 0, np.array([1, 1], dtype=complex)
        if p == "X":
            return 1, np.array([1, 1], dtype=complex)
        if p == "Y":
            return 1, np.array([1j, -1j], dtype=complex)
        return 0, np.array([1, -1], dtype=complex)
