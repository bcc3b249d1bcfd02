"""Dense statevector execution of gate programs.

Amplitudes are stored with qubit 0 as the least significant bit.  Internally
the vector is viewed as a rank-``n`` tensor whose axis ``n-1-q`` is qubit ``q``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit import GateProgram
from .errors import ResourceError, ValidationError
from .pauli import BASIS_ROTATION, PAULI, PauliString

MAX_QUBITS = 26


@dataclass(eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray
    measurements: list[tuple[int, str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (2**self.n_qubits,):
            raise ValidationError(f"expected {2**self.n_qubits} amplitudes, got shape {a.shape}")
        self.amplitudes = a

    @classmethod
    def zeros(cls, n_qubits: int, max_qubits: int = MAX_QUBITS) -> StateVector:
        if n_qubits > max_qubits:
            raise ResourceError(
                f"{n_qubits} qubits exceeds the statevector budget of {max_qubits}; use the holographic engine"
            )
        a = np.zeros(2**n_qubits, dtype=complex)
        a[0] = 1.0
        return cls(n_qubits, a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def _tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits) if self.n_qubits else self.amplitudes.reshape(())

    def _axis(self, q: int) -> int:
        if not 0 <= q < self.n_qubits:
            raise ValidationError(f"qubit {q} outside register of {self.n_qubits}")
        return self.n_qubits - 1 - q

    def apply(self, matrix: np.ndarray, qubits: Sequence[int]) -> None:
        """Apply a local matrix; its first listed qubit is the most significant."""
        k = len(qubits)
        axes = [self._axis(q) for q in qubits]
        op = np.asarray(matrix, dtype=complex).reshape((2,) * (2 * k))
        t = np.tensordot(op, self._tensor(), axes=(list(range(k, 2 * k)), axes))
        t = np.moveaxis(t, list(range(k)), axes)
        self.amplitudes = np.ascontiguousarray(t).reshape(-1)

    def apply_x(self, q: int) -> None:
        t = self._tensor()
        self.amplitudes = np.ascontiguousarray(np.flip(t, axis=self._axis(q))).reshape(-1)

    def probabilities(self, q: int) -> np.ndarray:
        p = np.abs(self._tensor()) ** 2
        ax = self._axis(q)
        other = tuple(a for a in range(self.n_qubits) if a != ax)
        return p.sum(axis=other)

    def measure(self, q: int, basis: str, rng: np.random.Generator) -> int:
        """Projective measurement; the qubit is left in the computational state of the outcome."""
        rot = BASIS_ROTATION[basis.upper()]
        if basis.upper() != "Z":
            self.apply(rot, [q])
        p = self.probabilities(q)
        p1 = float(p[1] / p.sum())
        outcome = int(rng.random() < p1)
        t = self._tensor().copy()
        ax = self._axis(q)
        idx = [slice(None)] * self.n_qubits
        idx[ax] = 1 - outcome
        t[tuple(idx)] = 0.0
        t /= np.linalg.norm(t)
        self.amplitudes = t.reshape(-1)
        self.measurements.append((q, basis.upper(), outcome))
        return outcome

    def reset(self, q: int, rng: np.random.Generator) -> None:
        """Ideal reset: project onto a sampled outcome and rotate back to ``|0>``."""
        t = self._tensor()
        p = self.probabilities(q)
        if p[1] > 1e-15:
            outcome = int(rng.random() < p[1] / p.sum())
            ax = self._axis(q)
            idx = [slice(None)] * self.n_qubits
            idx[ax] = 1 - outcome
            t = t.copy()
            t[tuple(idx)] = 0.0
            t /= np.linalg.norm(t)
            self.amplitudes = t.reshape(-1)
            if outcome:
                self.apply_x(q)


def run(
    program: GateProgram,
    seed: int | None = None,
    max_qubits: int = MAX_QUBITS,
    initial: StateVector | None = None,
) -> StateVector:
    """Execute ``program`` starting from ``|0...0>`` (or ``initial``).

    Measurement-free programs are deterministic; otherwise outcomes are drawn
    from ``np.random.default_rng(seed)``.
    """
    if program.n_qubits > max_qubits:
        raise ResourceError(
            f"program needs {program.n_qubits} qubits, statevector budget is {max_qubits}; use the holographic engine"
        )
    state = initial if initial is not None else StateVector.zeros(program.n_qubits, max_qubits)
    if state.n_qubits != program.n_qubits:
        raise ValidationError("initial state size does not match program")
    rng = np.random.default_rng(seed)
    for ev in program.events:
        if ev.kind == "unitary":
            state.apply(ev.operator(), ev.qubits)
        elif ev.kind == "xflip":
            state.apply_x(ev.qubits[0])
        elif ev.kind == "measure":
            state.measure(ev.qubits[0], ev.basis, rng)
        else:
            state.reset(ev.qubits[0], rng)
    return state


def expect(state: StateVector, op: PauliString) -> complex:
    """``<psi|P|psi>``; real for Hermitian ``P``.

    Z-type factors are diagonal phases and X-type factors are axis flips of the
    amplitude tensor, so no Pauli matrices are materialized.
    """
    if op.max_qubit() >= state.n_qubits:
        raise ValidationError(f"Pauli string reaches qubit {op.max_qubit()} outside register")
    ket = state._tensor()
    phased = ket.copy()
    scalar = complex(op.phase)
    flips = []
    for q, p in op.ops.items():
        ax = state._axis(q)
        if p in ("Z", "Y"):
            idx = [slice(None)] * state.n_qubits
            idx[ax] = 1
            phased[tuple(idx)] *= -1
        if p in ("X", "Y"):
            flips.append(ax)
        if p == "Y":
            scalar *= 1j
    # P|c> = phase(c) |c xor f>, so <psi|P psi> = sum_c conj(psi(c xor f)) phase(c) psi(c)
    bra = np.flip(ket, axis=flips) if flips else ket
    return scalar * complex(np.vdot(np.ascontiguousarray(bra), phased))


def expect_real(state: StateVector, op: PauliString) -> float:
    return float(expect(state, op).real)


def overlap(a: StateVector, b: StateVector) -> complex:
    if a.n_qubits != b.n_qubits:
        raise ValidationError(f"size mismatch: {a.n_qubits} vs {b.n_qubits} qubits")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def rotated_probabilities(state: StateVector, bases: str | Mapping[int, str]) -> np.ndarray:
    """Born distribution over outcomes after rotating each qubit into its basis."""
    n = state.n_qubits
    if isinstance(bases, str) and len(bases) == 1:
        bases = {q: bases for q in range(n)}
    elif isinstance(bases, str):
        bases = dict(enumerate(bases))
    rotated = StateVector(n, state.amplitudes.copy())
    for q in range(n):
        b = bases[q].upper()
        if b != "Z":
            rotated.apply(BASIS_ROTATION[b], [q])
    p = np.abs(rotated.amplitudes) ** 2
    return p / p.sum()


def born_sample(
    state: StateVector, bases: str | Mapping[int, str], shots: int, seed: int
) -> list[str]:
    """I.i.d. bitstrings from the rotated Born distribution.

    Bitstrings are written qubit 0 first.
    """
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    p = rotated_probabilities(state, bases)
    rng = np.random.default_rng(seed)
    idx = rng.choice(p.size, size=shots, p=p)
    n = state.n_qubits
    return ["".join(str((int(i) >> q) & 1) for q in range(n)) for i in idx]


def samples_to_csv(samples: Iterable[str]) -> str:
    buf = io.StringIO()
    buf.write("shot_index,bitstring\n")
    for k, s in enumerate(samples):
        buf.write(f"{k},{s}\n")
    return buf.getvalue()


def pauli_matrix(op: PauliString, n_qubits: int) -> np.ndarray:
    """Dense matrix of ``op`` (small registers only, for tests)."""
    m = np.ones((1, 1), dtype=complex)
    for q in reversed(range(n_qubits)):
        m = np.kron(m, PAULI[op.ops.get(q, "I")])
    return op.phase * m
