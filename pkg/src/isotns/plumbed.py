"""Exact contraction of plumbed states on open lattices.

For a plumbed network every physical bit equals the virtual bit on the same
edge, so the amplitude of a configuration ``c`` is the boundary amplitude
times a product of ``W`` entries, one per vertex.  Pauli expectation values

    <psi|P|psi> = sum_c psi(c) phase(c) conj(psi(c xor f))

are contracted vertex by vertex along the staircase frontier, which never
holds more than ``n_vx + n_vy`` edges.  This handles lattices far beyond the
statevector budget and serves as an independent oracle for the circuit engine.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable

import numpy as np

from .errors import ResourceError, ValidationError
from .lattice import BoundaryState, LatticeSpec
from .pauli import PauliString
from .tensors import WMatrix

BRUTE_FORCE_MAX_QUBITS = 22


class LabeledTensor:
    """Dense array whose axes carry integer labels (edge indices)."""

    def __init__(self, data: np.ndarray, labels: Iterable[int]):
        self.data = np.asarray(data)
        self.labels = list(labels)
        if self.data.ndim != len(self.labels):
            raise ValidationError("label count does not match tensor rank")

    def __contains__(self, label: int) -> bool:
        return label in self.labels

    def attach(self, vec: np.ndarray, label: int) -> None:
        self.data = np.multiply.outer(self.data, vec)
        self.labels.append(label)

    def absorb(self, kernel: np.ndarray, inputs: tuple[int, ...], outputs: tuple[int, ...]) -> None:
        """Contract ``kernel[in..., out...]`` over ``inputs`` and append ``outputs``."""
        axes = [self.labels.index(q) for q in inputs]
        self.data = np.tensordot(self.data, kernel, axes=(axes, list(range(len(inputs)))))
        self.labels = [q for q in self.labels if q not in inputs] + list(outputs)

    def trace_out(self, label: int) -> None:
        ax = self.labels.index(label)
        self.data = self.data.sum(axis=ax)
        del self.labels[ax]

    def scalar(self) -> complex:
        if self.labels:
            raise ValidationError(f"open labels remain: {self.labels}")
        return complex(self.data)


class PlumbedState:
    """The plumbed state of ``w`` on an open lattice, with optional defects.

    A defect at a vertex flips that vertex's top output after the gate, so the
    vertex factor becomes ``W[l, b, r, t xor 1]``.
    """

    def __init__(
        self,
        lattice: LatticeSpec,
        w: WMatrix,
        boundary: BoundaryState | None = None,
        defects: Iterable[tuple[int, int]] = (),
    ):
        if w.dim_virtual != 2:
            raise ValidationError("lattice contraction needs qubit edges (D = 2)")
        self.lattice = lattice
        self.w = w
        self.boundary = boundary if boundary is not None else BoundaryState.zeros()
        self.boundary.validate(lattice)
        counts = Counter()
        for x, y in defects:
            lattice.check_vertex(x, y)
            counts[(int(x), int(y))] += 1
        self.defects = frozenset(v for v, k in counts.items() if k % 2)

    def vertex_tensor(self, x: int, y: int) -> np.ndarray:
        t = self.w.tensor()
        if (x, y) in self.defects:
            t = t[:, :, :, ::-1]
        return t

    def amplitude(self, bits) -> complex:
        """Amplitude of a full edge configuration (``bits[q]`` for every qubit)."""
        lat = self.lattice
        amp = self.boundary.amplitude(lat, bits)
        for x, y in lat.vertices:
            l, b, r, t = lat.vertex_edges(x, y)
            amp *= self.vertex_tensor(x, y)[bits[l], bits[b], bits[r], bits[t]]
        return complex(amp)

    def amplitudes(self) -> np.ndarray:
        """Full amplitude vector by direct evaluation; qubit 0 is least significant."""
        lat = self.lattice
        n = lat.n_qubits
        if n > BRUTE_FORCE_MAX_QUBITS:
            raise ResourceError(f"{n} qubits exceeds brute-force limit {BRUTE_FORCE_MAX_QUBITS}")
        idx = np.arange(2**n, dtype=np.int64)

        def bit(q):
            return (idx >> q) & 1

        edges = lat.boundary_edges
        if self.boundary.is_product:
            amp = np.ones(idx.size, dtype=complex)
            for q in edges:
                amp *= self.boundary.factor(q)[bit(q)]
        else:
            bidx = np.zeros(idx.size, dtype=np.int64)
            for k, q in enumerate(edges):
                bidx |= bit(q) << k
            amp = self.boundary.vector[bidx].astype(complex)
        for x, y in lat.vertices:
            l, b, r, t = lat.vertex_edges(x, y)
            amp *= self.vertex_tensor(x, y)[bit(l), bit(b), bit(r), bit(t)]
        return amp

    def _pair_vector(self, vec: np.ndarray, op: PauliString, q: int) -> np.ndarray:
        flip, phase = op.local_action(q)
        return vec * phase * np.conj(vec[np.arange(2) ^ flip])

    def expect(self, op: PauliString | None = None) -> complex:
        """``<psi|P|psi>`` for the unnormalized plumbed state (``P = 1`` gives the norm)."""
        op = op if op is not None else PauliString()
        lat = self.lattice
        if op.max_qubit() >= lat.n_qubits:
            raise ValidationError(f"Pauli string acts on qubit {op.max_qubit()} outside lattice")
        edges = lat.boundary_edges
        if self.boundary.is_product:
            front = LabeledTensor(np.ones(()), [])
        else:
            # reshape puts the most significant (last chain) qubit first
            vec = self.boundary.vector
            nb = len(edges)
            ket = vec.reshape((2,) * nb)
            labels = list(reversed(edges))
            flips = np.array([op.local_action(q)[0] for q in labels], dtype=np.int64)
            bra_idx = np.indices((2,) * nb) ^ flips.reshape((-1,) + (1,) * nb)
            data = ket * np.conj(ket[tuple(bra_idx)])
            for ax, q in enumerate(labels):
                ph = op.local_action(q)[1]
                shape = [1] * nb
                shape[ax] = 2
                data = data * ph.reshape(shape)
            front = LabeledTensor(data, labels)

        dangling = set(lat.dangling_edges)
        for x, y in lat.vertices:
            l, b, r, t = lat.vertex_edges(x, y)
            for q in (l, b):
                if q not in front:
                    front.attach(self._pair_vector(self.boundary.factor(q), op, q), q)
            front.absorb(self._vertex_kernel(x, y, op), (l, b), (r, t))
            for q in (r, t):
                if q in dangling:
                    front.trace_out(q)
        return op.phase * front.scalar()

    def _vertex_kernel(self, x: int, y: int, op: PauliString) -> np.ndarray:
        """``K[l,b,r,t] = W(c) conj(W(c xor f)) phase_r(r) phase_t(t)``."""
        w = self.vertex_tensor(x, y)
        l, b, r, t = self.lattice.vertex_edges(x, y)
        f = [op.local_action(q)[0] for q in (l, b, r, t)]
        bra = w
        for ax, fl in enumerate(f):
            if fl:
                bra = np.flip(bra, axis=ax)
        k = w * np.conj(bra)
        k = k * op.local_action(r)[1].reshape(1, 1, 2, 1)
        k = k * op.local_action(t)[1].reshape(1, 1, 1, 2)
        return k

    def norm_squared(self) -> float:
        return float(self.expect().real)

    def normalized_expect(self, op: PauliString) -> complex:
        return self.expect(op) / self.norm_squared()
