"""Open-boundary square-lattice geometry for the sequential circuit.

Vertices sit on an ``n_vx x n_vy`` grid.  Qubits live on edges:

* horizontal edge ``h(x, y)`` for ``0 <= x <= n_vx``, ``0 <= y < n_vy``
* vertical edge ``v(x, y)`` for ``0 <= x < n_vx``, ``0 <= y <= n_vy``

Vertex ``(x, y)`` reads its left ``h(x, y)`` and bottom ``v(x, y)`` edges and
writes its right ``h(x+1, y)`` and top ``v(x, y+1)`` edges.  Edges are indexed
row-major: row ``y`` holds the vertical edges ``v(0..n_vx-1, y)`` followed by
the horizontal edges ``h(0..n_vx, y)``; the last row only has vertical edges.

The boundary inputs are the left column ``h(0, y)`` and the bottom row
``v(x, 0)``.  They are listed in *chain order*: left column from top to
bottom, then bottom row from left to right.  This is the order of the
staircase frontier used by the holographic sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, ValidationError

KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
KET_PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)


@dataclass(frozen=True)
class LatticeSpec:
    n_vx: int
    n_vy: int

    def __post_init__(self) -> None:
        if int(self.n_vx) < 1 or int(self.n_vy) < 1:
            raise DomainError(f"lattice dimensions must be >= 1, got ({self.n_vx}, {self.n_vy})")

    @property
    def row_stride(self) -> int:
        return 2 * self.n_vx + 1

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_vx * self.n_vy + self.n_vx + self.n_vy

    @property
    def n_vertices(self) -> int:
        return self.n_vx * self.n_vy

    def h(self, x: int, y: int) -> int:
        if not (0 <= x <= self.n_vx and 0 <= y < self.n_vy):
            raise DomainError(f"no horizontal edge at ({x}, {y})")
        return y * self.row_stride + self.n_vx + x

    def v(self, x: int, y: int) -> int:
        if not (0 <= x < self.n_vx and 0 <= y <= self.n_vy):
            raise DomainError(f"no vertical edge at ({x}, {y})")
        return y * self.row_stride + x

    def check_vertex(self, x: int, y: int) -> None:
        if not (0 <= x < self.n_vx and 0 <= y < self.n_vy):
            raise DomainError(f"vertex ({x}, {y}) outside {self.n_vx}x{self.n_vy} lattice")

    def vertex_edges(self, x: int, y: int) -> tuple[int, int, int, int]:
        """``(left, bottom, right, top)`` qubit indices of vertex ``(x, y)``."""
        self.check_vertex(x, y)
        return self.h(x, y), self.v(x, y), self.h(x + 1, y), self.v(x, y + 1)

    @cached_property
    def vertices(self) -> tuple[tuple[int, int], ...]:
        """All vertices in sequential order: anti-diagonal ``x+y`` first, then ``x``."""
        order = [(x, y) for x in range(self.n_vx) for y in range(self.n_vy)]
        order.sort(key=lambda p: (p[0] + p[1], p[0]))
        return tuple(order)

    @property
    def n_layers(self) -> int:
        return self.n_vx + self.n_vy - 1

    def layer(self, k: int) -> tuple[tuple[int, int], ...]:
        return tuple(p for p in self.vertices if p[0] + p[1] == k)

    @cached_property
    def boundary_edges(self) -> tuple[int, ...]:
        left = [self.h(0, y) for y in reversed(range(self.n_vy))]
        bottom = [self.v(x, 0) for x in range(self.n_vx)]
        return tuple(left + bottom)

    @cached_property
    def output_edges(self) -> frozenset[int]:
        """Edges written by some vertex gate."""
        out = set()
        for x, y in self.vertices:
            _, _, r, t = self.vertex_edges(x, y)
            out.update((r, t))
        return frozenset(out)

    @cached_property
    def dangling_edges(self) -> tuple[int, ...]:
        """Outputs never read by another vertex (right column and top row)."""
        right = [self.h(self.n_vx, y) for y in range(self.n_vy)]
        top = [self.v(x, self.n_vy) for x in range(self.n_vx)]
        return tuple(sorted(right + top))

    def completed_by(self, x: int, y: int) -> tuple[int, ...]:
        """Edges whose value is final once vertex ``(x, y)`` has acted.

        These are its two inputs, followed by any of its outputs that no later
        vertex reads.  Every edge appears for exactly one vertex.
        """
        l, b, r, t = self.vertex_edges(x, y)
        dangling = set(self.dangling_edges)
        return (l, b) + tuple(q for q in (r, t) if q in dangling)

    def row_edges(self, k: int) -> tuple[int, ...]:
        """Edges completed during anti-diagonal layer ``k``, left to right."""
        out: list[int] = []
        for x, y in self.layer(k):
            out.extend(self.completed_by(x, y))
        return tuple(out)

    def plaquettes(self) -> list[tuple[int, int]]:
        """Interior plaquettes, labelled by their bottom-left vertex."""
        return [(x, y) for y in range(self.n_vy - 1) for x in range(self.n_vx - 1)]

    def plaquette_edges(self, x: int, y: int) -> tuple[int, int, int, int]:
        """``(bottom, right, top, left)`` edges of the plaquette above-right of vertex ``(x, y)``."""
        if not (0 <= x < self.n_vx - 1 and 0 <= y < self.n_vy - 1):
            raise DomainError(f"no interior plaquette at ({x}, {y})")
        return self.h(x + 1, y), self.v(x + 1, y + 1), self.h(x + 1, y + 1), self.v(x, y + 1)

    def edge_label(self, q: int) -> str:
        y, r = divmod(q, self.row_stride)
        if r < self.n_vx:
            return f"v({r},{y})"
        return f"h({r - self.n_vx},{y})"


def build_lattice(n_vx: int, n_vy: int) -> LatticeSpec:
    return LatticeSpec(int(n_vx), int(n_vy))


@dataclass(frozen=True, eq=False)
class BoundaryState:
    """Initial state of the boundary input qubits.

    Either a product state (``fill`` on every boundary qubit, with optional
    per-qubit ``overrides``) or a dense ``vector`` over the boundary qubits in
    chain order, with the first boundary qubit as the least significant bit.
    """

    fill: np.ndarray = field(default_factory=lambda: KET0.copy())
    overrides: dict[int, np.ndarray] = field(default_factory=dict)
    vector: np.ndarray | None = None

    def __post_init__(self) -> None:
        fill = np.asarray(self.fill, dtype=complex)
        fill = fill / np.linalg.norm(fill)
        object.__setattr__(self, "fill", fill)
        ov = {int(q): np.asarray(v, dtype=complex) / np.linalg.norm(v) for q, v in self.overrides.items()}
        object.__setattr__(self, "overrides", ov)
        if self.vector is not None:
            vec = np.asarray(self.vector, dtype=complex)
            object.__setattr__(self, "vector", vec / np.linalg.norm(vec))

    @classmethod
    def zeros(cls) -> BoundaryState:
        return cls()

    @classmethod
    def plus(cls) -> BoundaryState:
        return cls(fill=KET_PLUS)

    @classmethod
    def from_bits(cls, lattice: LatticeSpec, bits) -> BoundaryState:
        """Computational basis state; ``bits`` follow ``lattice.boundary_edges``."""
        bits = [int(b) for b in bits]
        edges = lattice.boundary_edges
        if len(bits) != len(edges):
            raise ValidationError(f"expected {len(edges)} boundary bits, got {len(bits)}")
        return cls(overrides={q: (KET1 if b else KET0) for q, b in zip(edges, bits)})

    @classmethod
    def product(cls, states: dict[int, np.ndarray], fill=KET0) -> BoundaryState:
        return cls(fill=fill, overrides=dict(states))

    @classmethod
    def dense(cls, vector) -> BoundaryState:
        return cls(vector=np.asarray(vector))

    @property
    def is_product(self) -> bool:
        return self.vector is None

    def validate(self, lattice: LatticeSpec) -> None:
        allowed = set(lattice.boundary_edges)
        bad = sorted(set(self.overrides) - allowed)
        if bad:
            raise ValidationError(f"boundary preparation on non-boundary qubits {bad}")
        if self.vector is not None and self.vector.size != 2 ** len(allowed):
            raise ValidationError(
                f"dense boundary vector has size {self.vector.size}, expected 2**{len(allowed)}"
            )

    def factor(self, q: int) -> np.ndarray:
        """Single-qubit state on boundary qubit ``q`` (product states only)."""
        if self.vector is not None:
            raise ValidationError("dense boundary state has no product factors")
        return self.overrides.get(q, self.fill)

    def amplitude(self, lattice: LatticeSpec, bits: dict[int, int] | np.ndarray) -> complex:
        """Amplitude of the boundary configuration (``bits[q]`` for boundary qubit ``q``)."""
        edges = lattice.boundary_edges
        if self.vector is None:
            amp = 1.0 + 0j
            for q in edges:
                amp *= self.factor(q)[int(bits[q])]
            return amp
        idx = sum(int(bits[q]) << k for k, q in enumerate(edges))
        return complex(self.vector[idx])

    def boundary_vector(self, lattice: LatticeSpec) -> np.ndarray:
        """Dense state over the boundary qubits (chain order, first qubit least significant)."""
        self.validate(lattice)
        if self.vector is not None:
            return self.vector.copy()
        vec = np.ones(1, dtype=complex)
        for q in lattice.boundary_edges:
            # later qubits are more significant
            vec = np.kron(self.factor(q), vec)
        return vec
