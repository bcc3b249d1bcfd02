"""Gate programs for preparing plumbed states on an open square lattice.

A program is an ordered tuple of events: unitaries (named elementary gates or
dense matrices), single-qubit measurements in a Pauli basis, resets and
X flips.  Vertex gates act on ``(left, bottom, right, top)`` and leave the two
input qubits untouched while writing the ``W`` row onto the fresh outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import DomainError, ExportError, PreconditionError, ShapeError, ValidationError
from .gates import GATE_SIGNATURES, complete_unitary, gate_matrix, is_unitary, state_prep_angles
from .lattice import KET0, BoundaryState, LatticeSpec, build_lattice
from .tensors import WMatrix, check_isometry, w_set_path

SCHEMA = "isotns.program/1"
BASES = ("X", "Y", "Z")


def _matrix_to_json(m: np.ndarray) -> dict:
    return {"shape": list(m.shape), "entries": [[float(z.real), float(z.imag)] for z in m.ravel()]}


def _matrix_from_json(d: dict) -> np.ndarray:
    flat = np.array([complex(re, im) for re, im in d["entries"]])
    return flat.reshape(d["shape"])


@dataclass(frozen=True, eq=False)
class Event:
    """One program step.

    ``kind`` is ``unitary``, ``measure``, ``reset`` or ``xflip``.  Unitaries
    carry either an elementary gate ``name`` with ``params`` or a dense
    ``matrix`` (``name`` is then ``vertex`` or ``dense``).
    """

    kind: str
    qubits: tuple[int, ...]
    name: str = ""
    params: tuple[float, ...] = ()
    matrix: np.ndarray | None = None
    basis: str = "Z"
    tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(set(self.qubits)) != len(self.qubits):
            raise ValidationError(f"repeated qubit in {self.qubits}")
        if self.kind == "unitary":
            if self.matrix is not None:
                m = np.array(self.matrix, dtype=complex)
                if m.shape != (2 ** len(self.qubits),) * 2:
                    raise ShapeError(f"matrix shape {m.shape} does not fit {len(self.qubits)} qubits")
                if not is_unitary(m):
                    raise ValidationError("dense gate is not unitary within 1e-12")
                m.setflags(write=False)
                object.__setattr__(self, "matrix", m)
            else:
                nq, _ = GATE_SIGNATURES.get(self.name, (None, None))
                if nq is None:
                    raise DomainError(f"unknown gate {self.name!r}")
                if nq != len(self.qubits):
                    raise ValidationError(f"gate {self.name} acts on {nq} qubits")
                gate_matrix(self.name, self.params)
        elif self.kind == "measure":
            if len(self.qubits) != 1 or self.basis not in BASES:
                raise ValidationError("measure takes one qubit and a basis in X/Y/Z")
        elif self.kind in ("reset", "xflip"):
            if len(self.qubits) != 1:
                raise ValidationError(f"{self.kind} takes exactly one qubit")
        else:
            raise DomainError(f"unknown event kind {self.kind!r}")

    @property
    def is_dense(self) -> bool:
        return self.kind == "unitary" and self.matrix is not None

    def operator(self) -> np.ndarray:
        if self.kind != "unitary":
            raise ValidationError(f"{self.kind} event has no unitary")
        if self.matrix is not None:
            return self.matrix
        return gate_matrix(self.name, self.params)

    def on(self, qubits: Iterable[int], tag: str | None = None) -> Event:
        """Same event relabelled: local qubit ``k`` becomes ``qubits[k]``."""
        qubits = tuple(qubits)
        return replace(self, qubits=tuple(qubits[q] for q in self.qubits), tag=self.tag if tag is None else tag)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Event):
            return NotImplemented
        same_matrix = (self.matrix is None and other.matrix is None) or (
            self.matrix is not None and other.matrix is not None and np.array_equal(self.matrix, other.matrix)
        )
        return (
            same_matrix
            and (self.kind, self.qubits, self.name, self.params, self.basis, self.tag)
            == (other.kind, other.qubits, other.name, other.params, other.basis, other.tag)
        )

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.name:
            d["name"] = self.name
        if self.params:
            d["params"] = list(self.params)
        if self.matrix is not None:
            d["matrix"] = _matrix_to_json(self.matrix)
        if self.kind == "measure":
            d["basis"] = self.basis
        if self.tag:
            d["tag"] = self.tag
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> Event:
        m = d.get("matrix")
        return cls(
            kind=d["kind"],
            qubits=tuple(d["qubits"]),
            name=d.get("name", ""),
            params=tuple(d.get("params", ())),
            matrix=None if m is None else _matrix_from_json(m),
            basis=d.get("basis", "Z"),
            tag=d.get("tag", ""),
        )


def gate(name: str, *qubits: int, params: Iterable[float] = (), tag: str = "") -> Event:
    return Event("unitary", tuple(qubits), name=name, params=tuple(params), tag=tag)


def dense(matrix: np.ndarray, qubits: Iterable[int], name: str = "dense", params=(), tag: str = "") -> Event:
    return Event("unitary", tuple(qubits), name=name, params=tuple(params), matrix=matrix, tag=tag)


def measure(q: int, basis: str = "Z", tag: str = "") -> Event:
    return Event("measure", (q,), basis=basis.upper(), tag=tag)


def reset(q: int, tag: str = "") -> Event:
    return Event("reset", (q,), tag=tag)


def xflip(q: int, tag: str = "") -> Event:
    return Event("xflip", (q,), tag=tag)


@dataclass(frozen=True, eq=False)
class GateProgram:
    n_qubits: int
    events: tuple[Event, ...]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "metadata", json.loads(json.dumps(dict(self.metadata))))
        for ev in self.events:
            if any(q < 0 or q >= self.n_qubits for q in ev.qubits):
                raise ValidationError(f"event on qubits {ev.qubits} outside register of {self.n_qubits}")

    @property
    def has_measurements(self) -> bool:
        return any(ev.kind == "measure" for ev in self.events)

    @property
    def lattice(self) -> LatticeSpec | None:
        lat = self.metadata.get("lattice")
        return None if lat is None else build_lattice(*lat)

    def count(self, kind: str, name: str | None = None) -> int:
        return sum(1 for ev in self.events if ev.kind == kind and (name is None or ev.name == name))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GateProgram):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.metadata == other.metadata
            and len(self.events) == len(other.events)
            and all(a == b for a, b in zip(self.events, other.events))
        )

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "n_qubits": self.n_qubits,
            "metadata": dict(self.metadata),
            "events": [ev.to_dict() for ev in self.events],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: Mapping) -> GateProgram:
        if d.get("schema") != SCHEMA:
            raise ValidationError(f"unsupported program schema {d.get('schema')!r}")
        return cls(int(d["n_qubits"]), tuple(Event.from_dict(e) for e in d["events"]), d.get("metadata", {}))

    @classmethod
    def from_json(cls, text: str) -> GateProgram:
        return cls.from_dict(json.loads(text))


# Vertex gates


@dataclass(frozen=True, eq=False)
class VertexGate:
    """Dense 16x16 vertex unitary on ``(left, bottom, right, top)``, optionally decomposed."""

    matrix: np.ndarray
    w: WMatrix
    g: float | None = None
    decomposition: tuple[Event, ...] | None = None

    def embedding_residual(self) -> float:
        """Largest deviation of ``U|ij00>`` from ``sum_mn W_ijmn |ijmn>``."""
        wt = self.w.tensor()
        worst = 0.0
        for i in range(2):
            for j in range(2):
                col = self.matrix[:, 8 * i + 4 * j]
                want = np.zeros(16, dtype=complex)
                want[8 * i + 4 * j : 8 * i + 4 * j + 4] = wt[i, j].ravel()
                worst = max(worst, float(np.max(np.abs(col - want))))
        return worst

    def decomposition_matrix(self) -> np.ndarray:
        if self.decomposition is None:
            raise ExportError("vertex gate has no elementary decomposition")
        u = np.eye(16, dtype=complex)
        for ev in self.decomposition:
            u = _embed(ev.operator(), ev.qubits, 4) @ u
        return u


def _embed(op: np.ndarray, qubits: tuple[int, ...], n: int) -> np.ndarray:
    """Embed a local matrix on ``qubits`` of an ``n``-qubit register (qubit 0 most significant)."""
    k = len(qubits)
    t = op.reshape((2,) * (2 * k))
    full = np.eye(2**n, dtype=complex).reshape((2,) * (2 * n))
    rest = [q for q in range(n)]
    # contract op's input legs with the output legs of the identity
    out = np.tensordot(t, full, axes=(list(range(k, 2 * k)), list(qubits)))
    # axes now: op outputs (k), remaining identity row legs, identity column legs
    remaining = [q for q in rest if q not in qubits]
    order = [None] * n
    for pos, q in enumerate(qubits):
        order[q] = pos
    for pos, q in enumerate(remaining):
        order[q] = k + pos
    perm = order + list(range(n, 2 * n))
    return np.transpose(out, perm).reshape(2**n, 2**n)


def set_path_decomposition(g: float) -> tuple[Event, ...]:
    """Elementary circuit for the vertex gate of ``w_set_path(g)`` on local qubits ``(l, b, r, t)``.

    ``t`` takes the parity ``i xor j``; ``r`` is rotated by ``A(g)`` and, when the
    parity is odd, by ``B(g) = H A(g)^dagger`` to give ``|+>``.  Two CNOTs then
    map the pair to the output pattern, and for ``g < 0`` a CCZ conditioned on
    ``l = 0`` supplies the sign of the ``00 -> 11`` entry.
    """
    g = float(g)
    w_set_path(g)
    l, b, r, t = 0, 1, 2, 3
    theta = 2.0 * np.arctan(np.sqrt(abs(g)))
    events = [
        gate("cx", l, t),
        gate("cx", b, t),
        gate("ry", r, params=(theta,)),
        gate("cry", t, r, params=(-theta,)),
        gate("ch", t, r),
        gate("cx", l, r),
        gate("cx", r, t),
    ]
    if g < 0:
        events += [gate("x", l), gate("ccz", l, r, t), gate("x", l)]
    return tuple(events)


def _recognize_set_path(w: WMatrix, tol: float = 1e-12) -> float | None:
    if w.dim_virtual != 2:
        return None
    c = abs(w.entries[3, 0])
    if c**2 >= 1:
        return None
    mag = c**2 / (1 - c**2)
    if mag > 1 + tol:
        return None
    g = float(np.sign(w.entries[0, 3].real) * min(mag, 1.0))
    if np.max(np.abs(w_set_path(g).entries - w.entries)) < tol:
        return g
    return None


def lift_vertex_gate(w: WMatrix, tol: float = 1e-12) -> VertexGate:
    """Block-controlled unitary completion of the plumbed isometry of ``w``.

    ``U = sum_ij |ij><ij| (x) V_ij`` where ``V_ij|00> = sum_mn W_ijmn |mn>`` and the
    rest of ``V_ij`` comes from :func:`complete_unitary`.
    """
    rep = check_isometry(w, tol)
    if not rep.ok:
        raise PreconditionError(f"W is not isometric (max row deviation {rep.max_deviation:.3e})")
    if w.dim_virtual != 2:
        raise PreconditionError("vertex gates are defined for qubit edges (D = 2)")
    u = np.zeros((16, 16), dtype=complex)
    for ij in range(4):
        v = complete_unitary(w.entries[ij][:, None])
        u[4 * ij : 4 * ij + 4, 4 * ij : 4 * ij + 4] = v
    u.setflags(write=False)
    g = _recognize_set_path(w)
    deco = set_path_decomposition(g) if g is not None else None
    return VertexGate(u, w, g, deco)


# Programs


def _vertex_tag(x: int, y: int) -> str:
    return f"vertex:{x},{y}"


def boundary_prep_events(lattice: LatticeSpec, boundary: BoundaryState, qubit_of=None) -> list[Event]:
    """Events preparing ``boundary`` from ``|0...0>``; ``qubit_of`` maps edges to register qubits."""
    boundary.validate(lattice)
    qubit_of = qubit_of or (lambda q: q)
    if not boundary.is_product:
        vec = boundary.boundary_vector(lattice)
        u = complete_unitary(vec[:, None])
        # first chain qubit is least significant, local matrices list the most significant first
        qubits = [qubit_of(q) for q in reversed(lattice.boundary_edges)]
        return [dense(u, qubits, tag="boundary")]
    events = []
    for q in lattice.boundary_edges:
        vec = boundary.factor(q)
        if np.allclose(vec, KET0, atol=1e-15):
            continue
        events.append(gate("u", qubit_of(q), params=state_prep_angles(vec), tag="boundary"))
    return events


def _resolve_w(g_or_w: float | WMatrix) -> tuple[WMatrix, float | None]:
    if isinstance(g_or_w, WMatrix):
        return g_or_w, _recognize_set_path(g_or_w)
    g = float(g_or_w)
    return w_set_path(g), g


def _boundary_label(boundary: BoundaryState) -> str:
    return "product" if boundary.is_product else "dense"


def sequential_program(
    lattice: LatticeSpec,
    g: float | WMatrix,
    boundary: BoundaryState | None = None,
    defects: Iterable[tuple[int, int]] = (),
) -> GateProgram:
    """Boundary preparation followed by every vertex gate in anti-diagonal order."""
    boundary = boundary if boundary is not None else BoundaryState.zeros()
    w, gval = _resolve_w(g)
    vg = lift_vertex_gate(w)
    events = boundary_prep_events(lattice, boundary)
    for x, y in lattice.vertices:
        params = (gval,) if gval is not None else ()
        events.append(dense(vg.matrix, lattice.vertex_edges(x, y), name="vertex", params=params, tag=_vertex_tag(x, y)))
    meta = {
        "g": gval,
        "lattice": [lattice.n_vx, lattice.n_vy],
        "defects": [],
        "boundary": _boundary_label(boundary),
        "variant": "sequential",
    }
    if gval is None:
        meta["w"] = w.to_dict()
    prog = GateProgram(lattice.n_qubits, tuple(events), meta)
    for v in defects:
        prog = insert_defect(prog, v)
    return prog


def insert_defect(program: GateProgram, vertex: tuple[int, int]) -> GateProgram:
    """Flip the top output of ``vertex`` right after its gate."""
    lattice = program.lattice
    if lattice is None or program.metadata.get("variant") != "sequential":
        raise ValidationError("defects can only be inserted into sequential lattice programs")
    x, y = int(vertex[0]), int(vertex[1])
    lattice.check_vertex(x, y)
    tag = _vertex_tag(x, y)
    last = max(k for k, ev in enumerate(program.events) if ev.tag == tag)
    top = lattice.vertex_edges(x, y)[3]
    events = list(program.events)
    events.insert(last + 1, xflip(top, tag=f"defect:{x},{y}"))
    meta = dict(program.metadata)
    meta["defects"] = list(meta.get("defects", [])) + [[x, y]]
    return GateProgram(program.n_qubits, tuple(events), meta)


def decompose_program(program: GateProgram) -> GateProgram:
    """Replace set-path vertex gates by their elementary decomposition."""
    events: list[Event] = []
    for ev in program.events:
        if ev.kind == "unitary" and ev.name == "vertex" and ev.params:
            events.extend(e.on(ev.qubits, tag=ev.tag) for e in set_path_decomposition(ev.params[0]))
        else:
            events.append(ev)
    meta = dict(program.metadata)
    meta["decomposed"] = True
    return GateProgram(program.n_qubits, tuple(events), meta)


def holographic_program(
    lattice: LatticeSpec,
    g: float | WMatrix,
    boundary: BoundaryState | None = None,
    bases: str | Mapping[int, str] = "Z",
    defects: Iterable[tuple[int, int]] = (),
    decompose: bool = False,
) -> GateProgram:
    """Measure-and-reset version of the sequential circuit on a register of width ``n_vx + n_vy + 2``.

    Register qubits ``0 .. n_vx+n_vy-1`` start out holding the boundary edges in
    chain order; two more serve as fresh outputs.  Each measurement's tag names
    the lattice edge it reads out.
    """
    boundary = boundary if boundary is not None else BoundaryState.zeros()
    w, gval = _resolve_w(g)
    vg = lift_vertex_gate(w)
    if decompose and vg.decomposition is None:
        raise ExportError("custom W has no elementary decomposition")
    defect_set = set()
    for x, y in defects:
        lattice.check_vertex(x, y)
        defect_set ^= {(int(x), int(y))}
    basis_of = _basis_lookup(lattice, bases)

    chain = lattice.boundary_edges
    width = len(chain)
    reg = {q: k for k, q in enumerate(chain)}
    free = [width, width + 1]
    events = boundary_prep_events(lattice, boundary, qubit_of=lambda q: reg[q])
    for x, y in lattice.vertices:
        l, b, r, t = lattice.vertex_edges(x, y)
        reg[r], reg[t] = free.pop(0), free.pop(0)
        qubits = (reg[l], reg[b], reg[r], reg[t])
        tag = _vertex_tag(x, y)
        if decompose:
            events.extend(e.on(qubits, tag=tag) for e in vg.decomposition)
        else:
            params = (gval,) if gval is not None else ()
            events.append(dense(vg.matrix, qubits, name="vertex", params=params, tag=tag))
        if (x, y) in defect_set:
            events.append(xflip(reg[t], tag=f"defect:{x},{y}"))
        for e in lattice.completed_by(x, y):
            q = reg.pop(e)
            events.append(measure(q, basis_of(e), tag=f"edge:{e}"))
            events.append(reset(q, tag=f"edge:{e}"))
            free.append(q)
    meta = {
        "g": gval,
        "lattice": [lattice.n_vx, lattice.n_vy],
        "defects": [list(v) for v in sorted(defect_set)],
        "boundary": _boundary_label(boundary),
        "variant": "holographic",
    }
    if gval is None:
        meta["w"] = w.to_dict()
    if decompose:
        meta["decomposed"] = True
    return GateProgram(width + 2, tuple(events), meta)


def _basis_lookup(lattice: LatticeSpec, bases: str | Mapping[int, str]):
    if isinstance(bases, str):
        if len(bases) == 1:
            b = bases.upper()
            if b not in BASES:
                raise DomainError(f"unknown basis {bases!r}")
            return lambda q: b
        if len(bases) != lattice.n_qubits:
            raise ValidationError(f"basis string has length {len(bases)}, lattice has {lattice.n_qubits} qubits")
        bases = {q: c for q, c in enumerate(bases)}
    table = {int(q): str(b).upper() for q, b in bases.items()}
    missing = [q for q in range(lattice.n_qubits) if q not in table]
    if missing:
        raise ValidationError(f"no basis assigned to qubits {missing}")
    if any(b not in BASES for b in table.values()):
        raise DomainError("bases must be X, Y or Z")
    return lambda q: table[q]


# Export


def _fmt(x: float) -> str:
    return repr(float(x))


_QASM_NAMES = {"x": "x", "h": "h", "ry": "ry", "rx": "rx", "cx": "cx", "ch": "ch", "cry": "cry", "ccz": "ccz"}


def _qasm3(program: GateProgram) -> str:
    lines = ["OPENQASM 3.0;", 'include "stdgates.inc";']
    uses_ccz = any(ev.kind == "unitary" and ev.name == "ccz" for ev in program.events)
    if uses_ccz:
        lines.append("gate ccz a, b, c { h c; ccx a, b, c; h c; }")
    n_meas = program.count("measure")
    lines.append(f"qubit[{program.n_qubits}] q;")
    if n_meas:
        lines.append(f"bit[{n_meas}] c;")
    k = 0
    for ev in program.events:
        qs = ", ".join(f"q[{q}]" for q in ev.qubits)
        if ev.kind == "unitary":
            if ev.is_dense:
                raise ExportError(f"dense gate {ev.name!r} ({ev.tag or 'untagged'}) needs decomposition before QASM export")
            if ev.name == "u":
                args = ", ".join(_fmt(p) for p in ev.params)
                lines.append(f"U({args}) {qs};")
            elif ev.params:
                args = ", ".join(_fmt(p) for p in ev.params)
                lines.append(f"{_QASM_NAMES[ev.name]}({args}) {qs};")
            else:
                lines.append(f"{_QASM_NAMES[ev.name]} {qs};")
        elif ev.kind == "measure":
            if ev.basis == "X":
                lines.append(f"h {qs};")
            elif ev.basis == "Y":
                lines.append(f"rx({_fmt(np.pi / 2)}) {qs};")
            lines.append(f"c[{k}] = measure {qs};")
            k += 1
        elif ev.kind == "reset":
            lines.append(f"reset {qs};")
        else:
            lines.append(f"x {qs};")
    return "\n".join(lines) + "\n"


def export_program(program: GateProgram, fmt: str = "json") -> str:
    fmt = fmt.lower()
    if fmt == "json":
        return program.to_json()
    if fmt == "qasm3":
        return _qasm3(program)
    raise DomainError(f"unknown export format {fmt!r}")


def import_program(text: str) -> GateProgram:
    return GateProgram.from_json(text)
