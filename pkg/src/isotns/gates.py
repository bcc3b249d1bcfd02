"""Elementary gate matrices.

Local matrices list their qubits most-significant first: for a gate on
``(q0, q1)`` the matrix row index is ``2*b(q0) + b(q1)``.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

_SQ2 = 1.0 / np.sqrt(2.0)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    """OpenQASM ``U(theta, phi, lambda)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )


def controlled(u: np.ndarray) -> np.ndarray:
    """Control on the first qubit."""
    k = u.shape[0]
    out = np.eye(2 * k, dtype=complex)
    out[k:, k:] = u
    return out


X = np.array([[0, 1], [1, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2
CX = controlled(X)
CH = controlled(H)
CCZ = np.diag([1, 1, 1, 1, 1, 1, 1, -1]).astype(complex)

# name -> (number of qubits, number of parameters)
GATE_SIGNATURES = {
    "x": (1, 0),
    "h": (1, 0),
    "ry": (1, 1),
    "rx": (1, 1),
    "u": (1, 3),
    "cx": (2, 0),
    "ch": (2, 0),
    "cry": (2, 1),
    "ccz": (3, 0),
}


def gate_matrix(name: str, params: tuple[float, ...] = ()) -> np.ndarray:
    if name not in GATE_SIGNATURES:
        raise DomainError(f"unknown gate {name!r}")
    _, n_params = GATE_SIGNATURES[name]
    if len(params) != n_params:
        raise DomainError(f"gate {name} takes {n_params} parameters, got {len(params)}")
    if name == "x":
        return X.copy()
    if name == "h":
        return H.copy()
    if name == "ry":
        return ry(params[0])
    if name == "rx":
        return rx(params[0])
    if name == "u":
        return u3(*params)
    if name == "cx":
        return CX.copy()
    if name == "ch":
        return CH.copy()
    if name == "cry":
        return controlled(ry(params[0]))
    return CCZ.copy()


def state_prep_angles(vec: np.ndarray) -> tuple[float, float, float]:
    """``(theta, phi, 0)`` with ``U(theta, phi, 0)|0>`` equal to ``vec`` up to a global phase."""
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    theta = 2.0 * np.arctan2(abs(vec[1]), abs(vec[0]))
    phi = float(np.angle(vec[1]) - np.angle(vec[0])) if abs(vec[1]) > 0 and abs(vec[0]) > 0 else (
        float(np.angle(vec[1])) if abs(vec[1]) > 0 else 0.0
    )
    return float(theta), phi, 0.0


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and bool(
        np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) < tol
    )


def complete_unitary(columns: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Extend orthonormal ``columns`` (k x n -> n x k array) to an n x n unitary.

    Standard basis vectors are orthogonalized against the existing columns in
    index order; vectors with residual norm below ``tol`` are skipped and each
    new column is phased so its first nonzero entry is real positive.
    """
    cols = [np.asarray(c, dtype=complex) for c in np.asarray(columns, dtype=complex).T]
    n = cols[0].size
    for k in range(n):
        if len(cols) == n:
            break
        e = np.zeros(n, dtype=complex)
        e[k] = 1.0
        for c in cols:
            e = e - np.vdot(c, e) * c
        # second pass keeps the result orthogonal to working precision
        for c in cols:
            e = e - np.vdot(c, e) * c
        nrm = np.linalg.norm(e)
        if nrm < tol:
            continue
        e = e / nrm
        first = e[np.flatnonzero(np.abs(e) > tol)[0]]
        e = e * (abs(first) / first)
        cols.append(e)
    return np.stack(cols, axis=1)
