"""Dense complex linear algebra for small qubit registers.

Everything operates on plain ``numpy`` arrays (``complex128``) or on
:class:`DensityMatrix` values, which tag a matrix with an ordered wire
layout.

Ordering convention: the first wire of a layout is the most significant
index block, i.e. a layout ``(a, b)`` enumerates the basis as ``|a b>``
with ``a`` varying slowest.  ``tensor_product(A, B)`` follows the same
rule (``A`` on the more significant factor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VALIDITY_ATOL = 1e-10   # hermiticity / trace / unitarity checks
RECON_ATOL = 1e-9       # reconstruction checks and eigenvalue floors


class DimensionMismatchError(ValueError):
    """Operands with incompatible dimensions or layouts."""


class UnknownWireError(ValueError):
    """A wire label that is not present in a layout."""


class PSDViolationError(ValueError):
    """Input is not positive semidefinite within tolerance."""


class InvalidStateError(ValueError):
    """A matrix that violates the density-matrix invariants."""

    def __init__(self, invariant: str, message: str):
        super().__init__(message)
        self.invariant = invariant


@dataclass(frozen=True)
class Wire:
    """A register wire: a label plus its Hilbert-space dimension."""

    label: str
    dim: int = 2


def as_complex_matrix(m) -> np.ndarray:
    """Coerce input to a square complex matrix, raising on bad shape."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


def is_hermitian(m, atol: float = VALIDITY_ATOL) -> bool:
    a = as_complex_matrix(m)
    return bool(np.max(np.abs(a - a.conj().T)) <= atol)


def is_unitary(m, atol: float = VALIDITY_ATOL) -> bool:
    a = as_complex_matrix(m)
    return bool(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))) <= atol)


def is_psd(m, atol: float = VALIDITY_ATOL) -> bool:
    a = as_complex_matrix(m)
    if not is_hermitian(a, atol):
        return False
    return bool(np.linalg.eigvalsh(a).min() >= -atol)


def layout_dim(layout) -> int:
    return math.prod(w.dim for w in layout)


def wire_index(layout, label: str) -> int:
    for i, w in enumerate(layout):
        if w.label == label:
            return i
    raise UnknownWireError(f"wire {label!r} not in layout {[w.label for w in layout]}")


class DensityMatrix:
    """Hermitian, unit-trace, PSD matrix over an ordered wire register.

    Instances are immutable: the stored matrix is a read-only copy.
    Construction validates trace (1e-10), hermiticity (1e-10), the
    eigenvalue floor (>= -1e-9) and that the wire dimensions multiply
    to the matrix dimension.
    """

    __slots__ = ("matrix", "layout")

    def __init__(self, matrix, layout):
        m = as_complex_matrix(matrix)
        layout = tuple(layout)
        if layout_dim(layout) != m.shape[0]:
            raise InvalidStateError(
                "layout",
                f"layout dims {[w.dim for w in layout]} do not multiply to {m.shape[0]}",
            )
        tr = np.trace(m)
        if abs(tr - 1.0) > VALIDITY_ATOL:
            raise InvalidStateError("trace", f"trace {tr} deviates from 1 beyond 1e-10")
        if not is_hermitian(m):
            raise InvalidStateError("hermitian", "matrix is not Hermitian within 1e-10")
        lo = np.linalg.eigvalsh(m).min()
        if lo < -RECON_ATOL:
            raise InvalidStateError("psd", f"minimum eigenvalue {lo} below -1e-9")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "layout", layout)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def wire_labels(self) -> tuple[str, ...]:
        return tuple(w.label for w in self.layout)

    @classmethod
    def from_pure(cls, amplitudes, layout) -> "DensityMatrix":
        """Projector onto a normalized state vector."""
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(np.outer(v, v.conj()), layout)

    def __repr__(self):
        wires = " ".join(f"{w.label}:{w.dim}" for w in self.layout)
        return f"DensityMatrix(dim={self.dim}, wires=[{wires}])"


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product with the first argument as the more significant block."""
    return np.kron(as_complex_matrix(a), as_complex_matrix(b))


def partial_trace_matrix(mat, dims, axis: int) -> np.ndarray:
    """Trace out one tensor factor of a matrix over ``dims``.

    ``dims`` lists the factor dimensions in layout order; the remaining
    factors keep their relative order.
    """
    mat = as_complex_matrix(mat)
    dims = list(dims)
    m = len(dims)
    if mat.shape[0] != math.prod(dims):
        raise DimensionMismatchError(f"dims {dims} do not match matrix dim {mat.shape[0]}")
    t = mat.reshape(dims + dims)
    t = np.trace(t, axis1=axis, axis2=axis + m)
    rest = math.prod(d for i, d in enumerate(dims) if i != axis)
    return t.reshape(rest, rest)


def partial_trace(rho: DensityMatrix, wire: str) -> DensityMatrix:
    """Reduced state after tracing out one wire of the register."""
    idx = wire_index(rho.layout, wire)
    dims = [w.dim for w in rho.layout]
    red = partial_trace_matrix(rho.matrix, dims, idx)
    rest = tuple(w for i, w in enumerate(rho.layout) if i != idx)
    if not rest:
        # tracing the only wire: 1x1 matrix [trace]
        return DensityMatrix(red.reshape(1, 1), (Wire("scalar", 1),))
    return DensityMatrix(red, rest)


def psd_sqrt(m, atol: float = RECON_ATOL) -> np.ndarray:
    """Unique PSD square root via eigendecomposition.

    Eigenvalues in ``[-atol, 0)`` are clamped to zero; anything below
    ``-atol`` raises :class:`PSDViolationError`.
    """
    a = as_complex_matrix(m)
    if not is_hermitian(a):
        raise PSDViolationError("psd_sqrt requires a Hermitian matrix")
    vals, vecs = np.linalg.eigh(a)
    if vals.min() < -atol:
        raise PSDViolationError(f"matrix has eigenvalue {vals.min()} below {-atol}")
    root = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    return (root + root.conj().T) / 2.0


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the trace norm of rho - sigma; in [0, 1] for states."""
    if rho.dim != sigma.dim or rho.layout != sigma.layout:
        raise DimensionMismatchError(
            f"states differ in dim/layout: {rho!r} vs {sigma!r}"
        )
    eigs = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(0.5 * np.abs(eigs).sum())


def _flat_permutation(dims, order) -> np.ndarray:
    """Index map from layout-order flat indices to ``order``-first flat indices."""
    m = len(dims)
    total = math.prod(dims)
    place = [math.prod(dims[i + 1:]) for i in range(m)]
    pdims = [dims[o] for o in order]
    pplace = [math.prod(pdims[j + 1:]) for j in range(m)]
    idx = np.arange(total)
    nu = np.zeros(total, dtype=np.intp)
    for j, o in enumerate(order):
        nu += ((idx // place[o]) % dims[o]) * pplace[j]
    return nu


def embed_operator(op, positions, dims) -> np.ndarray:
    """Lift an operator acting on the factors at ``positions`` to the full space.

    ``positions`` gives the target factors in the operator's own order
    (its first index block corresponds to ``positions[0]``).
    """
    op = as_complex_matrix(op)
    dims = list(dims)
    positions = list(positions)
    sub = math.prod(dims[p] for p in positions)
    if op.shape[0] != sub:
        raise DimensionMismatchError(
            f"operator dim {op.shape[0]} does not match target dims product {sub}"
        )
    rest = [i for i in range(len(dims)) if i not in positions]
    rest_dim = math.prod(dims[i] for i in rest) if rest else 1
    full = np.kron(op, np.eye(rest_dim, dtype=complex))
    nu = _flat_permutation(dims, positions + rest)
    return full[np.ix_(nu, nu)]


def reset_factor(mat, dims, axis: int) -> np.ndarray:
    """Trace out one factor and re-tensor |0><0| at the same position."""
    dims = list(dims)
    red = partial_trace_matrix(mat, dims, axis)
    proj = np.zeros((dims[axis], dims[axis]), dtype=complex)
    proj[0, 0] = 1.0
    rest = [i for i in range(len(dims)) if i != axis]
    full = np.kron(red, proj)
    nu = _flat_permutation(dims, rest + [axis])
    return full[np.ix_(nu, nu)]
