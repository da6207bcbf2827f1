"""Kraus channels: construction, validation, application and algebra.

Superoperators use the column-stacking convention throughout: with
``vec(rho)`` stacking columns, a channel with operators ``{K}`` has the
matrix ``sum_K conj(K) (x) K`` acting as ``vec(rho') = S vec(rho)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .qmath import (
    DensityMatrix,
    DimensionMismatchError,
    PSDViolationError,
    as_complex_matrix,
    psd_sqrt,
)

COMPLETENESS_ATOL = 1e-9
CONDITION_LIMIT = 1e12

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class ParameterError(ValueError):
    """Channel parameter outside its admissible range."""


class InvalidChannelError(ValueError):
    """Kraus operators that do not satisfy the completeness relation."""


class SingularMapError(ValueError):
    """A superoperator too ill-conditioned to invert."""


class DecompositionError(ValueError):
    """Sequential factorization impossible for the given operators."""


class ChannelParams:
    """Damping strength and the rotation angle realizing it.

    The two settings are locked together by ``gamma = sin(theta/2)``;
    constructing from either fills in the other.
    """

    __slots__ = ("gamma", "theta")

    def __init__(self, gamma: float | None = None, theta: float | None = None):
        if gamma is None and theta is None:
            raise ParameterError("one of gamma or theta is required")
        if theta is not None and not 0.0 <= theta < 2.0 * math.pi:
            raise ParameterError(f"theta {theta} outside [0, 2*pi)")
        if gamma is None:
            gamma = math.sin(theta / 2.0)
        if not 0.0 <= gamma <= 1.0:
            raise ParameterError(f"gamma {gamma} outside [0, 1]")
        if theta is None:
            theta = 2.0 * math.asin(gamma)
        if abs(gamma - math.sin(theta / 2.0)) > 1e-12:
            raise ParameterError(
                f"gamma {gamma} and theta {theta} violate gamma = sin(theta/2)"
            )
        object.__setattr__(self, "gamma", float(gamma))
        object.__setattr__(self, "theta", float(theta))

    def __setattr__(self, name, value):
        raise AttributeError("ChannelParams is immutable")

    @classmethod
    def from_gamma(cls, gamma: float) -> "ChannelParams":
        return cls(gamma=gamma)

    @classmethod
    def from_theta(cls, theta: float) -> "ChannelParams":
        return cls(theta=theta)

    def __repr__(self):
        return f"ChannelParams(gamma={self.gamma!r}, theta={self.theta!r})"


class KrausChannel:
    """Ordered set of Kraus operators on a fixed dimension."""

    __slots__ = ("dim", "operators", "label")

    def __init__(self, dim: int, operators, label: str = ""):
        ops = []
        for op in operators:
            a = as_complex_matrix(op)
            if a.shape[0] != dim:
                raise DimensionMismatchError(
                    f"operator dim {a.shape[0]} does not match channel dim {dim}"
                )
            a = a.copy()
            a.flags.writeable = False
            ops.append(a)
        if not ops:
            raise InvalidChannelError("a channel needs at least one operator")
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "operators", tuple(ops))
        object.__setattr__(self, "label", str(label))

    def __setattr__(self, name, value):
        raise AttributeError("KrausChannel is immutable")

    def __len__(self):
        return len(self.operators)

    def __repr__(self):
        return f"KrausChannel({self.label!r}, dim={self.dim}, l={len(self)})"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the completeness check sum_i K_i^dag K_i = I."""

    deviation: float
    passed: bool
    tolerance: float = COMPLETENESS_ATOL


@dataclass(frozen=True)
class Superoperator:
    """n^2 x n^2 matrix on column-stacked density matrices."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        m = as_complex_matrix(self.matrix)
        if m.shape[0] != self.dim * self.dim:
            raise DimensionMismatchError(
                f"superoperator matrix dim {m.shape[0]} != {self.dim}^2"
            )
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def vec(matrix) -> np.ndarray:
    """Column-stacking vectorization."""
    return as_complex_matrix(matrix).T.reshape(-1)


def unvec(vector, dim: int) -> np.ndarray:
    return np.asarray(vector, dtype=complex).reshape(dim, dim).T


def validate(ch: KrausChannel) -> ValidationReport:
    """Report the Frobenius deviation of sum K^dag K from the identity."""
    acc = np.zeros((ch.dim, ch.dim), dtype=complex)
    for op in ch.operators:
        acc += op.conj().T @ op
    dev = float(np.linalg.norm(acc - np.eye(ch.dim)))
    return ValidationReport(deviation=dev, passed=dev <= COMPLETENESS_ATOL)


def _require_valid(ch: KrausChannel):
    report = validate(ch)
    if not report.passed:
        raise InvalidChannelError(
            f"channel {ch.label!r} completeness deviation {report.deviation:.3e} "
            f"exceeds {COMPLETENESS_ATOL}"
        )


def _drop_zero_operators(ops):
    kept = [op for op in ops if np.linalg.norm(op) > 0.0]
    return kept if kept else list(ops)


def _as_params(p) -> ChannelParams:
    if isinstance(p, ChannelParams):
        return p
    return ChannelParams.from_gamma(float(p))


def amplitude_damping(p: ChannelParams | float) -> KrausChannel:
    """Energy-loss channel |1> -> |0> of strength gamma.

    Operators: ``K0 = |0><0| + sqrt(1-gamma^2)|1><1|`` and
    ``K1 = gamma |0><1|``.  Zero operators (gamma = 0) are dropped.
    """
    gamma = _as_params(p).gamma
    k0 = np.diag([1.0, math.sqrt(1.0 - gamma * gamma)]).astype(complex)
    k1 = np.zeros((2, 2), dtype=complex)
    k1[0, 1] = gamma
    ops = _drop_zero_operators([k0, k1])
    return KrausChannel(2, ops, label=f"amplitude-damping(gamma={gamma:.6g})")


def dephasing(p: ChannelParams | float) -> KrausChannel:
    """Phase-flip channel: ``K0 = sqrt(1-gamma^2) I``, ``K1 = gamma Z``.

    One application multiplies the off-diagonal element by ``1 - 2 gamma^2``.
    """
    gamma = _as_params(p).gamma
    k0 = math.sqrt(1.0 - gamma * gamma) * PAULI_I
    k1 = gamma * PAULI_Z
    ops = _drop_zero_operators([k0, k1])
    return KrausChannel(2, ops, label=f"dephasing(gamma={gamma:.6g})")


def pauli_channel(px: float, py: float, pz: float) -> KrausChannel:
    """Mixture of Pauli errors with the given probabilities."""
    probs = (px, py, pz)
    if any(p < 0 for p in probs):
        raise ParameterError(f"negative probability in {probs}")
    total = px + py + pz
    if total > 1.0:
        raise ParameterError(f"probabilities {probs} sum beyond 1")
    ops = [
        math.sqrt(1.0 - total) * PAULI_I,
        math.sqrt(px) * PAULI_X,
        math.sqrt(py) * PAULI_Y,
        math.sqrt(pz) * PAULI_Z,
    ]
    ops = _drop_zero_operators(ops)
    return KrausChannel(2, ops, label=f"pauli({px:.6g},{py:.6g},{pz:.6g})")


def apply_channel(ch: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    """Apply ``rho -> sum_i K_i rho K_i^dag``."""
    if ch.dim != rho.dim:
        raise DimensionMismatchError(
            f"channel dim {ch.dim} does not match state dim {rho.dim}"
        )
    _require_valid(ch)
    out = np.zeros_like(rho.matrix)
    for op in ch.operators:
        out = out + op @ rho.matrix @ op.conj().T
    return DensityMatrix(out, rho.layout)


def environment_dim(num_operators: int) -> int:
    """Smallest power of two able to index the Kraus operators."""
    if num_operators < 1:
        raise ParameterError("need at least one operator")
    return 1 << max(0, (num_operators - 1).bit_length())


def stinespring_dilate(ch: KrausChannel) -> np.ndarray:
    """Unitary on system (x) environment realizing the channel.

    The environment has the smallest power-of-two dimension that can
    index the operators; the prescribed isometry block sends
    ``|s>|0>_E`` to ``sum_i (K_i |s>) (x) |i>_E`` and the remaining
    columns are completed by Gram-Schmidt over canonical basis vectors,
    in ascending index order, so the result is deterministic.
    """
    _require_valid(ch)
    n = ch.dim
    ed = environment_dim(len(ch.operators))
    big = n * ed
    u = np.zeros((big, big), dtype=complex)
    prescribed = []
    for s in range(n):
        col = np.zeros(big, dtype=complex)
        for i, op in enumerate(ch.operators):
            # system index r, environment index i -> flat r*ed + i
            col[i::ed] += op[:, s]
        u[:, s * ed] = col
        prescribed.append(col)
    if ed == 1:
        return u
    basis = list(prescribed)
    free_cols = [s * ed + j for s in range(n) for j in range(1, ed)]
    canon = 0
    for target in free_cols:
        while True:
            if canon >= big:
                raise InvalidChannelError("failed to complete dilation unitary")
            cand = np.zeros(big, dtype=complex)
            cand[canon] = 1.0
            canon += 1
            for b in basis:
                cand = cand - b * (b.conj() @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-7:
                cand = cand / norm
                break
        u[:, target] = cand
        basis.append(cand)
    return u


def to_superoperator(ch: KrausChannel) -> Superoperator:
    """Column-stacking matrix form ``sum_i conj(K_i) (x) K_i``."""
    _require_valid(ch)
    n = ch.dim
    s = np.zeros((n * n, n * n), dtype=complex)
    for op in ch.operators:
        s += np.kron(op.conj(), op)
    return Superoperator(matrix=s, dim=n)


def compose(second: Superoperator, first: Superoperator) -> Superoperator:
    """Map applying ``first`` and then ``second``."""
    if second.dim != first.dim:
        raise DimensionMismatchError(
            f"superoperator dims differ: {second.dim} vs {first.dim}"
        )
    return Superoperator(matrix=second.matrix @ first.matrix, dim=first.dim)


def intermediate_map(phi_t: Superoperator, phi_s: Superoperator) -> Superoperator:
    """The two-time map ``phi_t . phi_s^{-1}``."""
    if phi_t.dim != phi_s.dim:
        raise DimensionMismatchError(
            f"superoperator dims differ: {phi_t.dim} vs {phi_s.dim}"
        )
    cond = np.linalg.cond(phi_s.matrix)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularMapError(
            f"map is not invertible (condition number {cond:.3e} beyond {CONDITION_LIMIT:.0e})"
        )
    return Superoperator(
        matrix=phi_t.matrix @ np.linalg.inv(phi_s.matrix), dim=phi_t.dim
    )


def choi_matrix(phi: Superoperator) -> np.ndarray:
    """Reshuffle of the superoperator; PSD iff the map is completely positive."""
    n = phi.dim
    c = phi.matrix.reshape(n, n, n, n).swapaxes(0, 3).reshape(n * n, n * n)
    # hermitize: meaningful witnesses assume a hermiticity-preserving map
    return (c + c.conj().T) / 2.0


def cp_witness(phi: Superoperator) -> float:
    """Minimum Choi eigenvalue; >= -1e-9 certifies complete positivity."""
    return float(np.linalg.eigvalsh(choi_matrix(phi)).min())


def sequential_factors(ch: KrausChannel, mode: str = "exact") -> list[KrausChannel]:
    """Split a channel into one two-operator factor per Kraus operator.

    Factor ``i`` is ``{K_i, K_i'}`` with ``K_i' = sqrt(I - K_i^dag K_i)``
    in ``exact`` mode (each factor is exactly trace preserving) or the
    expansion ``K_i' = I - K_i^dag K_i / 2`` in ``first-order`` mode.
    Composing the exact factors reproduces the channel up to second
    order in the operator weights.
    """
    if mode not in ("exact", "first-order"):
        raise ParameterError(f"unknown mode {mode!r}")
    eye = np.eye(ch.dim, dtype=complex)
    factors = []
    for i, op in enumerate(ch.operators):
        gram = op.conj().T @ op
        if mode == "exact":
            try:
                comp = psd_sqrt(eye - gram)
            except PSDViolationError as exc:
                raise DecompositionError(
                    f"operator {i} of {ch.label!r} has singular value above 1: {exc}"
                ) from exc
        else:
            comp = eye - 0.5 * gram
        factors.append(
            KrausChannel(ch.dim, [op, comp], label=f"{ch.label}#factor{i}")
        )
    return factors


def scaled_unitary_part(op) -> tuple[float, np.ndarray] | None:
    """Split ``op = w U`` with ``U`` unitary, or ``None`` if not of that form.

    A global phase is folded into ``U`` being reported up to phase as the
    nearest Pauli by callers; here ``U`` is simply ``op / w``.
    """
    a = as_complex_matrix(op)
    gram = a.conj().T @ a
    w2 = float(np.real(np.trace(gram))) / a.shape[0]
    if w2 <= 0.0:
        return 0.0, np.eye(a.shape[0], dtype=complex)
    if np.max(np.abs(gram - w2 * np.eye(a.shape[0]))) > 1e-10:
        return None
    w = math.sqrt(min(w2, 1.0))
    return w, a / math.sqrt(w2)


def save_channel(ch: KrausChannel, path) -> None:
    """Write the channel spec file: dim, label, row-major [re, im] pairs."""
    payload = {
        "dim": ch.dim,
        "label": ch.label,
        "operators": [
            [[float(z.real), float(z.imag)] for z in op.reshape(-1)]
            for op in ch.operators
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_channel(path) -> KrausChannel:
    """Read a channel spec file written by :func:`save_channel`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("dim", "operators"):
        if key not in payload:
            raise InvalidChannelError(f"channel file missing key {key!r}")
    unknown = set(payload) - {"dim", "label", "operators"}
    if unknown:
        raise InvalidChannelError(f"channel file has unknown keys {sorted(unknown)}")
    dim = int(payload["dim"])
    ops = []
    for flat in payload["operators"]:
        if len(flat) != dim * dim:
            raise InvalidChannelError(
                f"operator has {len(flat)} entries, expected {dim * dim}"
            )
        vals = [complex(re, im) for re, im in flat]
        ops.append(np.array(vals, dtype=complex).reshape(dim, dim))
    return KrausChannel(dim, ops, label=str(payload.get("label", "")))
