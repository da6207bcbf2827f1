"""Memory diagnostics on trajectories and circuit resource accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import StepCircuit, compile_step, run_compiled
from .engine import Trajectory, _initial_full_matrix, _reduced_system
from .qmath import DensityMatrix, DimensionMismatchError, trace_distance

MONOTONE_ATOL = 1e-9


@dataclass(frozen=True)
class MonotonicityVerdict:
    """Whether an observable series ever rises beyond tolerance.

    ``max_revival`` is the largest single-step increase (negative when the
    series strictly decreases everywhere).
    """

    monotone: bool
    first_violation: int | None
    max_revival: float


def monotonicity_check(
    traj: Trajectory, observable: str, tolerance: float = MONOTONE_ATOL
) -> MonotonicityVerdict:
    if tolerance < 0:
        raise ValueError(f"tolerance {tolerance} must be >= 0")
    series = traj.series(observable)
    first = None
    max_rev = -math.inf
    for i in range(1, len(series)):
        diff = series[i] - series[i - 1]
        max_rev = max(max_rev, diff)
        if diff > tolerance and first is None:
            first = i
    return MonotonicityVerdict(
        monotone=first is None, first_violation=first, max_revival=max_rev
    )


def blp_witness(
    step: StepCircuit, rho_a: DensityMatrix, rho_b: DensityMatrix, steps: int
) -> float:
    """Summed trace-distance revivals between two evolving states.

    Zero (within tolerance) for memoryless steps, since each application is
    a contraction of the pair; positive revivals flag information backflow.
    """
    if rho_a.layout != rho_b.layout:
        raise DimensionMismatchError("the two initial states must share a layout")
    dims, compiled = compile_step(step)
    mats = [_initial_full_matrix(step, rho_a), _initial_full_matrix(step, rho_b)]
    layout = rho_a.layout

    def distance() -> float:
        red = [
            DensityMatrix(_reduced_system(m, step), layout) for m in mats
        ]
        return trace_distance(red[0], red[1])

    prev = distance()
    total = 0.0
    for _ in range(steps):
        mats = [run_compiled(compiled, dims, m) for m in mats]
        cur = distance()
        if cur > prev:
            total += cur - prev
        prev = cur
    return total


@dataclass(frozen=True)
class ResourceReport:
    """Counted resources of a step circuit plus comparison metadata.

    ``gates_per_step`` counts every directive (trace-reset and SWAP are one
    each); ``unitary_gates_per_step`` excludes resets, which matches a
    two-gates-per-operator count for the sequential builders.
    """

    qubit_count: int
    gates_per_step: int
    unitary_gates_per_step: int
    total_gates: int
    method: str
    k: int
    l: int

    def as_text(self) -> str:
        lines = [
            f"method = {self.method}",
            f"k = {self.k}",
            f"l = {self.l}",
            f"qubit_count = {self.qubit_count}",
            f"gates_per_step = {self.gates_per_step}",
            f"unitary_gates_per_step = {self.unitary_gates_per_step}",
            f"total_gates = {self.total_gates}",
        ]
        return "\n".join(lines) + "\n"


_METHODS = ("direct-dilation", "sequential")


def formula_qubit_count(method: str, system_qubits: int, k: int, l: int) -> int:
    """Qubit counts the two architectures are expected to need."""
    if method == "sequential":
        return system_qubits + k + 1
    if method == "direct-dilation":
        return system_qubits + k * max(0, math.ceil(math.log2(max(l, 1))))
    raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")


def resource_count(
    step: StepCircuit, steps: int, method: str, k: int, l: int
) -> ResourceReport:
    """Count the wires and ops of a step and tag them for comparison."""
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {_METHODS}")
    qubits = 0
    for w in step.layout:
        nq = int(round(math.log2(w.dim)))
        if 2**nq != w.dim:
            raise ValueError(f"wire {w.label!r} dim {w.dim} is not a power of two")
        qubits += nq
    per_step = len(step.ops)
    resets = sum(1 for op in step.ops if op.kind == "trace-reset")
    return ResourceReport(
        qubit_count=qubits,
        gates_per_step=per_step,
        unitary_gates_per_step=per_step - resets,
        total_gates=steps * per_step,
        method=method,
        k=k,
        l=l,
    )
