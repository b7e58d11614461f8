"""Parameter paths, generalized parameters, cashflow policies, and valuation.

A policy is an evaluable net-cashflow functional Q(q, q_dot, t) where q are
generalized parameter paths built from raw forecasts through causal kernels.
The policy's value at time t is the accumulated integral of Q rescaled to
that date; Q itself is stored already carried forward to the termination
date, so the terminal value is a plain integral of Q.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, PreconditionError
from .numerics import (
    SampledFunction,
    TimeGrid,
    differentiate_path,
    running_simpson,
    simpson_integral,
    simpson_weights,
)

# Truncating the exponential kernel at the history start must lose less than
# this fraction of its total weight.
EXP_KERNEL_TRUNCATION_TOL = 1e-6

_WINDOW_SNAP_TOL = 1e-8


class PathKind(enum.Enum):
    FORECAST = "forecast"
    OBSERVED = "observed"


@dataclass(frozen=True)
class ParameterPath:
    """A sampled parameter function with derivative samples.

    ``samples`` covers the main segment [0, t_end]; ``history`` covers the
    pre-inception window and shares the inception node with the main
    segment. Derived (generalized) paths may carry ``history=None`` when the
    kernel memory makes pre-inception values unavailable.
    """

    grid: TimeGrid
    samples: SampledFunction
    kind: PathKind = PathKind.FORECAST
    history: SampledFunction | None = None

    def __post_init__(self) -> None:
        s = self.samples
        if s.start_index != 0 or len(s.values) != self.grid.n_main_nodes:
            raise PreconditionError("samples must cover the full main segment")
        h = self.history
        if h is not None:
            if h.start_index != -self.grid.history_steps:
                raise PreconditionError("history must start at the grid history window")
            if len(h.values) != self.grid.history_steps + 1:
                raise PreconditionError("history must end at inception")
            if h.values[-1] != s.values[0]:
                raise PreconditionError("history and main segment must agree at t = 0")

    @classmethod
    def from_callable(
        cls,
        grid: TimeGrid,
        fn: Callable[[float], float],
        deriv: Callable[[float], float] | None = None,
        kind: PathKind = PathKind.FORECAST,
    ) -> "ParameterPath":
        full = SampledFunction.from_callable(
            grid, fn, deriv, start_index=-grid.history_steps
        )
        return cls._from_full(grid, full.values, full.derivs, kind)

    @classmethod
    def from_node_values(
        cls, grid: TimeGrid, full_values: np.ndarray, kind: PathKind = PathKind.FORECAST
    ) -> "ParameterPath":
        full_values = np.asarray(full_values, dtype=float)
        n_full = grid.history_steps + grid.n_main_nodes
        if len(full_values) != n_full:
            raise PreconditionError(
                f"expected {n_full} node values covering history and main segment"
            )
        derivs = differentiate_path(full_values, grid)
        return cls._from_full(grid, full_values, derivs, kind)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "ParameterPath":
        return cls.from_callable(grid, lambda t: value, deriv=lambda t: 0.0)

    @classmethod
    def _from_full(cls, grid, full_values, full_derivs, kind) -> "ParameterPath":
        hs = grid.history_steps
        samples = SampledFunction(grid, full_values[hs:], full_derivs[hs:], 0)
        history = SampledFunction(grid, full_values[: hs + 1], full_derivs[: hs + 1], -hs)
        return cls(grid, samples, kind, history)

    def full_values(self) -> np.ndarray:
        if self.history is None:
            return self.samples.values
        return np.concatenate([self.history.values[:-1], self.samples.values])

    def full_derivs(self) -> np.ndarray:
        if self.history is None:
            return self.samples.derivs
        return np.concatenate([self.history.derivs[:-1], self.samples.derivs])

    def perturbed(
        self, delta_values: np.ndarray, delta_derivs: np.ndarray
    ) -> "ParameterPath":
        """Observed path = this path + a perturbation on the main segment.

        The perturbation must vanish at inception; history samples are shared
        unchanged with this path.
        """
        delta_values = np.asarray(delta_values, dtype=float)
        delta_derivs = np.asarray(delta_derivs, dtype=float)
        if delta_values.shape != self.samples.values.shape:
            raise PreconditionError("perturbation must cover every main node")
        if delta_values[0] != 0.0:
            raise PreconditionError("perturbation must vanish at inception")
        samples = SampledFunction(
            self.grid,
            self.samples.values + delta_values,
            self.samples.derivs + delta_derivs,
            0,
        )
        return ParameterPath(self.grid, samples, PathKind.OBSERVED, self.history)


class KernelKind(enum.Enum):
    IDENTITY = "identity"
    MOVING_AVERAGE = "moving_average"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class GeneralizedParameterSpec:
    """Kernel and pointwise map turning a raw path into a generalized one."""

    kernel: KernelKind = KernelKind.IDENTITY
    window: float | None = None
    rate: float | None = None
    f_map: Callable[[float], float] | None = None

    def __post_init__(self) -> None:
        if self.kernel is KernelKind.MOVING_AVERAGE:
            if self.window is None or self.window <= 0:
                raise PreconditionError("moving-average kernel needs window > 0")
        elif self.kernel is KernelKind.EXPONENTIAL:
            if self.rate is None or self.rate <= 0:
                raise PreconditionError("exponential kernel needs rate > 0")

    @classmethod
    def identity(cls, f_map=None) -> "GeneralizedParameterSpec":
        return cls(KernelKind.IDENTITY, f_map=f_map)

    @classmethod
    def moving_average(cls, window: float, f_map=None) -> "GeneralizedParameterSpec":
        return cls(KernelKind.MOVING_AVERAGE, window=window, f_map=f_map)

    @classmethod
    def exponential(cls, rate: float, f_map=None) -> "GeneralizedParameterSpec":
        return cls(KernelKind.EXPONENTIAL, rate=rate, f_map=f_map)


@dataclass(frozen=True)
class CashflowPolicy:
    """Net adjusted cashflow Q(q, q_dot, t) as a pure evaluator.

    ``evaluator`` takes the generalized parameter vector, its derivative
    vector, and the time, and returns the net cashflow carried forward to
    the termination date. ``uses_derivatives`` declares whether the
    evaluator reads q_dot at all.
    """

    evaluator: Callable[[np.ndarray, np.ndarray, float], float]
    n_params: int
    uses_derivatives: bool

    def __post_init__(self) -> None:
        if self.n_params < 1:
            raise PreconditionError("policy needs at least one parameter")


@dataclass(frozen=True)
class ValuationConfig:
    """Accumulation settings: surpluses and deficits grow at ``growth_rate``."""

    growth_rate: float = 0.0
    discount_convention: str = "future-value-at-T"

    def __post_init__(self) -> None:
        if self.growth_rate < 0:
            raise PreconditionError("growth_rate must be non-negative")
        if self.discount_convention != "future-value-at-T":
            raise PreconditionError("only the future-value-at-T convention is supported")


def _mapped(values: np.ndarray, f_map) -> np.ndarray:
    if f_map is None:
        return values
    return np.array([float(f_map(v)) for v in values])


def build_generalized_path(
    p: ParameterPath, spec: GeneralizedParameterSpec
) -> ParameterPath:
    """Turn a raw parameter path into its generalized path.

    The identity kernel with no pointwise map returns ``p`` unchanged. The
    moving-average kernel averages over the trailing window (which must be a
    whole number of grid steps); the exponential kernel weights the past by
    ``rate * exp(-rate * age)`` truncated at the history start. Kernel
    outputs get derivative samples from the finite-difference stencils.
    """
    grid = p.grid
    if spec.kernel is KernelKind.IDENTITY:
        if spec.f_map is None:
            return p
        full = _mapped(p.full_values(), spec.f_map)
        derivs = differentiate_path(full, grid)
        return ParameterPath._from_full(grid, full, derivs, p.kind)

    if spec.kernel is KernelKind.MOVING_AVERAGE:
        m_exact = spec.window / grid.h_t
        m = round(m_exact)
        if m < 1 or abs(m_exact - m) > _WINDOW_SNAP_TOL * max(1.0, m_exact):
            raise PreconditionError(
                "moving-average window must be a whole number of grid steps"
            )
        if grid.history_steps < m:
            raise PreconditionError("history shorter than kernel memory")
        full = _mapped(p.full_values(), spec.f_map)
        w = simpson_weights(m, grid.h_t)
        width = m * grid.h_t
        corr = np.correlate(full, w, mode="valid")
        lo = grid.history_steps - m
        q_main = corr[lo : lo + grid.n_main_nodes] / width
        samples = SampledFunction(grid, q_main, differentiate_path(q_main, grid), 0)
        return ParameterPath(grid, samples, p.kind, history=None)

    if spec.kernel is KernelKind.EXPONENTIAL:
        lam = spec.rate
        horizon = grid.history_steps * grid.h_t
        if math.exp(-lam * horizon) >= EXP_KERNEL_TRUNCATION_TOL:
            needed = math.log(1.0 / EXP_KERNEL_TRUNCATION_TOL) / lam
            raise PreconditionError(
                "history shorter than kernel memory "
                f"(window {horizon:g} < required {needed:g})"
            )
        full = _mapped(p.full_values(), spec.f_map)
        times = grid.full_times()
        hs = grid.history_steps
        q_main = np.empty(grid.n_main_nodes)
        for i in range(grid.n_main_nodes):
            k = hs + i
            w = simpson_weights(k, grid.h_t)
            decay = np.exp(lam * (times[: k + 1] - times[k]))
            q_main[i] = lam * float(np.dot(w, full[: k + 1] * decay))
        samples = SampledFunction(grid, q_main, differentiate_path(q_main, grid), 0)
        return ParameterPath(grid, samples, p.kind, history=None)

    raise PreconditionError(f"unknown kernel {spec.kernel!r}")


def _stack_main(q_paths: Sequence[ParameterPath]):
    grid = q_paths[0].grid
    for q in q_paths[1:]:
        if not q.grid.same_lattice(grid):
            raise PreconditionError("all parameter paths must share one lattice")
    qmat = np.column_stack([q.samples.values for q in q_paths])
    qdmat = np.column_stack([q.samples.derivs for q in q_paths])
    return grid, qmat, qdmat, grid.main_times()


def evaluate_cashflow(
    policy: CashflowPolicy, q_paths: Sequence[ParameterPath]
) -> np.ndarray:
    """Q at every main node along the given generalized paths."""
    grid, qmat, qdmat, times = _stack_main(q_paths)
    if len(q_paths) != policy.n_params:
        raise PreconditionError("path count must match the policy's parameter count")
    out = np.empty(len(times))
    for i, t in enumerate(times):
        v = float(policy.evaluator(qmat[i], qdmat[i], float(t)))
        if not np.isfinite(v):
            raise NumericalError(f"policy evaluation non-finite at t'={t:.6g}")
        out[i] = v
    return out


def policy_value(
    policy: CashflowPolicy,
    q_paths: Sequence[ParameterPath],
    config: ValuationConfig,
    at: float,
) -> float:
    """Accumulated net value of the policy at a grid node in [0, t_end].

    Q is carried forward to the termination date by convention, so
    V(at) = exp(r * (at - t_end)) * integral of Q over [0, at]; V(0) = 0.
    """
    grid, qmat, qdmat, times = _stack_main(q_paths)
    if len(q_paths) != policy.n_params:
        raise PreconditionError("path count must match the policy's parameter count")
    idx = grid.node_index(at)
    if idx < 0:
        raise PreconditionError("valuation time must lie in [0, t_end]")
    cash = np.empty(idx + 1)
    for i in range(idx + 1):
        t = float(times[i])
        v = float(policy.evaluator(qmat[i], qdmat[i], t))
        if not np.isfinite(v):
            raise NumericalError(f"policy evaluation non-finite at t'={t:.6g}")
        cash[i] = v
    integral = simpson_integral(cash, grid.h_t)
    return math.exp(config.growth_rate * (at - grid.t_end)) * integral


def running_value(
    policy: CashflowPolicy, q_paths: Sequence[ParameterPath], config: ValuationConfig
) -> np.ndarray:
    """V at every main node; entry i equals policy_value at node i."""
    grid = q_paths[0].grid
    cash = evaluate_cashflow(policy, q_paths)
    prefix = running_simpson(cash, grid.h_t)
    factors = np.exp(config.growth_rate * (grid.main_times() - grid.t_end))
    return prefix * factors


def check_derivative_independence(
    policy: CashflowPolicy,
    q_paths: Sequence[ParameterPath],
    probes: int = 8,
    seed: int = 0,
) -> bool:
    """True iff the evaluator ignores q_dot at randomly probed nodes.

    Used to validate the ``uses_derivatives`` flag: the derivative samples
    at ``probes`` random nodes are replaced with random values and the
    evaluator output must be unchanged to 1e-12 relative.
    """
    if probes < 3:
        raise PreconditionError("need at least 3 probes")
    grid, qmat, qdmat, times = _stack_main(q_paths)
    rng = np.random.default_rng(seed)
    nodes = rng.integers(0, len(times), size=probes)
    for i in nodes:
        t = float(times[i])
        base = float(policy.evaluator(qmat[i], qdmat[i], t))
        scrambled = rng.uniform(-1.0, 1.0, size=policy.n_params) * (
            1.0 + np.abs(qdmat[i])
        )
        alt = float(policy.evaluator(qmat[i], scrambled, t))
        if abs(alt - base) > 1e-12 * max(1.0, abs(base)):
            return False
    return True
