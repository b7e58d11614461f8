"""Toy social-security model: fixed per-capita contribution and benefit,
one parameter (the retiree share), with closed forms for the deficit, the
robust retrofit, and the required pay-in under either regime.

Population is normalized to one, so cashflows are per-capita rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CashflowPolicy, ParameterPath, PathKind
from .errors import PreconditionError
from .numerics import SampledFunction, TimeGrid

# Below this rate the closed forms switch to series expansions to avoid
# catastrophic cancellation in (exp(rt) - 1 - rt) / r^2.
SERIES_SWITCH_RATE = 1e-8


@dataclass(frozen=True)
class ToySSParams:
    """Contribution/benefit rates, horizon, growth rate, and drift."""

    c_in: float = 1.0
    c_out: float = 3.0
    t_end: float = 10.0
    r: float = 0.0
    epsilon: float = 0.01

    def __post_init__(self) -> None:
        if self.c_in <= 0 or self.c_out <= 0:
            raise PreconditionError("c_in and c_out must be positive")
        if self.t_end <= 0:
            raise PreconditionError("t_end must be positive")
        if self.r < 0:
            raise PreconditionError("growth rate must be non-negative")


def forecast_share(params: ToySSParams) -> float:
    """Retiree share balancing inflows and outflows at every instant."""
    return params.c_in / (params.c_in + params.c_out)


def deficit_closed_form(params: ToySSParams, t: float) -> float:
    """Accumulated value at time t when the share drifts as eps * t.

    Negative and growing in magnitude: more retirees than forecast means a
    deficit that compounds.
    """
    if not 0 <= t <= params.t_end:
        raise PreconditionError("t must lie in [0, t_end]")
    eps = params.epsilon
    csum = params.c_in + params.c_out
    r = params.r
    if r < SERIES_SWITCH_RATE:
        # (exp(rt) - 1 - rt) / r^2 = t^2/2 * (1 + rt/3 + O((rt)^2))
        return -eps * csum * 0.5 * t * t * (1.0 + r * t / 3.0)
    return -eps * csum / (r * r) * (math.exp(r * t) - 1.0 - r * t)


def _carry(params: ToySSParams, t: float) -> float:
    return math.exp(params.r * (params.t_end - t))


def base_policy(params: ToySSParams) -> CashflowPolicy:
    """Derivative-free net cashflow of the toy model (single parameter)."""
    c_in, c_out = params.c_in, params.c_out

    def evaluator(q, q_dot, t):
        p = float(q[0])
        return (c_in * (1.0 - p) - c_out * p) * _carry(params, t)

    return CashflowPolicy(evaluator, 1, uses_derivatives=False)


def _memory_coeff(params: ToySSParams, t: float) -> float:
    """(1 - exp(-r (T - t))) / r, with the r -> 0 series limit."""
    tau = params.t_end - t
    r = params.r
    if r < SERIES_SWITCH_RATE:
        return tau * (1.0 - 0.5 * r * tau)
    return (1.0 - math.exp(-r * tau)) / r


def robust_policy_closed_form(params: ToySSParams) -> CashflowPolicy:
    """The worked robust retrofit of the toy model, in closed form."""
    c_in, c_out = params.c_in, params.c_out
    csum = c_in + c_out

    def evaluator(q, q_dot, t):
        p = float(q[0])
        pdot = float(q_dot[0])
        inner = c_in * (1.0 - p) - c_out * p + csum * _memory_coeff(params, t) * pdot
        return inner * _carry(params, t)

    return CashflowPolicy(evaluator, 1, uses_derivatives=True)


def a_profile_closed_form(params: ToySSParams, t: float) -> float:
    """The retrofit's q_dot coefficient: (c_in + c_out)(exp(r(T-t)) - 1)/r."""
    return (params.c_in + params.c_out) * _memory_coeff(params, t) * _carry(params, t)


class PayInQuote(NamedTuple):
    leading: float
    exact: float


def pay_in_pg(params: ToySSParams, delta_p: float) -> PayInQuote:
    """Per-capita pay-in under the match-outflows-now regime.

    Returns the leading-order series and the exact value; they agree to
    second order in the share error.
    """
    p_star = forecast_share(params)
    p_hat = p_star + delta_p
    if p_hat >= 1.0:
        raise PreconditionError("retiree share saturated")
    csum = params.c_in + params.c_out
    leading = params.c_in + csum * csum / params.c_out * delta_p
    exact = params.c_out * p_hat / (1.0 - p_hat)
    return PayInQuote(leading=leading, exact=exact)


def pay_in_robust(params: ToySSParams, delta_p_dot: float, t: float) -> float:
    """Leading-order pay-in under the retrofit: extrapolates the current
    divergence rate over the remaining horizon."""
    if not 0 <= t <= params.t_end:
        raise PreconditionError("t must lie in [0, t_end]")
    csum = params.c_in + params.c_out
    return params.c_in + csum * csum / params.c_out * (params.t_end - t) * delta_p_dot


def default_grid(params: ToySSParams, n_steps: int = 1000) -> TimeGrid:
    return TimeGrid(params.t_end, n_steps, history_steps=0)


def forecast_path(params: ToySSParams, grid: TimeGrid) -> ParameterPath:
    """Constant retiree share at the balancing value."""
    return ParameterPath.constant(grid, forecast_share(params))


def observed_path(params: ToySSParams, grid: TimeGrid) -> ParameterPath:
    """Share drifting linearly away from the forecast after inception."""
    p_star = forecast_share(params)
    eps = params.epsilon
    times = grid.main_times()
    samples = SampledFunction(
        grid, p_star + eps * times, np.full(len(times), eps), 0
    )
    hs = grid.history_steps
    history = SampledFunction(
        grid,
        np.full(hs + 1, p_star),
        np.zeros(hs + 1),
        -hs,
    )
    return ParameterPath(grid, samples, PathKind.OBSERVED, history)
