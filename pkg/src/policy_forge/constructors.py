"""Constructing policies that forgive forecasting errors.

Three recipes:

* a policy whose cashflow is the total time derivative of a generating
  function L(q, t) whose parameter gradient vanishes at termination;
* a policy built from the terminal-window ansatz
  Q = (1/T) d/dt[(T - t) M(q, t)] + C(t), whose terminal value depends only
  on the inception value of the parameters;
* a retrofit of a derivative-free policy with a time-profile coefficient on
  q_dot, fixed once at design time from the forecast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import CashflowPolicy, ParameterPath
from .errors import PreconditionError
from .numerics import TimeGrid, partial_derivative, simpson_integral

BOUNDARY_TOL = 1e-6


@dataclass(frozen=True)
class GeneratingFunction:
    """L(q, t) with optional analytic partials.

    Without analytic overrides the partials fall back to central
    differences; note that nested numeric differentiation of the resulting
    policy then carries a rounding floor around machine-eps * |L| / h^2, so
    residual certification works best with analytic partials.
    """

    l_eval: Callable[[np.ndarray, float], float]
    dl_dq: Callable[[np.ndarray, float], np.ndarray] | None = None
    dl_dt: Callable[[np.ndarray, float], float] | None = None

    def value(self, q: np.ndarray, t: float) -> float:
        return float(self.l_eval(np.asarray(q, dtype=float), t))

    def grad_q(self, q: np.ndarray, t: float) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.dl_dq is not None:
            return np.asarray(self.dl_dq(q, t), dtype=float)
        out = np.empty(len(q))
        for k in range(len(q)):

            def f(x, _k=k):
                v = q.copy()
                v[_k] = x
                return self.l_eval(v, t)

            out[k] = partial_derivative(f, float(q[k]))
        return out

    def time_partial(self, q: np.ndarray, t: float) -> float:
        q = np.asarray(q, dtype=float)
        if self.dl_dt is not None:
            return float(self.dl_dt(q, t))
        return partial_derivative(lambda x: self.l_eval(q, x), t, scale=max(abs(t), 1.0))


def from_generating_function(
    gen: GeneratingFunction,
    n_params: int,
    forecast_q_paths: Sequence[ParameterPath],
) -> CashflowPolicy:
    """Policy with cashflow Q = dL/dt = dL/dt|_q + sum_k dL/dq_k * q_dot_k.

    The parameter gradient of L must vanish at termination on the forecast
    path; this is checked at construction. The terminal value of the
    resulting policy on any path equals L at the endpoint minus L at
    inception.
    """
    if len(forecast_q_paths) != n_params:
        raise PreconditionError("forecast path count must match n_params")
    grid = forecast_q_paths[0].grid
    times = grid.main_times()
    qmat = np.column_stack([p.samples.values for p in forecast_q_paths])
    l_vals = np.array([gen.value(qmat[i], float(t)) for i, t in enumerate(times)])
    scale = float(np.max(np.abs(l_vals))) + 1e-30
    g_end = gen.grad_q(qmat[-1], float(times[-1]))
    if float(np.max(np.abs(g_end))) > BOUNDARY_TOL * scale:
        raise PreconditionError("generating function violates ∂L/∂q(T) = 0")

    def evaluator(q, q_dot, t):
        return gen.time_partial(q, t) + float(np.dot(gen.grad_q(q, t), q_dot))

    return CashflowPolicy(evaluator, n_params, uses_derivatives=True)


@dataclass(frozen=True)
class SuperRobustSpec:
    """Ingredients of the terminal-window ansatz: M(q, t) and C(t)."""

    m_eval: Callable[[np.ndarray, float], float]
    c_profile: Callable[[float], float] | None = None

    def m_value(self, q: np.ndarray, t: float) -> float:
        return float(self.m_eval(np.asarray(q, dtype=float), t))

    def m_grad_q(self, q: np.ndarray, t: float) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = np.empty(len(q))
        for k in range(len(q)):

            def f(x, _k=k):
                v = q.copy()
                v[_k] = x
                return self.m_eval(v, t)

            out[k] = partial_derivative(f, float(q[k]))
        return out

    def m_time_partial(self, q: np.ndarray, t: float) -> float:
        q = np.asarray(q, dtype=float)
        return partial_derivative(lambda x: self.m_eval(q, x), t, scale=max(abs(t), 1.0))

    def c_value(self, t: float) -> float:
        return 0.0 if self.c_profile is None else float(self.c_profile(t))


def from_super_robust_spec(
    spec: SuperRobustSpec, t_end: float, n_params: int = 1
) -> CashflowPolicy:
    """Policy Q = (1/T) d/dt[(T - t) M(q, t)] + C(t), expanded analytically.

    Its terminal value is -M(q(0), 0) plus the integral of C regardless of
    how the parameters evolve after inception.
    """
    if t_end <= 0:
        raise PreconditionError("t_end must be positive")

    def evaluator(q, q_dot, t):
        m = spec.m_value(q, t)
        dm = spec.m_time_partial(q, t) + float(np.dot(spec.m_grad_q(q, t), q_dot))
        return (-m + (t_end - t) * dm) / t_end + spec.c_value(t)

    return CashflowPolicy(evaluator, n_params, uses_derivatives=True)


def balance_c_profile(
    spec: SuperRobustSpec, forecast_q_paths: Sequence[ParameterPath]
) -> float:
    """Constant C making the induced policy terminate at zero.

    With the terminal-window ansatz, V(T) = -M(q(0), 0) + C * T on every
    path sharing the inception value, so C = M(q(0), 0) / T.
    """
    grid = forecast_q_paths[0].grid
    if grid.t_end == 0:
        raise PreconditionError("t_end must be positive")
    q0 = np.array([p.samples.values[0] for p in forecast_q_paths])
    return spec.m_value(q0, 0.0) / grid.t_end


@dataclass(frozen=True)
class RobustExtension:
    """The retrofit data: the q_dot coefficient profile and the constant C.

    ``a_profile`` is frozen at construction from the forecast path and is
    exactly zero at the final node.
    """

    base: CashflowPolicy
    a_profile: np.ndarray
    c_constant: float
    grid: TimeGrid

    def a_at(self, t: float) -> float:
        return float(np.interp(t, self.grid.main_times(), self.a_profile))


def robust_extension(
    base: CashflowPolicy, forecast_path: ParameterPath
) -> tuple[CashflowPolicy, RobustExtension]:
    """Extend a derivative-free single-parameter policy to a robust one.

    The added term A(t) * q_dot has dA/dt equal to the parameter
    sensitivity of the base cashflow along the forecast, with A vanishing
    at termination; the constant C restores a zero terminal value on the
    forecast. A is interpolated linearly between nodes.
    """
    if base.n_params != 1:
        raise PreconditionError("extension recipe defined for one parameter")
    if base.uses_derivatives:
        raise PreconditionError("base policy must not read derivative samples")
    grid = forecast_path.grid
    times = grid.main_times()
    q = forecast_path.samples.values
    qd = forecast_path.samples.derivs
    h = grid.h_t

    n = len(times)
    g = np.empty(n)
    base_q = np.empty(n)
    for i in range(n):
        t = float(times[i])

        def f(x, _t=t, _qd=qd[i]):
            return base.evaluator(np.array([x]), np.array([_qd]), _t)

        g[i] = partial_derivative(f, float(q[i]))
        base_q[i] = float(base.evaluator(np.array([q[i]]), np.array([qd[i]]), t))

    a_profile = np.array([-simpson_integral(g[i:], h) for i in range(n)])
    c_constant = -simpson_integral(base_q + a_profile * qd, h) / grid.t_end

    ext = RobustExtension(base, a_profile, c_constant, grid)

    def evaluator(qv, qdv, t):
        return (
            base.evaluator(qv, qdv, t)
            + ext.a_at(t) * float(qdv[0])
            + c_constant
        )

    return CashflowPolicy(evaluator, 1, uses_derivatives=True), ext


def demo_generating_functions(
    t_end: float, anchor: float
) -> dict[str, GeneratingFunction]:
    """Stock single-parameter generating functions with analytic partials.

    ``anchor`` should be the forecast parameter value at termination so the
    terminal-gradient condition holds where it is not automatic.
    """
    T = t_end

    def quad(q, t):
        return (T - t) * q[0] ** 2 / T

    def quad_dq(q, t):
        return np.array([2.0 * q[0] * (T - t) / T])

    def quad_dt(q, t):
        return -q[0] ** 2 / T

    def quad_term(q, t):
        return (T - t) * q[0] ** 2 / T + (q[0] - anchor) ** 2 * (t / T) ** 2 * T

    def quad_term_dq(q, t):
        return np.array(
            [2.0 * q[0] * (T - t) / T + 2.0 * (q[0] - anchor) * (t / T) ** 2 * T]
        )

    def quad_term_dt(q, t):
        return -q[0] ** 2 / T + 2.0 * (q[0] - anchor) ** 2 * t / T

    def lin(q, t):
        return q[0] * (T - t) / T

    def lin_dq(q, t):
        return np.array([(T - t) / T])

    def lin_dt(q, t):
        return -q[0] / T

    def sine(q, t):
        return (T - t) ** 2 * math.sin(q[0]) / T**2

    def sine_dq(q, t):
        return np.array([(T - t) ** 2 * math.cos(q[0]) / T**2])

    def sine_dt(q, t):
        return -2.0 * (T - t) * math.sin(q[0]) / T**2

    return {
        "gen_quadratic": GeneratingFunction(quad, quad_dq, quad_dt),
        "gen_quadratic_terminal": GeneratingFunction(
            quad_term, quad_term_dq, quad_term_dt
        ),
        "gen_linear": GeneratingFunction(lin, lin_dq, lin_dt),
        "gen_sin": GeneratingFunction(sine, sine_dq, sine_dt),
    }
