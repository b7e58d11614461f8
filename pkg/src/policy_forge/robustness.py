"""Robustness analysis: how a policy's terminal value responds to
forecasting errors.

A policy forgives small forecasting errors exactly when its cashflow
satisfies, along the forecast path, the variational constraint

    dQ/dq_k - d/dt (dQ/dq_dot_k) = 0   with   dQ/dq_dot_k = 0 at t_end.

This module evaluates that constraint numerically, measures the actual
terminal-value response to perturbation families of growing amplitude, fits
the power-law order of that response, and combines everything into a
verdict.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    CashflowPolicy,
    GeneralizedParameterSpec,
    ParameterPath,
    ValuationConfig,
    build_generalized_path,
    evaluate_cashflow,
)
from .errors import NumericalError, PreconditionError
from .numerics import differentiate_path, partial_derivative, simpson_integral

DEFAULT_EPSILONS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)
LARGE_EPSILON = 0.5

# Verdict thresholds. Residual and response tolerances are relative to a
# policy scale so verdicts survive rescaling the evaluator by a constant.
SLOPE_THRESHOLD = 1.9
RESIDUAL_TOL = 1e-5
SUPER_RESPONSE_TOL = 1e-6
FIT_FLOOR = 1e-13
# Terminal-value responses below this fraction of (cashflow scale * horizon)
# are quadrature residue, not signal; the classifier refuses to fit a slope
# through them.
SWEEP_NOISE_TOL = 1e-8


class PerturbationShape(enum.Enum):
    LINEAR = "linear"
    SINUSOID = "sinusoid"
    BUMP = "bump"


@dataclass(frozen=True)
class PerturbationFamily:
    """A one-parameter family of forecasting errors, zero before inception.

    Shapes: linear drift eps*t, sinusoid eps*sin(omega*t), and a smooth
    interior bump normalized to peak amplitude eps. Analytic derivative
    samples accompany the values (right-limits at t = 0).
    """

    shape: PerturbationShape
    epsilon: float
    omega: float | None = None

    def __post_init__(self) -> None:
        if self.shape is PerturbationShape.SINUSOID:
            if self.omega is None or self.omega <= 0:
                raise PreconditionError("sinusoid perturbation needs omega > 0")
        elif self.omega is not None:
            raise PreconditionError("omega is only meaningful for the sinusoid shape")

    def with_epsilon(self, epsilon: float) -> "PerturbationFamily":
        return replace(self, epsilon=epsilon)

    def delta_values(self, times: np.ndarray, t_end: float) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        eps = self.epsilon
        if self.shape is PerturbationShape.LINEAR:
            out = eps * t
        elif self.shape is PerturbationShape.SINUSOID:
            out = eps * np.sin(self.omega * t)
        else:
            out = eps * 16.0 * t**2 * (t_end - t) ** 2 / t_end**4
        return np.where(t > 0.0, out, 0.0)

    def delta_derivs(self, times: np.ndarray, t_end: float) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        eps = self.epsilon
        if self.shape is PerturbationShape.LINEAR:
            out = np.full_like(t, eps)
        elif self.shape is PerturbationShape.SINUSOID:
            out = eps * self.omega * np.cos(self.omega * t)
        else:
            out = eps * 32.0 * t * (t_end - t) * (t_end - 2.0 * t) / t_end**4
        return np.where(t >= 0.0, out, 0.0)

    def apply(self, path: ParameterPath) -> ParameterPath:
        """Observed path obtained by adding this forecasting error."""
        times = path.grid.main_times()
        t_end = path.grid.t_end
        return path.perturbed(
            self.delta_values(times, t_end), self.delta_derivs(times, t_end)
        )

    @staticmethod
    def defaults(t_end: float, epsilon: float = 1.0) -> tuple["PerturbationFamily", ...]:
        """The three stock families; the sinusoid spans half a period so its
        first-order response does not cancel by symmetry."""
        return (
            PerturbationFamily(PerturbationShape.LINEAR, epsilon),
            PerturbationFamily(PerturbationShape.SINUSOID, epsilon, math.pi / t_end),
            PerturbationFamily(PerturbationShape.BUMP, epsilon),
        )


class Verdict(enum.Enum):
    NON_ROBUST = "NonRobust"
    ROBUST_FIRST_ORDER = "RobustFirstOrder"
    SUPER_ROBUST_EMPIRICAL = "SuperRobustEmpirical"


@dataclass(frozen=True)
class FamilySweepResult:
    shape: str
    omega: float | None
    epsilons: tuple[float, ...]
    delta_v: tuple[float, ...]
    slope: float
    r_squared: float
    zero_response: bool
    large_epsilon: float
    large_delta_v: float


@dataclass(frozen=True)
class RobustnessReport:
    """Aggregate robustness diagnostics and the resulting verdict."""

    el_residual_sup: float
    boundary_residual: float
    scaling_exponent: float
    scaling_r2: float
    verdict: Verdict
    zero_response: bool
    policy_scale: float
    max_large_delta_v: float
    per_family: tuple[FamilySweepResult, ...]

    def to_dict(self) -> dict:
        def num(x):
            return None if math.isinf(x) else x

        return {
            "verdict": self.verdict.value,
            "el_residual_sup": self.el_residual_sup,
            "boundary_residual": self.boundary_residual,
            "scaling_exponent": num(self.scaling_exponent),
            "scaling_r2": self.scaling_r2,
            "zero_response": self.zero_response,
            "policy_scale": self.policy_scale,
            "max_large_delta_v": self.max_large_delta_v,
            "per_family": [
                {
                    "shape": f.shape,
                    "omega": f.omega,
                    "epsilons": list(f.epsilons),
                    "delta_v": list(f.delta_v),
                    "slope": num(f.slope),
                    "r_squared": f.r_squared,
                    "zero_response": f.zero_response,
                    "large_epsilon": f.large_epsilon,
                    "large_delta_v": f.large_delta_v,
                }
                for f in self.per_family
            ],
        }


def _partials_along_path(policy, qmat, qdmat, times, k):
    """dQ/dq_k and dQ/dq_dot_k at every node along sampled paths."""
    n = len(times)
    d_q = np.empty(n)
    d_qd = np.empty(n)
    for i in range(n):
        t = float(times[i])
        qvec = qmat[i]
        qdvec = qdmat[i]

        def f_q(x, _q=qvec, _qd=qdvec, _t=t):
            v = _q.copy()
            v[k] = x
            return policy.evaluator(v, _qd, _t)

        def f_qd(x, _q=qvec, _qd=qdvec, _t=t):
            v = _qd.copy()
            v[k] = x
            return policy.evaluator(_q, v, _t)

        try:
            d_q[i] = partial_derivative(f_q, float(qvec[k]))
            d_qd[i] = partial_derivative(f_qd, float(qdvec[k]))
        except NumericalError as exc:
            raise NumericalError(f"non-finite partial at t'={t:.6g}") from exc
    return d_q, d_qd


def _stack(q_paths: Sequence[ParameterPath]):
    grid = q_paths[0].grid
    qmat = np.column_stack([q.samples.values for q in q_paths])
    qdmat = np.column_stack([q.samples.derivs for q in q_paths])
    return grid, qmat, qdmat, grid.main_times()


def el_residual(
    policy: CashflowPolicy, q_paths: Sequence[ParameterPath], param_index: int
) -> np.ndarray:
    """Node-wise dQ/dq_k - d/dt(dQ/dq_dot_k) along the given paths.

    Identically zero (up to finite-difference noise) along the forecast for
    policies that forgive small forecasting errors.
    """
    if not 0 <= param_index < policy.n_params:
        raise PreconditionError("param_index out of range")
    grid, qmat, qdmat, times = _stack(q_paths)
    d_q, d_qd = _partials_along_path(policy, qmat, qdmat, times, param_index)
    return d_q - differentiate_path(d_qd, grid)


def boundary_residual(
    policy: CashflowPolicy, q_paths: Sequence[ParameterPath], param_index: int
) -> float:
    """|dQ/dq_dot_k| at the final node."""
    if not 0 <= param_index < policy.n_params:
        raise PreconditionError("param_index out of range")
    grid, qmat, qdmat, times = _stack(q_paths)
    i = len(times) - 1
    t = float(times[i])
    qvec = qmat[i]
    qdvec = qdmat[i]

    def f_qd(x):
        v = qdvec.copy()
        v[param_index] = x
        return policy.evaluator(qvec, v, t)

    try:
        return abs(partial_derivative(f_qd, float(qdvec[param_index])))
    except NumericalError as exc:
        raise NumericalError(f"non-finite partial at t'={t:.6g}") from exc


def _observed_valuation(policy, forecast_paths, family, specs):
    """Terminal value and cashflow sup-norm under one perturbed scenario."""
    observed = [family.apply(p) for p in forecast_paths]
    q_obs = [build_generalized_path(p, s) for p, s in zip(observed, specs)]
    cash = evaluate_cashflow(policy, q_obs)
    integral = simpson_integral(cash, q_obs[0].grid.h_t)
    return integral, float(np.max(np.abs(cash)))


def perturbation_sweep(
    policy: CashflowPolicy,
    forecast_paths: Sequence[ParameterPath],
    family: PerturbationFamily,
    specs: Sequence[GeneralizedParameterSpec],
    config: ValuationConfig,
    epsilons: Sequence[float],
) -> list[tuple[float, float]]:
    """Terminal-value change under the family at each amplitude.

    Every amplitude is revalued in full (no linearization), so the response
    carries all orders and is exact up to quadrature error.
    """
    eps = list(epsilons)
    if any(e <= 0 for e in eps) or any(a >= b for a, b in zip(eps, eps[1:])):
        raise PreconditionError("epsilons must be positive and sorted ascending")
    q_fore = [build_generalized_path(p, s) for p, s in zip(forecast_paths, specs)]
    cash = evaluate_cashflow(policy, q_fore)
    v0 = simpson_integral(cash, q_fore[0].grid.h_t)
    out = []
    for e in eps:
        v, _ = _observed_valuation(policy, forecast_paths, family.with_epsilon(e), specs)
        out.append((e, v - v0))
    return out


def _loglog_fit(epsilons: Sequence[float], magnitudes: Sequence[float]):
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.asarray(magnitudes, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def fit_scaling_exponent(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of log|delta_V| against log eps, with R^2.

    Pairs whose response is below the 1e-13 floor are dropped as quadrature
    noise; if fewer than two survive the response is numerically zero and
    the sentinel (inf, 1.0) is returned.
    """
    if len(pairs) < 4:
        raise PreconditionError("need at least 4 (epsilon, delta_v) pairs")
    survivors = [(e, abs(dv)) for e, dv in pairs if abs(dv) > FIT_FLOOR]
    if len(survivors) < 2:
        return math.inf, 1.0
    eps, mags = zip(*survivors)
    return _loglog_fit(eps, mags)


def classify(
    policy: CashflowPolicy,
    forecast_paths: Sequence[ParameterPath],
    specs: Sequence[GeneralizedParameterSpec],
    config: ValuationConfig,
    families: Sequence[PerturbationFamily] | None = None,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
) -> RobustnessReport:
    """Full robustness diagnosis of a policy against its forecast.

    Requires at least two perturbation families (one family can never
    certify robustness); by default the three stock families are used. The
    verdict combines the variational residuals on the forecast path, the
    worst fitted response order across families, and a large-amplitude
    response check.
    """
    grid = forecast_paths[0].grid
    t_end = grid.t_end
    if families is None:
        families = PerturbationFamily.defaults(t_end)
    if len(families) < 2:
        raise PreconditionError("classification needs at least two perturbation families")

    q_fore = [build_generalized_path(p, s) for p, s in zip(forecast_paths, specs)]
    cash_fore = evaluate_cashflow(policy, q_fore)
    forecast_sup = float(np.max(np.abs(cash_fore)))

    el_sup = 0.0
    bnd = 0.0
    for k in range(policy.n_params):
        el_sup = max(el_sup, float(np.max(np.abs(el_residual(policy, q_fore, k)))))
        bnd = max(bnd, boundary_residual(policy, q_fore, k))

    v0 = simpson_integral(cash_fore, grid.h_t)
    sup_q = forecast_sup
    results = []
    for fam in families:
        pairs = []
        floors = []
        for e in epsilons:
            v, sup = _observed_valuation(
                policy, forecast_paths, fam.with_epsilon(e), specs
            )
            sup_q = max(sup_q, sup)
            pairs.append((e, v - v0))
            floors.append(SWEEP_NOISE_TOL * t_end * max(forecast_sup, sup))
        v_large, sup_large = _observed_valuation(
            policy, forecast_paths, fam.with_epsilon(LARGE_EPSILON), specs
        )
        sup_q = max(sup_q, sup_large)
        survivors = [
            (e, abs(dv))
            for (e, dv), floor in zip(pairs, floors)
            if abs(dv) > max(FIT_FLOOR, floor)
        ]
        if len(survivors) < 2:
            slope, r2, zero = math.inf, 1.0, True
        else:
            slope, r2 = _loglog_fit(*zip(*survivors))
            zero = False
        results.append(
            FamilySweepResult(
                shape=fam.shape.value,
                omega=fam.omega,
                epsilons=tuple(e for e, _ in pairs),
                delta_v=tuple(dv for _, dv in pairs),
                slope=slope,
                r_squared=r2,
                zero_response=zero,
                large_epsilon=LARGE_EPSILON,
                large_delta_v=v_large - v0,
            )
        )

    scale = sup_q + 1e-30
    worst = min(results, key=lambda r: r.slope)
    max_large = max(abs(r.large_delta_v) for r in results)
    residuals_ok = el_sup < RESIDUAL_TOL * scale and bnd < RESIDUAL_TOL * scale
    robust = residuals_ok and worst.slope >= SLOPE_THRESHOLD
    superrobust = robust and max_large < SUPER_RESPONSE_TOL * scale * t_end
    if superrobust:
        verdict = Verdict.SUPER_ROBUST_EMPIRICAL
    elif robust:
        verdict = Verdict.ROBUST_FIRST_ORDER
    else:
        verdict = Verdict.NON_ROBUST

    return RobustnessReport(
        el_residual_sup=el_sup,
        boundary_residual=bnd,
        scaling_exponent=worst.slope,
        scaling_r2=worst.r_squared,
        verdict=verdict,
        zero_response=math.isinf(worst.slope),
        policy_scale=scale,
        max_large_delta_v=max_large,
        per_family=tuple(results),
    )
