"""Quadrature, finite differences, and the shared uniform time lattice.

Every quantity in this package is sampled on one uniform grid so that
valuation, differentiation, and perturbation stay mutually consistent.
Composite Simpson is the only quadrature rule; an odd node span is closed
with a single trapezoid panel on its left end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, PreconditionError

DEFAULT_N_STEPS = 1000

# Central-difference step: h = max(FD_STEP_FLOOR, FD_STEP_REL * |scale|).
# Deliberately above the cube-root-of-epsilon optimum because policy
# evaluations may chain several differences.
FD_STEP_FLOOR = 1e-6
FD_STEP_REL = 1e-6

_NODE_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform lattice on [0, t_end] plus an optional pre-inception window.

    The main segment has ``n_steps`` intervals of width ``h_t`` on
    [0, t_end]; the history window extends ``history_steps`` further
    intervals back from inception, ending exactly at t = 0.
    """

    t_end: float
    n_steps: int = DEFAULT_N_STEPS
    history_steps: int = 0

    def __post_init__(self) -> None:
        if not np.isfinite(self.t_end) or self.t_end <= 0.0:
            raise PreconditionError("t_end must be positive and finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2 or self.n_steps % 2:
            raise PreconditionError("n_steps must be an even integer >= 2")
        if int(self.history_steps) != self.history_steps or self.history_steps < 0:
            raise PreconditionError("history_steps must be a non-negative integer")

    @property
    def h_t(self) -> float:
        return self.t_end / self.n_steps

    @property
    def t_start(self) -> float:
        return -self.history_steps * self.h_t

    @property
    def n_main_nodes(self) -> int:
        return self.n_steps + 1

    def main_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    def history_times(self) -> np.ndarray:
        return np.linspace(self.t_start, 0.0, self.history_steps + 1)

    def full_times(self) -> np.ndarray:
        return np.concatenate([self.history_times()[:-1], self.main_times()])

    def node_index(self, t: float) -> int:
        """Lattice index of a node time (0 at inception, negative in history)."""
        i = round(t / self.h_t)
        if abs(t - i * self.h_t) > _NODE_TOL * max(1.0, abs(t)):
            raise PreconditionError("bounds must be grid nodes")
        if not -self.history_steps <= i <= self.n_steps:
            raise PreconditionError("bounds must be grid nodes")
        return i

    def same_lattice(self, other: "TimeGrid") -> bool:
        return self.t_end == other.t_end and self.n_steps == other.n_steps


@dataclass(frozen=True)
class SampledFunction:
    """A function of time sampled on a contiguous run of grid nodes.

    ``start_index`` is the lattice index of ``values[0]``; the main segment
    starts at index 0, history nodes carry negative indices. Derivative
    samples are analytic when built from an analytic family and
    central-difference stencils otherwise.
    """

    grid: TimeGrid
    values: np.ndarray
    derivs: np.ndarray
    start_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "derivs", np.asarray(self.derivs, dtype=float))
        if self.values.ndim != 1 or self.values.shape != self.derivs.shape:
            raise PreconditionError("values and derivs must be 1-d and equally long")
        if len(self.values) < 1:
            raise PreconditionError("need at least one sample")
        if self.start_index < -self.grid.history_steps:
            raise PreconditionError("samples start before the history window")
        if self.start_index + len(self.values) - 1 > self.grid.n_steps:
            raise PreconditionError("samples extend past the end of the grid")

    @property
    def times(self) -> np.ndarray:
        idx = np.arange(self.start_index, self.start_index + len(self.values))
        return idx * self.grid.h_t

    @classmethod
    def from_callable(
        cls,
        grid: TimeGrid,
        fn: Callable[[float], float],
        deriv: Callable[[float], float] | None = None,
        start_index: int = 0,
        end_index: int | None = None,
    ) -> "SampledFunction":
        if end_index is None:
            end_index = grid.n_steps
        idx = np.arange(start_index, end_index + 1)
        times = idx * grid.h_t
        values = np.array([float(fn(t)) for t in times])
        if deriv is not None:
            derivs = np.array([float(deriv(t)) for t in times])
        else:
            derivs = differentiate_path(values, grid)
        return cls(grid, values, derivs, start_index)

    @classmethod
    def from_values(
        cls, grid: TimeGrid, values: np.ndarray, start_index: int = 0
    ) -> "SampledFunction":
        values = np.asarray(values, dtype=float)
        return cls(grid, values, differentiate_path(values, grid), start_index)


def simpson_integral(values: np.ndarray, h: float) -> float:
    """Composite Simpson over uniformly spaced samples.

    An odd panel count is handled by one trapezoid panel on the left end
    followed by Simpson on the remaining (even) span. Exact for polynomials
    of degree <= 3 when the panel count is even.
    """
    values = np.asarray(values, dtype=float)
    n = len(values) - 1
    if n <= 0:
        return 0.0
    total = 0.0
    if n % 2 == 1:
        total += 0.5 * h * (values[0] + values[1])
        values = values[1:]
        n -= 1
    if n:
        total += (h / 3.0) * (
            values[0]
            + values[-1]
            + 4.0 * float(np.sum(values[1:-1:2]))
            + 2.0 * float(np.sum(values[2:-1:2]))
        )
    return float(total)


def simpson_weights(n_panels: int, h: float) -> np.ndarray:
    """Node weights matching :func:`simpson_integral` on ``n_panels`` panels."""
    if n_panels < 0:
        raise PreconditionError("panel count must be non-negative")
    w = np.zeros(n_panels + 1)
    if n_panels == 0:
        return w
    lo = 0
    if n_panels % 2 == 1:
        w[0] += 0.5 * h
        w[1] += 0.5 * h
        lo = 1
    if n_panels - lo:
        w[lo] += h / 3.0
        w[-1] += h / 3.0
        w[lo + 1 : -1 : 2] += 4.0 * h / 3.0
        w[lo + 2 : -1 : 2] += 2.0 * h / 3.0
    return w


def running_simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Prefix integrals: entry i equals ``simpson_integral(values[:i+1], h)``."""
    values = np.asarray(values, dtype=float)
    n = len(values) - 1
    out = np.zeros(n + 1)
    third = h / 3.0
    # Even prefixes chain Simpson pairs from node 0; odd prefixes open with a
    # trapezoid panel and chain pairs from node 1.
    for m in range(2, n + 1, 2):
        out[m] = out[m - 2] + third * (values[m - 2] + 4.0 * values[m - 1] + values[m])
    if n >= 1:
        trap0 = 0.5 * h * (values[0] + values[1])
        out[1] = trap0
        s1 = 0.0
        for m in range(3, n + 1, 2):
            s1 += third * (values[m - 2] + 4.0 * values[m - 1] + values[m])
            out[m] = trap0 + s1
    return out


def integrate(f: SampledFunction, t_from: float, t_to: float) -> float:
    """Integrate a sampled function between two grid nodes.

    Parameters
    ----------
    f : SampledFunction
        Samples on the shared lattice.
    t_from, t_to : float
        Integration bounds; both must be grid nodes inside the sampled span,
        with ``t_from <= t_to``.

    Returns
    -------
    float
        Composite Simpson approximation of the integral.
    """
    ia = f.grid.node_index(t_from)
    ib = f.grid.node_index(t_to)
    if ia > ib:
        raise PreconditionError("reversed bounds")
    lo = ia - f.start_index
    hi = ib - f.start_index
    if lo < 0 or hi > len(f.values) - 1:
        raise PreconditionError("integration bounds outside the sampled span")
    return simpson_integral(f.values[lo : hi + 1], f.grid.h_t)


def differentiate_path(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Second-order finite-difference derivative of node samples.

    Interior nodes use the central stencil; the endpoints use one-sided
    three-point stencils. Exact for quadratics.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 3:
        raise PreconditionError("grid too coarse")
    h = grid.h_t
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def partial_derivative(
    f: Callable[[float], float], at: float, scale: float | None = None
) -> float:
    """Central-difference derivative of a scalar function at one point.

    The step is ``max(1e-6, 1e-6 * |scale|)`` with ``scale`` defaulting to
    ``|at|``.
    """
    if scale is None:
        scale = abs(at)
    h = max(FD_STEP_FLOOR, FD_STEP_REL * abs(scale))
    fp = float(f(at + h))
    fm = float(f(at - h))
    if not (np.isfinite(fp) and np.isfinite(fm)):
        raise NumericalError("non-finite evaluation")
    return (fp - fm) / (2.0 * h)
