"""Value iteration ``v_n = J0 v_{n-1}`` for a budget of n observation rights."""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, NumericalError
from .operators import (ValueTable, QuadratureRule, default_rule, expect_after_jump, grid_sizes,
                        horizon_T, jump_tables, running_cost, t_star_0, time_grid)
from .model import drift_flow

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Boundary:
    """First optimal waiting time per grid odds and the matching barrier points."""

    phi: np.ndarray
    t_star: np.ndarray
    barrier_time: np.ndarray
    barrier_phi: np.ndarray

    def waiting_time(self, phi):
        """Waiting time at the nearest grid node (odds past the grid wait 0)."""
        phi = np.asarray(phi, dtype=float)
        h = self.phi[1] - self.phi[0]
        i = np.rint(phi / h).astype(np.int64)
        out = np.zeros(phi.shape)
        ok = i < self.phi.size
        out[ok] = self.t_star[np.maximum(i[ok], 0)]
        return out


@dataclass(frozen=True, eq=False)
class LumpSolution:
    tables: list
    boundaries: list
    params: object
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_max(self):
        return len(self.tables) - 1

    @property
    def phi_grid(self):
        return self.tables[0].grid

    @property
    def phibar(self):
        return self.tables[0].phibar

    def value(self, n, phi):
        return self.tables[n](phi)

    def values_at_zero(self):
        return [float(t.values[0]) for t in self.tables]


@dataclass(frozen=True)
class FixedSchedule:
    """Observation gaps of a fixed (non-adaptive) schedule, first gap first."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple(float(x) for x in self.intervals)
        if not iv:
            raise DomainError("a schedule needs at least one observation")
        if any(not (x > 0 and math.isfinite(x)) for x in iv):
            raise DomainError("schedule gaps must be positive and finite")
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def regular(cls, gap, count):
        return cls((gap,) * int(count))

    @property
    def count(self):
        return len(self.intervals)


def v0_analytic(phi, params):
    """Value of stopping optimally with no observations left."""
    return running_cost(t_star_0(phi, params), phi, params)


def _phi_grid(phibar, points, extend=0.0):
    grid = np.linspace(0.0, phibar, points)
    if extend > 0:
        h = grid[1]
        extra = int(math.ceil(extend / h))
        grid = np.arange(points + extra) * h
    return grid


def _stopping_boundary(grid, params):
    ts = t_star_0(grid, params)
    return Boundary(grid, ts, ts, drift_flow(ts, grid, params))


def solve_lump(params, n_max, epsilon=0.1, phibar=None, phi_points=551, dt=0.1,
               time_steps=None, quadrature=64, interpolation="linear", grid="fixed",
               extend_phi=0.0):
    """Iterate the lump-sum recursion up to ``n_max`` observations.

    Args:
        params: Model parameters.
        n_max: Largest number of observation rights to solve for.
        epsilon: Overall accuracy target.  Only used to size the grids
            when ``grid="bound"``; otherwise recorded in the diagnostics.
        phibar: Truncation odds; defaults to the continuous threshold.
        phi_points: Points of the uniform odds grid on ``[0, phibar]``.
        dt: Time step of the uniform grid on ``[0, T]``.
        time_steps: Exact number of time steps; overrides ``dt``.
        quadrature: Gauss-Hermite order, or a QuadratureRule.
        interpolation: ``"linear"`` or ``"constant"`` (left node).
        grid: ``"fixed"`` uses the resolutions above; ``"bound"`` uses the
            worst-case counts from ``grid_sizes`` with budget
            ``epsilon / n_max`` per step (very expensive).
        extend_phi: Extend the odds grid this far past ``phibar``.

    Returns:
        LumpSolution with tables for n = 0..n_max.
    """
    if n_max < 0 or int(n_max) != n_max:
        raise ConfigError("n_max must be a nonnegative integer")
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    if phibar is None:
        from .continuous import phibar as _pb
        try:
            phibar = _pb(params)
        except NumericalError as exc:
            raise ConfigError(f"phibar unavailable: {exc}") from exc
    if not phibar > 0:
        raise ConfigError("phibar must be > 0")
    rule = quadrature if isinstance(quadrature, QuadratureRule) else QuadratureRule.gauss_hermite(quadrature)
    T = horizon_T(params)
    if grid == "bound":
        per_step = epsilon / max(n_max, 1)
        time_steps, phi_steps = grid_sizes(params, per_step, max(n_max, 1) * T, phibar)
        phi_points = phi_steps + 1
    elif grid != "fixed":
        raise ConfigError("grid must be 'fixed' or 'bound'")
    if phi_points < 2:
        raise ConfigError("phi_points must be >= 2")
    phis = _phi_grid(phibar, phi_points, extend_phi)
    tgrid = time_grid(params, dt, time_steps)

    tables = [ValueTable(phis, v0_analytic(phis, params), phibar, interpolation)]
    boundaries = [_stopping_boundary(phis, params)]
    counts = [0]
    A = B = None
    if n_max > 0:
        A, B = jump_tables(tgrid, params, rule)
    below = phis < phibar
    for n in range(1, n_max + 1):
        KW = expect_after_jump(tables[-1], A, B, phis, rule)
        vals, idx = kernels.lump_minimize(KW, tgrid, phis, params.lam, params.c)
        vals = np.where(below, vals, 0.0)
        ts = np.where(below, tgrid[idx], 0.0)
        tables.append(ValueTable(phis, vals, phibar, interpolation))
        boundaries.append(Boundary(phis, ts, ts, drift_flow(ts, phis, params)))
        counts.append(int((tgrid.size - 1) * phis.size))
        log.info("n=%d v(0)=%.6f", n, vals[0])
    diagnostics = {
        "phibar": float(phibar),
        "phi_points": int(phis.size),
        "phi_step": float(phis[1] - phis[0]),
        "time_steps": int(tgrid.size - 1),
        "time_step": float(tgrid[1] - tgrid[0]),
        "horizon": float(T),
        "quadrature_order": int(rule.order),
        "interpolation": interpolation,
        "grid_mode": grid,
        "epsilon": float(epsilon),
        "per_step_tolerance": float(epsilon / max(n_max, 1)),
        "j_evaluations": counts,
        "j_evaluations_total": int(sum(counts)),
    }
    return LumpSolution(tables, boundaries, params, diagnostics)


def _fixed_schedule_tables(schedule, params, phi_grid, phibar, rule, interpolation):
    phis = np.asarray(phi_grid, dtype=float)
    w = ValueTable(phis, v0_analytic(phis, params), phibar, interpolation)
    t0 = t_star_0(phis, params)
    stages = [(w, np.zeros(phis.size, dtype=bool))]
    for s in reversed(schedule.intervals):
        A, B = jump_tables([s], params, rule)
        KW = expect_after_jump(w, A, B, phis, rule)[0]
        stop = running_cost(np.minimum(t0, s), phis, params)
        wait = running_cost(s, phis, params) + math.exp(-params.lam * s) * KW
        # stop early only when the flow reaches lam/c strictly before the next look
        stop_first = (t0 < s) & (stop <= wait)
        w = ValueTable(phis, np.where(stop_first, stop, wait), phibar, interpolation)
        stages.append((w, stop_first))
    return stages


def fixed_schedule_value(schedule, params, phi_grid, phibar=None, quadrature=64,
                         interpolation="linear"):
    """Value of observing on a fixed schedule, stopping optimally in between."""
    if phibar is None:
        phibar = float(np.asarray(phi_grid)[-1])
    rule = quadrature if isinstance(quadrature, QuadratureRule) else QuadratureRule.gauss_hermite(quadrature)
    return _fixed_schedule_tables(schedule, params, phi_grid, phibar, rule, interpolation)[-1][0]
