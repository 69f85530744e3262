"""Observation rights that arrive at the jumps of a Poisson process.

State between observations is the pair (elapsed time y, odds phi) with
``phi >= exp(lam y) - 1``.  Tables are stored along flow lines: row ``i``
is elapsed time ``s_i = i * ds`` and column ``j`` the odds ``psi_j`` held
right after the last observation, so the cell describes the state
``(s_i, phi(s_i, psi_j))``.  In these coordinates the feasible region is a
rectangle and waiting is a shift by one row, which turns every
minimization over action times into a backward sweep along the rows.

Lattice index ``(j, k)``: j rights received so far, k of them spent.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, NumericalError
from .model import drift_flow, is_feasible, jump_coefficients
from .operators import (ValueTable, QuadratureRule, default_rule, expect_after_jump,
                        horizon_T, jump_tables, running_cost, t_star_0)

log = logging.getLogger(__name__)

STOP, OBSERVE = 0, 1
KIND_NAMES = {STOP: "stop", OBSERVE: "observe"}
MODES = ("heuristic", "exact")


@dataclass(frozen=True, eq=False)
class FeasibleTable:
    """A value function on the feasible region, tabulated along flow lines.

    Attributes:
        s_grid: Elapsed times since the last observation (uniform from 0).
        psi_grid: Odds right after the last observation (uniform from 0).
        values: ``values[i, j]`` at the state ``(s_i, phi(s_i, psi_j))``.
        action_time: Elapsed time at which the optimal action is taken
            when starting from the cell.
        action_kind: STOP or OBSERVE per cell.
        phibar: Cap; states with odds at or above it are worth 0.
        lam: Disorder rate, needed to map (y, phi) back to base odds.
    """

    s_grid: np.ndarray
    psi_grid: np.ndarray
    values: np.ndarray
    action_time: np.ndarray
    action_kind: np.ndarray
    phibar: float
    lam: float
    interpolation: str = "linear"

    def __post_init__(self):
        for name in ("s_grid", "psi_grid", "values", "action_time", "action_kind"):
            a = np.array(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def odds(self):
        """Current odds of every cell."""
        return np.exp(self.lam * self.s_grid)[:, None] * (self.psi_grid[None, :] + 1.0) - 1.0

    @property
    def capped(self):
        return self.odds >= self.phibar

    def slice0(self):
        """The table at zero elapsed time, as a lump-sum ValueTable."""
        return ValueTable(self.psi_grid, self.values[0], self.phibar, self.interpolation)

    def base_odds(self, y, phi):
        y = np.asarray(y, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if np.any(y < 0) or not np.all(is_feasible(y, phi, _Lam(self.lam))):
            raise DomainError("(y, phi) lies outside the feasible region")
        return np.maximum(np.exp(-self.lam * y) * (phi + 1.0) - 1.0, 0.0)

    def __call__(self, y, phi):
        y, phi = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(phi, dtype=float))
        psi = self.base_odds(y, phi)
        out = np.zeros(y.shape)
        ds = self.s_grid[1] - self.s_grid[0]
        dp = self.psi_grid[1] - self.psi_grid[0]
        ok = (phi < self.phibar) & (y < self.s_grid[-1]) & (psi < self.psi_grid[-1])
        fy = y[ok] / ds
        fp = psi[ok] / dp
        i = np.minimum(fy.astype(np.int64), self.s_grid.size - 2)
        j = np.minimum(fp.astype(np.int64), self.psi_grid.size - 2)
        v = self.values
        if self.interpolation == "linear":
            a = fy - i
            b = fp - j
            out[ok] = ((1 - a) * ((1 - b) * v[i, j] + b * v[i, j + 1])
                       + a * ((1 - b) * v[i + 1, j] + b * v[i + 1, j + 1]))
        else:
            out[ok] = v[i, j]
        return out[()] if out.ndim == 0 else out

    def nearest_cell(self, y, psi):
        ds = self.s_grid[1] - self.s_grid[0]
        dp = self.psi_grid[1] - self.psi_grid[0]
        i = np.minimum(np.rint(np.asarray(y) / ds).astype(np.int64), self.s_grid.size - 1)
        j = np.rint(np.asarray(psi) / dp).astype(np.int64)
        return i, j

    def on_grid(self, y_grid, phi_grid):
        """Resample onto a rectangular (y, phi) grid; infeasible cells are NaN."""
        Y, P = np.meshgrid(np.asarray(y_grid, float), np.asarray(phi_grid, float), indexing="ij")
        out = np.full(Y.shape, np.nan)
        ok = is_feasible(Y, P, _Lam(self.lam))
        out[ok] = self(Y[ok], P[ok])
        return out


@dataclass(frozen=True)
class _Lam:
    lam: float


@dataclass(frozen=True, eq=False)
class ArrivalLattice:
    n: int
    params: object
    tables: dict
    mode: str
    violations: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def stop_times(self):
        return {(j, j): self.tables[(j, j)].action_time for j in range(self.n + 1)}

    @property
    def observe_times(self):
        return {key: t.action_time for key, t in self.tables.items() if key[1] < key[0]}

    def value(self, j, k, y, phi):
        return self.tables[(j, k)](y, phi)

    def zero_elapsed(self, j, k):
        """Table (j, k) right after an observation, as a ValueTable."""
        return self.tables[(j, k)].slice0()


def infinite_horizon_gap(params, n, mu=None):
    """Upper bound on the value lost by having only n rights instead of infinitely many."""
    mu = params.mu if mu is None else mu
    if mu is None or not mu > 0:
        raise DomainError("an arrival rate mu > 0 is required")
    if n < 0:
        raise DomainError("n must be >= 0")
    return (1.0 / params.c) * (mu / (mu + params.lam)) ** (n + 1)


# -- operators at a single state ------------------------------------------

def _mu(params, mu):
    mu = params.mu if mu is None else mu
    if mu is None or not mu > 0:
        raise DomainError("an arrival rate mu > 0 is required")
    return float(mu)


def _check_state(y, phi, params):
    if y < 0 or phi < 0 or not is_feasible(y, phi, params):
        raise DomainError(f"(y={y}, phi={phi}) lies outside the feasible region")


def expected_running_cost(t, phi, params, mu):
    """``E[R(min(U, t), phi)]`` for ``U ~ Exp(mu)``, in closed form."""
    lam, c = params.lam, params.c
    t = np.asarray(t, dtype=float)
    out = (np.asarray(phi) + 1.0) * (-np.expm1(-mu * t)) / mu \
        - (1.0 + lam / c) * (-np.expm1(-(lam + mu) * t)) / (lam + mu)
    return out[()] if np.ndim(out) == 0 else out


def k_bold(w, t, phi, params, rule=None):
    """Gaussian expectation of ``w(0, .)`` after an observation at elapsed ``t``.

    ``w`` is a FeasibleTable or any callable ``w(y, phi)``.  At ``t = 0``
    the jump is the identity.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return float(w(0.0, phi))
    rule = rule or default_rule()
    A, B = jump_coefficients(t, rule.nodes, params)
    q = A * phi + B
    return float(np.dot(rule.weights, w(np.zeros_like(q), q)))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _arrival_integral(w, a, b, y, phi, params, mu):
    """``int_a^b mu exp(-(mu+lam) u) w(y + u, phi(u, phi)) du`` by composite Gauss-Legendre."""
    if b <= a:
        return 0.0
    beta = mu + params.lam
    panels = int(min(4000, max(4, math.ceil(2.0 * (b - a) * beta), math.ceil(b - a))))
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    u = (mid + half * _GL_X[None, :]).ravel()
    wts = (half * _GL_W[None, :]).ravel()
    f = mu * np.exp(-beta * u) * w(y + u, drift_flow(u, phi, params))
    return float(np.dot(wts, f))


def _tail(mu):
    return -math.log(1e-10) / mu


def j0_arrival(w, t, y, phi, params, mu=None):
    """Expected cost of planning to stop ``t`` from now while no right is in hand.

    If a right arrives first (at ``u < t``) the continuation ``w`` takes over
    from ``(y + u, phi(u, phi))``.
    """
    mu = _mu(params, mu)
    _check_state(y, phi, params)
    if t < 0:
        raise DomainError("t must be >= 0")
    val = expected_running_cost(t, phi, params, mu)
    return float(val + _arrival_integral(w, 0.0, min(t, _tail(mu)), y, phi, params, mu))


def j_plus(w1, w2, t, y, phi, params, mu=None, rule=None):
    """Expected cost of planning to observe ``t`` from now with a right in hand.

    An arrival at ``u <= t`` hands over to ``w2``; otherwise the observation
    at ``t`` continues with ``w1`` evaluated just after the jump.
    """
    mu = _mu(params, mu)
    _check_state(y, phi, params)
    if t < 0:
        raise DomainError("t must be >= 0")
    psi = max(math.exp(-params.lam * y) * (phi + 1.0) - 1.0, 0.0)
    val = expected_running_cost(t, phi, params, mu)
    val += _arrival_integral(w2, 0.0, min(t, _tail(mu)), y, phi, params, mu)
    val += math.exp(-(mu + params.lam) * t) * k_bold(w1, y + t, psi, params, rule)
    return float(val)


def j_e(w, t, y, phi, params, rule=None):
    """Expected cost of observing ``t`` from now once every right has arrived."""
    _check_state(y, phi, params)
    if t < 0:
        raise DomainError("t must be >= 0")
    psi = max(math.exp(-params.lam * y) * (phi + 1.0) - 1.0, 0.0)
    return float(running_cost(t, phi, params)
                 + math.exp(-params.lam * t) * k_bold(w, y + t, psi, params, rule))


def _first_min(vals, tgrid, tol=1e-12):
    lo = vals.min()
    i = int(np.argmax(vals <= lo + tol))
    return float(lo), float(tgrid[i])


def _default_tgrid(params, dt=0.1):
    T = horizon_T(params)
    return np.linspace(0.0, T, int(math.ceil(T / dt)) + 1)


def j0_arrival_min(w, y, phi, params, mu=None, tgrid=None):
    """Minimize ``j0_arrival`` over ``tgrid``; returns (value, first minimizer)."""
    mu = _mu(params, mu)
    _check_state(y, phi, params)
    tgrid = _default_tgrid(params) if tgrid is None else np.asarray(tgrid, dtype=float)
    # the w-integral is cumulative in t, so integrate panel by panel once
    cum = np.zeros(tgrid.size)
    tail = _tail(mu)
    for m in range(1, tgrid.size):
        a, b = tgrid[m - 1], min(tgrid[m], tail)
        cum[m] = cum[m - 1] + _arrival_integral(w, a, b, y, phi, params, mu)
    vals = expected_running_cost(tgrid, phi, params, mu) + cum
    return _first_min(vals, tgrid)


def j_plus_min(w1, w2, y, phi, params, mu=None, tgrid=None, rule=None):
    mu = _mu(params, mu)
    _check_state(y, phi, params)
    tgrid = _default_tgrid(params) if tgrid is None else np.asarray(tgrid, dtype=float)
    psi = max(math.exp(-params.lam * y) * (phi + 1.0) - 1.0, 0.0)
    cum = np.zeros(tgrid.size)
    tail = _tail(mu)
    for m in range(1, tgrid.size):
        a, b = tgrid[m - 1], min(tgrid[m], tail)
        cum[m] = cum[m - 1] + _arrival_integral(w2, a, b, y, phi, params, mu)
    kw = np.array([k_bold(w1, y + t, psi, params, rule) for t in tgrid])
    vals = expected_running_cost(tgrid, phi, params, mu) + cum \
        + np.exp(-(mu + params.lam) * tgrid) * kw
    return _first_min(vals, tgrid)


def j_e_min(w, y, phi, params, tgrid=None, rule=None):
    _check_state(y, phi, params)
    tgrid = _default_tgrid(params) if tgrid is None else np.asarray(tgrid, dtype=float)
    vals = np.array([j_e(w, t, y, phi, params, rule) for t in tgrid])
    return _first_min(vals, tgrid)


# -- lattice solver -------------------------------------------------------

class _Grid:
    """Shared flow-line grid plus the per-row quantities every sweep needs."""

    def __init__(self, params, mu, phibar, phi_points, ds, rule, interpolation):
        lam = params.lam
        self.params, self.mu, self.phibar, self.ds = params, mu, phibar, ds
        self.rule, self.interpolation = rule, interpolation
        self.psi = np.linspace(0.0, phibar, phi_points)
        # every flow line has crossed phibar by the last row
        rows = int(math.ceil(math.log(phibar + 1.0) / lam / ds)) + 2
        self.s = np.arange(rows) * ds
        self.odds = np.exp(lam * self.s)[:, None] * (self.psi[None, :] + 1.0) - 1.0
        self.capped = self.odds >= phibar
        self.A, self.B = jump_tables(self.s, params, rule)
        self.step_cost = running_cost(ds, self.odds, params)
        self.decay = math.exp(-lam * ds)
        # decisions are taken on the row grid: a right arriving during a step
        # is usable from the next row on, and the step's running cost accrues
        # either way
        self.arrive = -math.expm1(-mu * ds)
        self.arr_decay = self.decay * math.exp(-mu * ds)

    def table(self, values, when, kind):
        return FeasibleTable(self.s, self.psi, values, self.s[when], kind, self.phibar,
                             self.params.lam, self.interpolation)

    def expect(self, w):
        return expect_after_jump(w.slice0(), self.A, self.B, self.psi, self.rule)

    def arrival_base(self, w2):
        out = self.step_cost.copy()
        out[:-1] += self.decay * self.arrive * w2.values[1:]
        return out


def _finish(g, act, base, decay, act_kind, mode, key, violations, tol):
    best, when = kernels.backward_sweep(act, base, decay, g.capped)
    if mode == "heuristic":
        # threshold rule: act as soon as the elapsed time reaches the
        # first optimal action time seen from zero elapsed time
        istar = when[0]
        rows = np.arange(g.s.size)[:, None]
        late = rows >= istar[None, :]
        act_now = np.where(g.capped, 0.0, act)
        bad = late & ~g.capped & (best < act_now - tol)
        if np.any(bad):
            ii, jj = np.nonzero(bad)
            gap = act_now[bad] - best[bad]
            violations.append({"table": list(key), "cells": int(bad.sum()),
                               "max_gap": float(gap.max()),
                               "worst_y": float(g.s[ii[gap.argmax()]]),
                               "worst_psi": float(g.psi[jj[gap.argmax()]])})
        best = np.where(late, act_now, best)
        when = np.where(late, rows, when)
    kind = np.where(g.capped, STOP, act_kind)
    kind = np.broadcast_to(kind, best.shape).astype(np.int8)
    return g.table(best, when, kind)


def solve_arrival(params, n, mu=None, phibar=None, phi_points=551, ds=0.1, quadrature=64,
                  mode="heuristic", interpolation="linear", violation_tol=1e-8):
    """Fill the lattice of value tables for n rights arriving at rate mu.

    Column j = n (all rights received) comes first, then each lower column
    from its diagonal (nothing in hand: wait for an arrival or stop) down
    to k = 0.  ``mode="heuristic"`` applies the threshold rule (act at once
    whenever the elapsed time is past the action time seen from zero
    elapsed time) and logs cells where a later action would have been
    better; ``mode="exact"`` keeps the full minimization at every cell.
    """
    if int(n) != n or n < 1:
        raise ConfigError("n must be an integer >= 1")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    mu = _mu(params, mu)
    params = params.with_mu(mu)
    if phibar is None:
        from .continuous import phibar as _pb
        try:
            phibar = _pb(params)
        except NumericalError as exc:
            raise ConfigError(f"phibar unavailable: {exc}") from exc
    rule = quadrature if isinstance(quadrature, QuadratureRule) else QuadratureRule.gauss_hermite(quadrature)
    g = _Grid(params, mu, float(phibar), phi_points, ds, rule, interpolation)
    violations = []
    tables = {}

    # nothing left to spend: stop when the flow reaches lam/c
    stop_at = g.s[:, None] + t_star_0(g.odds, params)
    v0 = np.where(g.capped, 0.0, running_cost(t_star_0(g.odds, params), g.odds, params))
    tables[(n, n)] = FeasibleTable(g.s, g.psi, v0, np.where(g.capped, g.s[:, None], stop_at),
                                   np.full(v0.shape, STOP, dtype=np.int8), g.phibar,
                                   params.lam, interpolation)
    for k in range(n - 1, -1, -1):
        act = g.expect(tables[(n, k + 1)])
        tables[(n, k)] = _finish(g, act, g.step_cost, g.decay, OBSERVE, mode, (n, k),
                                 violations, violation_tol)
    for j in range(n - 1, -1, -1):
        base = g.arrival_base(tables[(j + 1, j)])
        tables[(j, j)] = _finish(g, np.zeros_like(base), base, g.arr_decay, STOP, mode, (j, j),
                                 violations, violation_tol)
        for k in range(j - 1, -1, -1):
            act = g.expect(tables[(j, k + 1)])
            base = g.arrival_base(tables[(j + 1, k)])
            tables[(j, k)] = _finish(g, act, base, g.arr_decay, OBSERVE, mode, (j, k),
                                     violations, violation_tol)
    diagnostics = {
        "phibar": g.phibar,
        "phi_points": int(g.psi.size),
        "phi_step": float(g.psi[1] - g.psi[0]),
        "elapsed_rows": int(g.s.size),
        "elapsed_step": float(ds),
        "quadrature_order": int(rule.order),
        "interpolation": interpolation,
        "mode": mode,
        "violation_cells": int(sum(v["cells"] for v in violations)),
    }
    if violations:
        log.info("threshold rule violated in %d cells", diagnostics["violation_cells"])
    return ArrivalLattice(int(n), params, tables, mode, violations, diagnostics)
