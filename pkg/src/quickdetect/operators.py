"""Lump-sum operators K, J and J0 plus the analytic bounds used to size grids."""
from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import DomainError
from .model import jump_coefficients

INTERPOLATIONS = ("linear", "constant")
C1 = math.sqrt(2.0 / math.pi)  # E|Z| for a standard normal Z


@dataclass(frozen=True, eq=False)
class ValueTable:
    """A value function tabulated on an odds grid, identically 0 from ``phibar`` on.

    Between nodes the table is interpolated linearly by default; pass
    ``interpolation="constant"`` for the left-node step function.
    """

    grid: np.ndarray
    values: np.ndarray
    phibar: float
    interpolation: str = "linear"

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        v = np.array(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise DomainError("grid and values must be 1-d arrays of equal length >= 2")
        if g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise DomainError("grid must start at 0 and be strictly increasing")
        if g[-1] < self.phibar * (1 - 1e-12):
            raise DomainError("grid must reach phibar")
        if self.interpolation not in INTERPOLATIONS:
            raise DomainError(f"interpolation must be one of {INTERPOLATIONS}")
        v = np.where(g >= self.phibar, 0.0, v)
        g.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "phibar", float(self.phibar))

    @classmethod
    def from_function(cls, f, grid, phibar, interpolation="linear"):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(f(grid), dtype=float), phibar, interpolation)

    @property
    def linear(self):
        return self.interpolation == "linear"

    @property
    def step(self):
        """Grid spacing if the grid is uniform, else None."""
        d = np.diff(self.grid)
        h = self.grid[-1] / (self.grid.size - 1)
        return h if np.allclose(d, h, rtol=1e-12, atol=0) else None

    def __call__(self, phi):
        q = np.asarray(phi, dtype=float)
        out = np.zeros(q.shape)
        ok = (q < self.phibar) & (q < self.grid[-1])
        qs = q[ok]
        i = np.searchsorted(self.grid, qs, side="right") - 1
        i = np.clip(i, 0, self.grid.size - 2)
        if self.linear:
            g0, g1 = self.grid[i], self.grid[i + 1]
            fr = (qs - g0) / (g1 - g0)
            out[ok] = self.values[i] + fr * (self.values[i + 1] - self.values[i])
        else:
            out[ok] = self.values[i]
        return out[()] if out.ndim == 0 else out

    def with_values(self, values):
        return ValueTable(self.grid, values, self.phibar, self.interpolation)


def constant_table(value, phibar, grid=None, interpolation="constant"):
    """A table equal to ``value`` below ``phibar`` (and 0 from there on).

    The step interpolation keeps the value exact right up to ``phibar``.
    """
    if grid is None:
        grid = np.array([0.0, phibar])
    grid = np.asarray(grid, dtype=float)
    return ValueTable(grid, np.full(grid.shape, float(value)), phibar, interpolation)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Probabilists' Gauss-Hermite rule with weights normalized to sum to 1."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "order", len(self.nodes))

    @classmethod
    def gauss_hermite(cls, order=64):
        if order < 1:
            raise DomainError("quadrature order must be >= 1")
        x, w = np.polynomial.hermite_e.hermegauss(order)
        x = 0.5 * (x - x[::-1])  # exact symmetry
        w = 0.5 * (w + w[::-1])
        return cls(x, w / w.sum())

    def expect(self, f):
        return float(np.dot(self.weights, f(self.nodes)))


_DEFAULT_RULE = None


def default_rule():
    global _DEFAULT_RULE
    if _DEFAULT_RULE is None:
        _DEFAULT_RULE = QuadratureRule.gauss_hermite(64)
    return _DEFAULT_RULE


def running_cost(t, phi, params):
    """Discounted cost ``int_0^t exp(-lam u) (phi(u, phi) - lam/c) du``."""
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    lam, c = params.lam, params.c
    out = (phi + 1.0) * t + (1.0 + lam / c) * np.expm1(-lam * t) / lam
    return out[()] if np.ndim(out) == 0 else out


def t_star_0(phi, params):
    """Time for the flow started at ``phi`` to reach ``lam/c`` (0 if already there)."""
    lam, c = params.lam, params.c
    phi = np.asarray(phi, dtype=float)
    out = np.maximum(np.log((c + lam) / (c * (phi + 1.0))) / lam, 0.0)
    return out[()] if out.ndim == 0 else out


def horizon_T(params):
    """Upper bound on any optimal waiting time."""
    return (1.0 + params.lam / params.c) / params.lam + 1.0 / params.c


def grid_sizes(params, epsilon, lip, phibar):
    """Worst-case time and odds step counts for accuracy ``epsilon``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be > 0")
    lam, c, alpha = params.lam, params.c, abs(params.alpha)
    a = 1.0 + lam / c + 1.0 / c
    b = phibar * (alpha * C1 / 2.0 + lam) + lam + alpha * C1 / 2.0
    M = phibar + a + b * lip
    return int(math.ceil(M / epsilon**2)), int(math.ceil(lip / epsilon))


def planned_evaluations(params, n_max, epsilon, phibar):
    """J evaluations the worst-case grids would need for ``n_max`` steps.

    Step ``n`` works on ``v_{n-1}``, whose Lipschitz constant is at most
    ``n * T``; each step gets tolerance ``epsilon / n_max``.
    """
    T = horizon_T(params)
    total = 0
    for n in range(1, n_max + 1):
        nt, nphi = grid_sizes(params, epsilon / n_max, n * T, phibar)
        total += nt * (nphi + 1)
    return total


def time_grid(params, dt=0.1, steps=None):
    """Uniform grid on ``[0, T]`` with spacing at most ``dt`` (or exactly ``steps`` steps)."""
    T = horizon_T(params)
    if steps is None:
        if not dt > 0:
            raise DomainError("dt must be > 0")
        steps = int(math.ceil(T / dt - 1e-9))
    if steps < 1:
        raise DomainError("time grid needs at least one step")
    return np.linspace(0.0, T, steps + 1)


def jump_tables(times, params, rule):
    """Coefficients ``A, B`` of the jump map for each time and quadrature node.

    Row 0 is the identity map when ``times[0] == 0``.
    """
    times = np.asarray(times, dtype=float)
    A = np.ones((times.size, rule.order))
    B = np.zeros((times.size, rule.order))
    pos = times > 0
    if np.any(pos):
        a, b = jump_coefficients(times[pos][:, None], rule.nodes[None, :], params)
        A[pos], B[pos] = a, b
    return A, B


def expect_after_jump(w, A, B, psi, rule):
    """``out[m, j] = sum_k weight_k * w(A[m, k] psi_j + B[m, k])``."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    h = w.step
    if h is not None:
        return kernels.expect_table(A, B, rule.weights, psi, w.values, h, w.phibar,
                                    w.grid[-1], w.linear)
    out = np.zeros((A.shape[0], psi.size))
    for k in range(rule.order):
        out += rule.weights[k] * w(A[:, k, None] * psi[None, :] + B[:, k, None])
    return out


def k_op(w, t, phi, params, rule=None):
    """Gaussian expectation of ``w`` evaluated after an observation at elapsed ``t``."""
    if not t > 0:
        raise DomainError("k_op needs t > 0")
    rule = rule or default_rule()
    phi_arr = np.asarray(phi, dtype=float)
    A, B = jump_tables([t], params, rule)
    out = expect_after_jump(w, A, B, phi_arr.ravel(), rule)[0].reshape(phi_arr.shape)
    return out[()] if out.ndim == 0 else out


def j_op(w, t, phi, params, rule=None):
    """Cost of waiting ``t`` and then observing, continuing with ``w``.

    ``t = 0`` means stopping at once and returns 0.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return 0.0 * np.asarray(phi, dtype=float) + 0.0
    return running_cost(t, phi, params) + math.exp(-params.lam * t) * k_op(w, t, phi, params, rule)


def j0_op(w, phi, tgrid, params, rule=None, tol=1e-12):
    """Minimize ``j_op(w, t, phi)`` over ``tgrid``.

    Returns the minimum and the smallest grid time within ``tol`` of it.
    Odds at or above the table's cap stop at once with value 0.
    """
    rule = rule or default_rule()
    tgrid = np.asarray(tgrid, dtype=float)
    if tgrid[0] != 0.0:
        tgrid = np.concatenate([[0.0], tgrid])
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=float))
    A, B = jump_tables(tgrid, params, rule)
    KW = expect_after_jump(w, A, B, phi_arr, rule)
    vals, idx = kernels.lump_minimize(KW, tgrid, phi_arr, params.lam, params.c, tol)
    capped = phi_arr >= w.phibar
    vals = np.where(capped, 0.0, vals)
    ts = np.where(capped, 0.0, tgrid[idx])
    if np.ndim(phi) == 0:
        return float(vals[0]), float(ts[0])
    return vals, ts
