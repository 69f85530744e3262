"""Continuous-observation reference value and its stopping threshold.

On the continuation region the value solves

    (alpha^2/2) phi^2 u'' + lam (1 + phi) u' - lam u + phi - lam/c = 0,

bounded at the degenerate point phi = 0, with u(phibar) = u'(phibar) = 0.
``1 + phi`` solves the homogeneous equation exactly, so every solution
regular at 0 is ``u_p + A (1 + phi)`` where ``u_p`` is the regular
particular solution with ``u_p(0) = 0``.  We integrate ``u_p`` forward from
``phi_min`` (a stiff but stable direction: the singular mode decays like
``exp(-2 lam / (alpha^2 phi))`` in reverse) and pick ``phibar`` so that
value matching and smooth fit hold together.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math

import numpy as np
from scipy import integrate, optimize

from .errors import NumericalError
from .operators import ValueTable

log = logging.getLogger(__name__)

PHI_MIN = 1e-6
RTOL = 1e-12
ATOL = 1e-14


@dataclass(frozen=True, eq=False)
class ContinuousSolution:
    table: ValueTable
    phibar: float
    coef: float
    params: object
    ode_stats: dict = field(default_factory=dict)
    _dense: object = None

    def value(self, phi):
        """Value from the ODE's dense output (0 from ``phibar`` on)."""
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(phi.shape)
        inside = phi < self.phibar
        q = phi[inside]
        u = np.empty(q.shape)
        small = q < PHI_MIN
        if np.any(~small):
            u[~small] = self._dense(q[~small])[0]
        if np.any(small):
            u0, du0 = self._dense(PHI_MIN)
            u[small] = u0 + (q[small] - PHI_MIN) * du0
        out[inside] = u + self.coef * (1.0 + q)
        return out[()] if out.ndim == 0 else out

    @property
    def value_at_zero(self):
        return float(self.value(0.0))


def _rhs(params):
    lam, c, h = params.lam, params.c, 0.5 * params.alpha**2

    def f(phi, y):
        u, du = y
        return [du, -(lam * (1.0 + phi) * du - lam * u + phi - lam / c) / (h * phi * phi)]
    return f


def _jac(params):
    lam, h = params.lam, 0.5 * params.alpha**2

    def jac(phi, y):
        d = h * phi * phi
        return [[0.0, 1.0], [lam / d, -lam * (1.0 + phi) / d]]
    return jac


def _start(params):
    # series of the regular particular solution: u = phi/c - phi^2/(2 lam) + O(phi^3)
    lam, c = params.lam, params.c
    x = PHI_MIN
    return [x / c - x * x / (2.0 * lam), 1.0 / c - x / lam]


def _integrate(params, phi_end, dense=False):
    sol = integrate.solve_ivp(_rhs(params), (PHI_MIN, phi_end), _start(params), method="Radau",
                              jac=_jac(params), rtol=RTOL, atol=ATOL, dense_output=dense)
    if not sol.success:
        raise NumericalError(f"ODE integration failed: {sol.message}")
    return sol


def _det(u, du, phi):
    # Wronskian of u_p and 1 + phi; zero exactly where smooth fit can hold
    return u - (1.0 + phi) * du


def solve_continuous(params, phi_step=0.1, interpolation="linear", max_phi=1e7):
    """Solve the free-boundary problem.

    Returns a ContinuousSolution whose table lives on a uniform grid on
    ``[0, phibar]`` with spacing at most ``phi_step``.
    """
    if not phi_step > 0:
        raise ValueError("phi_step must be > 0")
    lam, c = params.lam, params.c
    lo = lam / c
    hi = max(2.0 * lo, 1.0)
    while True:
        sol = _integrate(params, hi, dense=True)
        u, du = sol.y[:, -1]
        if _det(u, du, hi) > 0:
            break
        if hi > max_phi:
            raise NumericalError(f"no free boundary found below {max_phi}; last bracket [{lo}, {hi}]")
        lo, hi = hi, 4.0 * hi
    f = lambda x: _det(*sol.sol(x), x)
    if not f(lo) < 0:
        # lam/c always lies in the continuation region; anything else is a solver fault
        raise NumericalError(f"free-boundary bracket lost sign; last bracket [{lo}, {hi}]")
    phibar, rr = optimize.brentq(f, lo, hi, xtol=1e-12, full_output=True)
    if not rr.converged:
        raise NumericalError(f"bisection did not converge; last bracket [{lo}, {hi}]")

    # polish on endpoint values, which are more accurate than the interpolant
    rhs = _rhs(params)
    newton = 0
    for newton in range(1, 6):
        end = _integrate(params, phibar)
        u, du = end.y[:, -1]
        d2 = rhs(phibar, [u, du])[1]
        step = _det(u, du, phibar) / ((1.0 + phibar) * d2)
        phibar += step
        if abs(step) < 1e-12 * phibar:
            break
    sol = _integrate(params, phibar, dense=True)
    u, du = sol.y[:, -1]
    coef = -du
    stats = {
        "method": "Radau",
        "rtol": RTOL,
        "phi_min": PHI_MIN,
        "nfev": int(sol.nfev),
        "njev": int(sol.njev),
        "bisection_iterations": int(rr.iterations),
        "newton_iterations": newton,
        "value_at_phibar": float(u + coef * (1.0 + phibar)),
        "slope_at_phibar": float(du + coef),
    }
    n = int(math.ceil(phibar / phi_step - 1e-9)) + 1
    grid = np.linspace(0.0, phibar, max(n, 2))
    res = ContinuousSolution(None, float(phibar), float(coef), params, stats, sol.sol)
    vals = res.value(grid[:-1])
    table = ValueTable(grid, np.append(vals, 0.0), phibar, interpolation)
    object.__setattr__(res, "table", table)
    stats["residual_sup"] = float(ode_residual(res, grid[1:-1]).max())
    log.debug("continuous solve: phibar=%.10g v(0)=%.10g", phibar, res.value_at_zero)
    return res


def ode_residual(sol, phi):
    """Absolute ODE residual of the solution at interior points ``phi``.

    ``u''`` comes from a five-point difference of the dense ``u'``, so this
    checks the integrator rather than restating the right-hand side.
    """
    p = sol.params
    phi = np.asarray(phi, dtype=float)
    h = 1e-3 * np.maximum(phi, 1.0)
    h = np.minimum(h, 0.25 * (phi - PHI_MIN))
    d = lambda x: sol._dense(x)[1]
    u, du = sol._dense(phi)
    d2 = (d(phi - 2 * h) - 8 * d(phi - h) + 8 * d(phi + h) - d(phi + 2 * h)) / (12.0 * h)
    u = u + sol.coef * (1.0 + phi)
    du = du + sol.coef
    r = 0.5 * p.alpha**2 * phi**2 * d2 + p.lam * (1.0 + phi) * du - p.lam * u + phi - p.lam / p.c
    return np.abs(r)


@lru_cache(maxsize=64)
def _phibar_cached(params):
    return solve_continuous(params).phibar


def phibar(params):
    """Stopping threshold of the continuous problem (cached per parameter set)."""
    if params.mu is not None or params.p != 0:
        params = type(params)(params.lam, params.c, params.alpha)
    return _phibar_cached(params)
