"""Model parameters and posterior odds dynamics.

Between observations the odds ratio follows the deterministic flow
``phi(t, phi) = exp(lam*t) * (phi + 1) - 1``.  An observation taken ``dt``
after the previous one, with standardized increment ``z``, maps the odds
held at the previous observation to ``A(dt, z) * phi + B(dt, z)``.
"""
from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import integrate, special

from .errors import DomainError

_SQRT_PI_2 = 0.5 * math.sqrt(math.pi)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the disorder problem.

    Attributes:
        lam: Disorder hazard rate (the exponential rate of the change time).
        c: Cost per unit of detection delay.
        alpha: Drift of the observed process after the disorder.
        p: Prior probability that the disorder has already happened.
        mu: Arrival rate of observation rights; only used by the
            stochastic-arrival solver.
    """

    lam: float = 0.1
    c: float = 0.01
    alpha: float = 1.0
    p: float = 0.0
    mu: float | None = None

    def __post_init__(self):
        for name in ("lam", "c", "alpha", "p"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise DomainError(f"{name} must be a finite number, got {v!r}")
        if self.lam <= 0:
            raise DomainError(f"lam must be > 0, got {self.lam}")
        if self.c <= 0:
            raise DomainError(f"c must be > 0, got {self.c}")
        if self.alpha == 0:
            raise DomainError("alpha must be nonzero")
        if not 0 <= self.p < 1:
            raise DomainError(f"p must lie in [0, 1), got {self.p}")
        if self.mu is not None and not (math.isfinite(self.mu) and self.mu > 0):
            raise DomainError(f"mu must be > 0 when given, got {self.mu}")

    @property
    def phi0(self):
        return odds_from_prior(self.p)

    def with_mu(self, mu):
        return ModelParams(self.lam, self.c, self.alpha, self.p, mu)

    def to_dict(self):
        return asdict(self)


def drift_flow(t, phi, params):
    """Deterministic odds flow; negative ``t`` runs it backwards.

    Raises DomainError if running backwards would leave the nonnegative
    odds (i.e. ``(t, phi)`` is not a reachable elapsed-time/odds pair).
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    out = phi + np.expm1(params.lam * t) * (phi + 1.0)
    if np.any(phi < 0):
        raise DomainError("odds must be nonnegative")
    if np.any(t < 0):
        # slack keeps exact grid points such as phi = e^{lam y} - 1 feasible
        if np.any(out < -1e-12):
            raise DomainError("backward flow leaves the feasible region")
        out = np.maximum(out, 0.0)
    return out[()] if out.ndim == 0 else out


def is_feasible(y, phi, params, slack=1e-12):
    """Membership of (elapsed, odds) in the reachable region phi >= e^{lam y} - 1."""
    return np.asarray(phi) >= np.expm1(params.lam * np.asarray(y)) - slack


def _integral_closed_form(dt, z, lam, alpha):
    # int_0^dt lam*exp(b u - a u^2) du with b = lam + alpha z / sqrt(dt),
    # a = alpha^2 / (2 dt); completing the square gives an erf difference.
    s = abs(alpha) / np.sqrt(2.0 * dt)
    b = lam + alpha * z / np.sqrt(dt)
    m = b * dt / alpha**2
    x0 = -s * m
    x1 = s * (dt - m)
    with np.errstate(over="ignore", invalid="ignore"):
        right = x0 >= 0
        left = x1 <= 0
        mid = ~(right | left)
        out = np.empty(np.broadcast(x0, x1).shape)
        x0b, x1b = np.broadcast_arrays(x0, x1)
        if np.any(right):
            a0, a1 = x0b[right], x1b[right]
            out[right] = special.erfcx(a0) - np.exp(a0 * a0 - a1 * a1) * special.erfcx(a1)
        if np.any(left):
            a0, a1 = x0b[left], x1b[left]
            out[left] = np.exp(a0 * a0 - a1 * a1) * special.erfcx(-a1) - special.erfcx(-a0)
        if np.any(mid):
            a0, a1 = x0b[mid], x1b[mid]
            out[mid] = (special.erf(a1) - special.erf(a0)) * np.exp(a0 * a0)
        sb = np.broadcast_to(s, out.shape)
        return lam * _SQRT_PI_2 * out / sb


def _integral_quad(dt, z, lam, alpha):
    b = lam + alpha * z / math.sqrt(dt)
    a = alpha**2 / (2.0 * dt)
    val, _ = integrate.quad(lambda u: math.exp(b * u - a * u * u), 0.0, dt,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return lam * val


def jump_coefficients(dt, z, params):
    """Return ``(A, B)`` with ``j(dt, phi, z) = A * phi + B``.

    Broadcasts over ``dt`` and ``z``.  ``dt`` must be strictly positive.
    """
    dt = np.asarray(dt, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(~(dt > 0)):
        raise DomainError("dt must be > 0")
    lam, alpha = params.lam, params.alpha
    dt, z = np.broadcast_arrays(dt, z)
    sq = np.sqrt(dt)
    A = np.exp(alpha * z * sq + (lam - 0.5 * alpha**2) * dt)
    B = np.atleast_1d(_integral_closed_form(dt, z, lam, alpha)).reshape(dt.shape)
    bad = ~np.isfinite(B) | (abs(alpha) / np.sqrt(2.0 * dt) == 0)
    if np.any(bad):
        B = np.array(B, copy=True)
        for idx in zip(*np.nonzero(bad)):
            B[idx] = _integral_quad(float(dt[idx]), float(z[idx]), lam, alpha)
    if A.ndim == 0:
        return float(A), float(B)
    return A, B


def jump_update(dt, phi, z, params):
    """Odds right after an observation ``dt`` after the last one.

    ``phi`` is the odds held at the previous observation and ``z`` the
    standardized increment ``(X_t - X_s) / sqrt(dt)``.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0):
        raise DomainError("odds must be nonnegative")
    A, B = jump_coefficients(dt, z, params)
    out = A * phi + B
    return out[()] if np.ndim(out) == 0 else out


def odds_from_prior(p):
    if not 0 <= p < 1:
        raise DomainError(f"prior probability must lie in [0, 1), got {p}")
    return p / (1.0 - p)


def bayes_risk_from_value(p, v, params):
    """Bayes risk ``1 - p + (1 - p) * c * v`` for a value ``v`` at odds p/(1-p)."""
    if not 0 <= p < 1:
        raise DomainError(f"prior probability must lie in [0, 1), got {p}")
    return 1.0 - p + (1.0 - p) * params.c * v
