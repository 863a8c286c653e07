"""Reference values that do not go through any scheme code.

Closed-form CIR transition moments, the mean map of the squared
semi-discrete scheme, and an RK4 solution of the two-factor mean ODE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .params import CirParams, GridSpec, SchemeKind, TwoFactorParams, split_constant


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float


def _phi(kappa: float, t: float) -> float:
    """(1 - exp(-kappa t)) / kappa, equal to t at kappa = 0."""
    if kappa == 0:
        return t
    return -math.expm1(-kappa * t) / kappa


def cir_conditional_moments(theta: float, kappa: float, sigma: float, x: float, t: float) -> MomentPair:
    """Moments of X_t for dX = (theta - kappa X)dt + sigma sqrt(X) dW, X_0 = x."""
    e = math.exp(-kappa * t)
    phi = _phi(kappa, t)
    mean = x * e + theta * phi
    # Var = sigma^2 [ x e phi + theta phi^2 / 2 ]
    variance = sigma**2 * (x * e * phi + 0.5 * theta * phi**2)
    return MomentPair(mean, max(variance, 0.0))


def cir_moments(p: CirParams, t: float) -> MomentPair:
    """Mean and variance of the CIR solution at time ``t`` started from x0."""
    if t < 0:
        raise UsageError("t must be >= 0")
    if t == 0:
        return MomentPair(p.x0, 0.0)
    k, l, s2, x0 = p.k, p.l, p.sigma**2, p.x0
    if k == 0:
        return MomentPair(x0, x0 * s2 * t)
    e1 = math.exp(-k * t)
    one_minus = -math.expm1(-k * t)
    mean = x0 * e1 + l * one_minus
    variance = x0 * (s2 / k) * (e1 - e1 * e1) + l * (s2 / (2.0 * k)) * one_minus**2
    return MomentPair(mean, variance)


def sd_mean_recursion(p: CirParams, g: GridSpec, a: float) -> np.ndarray:
    """Expected node values of the squared semi-discrete scheme.

    E_{j+1} = s^2 D / (4 c^2) + E_j (1 - k D / c) + (D / c)(kl - s^2 / (4c)),  c = 1 + k a D.
    """
    delta = g.delta
    c = 1.0 + p.k * a * delta
    noise_mean = p.sigma**2 * delta / (4.0 * c * c)
    slope = 1.0 - p.k * delta / c
    const = (delta / c) * (p.k * p.l - p.sigma**2 / (4.0 * c))
    out = np.empty(g.n_steps + 1)
    out[0] = p.x0
    for j in range(g.n_steps):
        out[j + 1] = noise_mean + out[j] * slope + const
    return out


def _mean_field(p: TwoFactorParams, m: np.ndarray) -> np.ndarray:
    m1, m2 = m
    return np.array(
        [
            p.k - p.lambda11 * m1 + p.lambda12 * m2,
            p.l - p.lambda21 * m2 + p.lambda22 * m1,
        ]
    )


def _rk4(p: TwoFactorParams, t_max: float, substeps: int) -> np.ndarray:
    h = t_max / substeps
    out = np.empty((substeps + 1, 3))
    m = np.array([p.x10, p.x20], dtype=float)
    out[0] = (0.0, *m)
    for i in range(substeps):
        k1 = _mean_field(p, m)
        k2 = _mean_field(p, m + 0.5 * h * k1)
        k3 = _mean_field(p, m + 0.5 * h * k2)
        k4 = _mean_field(p, m + h * k3)
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = ((i + 1) * h, *m)
    out[-1, 0] = t_max
    return out


def two_factor_mean_ode(p: TwoFactorParams, t_max: float, substeps: int = 2048, check: bool = True) -> np.ndarray:
    """RK4 solution of m1' = k - l11 m1 + l12 m2, m2' = l - l21 m2 + l22 m1.

    Returns rows ``(t, m1, m2)``. With ``check`` the terminal value is
    recomputed with half the substeps and must agree to 1e-10 relative.
    """
    if substeps < 2:
        raise UsageError("substeps must be >= 2")
    out = _rk4(p, t_max, substeps)
    if check:
        coarse = _rk4(p, t_max, substeps // 2)[-1, 1:]
        fine = out[-1, 1:]
        rel = np.max(np.abs(fine - coarse) / np.maximum(np.abs(fine), 1e-300))
        if rel >= 1e-10:
            raise UsageError(f"RK4 not converged: halving substeps changes output by {rel:.3g} relative")
    return out


def two_factor_scheme_mean(p: TwoFactorParams, g: GridSpec, kind: SchemeKind) -> np.ndarray:
    """Expected node values of a two-factor scheme, from its affine mean map.

    Used to size the discretization-bias budget in weak tests: the gap to
    :func:`two_factor_mean_ode` is the scheme's deterministic bias.
    Rows are ``(t, E y1, E y2)``.
    """
    kind = SchemeKind(kind)
    delta = g.delta
    out = np.empty((g.n_steps + 1, 3))
    out[:, 0] = g.nodes()
    m1, m2 = p.x10, p.x20
    out[0, 1:] = (m1, m2)
    if kind is SchemeKind.TWO_FACTOR_SQUARED:
        # E(c dW + sqrt(R))^2 = c^2 delta + R, which is a forward Euler step of the mean ODE
        for j in range(g.n_steps):
            m1, m2 = (
                m1 + delta * (p.k - p.lambda11 * m1 + p.lambda12 * m2),
                m2 + delta * (p.l - p.lambda21 * m2 + p.lambda22 * m1),
            )
            out[j + 1, 1:] = (m1, m2)
    elif kind is SchemeKind.TWO_FACTOR_SPLIT_EXACT:
        k1, k2 = split_constant(p.k, p.sigma1)
        l1, l2 = split_constant(p.l, p.sigma2)
        e1, f1 = math.exp(-p.lambda11 * delta), _phi(p.lambda11, delta)
        e2, f2 = math.exp(-p.lambda21 * delta), _phi(p.lambda21, delta)
        for j in range(g.n_steps):
            v1 = m1 + delta * p.lambda12 * m2 + delta * k1
            v2 = m2 + delta * p.lambda22 * m1 + delta * l1
            m1, m2 = v1 * e1 + k2 * f1, v2 * e2 + l2 * f2
            out[j + 1, 1:] = (m1, m2)
    else:
        raise UsageError(f"no mean map for {kind.value}")
    return out
