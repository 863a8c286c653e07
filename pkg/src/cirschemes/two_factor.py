"""Two-factor CIR schemes.

Both coordinates of a step are computed from the time-t_k pair only, so the
update is explicit and parallel; the order in which the two coordinates are
evaluated cannot change the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .one_factor import _integer_degree, clamp_radicand, exact_cir_step
from .params import GridSpec, SchemeKind, SchemeSpec, TwoFactorParams, split_constant, validate
from .randomness import BrownianPath, SeedSpec, gaussian_block


@dataclass(frozen=True)
class PairState:
    t_index: int
    y1: np.ndarray | float
    y2: np.ndarray | float


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def split_degrees(p: TwoFactorParams) -> tuple[int, int]:
    """Gaussians per step consumed by the exact sub-steps of each coordinate."""
    _, k2 = split_constant(p.k, p.sigma1)
    _, l2 = split_constant(p.l, p.sigma2)
    return _integer_degree(k2, p.sigma1), _integer_degree(l2, p.sigma2)


def two_factor_split_step(p: TwoFactorParams, delta: float, s: PairState, z1, z2) -> PairState:
    """Freeze the cross terms and the non-integer drift remainder, then step each coordinate exactly.

    v1 = y1 + delta (lambda12 y2 + k1), then y1' is an exact draw of
    dy = (k2 - lambda11 y)dt + sigma1 sqrt(y) dW1 started at v1; symmetrically
    for y2 with (l1, l2, lambda22, lambda21, sigma2).
    """
    k1, k2 = split_constant(p.k, p.sigma1)
    l1, l2 = split_constant(p.l, p.sigma2)
    y1 = np.asarray(s.y1, dtype=float)
    y2 = np.asarray(s.y2, dtype=float)
    v1 = y1 + delta * p.lambda12 * y2 + delta * k1
    v2 = y2 + delta * p.lambda22 * y1 + delta * l1
    n1 = exact_cir_step(k2, p.lambda11, p.sigma1, v1, delta, z1)
    n2 = exact_cir_step(l2, p.lambda21, p.sigma2, v2, delta, z2)
    return PairState(s.t_index + 1, n1, n2)


def _squared_radicands(p: TwoFactorParams, delta: float, y1, y2):
    a1 = y1 * (1.0 - p.lambda11 * delta)
    b1 = delta * p.lambda12 * y2
    c1 = delta * (p.k - p.sigma1**2 / 4.0)
    a2 = y2 * (1.0 - p.lambda21 * delta)
    b2 = delta * p.lambda22 * y1
    c2 = delta * (p.l - p.sigma2**2 / 4.0)
    r1 = a1 + b1 + c1
    r2 = a2 + b2 + c2
    s1 = np.abs(a1) + np.abs(b1) + abs(c1)
    s2 = np.abs(a2) + np.abs(b2) + abs(c2)
    return (r1, s1), (r2, s2)


def _cross_radicands(p: TwoFactorParams, delta: float, y1, y2):
    a1 = y1 * (1.0 - p.lambda11 * delta)
    b1 = delta * p.lambda12 * y2
    c1 = delta * (p.k - p.sigma1**2 * y2 / 4.0)
    a2 = y2 * (1.0 - p.lambda21 * delta)
    b2 = delta * p.lambda22 * y1
    c2 = delta * (p.l - p.sigma2**2 * y1 / 4.0)
    r1 = a1 + b1 + c1
    r2 = a2 + b2 + c2
    s1 = np.abs(a1) + np.abs(b1) + np.abs(c1)
    s2 = np.abs(a2) + np.abs(b2) + np.abs(c2)
    return (r1, s1), (r2, s2)


def _checked(raw, scale):
    rad, bad = clamp_radicand(raw, scale)
    if np.any(bad):
        worst = float(np.min(np.asarray(raw)[bad]))
        raise DomainError(f"negative radicand {worst:.6g}")
    return rad


def two_factor_squared_step(p: TwoFactorParams, delta: float, s: PairState, dW1, dW2):
    """Returns ``(PairState, (diag1, diag2))``; diagnostics are ``(radicand, z)`` pairs."""
    y1 = np.asarray(s.y1, dtype=float)
    y2 = np.asarray(s.y2, dtype=float)
    (r1, s1), (r2, s2) = _squared_radicands(p, delta, y1, y2)
    r1 = _checked(r1, s1)
    r2 = _checked(r2, s2)
    z1 = 0.5 * p.sigma1 * np.asarray(dW1, dtype=float) + np.sqrt(r1)
    z2 = 0.5 * p.sigma2 * np.asarray(dW2, dtype=float) + np.sqrt(r2)
    state = PairState(s.t_index + 1, _out(z1 * z1), _out(z2 * z2))
    return state, ((_out(r1), _out(z1)), (_out(r2), _out(z2)))


def two_factor_cross_step(p: TwoFactorParams, delta: float, s: PairState, dW1, dW2) -> PairState:
    """EXPERIMENTAL: the squared scheme adapted to sqrt(x1 x2) diffusion.

    No validity gate is known; a negative radicand raises DomainError and is
    never clamped.
    """
    y1 = np.asarray(s.y1, dtype=float)
    y2 = np.asarray(s.y2, dtype=float)
    (r1, s1), (r2, s2) = _cross_radicands(p, delta, y1, y2)
    r1 = _checked(r1, s1)
    r2 = _checked(r2, s2)
    z1 = 0.5 * p.sigma1 * np.sqrt(y2) * np.asarray(dW1, dtype=float) + np.sqrt(r1)
    z2 = 0.5 * p.sigma2 * np.sqrt(y1) * np.asarray(dW2, dtype=float) + np.sqrt(r2)
    return PairState(s.t_index + 1, _out(z1 * z1), _out(z2 * z2))


@dataclass(frozen=True, eq=False)
class PairBatch:
    t: np.ndarray
    values: np.ndarray  # (n_paths, n_steps + 1, 2); NaN after a failed step
    flip_count: np.ndarray  # (n_paths, 2)
    failed: np.ndarray  # (n_paths,) bool
    failed_step: np.ndarray  # (n_paths,) step index of the DomainError, -1 if none
    path_indices: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1, :]


def simulate_pair_paths(
    p: TwoFactorParams,
    g: GridSpec,
    spec: SchemeSpec,
    source: BrownianPath | SeedSpec | int,
    path_indices=None,
    check_gates: bool = True,
) -> PairBatch:
    """Iterate a two-factor scheme from (x10, x20).

    Noise 0 drives coordinate 1 and noise 1 drives coordinate 2. For the
    experimental cross-diffusion scheme a DomainError stops only the path
    that hit it; the path is marked failed and its later nodes are NaN.
    """
    kind = spec.kind
    if not kind.two_factor:
        raise UsageError(f"{kind.value} is not a two-factor scheme")
    if check_gates:
        verdict = validate(spec, p, g)
        if not verdict:
            raise DomainError(str(verdict))

    n = g.n_steps
    delta = g.delta
    if isinstance(source, BrownianPath):
        if not kind.brownian_driven:
            raise UsageError(f"{kind.value} consumes Gaussian blocks, not Brownian increments")
        if source.n_noise != 2:
            raise UsageError("two-factor schemes need a path with 2 noises")
        if source.n_steps != n or not math.isclose(source.delta, delta, rel_tol=1e-12):
            raise UsageError("Brownian path does not match the grid")
        idx = source.path_indices
        dW1, dW2 = source.noise(0), source.noise(1)
    else:
        master = source.master_seed if isinstance(source, SeedSpec) else int(source)
        if path_indices is None:
            path_indices = [source.path_index] if isinstance(source, SeedSpec) else [0]
        idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
        if kind.brownian_driven:
            bp = BrownianPath.generate(master, idx, g, n_noise=2)
            dW1, dW2 = bp.noise(0), bp.noise(1)
        else:
            d1, d2 = split_degrees(p)
            z1 = gaussian_block(master, idx, 0, n * d1).reshape(idx.size, n, d1)
            z2 = gaussian_block(master, idx, 1, n * d2).reshape(idx.size, n, d2)

    n_paths = idx.size
    values = np.empty((n_paths, n + 1, 2))
    values[:, 0, 0] = p.x10
    values[:, 0, 1] = p.x20
    flips = np.zeros((n_paths, 2), dtype=np.int64)
    failed = np.zeros(n_paths, dtype=bool)
    failed_step = np.full(n_paths, -1, dtype=np.int64)
    state = PairState(0, values[:, 0, 0].copy(), values[:, 0, 1].copy())
    for j in range(n):
        if kind is SchemeKind.TWO_FACTOR_SPLIT_EXACT:
            state = two_factor_split_step(p, delta, state, z1[:, j, :], z2[:, j, :])
        elif kind is SchemeKind.TWO_FACTOR_SQUARED:
            state, ((_, zz1), (_, zz2)) = two_factor_squared_step(p, delta, state, dW1[:, j], dW2[:, j])
            flips[:, 0] += np.asarray(zz1) < 0
            flips[:, 1] += np.asarray(zz2) < 0
        else:
            state = _cross_batch_step(p, delta, state, dW1[:, j], dW2[:, j], failed, failed_step, j)
        values[:, j + 1, 0] = state.y1
        values[:, j + 1, 1] = state.y2
    return PairBatch(g.nodes(), values, flips, failed, failed_step, idx)


def _cross_batch_step(p, delta, state, dW1, dW2, failed, failed_step, j):
    y1 = np.asarray(state.y1, dtype=float)
    y2 = np.asarray(state.y2, dtype=float)
    (r1, s1), (r2, s2) = _cross_radicands(p, delta, y1, y2)
    r1, bad1 = clamp_radicand(r1, s1)
    r2, bad2 = clamp_radicand(r2, s2)
    newly = (bad1 | bad2) & ~failed
    failed_step[newly] = j
    failed |= newly
    with np.errstate(invalid="ignore"):
        z1 = 0.5 * p.sigma1 * np.sqrt(y2) * dW1 + np.sqrt(r1)
        z2 = 0.5 * p.sigma2 * np.sqrt(y1) * dW2 + np.sqrt(r2)
    n1 = np.where(failed, np.nan, z1 * z1)
    n2 = np.where(failed, np.nan, z2 * z2)
    return PairState(state.t_index + 1, n1, n2)
