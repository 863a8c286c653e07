"""One-factor CIR schemes: single steps and whole-path simulation.

Step functions accept scalars or numpy arrays (one entry per path) and are
pure. ``simulate_paths`` vectorizes over a batch of paths; each path's
numbers depend only on its own substream, never on the batch it ran in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .params import (
    CirParams,
    GridSpec,
    SchemeKind,
    SchemeSpec,
    is_integral,
    snap_integer,
    split_rates,
    validate,
)
from .randomness import BrownianPath, SeedSpec, gaussian_block

# Radicands this far below zero (relative to their terms) are rounding noise
# at a gate boundary and are clamped to 0; anything lower is a DomainError.
RADICAND_RTOL = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class StepDiagnostics:
    radicand: np.ndarray | float
    z_value: np.ndarray | float

    @property
    def sign_flip(self):
        return np.asarray(self.z_value) < 0


def clamp_radicand(radicand, scale):
    """Return ``(radicand with rounding-level negatives set to 0, mask of true negatives)``."""
    radicand = np.asarray(radicand, dtype=float)
    tol = RADICAND_RTOL * np.asarray(scale, dtype=float)
    bad = radicand < -tol
    return np.where(radicand < 0, 0.0, radicand), bad


def _raise_negative(radicand, bad, what="radicand"):
    worst = float(np.min(np.asarray(radicand)[bad]))
    raise DomainError(f"negative {what} {worst:.6g}; the scheme's validity gate was bypassed")


def sd_coefficients(p: CirParams, delta: float, a: float) -> tuple[float, float, float]:
    """``(noise_coef, slope, constant)`` of the squared semi-discrete step.

    y' = (noise_coef * dW + sqrt(slope * y + constant))^2
    """
    c = 1.0 + p.k * a * delta
    noise_coef = p.sigma / (2.0 * c)
    slope = (1.0 - p.k * delta * (1.0 - a)) / c
    constant = delta * (4.0 * p.k * p.l * c - p.sigma**2) / (4.0 * c * c)
    return noise_coef, slope, constant


def sd_radicand(p: CirParams, delta: float, a: float, y):
    _, slope, constant = sd_coefficients(p, delta, a)
    return slope * np.asarray(y, dtype=float) + constant


def sd_squared_step(p: CirParams, delta: float, a: float, y, dW):
    """One step of the squared semi-discrete scheme; returns ``(y_next, StepDiagnostics)``."""
    noise_coef, slope, constant = sd_coefficients(p, delta, a)
    y = np.asarray(y, dtype=float)
    raw = slope * y + constant
    radicand, bad = clamp_radicand(raw, np.abs(slope * y) + abs(constant))
    if np.any(bad):
        _raise_negative(raw, bad)
    z = noise_coef * np.asarray(dW, dtype=float) + np.sqrt(radicand)
    y_next = z * z
    if y_next.ndim == 0:
        return float(y_next), StepDiagnostics(float(radicand), float(z))
    return y_next, StepDiagnostics(radicand, z)


def _integer_degree(theta: float, sigma: float) -> int:
    if sigma == 0:
        raise UsageError("exact step needs sigma > 0")
    d = snap_integer(4.0 * theta / sigma**2)
    if not is_integral(d) or d < 1:
        raise UsageError(f"exact step needs 4*theta/sigma^2 to be a positive integer, got {d}")
    return int(d)


def exact_cir_step(theta: float, kappa: float, sigma: float, x, delta: float, z):
    """Exact transition of dX = (theta - kappa X)dt + sigma sqrt(X) dW over ``delta``.

    ``z`` holds d = 4 theta / sigma^2 standard normals in its last axis. The
    result is sum_j (exp(-kappa delta/2) sqrt(x/d) + (sigma/2) sqrt(phi) z_j)^2
    with phi = (1 - exp(-kappa delta))/kappa (phi = delta at kappa = 0).
    Terms are accumulated in index order.
    """
    d = _integer_degree(theta, sigma)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != d:
        raise UsageError(f"expected {d} Gaussians per step, got {z.shape[-1]}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"exact step needs x >= 0, got {float(np.min(x)):.6g}")
    phi = delta if kappa == 0 else -math.expm1(-kappa * delta) / kappa
    mean_part = math.exp(-0.5 * kappa * delta) * np.sqrt(x / d)
    noise_scale = 0.5 * sigma * math.sqrt(phi)
    term = mean_part + noise_scale * z[..., 0]
    acc = term * term
    for j in range(1, d):
        term = mean_part + noise_scale * z[..., j]
        acc = acc + term * term
    return float(acc) if acc.ndim == 0 else acc


def split_exact_step(p: CirParams, delta: float, y, z):
    """Frozen k1-drift increment followed by an exact step of the k2 part."""
    k1, k2 = split_rates(p)
    y = np.asarray(y, dtype=float)
    v = y * (1.0 - k1 * delta) + delta * k1 * p.l
    if np.any(v < 0):
        raise DomainError(f"negative intermediate value {float(np.min(v)):.6g}; need delta < 1/k1")
    return exact_cir_step(k2 * p.l, k2, p.sigma, v, delta, z)


def truncated_euler_step(p: CirParams, delta: float, y, dW):
    """Full-truncation Euler; the output itself is not truncated and may be negative."""
    y = np.asarray(y, dtype=float)
    yp = np.maximum(y, 0.0)
    out = y + delta * (p.k * p.l - p.k * yp) + p.sigma * np.sqrt(yp) * np.asarray(dW, dtype=float)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class PathDiagnostics:
    """Per-path aggregates of the step diagnostics."""

    flip_count: np.ndarray
    flip_weighted: np.ndarray  # sum over steps of y_{k+1} (sgn z - 1)^2
    min_radicand: np.ndarray
    negative_nodes: np.ndarray


@dataclass(frozen=True, eq=False)
class PathBatch:
    t: np.ndarray
    values: np.ndarray  # (n_paths, n_steps + 1)
    diagnostics: PathDiagnostics
    path_indices: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def _degree_for(spec: SchemeSpec, p: CirParams) -> int:
    if spec.kind is SchemeKind.EXACT:
        return _integer_degree(p.k * p.l, p.sigma)
    _, k2 = split_rates(p)
    return _integer_degree(k2 * p.l, p.sigma)


def simulate_paths(
    p: CirParams,
    g: GridSpec,
    spec: SchemeSpec,
    source: BrownianPath | SeedSpec | int,
    path_indices=None,
    check_gates: bool = True,
) -> PathBatch:
    """Run ``spec`` over a batch of paths.

    ``source`` is either a :class:`BrownianPath` on grid ``g`` (Brownian-driven
    schemes only) or a master seed (int or SeedSpec), in which case each path
    ``i`` in ``path_indices`` draws from its own substream: one Brownian
    increment per step, or d Gaussians per step for the exact/split schemes.
    """
    if spec.kind.two_factor:
        raise UsageError(f"{spec.kind.value} is a two-factor scheme")
    if check_gates:
        verdict = validate(spec, p, g)
        if not verdict:
            raise DomainError(str(verdict))

    n = g.n_steps
    delta = g.delta
    if isinstance(source, BrownianPath):
        if not spec.kind.brownian_driven:
            raise UsageError(f"{spec.kind.value} consumes Gaussian blocks, not Brownian increments")
        if source.n_steps != n or not math.isclose(source.delta, delta, rel_tol=1e-12):
            raise UsageError("Brownian path does not match the grid")
        idx = source.path_indices
        dW = source.noise(0)
    else:
        master = source.master_seed if isinstance(source, SeedSpec) else int(source)
        if path_indices is None:
            path_indices = [source.path_index] if isinstance(source, SeedSpec) else [0]
        idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
        if spec.kind.brownian_driven:
            dW = BrownianPath.generate(master, idx, g).noise(0)
        else:
            d = _degree_for(spec, p)
            z = gaussian_block(master, idx, 0, n * d).reshape(idx.size, n, d)

    n_paths = idx.size
    values = np.empty((n_paths, n + 1))
    values[:, 0] = p.x0
    flips = np.zeros(n_paths, dtype=np.int64)
    weighted = np.zeros(n_paths)
    min_rad = np.full(n_paths, np.inf)
    y = values[:, 0].copy()
    kind = spec.kind
    for j in range(n):
        if kind is SchemeKind.SEMI_DISCRETE_SQUARED:
            y, diag = sd_squared_step(p, delta, spec.a, y, dW[:, j])
            flipped = diag.z_value < 0
            flips += flipped
            # (sgn z - 1)^2 is 4 for z < 0, 1 for z == 0, 0 for z > 0
            weighted += y * np.where(flipped, 4.0, np.where(diag.z_value == 0, 1.0, 0.0))
            min_rad = np.minimum(min_rad, diag.radicand)
        elif kind is SchemeKind.TRUNCATED_EULER:
            y = truncated_euler_step(p, delta, y, dW[:, j])
        elif kind is SchemeKind.EXACT:
            y = exact_cir_step(p.k * p.l, p.k, p.sigma, y, delta, z[:, j, :])
        elif kind is SchemeKind.SPLIT_EXACT:
            y = split_exact_step(p, delta, y, z[:, j, :])
        else:
            raise UsageError(f"unsupported scheme {kind.value}")
        values[:, j + 1] = y
    diagnostics = PathDiagnostics(flips, weighted, min_rad, np.sum(values < 0, axis=1))
    return PathBatch(g.nodes(), values, diagnostics, idx)


@dataclass(frozen=True, eq=False)
class SinglePath:
    t: np.ndarray
    y: np.ndarray
    flip_count: int
    flip_weighted: float
    min_radicand: float


def simulate_path(p: CirParams, g: GridSpec, spec: SchemeSpec, source: BrownianPath | SeedSpec) -> SinglePath:
    """One path: node times, values (n + 1 of them, starting at x0) and aggregated diagnostics."""
    if isinstance(source, BrownianPath) and source.n_paths != 1:
        raise UsageError("simulate_path takes a single-path BrownianPath; use simulate_paths for batches")
    batch = simulate_paths(p, g, spec, source)
    d = batch.diagnostics
    return SinglePath(
        batch.t,
        batch.values[0],
        int(d.flip_count[0]),
        float(d.flip_weighted[0]),
        float(d.min_radicand[0]),
    )
