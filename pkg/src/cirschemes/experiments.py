"""Monte Carlo harness: strong self-convergence, weak moment errors,
positivity audits and the sign-flip study.

Paths are processed in fixed-size chunks of consecutive path indices. Each
chunk returns per-path numbers that depend only on the per-path substreams,
and chunks are concatenated in index order before any reduction, so a
report is bit-identical for any ``workers`` value.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from . import __version__
from .errors import DomainError, UsageError
from .one_factor import simulate_paths
from .oracles import cir_moments, two_factor_mean_ode
from .params import CirParams, GridSpec, SchemeKind, SchemeSpec, TwoFactorParams, validate
from .randomness import BrownianPath, refine_to
from .two_factor import simulate_pair_paths

CHUNK_SIZE = 2000


@dataclass(frozen=True)
class LadderRow:
    delta: float
    strong_error: float | None = None
    std_error: float | None = None
    weak_mean_error: float | None = None
    weak_var_error: float | None = None
    mean_errors: tuple[float, ...] = ()
    mean_std_errors: tuple[float, ...] = ()
    reference: bool = False
    skipped: str | None = None


@dataclass
class ErrorReport:
    scheme: SchemeSpec
    ladder: list[LadderRow]
    fitted_order: float
    fit_residual: float
    n_paths: int
    seed: int
    runtime_seconds: float
    params: dict = field(default_factory=dict)
    kind: str = "strong"
    moment_guard_exceeded: bool = False
    domain_errors: int = 0

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "scheme": self.scheme.to_dict(),
            "params": self.params,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "ladder": [asdict(r) for r in self.ladder],
            "fitted_order": self.fitted_order,
            "fit_residual": self.fit_residual,
            "moment_guard_exceeded": self.moment_guard_exceeded,
            "domain_errors": self.domain_errors,
            "runtime_seconds": self.runtime_seconds,
            "version": __version__,
        }
        return _json_safe(out)


@dataclass(frozen=True)
class SignFlipRow:
    delta: float
    flip_fraction: float
    flip_std_error: float
    weighted: float
    weighted_std_error: float


@dataclass
class SignFlipReport:
    ladder: list[SignFlipRow]
    n_paths: int
    seed: int
    a: float
    params: dict
    runtime_seconds: float

    @property
    def fraction_non_increasing(self) -> bool:
        return non_increasing(
            [r.flip_fraction for r in self.ladder], [r.flip_std_error for r in self.ladder]
        )

    @property
    def weighted_non_increasing(self) -> bool:
        return non_increasing([r.weighted for r in self.ladder], [r.weighted_std_error for r in self.ladder])

    def to_dict(self) -> dict:
        return _json_safe(
            {
                "kind": "signflip",
                "scheme": {"kind": SchemeKind.SEMI_DISCRETE_SQUARED.value, "a": self.a},
                "params": self.params,
                "n_paths": self.n_paths,
                "seed": self.seed,
                "ladder": [asdict(r) for r in self.ladder],
                "fraction_non_increasing": self.fraction_non_increasing,
                "weighted_non_increasing": self.weighted_non_increasing,
                "runtime_seconds": self.runtime_seconds,
                "version": __version__,
            }
        )


@dataclass(frozen=True)
class AuditResult:
    negative_nodes: int
    domain_errors: int
    n_paths: int
    n_steps: int
    min_value: float


@dataclass(frozen=True)
class FitResult:
    slope: float
    residual: float
    excluded: tuple[int, ...] = ()


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def non_increasing(values, std_errors, slack: float = 2.0) -> bool:
    """True if each value is at most its predecessor plus ``slack`` combined standard errors."""
    for (v0, s0), (v1, s1) in zip(zip(values, std_errors), zip(values[1:], std_errors[1:])):
        if v1 > v0 + slack * math.hypot(s0, s1):
            return False
    return True


def fit_order(ladder) -> FitResult:
    """Least-squares slope of log2(error) against log2(delta).

    ``ladder`` is a sequence of ``(delta, error)``. Levels with a zero,
    negative or non-finite error are excluded and listed in ``excluded``.
    """
    ladder = list(ladder)
    if len(ladder) < 2:
        raise UsageError("fit_order needs at least 2 levels")
    keep, excluded = [], []
    for i, (delta, err) in enumerate(ladder):
        if err is not None and math.isfinite(err) and err > 0 and delta > 0:
            keep.append((math.log2(delta), math.log2(err)))
        else:
            excluded.append(i)
    if len(keep) < 2:
        return FitResult(math.nan, math.nan, tuple(excluded))
    x = np.array([k[0] for k in keep])
    y = np.array([k[1] for k in keep])
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    resid = y - (y.mean() + slope * xc)
    return FitResult(slope, float(np.dot(resid, resid)), tuple(excluded))


def _chunks(n_paths: int, chunk: int):
    return [np.arange(i, min(i + chunk, n_paths), dtype=np.int64) for i in range(0, n_paths, chunk)]


def _map_chunks(fn, n_paths: int, workers: int, chunk: int = CHUNK_SIZE):
    chunks = _chunks(n_paths, chunk)
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _params_dict(p) -> dict:
    return asdict(p)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return mean, se


def _strong_chunk(idx, p, g_coarse, spec, levels, valid_levels, seed):
    ref_level = levels + 2
    base = BrownianPath.generate(seed, idx, g_coarse)
    paths = refine_to(base, ref_level)
    cols = []
    for m in list(valid_levels) + [ref_level]:
        grid = g_coarse.refined(m)
        batch = simulate_paths(p, grid, spec, paths[m], check_gates=False)
        cols.append(batch.terminal)
    return np.column_stack(cols)


def strong_self_convergence(
    p: CirParams,
    g_coarse: GridSpec,
    levels: int,
    spec: SchemeSpec,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> ErrorReport:
    """Cauchy-type strong error ladder at the terminal time.

    Level m runs the scheme with step delta/2**m; the reference runs with
    delta/2**(levels + 2). All levels share one Brownian path per sample
    (refined by bridge conditioning), so differences measure discretization
    error rather than sampling noise.
    """
    start = time.perf_counter()
    if spec.kind not in (SchemeKind.SEMI_DISCRETE_SQUARED, SchemeKind.TRUNCATED_EULER):
        raise UsageError(
            f"strong self-convergence needs a Brownian-driven one-factor scheme, got {spec.kind.value}"
        )
    if levels < 3:
        raise UsageError(f"need levels >= 3, got {levels}")
    if n_paths < 2:
        raise UsageError("need at least 2 paths")
    ref_level = levels + 2
    ref_grid = g_coarse.refined(ref_level)
    ref_verdict = validate(spec, p, ref_grid)
    if not ref_verdict:
        raise DomainError(f"reference level invalid: {ref_verdict}")

    valid_levels, skipped = [], {}
    for m in range(levels):
        verdict = validate(spec, p, g_coarse.refined(m))
        if verdict:
            valid_levels.append(m)
        else:
            skipped[m] = str(verdict)

    fn = partial(
        _strong_chunk, p=p, g_coarse=g_coarse, spec=spec, levels=levels, valid_levels=tuple(valid_levels), seed=seed
    )
    terminal = np.concatenate(_map_chunks(fn, n_paths, workers), axis=0)
    ref = terminal[:, -1]
    oracle = cir_moments(p, g_coarse.t_max)

    rows = []
    col = 0
    for m in range(levels):
        delta = g_coarse.delta / 2**m
        if m in skipped:
            rows.append(LadderRow(delta, skipped=skipped[m]))
            continue
        y = terminal[:, col]
        col += 1
        sq = (y - ref) ** 2
        msq, msq_se = _mean_se(sq)
        err = math.sqrt(msq)
        se = msq_se / (2.0 * err) if err > 0 else 0.0
        mean, mean_se = _mean_se(y)
        var = float(np.var(y, ddof=1))
        rows.append(
            LadderRow(
                delta,
                strong_error=err,
                std_error=se,
                weak_mean_error=abs(mean - oracle.mean),
                weak_var_error=abs(var - oracle.variance),
                mean_errors=(abs(mean - oracle.mean),),
                mean_std_errors=(mean_se,),
            )
        )
    ref_mean, ref_se = _mean_se(ref)
    rows.append(
        LadderRow(
            g_coarse.delta / 2**ref_level,
            strong_error=float(math.sqrt(np.mean((ref - ref) ** 2))),
            std_error=0.0,
            weak_mean_error=abs(ref_mean - oracle.mean),
            weak_var_error=abs(float(np.var(ref, ddof=1)) - oracle.variance),
            mean_errors=(abs(ref_mean - oracle.mean),),
            mean_std_errors=(ref_se,),
            reference=True,
        )
    )
    measured = [(r.delta, r.strong_error) for r in rows if not r.reference and r.skipped is None]
    fit = fit_order(measured) if len(measured) >= 2 else FitResult(math.nan, math.nan)
    return ErrorReport(
        scheme=spec,
        ladder=rows,
        fitted_order=fit.slope,
        fit_residual=fit.residual,
        n_paths=n_paths,
        seed=seed,
        runtime_seconds=time.perf_counter() - start,
        params={**_params_dict(p), "t_max": g_coarse.t_max, "n_steps": g_coarse.n_steps, "levels": levels},
        kind="strong",
    )


def _terminal_chunk(idx, p, g, spec, seed):
    if spec.kind.two_factor:
        batch = simulate_pair_paths(p, g, spec, seed, idx, check_gates=False)
        vals = batch.values
        peak = np.nanmax(np.abs(vals), axis=(1, 2)) if vals.size else np.zeros(0)
        return batch.terminal, batch.failed, peak
    batch = simulate_paths(p, g, spec, seed, idx, check_gates=False)
    peak = np.max(np.abs(batch.values), axis=1)
    return batch.terminal[:, None], np.zeros(idx.size, dtype=bool), peak


def simulate_terminal(p, g: GridSpec, spec: SchemeSpec, n_paths: int, seed: int, workers: int = 1):
    """Terminal values ``(n_paths, n_coords)``, failure mask and per-path peak |value|."""
    verdict = validate(spec, p, g)
    if not verdict:
        raise DomainError(str(verdict))
    fn = partial(_terminal_chunk, p=p, g=g, spec=spec, seed=seed)
    parts = _map_chunks(fn, n_paths, workers)
    if not parts:
        n_coords = 2 if spec.kind.two_factor else 1
        return np.zeros((0, n_coords)), np.zeros(0, dtype=bool), np.zeros(0)
    return (
        np.concatenate([q[0] for q in parts]),
        np.concatenate([q[1] for q in parts]),
        np.concatenate([q[2] for q in parts]),
    )


def weak_moment_error(
    p: CirParams | TwoFactorParams,
    g: GridSpec,
    spec: SchemeSpec,
    n_paths: int,
    seed: int,
    workers: int = 1,
    guard_factor: float = 1e6,
) -> ErrorReport:
    """Terminal mean (and, one-factor, variance) error against the oracles.

    Paths whose absolute value ever exceeds ``guard_factor`` times the
    long-run level set ``moment_guard_exceeded``. Failed paths of the
    experimental cross scheme are excluded and counted in ``domain_errors``.
    """
    start = time.perf_counter()
    if n_paths < 2:
        raise UsageError("need at least 2 paths")
    terminal, failed, peak = simulate_terminal(p, g, spec, n_paths, seed, workers)
    ok = ~failed
    if spec.kind.two_factor:
        ode = two_factor_mean_ode(p, g.t_max)[-1, 1:]
        errs, ses = [], []
        for c in range(2):
            mean, se = _mean_se(terminal[ok, c])
            errs.append(abs(mean - ode[c]))
            ses.append(se)
        row = LadderRow(
            g.delta,
            std_error=max(ses),
            weak_mean_error=max(errs),
            mean_errors=tuple(errs),
            mean_std_errors=tuple(ses),
        )
        level = max(p.k, p.l)
    else:
        oracle = cir_moments(p, g.t_max)
        y = terminal[:, 0]
        mean, se = _mean_se(y)
        var = float(np.var(y, ddof=1))
        row = LadderRow(
            g.delta,
            std_error=se,
            weak_mean_error=abs(mean - oracle.mean),
            weak_var_error=abs(var - oracle.variance),
            mean_errors=(abs(mean - oracle.mean),),
            mean_std_errors=(se,),
        )
        level = p.l
    guard = guard_factor * (level if level > 0 else 1.0)
    return ErrorReport(
        scheme=spec,
        ladder=[row],
        fitted_order=math.nan,
        fit_residual=math.nan,
        n_paths=n_paths,
        seed=seed,
        runtime_seconds=time.perf_counter() - start,
        params={**_params_dict(p), "t_max": g.t_max, "n_steps": g.n_steps},
        kind="weak",
        moment_guard_exceeded=bool(np.any(peak[ok] > guard)),
        domain_errors=int(np.sum(failed)),
    )


def _audit_chunk(idx, p, g, spec, seed):
    if spec.kind.two_factor:
        batch = simulate_pair_paths(p, g, spec, seed, idx, check_gates=False)
        vals = batch.values
        neg = int(np.sum(vals < 0))  # NaN compares False
        finite = vals[np.isfinite(vals)]
        return neg, int(np.sum(batch.failed)), float(finite.min()) if finite.size else math.inf
    batch = simulate_paths(p, g, spec, seed, idx, check_gates=False)
    return int(np.sum(batch.values < 0)), 0, float(batch.values.min())


def positivity_audit(spec: SchemeSpec, params, g: GridSpec, n_paths: int, seed: int, workers: int = 1) -> AuditResult:
    """Count negative nodes (and cross-scheme DomainErrors) over ``n_paths`` paths."""
    verdict = validate(spec, params, g)
    if not verdict:
        raise DomainError(str(verdict))
    fn = partial(_audit_chunk, p=params, g=g, spec=spec, seed=seed)
    parts = _map_chunks(fn, n_paths, workers)
    return AuditResult(
        negative_nodes=sum(q[0] for q in parts),
        domain_errors=sum(q[1] for q in parts),
        n_paths=n_paths,
        n_steps=g.n_steps,
        min_value=min((q[2] for q in parts), default=math.inf),
    )


def _signflip_chunk(idx, p, g_coarse, levels, a, seed):
    spec = SchemeSpec(SchemeKind.SEMI_DISCRETE_SQUARED, a)
    paths = refine_to(BrownianPath.generate(seed, idx, g_coarse), levels - 1)
    frac, weighted = [], []
    for m in range(levels):
        grid = g_coarse.refined(m)
        d = simulate_paths(p, grid, spec, paths[m], check_gates=False).diagnostics
        frac.append(d.flip_count / grid.n_steps)
        weighted.append(d.flip_weighted / grid.n_steps)
    return np.column_stack(frac), np.column_stack(weighted)


def sign_flip_study(
    p: CirParams,
    g_coarse: GridSpec,
    levels: int,
    a: float,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> SignFlipReport:
    """Per-step frequency of z < 0 and the time average of y (sgn z - 1)^2 on a dyadic ladder.

    Level m uses step delta/2**m on the bridge-refined version of the same
    Brownian paths.
    """
    start = time.perf_counter()
    if not p.x0 > 0:
        raise UsageError("sign-flip study needs x0 > 0")
    if levels < 1:
        raise UsageError("need at least one level")
    if n_paths < 2:
        raise UsageError("need at least 2 paths")
    for m in range(levels):
        verdict = validate(SchemeSpec(SchemeKind.SEMI_DISCRETE_SQUARED, a), p, g_coarse.refined(m))
        if not verdict:
            raise DomainError(f"level {m}: {verdict}")
    fn = partial(_signflip_chunk, p=p, g_coarse=g_coarse, levels=levels, a=a, seed=seed)
    parts = _map_chunks(fn, n_paths, workers)
    frac = np.concatenate([q[0] for q in parts])
    weighted = np.concatenate([q[1] for q in parts])
    rows = []
    for m in range(levels):
        f, fse = _mean_se(frac[:, m])
        w, wse = _mean_se(weighted[:, m])
        rows.append(SignFlipRow(g_coarse.delta / 2**m, f, fse, w, wse))
    return SignFlipReport(
        ladder=rows,
        n_paths=n_paths,
        seed=seed,
        a=a,
        params={**_params_dict(p), "t_max": g_coarse.t_max, "n_steps": g_coarse.n_steps, "levels": levels},
        runtime_seconds=time.perf_counter() - start,
    )
