"""Model, grid and scheme parameter containers plus the validity gates.

Every scheme in the package is only defined on part of the parameter space.
The ``validate_*`` functions never raise for an out-of-range configuration;
they return a :class:`ValidityVerdict` naming each violated inequality with
both of its sides so callers (and the CLI) can report it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError

# Degrees this close (relatively) to an integer are treated as that integer.
INTEGER_SNAP_RTOL = 1e-9


class SchemeKind(str, enum.Enum):
    SEMI_DISCRETE_SQUARED = "sd"
    SPLIT_EXACT = "split"
    EXACT = "exact"
    TRUNCATED_EULER = "euler"
    TWO_FACTOR_SPLIT_EXACT = "tf-split"
    TWO_FACTOR_SQUARED = "tf-squared"
    TWO_FACTOR_CROSS = "tf-cross"

    @property
    def two_factor(self) -> bool:
        return self.value.startswith("tf-")

    @property
    def brownian_driven(self) -> bool:
        """True when the scheme consumes Brownian increments (not raw Gaussian blocks)."""
        return self in _BROWNIAN_KINDS

    @property
    def positivity_preserving(self) -> bool:
        return self not in (SchemeKind.TRUNCATED_EULER, SchemeKind.TWO_FACTOR_CROSS)


_BROWNIAN_KINDS = frozenset(
    {
        SchemeKind.SEMI_DISCRETE_SQUARED,
        SchemeKind.TRUNCATED_EULER,
        SchemeKind.TWO_FACTOR_SQUARED,
        SchemeKind.TWO_FACTOR_CROSS,
    }
)


def _check_nonnegative(owner: str, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value) or value < 0:
            raise UsageError(f"{owner}.{name} must be finite and >= 0, got {value!r}")


def snap_integer(x: float, rtol: float = INTEGER_SNAP_RTOL) -> float:
    """Return ``round(x)`` if ``x`` is within ``rtol`` (relative) of it, else ``x``."""
    if not math.isfinite(x):
        return x
    r = round(x)
    if abs(x - r) <= rtol * max(1.0, abs(x)):
        return float(r)
    return x


def is_integral(x: float) -> bool:
    return math.isfinite(x) and float(x).is_integer()


@dataclass(frozen=True)
class CirParams:
    """Parameters of dx = k(l - x)dt + sigma sqrt(x) dW, x(0) = x0."""

    k: float
    l: float
    sigma: float
    x0: float

    def __post_init__(self):
        _check_nonnegative("CirParams", k=self.k, l=self.l, sigma=self.sigma, x0=self.x0)

    @property
    def degree(self) -> float:
        """4kl/sigma^2, snapped to an integer when within rounding of one.

        ``math.inf`` flags the deterministic case sigma = 0.
        """
        if self.sigma == 0:
            return math.inf
        return snap_integer(4.0 * self.k * self.l / self.sigma**2)


@dataclass(frozen=True)
class TwoFactorParams:
    """Two-factor CIR model.

    dx1 = (k - lambda11 x1 + lambda12 x2)dt + sigma1 sqrt(x1) dW1
    dx2 = (l - lambda21 x2 + lambda22 x1)dt + sigma2 sqrt(x2) dW2
    """

    k: float
    l: float
    lambda11: float
    lambda12: float
    lambda21: float
    lambda22: float
    sigma1: float
    sigma2: float
    x10: float
    x20: float

    def __post_init__(self):
        _check_nonnegative(
            "TwoFactorParams",
            k=self.k,
            l=self.l,
            lambda11=self.lambda11,
            lambda12=self.lambda12,
            lambda21=self.lambda21,
            lambda22=self.lambda22,
            sigma1=self.sigma1,
            sigma2=self.sigma2,
            x10=self.x10,
            x20=self.x20,
        )

    @property
    def degree1(self) -> float:
        if self.sigma1 == 0:
            return math.inf
        return snap_integer(4.0 * self.k / self.sigma1**2)

    @property
    def degree2(self) -> float:
        if self.sigma2 == 0:
            return math.inf
        return snap_integer(4.0 * self.l / self.sigma2**2)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid 0 = t_0 < ... < t_n = t_max."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise UsageError(f"GridSpec.t_max must be finite and > 0, got {self.t_max!r}")
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise UsageError(f"GridSpec.n_steps must be an integer >= 1, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def delta(self) -> float:
        return self.t_max / self.n_steps

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    def refined(self, levels: int = 1) -> GridSpec:
        """The grid with each step split into 2**levels equal steps."""
        return GridSpec(self.t_max, self.n_steps * 2**levels)


@dataclass(frozen=True)
class SchemeSpec:
    kind: SchemeKind
    a: float | None = None

    def __post_init__(self):
        kind = SchemeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is SchemeKind.SEMI_DISCRETE_SQUARED:
            if self.a is None:
                raise UsageError("the semi-discrete squared scheme needs a weight a in [0, 1]")
            if not (0.0 <= self.a <= 1.0):
                raise UsageError(f"weight a must lie in [0, 1], got {self.a!r}")
        elif self.a is not None:
            raise UsageError(f"weight a only applies to the sd scheme, not {kind.value}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "a": self.a}


@dataclass(frozen=True)
class GateFailure:
    gate: str
    description: str
    lhs: float
    relation: str
    rhs: float

    def __str__(self) -> str:
        return f"gate {self.gate} violated ({self.description}): {self.lhs:.6g} {self.relation} {self.rhs:.6g}"


@dataclass(frozen=True)
class ValidityVerdict:
    failures: tuple[GateFailure, ...] = ()
    details: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "Valid"
        return "Invalid: " + "; ".join(str(f) for f in self.failures)


def semidiscrete_threshold(p: CirParams) -> float:
    """Smallest admissible a*delta, (sigma^2 - 4kl)/(4k^2 l); 0 when sigma^2 <= 4kl."""
    excess = p.sigma**2 - 4.0 * p.k * p.l
    if excess <= 0:
        return 0.0
    denom = 4.0 * p.k**2 * p.l
    return math.inf if denom == 0 else excess / denom


def validate_semidiscrete(p: CirParams, g: GridSpec, a: float) -> ValidityVerdict:
    if not (0.0 <= a <= 1.0):
        raise UsageError(f"weight a must lie in [0, 1], got {a!r}")
    delta = g.delta
    failures = []
    threshold = semidiscrete_threshold(p)
    if threshold > 0 and not a * delta >= threshold:
        failures.append(GateFailure("i", "a*delta >= (sigma^2-4kl)/(4k^2 l)", a * delta, "<", threshold))
    if p.k > 0 and a < 1:
        bound = 1.0 / p.k
        if not delta * (1.0 - a) <= bound:
            failures.append(GateFailure("ii", "delta*(1-a) <= 1/k", delta * (1.0 - a), ">", bound))
    details = {"delta": delta, "a": a, "a_delta_threshold": threshold}
    return ValidityVerdict(tuple(failures), details)


def split_rates(p: CirParams) -> tuple[float, float]:
    """Split k = k1 + k2 so that 4 k2 l / sigma^2 is the integer part of the degree.

    Returns ``(k1, k2)``; ``k1 + k2 == k`` holds exactly in floating point.
    """
    if p.sigma == 0:
        raise DomainError("splitting undefined for deterministic diffusion")
    d = p.degree
    if is_integral(d):
        return 0.0, p.k
    if d < 1:
        return p.k, 0.0
    k2 = math.floor(d) * p.sigma**2 / (4.0 * p.l)
    # floor(d)/d >= 1/2 for d >= 1, so the subtraction below is exact (Sterbenz)
    return p.k - k2, k2


def split_constant(theta: float, sigma: float) -> tuple[float, float]:
    """Split a constant drift theta = theta1 + theta2 with 4 theta2/sigma^2 integral."""
    if sigma == 0:
        raise DomainError("splitting undefined for deterministic diffusion")
    d = snap_integer(4.0 * theta / sigma**2)
    if is_integral(d):
        return 0.0, theta
    if d < 1:
        return theta, 0.0
    theta2 = math.floor(d) * sigma**2 / 4.0
    return theta - theta2, theta2


def validate_split(p: CirParams, g: GridSpec) -> ValidityVerdict:
    if p.sigma == 0:
        raise DomainError("splitting undefined for deterministic diffusion")
    d = p.degree
    k1, k2 = split_rates(p)
    failures = []
    if not d >= 1:
        failures.append(GateFailure("degree", "d = 4kl/sigma^2 >= 1", d, "<", 1.0))
    if k1 > 0 and not g.delta < 1.0 / k1:
        failures.append(GateFailure("step", "delta < 1/k1", g.delta, ">=", 1.0 / k1))
    return ValidityVerdict(tuple(failures), {"d": d, "k1": k1, "k2": k2, "delta": g.delta})


def validate_exact(p: CirParams, g: GridSpec) -> ValidityVerdict:
    if p.sigma == 0:
        raise DomainError("exact simulation undefined for deterministic diffusion")
    d = p.degree
    failures = []
    if not (is_integral(d) and d >= 1):
        failures.append(GateFailure("degree", "d = 4kl/sigma^2 a positive integer", d, "not in", 1.0))
    return ValidityVerdict(tuple(failures), {"d": d, "delta": g.delta})


def validate_two_factor(p: TwoFactorParams, g: GridSpec, kind: SchemeKind) -> ValidityVerdict:
    try:
        kind = SchemeKind(kind)
    except ValueError:
        raise UsageError(f"unknown scheme kind {kind!r}") from None
    if not kind.two_factor:
        raise UsageError(f"{kind.value} is not a two-factor scheme")
    delta = g.delta
    d1, d2 = p.degree1, p.degree2
    details = {"d1": d1, "d2": d2, "delta": delta}
    if kind is SchemeKind.TWO_FACTOR_CROSS:
        details["experimental"] = True
        return ValidityVerdict((), details)

    failures = []
    if not d1 >= 1:
        failures.append(GateFailure("d1", "d1 = 4k/sigma1^2 >= 1", d1, "<", 1.0))
    if not d2 >= 1:
        failures.append(GateFailure("d2", "d2 = 4l/sigma2^2 >= 1", d2, "<", 1.0))

    if kind is SchemeKind.TWO_FACTOR_SPLIT_EXACT:
        k1, k2 = split_constant(p.k, p.sigma1)
        l1, l2 = split_constant(p.l, p.sigma2)
        details.update(k1=k1, k2=k2, l1=l1, l2=l2)
        if k1 > 0 and not delta < 1.0 / k1:
            failures.append(GateFailure("step1", "delta < 1/k1", delta, ">=", 1.0 / k1))
        if l1 > 0 and not delta < 1.0 / l1:
            failures.append(GateFailure("step2", "delta < 1/l1", delta, ">=", 1.0 / l1))
    else:
        lam = max(p.lambda11, p.lambda21)
        if lam > 0 and not delta <= 1.0 / lam:
            failures.append(
                GateFailure("step", "delta <= 1/max(lambda11, lambda21)", delta, ">", 1.0 / lam)
            )
    return ValidityVerdict(tuple(failures), details)


def validate(spec: SchemeSpec, p: CirParams | TwoFactorParams, g: GridSpec) -> ValidityVerdict:
    """Dispatch to the gate belonging to ``spec.kind``."""
    kind = spec.kind
    if kind.two_factor:
        if not isinstance(p, TwoFactorParams):
            raise UsageError(f"{kind.value} needs TwoFactorParams")
        return validate_two_factor(p, g, kind)
    if not isinstance(p, CirParams):
        raise UsageError(f"{kind.value} needs CirParams")
    if kind is SchemeKind.SEMI_DISCRETE_SQUARED:
        return validate_semidiscrete(p, g, spec.a)
    if kind is SchemeKind.SPLIT_EXACT:
        return validate_split(p, g)
    if kind is SchemeKind.EXACT:
        return validate_exact(p, g)
    return ValidityVerdict((), {"delta": g.delta})
