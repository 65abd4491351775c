"""Metric spaces, maps and precision-tracked orbit segments.

Continuum points (interval, circle) are stored as exact rationals and
iterated in fixed-point integer arithmetic: a coordinate ``x`` lives as
``X = floor(x * 2**P)``.  The working precision ``P`` grows with the orbit
horizon for expanding maps so that the doubling map does not collapse to 0
after ~53 steps the way float64 iteration does.

Symbolic points (full shift) are finite symbol buffers; the shift map is
exact and only moves a window along the buffer.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real

import numpy as np

__all__ = [
    "PrecisionExhausted",
    "MetricSpaceDescriptor",
    "SpacePoint",
    "PrecisionPolicy",
    "SystemSpec",
    "OrbitSegment",
    "INTERVAL",
    "CIRCLE",
    "shift_space",
    "golden_alpha",
    "step",
    "orbit_segment",
    "distance",
    "required_precision",
    "random_point",
    "perturbed_point",
    "make_system",
    "FAMILIES",
]

DEFAULT_BITS = 128
GUARD_BITS = 64
PRECISION_ENV = "ORBITDIST_PRECISION_BITS"


class PrecisionExhausted(RuntimeError):
    """Raised when an orbit needs more working bits than the policy allows."""


# ---------------------------------------------------------------------------
# spaces and points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSpaceDescriptor:
    """A compact metric space: ``interval``, ``circle`` or ``shift``.

    For the shift space two points are compared over their first ``window``
    symbols; the distance is ``2**-j`` at the first differing index ``j``.
    """

    kind: str
    alphabet_size: int | None = None
    window: int = 64

    def __post_init__(self):
        if self.kind not in ("interval", "circle", "shift"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.kind == "shift":
            if self.alphabet_size is None or self.alphabet_size < 2:
                raise ValueError("shift space needs alphabet_size >= 2")
            if self.window < 1:
                raise ValueError("window must be >= 1")

    @property
    def diameter(self) -> float:
        return 0.5 if self.kind == "circle" else 1.0

    @property
    def is_1d(self) -> bool:
        return self.kind != "shift"

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "shift":
            d.update(alphabet_size=self.alphabet_size, window=self.window)
        return d


INTERVAL = MetricSpaceDescriptor("interval")
CIRCLE = MetricSpaceDescriptor("circle")


def shift_space(alphabet_size: int = 2, window: int = 64) -> MetricSpaceDescriptor:
    return MetricSpaceDescriptor("shift", alphabet_size, window)


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        return Fraction(float(x))
    if isinstance(x, Real):
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as a coordinate")


@dataclass(frozen=True)
class SpacePoint:
    """A point of X: an exact coordinate or a finite symbol buffer."""

    value: Fraction | None = None
    symbols: tuple[int, ...] | None = None

    def __post_init__(self):
        if (self.value is None) == (self.symbols is None):
            raise ValueError("a point carries exactly one of value / symbols")

    @classmethod
    def at(cls, x) -> "SpacePoint":
        return cls(value=_as_fraction(x))

    @classmethod
    def word(cls, symbols) -> "SpacePoint":
        return cls(symbols=tuple(int(s) for s in symbols))

    @property
    def is_symbolic(self) -> bool:
        return self.symbols is not None

    def __float__(self):
        if self.value is None:
            return _word_coordinate(np.asarray(self.symbols[:64]), 2)
        return float(self.value)

    def to_json(self):
        if self.symbols is not None:
            return {"symbols": "".join(map(str, self.symbols))} if max(self.symbols, default=0) < 10 \
                else {"symbols": list(self.symbols)}
        v = self.value
        if v.denominator == 1 or v.denominator.bit_length() <= 64:
            return {"value": f"{v.numerator}/{v.denominator}"}
        # long random expansions: keep them exact, in hex
        return {"value_hex": format(v.numerator, "x"), "bits": v.denominator.bit_length() - 1}

    @classmethod
    def from_json(cls, obj) -> "SpacePoint":
        if isinstance(obj, (int, float, str)):
            return cls.at(obj)
        if "symbols" in obj:
            s = obj["symbols"]
            return cls.word([int(c) for c in s] if isinstance(s, str) else s)
        if "value_hex" in obj:
            return cls(value=Fraction(int(obj["value_hex"], 16), 1 << int(obj["bits"])))
        return cls.at(obj["value"])


def _check_point(space: MetricSpaceDescriptor, p: SpacePoint) -> None:
    if space.kind == "shift":
        if not p.is_symbolic:
            raise TypeError("shift space needs a symbolic point")
        if any(s < 0 or s >= space.alphabet_size for s in p.symbols):
            raise ValueError("symbol outside alphabet")
    else:
        if p.is_symbolic:
            raise TypeError(f"{space.kind} space needs a coordinate point")
        if space.kind == "interval" and not (0 <= p.value <= 1):
            raise ValueError(f"interval coordinate {p.value} outside [0, 1]")


def _canonical(space: MetricSpaceDescriptor, p: SpacePoint) -> SpacePoint:
    if space.kind == "circle" and not (0 <= p.value < 1):
        return SpacePoint(value=p.value - math.floor(p.value))
    return p


def distance(space: MetricSpaceDescriptor, p: SpacePoint, q: SpacePoint) -> float:
    """Exact distance between two points, rounded once to float."""
    _check_point(space, p)
    _check_point(space, q)
    if space.kind == "shift":
        w = min(space.window, len(p.symbols), len(q.symbols))
        for j in range(w):
            if p.symbols[j] != q.symbols[j]:
                return 2.0 ** -j
        return 0.0
    diff = abs(p.value - q.value)
    if space.kind == "circle":
        diff -= math.floor(diff)
        diff = min(diff, 1 - diff)
    return float(diff)


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------

FAMILIES = {
    "identity": "interval",
    "rotation": "circle",
    "doubling": "circle",
    "quad-circle": "circle",
    "tent": "interval",
    "logistic": "interval",
    "full-shift": "shift",
}


def golden_alpha(bits: int = 256) -> Fraction:
    """(sqrt(5) - 1) / 2 truncated to ``bits`` binary digits."""
    s = math.isqrt(5 << (2 * bits))
    return Fraction(s - (1 << bits), 1 << (bits + 1))


def _env_max_bits() -> int | None:
    raw = os.environ.get(PRECISION_ENV)
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{PRECISION_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class PrecisionPolicy:
    """Working-precision rules for fixed-point orbit generation.

    ``max_bits`` is the ceiling; the ``ORBITDIST_PRECISION_BITS`` environment
    variable overrides it at orbit time.
    """

    guard_bits: int = GUARD_BITS
    default_bits: int = DEFAULT_BITS
    max_bits: int = 1 << 20

    def ceiling(self) -> int:
        env = _env_max_bits()
        return env if env is not None else self.max_bits


@dataclass(frozen=True)
class SystemSpec:
    family: str
    space: MetricSpaceDescriptor
    param: Fraction | None = None
    precision: PrecisionPolicy = field(default_factory=PrecisionPolicy)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if FAMILIES[self.family] != self.space.kind:
            raise ValueError(f"{self.family} is defined on the {FAMILIES[self.family]}, "
                             f"not on {self.space.kind}")
        if self.family == "rotation" and self.param is None:
            raise ValueError("rotation needs alpha")
        if self.family == "logistic":
            if self.param is None or not (0 < self.param <= 4):
                raise ValueError("logistic parameter r must lie in (0, 4]")
        if self.family == "tent":
            if self.param is None or not (0 < self.param <= 2):
                raise ValueError("tent slope must lie in (0, 2]")

    # constructors ---------------------------------------------------------
    @classmethod
    def identity(cls):
        return cls("identity", INTERVAL)

    @classmethod
    def rotation(cls, alpha):
        alpha = _as_fraction(alpha)
        return cls("rotation", CIRCLE, alpha - math.floor(alpha))

    @classmethod
    def doubling(cls):
        return cls("doubling", CIRCLE)

    @classmethod
    def quad_circle(cls):
        return cls("quad-circle", CIRCLE)

    @classmethod
    def tent(cls, slope=2):
        return cls("tent", INTERVAL, _as_fraction(slope))

    @classmethod
    def logistic(cls, r=4):
        return cls("logistic", INTERVAL, _as_fraction(r))

    @classmethod
    def full_shift(cls, alphabet_size=2, window=64):
        return cls("full-shift", shift_space(alphabet_size, window))

    # properties -----------------------------------------------------------
    @property
    def lipschitz(self) -> float:
        """Per-step Lipschitz constant of T in the space metric."""
        if self.family in ("doubling", "quad-circle"):
            return 2.0
        if self.family in ("tent", "logistic"):
            return float(self.param)
        return 1.0

    @property
    def diameter(self) -> float:
        return self.space.diameter

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.param is not None:
            d["param"] = f"{self.param.numerator}/{self.param.denominator}" \
                if self.param.denominator.bit_length() <= 64 else float(self.param)
        if self.space.kind == "shift":
            d["alphabet_size"] = self.space.alphabet_size
            d["window"] = self.space.window
        return d


def make_system(family: str, param=None, **kw) -> SystemSpec:
    """Build a system from its catalog name, as used in run configs.

    ``param`` is alpha for rotation, the slope for tent and r for logistic;
    rotation accepts ``"golden"``.
    """
    if family == "rotation":
        if param is None or param == "golden":
            param = golden_alpha()
        return SystemSpec.rotation(param)
    if family == "identity":
        return SystemSpec.identity()
    if family == "doubling":
        return SystemSpec.doubling()
    if family == "quad-circle":
        return SystemSpec.quad_circle()
    if family == "tent":
        return SystemSpec.tent(2 if param is None else param)
    if family == "logistic":
        return SystemSpec.logistic(4 if param is None else param)
    if family == "full-shift":
        return SystemSpec.full_shift(kw.get("alphabet_size", 2), kw.get("window", 64))
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# exact single step (also the rational oracle for orbit_segment)
# ---------------------------------------------------------------------------

_HALF = Fraction(1, 2)


def step(spec: SystemSpec, p: SpacePoint) -> SpacePoint:
    """Apply T once, exactly, reducing into the canonical range."""
    _check_point(spec.space, p)
    if spec.family == "full-shift":
        if len(p.symbols) < 2:
            raise ValueError("symbol buffer exhausted")
        return SpacePoint(symbols=p.symbols[1:])
    p = _canonical(spec.space, p)
    x = p.value
    fam = spec.family
    if fam == "identity":
        y = x
    elif fam == "rotation":
        y = x + spec.param
    elif fam == "doubling":
        y = 2 * x
    elif fam == "quad-circle":
        if x < _HALF:
            y = 1 - 2 * (x - _HALF) ** 2
        else:
            y = _HALF - 2 * (x - 1) ** 2
    elif fam == "tent":
        y = spec.param * min(x, 1 - x)
    elif fam == "logistic":
        y = spec.param * x * (1 - x)
    else:  # pragma: no cover - guarded by SystemSpec
        raise ValueError(fam)
    if spec.space.kind == "circle":
        y -= math.floor(y)
    return SpacePoint(value=y)


# ---------------------------------------------------------------------------
# precision policy
# ---------------------------------------------------------------------------

def required_precision(spec: SystemSpec, n: int) -> int:
    """Working bits that keep an ``n``-step orbit accurate to ~2**-64."""
    if n < 1:
        raise ValueError("n must be >= 1")
    L = spec.lipschitz
    if L > 1:
        return math.ceil(n * math.log2(L)) + spec.precision.guard_bits
    return spec.precision.default_bits


# fresh rounding error per fixed-point step, in units of 2**-P
_FRESH_ERROR = {"identity": 0, "rotation": 1, "doubling": 0, "quad-circle": 1,
                "tent": 2, "logistic": 2}


def _error_bound(spec: SystemSpec, P: int, steps: int) -> float:
    """Worst-case distance error after ``steps`` fixed-point steps at P bits.

    e_0 <= u, e_{k+1} <= L e_k + c u  with u = 2**-P.
    """
    L = spec.lipschitz
    c = _FRESH_ERROR[spec.family]
    if L == 1.0:
        factor = 1.0 + c * steps
        return math.ldexp(factor, -P)
    if L > 1.0:
        # u (L^k + c (L^k - 1)/(L - 1)) <= u L^k (1 + c/(L - 1))
        log2 = steps * math.log2(L) + math.log2(1 + c / (L - 1)) - P
        return 2.0 ** log2
    return math.ldexp(1.0 + c / (1 - L), -P)


def _working_bits(spec: SystemSpec, steps: int) -> tuple[int, float]:
    P = required_precision(spec, max(steps, 1))
    target = math.ldexp(spec.diameter, -64)
    eb = _error_bound(spec, P, steps)
    if eb > target:
        P += math.ceil(math.log2(eb / target))
        eb = _error_bound(spec, P, steps)
    return P, eb


# ---------------------------------------------------------------------------
# orbit segments
# ---------------------------------------------------------------------------

def _word_coordinate(windows: np.ndarray, k: int) -> np.ndarray | float:
    """Base-k value of symbol windows (last axis), as floats in [0, 1)."""
    w = windows.shape[-1]
    weights = float(k) ** -np.arange(1, min(w, 60) + 1)
    return windows[..., : len(weights)] @ weights


@dataclass(frozen=True, eq=False)
class OrbitSegment:
    """The points T^k(base), k = start_index .. start_index + length - 1.

    ``coords`` is the float64 view used by solvers and observables; for
    continuum spaces ``raw`` holds the fixed-point integers at
    ``precision_bits``, for the shift space ``windows`` holds the symbol
    windows of each orbit point.
    """

    space: MetricSpaceDescriptor
    base: SpacePoint
    start_index: int
    length: int
    coords: np.ndarray
    precision_bits: int
    error_bound: float
    raw: tuple[int, ...] | None = None
    windows: np.ndarray | None = None

    def __len__(self):
        return self.length

    def __getitem__(self, j) -> SpacePoint:
        if self.windows is not None:
            return SpacePoint.word(self.windows[j])
        return SpacePoint(value=Fraction(self.raw[j], 1 << self.precision_bits))

    @property
    def points(self) -> tuple[SpacePoint, ...]:
        return tuple(self[j] for j in range(self.length))

    def window(self, offset: int, n: int) -> "OrbitSegment":
        """Sub-segment of ``n`` points starting ``offset`` points in."""
        if offset < 0 or n < 1 or offset + n > self.length:
            raise ValueError("sub-window out of range")
        sl = slice(offset, offset + n)
        return OrbitSegment(
            space=self.space, base=self.base, start_index=self.start_index + offset,
            length=n, coords=self.coords[sl], precision_bits=self.precision_bits,
            error_bound=self.error_bound,
            raw=None if self.raw is None else self.raw[sl],
            windows=None if self.windows is None else self.windows[sl])

    def prefix(self, n: int) -> "OrbitSegment":
        return self.window(0, n)


def _fixed_stepper(spec: SystemSpec, P: int):
    one = 1 << P
    mask = one - 1
    half = one >> 1
    fam = spec.family
    if fam == "identity":
        return lambda X: X
    if fam == "rotation":
        A = (spec.param.numerator << P) // spec.param.denominator
        return lambda X: (X + A) & mask
    if fam == "doubling":
        return lambda X: (X << 1) & mask
    if fam == "quad-circle":
        def quad(X):
            if X < half:
                d = X - half
                return (one - ((d * d) >> (P - 1))) & mask
            d = X - one
            return (half - ((d * d) >> (P - 1))) & mask
        return quad
    if fam == "tent":
        S = (spec.param.numerator << P) // spec.param.denominator
        return lambda X: (S * min(X, one - X)) >> P
    if fam == "logistic":
        R = (spec.param.numerator << P) // spec.param.denominator
        twoP = 2 * P
        return lambda X: (R * X * (one - X)) >> twoP
    raise ValueError(fam)  # pragma: no cover


def _to_floats(raw, P: int, below_one: bool = False) -> np.ndarray:
    """Nearest doubles to X / 2**P (after truncating X to 64 leading bits)."""
    if P <= 64:
        out = np.array([math.ldexp(X, -P) for X in raw], dtype=np.float64)
    else:
        sh = P - 64
        out = np.array([float(X >> sh) for X in raw], dtype=np.float64) * 2.0 ** -64
    if below_one:
        # rounding may reach 1.0, which is 0 on the circle
        np.minimum(out, np.nextafter(1.0, 0.0), out=out)
    return out


def orbit_segment(spec: SystemSpec, x: SpacePoint, n: int, start_index: int = 1) -> OrbitSegment:
    """Materialize T^k x for k = start_index .. start_index + n - 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if start_index < 0:
        raise ValueError("start_index must be >= 0")
    _check_point(spec.space, x)
    last = start_index + n - 1

    if spec.space.kind == "shift":
        w = spec.space.window
        need = last + w
        if len(x.symbols) < need:
            raise PrecisionExhausted(
                f"symbol buffer of length {len(x.symbols)} cannot serve {n} points "
                f"from index {start_index} with window {w} (needs {need})")
        buf = np.asarray(x.symbols[:need], dtype=np.int8)
        win = np.lib.stride_tricks.sliding_window_view(buf, w)[start_index:last + 1]
        win = np.ascontiguousarray(win)
        win.setflags(write=False)
        coords = _word_coordinate(win, spec.space.alphabet_size)
        coords.setflags(write=False)
        return OrbitSegment(spec.space, x, start_index, n, coords, 0, 0.0, windows=win)

    x = _canonical(spec.space, x)
    P, eb = _working_bits(spec, last)
    ceiling = spec.precision.ceiling()
    if P > ceiling:
        raise PrecisionExhausted(
            f"{spec.family} orbit of horizon {last} needs {P} bits; ceiling is {ceiling}")
    f = _fixed_stepper(spec, P)
    X = (x.value.numerator << P) // x.value.denominator
    for _ in range(start_index):
        X = f(X)
    raw = [X]
    for _ in range(n - 1):
        X = f(X)
        raw.append(X)
    coords = _to_floats(raw, P, spec.space.kind == "circle")
    coords.setflags(write=False)
    return OrbitSegment(spec.space, x, start_index, n, coords, P, eb, raw=tuple(raw))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _point_bits(spec: SystemSpec, horizon: int) -> int:
    return _working_bits(spec, max(horizon, 1))[0] + 64


def random_point(spec: SystemSpec, rng: np.random.Generator, horizon: int) -> SpacePoint:
    """A Lebesgue / Bernoulli-uniform random point with enough digits for ``horizon`` steps.

    Continuum points get random binary digits well past the working
    precision, so orbits of expanding maps stay typical.
    """
    if spec.space.kind == "shift":
        size = horizon + spec.space.window + 1
        return SpacePoint.word(rng.integers(0, spec.space.alphabet_size, size=size))
    bits = _point_bits(spec, horizon)
    nbytes = (bits + 7) // 8
    num = int.from_bytes(rng.bytes(nbytes), "little")
    return SpacePoint(value=Fraction(num, 1 << (8 * nbytes)))


def perturbed_point(spec: SystemSpec, base: SpacePoint, offset, rng: np.random.Generator,
                    horizon: int) -> SpacePoint:
    """``base + offset`` plus random digits below 2**-64.

    The trailing digits keep a dyadic offset from collapsing onto a periodic
    orbit of the doubling map.
    """
    if spec.space.kind == "shift":
        raise ValueError("perturbation is defined for 1-D spaces only")
    bits = _point_bits(spec, horizon)
    nbytes = (bits + 7) // 8
    tail = Fraction(int.from_bytes(rng.bytes(nbytes), "little"), 1 << (8 * nbytes + 64))
    v = base.value + _as_fraction(offset) + tail
    if spec.space.kind == "circle":
        v -= math.floor(v)
    else:
        v = min(max(v, Fraction(0)), Fraction(1))
    return SpacePoint(value=v)
