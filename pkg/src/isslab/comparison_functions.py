"""Comparison functions of class K, K-infinity, L and KL.

Gains are plain evaluators carrying a declared class. Class membership is
never proven, only checked on grids, so every verdict here is grid-relative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "K",
    "KINF",
    "L",
    "BracketNotFoundError",
    "ClassVerdict",
    "DegenerateSampleError",
    "DomainExceededError",
    "KLFunction",
    "ScalarGainFunction",
    "identity",
    "inverse",
    "kl_envelope_fit",
    "log_gain",
    "parse_gain",
    "power",
    "saturation",
    "split_lower_bound_check",
    "tabulated_gain",
    "verify_class",
    "verify_kl",
    "zero",
]

K = "K"
KINF = "Kinf"
L = "L"
_KINDS = (K, KINF, L)


class DomainExceededError(ValueError):
    """Argument lies beyond the range where the gain is trusted."""


class BracketNotFoundError(ArithmeticError):
    """The gain never reached the requested value on its evaluable range."""


class DegenerateSampleError(ValueError):
    """Samples carry no information (every radius is zero)."""


@dataclass(frozen=True)
class ScalarGainFunction:
    """A scalar comparison function with its declared class.

    Parameters
    ----------
    kind : {"K", "Kinf", "L"}
        Declared class. ``verify_class`` checks the declaration on a grid.
    fn : callable
        Map from a nonnegative float to a nonnegative float.
    domain_hint : float
        Largest argument at which ``fn`` is trusted.
    label : str
        Text form, round-trips through :func:`parse_gain` for the built-in
        family.
    """

    kind: str
    fn: Callable[[float], float] = field(repr=False, compare=False)
    domain_hint: float = math.inf
    label: str = "custom"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown gain kind {self.kind!r}")
        if not self.domain_hint >= 0:
            raise ValueError("domain_hint must be nonnegative")

    def eval(self, s: float) -> float:
        if s < 0:
            raise ValueError(f"gain argument must be nonnegative, got {s}")
        if s > self.domain_hint:
            raise DomainExceededError(f"{self.label}: argument {s} exceeds domain hint {self.domain_hint}")
        return float(self.fn(float(s)))

    __call__ = eval

    @property
    def is_zero(self) -> bool:
        return self.label == "zero"

    def __str__(self):
        return self.label


def _fmt(x: float) -> str:
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def power(c: float = 1.0, p: float = 1.0) -> ScalarGainFunction:
    """``s -> c * s**p``, class K-infinity for c, p > 0."""
    if c <= 0 or p <= 0:
        raise ValueError("power gain needs c > 0 and p > 0")
    return ScalarGainFunction(KINF, lambda s: c * s**p, label=f"pow({_fmt(c)},{_fmt(p)})")


def saturation(c: float = 1.0) -> ScalarGainFunction:
    """``s -> c * s / (1 + s)``, bounded by c, so only class K."""
    if c <= 0:
        raise ValueError("saturation gain needs c > 0")
    return ScalarGainFunction(K, lambda s: c * s / (1.0 + s), label=f"sat({_fmt(c)})")


def log_gain(c: float = 1.0) -> ScalarGainFunction:
    """``s -> c * log(1 + s)``; unbounded but slowly growing."""
    if c <= 0:
        raise ValueError("log gain needs c > 0")
    return ScalarGainFunction(KINF, lambda s: c * math.log1p(s), label=f"log({_fmt(c)})")


def identity() -> ScalarGainFunction:
    return ScalarGainFunction(KINF, lambda s: s, label="id")


def zero() -> ScalarGainFunction:
    """The zero gain admitted alongside class K in gain positions."""
    return ScalarGainFunction(K, lambda s: 0.0, label="zero")


def tabulated_gain(xs: Sequence[float], ys: Sequence[float], label: str = "table") -> ScalarGainFunction:
    """Piecewise-linear gain through the running maximum of ``ys``.

    The table is pinned to 0 at the origin and held constant past the last
    node, so it is a monotone envelope rather than a strict K function.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y = x[order], np.maximum.accumulate(y[order])
    if x.size == 0 or x[0] > 0:
        x = np.concatenate([[0.0], x])
        y = np.concatenate([[0.0], y])
    return ScalarGainFunction(K, lambda s: float(np.interp(s, x, y)), label=label)


_GAIN_RE = re.compile(r"^\s*(\w+)\s*(?:\(([^)]*)\))?\s*$")


def parse_gain(text: str) -> ScalarGainFunction:
    """Parse ``pow(c,p)``, ``sat(c)``, ``log(c)``, ``id`` or ``zero``."""
    m = _GAIN_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse gain {text!r}")
    name, args = m.group(1), m.group(2)
    params = [float(a) for a in args.split(",")] if args and args.strip() else []
    builders = {"pow": power, "sat": saturation, "log": log_gain, "id": identity, "zero": zero}
    if name not in builders:
        raise ValueError(f"unknown gain family {name!r}")
    try:
        return builders[name](*params)
    except TypeError as exc:
        raise ValueError(f"bad arguments for {name}: {args!r}") from exc


def inverse(f: ScalarGainFunction, y: float, tol: float = 1e-9) -> float:
    """Solve ``f(s) = y`` by geometric bracketing then bisection.

    Returns ``s`` with ``|f(s) - y| <= tol * max(1, y)``, or the tightest
    bisection point when floating resolution runs out first.
    """
    if y < 0:
        raise ValueError("inverse needs y >= 0")
    target_tol = tol * max(1.0, y)
    if abs(f(0.0) - y) <= target_tol:
        return 0.0
    lo, hi = 0.0, 1.0
    while True:
        if hi > f.domain_hint:
            hi = f.domain_hint
            if f(hi) < y:
                raise BracketNotFoundError(f"{f.label} stays below {y} up to its domain hint")
            break
        if f(hi) >= y:
            break
        lo, hi = hi, hi * 2.0
        if not math.isfinite(hi) or hi > 1e300:
            raise BracketNotFoundError(f"{f.label} stays below {y} on the probed range")
    mid = 0.5 * (lo + hi)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        v = f(mid)
        if abs(v - y) <= target_tol:
            return mid
        if v < y:
            lo = mid
        else:
            hi = mid
    return mid


@dataclass(frozen=True)
class ClassVerdict:
    passed: bool
    kind: str
    reason: str = ""
    witness: tuple | None = None

    def __bool__(self):
        return self.passed


def _persistent_jump(f: Callable[[float], float], a: float, b: float, depth: int = 60):
    """Follow the larger half-interval jump; report it if it refuses to shrink."""
    fa, fb = f(a), f(b)
    jump0 = abs(fb - fa)
    if jump0 == 0.0:
        return None
    lo, hi, flo, fhi = a, b, fa, fb
    for _ in range(depth):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        fm = f(mid)
        if abs(fm - flo) >= abs(fhi - fm):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    final = abs(fhi - flo)
    if final > 0.5 * jump0 and final > 1e-12 * max(1.0, abs(fa), abs(fb)):
        return (lo, hi)
    return None


def _probe_points(start: float, limit: float, factor: float, count: int) -> Iterable[float]:
    s = max(start, 1e-12)
    for _ in range(count):
        s *= factor
        if s > limit or not math.isfinite(s):
            return
        yield s


def verify_class(f: ScalarGainFunction | Callable[[float], float], grid: Sequence[float], kind: str | None = None) -> ClassVerdict:
    """Grid check of the declared class of ``f``.

    K and Kinf need ``f(0) = 0``, strict increase on ``grid`` and no
    persistent jumps; Kinf also needs ``f`` to pass ``M = max(2, 2 f(max grid))``
    somewhere on a doubling probe. L needs nonnegative strictly decreasing
    values tending to 0 on a geometric probe.
    """
    if kind is None:
        kind = f.kind
    limit = getattr(f, "domain_hint", math.inf)
    g = [float(s) for s in grid]
    vals = [f(s) for s in g]
    if kind in (K, KINF):
        v0 = f(0.0)
        if v0 != 0.0:
            return ClassVerdict(False, kind, "nonzero at origin", (0.0, v0))
        for (a, fa), (b, fb) in zip(zip(g, vals), zip(g[1:], vals[1:])):
            if not fb > fa:
                return ClassVerdict(False, kind, "not strictly increasing", ((a, fa), (b, fb)))
    elif kind == L:
        for (a, fa), (b, fb) in zip(zip(g, vals), zip(g[1:], vals[1:])):
            if not fb < fa:
                return ClassVerdict(False, kind, "not strictly decreasing", ((a, fa), (b, fb)))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    if any(v < 0 for v in vals):
        i = next(i for i, v in enumerate(vals) if v < 0)
        return ClassVerdict(False, kind, "negative value", (g[i], vals[i]))

    pts = ([0.0] if kind != L and g and g[0] > 0 else []) + g
    for a, b in zip(pts, pts[1:]):
        jump = _persistent_jump(f, a, b)
        if jump is not None:
            return ClassVerdict(False, kind, "discontinuity", jump)

    if kind == KINF:
        top = g[-1] if g else 1.0
        bound = max(2.0, 2.0 * f(top))
        last = None
        for s in _probe_points(top, limit, 2.0, 1100):
            last = (s, f(s))
            if last[1] > bound:
                break
        else:
            return ClassVerdict(False, kind, f"bounded: stays below {bound} on probe", last)
    if kind == L:
        top = g[-1] if g else 1.0
        scale = max(vals[0] if vals else f(0.0), 1e-300)
        for s in _probe_points(top, limit, 10.0, 40):
            if f(s) <= 1e-6 * scale:
                break
        else:
            return ClassVerdict(False, kind, "does not decay to zero on probe", (top, f(top)))
    return ClassVerdict(True, kind)


def split_lower_bound_check(alpha: ScalarGainFunction, a: float, b: float) -> bool:
    """Whether ``alpha(a+b) >= (alpha(a) + alpha(b)) / 2``."""
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    return alpha(a + b) >= 0.5 * alpha(a) + 0.5 * alpha(b)


@dataclass(frozen=True)
class KLFunction:
    fn: Callable[[float, float], float] = field(repr=False, compare=False)
    label: str = "custom"

    def eval(self, r: float, t: float) -> float:
        if r < 0 or t < 0:
            raise ValueError("KL arguments must be nonnegative")
        return float(self.fn(float(r), float(t)))

    __call__ = eval


def verify_kl(beta: KLFunction, r_grid: Sequence[float], t_grid: Sequence[float]) -> ClassVerdict:
    """K in r for every grid t, L in t for every positive grid r."""
    for t in t_grid:
        v = verify_class(lambda r, t=t: beta(r, t), r_grid, kind=K)
        if not v:
            return ClassVerdict(False, "KL", f"r-section at t={t}: {v.reason}", v.witness)
    for r in r_grid:
        if r <= 0:
            continue
        v = verify_class(lambda t, r=r: beta(r, t), t_grid, kind=L)
        if not v:
            return ClassVerdict(False, "KL", f"t-section at r={r}: {v.reason}", v.witness)
    return ClassVerdict(True, "KL")


class _EnvelopeTable:
    """Bilinear interpolation of a monotone node table with a decaying tail."""

    def __init__(self, r_nodes, t_nodes, table):
        self.r = r_nodes
        self.t = t_nodes
        self.w = table

    def __call__(self, r: float, t: float) -> float:
        t_nodes, w = self.t, self.w
        if t <= t_nodes[0]:
            col = w[:, 0]
        elif t >= t_nodes[-1]:
            col = w[:, -1] * math.exp(-(t - t_nodes[-1]))
        else:
            j = int(np.searchsorted(t_nodes, t, side="right")) - 1
            lam = (t - t_nodes[j]) / (t_nodes[j + 1] - t_nodes[j])
            col = (1.0 - lam) * w[:, j] + lam * w[:, j + 1]
        return float(np.interp(r, self.r, col)) + r * math.exp(-t)


def kl_envelope_fit(samples: Iterable[tuple[float, float, float]]) -> KLFunction:
    """Monotone KL envelope of sampled ``(r, t, value)`` triples.

    Node ``(r_i, t_j)`` holds the largest sample with radius at most ``r_i``
    and time at least ``t_j``, so every sample is bounded at its own node
    and the table is monotone in both directions. Between nodes the table
    is interpolated bilinearly; past the last sampled time it decays like
    ``exp(-t)``. The term ``r * exp(-t)`` makes the result strictly
    monotone.
    """
    arr = np.asarray(list(samples), dtype=float).reshape(-1, 3)
    if arr.shape[0] == 0:
        raise ValueError("kl_envelope_fit needs at least one sample")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite and nonnegative")
    rs, ts, vs = arr[:, 0], arr[:, 1], arr[:, 2]
    if np.all(rs == 0):
        raise DegenerateSampleError("all sample radii are zero")

    r_nodes = np.unique(np.concatenate([[0.0], rs]))
    t_nodes = np.unique(ts)
    m, n = r_nodes.size, t_nodes.size
    table = np.zeros((m, n))
    ri = np.searchsorted(r_nodes, rs)
    tj = np.searchsorted(t_nodes, ts)
    np.maximum.at(table, (ri, tj), vs)
    # cumulative max towards larger r and towards smaller t
    table = np.maximum.accumulate(table, axis=0)
    table = np.maximum.accumulate(table[:, ::-1], axis=1)[:, ::-1]
    return KLFunction(_EnvelopeTable(r_nodes, t_nodes, table), label="envelope")
