"""Piecewise-constant, right-continuous input signals."""

from __future__ import annotations

import ast
import bisect
import math
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = ["InputSignal", "concat", "parse_signal", "random_signal", "restrict", "shift", "sup_norm"]


def _as_value(v) -> tuple[float, ...]:
    if isinstance(v, (int, float, np.floating, np.integer)):
        return (float(v),)
    out = tuple(float(x) for x in np.asarray(v, dtype=float).ravel())
    if not out:
        raise ValueError("signal values must be nonempty")
    return out


@dataclass(frozen=True)
class InputSignal:
    """Value ``values[i]`` holds on ``[starts[i], starts[i+1])``.

    The last value holds on ``[starts[-1], inf)``. Consecutive equal values
    are merged on construction, so two signals describing the same function
    compare equal.
    """

    starts: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]
    horizon: float = math.inf

    def __post_init__(self):
        starts = tuple(float(s) for s in self.starts)
        values = tuple(_as_value(v) for v in self.values)
        if not starts or len(starts) != len(values):
            raise ValueError("need one value per segment start")
        if starts[0] != 0.0:
            raise ValueError("first segment must start at 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment starts must be strictly increasing")
        dims = {len(v) for v in values}
        if len(dims) != 1:
            raise ValueError("all segment values must share one dimension")
        if not all(math.isfinite(x) for v in values for x in v):
            raise ValueError("signal values must be finite")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        keep_s, keep_v = [starts[0]], [values[0]]
        for s, v in zip(starts[1:], values[1:]):
            if v != keep_v[-1]:
                keep_s.append(s)
                keep_v.append(v)
        object.__setattr__(self, "starts", tuple(keep_s))
        object.__setattr__(self, "values", tuple(keep_v))
        object.__setattr__(self, "horizon", float(self.horizon))

    @classmethod
    def constant(cls, value, horizon: float = math.inf) -> "InputSignal":
        return cls((0.0,), (_as_value(value),), horizon)

    @classmethod
    def steps(cls, pairs: Iterable[tuple[float, object]], horizon: float = math.inf) -> "InputSignal":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(_as_value(p[1]) for p in pairs), horizon)

    @property
    def dim(self) -> int:
        return len(self.values[0])

    @property
    def segments(self) -> list[tuple[float, tuple[float, ...]]]:
        return list(zip(self.starts, self.values))

    @property
    def is_constant(self) -> bool:
        return len(self.starts) == 1

    def value(self, t: float) -> tuple[float, ...]:
        if t < 0:
            raise ValueError("signals are defined for t >= 0")
        return self.values[bisect.bisect_right(self.starts, t) - 1]

    def __call__(self, t: float) -> np.ndarray:
        return np.array(self.value(t))

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Segment starts strictly inside ``(t0, t1)``."""
        lo = bisect.bisect_right(self.starts, t0)
        hi = bisect.bisect_left(self.starts, t1)
        return list(self.starts[lo:hi])

    def sup_norm(self) -> float:
        return max(math.sqrt(sum(x * x for x in v)) for v in self.values)

    def text(self) -> str:
        def fmt(v):
            return repr(v[0]) if len(v) == 1 else "[" + ",".join(repr(x) for x in v) + "]"

        if self.is_constant:
            return f"const({fmt(self.values[0])})"
        return "steps[" + ",".join(f"({s!r},{fmt(v)})" for s, v in self.segments) + "]"

    __str__ = text


def sup_norm(u: InputSignal) -> float:
    return u.sup_norm()


def shift(u: InputSignal, tau: float) -> InputSignal:
    """The signal ``t -> u(t + tau)``."""
    if tau < 0:
        raise ValueError("shift needs tau >= 0")
    if tau == 0:
        return u
    i = bisect.bisect_right(u.starts, tau) - 1
    starts = (0.0,) + tuple(s - tau for s in u.starts[i + 1 :])
    return InputSignal(starts, u.values[i:], u.horizon - tau)


def concat(u1: InputSignal, u2: InputSignal, t: float) -> InputSignal:
    """``u1`` before ``t`` and ``u2(. - t)`` from ``t`` on.

    The value of ``u2`` takes effect at ``t`` itself; flows cannot see the
    value at a single instant.
    """
    if not t > 0:
        raise ValueError("concat needs t > 0")
    if u1.dim != u2.dim:
        raise ValueError("signals must share a value dimension")
    n = bisect.bisect_left(u1.starts, t)
    starts = u1.starts[:n] + tuple(t + s for s in u2.starts)
    values = u1.values[:n] + u2.values
    return InputSignal(starts, values, t + u2.horizon)


def restrict(u: InputSignal, t: float) -> InputSignal:
    """The part of ``u`` that a flow up to time ``t`` can see.

    Segments starting at or after ``t`` are dropped, so signals agreeing on
    ``[0, t)`` have equal restrictions.
    """
    if not t > 0:
        raise ValueError("restrict needs t > 0")
    n = bisect.bisect_left(u.starts, t)
    return InputSignal(u.starts[:n], u.values[:n], t)


def random_signal(
    rng: np.random.Generator,
    magnitude: float,
    n_switches: int,
    horizon: float,
    dim: int = 1,
) -> InputSignal:
    """Random signal with ``n_switches`` switches and values of norm at most ``magnitude``."""
    times = np.sort(rng.uniform(0.0, horizon, size=n_switches)) if n_switches else np.empty(0)
    starts = [0.0] + [float(x) for x in times if x > 0]
    vals = []
    for _ in starts:
        v = rng.uniform(-1.0, 1.0, size=dim)
        nv = float(np.linalg.norm(v))
        v = v / nv * magnitude * rng.uniform(0.0, 1.0) if nv > 0 else v * 0
        vals.append(tuple(float(x) for x in v))
    uniq_s, uniq_v = [starts[0]], [vals[0]]
    for s, v in zip(starts[1:], vals[1:]):
        if s > uniq_s[-1]:
            uniq_s.append(s)
            uniq_v.append(v)
    return InputSignal(tuple(uniq_s), tuple(uniq_v), math.inf)


_CONST_RE = re.compile(r"^\s*const\s*\((.*)\)\s*$", re.S)
_STEPS_RE = re.compile(r"^\s*steps\s*(\[.*\])\s*$", re.S)


def parse_signal(text: str, horizon: float = math.inf) -> InputSignal:
    """Parse ``const(v)`` or ``steps[(t0,v0),(t1,v1),...]``; ``v`` may be ``[a,b]``."""
    m = _CONST_RE.match(text)
    try:
        if m:
            return InputSignal.constant(ast.literal_eval(m.group(1)), horizon)
        m = _STEPS_RE.match(text)
        if m:
            pairs = ast.literal_eval(m.group(1))
            return InputSignal.steps([tuple(p) for p in pairs], horizon)
    except (SyntaxError, ValueError, TypeError) as exc:
        raise ValueError(f"cannot parse signal {text!r}: {exc}") from exc
    raise ValueError(f"cannot parse signal {text!r}")

