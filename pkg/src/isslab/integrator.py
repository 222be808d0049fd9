"""Adaptive Dormand-Prince 5(4) integration of mode systems.

Decoupled systems are integrated lane by lane: every active mode is a lane
with its own step size, all lanes advanced together with vectorized
arithmetic. A lane's result does not depend on which other lanes share the
run. Integration restarts at every input breakpoint, so piecewise-constant
inputs are handled exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .signals import InputSignal, concat, random_signal, shift
from .systems import StateVector, TruncatedModeSystem, combine_norms, exact_solution, has_exact_flow, mode_norms

__all__ = [
    "AxiomReport",
    "BlowUpGuardError",
    "Event",
    "IntegrationError",
    "IntegratorConfig",
    "LaneRun",
    "StepUnderflowError",
    "Trajectory",
    "check_axioms",
    "flow",
    "peak_time",
    "random_axiom_samples",
    "simulate_lanes",
    "trajectory",
    "write_trajectory_csv",
]


class IntegrationError(RuntimeError):
    pass


class BlowUpGuardError(IntegrationError):
    """A state component exceeded ``hard_state_cap``."""

    def __init__(self, msg, time=None, mode=None):
        super().__init__(msg)
        self.time = time
        self.mode = mode


class StepUnderflowError(IntegrationError):
    """The step size fell below the floor or the step budget ran out."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and guards.

    ``event_threshold`` is a number, or ``"mode_index"`` to use threshold
    ``k`` for mode ``k``. Crossings in either direction are detected on
    the first component of each mode.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    event_threshold: float | str | None = None
    hard_state_cap: float = 1e9
    use_oracle: bool = False
    min_step: float = 1e-14
    max_steps: int = 5_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not self.hard_state_cap > 0:
            raise ValueError("hard_state_cap must be positive")
        thr = self.event_threshold
        if thr is not None and thr != "mode_index":
            thr = float(thr)
            if abs(thr) >= self.hard_state_cap:
                raise ValueError("event threshold must stay below hard_state_cap")
            object.__setattr__(self, "event_threshold", thr)

    def thresholds(self, ks: np.ndarray) -> np.ndarray | None:
        if self.event_threshold is None:
            return None
        if self.event_threshold == "mode_index":
            return ks.astype(float)
        return np.full(ks.shape, float(self.event_threshold))


@dataclass(frozen=True)
class Event:
    time: float
    mode: int
    kind: str
    threshold: float


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

_SAFETY = 0.9
_MAX_GROWTH = 5.0
_MIN_SHRINK = 0.2
_PI_EXP, _PI_MEM = 0.17, 0.04


def _dp_step(f, k, z, h, k1, u):
    hc = h[:, None]
    k2 = f(k, z + hc * (_A21 * k1), u)
    k3 = f(k, z + hc * (_A31 * k1 + _A32 * k2), u)
    k4 = f(k, z + hc * (_A41 * k1 + _A42 * k2 + _A43 * k3), u)
    k5 = f(k, z + hc * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4), u)
    k6 = f(k, z + hc * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5), u)
    y = z + hc * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
    k7 = f(k, y, u)
    err = hc * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
    return y, k7, err


def _initial_step(f, k, z, f0, u, cfg, span):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(z)
    d0 = np.sqrt(np.mean((z / scale) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=1))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, span)
    z1 = z + h0[:, None] * f0
    f1 = f(k, z1, u)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2, axis=1)) / h0
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
    return np.minimum(np.minimum(100.0 * h0, h1), cfg.max_step)


class _Recorder:
    def __init__(self, n_lanes):
        self.lane, self.t, self.z, self.err = [], [], [], []
        self.n = n_lanes

    def add(self, lanes, t, z, err):
        self.lane.append(np.asarray(lanes))
        self.t.append(np.asarray(t, dtype=float))
        self.z.append(np.asarray(z, dtype=float))
        self.err.append(np.asarray(err, dtype=float))

    def split(self, d):
        if not self.lane:
            return [np.empty(0)] * self.n, [np.empty((0, d))] * self.n, [np.empty(0)] * self.n
        lane = np.concatenate(self.lane)
        t = np.concatenate(self.t)
        z = np.concatenate(self.z)
        err = np.concatenate(self.err)
        order = np.argsort(lane, kind="stable")
        lane, t, z, err = lane[order], t[order], z[order], err[order]
        cuts = np.searchsorted(lane, np.arange(1, self.n))
        return np.split(t, cuts), np.split(z, cuts), np.split(err, cuts)


def _event_time(f, k, z0, k1, u, h, thr, t0, upward=True):
    """Bisect the step length at which component 0 first reaches ``thr``."""
    lo, hi = 0.0, float(h)
    kk = np.array([k])
    zb = z0[None, :]
    fb = k1[None, :]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        y, _, _ = _dp_step(f, kk, zb, np.array([mid]), fb, u)
        if (y[0, 0] >= thr) if upward else (y[0, 0] <= thr):
            hi = mid
        else:
            lo = mid
    y, _, _ = _dp_step(f, kk, zb, np.array([hi]), fb, u)
    return t0 + hi, y[0]


def _run_segment(f, ks, z, t0, t1, u, cfg, h, thresholds, rec, events, mode_ids, alive, stop):
    """Advance the live lanes from ``t0`` to ``t1`` under the constant input ``u``.

    A lane whose norm drops to ``stop[i]`` or below is frozen there and
    marked dead in ``alive``.
    """
    n = z.shape[0]
    span = t1 - t0
    if span <= 0 or n == 0 or not alive.any():
        return z, h
    f0 = f(ks, z, u)
    if h is None:
        h = _initial_step(f, ks, z, f0, u, cfg, span)
    h = np.minimum(h, cfg.max_step)
    t = np.full(n, t0)
    k1 = f0
    err_prev = np.full(n, 1e-4)
    rejected = np.zeros(n, dtype=bool)
    active = np.flatnonzero(alive)
    steps = 0
    cap = cfg.hard_state_cap
    while active.size:
        steps += 1
        if steps > cfg.max_steps:
            raise StepUnderflowError(f"step budget of {cfg.max_steps} exhausted at t={t[active].min():.6g}")
        ta, za, ha, k1a = t[active], z[active], h[active], k1[active]
        ka = ks[active]
        remaining = t1 - ta
        last = ha >= remaining
        hh = np.where(last, remaining, ha)
        y, k7, err = _dp_step(f, ka, za, hh, k1a, u)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(za), np.abs(y))
        en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        bad = ~np.isfinite(en)
        en = np.where(bad, np.inf, en)
        ok = en <= 1.0

        with np.errstate(divide="ignore", over="ignore"):
            grow = _SAFETY * np.maximum(en, 1e-10) ** (-_PI_EXP) * err_prev[active] ** _PI_MEM
            grow = np.clip(grow, _MIN_SHRINK, _MAX_GROWTH)
            shrink = np.clip(_SAFETY * np.maximum(en, 1e-10) ** (-0.2), _MIN_SHRINK, 1.0)
            grow = np.where(rejected[active], np.minimum(grow, 1.0), grow)
            base = np.where(last & ok, np.maximum(ha, hh), hh)
            h_new = np.minimum(np.where(ok, base * grow, hh * np.where(bad, _MIN_SHRINK, shrink)), cfg.max_step)

        if np.any(~ok):
            floor = cfg.min_step * np.maximum(1.0, np.abs(ta))
            under = (~ok) & (h_new < floor)
            if np.any(under):
                i = int(np.flatnonzero(under)[0])
                raise StepUnderflowError(
                    f"step size underflow at t={ta[i]:.10g} in mode {int(mode_ids[active[i]])}"
                )

        acc = np.flatnonzero(ok)
        if acc.size:
            lanes = active[acc]
            y_acc = y[acc]
            over = np.abs(y_acc) > cap
            if np.any(over):
                i = int(np.flatnonzero(np.any(over, axis=1))[0])
                mode = int(mode_ids[lanes[i]])
                t_hit = float(ta[acc][i] + hh[acc][i])
                raise BlowUpGuardError(
                    f"state exceeded hard cap {cap:g} near t={t_hit:.10g} in mode {mode}", t_hit, mode
                )
            t_new = np.where(last[acc], t1, ta[acc] + hh[acc])
            if thresholds is not None:
                thr = thresholds[lanes]
                up = (za[acc, 0] < thr) & (y_acc[:, 0] >= thr)
                down = (za[acc, 0] > thr) & (y_acc[:, 0] <= thr)
                for i in np.flatnonzero(up | down):
                    te, ze = _event_time(f, ka[acc][i], za[acc][i], k1a[acc][i], u, hh[acc][i], thr[i], ta[acc][i], bool(up[i]))
                    mode = int(mode_ids[lanes[i]])
                    kind = "up_crossing" if up[i] else "down_crossing"
                    events.append(Event(float(te), mode, kind, float(thr[i])))
                    if rec is not None and te < t_new[i]:
                        rec.add([lanes[i]], [te], ze[None, :], [0.0])
            if rec is not None:
                rec.add(lanes, t_new, y_acc, np.max(np.abs(err[acc]), axis=1))
            t[lanes] = t_new
            z[lanes] = y_acc
            k1[lanes] = k7[acc]
            err_prev[lanes] = np.maximum(en[acc], 1e-4)
        h[active] = h_new
        rejected[active] = ~ok
        finished = ok & last
        if stop is not None and acc.size:
            hit = np.zeros(active.size, dtype=bool)
            hit[acc] = np.sqrt(np.sum(y_acc**2, axis=1)) <= stop[active[acc]]
            alive[active[hit]] = False
            finished |= hit
        active = active[~finished]
    return z, h


def _stop_points(u: InputSignal, t_end: float, extra: Iterable[float] = ()) -> list[float]:
    pts = {0.0, float(t_end)}
    pts.update(u.breakpoints(0.0, t_end))
    pts.update(float(s) for s in extra if 0.0 < s < t_end)
    return sorted(pts)


@dataclass
class LaneRun:
    """Per-lane histories of a batched integration."""

    ks: np.ndarray
    times: list[np.ndarray]
    states: list[np.ndarray]
    errors: list[np.ndarray]
    final: np.ndarray
    events: list[Event]
    stopped: np.ndarray | None = None

    def lane_norms(self, i: int) -> np.ndarray:
        return mode_norms(self.states[i])


def _lane_rhs(sys: TruncatedModeSystem):
    if sys.decoupled:
        return sys.rhs
    shape = (sys.n_modes, sys.mode_dim)

    def f(k, z, u):
        return np.stack([np.asarray(sys.coupled_rhs(row.reshape(shape), u), dtype=float).ravel() for row in z])

    return f


def simulate_lanes(
    sys: TruncatedModeSystem,
    ks: Sequence[int],
    z0: np.ndarray,
    u: InputSignal,
    t_end: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    t_eval: Iterable[float] = (),
    record: bool = True,
    stop_below=None,
) -> LaneRun:
    """Integrate independent mode lanes ``(ks[i], z0[i])`` under one input.

    For a coupled system pass a single lane holding the flattened state.
    With ``stop_below`` (scalar or one value per lane) a lane stops at the
    first accepted step where its Euclidean norm is at most that value.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if t_end > u.horizon * (1 + 1e-12):
        raise ValueError(f"t_end={t_end} exceeds the input horizon {u.horizon}")
    ks = np.asarray(ks, dtype=float).reshape(-1)
    z = np.array(z0, dtype=float, copy=True).reshape(ks.size, -1)
    f = _lane_rhs(sys)
    thresholds = cfg.thresholds(ks) if sys.decoupled else None
    rec = _Recorder(ks.size) if record else None
    if rec is not None:
        rec.add(np.arange(ks.size), np.zeros(ks.size), z.copy(), np.zeros(ks.size))
    events: list[Event] = []
    mode_ids = ks.astype(int)
    pts = _stop_points(u, t_end, t_eval)
    use_oracle = cfg.use_oracle and sys.decoupled and has_exact_flow(sys)
    alive = np.ones(ks.size, dtype=bool)
    stop = None if stop_below is None else np.broadcast_to(np.asarray(stop_below, dtype=float), ks.shape)
    if stop is not None:
        alive &= np.sqrt(np.sum(z**2, axis=1)) > stop
    h = None
    for a, b in zip(pts, pts[1:]):
        uval = np.asarray(u.value(a), dtype=float)
        if use_oracle:
            z = np.stack([exact_solution(sys, int(k), zi, uval, b - a).value for k, zi in zip(ks, z)]) if ks.size else z
            if rec is not None:
                rec.add(np.arange(ks.size), np.full(ks.size, b), z.copy(), np.zeros(ks.size))
            continue
        restart = a in u.starts
        if stop is not None and not alive.any():
            break
        z, h = _run_segment(f, ks, z, a, b, uval, cfg, None if (h is None or restart) else h, thresholds, rec, events, mode_ids, alive, stop)
    events.sort(key=lambda e: (e.time, e.mode))
    if rec is None:
        return LaneRun(ks, [], [], [], z, events, ~alive)
    times, states, errors = rec.split(z.shape[1])
    # event samples were appended out of order; restore time order per lane
    for i, tt in enumerate(times):
        if tt.size > 1 and np.any(np.diff(tt) < 0):
            o = np.argsort(tt, kind="stable")
            times[i], states[i], errors[i] = tt[o], states[i][o], errors[i][o]
    return LaneRun(ks, times, states, errors, z, events, ~alive)


def moving_modes(sys: TruncatedModeSystem, x0: StateVector, u: InputSignal, t_end: float) -> np.ndarray:
    """Modes that can move: nonzero initially or pushed off zero by some input value."""
    nonzero = np.any(x0.modes != 0.0, axis=1)
    ks = np.arange(1, sys.n_modes + 1, dtype=float)
    zeros = np.zeros((sys.n_modes, sys.mode_dim))
    values = {u.value(a) for a in [0.0] + u.breakpoints(0.0, t_end)}
    for v in values:
        nonzero |= np.any(sys.rhs(ks, zeros, np.asarray(v, dtype=float)) != 0.0, axis=1)
    return np.flatnonzero(nonzero)


def _check_state(sys: TruncatedModeSystem, x0: StateVector, u: InputSignal, t: float):
    if x0.modes.shape != (sys.n_modes, sys.mode_dim):
        raise ValueError(f"state shape {x0.modes.shape} does not match system ({sys.n_modes}, {sys.mode_dim})")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t > u.horizon * (1 + 1e-12):
        raise ValueError(f"time {t} exceeds the input horizon {u.horizon}")


def flow(sys: TruncatedModeSystem, t: float, x0: StateVector, u: InputSignal, cfg: IntegratorConfig = IntegratorConfig()) -> StateVector:
    """Numerical transition map ``phi(t, x0, u)``."""
    _check_state(sys, x0, u, t)
    if t == 0:
        return x0
    if not sys.decoupled:
        run = simulate_lanes(sys, [1], x0.modes.reshape(1, -1), u, t, cfg, record=False)
        return StateVector(run.final.reshape(sys.n_modes, sys.mode_dim), sys.norm_tag)
    lanes = moving_modes(sys, x0, u, t)
    out = np.array(x0.modes, copy=True)
    if lanes.size:
        run = simulate_lanes(sys, lanes + 1, x0.modes[lanes], u, t, cfg, record=False)
        out[lanes] = run.final
    return StateVector(out, sys.norm_tag)


@dataclass
class Trajectory:
    """Sampled flow on the union of the lanes' adaptive grids.

    Between a lane's own grid points its state is linearly interpolated.
    """

    times: np.ndarray
    values: np.ndarray
    input_ref: InputSignal
    local_error_estimates: np.ndarray
    events: list[Event]
    norm_tag: str = "l2"
    system: TruncatedModeSystem | None = field(default=None, repr=False)
    config: IntegratorConfig | None = field(default=None, repr=False)
    initial: StateVector | None = field(default=None, repr=False)

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> StateVector:
        return StateVector(self.values[i], self.norm_tag)

    @property
    def states(self) -> list[StateVector]:
        return [self.state(i) for i in range(len(self))]

    def norms(self) -> np.ndarray:
        return combine_norms(mode_norms(self.values), self.norm_tag)

    def component(self, k: int, c: int = 0) -> np.ndarray:
        return self.values[:, k - 1, c]


def _merge(n_modes, d, lanes, run: LaneRun, x0: StateVector, extra_times=()):
    grids = [run.times[i] for i in range(lanes.size)]
    times = np.unique(np.concatenate(grids + [np.asarray(list(extra_times), dtype=float), np.zeros(1)]))
    values = np.broadcast_to(x0.modes, (times.size, n_modes, d)).copy()
    errors = np.zeros(times.size)
    for i, lane in enumerate(lanes):
        lt, lz, le = run.times[i], run.states[i], run.errors[i]
        if lt.size == times.size and np.array_equal(lt, times):
            values[:, lane, :] = lz
            errors = np.maximum(errors, le)
            continue
        for c in range(d):
            values[:, lane, c] = np.interp(times, lt, lz[:, c])
        pos = np.clip(np.searchsorted(lt, times), 0, lt.size - 1)
        errors = np.maximum(errors, le[pos])
    values[0] = x0.modes
    return times, values, errors


def trajectory(
    sys: TruncatedModeSystem,
    T: float,
    x0: StateVector,
    u: InputSignal,
    cfg: IntegratorConfig = IntegratorConfig(),
    t_eval: Iterable[float] = (),
) -> Trajectory:
    """Flow sampled on the adaptive grid plus the requested output times."""
    _check_state(sys, x0, u, T)
    t_eval = [float(s) for s in t_eval if 0.0 <= s <= T]
    if not sys.decoupled:
        run = simulate_lanes(sys, [1], x0.modes.reshape(1, -1), u, T, cfg, t_eval=t_eval)
        vals = run.states[0].reshape(-1, sys.n_modes, sys.mode_dim)
        return Trajectory(run.times[0], vals, u, run.errors[0], [], sys.norm_tag, sys, cfg, x0)
    lanes = moving_modes(sys, x0, u, T) if T > 0 else np.empty(0, dtype=int)
    if lanes.size == 0:
        times = np.unique(np.array([0.0, float(T)] + t_eval))
        vals = np.broadcast_to(x0.modes, (times.size,) + x0.modes.shape).copy()
        return Trajectory(times, vals, u, np.zeros(times.size), [], sys.norm_tag, sys, cfg, x0)
    run = simulate_lanes(sys, lanes + 1, x0.modes[lanes], u, T, cfg, t_eval=t_eval)
    times, values, errors = _merge(sys.n_modes, sys.mode_dim, lanes, run, x0, t_eval)
    return Trajectory(times, values, u, errors, run.events, sys.norm_tag, sys, cfg, x0)


def peak_time(traj: Trajectory, k: int, threshold: float, component: int = 0) -> float | None:
    """First time mode ``k``'s component reaches ``threshold`` from below.

    Uses a recorded event when one matches; otherwise brackets the sign
    change on the samples and refines by bisection, re-integrating the mode
    when the trajectory knows its system, else by linear interpolation.
    """
    x = traj.values[:, k - 1, component]
    if x[0] >= threshold:
        return 0.0
    for ev in traj.events:
        if ev.mode == k and ev.threshold == threshold and ev.kind == "up_crossing" and component == 0:
            return ev.time
    hits = np.flatnonzero(x >= threshold)
    if hits.size == 0:
        return None
    i = int(hits[0])
    t0, t1 = float(traj.times[i - 1]), float(traj.times[i])
    sys, cfg, x0 = traj.system, traj.config, traj.initial
    if sys is None or cfg is None or x0 is None or not sys.decoupled:
        x_lo, x_hi = x[i - 1], x[i]
        return t0 + (threshold - x_lo) / (x_hi - x_lo) * (t1 - t0)
    z_start = x0.modes[k - 1 : k]
    if t0 > 0:
        z_start = simulate_lanes(sys, [k], z_start, traj.input_ref, t0, cfg, record=False).final
    u_rest = shift(traj.input_ref, t0)
    lo, hi = 0.0, t1 - t0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        z = simulate_lanes(sys, [k], z_start, u_rest, mid, cfg, record=False).final
        if z[0, component] >= threshold:
            hi = mid
        else:
            lo = mid
    return t0 + hi


@dataclass(frozen=True)
class AxiomReport:
    identity: float
    causality: float
    cocycle: float
    n_samples: int

    def max_defect(self) -> float:
        return max(self.identity, self.causality, self.cocycle)


def random_axiom_samples(sys: TruncatedModeSystem, n: int, seed: int = 0, radius: float = 1.0, max_support: int = 3):
    """Random ``(x0, u, t, h)`` tuples: sparse states of norm at most ``radius``, inputs with up to 3 switches."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        modes = np.zeros((sys.n_modes, sys.mode_dim))
        support = rng.choice(sys.n_modes, size=min(max_support, sys.n_modes), replace=False)
        count = int(rng.integers(1, support.size + 1))
        modes[support[:count]] = rng.uniform(-1.0, 1.0, size=(count, sys.mode_dim))
        x0 = StateVector(modes, sys.norm_tag)
        nx = x0.norm()
        if nx > 0:
            x0 = StateVector(modes * (radius * rng.uniform(0.0, 1.0) / nx), sys.norm_tag)
        u = random_signal(rng, 1.0, int(rng.integers(0, 4)), 2.0, sys.input_dim)
        t, h = rng.uniform(0.0, 1.0, size=2)
        out.append((x0, u, float(t), float(h)))
    return out


def _diff(a: StateVector, b: StateVector) -> float:
    return float(combine_norms(mode_norms(a.modes - b.modes), a.norm_tag))


def check_axioms(sys: TruncatedModeSystem, samples, cfg: IntegratorConfig = IntegratorConfig(), seed: int = 0) -> AxiomReport:
    """Largest identity, causality and cocycle defects over the samples.

    ``samples`` is a sequence of ``(x0, u, t, h)`` or a count for
    :func:`random_axiom_samples`. Causality compares ``u`` against ``u``
    switched to an unrelated random signal at ``t``.
    """
    if isinstance(samples, int):
        samples = random_axiom_samples(sys, samples, seed)
    rng = np.random.default_rng(seed + 7919)
    ident = caus = coc = 0.0
    count = 0
    for x0, u, t, h in samples:
        count += 1
        ident = max(ident, _diff(flow(sys, 0.0, x0, u, cfg), x0))
        phi_t = flow(sys, t, x0, u, cfg)
        if t > 0:
            other = random_signal(rng, 1.0, 2, 2.0, sys.input_dim)
            caus = max(caus, _diff(phi_t, flow(sys, t, x0, concat(u, other, t), cfg)))
        direct = flow(sys, t + h, x0, u, cfg)
        pieced = flow(sys, h, phi_t, shift(u, t), cfg)
        coc = max(coc, _diff(direct, pieced))
    return AxiomReport(ident, caus, coc, count)


def write_trajectory_csv(traj: Trajectory, out, modes: Sequence[int] | None = None) -> None:
    """Long-format CSV: time, mode_index, component_index, value, local_error.

    Mode indices start at 1, component indices at 0. Floats are written
    with ``repr`` so output is byte-stable.
    """
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "mode_index", "component_index", "value", "local_error"])
        ks = range(1, traj.values.shape[1] + 1) if modes is None else modes
        for i, t in enumerate(traj.times):
            e = repr(float(traj.local_error_estimates[i]))
            ts = repr(float(t))
            for k in ks:
                for c in range(traj.values.shape[2]):
                    w.writerow([ts, k, c, repr(float(traj.values[i, k - 1, c])), e])
    finally:
        if own:
            fh.close()


def write_events_csv(traj: Trajectory, out) -> None:
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "mode_index", "kind", "threshold"])
        for ev in traj.events:
            w.writerow([repr(float(ev.time)), ev.mode, ev.kind, repr(float(ev.threshold))])
    finally:
        if own:
            fh.close()
