"""Budgeted empirical checks of stability properties.

Every check either falsifies a property with a replayable witness or
reports that no violation was found within its budget. The latter is
never a proof.

Uniformity failures only show up along families (mode index, truncation
level, input magnitude). A family *diverges* when it contains at least
``DIVERGENCE_RUN`` successive members, each at least ``DIVERGENCE_RATIO``
times the previous. A censored member (the event was not reached within
the horizon) counts as infinite when a finite member precedes it.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .comparison_functions import ScalarGainFunction, kl_envelope_fit, parse_gain, zero
from .integrator import IntegrationError, IntegratorConfig, flow, moving_modes, simulate_lanes, trajectory
from .signals import InputSignal, parse_signal, random_signal, shift
from .systems import StateVector, TruncatedModeSystem, combine_norms, format_state, make_system, mode_norms, parse_state

__all__ = [
    "DIVERGENCE_RATIO",
    "DIVERGENCE_RUN",
    "EstimationBudget",
    "EstimationReport",
    "FALSIFIED",
    "NO_VIOLATION",
    "Witness",
    "adversarial_search",
    "attainment_time",
    "check_ag",
    "check_brs",
    "check_cep",
    "check_limit",
    "check_stability",
    "check_zero_ugatt",
    "divergence_run",
    "estimate_flow_lipschitz",
    "fit_iss_bound",
    "tail_time",
]

FALSIFIED = "Falsified"
NO_VIOLATION = "NoViolationFound"

DIVERGENCE_RATIO = 1.5
DIVERGENCE_RUN = 4
TRUST_HORIZON = 1e6

_ESCAPE_NOTE = "inconclusive: numerical escape"


@dataclass(frozen=True)
class EstimationBudget:
    """What a check samples.

    States come in three families: ``r * d`` placed on a single mode ``k``
    for every direction ``d`` and every ``k`` in ``modes``, random sparse
    vectors and random dense vectors. Inputs are the constants
    ``+-v`` for ``v`` in ``input_values`` followed by ``n_random_inputs``
    random signals with up to ``max_switches`` switches.
    """

    radii: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    eps_grid: tuple[float, ...] = (0.1,)
    horizon: float = 100.0
    input_values: tuple[float, ...] = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0)
    n_random_inputs: int = 2
    max_switches: int = 3
    directions: tuple[tuple[float, ...], ...] | None = None
    modes: tuple[int, ...] | None = None
    truncations: tuple[int, ...] = (8, 16, 32, 64)
    n_random_states: int = 4
    local_radius: float = 1.0
    seed: int = 0
    workers: int = 1
    integrator: IntegratorConfig = IntegratorConfig()

    def __post_init__(self):
        for name in ("radii", "eps_grid", "input_values", "truncations"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"budget grid {name} must be nonempty")
            object.__setattr__(self, name, vals)
        if any(r <= 0 for r in self.radii) or any(e <= 0 for e in self.eps_grid):
            raise ValueError("radii and eps_grid must be positive")
        if any(v < 0 for v in self.input_values):
            raise ValueError("input_values are magnitudes and must be nonnegative")
        if any(int(n) < 1 for n in self.truncations):
            raise ValueError("truncations must be positive")
        if not 0 < self.horizon <= TRUST_HORIZON:
            raise ValueError(f"horizon must lie in (0, {TRUST_HORIZON:g}]")
        if self.modes is not None:
            if not self.modes or any(int(k) < 1 for k in self.modes):
                raise ValueError("modes must be a nonempty list of indices >= 1")
            object.__setattr__(self, "modes", tuple(sorted({int(k) for k in self.modes})))
        if self.directions is not None:
            dirs = tuple(tuple(float(c) for c in d) for d in self.directions)
            if not dirs or any(not any(d) for d in dirs):
                raise ValueError("directions must be nonempty and nonzero")
            object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "truncations", tuple(sorted({int(n) for n in self.truncations})))
        if self.n_random_inputs < 0 or self.n_random_states < 0 or self.max_switches < 0:
            raise ValueError("sample counts must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def echo(self) -> list[tuple[str, str]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "integrator":
                for g in fields(v):
                    out.append((f"integrator.{g.name}", repr(getattr(v, g.name))))
            else:
                out.append((f.name, repr(v)))
        return out


# witnesses -------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    """A replayable violation.

    ``kind`` selects the replayed quantity: ``norm`` is the state norm at
    ``time``; ``attainment`` and ``tail`` are first-entry and last-exit
    times for the target ``eps + gamma(|u|)`` on ``[0, horizon]``;
    ``residual`` is the state norm at ``time`` minus ``offset``; ``dini``
    is the upper derivative at the initial state of the Lyapunov function
    named in ``gamma``. The violation is ``measured > bound``.
    """

    system_id: str
    n_modes: int
    state: str
    signal: str
    time: float
    measured: float
    bound: float
    kind: str = "norm"
    eps: float = 0.0
    gamma: str = "zero"
    offset: float = 0.0
    horizon: float = 0.0
    system_params: tuple = ()
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    hard_state_cap: float = 1e9

    def system(self) -> TruncatedModeSystem:
        return make_system(self.system_id, self.n_modes, dict(self.system_params))

    def config(self) -> IntegratorConfig:
        return IntegratorConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol, hard_state_cap=self.hard_state_cap)

    def evaluate(self) -> float:
        sys = self.system()
        x0 = parse_state(self.state, sys)
        u = parse_signal(self.signal)
        cfg = self.config()
        if self.kind in ("norm", "residual"):
            return flow(sys, self.time, x0, u, cfg).norm() - (self.offset if self.kind == "residual" else 0.0)
        if self.kind == "dini":
            from .lyapunov import dini_derivative, parse_lyapunov

            return dini_derivative(parse_lyapunov(self.gamma), sys, x0, u, cfg=cfg).value
        gamma = parse_gain(self.gamma)
        if self.kind == "attainment":
            t = attainment_time(sys, x0, u, self.eps, gamma, self.horizon, cfg)
        elif self.kind == "tail":
            t = tail_time(sys, x0, u, self.eps, gamma, self.horizon, cfg)
        else:
            raise ValueError(f"unknown witness kind {self.kind!r}")
        return math.inf if t is None else t

    def tolerance(self) -> float:
        m = self.measured if math.isfinite(self.measured) else 0.0
        return 2.0 * (self.rel_tol * abs(m) + self.abs_tol)

    def replay(self) -> tuple[float, bool]:
        """Recompute the measured quantity; also whether it matches and still violates."""
        value = self.evaluate()
        if math.isinf(self.measured) or math.isinf(value):
            same = value == self.measured
        else:
            same = abs(value - self.measured) <= self.tolerance()
        return value, bool(same and value > self.bound)

    def text(self) -> str:
        """INI text; the ``system``, ``initial``, ``input`` and ``run`` sections also drive ``simulate``."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["system"] = {"id": self.system_id, "n_modes": str(self.n_modes)}
        for k, v in self.system_params:
            cp["system"][k] = str(v)
        cp["initial"] = {"state": self.state}
        cp["input"] = {"signal": self.signal}
        cp["run"] = {"T": repr(float(self.time))}
        cp["integrator"] = {
            "rel_tol": repr(self.rel_tol),
            "abs_tol": repr(self.abs_tol),
            "hard_state_cap": repr(self.hard_state_cap),
        }
        cp["witness"] = {
            "kind": self.kind,
            "time": repr(float(self.time)),
            "measured": repr(float(self.measured)),
            "bound": repr(float(self.bound)),
            "eps": repr(float(self.eps)),
            "gamma": self.gamma,
            "offset": repr(float(self.offset)),
            "horizon": repr(float(self.horizon)),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Witness":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_string(text)
        sysd = dict(cp["system"])
        sid = sysd.pop("id")
        n = int(sysd.pop("n_modes"))
        params = tuple(sorted((k, _literal(v)) for k, v in sysd.items()))
        w = cp["witness"]
        itg = cp["integrator"]
        return cls(
            system_id=sid,
            n_modes=n,
            state=cp["initial"]["state"],
            signal=cp["input"]["signal"],
            time=float(w["time"]),
            measured=float(w["measured"]),
            bound=float(w["bound"]),
            kind=w["kind"],
            eps=float(w["eps"]),
            gamma=w["gamma"],
            offset=float(w["offset"]),
            horizon=float(w["horizon"]),
            system_params=params,
            rel_tol=float(itg["rel_tol"]),
            abs_tol=float(itg["abs_tol"]),
            hard_state_cap=float(itg["hard_state_cap"]),
        )


def _literal(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def _make_witness(sys, x0, u, t, bound, cfg, kind="norm", **kw) -> Witness:
    w = Witness(
        system_id=sys.catalog_id,
        n_modes=sys.n_modes,
        state=format_state(x0),
        signal=u.text(),
        time=float(t),
        measured=math.nan,
        bound=float(bound),
        kind=kind,
        system_params=tuple(sys.params),
        rel_tol=cfg.rel_tol,
        abs_tol=cfg.abs_tol,
        hard_state_cap=cfg.hard_state_cap,
        **kw,
    )
    return replace(w, measured=float(w.evaluate()))


# reports ---------------------------------------------------------------------


@dataclass
class EstimationReport:
    property_id: str
    verdict: str
    witness: Witness | None = None
    value: float | None = None
    tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)
    budget: EstimationBudget | None = None
    notes: list[str] = field(default_factory=list)
    system_id: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def falsified(self) -> bool:
        return self.verdict == FALSIFIED

    def table(self, name: str) -> list[dict]:
        cols, rows = self.tables[name]
        return [dict(zip(cols, r)) for r in rows]

    def text(self) -> str:
        lines = [f"property: {self.property_id}", f"system: {self.system_id}", f"verdict: {self.verdict}"]
        if self.value is not None:
            lines.append(f"value: {self.value!r}")
        if self.witness is not None:
            w = self.witness
            lines.append(
                f"witness: kind={w.kind} N={w.n_modes} state={w.state} input={w.signal} "
                f"time={w.time!r} measured={w.measured!r} bound={w.bound!r}"
            )
        for n in self.notes:
            lines.append(f"note: {n}")
        if self.budget is not None:
            lines.extend(f"budget.{k} = {v}" for k, v in self.budget.echo())
        return "\n".join(lines) + "\n"

    def write(self, outdir: str) -> list[str]:
        """Write ``report.txt``, one CSV per table and ``witness.txt``; returns the paths."""
        os.makedirs(outdir, exist_ok=True)
        paths = []
        p = os.path.join(outdir, "report.txt")
        with open(p, "w") as fh:
            fh.write(self.text())
        paths.append(p)
        for name, (cols, rows) in sorted(self.tables.items()):
            p = os.path.join(outdir, f"{name}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for r in rows:
                    w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
            paths.append(p)
        if self.witness is not None:
            p = os.path.join(outdir, "witness.txt")
            with open(p, "w") as fh:
                fh.write(self.witness.text())
            paths.append(p)
        return paths


# families and sampling -------------------------------------------------------


def divergence_run(values: Sequence[float | None], ratio: float = DIVERGENCE_RATIO, length: int = DIVERGENCE_RUN):
    """Start index of the first diverging run, or ``None``.

    ``None`` entries and ``inf`` are censored members.
    """
    vals = [math.inf if v is None else float(v) for v in values]
    n = len(vals)
    for start in range(n):
        a = vals[start]
        if not (math.isfinite(a) and a > 0):
            continue
        end = start
        while end + 1 < n:
            prev, nxt = vals[end], vals[end + 1]
            if math.isinf(nxt):
                end += 1
                continue
            if math.isinf(prev) or nxt < ratio * prev:
                break
            end += 1
        if end - start + 1 >= length:
            return start
    return None


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _directions(sys: TruncatedModeSystem, budget: EstimationBudget) -> list[np.ndarray]:
    if budget.directions is not None:
        out = []
        for d in budget.directions:
            v = np.asarray(d, dtype=float)
            if v.size != sys.mode_dim:
                raise ValueError(f"direction {d} does not match mode dimension {sys.mode_dim}")
            out.append(v / np.linalg.norm(v))
        return out
    dirs = [np.eye(sys.mode_dim)[i] for i in range(sys.mode_dim)]
    if sys.mode_dim > 1:
        dirs.append(np.ones(sys.mode_dim) / math.sqrt(sys.mode_dim))
    return dirs


def _levels(sys: TruncatedModeSystem, budget: EstimationBudget) -> list[TruncatedModeSystem]:
    out, seen = [], set()
    for n in budget.truncations:
        s = sys.with_modes(n)
        if s.n_modes not in seen:
            seen.add(s.n_modes)
            out.append(s)
    return out


def _family_modes(budget: EstimationBudget, n_max: int) -> list[int]:
    ks = budget.modes if budget.modes is not None else range(1, n_max + 1)
    return [k for k in ks if k <= n_max]


def _mode_state(sys, k, vec) -> StateVector:
    modes = np.zeros((sys.n_modes, sys.mode_dim))
    modes[k - 1] = vec
    return StateVector(modes, sys.norm_tag)


def _random_states(sys, radius, count, rng, on_sphere=True) -> list[StateVector]:
    out = []
    for i in range(count):
        modes = np.zeros((sys.n_modes, sys.mode_dim))
        if i % 2 == 0:
            support = rng.choice(sys.n_modes, size=min(3, sys.n_modes), replace=False)
            modes[support] = rng.normal(size=(support.size, sys.mode_dim))
        else:
            modes = rng.normal(size=modes.shape) / np.arange(1, sys.n_modes + 1)[:, None]
        x = StateVector(modes, sys.norm_tag)
        nx = x.norm()
        if nx == 0:
            continue
        scale = radius if on_sphere else radius * rng.uniform(0.0, 1.0)
        out.append(StateVector(modes * (scale / nx), sys.norm_tag))
    return out


def _inputs(sys, budget, magnitudes, rng, random_magnitude=None) -> list[InputSignal]:
    out, seen = [], set()
    for v in magnitudes:
        for sign in ((1.0,) if v == 0 else (1.0, -1.0)):
            val = np.zeros(sys.input_dim)
            val[0] = sign * v
            u = InputSignal.constant(val)
            if u.text() not in seen:
                seen.add(u.text())
                out.append(u)
    mag = max(magnitudes) if random_magnitude is None else random_magnitude
    if mag > 0:
        for _ in range(budget.n_random_inputs):
            n_sw = int(rng.integers(1, budget.max_switches + 1)) if budget.max_switches else 0
            out.append(random_signal(rng, mag, n_sw, budget.horizon, sys.input_dim))
    return out


@dataclass
class _Run:
    """Norm history of one sampled trajectory."""

    x0: StateVector
    u: InputSignal
    times: np.ndarray
    norms: np.ndarray
    lane: tuple | None = None  # (k, mode states) when a single mode moves

    def sup(self, t_max=math.inf) -> tuple[float, float]:
        sel = self.times <= t_max
        i = int(np.argmax(np.where(sel, self.norms, -np.inf)))
        return float(self.norms[i]), float(self.times[i])


def _sweep(sys, states: Sequence[StateVector], u: InputSignal, T: float, cfg: IntegratorConfig, notes: list, stop_below=None) -> list[_Run | None]:
    """Trajectories of every state under one input; single-mode states are batched as lanes.

    With ``stop_below``, lane runs end once the norm reaches that level, so
    only first-entry times can be read from them.
    """
    out: list[_Run | None] = [None] * len(states)
    lane_idx, ks, zs = [], [], []
    for i, x in enumerate(states):
        mv = moving_modes(sys, x, u, T) if sys.decoupled else None
        if mv is not None and mv.size == 0:
            nx = x.norm()
            out[i] = _Run(x, u, np.array([0.0, T]), np.array([nx, nx]))
        elif mv is not None and mv.size == 1 and not np.any(np.delete(x.modes, mv[0], axis=0)):
            lane_idx.append(i)
            ks.append(int(mv[0]) + 1)
            zs.append(x.modes[mv[0]])
        else:
            try:
                tr = trajectory(sys, T, x, u, cfg)
                out[i] = _Run(x, u, tr.times, tr.norms())
            except IntegrationError as exc:
                notes.append(f"{_ESCAPE_NOTE}: state {format_state(x)} input {u.text()}: {exc}")
    if lane_idx:
        try:
            runs = [simulate_lanes(sys, ks, np.array(zs), u, T, cfg, stop_below=stop_below)]
            groups = [list(range(len(lane_idx)))]
        except IntegrationError:
            runs, groups = [], []
            for j in range(len(lane_idx)):
                try:
                    runs.append(simulate_lanes(sys, [ks[j]], np.array([zs[j]]), u, T, cfg, stop_below=stop_below))
                    groups.append([j])
                except IntegrationError as exc:
                    notes.append(f"{_ESCAPE_NOTE}: state {format_state(states[lane_idx[j]])} input {u.text()}: {exc}")
        for run, grp in zip(runs, groups):
            for pos, j in enumerate(grp):
                i = lane_idx[j]
                z = run.states[pos]
                out[i] = _Run(states[i], u, run.times[pos], mode_norms(z), (ks[j], z))
    return out


def _restart(sys, run: _Run, i: int, cfg):
    """Exact state at sample ``i`` as ``(mode index or None, state array)``."""
    t = float(run.times[i])
    if run.lane is not None:
        return run.lane[0], run.lane[1][i][None, :]
    return None, flow(sys, t, run.x0, run.u, cfg)


def _norm_after(sys, start, u_rest, s, cfg) -> float:
    k, z = start
    if k is not None:
        return float(mode_norms(simulate_lanes(sys, [k], z, u_rest, s, cfg, record=False).final)[0])
    return flow(sys, s, z, u_rest, cfg).norm()


def _bisect_level(sys, run, i, target, cfg, below_at_hi: bool) -> float:
    """Time in ``(times[i-1], times[i]]`` where the norm passes ``target``."""
    t0, t1 = float(run.times[i - 1]), float(run.times[i])
    start = _restart(sys, run, i - 1, cfg)
    u_rest = shift(run.u, t0)
    lo, hi = 0.0, t1 - t0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi or hi - lo <= 1e-13 * max(1.0, t1):
            break
        below = _norm_after(sys, start, u_rest, mid, cfg) <= target
        if below == below_at_hi:
            hi = mid
        else:
            lo = mid
    return t0 + hi


def _first_hit(sys, run: _Run, target: float, cfg) -> float | None:
    if run.norms[0] <= target:
        return 0.0
    hits = np.flatnonzero(run.norms <= target)
    if hits.size == 0:
        return None
    return _bisect_level(sys, run, int(hits[0]), target, cfg, True)


def _last_exit(sys, run: _Run, target: float, cfg) -> float | None:
    """Time after which the norm stays within ``target`` up to the horizon."""
    above = np.flatnonzero(run.norms > target)
    if above.size == 0:
        return 0.0
    j = int(above[-1])
    if j == run.norms.size - 1:
        return None
    return _bisect_level(sys, run, j + 1, target, cfg, True)


def _single_run(sys, x0, u, T, cfg, stop_below=None) -> _Run:
    notes: list[str] = []
    run = _sweep(sys, [x0], u, T, cfg, notes, stop_below)[0]
    if run is None:
        raise IntegrationError(notes[0] if notes else "integration failed")
    return run


def attainment_time(sys, x0: StateVector, u: InputSignal, eps: float, gamma: ScalarGainFunction, T: float, cfg: IntegratorConfig = IntegratorConfig()) -> float | None:
    """First ``t <= T`` with ``|phi(t, x0, u)| <= eps + gamma(|u|)``, or ``None``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    target = eps + gamma(u.sup_norm())
    if x0.norm() <= target:
        return 0.0
    return _first_hit(sys, _single_run(sys, x0, u, T, cfg, target), target, cfg)


def tail_time(sys, x0: StateVector, u: InputSignal, eps: float, gamma: ScalarGainFunction, T: float, cfg: IntegratorConfig = IntegratorConfig()) -> float | None:
    """Earliest ``tau`` with the norm within ``eps + gamma(|u|)`` on ``[tau, T]``, or ``None``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    target = eps + gamma(u.sup_norm())
    return _last_exit(sys, _single_run(sys, x0, u, T, cfg), target, cfg)


# sampled sup tables ----------------------------------------------------------


@dataclass
class _Sample:
    value: float
    time: float
    x0: StateVector
    u: InputSignal
    level: int  # truncation the sample belongs to
    mode: int | None = None


def _best(samples: Iterable[_Sample]) -> _Sample | None:
    best = None
    for s in samples:
        if best is None or s.value > best.value:
            best = s
    return best


def _mode_family_sups(sys_max, budget, radius, inputs, t_max, T, cfg, notes, ks, dirs) -> dict[int, _Sample]:
    """Per-mode sup of the norm over directions and inputs."""
    states = [(k, _mode_state(sys_max, k, radius * d)) for k in ks for d in dirs]

    def one(u):
        return _sweep(sys_max, [s for _, s in states], u, T, cfg, notes)

    per_mode: dict[int, _Sample] = {}
    for runs in _pmap(one, inputs, budget.workers):
        for (k, x0), run in zip(states, runs):
            if run is None:
                continue
            v, t = run.sup(t_max)
            cur = per_mode.get(k)
            if cur is None or v > cur.value:
                per_mode[k] = _Sample(v, t, x0, run.u, 0, k)
    return per_mode


def _random_sups(level_sys, budget, radius, inputs, t_max, T, cfg, notes, rng) -> list[_Sample]:
    xs = _random_states(level_sys, radius, budget.n_random_states, rng, on_sphere=False)
    out = []
    for u in inputs:
        for x0, run in zip(xs, _sweep(level_sys, xs, u, T, cfg, notes)):
            if run is not None:
                v, t = run.sup(t_max)
                out.append(_Sample(v, t, x0, u, level_sys.n_modes))
    return out


def _truncation_sups(sys, budget, radius, inputs, t_max, T, cfg, notes, rng):
    """Sup of the norm at each truncation level and the per-mode sups."""
    levels = _levels(sys, budget)
    sys_max = levels[-1]
    ks = _family_modes(budget, sys_max.n_modes)
    per_mode = _mode_family_sups(sys_max, budget, radius, inputs, t_max, T, cfg, notes, ks, _directions(sys, budget))
    by_level = []
    for lv in levels:
        cands = [s for k, s in per_mode.items() if k <= lv.n_modes]
        cands += _random_sups(lv, budget, radius, inputs, t_max, T, cfg, notes, rng)
        best = _best(cands)
        by_level.append((lv, best))
    return by_level, per_mode


def _rehome(sample: _Sample, lv: TruncatedModeSystem) -> StateVector:
    """The sample's initial state as a state of truncation ``lv``."""
    modes = np.zeros((lv.n_modes, lv.mode_dim))
    n = min(lv.n_modes, sample.x0.n_modes)
    modes[:n] = sample.x0.modes[:n]
    return StateVector(modes, lv.norm_tag)


def _cfg_for_witness(cfg: IntegratorConfig) -> IntegratorConfig:
    return IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, hard_state_cap=cfg.hard_state_cap)


def _divergent_norm_witness(by_level, cfg, notes, label):
    seq = [b.value if b is not None else None for _, b in by_level]
    start = divergence_run(seq)
    if start is None:
        return None
    lv, best = by_level[-1]
    prev = by_level[-2][1].value if len(by_level) > 1 and by_level[-2][1] is not None else 0.0
    notes.append(f"{label} grows by at least {DIVERGENCE_RATIO} per truncation doubling: " + ", ".join(f"N={l.n_modes}: {b.value:.6g}" for l, b in by_level[start:]))
    wcfg = _cfg_for_witness(cfg)
    return _make_witness(lv, _rehome(best, lv), best.u, best.time, prev, wcfg)


def check_brs(sys: TruncatedModeSystem, C: float, tau: float, budget: EstimationBudget = EstimationBudget()) -> EstimationReport:
    """Sup of ``|phi(t, x, u)|`` over ``|x| <= C``, ``|u| <= C``, ``t <= tau``.

    Falsified when the sup diverges across truncation levels.
    """
    if not (C > 0 and tau > 0):
        raise ValueError("C and tau must be positive")
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    inputs = _inputs(sys, budget, (0.0, 0.5 * C, C), rng, C)
    by_level, per_mode = _truncation_sups(sys, budget, C, inputs, tau, tau, cfg, notes, rng)
    rows = [(lv.n_modes, b.value if b else math.nan, b.mode if b and b.mode else 0) for lv, b in by_level]
    tables = {
        "sup_by_truncation": (("n_modes", "sup_norm", "argmax_mode"), rows),
        "sup_by_mode": (("mode", "sup_norm"), [(k, s.value) for k, s in sorted(per_mode.items())]),
    }
    witness = _divergent_norm_witness(by_level, cfg, notes, "reachable-set sup")
    value = by_level[-1][1].value if by_level[-1][1] else None
    return EstimationReport("BRS", FALSIFIED if witness else NO_VIOLATION, witness, value, tables, budget, notes, sys.catalog_id)


_STABILITY = ("ULS", "UGS", "UGB", "ZeroULS", "ZeroUGS")


def check_stability(sys: TruncatedModeSystem, variant: str, budget: EstimationBudget = EstimationBudget()) -> EstimationReport:
    """Fit ``sigma`` and ``gamma`` envelopes and look for unbounded sups.

    ``J(r, s)`` is the sampled sup of the norm over states of norm ``r``
    and inputs of magnitude ``s``. ``sigma(r)`` is the running max of
    ``J(r, 0)``, ``gamma(s)`` the running max of ``J(r, s) - sigma(r)``.
    Falsified when ``J`` diverges across truncations at fixed ``(r, s)``,
    or when the sup over the whole horizon is at least 1.5 times the sup
    over its first half (still growing at the end of the horizon).
    """
    if variant not in _STABILITY:
        raise ValueError(f"variant must be one of {_STABILITY}")
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    local = variant in ("ULS", "ZeroULS")
    radii = sorted(r for r in budget.radii if not local or r <= budget.local_radius) or [min(budget.radii)]
    if variant.startswith("Zero"):
        mags = [0.0]
    else:
        mags = sorted({v for v in budget.input_values if not local or v <= budget.local_radius} | {0.0})
    T = budget.horizon
    J = {}
    J_half = {}
    witness = None
    div_rows = []
    for r in radii:
        for s in mags:
            inputs = _inputs(sys, budget, (s,), rng, s)
            if s == 0:
                inputs = inputs[:1]
            by_level, _ = _truncation_sups(sys, budget, r, inputs, T, T, cfg, notes, rng)
            best = by_level[-1][1]
            if best is None:
                continue
            J[(r, s)] = best.value
            for lv, b in by_level:
                div_rows.append((r, s, lv.n_modes, b.value if b else math.nan))
            if witness is None:
                witness = _divergent_norm_witness(by_level, cfg, notes, f"sup at r={r!r}, |u|={s!r}")
            if witness is None:
                lv = by_level[-1][0]
                x0 = _rehome(best, lv)
                half = _single_run(lv, x0, best.u, T, cfg).sup(T / 2)[0]
                J_half[(r, s)] = half
                if best.value >= DIVERGENCE_RATIO * max(half, 1e-300) and best.time > T / 2:
                    notes.append(f"sup at r={r!r}, |u|={s!r} still growing: {half:.6g} on [0, T/2], {best.value:.6g} on [0, T]")
                    witness = _make_witness(lv, x0, best.u, best.time, half, _cfg_for_witness(cfg))
    sigma, g = [], {}
    run = 0.0
    for r in radii:
        run = max(run, J.get((r, 0.0), 0.0))
        sigma.append((r, run))
    sig = dict(sigma)
    for s in mags:
        g[s] = max([max(J.get((r, s), 0.0) - sig[r], 0.0) for r in radii] or [0.0])
    gamma_rows, run = [], 0.0
    for s in mags:
        run = max(run, g[s])
        gamma_rows.append((s, run))
    tables = {
        "sigma_hat": (("r", "sigma"), sigma),
        "gamma_hat": (("input_magnitude", "gamma"), gamma_rows),
        "sup_by_truncation": (("r", "input_magnitude", "n_modes", "sup_norm"), div_rows),
    }
    if variant == "UGB":
        c = max([J[(r, s)] - sig[r] - dict(gamma_rows)[s] for (r, s) in J] + [0.0])
        tables["offset"] = (("c",), [(c,)])
    if local:
        notes.append(f"local check: radii and input magnitudes capped at {budget.local_radius!r}")
    value = max(J.values()) if J else None
    return EstimationReport(variant, FALSIFIED if witness else NO_VIOLATION, witness, value, tables, budget, notes, sys.catalog_id)


# attainment families ---------------------------------------------------------


def _times_for(sys, states, inputs, eps, gamma, T, cfg, notes, workers, mode: str):
    """Attainment (``first``) or tail (``tail``) times for every (state, input) pair."""
    finder = _first_hit if mode == "first" else _last_exit

    def one(u):
        target = eps + gamma(u.sup_norm())
        runs = _sweep(sys, states, u, T, cfg, notes, target if mode == "first" else None)
        out = []
        for run in runs:
            if run is None:
                out.append(math.nan)
                continue
            t = finder(sys, run, target, cfg)
            out.append(math.inf if t is None else t)
        return out

    cols = _pmap(one, inputs, workers)
    return [[cols[j][i] for j in range(len(inputs))] for i in range(len(states))]


def _max_with_arg(vals):
    best, arg = -math.inf, None
    for i, v in enumerate(vals):
        if not math.isnan(v) and v > best:
            best, arg = v, i
    return best, arg


def _uniform_time_check(sys, gamma, budget, mode, prop):
    """Shared body of the ULIM and UAG checks."""
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    T = budget.horizon
    levels = _levels(sys, budget)
    sys_max = levels[-1]
    ks = _family_modes(budget, sys_max.n_modes)
    dirs = _directions(sys, budget)
    inputs = _inputs(sys, budget, budget.input_values, rng)
    mode_rows, trunc_rows, tau_rows = [], [], []
    witness = None
    tau_hat = {}
    for eps in sorted(budget.eps_grid):
        running = 0.0
        for r in sorted(budget.radii):
            fam = [(k, _mode_state(sys_max, k, r * d)) for k in ks for d in dirs]
            times = _times_for(sys_max, [s for _, s in fam], inputs, eps, gamma, T, cfg, notes, budget.workers, mode)
            per_mode: dict[int, tuple[float, StateVector, InputSignal]] = {}
            for (k, x0), row in zip(fam, times):
                v, j = _max_with_arg(row)
                if j is not None and (k not in per_mode or v > per_mode[k][0]):
                    per_mode[k] = (v, x0, inputs[j])
            for k in sorted(per_mode):
                mode_rows.append((eps, r, k, per_mode[k][0]))
            level_best = []
            for lv in levels:
                cands = [(v, x0, u) for k, (v, x0, u) in per_mode.items() if k <= lv.n_modes]
                xs = _random_states(lv, r, budget.n_random_states, rng, on_sphere=False)
                if xs:
                    rt = _times_for(lv, xs, inputs, eps, gamma, T, cfg, notes, budget.workers, mode)
                    for x0, row in zip(xs, rt):
                        v, j = _max_with_arg(row)
                        if j is not None:
                            cands.append((v, x0, inputs[j]))
                best = max(cands, key=lambda c: c[0]) if cands else None
                level_best.append((lv, best))
                trunc_rows.append((eps, r, lv.n_modes, best[0] if best else math.nan))
            running = max(running, level_best[-1][1][0] if level_best[-1][1] else 0.0)
            tau_hat[(eps, r)] = running
            tau_rows.append((eps, r, running))
            if witness is not None:
                continue
            fams = [
                ("mode", [per_mode[k][0] if k in per_mode else None for k in sorted(per_mode)], [per_mode[k] for k in sorted(per_mode)], None),
                ("truncation", [b[0] if b else None for _, b in level_best], [b for _, b in level_best], [lv for lv, _ in level_best]),
            ]
            for name, seq, members, lvs in fams:
                start = divergence_run(seq)
                if start is None:
                    continue
                v, x0, u = members[-1]
                lv = lvs[-1] if lvs else sys_max
                x0 = StateVector(_pad(x0.modes, lv.n_modes), lv.norm_tag)
                bound = seq[-2] if len(seq) > 1 and seq[-2] is not None and math.isfinite(seq[-2]) else 0.0
                label = "attainment" if mode == "first" else "tail"
                notes.append(
                    f"{label} times diverge along the {name} family at eps={eps!r}, r={r!r}: "
                    + ", ".join("censored" if s is None or math.isinf(s) else f"{s:.6g}" for s in seq[start:])
                )
                witness = _make_witness(lv, x0, u, T if math.isinf(v) else v, bound, _cfg_for_witness(cfg),
                                        kind="attainment" if mode == "first" else "tail", eps=eps, gamma=gamma.label, horizon=T)
                break
    tables = {
        "tau_hat": (("eps", "r", "tau"), tau_rows),
        "tau_by_mode": (("eps", "r", "mode", "tau"), mode_rows),
        "tau_by_truncation": (("eps", "r", "n_modes", "tau"), trunc_rows),
    }
    value = max(tau_hat.values()) if tau_hat else None
    return EstimationReport(prop, FALSIFIED if witness else NO_VIOLATION, witness, value, tables, budget, notes, sys.catalog_id)


def _pad(modes: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, modes.shape[1]))
    m = min(n, modes.shape[0])
    out[:m] = modes[:m]
    return out


def _fixed_state_check(sys, gamma, budget, mode, prop):
    """sLIM / sAG: at each fixed state, max time over inputs; diverging along input magnitude falsifies."""
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    T = budget.horizon
    lv = _levels(sys, budget)[-1]
    ks = _family_modes(budget, lv.n_modes)
    dirs = _directions(sys, budget)
    mags = sorted(set(budget.input_values))
    inputs_by_mag = [_inputs(sys, replace(budget, n_random_inputs=0), (m,), rng) for m in mags]
    witness = None
    rows = []
    for eps in sorted(budget.eps_grid):
        for r in sorted(budget.radii):
            xs = [_mode_state(lv, k, r * d) for k in ks for d in dirs]
            xs += _random_states(lv, r, budget.n_random_states, rng)
            per_mag = [_times_for(lv, xs, us, eps, gamma, T, cfg, notes, budget.workers, mode) for us in inputs_by_mag]
            for i, x0 in enumerate(xs):
                seq, args = [], []
                for m, tab in zip(mags, per_mag):
                    v, j = _max_with_arg(tab[i])
                    seq.append(v)
                    args.append(j)
                    rows.append((eps, r, format_state(x0), m, v))
                start = divergence_run(seq)
                if start is not None and witness is None:
                    v = seq[-1]
                    u = inputs_by_mag[-1][args[-1]]
                    notes.append(f"times at fixed state {format_state(x0)} diverge with input magnitude: " + ", ".join(f"{s:.6g}" for s in seq[start:]))
                    bound = seq[-2] if math.isfinite(seq[-2]) else T
                    witness = _make_witness(lv, x0, u, T if math.isinf(v) else v, bound, _cfg_for_witness(cfg),
                                            kind="attainment" if mode == "first" else "tail", eps=eps, gamma=gamma.label, horizon=T)
    notes.append(f"input magnitudes capped at {max(mags)!r}; uniformity over larger inputs is not probed")
    value = max((r[-1] for r in rows if math.isfinite(r[-1])), default=None)
    tables = {"tau_by_input": (("eps", "r", "state", "input_magnitude", "tau"), rows)}
    return EstimationReport(prop, FALSIFIED if witness else NO_VIOLATION, witness, value, tables, budget, notes, sys.catalog_id)


def _pointwise_check(sys, gamma, budget, mode, prop):
    """LIM / AG: every sampled (x, u) must enter (and for AG stay in) the target ball.

    A pair that has not done so by the horizon falsifies only when its norm
    stagnates: no decrease between the two halves of the horizon.
    """
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    T = budget.horizon
    lv = _levels(sys, budget)[-1]
    ks = _family_modes(budget, lv.n_modes)
    dirs = _directions(sys, budget)
    inputs = _inputs(sys, budget, budget.input_values, rng)
    finder = _first_hit if mode == "first" else _last_exit
    witness = None
    rows = []
    censored = 0
    for eps in sorted(budget.eps_grid):
        for r in sorted(budget.radii):
            xs = [_mode_state(lv, k, r * d) for k in ks for d in dirs]
            xs += _random_states(lv, r, budget.n_random_states, rng)
            for u in inputs:
                target = eps + gamma(u.sup_norm())
                for x0, run in zip(xs, _sweep(lv, xs, u, T, cfg, notes)):
                    if run is None:
                        continue
                    t = finder(lv, run, target, cfg)
                    rows.append((eps, r, format_state(x0), u.text(), math.inf if t is None else t))
                    if t is not None:
                        continue
                    censored += 1
                    first = run.sup(T / 2)[0] if mode == "tail" else float(np.min(run.norms[run.times <= T / 2]))
                    second = float(np.max(run.norms[run.times >= T / 2])) if mode == "tail" else float(np.min(run.norms))
                    if witness is None and second >= first * (1 - 1e-9):
                        notes.append(f"norm stagnates above {target!r}: {first:.6g} on the first half, {second:.6g} on the second")
                        witness = _make_witness(lv, x0, u, T, T, _cfg_for_witness(cfg), kind="attainment" if mode == "first" else "tail",
                                                eps=eps, gamma=gamma.label, horizon=T)
    if censored and witness is None:
        notes.append(f"{censored} sampled pairs did not settle within the horizon but were still decaying")
    value = max((r[-1] for r in rows if math.isfinite(r[-1])), default=None)
    tables = {"tau_pointwise": (("eps", "r", "state", "input", "tau"), rows)}
    return EstimationReport(prop, FALSIFIED if witness else NO_VIOLATION, witness, value, tables, budget, notes, sys.catalog_id)


def check_limit(sys: TruncatedModeSystem, uniformity: str, gamma: ScalarGainFunction = zero(), budget: EstimationBudget = EstimationBudget()) -> EstimationReport:
    """LIM, sLIM or ULIM with gain ``gamma`` via first-attainment times."""
    if uniformity == "ULIM":
        return _uniform_time_check(sys, gamma, budget, "first", "ULIM")
    if uniformity == "sLIM":
        return _fixed_state_check(sys, gamma, budget, "first", "sLIM")
    if uniformity == "LIM":
        return _pointwise_check(sys, gamma, budget, "first", "LIM")
    raise ValueError("uniformity must be LIM, sLIM or ULIM")


def check_ag(sys: TruncatedModeSystem, uniformity: str, gamma: ScalarGainFunction = zero(), budget: EstimationBudget = EstimationBudget()) -> EstimationReport:
    """AG, sAG or UAG with gain ``gamma`` via last-exit (tail) times."""
    if uniformity == "UAG":
        return _uniform_time_check(sys, gamma, budget, "tail", "UAG")
    if uniformity == "sAG":
        return _fixed_state_check(sys, gamma, budget, "tail", "sAG")
    if uniformity == "AG":
        return _pointwise_check(sys, gamma, budget, "tail", "AG")
    raise ValueError("uniformity must be AG, sAG or UAG")


def check_zero_ugatt(sys: TruncatedModeSystem, budget: EstimationBudget = EstimationBudget()) -> EstimationReport:
    """Uniform global attractivity of the undisturbed system: UAG with zero inputs only."""
    rep = check_ag(sys, "UAG", zero(), replace(budget, input_values=(0.0,), n_random_inputs=0))
    rep.property_id = "0-UGATT"
    return rep


# ISS fit ---------------------------------------------------------------------


def fit_iss_bound(sys: TruncatedModeSystem, budget: EstimationBudget = EstimationBudget()) -> EstimationReport:
    """Fit ``|phi(t,x,u)| <= beta(|x|, t) + gamma(|u|)`` on the samples.

    ``gamma`` is the running max over input magnitudes of the sup norm of
    trajectories from zero. Residuals ``(|phi| - gamma(|u|))+`` feed the
    KL envelope. Falsified when the time for the worst residual at radius
    ``r`` to fall to ``r/2`` diverges across truncations, or when the worst
    residual does not decrease at all between the halves of the horizon.
    """
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    T = budget.horizon
    levels = _levels(sys, budget)
    mags = sorted(set(budget.input_values) | {0.0})
    gamma_raw = {}
    for m in mags:
        us = _inputs(sys, budget, (m,), rng, m)
        best = 0.0
        for u in us:
            run = _sweep(levels[-1], [levels[-1].zero_state()], u, T, cfg, notes)[0]
            if run is not None:
                best = max(best, float(np.max(run.norms)))
        gamma_raw[m] = best
    gamma_tab, run_max = [], 0.0
    for m in mags:
        run_max = max(run_max, gamma_raw[m])
        gamma_tab.append((m, run_max))
    gmap = dict(gamma_tab)

    def gamma_of(u):
        s = u.sup_norm()
        for m, g in gamma_tab:
            if s <= m:
                return g
        return math.inf

    t_grid = np.unique(np.concatenate([np.linspace(0.0, T, 81), np.geomspace(T * 1e-3, T, 24)]))
    samples = []
    half_rows = []
    witness = None
    inputs = _inputs(sys, budget, mags, rng)
    for r in sorted(budget.radii):
        level_seq, level_members = [], []
        stagnant = None
        for lv in levels:
            xs = [_mode_state(lv, k, r * d) for k in _family_modes(budget, lv.n_modes) for d in _directions(sys, budget)]
            xs += _random_states(lv, r, budget.n_random_states, rng)
            worst_half, worst_member = 0.0, None
            for u in inputs:
                g = gamma_of(u)
                for x0, rn in zip(xs, _sweep(lv, xs, u, T, cfg, notes)):
                    if rn is None:
                        continue
                    res = np.maximum(rn.norms - g, 0.0)
                    vals = np.interp(t_grid, rn.times, res)
                    # sup over [t, T] so the table is already nonincreasing in t
                    tail_sup = np.maximum.accumulate(vals[::-1])[::-1]
                    samples.extend((r, float(t), float(v)) for t, v in zip(t_grid, tail_sup))
                    above = np.flatnonzero(res > 0.5 * r)
                    if above.size == 0:
                        half, last_above = 0.0, 0.0
                    elif above[-1] == res.size - 1:
                        half, last_above = math.inf, T
                    else:
                        half, last_above = float(rn.times[above[-1] + 1]), float(rn.times[above[-1]])
                    if half > worst_half or worst_member is None:
                        worst_half, worst_member = half, (x0, u, last_above, g)
                    first = float(np.max(res[rn.times <= T / 2]))
                    second = float(np.max(res[rn.times >= T / 2]))
                    if stagnant is None and second > 0.5 * r and second >= first * (1 - 1e-9):
                        stagnant = (lv, x0, u, g, first, second)
            level_seq.append(worst_half)
            level_members.append((lv, worst_member))
            half_rows.append((r, lv.n_modes, worst_half))
        if witness is None:
            start = divergence_run(level_seq)
            if start is not None:
                lv, (x0, u, t_w, g) = level_members[-1]
                notes.append(f"half-decay time of the residual at r={r!r} diverges across truncations: " + ", ".join("censored" if math.isinf(s) else f"{s:.6g}" for s in level_seq[start:]))
                # last sampled time with the residual still above r/2
                witness = _make_witness(lv, x0, u, t_w, 0.5 * r, _cfg_for_witness(cfg), kind="residual", offset=g)
            elif stagnant is not None:
                lv, x0, u, g, first, second = stagnant
                notes.append(f"residual at r={r!r} does not decay: {first:.6g} on the first half of the horizon, {second:.6g} on the second")
                # any KL bound valid at t=0 must fall strictly below first by the horizon; record the residual at T
                witness = _make_witness(lv, x0, u, T, 0.0, _cfg_for_witness(cfg), kind="residual", offset=g)
                if not witness.measured > 0:
                    witness = None
    tables = {
        "gamma_hat": (("input_magnitude", "gamma"), gamma_tab),
        "half_decay": (("r", "n_modes", "time"), half_rows),
    }
    beta = None
    if samples:
        beta = kl_envelope_fit(samples)
        rs = sorted(budget.radii)
        tables["beta_hat"] = (("r", "t", "beta"), [(r, float(t), beta(r, float(t))) for r in rs for t in t_grid])
    extras = {"beta": beta, "gamma": gamma_tab}
    return EstimationReport("ISS", FALSIFIED if witness else NO_VIOLATION, witness, gmap[mags[-1]], tables, budget, notes, sys.catalog_id, extras)


# CEP and Lipschitz -----------------------------------------------------------


def check_cep(sys: TruncatedModeSystem, eps: float, h: float, budget: EstimationBudget = EstimationBudget(), depth: int = 20) -> EstimationReport:
    """Largest ``delta = eps * 2**-j`` for which sampled states and inputs of size ``delta`` stay within ``eps`` up to ``h``."""
    if not (eps > 0 and h > 0):
        raise ValueError("eps and h must be positive")
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    rows = []
    delta_hat = None
    worst = None
    for j in range(depth + 1):
        delta = eps * 2.0**-j
        inputs = _inputs(sys, budget, (0.0, 0.5 * delta, delta), rng, delta)
        n_notes = len(notes)
        by_level, _ = _truncation_sups(sys, budget, delta, inputs, h, h, cfg, notes, rng)
        # an escape passed the state cap, which lies far above eps
        escaped = any(n.startswith(_ESCAPE_NOTE) for n in notes[n_notes:])
        best = _best(b for _, b in by_level if b is not None)
        sup = math.inf if escaped else (best.value if best else 0.0)
        slack = 10.0 * (cfg.rel_tol * (best.value if best else 0.0) + cfg.abs_tol)
        ok = sup <= eps + slack
        rows.append((delta, sup, int(ok)))
        if ok:
            delta_hat = delta
            break
        if worst is None and best is not None and best.value > eps + slack:
            worst = (by_level, best)
    tables = {"delta_scan": (("delta", "sup_norm", "within_eps"), rows)}
    witness = None
    if delta_hat is None and worst is not None:
        by_level, best = worst
        lv = next(l for l, b in by_level if b is best)
        witness = _make_witness(lv, _rehome(best, lv), best.u, best.time, eps, _cfg_for_witness(cfg))
        notes.append(f"no delta down to {eps * 2.0**-depth!r} keeps trajectories within eps={eps!r}")
    elif delta_hat is None:
        notes.append(f"inconclusive: no delta down to {eps * 2.0**-depth!r} stayed within eps without a replayable violation")
    return EstimationReport("CEP", FALSIFIED if witness else NO_VIOLATION, witness, delta_hat, tables, budget, notes, sys.catalog_id)


def estimate_flow_lipschitz(
    sys: TruncatedModeSystem,
    R: float,
    tau: float,
    budget: EstimationBudget = EstimationBudget(),
    n_pairs: int = 16,
    n_times: int = 21,
    growth: tuple[float, float, float] | None = None,
) -> EstimationReport:
    """Largest sampled ``|phi(t,x,u) - phi(t,y,u)| / |x - y|`` over ``x, y`` in the ``R``-ball and ``t <= tau``.

    ``growth = (M, lam, L_f)`` adds the Gronwall bound ``M exp((M L_f + lam) tau)``
    to the notes.
    """
    if not (R > 0 and tau > 0):
        raise ValueError("R and tau must be positive")
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    notes: list[str] = []
    lv = _levels(sys, budget)[-1]
    grid = np.linspace(0.0, tau, n_times)
    inputs = _inputs(sys, budget, [v for v in budget.input_values if v <= R] or [0.0], rng, R)
    best = (1.0, 0.0)
    rows = []
    pairs = []
    dirs = _directions(sys, budget)
    for k in _family_modes(budget, lv.n_modes)[:n_pairs]:
        d = dirs[k % len(dirs)]
        pairs.append((_mode_state(lv, k, R * d), _mode_state(lv, k, 0.5 * R * d)))
    xs = _random_states(lv, R, 2 * n_pairs, rng, on_sphere=False)
    pairs += list(zip(xs[0::2], xs[1::2]))
    for u in inputs:
        for x, y in pairs:
            dx = StateVector(x.modes - y.modes, x.norm_tag).norm()
            if dx == 0:
                continue
            try:
                tx = trajectory(lv, tau, x, u, cfg, t_eval=grid)
                ty = trajectory(lv, tau, y, u, cfg, t_eval=grid)
            except IntegrationError as exc:
                notes.append(f"{_ESCAPE_NOTE}: {exc}")
                continue
            vx = tx.values[np.searchsorted(tx.times, grid)]
            vy = ty.values[np.searchsorted(ty.times, grid)]
            diff = np.sqrt(np.sum((vx - vy) ** 2, axis=-1))
            ratios = combine_norms(diff, lv.norm_tag) / dx
            i = int(np.argmax(ratios))
            if ratios[i] > best[0]:
                best = (float(ratios[i]), float(grid[i]))
    rows.append((R, tau, best[0], best[1]))
    if growth is not None:
        M, lam, Lf = growth
        bound = M * math.exp((M * Lf + lam) * tau)
        notes.append(f"Gronwall bound M*exp((M*L_f+lambda)*tau) = {bound!r}; sampled constant {best[0]!r}")
    tables = {"lipschitz": (("R", "tau", "L_hat", "argmax_time"), rows)}
    return EstimationReport("FlowLipschitz", NO_VIOLATION, None, best[0], tables, budget, notes, sys.catalog_id)


# adversarial search ----------------------------------------------------------

OBJECTIVES = ("ULIM", "UAG", "UGS", "BRS", "ISS")


def _objective_measure(objective, sys, x0, u, r, eps, T, cfg):
    """Quantity to maximize; larger means closer to a violation."""
    notes: list[str] = []
    run = _sweep(sys, [x0], u, T, cfg, notes, eps if objective == "ULIM" else None)[0]
    if run is None:
        return math.inf, None
    if objective in ("UGS", "BRS"):
        v, t = run.sup()
        return v - (r + u.sup_norm()), t
    if objective == "ULIM":
        t = _first_hit(sys, run, eps, cfg)
        return (T if t is None else min(t, T)), t
    if objective == "UAG":
        t = _last_exit(sys, run, eps, cfg)
        return (T if t is None else min(t, T)), t
    # ISS: tail time into the ball of radius eps + |u|
    t = _last_exit(sys, run, eps + u.sup_norm(), cfg)
    return (T if t is None else min(t, T)), t


def adversarial_search(sys: TruncatedModeSystem, objective: str, budget: EstimationBudget = EstimationBudget(), rounds: int = 3) -> Witness | None:
    """Scan, then coordinate search, over input magnitude, mode index, direction and switch time.

    ``UGS``/``BRS`` maximize the sup norm in excess of ``r + |u|``;
    ``ULIM``/``UAG`` maximize the first-entry or last-exit time for the
    ball of radius ``eps``; ``ISS`` maximizes the last-exit time for the
    ball of radius ``eps + |u|``.

    The best candidate is then confirmed along the mode family
    ``k/8, k/4, k/2, k``: the measure must diverge along it. Returns a
    replayable witness or ``None``.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    cfg = budget.integrator
    T = budget.horizon
    r = max(budget.radii)
    eps = min(budget.eps_grid)
    lv = _levels(sys, budget)[-1]
    dirs = _directions(sys, budget)
    mags = sorted(set(budget.input_values))
    ks = [k for k in (1, 2, 4, 8, 16, 32, 64, 128, 256) if k <= lv.n_modes] or [1]
    switches = [None, 0.25 * T, 0.5 * T]
    cur = {"mag": mags[0], "k": ks[0], "dir": 0, "switch": None}

    def build(c):
        x0 = _mode_state(lv, c["k"], r * dirs[c["dir"]])
        val = np.zeros(sys.input_dim)
        val[0] = c["mag"]
        if c["switch"] is None:
            u = InputSignal.constant(val)
        else:
            u = InputSignal.steps([(0.0, val), (c["switch"], np.zeros(sys.input_dim))])
        return x0, u

    def score(c):
        x0, u = build(c)
        return _objective_measure(objective, lv, x0, u, r, eps, T, cfg)[0]

    # coarse product scan seeds the coordinate search
    cur_score = -math.inf
    for mag in mags:
        for k in ks:
            for di in range(len(dirs)):
                cand = {"mag": mag, "k": k, "dir": di, "switch": None}
                sc = score(cand)
                if sc > cur_score:
                    cur, cur_score = cand, sc
    axes = {"mag": mags, "k": ks, "dir": list(range(len(dirs))), "switch": switches}
    for _ in range(rounds):
        improved = False
        for name, options in axes.items():
            for opt in options:
                cand = dict(cur, **{name: opt})
                s = score(cand)
                if s > cur_score:
                    cur, cur_score, improved = cand, s, True
        if not improved:
            break
    k = cur["k"]
    family = sorted({max(1, k // 8), max(1, k // 4), max(1, k // 2), k})
    if len(family) < DIVERGENCE_RUN:
        return None
    seq, last = [], None
    for kk in family:
        x0, u = build(dict(cur, k=kk))
        m, t = _objective_measure(objective, lv, x0, u, r, eps, T, cfg)
        if objective in ("UGS", "BRS"):
            m = m + r + u.sup_norm()
        seq.append(m)
        last = (x0, u, m, t)
    if divergence_run(seq) is None:
        return None
    x0, u, m, t = last
    wcfg = _cfg_for_witness(cfg)
    bound = seq[-2]
    if objective in ("UGS", "BRS"):
        _, tt = _single_run(lv, x0, u, T, cfg).sup()
        return _make_witness(lv, x0, u, tt, bound, wcfg)
    kind = "attainment" if objective == "ULIM" else "tail"
    gain = "id" if objective == "ISS" else "zero"
    return _make_witness(lv, x0, u, T if t is None else t, bound, wcfg, kind=kind, eps=eps, gamma=gain, horizon=T)
