"""Lyapunov candidates: Dini derivatives, dissipation checks and the ULIM bound they imply."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .comparison_functions import KINF, ClassVerdict, ScalarGainFunction, inverse, power, zero
from .estimators import (
    FALSIFIED,
    NO_VIOLATION,
    EstimationBudget,
    EstimationReport,
    _directions,
    _family_modes,
    _inputs,
    _cfg_for_witness,
    _levels,
    _make_witness,
    _mode_state,
    _random_states,
    attainment_time,
)
from .integrator import IntegratorConfig, flow, trajectory
from .signals import InputSignal
from .systems import StateVector, TruncatedModeSystem, format_state

__all__ = [
    "CandidateLF",
    "DEFAULT_H_GRID",
    "DiniEstimate",
    "IntegralCheck",
    "LyapunovFunction",
    "PreconditionError",
    "check_dissipation",
    "dini_derivative",
    "nclf_ulim_bound",
    "norm_sq",
    "parse_lyapunov",
    "verify_integral_inequality",
    "verify_ulim_from_nclf",
    "weighted_norm_sq",
]

DEFAULT_H_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

_POW_RE = re.compile(r"^pow\(([^,]+),([^)]+)\)$")


@dataclass(frozen=True)
class LyapunovFunction:
    fn: Callable[[StateVector], float]
    label: str

    def __call__(self, x: StateVector) -> float:
        return float(self.fn(x))


def norm_sq() -> LyapunovFunction:
    """``V(x) = |x|**2`` in the state's own norm."""
    return LyapunovFunction(lambda x: x.norm() ** 2, "norm_sq")


def weighted_norm_sq(weights: Sequence[float]) -> LyapunovFunction:
    """``V(x) = sum_k w_k |x_k|**2``; the last weight repeats for later modes."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w <= 0):
        raise ValueError("weights must be positive")

    def fn(x: StateVector) -> float:
        n = x.n_modes
        ww = w[:n] if w.size >= n else np.concatenate([w, np.full(n - w.size, w[-1])])
        return float(np.sum(ww * np.sum(x.modes**2, axis=1)))

    return LyapunovFunction(fn, "weighted_norm_sq(" + ",".join(repr(float(v)) for v in w) + ")")


_WEIGHTED_RE = re.compile(r"^\s*weighted_norm_sq\s*\((.*)\)\s*$")


def parse_lyapunov(text: str) -> LyapunovFunction:
    text = text.strip()
    if text == "norm_sq":
        return norm_sq()
    m = _WEIGHTED_RE.match(text)
    if m:
        try:
            return weighted_norm_sq([float(v) for v in m.group(1).split(",") if v.strip()])
        except ValueError as exc:
            raise ValueError(f"cannot parse Lyapunov function {text!r}: {exc}") from exc
    raise ValueError(f"unknown Lyapunov function {text!r}; known: norm_sq, weighted_norm_sq(w1,...)")


@dataclass(frozen=True)
class CandidateLF:
    """``V`` with upper frame ``psi2``, decay rate ``alpha`` and input gain ``sigma``.

    ``psi1`` is the optional lower frame; without it the candidate is
    non-coercive.
    """

    V: LyapunovFunction
    psi2: ScalarGainFunction
    alpha: ScalarGainFunction
    sigma: ScalarGainFunction
    psi1: ScalarGainFunction | None = None

    @property
    def coercive(self) -> bool:
        return self.psi1 is not None

    def check_frames(self, states: Sequence[StateVector]) -> ClassVerdict:
        """``0 < V(x) <= psi2(|x|)`` and, if present, ``psi1(|x|) <= V(x)`` on nonzero states."""
        for x in states:
            nx = x.norm()
            if nx == 0:
                continue
            v = self.V(x)
            if not 0 < v <= self.psi2(nx) * (1 + 1e-12):
                return ClassVerdict(False, "frame", "V outside (0, psi2(|x|)]", (format_state(x), v))
            if self.psi1 is not None and self.psi1(nx) > v * (1 + 1e-12):
                return ClassVerdict(False, "frame", "V below psi1(|x|)", (format_state(x), v))
        return ClassVerdict(True, "frame")


@dataclass(frozen=True)
class DiniEstimate:
    value: float
    error: float
    differences: tuple[float, ...]
    extrapolated: tuple[float, ...]


def dini_derivative(
    V: LyapunovFunction,
    sys: TruncatedModeSystem,
    x: StateVector,
    u: InputSignal,
    h_grid: Sequence[float] = DEFAULT_H_GRID,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> DiniEstimate:
    """Upper right derivative of ``V`` along the flow at ``x``.

    Forward differences ``D_i`` on the decreasing ``h_grid`` are combined
    pairwise by Richardson extrapolation; the estimate is the largest
    extrapolated value. The error bar covers the spread of the two
    smallest-step differences and the gap between the estimate and the
    finest extrapolation.
    """
    hs = [float(h) for h in h_grid]
    if len(hs) < 2 or any(h <= 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_grid must be strictly decreasing, positive, with at least two steps")
    v0 = V(x)
    D = [(V(flow(sys, h, x, u, cfg)) - v0) / h for h in hs]
    R = [(hs[i] * D[i + 1] - hs[i + 1] * D[i]) / (hs[i] - hs[i + 1]) for i in range(len(hs) - 1)]
    value = max(R)
    error = max(abs(D[-1] - D[-2]), value - R[-1])
    return DiniEstimate(value, error, tuple(D), tuple(R))


class PreconditionError(RuntimeError):
    """The candidate failed its dissipation check; carries that report."""

    def __init__(self, msg, report: EstimationReport):
        super().__init__(msg)
        self.report = report


def _dissipation_states(sys, budget, R, rng):
    lv = _levels(sys, budget)[-1]
    out = []
    for frac in (0.25, 0.5, 1.0):
        for k in _family_modes(budget, lv.n_modes):
            for d in _directions(sys, budget):
                out.append(_mode_state(lv, k, frac * R * d))
    out += _random_states(lv, R, budget.n_random_states, rng, on_sphere=False)
    return lv, out


def check_dissipation(
    cand: CandidateLF,
    sys: TruncatedModeSystem,
    R: float,
    input_cap: float,
    budget: EstimationBudget = EstimationBudget(),
    h_grid: Sequence[float] = DEFAULT_H_GRID,
) -> EstimationReport:
    """Sample ``|x| <= R`` and constant ``|u| <= input_cap``; require ``D+V <= -alpha(|x|) + sigma(|u|)``.

    A sample violates only when the estimate exceeds the bound by more than
    its error bar plus a ``1e-6`` relative slack.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed)
    lv, states = _dissipation_states(sys, budget, R, rng)
    mags = sorted({v for v in budget.input_values if v <= input_cap} | {0.0})
    inputs = [u for u in _inputs(sys, replace(budget, n_random_inputs=0), mags, rng)]
    notes = []
    frames = cand.check_frames(states)
    if not frames:
        notes.append(f"frame check failed: {frames.reason} at {frames.witness}")
    rows = []
    witness = None
    worst = -math.inf
    for u in inputs:
        su = cand.sigma(u.sup_norm())
        for x in states:
            d = dini_derivative(cand.V, lv, x, u, h_grid, cfg)
            bound = -cand.alpha(x.norm()) + su
            slack = 1e-6 * max(1.0, abs(bound), cand.V(x))
            margin = d.value - bound
            rows.append((format_state(x), u.text(), d.value, d.error, bound))
            worst = max(worst, margin)
            if witness is None and margin > d.error + slack:
                witness = _make_witness(
                    lv, x, u, 0.0, bound + d.error + slack, _cfg_for_witness(cfg),
                    kind="dini", gamma=cand.V.label,
                )
                notes.append(f"dissipation fails at {format_state(x)} under {u.text()}: D+V = {d.value!r} > {bound!r}")
    tables = {"dissipation": (("state", "input", "dini", "error", "bound"), rows)}
    verdict = FALSIFIED if witness or not frames else NO_VIOLATION
    return EstimationReport("Dissipation", verdict, witness, worst, tables, budget, notes, sys.catalog_id)


def nclf_ulim_bound(cand: CandidateLF, tol: float = 1e-9):
    """The gain ``alpha^-1(2 sigma(r))`` and time ``2 (psi2(r) + 1) / alpha(eps)`` of the ULIM construction.

    Returns ``(gamma, tau)`` with ``tau(r, eps)``.
    """
    if cand.alpha.kind != KINF:
        raise ValueError("alpha must be of class Kinf")
    alpha, sigma, psi2 = cand.alpha, cand.sigma, cand.psi2
    if sigma.is_zero:
        gamma = zero()
    elif _POW_RE.match(alpha.label) and _POW_RE.match(sigma.label):
        # both powers: the inverse is a power too, and its label replays
        a, p = (float(v) for v in _POW_RE.match(alpha.label).groups())
        b, q = (float(v) for v in _POW_RE.match(sigma.label).groups())
        gamma = power((2.0 * b / a) ** (1.0 / p), q / p)
    else:
        gamma = ScalarGainFunction("K", lambda r: inverse(alpha, 2.0 * sigma(r), tol), label="nclf_gain")

    def tau(r: float, eps: float) -> float:
        if eps <= 0 or r < 0:
            raise ValueError("need r >= 0 and eps > 0")
        return 2.0 * (psi2(r) + 1.0) / alpha(eps)

    return gamma, tau


@dataclass(frozen=True)
class IntegralCheck:
    holds: bool
    integral: float
    bound: float
    quad_error: float

    @property
    def margin(self) -> float:
        return self.bound - self.integral

    def __bool__(self):
        return self.holds


def verify_integral_inequality(
    cand: CandidateLF,
    sys: TruncatedModeSystem,
    x: StateVector,
    u: InputSignal,
    t: float,
    quad_tol: float = 1e-6,
    cfg: IntegratorConfig = IntegratorConfig(),
    max_refine: int = 12,
) -> IntegralCheck:
    """``int_0^t alpha(|phi(s,x,u)|) ds <= psi2(|x|) + t sigma(|u|)``.

    Romberg extrapolation of trapezoid sums on a grid that contains every
    input switch, so the integrand is smooth between nodes. Each piece gets
    ``n`` nodes and ``n`` doubles until the diagonal of the Romberg table
    settles within ``quad_tol``.
    """
    bound = cand.psi2(x.norm()) + t * cand.sigma(u.sup_norm())
    if t == 0:
        return IntegralCheck(0.0 <= bound + quad_tol, 0.0, bound, 0.0)
    cuts = sorted({0.0, float(t), *(b for b in u.breakpoints(0.0, t) if 0.0 < b < t)})
    n = 8
    err = math.inf
    row: list[float] = []
    for _ in range(max_refine):
        grid = np.unique(np.concatenate([np.linspace(a, b, n + 1) for a, b in zip(cuts, cuts[1:])]))
        tr = trajectory(sys, t, x, u, cfg, t_eval=grid)
        # the solver's own step nodes would spoil the halving pattern
        keep = np.isin(tr.times, grid)
        vals = np.array([cand.alpha(v) for v in tr.norms()[keep]])
        new = [float(np.trapezoid(vals, tr.times[keep]))]
        for m, r in enumerate(row, start=1):
            new.append(new[-1] + (new[-1] - r) / (4**m - 1))
        if row:
            err = abs(new[-1] - row[-1])
        row = new
        if err <= quad_tol:
            break
        n *= 2
    integral = row[-1]
    return IntegralCheck(integral <= bound + quad_tol, integral, bound, err)


def verify_ulim_from_nclf(
    cand: CandidateLF,
    sys: TruncatedModeSystem,
    budget: EstimationBudget = EstimationBudget(),
    h_grid: Sequence[float] = DEFAULT_H_GRID,
) -> EstimationReport:
    """Check that sampled trajectories enter ``eps + gamma(|u|)`` by ``tau(r, eps)``.

    The dissipation check on the largest budget radius runs first; if it
    fails, :class:`PreconditionError` is raised with that report.
    """
    R = max(budget.radii)
    cap = max(budget.input_values)
    diss = check_dissipation(cand, sys, R, cap, budget, h_grid)
    if diss.falsified:
        raise PreconditionError("candidate fails the dissipation check; the ULIM bound does not apply", diss)
    gamma, tau = nclf_ulim_bound(cand)
    cfg = budget.integrator
    rng = np.random.default_rng(budget.seed + 1)
    lv = _levels(sys, budget)[-1]
    inputs = _inputs(sys, budget, [v for v in budget.input_values], rng)
    rows = []
    witness = None
    notes = [f"dissipation verified on |x| <= {R!r}, |u| <= {cap!r}"]
    worst = 0.0
    for r in sorted(budget.radii):
        states = [_mode_state(lv, k, r * d) for k in _family_modes(budget, lv.n_modes) for d in _directions(sys, budget)]
        states += _random_states(lv, r, budget.n_random_states, rng, on_sphere=False)
        for eps in sorted(budget.eps_grid):
            limit = tau(r, eps)
            for u in inputs:
                for x in states:
                    t = attainment_time(lv, x, u, eps, gamma, limit, cfg)
                    rows.append((r, eps, format_state(x), u.text(), math.inf if t is None else t, limit))
                    if t is None:
                        if witness is None:
                            witness = _make_witness(lv, x, u, limit, limit, _cfg_for_witness(cfg),
                                                    kind="attainment", eps=eps, gamma=gamma.label, horizon=limit)
                            notes.append("attainment bound missed: dissipation fails outside the sampled region or the integration is off")
                    else:
                        worst = max(worst, t)
    tables = {"attainment": (("r", "eps", "state", "input", "time", "tau"), rows)}
    return EstimationReport("ULIM", FALSIFIED if witness else NO_VIOLATION, witness, worst, tables, budget, notes, sys.catalog_id)


