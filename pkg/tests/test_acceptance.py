"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
Each criterion is a function returning ``(passed, detail)``; the pytest
wrappers print the line and then assert, so a red criterion fails loudly.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import PEAK_RADIUS, PEAK_STATE  # noqa: E402
from figure_arrows import CONTEXT_ARROWS, FINITE_DIM, GENERAL_BLACK, NO_INPUT, OPEN, RED, STANDING  # noqa: E402
from isslab.comparison_functions import (  # noqa: E402
    inverse,
    kl_envelope_fit,
    log_gain,
    power,
    saturation,
    split_lower_bound_check,
    verify_kl,
    zero,
)
from isslab.estimators import EstimationBudget, check_brs, check_limit, check_stability  # noqa: E402
from isslab.integrator import IntegratorConfig, check_axioms, trajectory  # noqa: E402
from isslab.lattice import BLOCKED_NO, DERIVED_YES, UNKNOWN, consistency_check, query, seed_kb  # noqa: E402
from isslab.lyapunov import (  # noqa: E402
    CandidateLF,
    dini_derivative,
    nclf_ulim_bound,
    norm_sq,
    verify_integral_inequality,
    verify_ulim_from_nclf,
)
from isslab.signals import InputSignal, random_signal  # noqa: E402
from isslab.systems import CATALOG_IDS, StateVector, catalog  # noqa: E402

ZERO = InputSignal.constant(0.0)
PEAK_DIRECTION = (PEAK_STATE[0] / PEAK_RADIUS, PEAK_STATE[1] / PEAK_RADIUS)
SQ = power(1.0, 2.0)


def _fmt(xs, digits=4):
    return "[" + ", ".join(f"{x:.{digits}g}" for x in xs) + "]"


def criterion_1():
    """Every S1 mode k started at (c, e) crosses x_k = k strictly inside (0, 1)."""
    start = time.perf_counter()
    n = 20
    sys_ = catalog("S1", n)
    x0 = StateVector(np.tile(PEAK_STATE, (n, 1)))
    tr = trajectory(sys_, 1.0, x0, ZERO, IntegratorConfig(event_threshold="mode_index"))
    elapsed = time.perf_counter() - start
    hit = {}
    for e in tr.events:
        if e.threshold == e.mode and 0.0 < e.time < 1.0:
            hit.setdefault(e.mode, e.time)
    missing = [k for k in range(1, n + 1) if k not in hit]
    ok = not missing and elapsed < 10.0
    detail = f"{n - len(missing)}/{n} modes cross x_k = k in (0,1), missing k = {missing}, {elapsed:.2f} s"
    return ok, detail


def criterion_2():
    """S1 is not BRS: the reachable-set sup at tau = 1 grows at least like N."""
    truncations = (8, 16, 32, 64)
    budget = EstimationBudget(directions=(PEAK_DIRECTION,), n_random_states=2, n_random_inputs=1, truncations=truncations)
    rep = check_brs(catalog("S1"), PEAK_RADIUS, 1.0, budget)
    sups = [row["sup_norm"] for row in rep.table("sup_by_truncation")]
    big = len(sups) == len(truncations) and all(s >= n * (1 - 1e-6) for s, n in zip(sups, truncations))
    replays = rep.witness is not None and rep.witness.replay()[1]
    ok = rep.falsified and big and replays
    return ok, f"verdict {rep.verdict}, sup by N {truncations} = {_fmt(sups)}, witness replays: {replays}"


def criterion_3():
    """Example1: attainment times double with the mode, yet UGS holds with zero gain."""
    ulim = EstimationBudget(
        radii=(1.0,),
        eps_grid=(0.1,),
        horizon=2e4,
        input_values=(2.0,),
        n_random_inputs=0,
        n_random_states=0,
        modes=tuple(range(1, 13)),
        truncations=(12,),
    )
    rep = check_limit(catalog("Example1"), "ULIM", zero(), ulim)
    times = {row["mode"]: row["tau"] for row in rep.table("tau_by_mode")}
    exact = {k: (1 + 2**k) * math.log(10) for k in range(1, 13)}
    worst = max(abs(times.get(k, math.inf) / exact[k] - 1) for k in exact)
    ratios = [times[k + 1] / times[k] for k in range(6, 12) if k in times and k + 1 in times]
    ratios_ok = len(ratios) == 6 and all(1.9 <= q <= 2.1 for q in ratios)
    ugs_budget = EstimationBudget(
        radii=(0.5, 1.0, 2.0), input_values=(0.0, 0.5, 1.0, 4.0), horizon=20.0, truncations=(4, 8), n_random_inputs=1, n_random_states=2
    )
    ugs = check_stability(catalog("Example1"), "UGS", ugs_budget)
    gamma_max = max(row["gamma"] for row in ugs.table("gamma_hat"))
    ok = rep.falsified and worst <= 0.01 and ratios_ok and not ugs.falsified and gamma_max <= 1e-6
    detail = (
        f"ULIM {rep.verdict}, worst time error {worst:.2e}, ratios k>=6 {_fmt(ratios)}, "
        f"UGS {ugs.verdict} with max gamma_hat {gamma_max:.1e}"
    )
    return ok, detail


def criterion_4():
    """S1tilde keeps bounded reachable sets while S3 is not zero-input UGS."""
    start = time.perf_counter()
    brs_budget = EstimationBudget(directions=(PEAK_DIRECTION,), n_random_states=2, n_random_inputs=1, truncations=(8, 16, 32, 64))
    brs = check_brs(catalog("S1tilde"), PEAK_RADIUS, 1.0, brs_budget)
    sups = {row["n_modes"]: row["sup_norm"] for row in brs.table("sup_by_truncation")}
    stable = 32 in sups and 64 in sups and abs(sups[64] - sups[32]) <= 0.05 * sups[32]
    ugs_budget = EstimationBudget(
        radii=(PEAK_RADIUS,), horizon=64.0, directions=(PEAK_DIRECTION,), n_random_states=0, truncations=(8, 16, 32, 64)
    )
    s3 = check_stability(catalog("S3"), "ZeroUGS", ugs_budget)
    peak_ok = False
    k = None
    if s3.witness is not None:
        k = int(s3.witness.state.strip("{").split(":")[0])
        peak_ok = s3.witness.measured >= k and s3.witness.replay()[1]
    elapsed = time.perf_counter() - start
    ok = not brs.falsified and stable and s3.falsified and peak_ok and elapsed < 60.0
    detail = (
        f"S1tilde BRS {brs.verdict}, sup N=32 {sups.get(32, math.nan):.5g} vs N=64 {sups.get(64, math.nan):.5g}; "
        f"S3 ZeroUGS {s3.verdict}, witness mode {k} peak {s3.value:.5g}; {elapsed:.1f} s"
    )
    return ok, detail


def criterion_5():
    """Near zero, |z|^2 decays along S1 at rate at least 3/2."""
    n = 8
    sys_ = catalog("S1", n)
    rng = np.random.default_rng(2024)
    V = norm_sq()
    worst = -math.inf
    for _ in range(200):
        z = rng.normal(size=(n, 2))
        z *= 0.5 * rng.uniform() ** 0.5 / np.linalg.norm(z)
        x = StateVector(z)
        v = V(x)
        bound = -1.5 * v
        d = dini_derivative(V, sys_, x, ZERO).value
        # excess over the slackened bound, relative to the bound's size
        if v > 0:
            worst = max(worst, (d - bound) / (1.5 * v))
    ok = worst <= 0.05
    return ok, f"200 states in the ball of radius 1/2, largest relative excess over -1.5 V: {worst:.3g} (allowed 0.05)"


def criterion_6():
    """Non-coercive Lyapunov bound for the scalar ISS system with square frames."""
    cand = CandidateLF(norm_sq(), psi2=SQ, alpha=SQ, sigma=SQ)
    _, tau = nclf_ulim_bound(cand)
    tau_ok = tau(2.0, 0.5) == 40.0
    sys_ = catalog("ScalarISS")
    rng = np.random.default_rng(6)
    failures = 0
    for i in range(100):
        x = sys_.state([rng.uniform(-3.0, 3.0)])
        u = random_signal(rng, float(rng.uniform(0.0, 2.0)), 3, 20.0)
        if not verify_integral_inequality(cand, sys_, x, u, float(rng.uniform(0.0, 20.0))).holds:
            failures += 1
    budget = EstimationBudget(
        radii=(0.5, 1.0, 2.0),
        eps_grid=(0.1, 0.5),
        input_values=(0.0, 0.5, 1.0),
        horizon=50.0,
        truncations=(1,),
        n_random_states=3,
        n_random_inputs=1,
    )
    rep = verify_ulim_from_nclf(cand, sys_, budget)
    rows = rep.table("attainment")
    within_tau = all(r["time"] <= r["tau"] for r in rows)
    exact_ok = all(
        r["time"] <= math.log(max(r["r"], r["eps"]) / r["eps"]) + 1e-3 for r in rows if r["input"] == "const(0.0)"
    )
    ok = tau_ok and failures == 0 and not rep.falsified and within_tau and exact_ok
    detail = (
        f"tau(2, 0.5) = {tau(2.0, 0.5)!r}, integral inequality failures {failures}/100, "
        f"{len(rows)} attainment rows within tau: {within_tau}, zero-input rows within ln(r/eps): {exact_ok}"
    )
    return ok, detail


def criterion_7():
    """Seeded lattice reproduces all three relation diagrams."""
    kb = seed_kb()
    start = time.perf_counter()
    bad = []
    arrows = FINITE_DIM + GENERAL_BLACK + CONTEXT_ARROWS + NO_INPUT
    for premises, conclusions, ctx in arrows:
        for atom in conclusions:
            res = query(kb, premises, atom, ctx)
            if res.status != DERIVED_YES or not _replays(premises, res.trace, ctx, atom):
                bad.append(f"{sorted(premises)}=>{atom}")
    for label, (premises, missing) in RED.items():
        for facts in (premises, premises | STANDING):
            if query(kb, facts, missing).status != BLOCKED_NO:
                bad.append(f"red {label}")
    for ni in kb.non_implications:
        if query(kb, ni.premises, ni.non_conclusion).status != BLOCKED_NO:
            bad.append(f"seeded {ni.witness}")
        if consistency_check(kb, ni.premises, {ni.non_conclusion}, ni.context):
            bad.append(f"conflict {ni.witness}")
    for premises, target in OPEN:
        if query(kb, premises, target).status != UNKNOWN:
            bad.append(f"open {target}")
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 1.0
    detail = (
        f"{len(arrows)} implication arrows, {len(RED)} refuted arrows, {len(kb.non_implications)} seeded "
        f"non-implications, {len(OPEN)} open arrows; problems {bad or 'none'}; {elapsed * 1000:.0f} ms"
    )
    return ok, detail


def _replays(facts, trace, ctx, atom):
    flags = set(ctx) | {"General"}
    known = set(facts)
    for rule in trace:
        if not (rule.applies(flags) and rule.premises <= known):
            return False
        known |= rule.conclusions
    return atom in known


def criterion_8():
    """Identity, causality and cocycle defects stay within 10 rel_tol on every catalog system."""
    cfg = IntegratorConfig(rel_tol=1e-9)
    worst = {}
    for i, cid in enumerate(CATALOG_IDS):
        rep = check_axioms(catalog(cid, 8), 100, cfg, seed=100 + i)
        worst[cid] = rep.max_defect()
    limit = 10 * cfg.rel_tol
    ok = all(v <= limit for v in worst.values())
    top = max(worst, key=worst.get)
    return ok, f"largest defect {worst[top]:.2e} ({top}) over 100 samples x {len(worst)} systems, limit {limit:.0e}"


def criterion_9():
    """Comparison-function suite: split inequality, inverse round trip, KL envelopes."""
    rng = np.random.default_rng(9)
    families = (
        lambda: power(rng.uniform(0.01, 10.0), rng.uniform(0.05, 4.0)),
        lambda: saturation(rng.uniform(0.01, 10.0)),
        lambda: log_gain(rng.uniform(0.01, 10.0)),
    )
    split_fail = 0
    for _ in range(1000):
        alpha = families[rng.integers(3)]()
        a, b = rng.uniform(0.0, 100.0, size=2)
        if not split_lower_bound_check(alpha, float(a), float(b)):
            split_fail += 1
    tol = 1e-9
    inv_fail = 0
    for _ in range(1000):
        f = power(rng.uniform(0.05, 20.0), rng.uniform(0.2, 4.0)) if rng.uniform() < 0.5 else log_gain(rng.uniform(0.05, 20.0))
        y = f(float(rng.uniform(0.0, 50.0)))
        if abs(f(inverse(f, y, tol)) - y) > 2 * tol * max(1.0, y):
            inv_fail += 1
    kl_fail = 0
    for seed in range(5):
        r_rng = np.random.default_rng(seed)
        samples = [
            (r, t, r * math.exp(-t) * r_rng.uniform(0.2, 1.5)) for r in r_rng.uniform(0, 10, 40) for t in r_rng.uniform(0, 8, 5)
        ]
        fit = kl_envelope_fit(samples)
        grid_ok = verify_kl(fit, list(np.linspace(0.05, 12.0, 20)), list(np.linspace(0.0, 15.0, 20))).passed
        if not grid_ok or any(fit(r, t) < v for r, t, v in samples):
            kl_fail += 1
    ok = split_fail == 0 and inv_fail == 0 and kl_fail == 0
    return ok, f"split failures {split_fail}/1000, inverse failures {inv_fail}/1000, KL grid failures {kl_fail}/5"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


def _line(n, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"


@pytest.mark.parametrize("n", range(1, 10))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n - 1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for n, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failed += not ok
        print(_line(n, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
