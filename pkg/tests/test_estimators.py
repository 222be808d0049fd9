import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import PEAK_RADIUS, assert_replays
from isslab.comparison_functions import identity, power, zero
from isslab.estimators import (
    FALSIFIED,
    NO_VIOLATION,
    EstimationBudget,
    Witness,
    adversarial_search,
    attainment_time,
    check_ag,
    check_brs,
    check_cep,
    check_limit,
    check_stability,
    check_zero_ugatt,
    divergence_run,
    estimate_flow_lipschitz,
    fit_iss_bound,
    tail_time,
)
from isslab.signals import InputSignal
from isslab.systems import basis_state, catalog, user_system

ZERO = InputSignal.constant(0.0)

# Example1 under u = 2: mode k decays at rate 1/(1 + 2^k)
EX1_ULIM = EstimationBudget(
    radii=(1.0,),
    eps_grid=(0.1,),
    horizon=2e4,
    input_values=(2.0,),
    n_random_inputs=0,
    n_random_states=0,
    modes=tuple(range(1, 13)),
    truncations=(12,),
)
SMALL = EstimationBudget(
    radii=(0.5, 1.0, 2.0),
    input_values=(0.0, 0.5, 1.0),
    horizon=20.0,
    truncations=(4, 8),
    n_random_inputs=1,
    n_random_states=2,
)


# budget and helpers ----------------------------------------------------------


def test_budget_validation():
    with pytest.raises(ValueError):
        EstimationBudget(radii=())
    with pytest.raises(ValueError):
        EstimationBudget(eps_grid=(0.0,))
    with pytest.raises(ValueError):
        EstimationBudget(horizon=1e9)
    with pytest.raises(ValueError):
        EstimationBudget(modes=(0,))
    with pytest.raises(ValueError):
        EstimationBudget(directions=((0.0, 0.0),))
    b = EstimationBudget(truncations=(16, 8, 8), modes=(3, 1, 3))
    assert b.truncations == (8, 16) and b.modes == (1, 3)
    assert ("horizon", "100.0") in b.echo()


def test_divergence_run():
    assert divergence_run([1, 2, 4, 8]) == 0
    assert divergence_run([1, 2, 4]) is None
    assert divergence_run([5, 1, 2, 4, 8]) == 1
    assert divergence_run([1, 2, 2.5, 4, 8]) is None
    assert divergence_run([1, 2, None, math.inf]) == 0
    assert divergence_run([0, 0, 0, 0]) is None


def test_witness_text_round_trip():
    w = Witness("user:growth", 1, "{1: [1.0]}", "const(0.0)", 1.0, math.e, 2.0, system_params=(("rate", 1.0),))
    again = Witness.from_text(w.text())
    assert again == w
    value, ok = again.replay()
    assert ok and value == pytest.approx(math.e, rel=1e-8)
    assert not replace(w, bound=3.0).replay()[1]


# attainment and tail times ----------------------------------------------------


def test_attainment_examples():
    sys = catalog("Example1", 6)
    assert attainment_time(sys, sys.zero_state(), InputSignal.constant(3.0), 0.1, identity(), 10.0) == 0.0
    t = attainment_time(sys, basis_state(sys, 5), InputSignal.constant(2.0), 0.1, zero(), 200.0)
    assert t == pytest.approx(33 * math.log(10), rel=1e-6)
    assert t == pytest.approx(75.99, abs=0.01)
    iss = catalog("ScalarISS")
    t = attainment_time(iss, iss.state([2.0]), ZERO, 1.0, zero(), 10.0)
    assert t == pytest.approx(math.log(2), abs=1e-8)
    assert attainment_time(iss, iss.state([2.0]), ZERO, 1e-3, zero(), 1.0) is None


def test_tail_time_handles_excursions():
    iss = catalog("ScalarISS")
    # leaves the 0.5-ball while u = 1, re-enters for good after the input stops
    u = InputSignal.steps([(0, 0), (1, 1), (3, 0)])
    x0 = iss.state([0.2])
    t_first = attainment_time(iss, x0, u, 0.5, zero(), 10.0)
    t_tail = tail_time(iss, x0, u, 0.5, zero(), 10.0)
    assert t_first == 0.0
    peak = 0.2 * math.exp(-3) + (1 - math.exp(-2))
    assert t_tail == pytest.approx(3 + math.log(peak / 0.5), abs=1e-7)


# BRS ------------------------------------------------------------------------------


def test_brs_example1():
    rep = check_brs(catalog("Example1"), 1.0, 5.0, SMALL)
    assert rep.verdict == NO_VIOLATION
    assert rep.value == pytest.approx(1.0, abs=1e-9)


def test_brs_s1_falsified(peak_direction):
    budget = EstimationBudget(directions=(peak_direction,), n_random_states=2, n_random_inputs=1, truncations=(4, 8, 16, 32))
    rep = check_brs(catalog("S1"), PEAK_RADIUS, 1.0, budget)
    assert rep.falsified
    sups = [row["sup_norm"] for row in rep.table("sup_by_truncation")]
    assert all(s >= n * (1 - 1e-6) for s, n in zip(sups, (4, 8, 16, 32)))
    assert_replays(rep)


def test_brs_s1tilde_bounded(peak_direction):
    budget = EstimationBudget(directions=(peak_direction,), n_random_states=2, n_random_inputs=1, truncations=(4, 8, 16))
    rep = check_brs(catalog("S1tilde"), PEAK_RADIUS, 1.0, budget)
    assert rep.verdict == NO_VIOLATION
    # the large-k modes obey a tail bound, so the sup settles once low modes are in
    sups = [row["sup_norm"] for row in rep.table("sup_by_truncation")]
    assert abs(sups[-1] - sups[-2]) <= 0.05 * sups[-2]


def test_brs_rejects_bad_arguments():
    with pytest.raises(ValueError):
        check_brs(catalog("Example1"), 0.0, 1.0)


# stability -----------------------------------------------------------------------


def test_ugs_example1_zero_gain():
    rep = check_stability(catalog("Example1"), "UGS", SMALL)
    assert rep.verdict == NO_VIOLATION
    for row in rep.table("sigma_hat"):
        assert row["sigma"] == pytest.approx(row["r"], rel=1e-9)
    assert all(row["gamma"] <= 1e-6 for row in rep.table("gamma_hat"))


def test_ugs_zero_system_identity_sigma():
    rep = check_stability(user_system("zero", 4), "UGS", SMALL)
    assert rep.verdict == NO_VIOLATION
    assert all(row["sigma"] == row["r"] for row in rep.table("sigma_hat"))


def test_s3_not_zero_ugs(peak_direction):
    budget = EstimationBudget(radii=(PEAK_RADIUS,), horizon=40.0, directions=(peak_direction,), n_random_states=0, truncations=(4, 8, 16, 32))
    rep = check_stability(catalog("S3"), "ZeroUGS", budget)
    assert rep.falsified
    k = int(rep.witness.state.strip("{").split(":")[0])
    assert rep.witness.measured >= k
    assert_replays(rep)


def test_growth_not_ugs():
    budget = EstimationBudget(radii=(1.0,), input_values=(0.0,), horizon=10.0, truncations=(1,), n_random_states=0)
    rep = check_stability(user_system("growth"), "ZeroUGS", budget)
    assert rep.falsified
    assert_replays(rep)


def test_uls_caps_radii():
    budget = replace(SMALL, local_radius=0.5)
    rep = check_stability(catalog("ScalarISS"), "ULS", budget)
    assert [row["r"] for row in rep.table("sigma_hat")] == [0.5]
    assert max(row["input_magnitude"] for row in rep.table("gamma_hat")) <= 0.5


def test_ugb_offset_table():
    rep = check_stability(catalog("ScalarISS"), "UGB", SMALL)
    assert rep.verdict == NO_VIOLATION
    assert rep.table("offset")[0]["c"] >= 0.0


def test_stability_envelopes_monotone():
    rep = check_stability(catalog("ScalarISS"), "UGS", SMALL)
    sig = [row["sigma"] for row in rep.table("sigma_hat")]
    gam = [row["gamma"] for row in rep.table("gamma_hat")]
    assert sig == sorted(sig) and gam == sorted(gam)
    assert gam[-1] <= 1.0 + 1e-9


# limit and asymptotic gain ----------------------------------------------------


def test_ulim_example1_falsified():
    rep = check_limit(catalog("Example1"), "ULIM", zero(), EX1_ULIM)
    assert rep.falsified
    times = {row["mode"]: row["tau"] for row in rep.table("tau_by_mode")}
    for k in range(1, 13):
        assert times[k] == pytest.approx((1 + 2**k) * math.log(10), rel=1e-2)
    for k in range(6, 12):
        assert 1.9 <= times[k + 1] / times[k] <= 2.1
    assert rep.witness.kind == "attainment"
    assert_replays(rep)


def test_uag_example1_falsified_and_first_hit_consistent():
    budget = replace(EX1_ULIM, modes=tuple(range(1, 9)), truncations=(8,), horizon=2000.0)
    ag = check_ag(catalog("Example1"), "UAG", zero(), budget)
    assert ag.falsified
    assert_replays(ag)
    # for monotone decay the first-hit time of the same witness equals its tail time
    w = ag.witness
    first = replace(w, kind="attainment").evaluate()
    assert first == pytest.approx(w.measured, rel=1e-6)


def test_ulim_scalar_iss_with_gain():
    gamma = power(math.sqrt(2), 1.0)
    budget = EstimationBudget(radii=(0.5, 1.0, 2.0), eps_grid=(0.2, 0.5), input_values=(0.0, 0.5, 1.0), horizon=50.0, truncations=(1,))
    rep = check_limit(catalog("ScalarISS"), "ULIM", gamma, budget)
    assert rep.verdict == NO_VIOLATION
    for row in rep.table("tau_hat"):
        assert row["tau"] <= 2 * (row["r"] ** 2 + 1) / row["eps"] ** 2


def test_tau_hat_monotone():
    budget = EstimationBudget(radii=(0.5, 1.0, 2.0), eps_grid=(0.1, 0.3), input_values=(0.0,), n_random_inputs=0, horizon=50.0, truncations=(4,))
    rep = check_limit(catalog("LinDiagStrong"), "ULIM", zero(), budget)
    tau = {(row["eps"], row["r"]): row["tau"] for row in rep.table("tau_hat")}
    for (e, r), t in tau.items():
        for (e2, r2), t2 in tau.items():
            if e2 >= e and r2 <= r:
                assert t2 <= t


def test_slim_example1_fixed_state_reports_cap():
    budget = EstimationBudget(radii=(1.0,), eps_grid=(0.1,), input_values=(0.0, 1.0, 2.0), n_random_inputs=0, n_random_states=0, modes=(5,), horizon=200.0, truncations=(5,), directions=((1.0,),))
    rep = check_limit(catalog("Example1"), "sLIM", zero(), budget)
    assert rep.verdict == NO_VIOLATION
    assert rep.value == pytest.approx(33 * math.log(10), rel=1e-6)
    assert any("capped" in n for n in rep.notes)


def test_ag_example1():
    budget = replace(SMALL, horizon=200.0, input_values=(0.0, 0.5, 1.0))
    rep = check_ag(catalog("Example1"), "AG", zero(), budget)
    assert rep.verdict == NO_VIOLATION


def test_lim_falsified_for_zero_system():
    budget = EstimationBudget(radii=(1.0,), input_values=(0.0,), n_random_inputs=0, horizon=10.0, truncations=(2,), n_random_states=0)
    rep = check_limit(user_system("zero", 2), "LIM", zero(), budget)
    assert rep.falsified
    assert_replays(rep)


def test_lindiag_not_zero_ugatt():
    budget = EstimationBudget(radii=(1.0,), eps_grid=(0.5,), horizon=50.0, n_random_states=0, truncations=(32,), modes=(1, 2, 4, 8, 16, 32))
    rep = check_zero_ugatt(catalog("LinDiagStrong"), budget)
    assert rep.property_id == "0-UGATT" and rep.falsified
    times = {row["mode"]: row["tau"] for row in rep.table("tau_by_mode")}
    assert times[4] == pytest.approx(4 * math.log(2), rel=1e-6)
    assert_replays(rep)


def test_zero_input_ag_matches_zero_ugatt():
    budget = EstimationBudget(radii=(1.0,), eps_grid=(0.5,), horizon=50.0, n_random_states=0, truncations=(8,), input_values=(0.0,), n_random_inputs=0)
    a = check_zero_ugatt(catalog("LinDiagStrong"), budget)
    b = check_ag(catalog("LinDiagStrong"), "UAG", zero(), budget)
    assert a.tables == b.tables and a.verdict == b.verdict


def test_uniformity_names_checked():
    with pytest.raises(ValueError):
        check_limit(catalog("ScalarISS"), "XLIM")
    with pytest.raises(ValueError):
        check_ag(catalog("ScalarISS"), "UGAS")
    with pytest.raises(ValueError):
        check_stability(catalog("ScalarISS"), "GAS")


# ISS fit ---------------------------------------------------------------------------


def test_iss_fit_scalar():
    budget = EstimationBudget(radii=(0.5, 1.0, 2.0), input_values=(0.0, 0.5, 1.0), horizon=10.0, truncations=(1,), n_random_inputs=1, n_random_states=0)
    rep = fit_iss_bound(catalog("ScalarISS"), budget)
    assert rep.verdict == NO_VIOLATION
    for m, g in rep.extras["gamma"]:
        assert g <= m + 1e-9
    beta = rep.extras["beta"]
    for row in rep.table("beta_hat"):
        r, t = row["r"], row["t"]
        assert beta(r, t) <= 2 * (r * math.exp(-t) + r * math.exp(-t)) + 1e-9


def test_iss_fit_example1_falsified():
    budget = EstimationBudget(radii=(1.0,), input_values=(2.0,), n_random_inputs=0, n_random_states=0, horizon=400.0, truncations=(2, 4, 6, 8), modes=None)
    rep = fit_iss_bound(catalog("Example1"), budget)
    assert rep.falsified
    assert rep.witness.kind == "residual"
    assert_replays(rep)


def test_iss_fit_zero_system_negative_control():
    budget = EstimationBudget(radii=(1.0,), input_values=(0.0,), n_random_inputs=0, n_random_states=0, horizon=10.0, truncations=(2,))
    rep = fit_iss_bound(user_system("zero", 2), budget)
    assert rep.falsified
    assert_replays(rep)


# CEP and Lipschitz -----------------------------------------------------------------


def test_cep_examples():
    tiny = EstimationBudget(truncations=(2,), n_random_inputs=1, n_random_states=2)
    assert check_cep(user_system("zero", 2), 0.3, 1.0, tiny).value == 0.3
    assert check_cep(catalog("Example1"), 0.1, 10.0, tiny).value >= 0.1
    rep = check_cep(catalog("S1"), 0.1, 1.0, tiny)
    assert rep.verdict == NO_VIOLATION and rep.value > 0


def test_cep_falsified_for_growth():
    rep = check_cep(user_system("growth", rate=5.0), 0.1, 1.0, EstimationBudget(truncations=(1,)), depth=4)
    assert rep.falsified
    assert_replays(rep)
    # escapes past the state cap never count as staying within eps
    rep = check_cep(user_system("growth", rate=50.0), 0.1, 1.0, EstimationBudget(truncations=(1,)), depth=2)
    assert rep.value is None and any("inconclusive" in n for n in rep.notes)


def test_flow_lipschitz_examples():
    tiny = EstimationBudget(truncations=(3,), n_random_inputs=0, input_values=(0.0,))
    assert estimate_flow_lipschitz(user_system("zero", 3), 1.0, 2.0, tiny).value == 1.0
    assert estimate_flow_lipschitz(catalog("ScalarISS"), 2.0, 3.0, tiny).value == 1.0
    assert estimate_flow_lipschitz(catalog("Example1"), 1.0, 3.0, tiny).value == 1.0
    rep = estimate_flow_lipschitz(user_system("growth", rate=1.0), 1.0, 1.0, tiny, growth=(1.0, 0.0, 1.0))
    assert rep.value == pytest.approx(math.e, rel=1e-6)
    assert any("Gronwall" in n for n in rep.notes)


# adversarial search ----------------------------------------------------------------


def test_search_example1_ulim():
    budget = EstimationBudget(radii=(1.0,), eps_grid=(0.1,), input_values=(0.5, 2.0), horizon=1e4, truncations=(16,))
    w = adversarial_search(catalog("Example1"), "ULIM", budget, rounds=1)
    assert w is not None
    assert float(w.signal[6:-1]) > 1.0
    assert int(w.state.strip("{").split(":")[0]) >= 8
    assert w.replay()[1]


def test_search_scalar_iss_none():
    budget = EstimationBudget(radii=(1.0,), input_values=(0.0, 1.0), horizon=20.0, truncations=(1,))
    assert adversarial_search(catalog("ScalarISS"), "ISS", budget, rounds=1) is None


def test_search_rejects_objective():
    with pytest.raises(ValueError):
        adversarial_search(catalog("ScalarISS"), "LIM")
