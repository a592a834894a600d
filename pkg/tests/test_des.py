import numpy as np
import pytest

from renege import (
    CapabilityError,
    D_ONLY,
    Discrete,
    MarkTriple,
    SIGMA_PLUS_D,
    Scenario,
    Uniform,
    cross_validate_recursion,
    deterministic_source,
    iid_source,
    regeneration_stats,
    simulate,
    step,
    workload_before_arrivals,
)

BOUNDED = iid_source(Uniform(0.5, 1.5), Uniform(0.0, 0.8), Uniform(0.0, 0.4), seed=515151)


def test_hand_timeline_stable_single_server():
    src = deterministic_source(1.0, 0.6, 0.3, seed=1)
    scn = Scenario(servers=1, impatience="begin", source=src, horizon_customers=20)
    records, stats = simulate(scn)
    assert stats.outcome_counts["served"] == 20
    assert stats.outcome_counts["abandoned_queue"] == 0
    assert stats.empty_epoch_count == 20  # every service completion empties
    assert stats.inclusion_violations == 0 and stats.sojourn_violations == 0
    for r in records:
        assert r.service_start == r.arrival
        assert r.departure == pytest.approx(r.arrival + 0.6)
    # X alternates 1 during service, 0 for the rest of each cycle
    assert stats.time_average_congestion == pytest.approx(0.6, abs=0.02)
    assert stats.l_zero_arrival_freq == 1.0  # 0.9 decays out within each cycle


def test_hand_timeline_end_model_aborts():
    src = deterministic_source(1.0, 1.5, 0.2, seed=1)
    scn = Scenario(servers=1, impatience="end", source=src, horizon_customers=15)
    records, stats = simulate(scn)
    assert stats.outcome_counts["aborted_in_service"] == 15
    assert stats.outcome_counts["served"] == 0
    for r in records:
        assert r.service_start == r.arrival  # server always free at arrivals
        assert r.departure == pytest.approx(r.arrival + 0.2)
    assert stats.inclusion_violations == 0 and stats.sojourn_violations == 0


def test_hand_timeline_two_servers_alternate():
    src = deterministic_source(1.0, 1.5, 10.0, seed=1)
    scn = Scenario(servers=2, impatience="begin", source=src, horizon_customers=12)
    records, stats = simulate(scn)
    assert stats.outcome_counts["served"] == 12
    assert stats.outcome_counts["abandoned_queue"] == 0
    for r in records:
        assert r.service_start == r.arrival  # a server is always free in time
    assert stats.inclusion_violations == 0 and stats.sojourn_violations == 0


def test_overloaded_deterministic_regenerates_without_sufficient_condition():
    src = deterministic_source(1.0, 1.5, 0.2, seed=1)  # sigma+dpat = 1.7 > xi
    scn = Scenario(servers=1, impatience="begin", source=src, horizon_customers=50)
    report = regeneration_stats(scn, replicas=20, max_depth=50)
    assert report.p_zero_sufficient.estimate.point == 0.0  # sufficient condition fails
    assert report.stats.empty_epoch_count > 0              # the path still empties
    assert report.p_zero_necessary.estimate.point == 1.0   # sigma^dpat = 0.2 < 1
    assert report.sufficient_alpha == "sigma_plus_d"


def test_regeneration_report_end_model(bounded_src):
    scn = Scenario(servers=2, impatience="end", source=bounded_src, horizon_customers=2000)
    report = regeneration_stats(scn, replicas=50, max_depth=1000)
    assert report.sufficient_alpha == "d_only"
    assert report.p_zero_sufficient.exact and report.p_zero_necessary.exact
    assert report.stats.inclusion_violations == 0


@pytest.mark.parametrize("model", ["begin", "end"])
@pytest.mark.parametrize("servers", [1, 2, 4])
def test_inclusions_and_sojourn_bounds(model, servers):
    scn = Scenario(servers=servers, impatience=model, source=BOUNDED.substream(servers),
                   horizon_customers=5000)
    records, stats = simulate(scn)
    assert stats.inclusion_violations == 0
    assert stats.sojourn_violations == 0
    assert stats.arrivals == sum(stats.outcome_counts.values())  # drained system
    if model == "begin":
        assert stats.outcome_counts["aborted_in_service"] == 0
    for r in records:
        if r.service_start is not None:
            assert r.service_start >= r.arrival
            if model == "begin":
                assert r.service_start <= r.arrival + r.dpat + 1e-9


def test_des_l_chain_matches_recursion_step():
    scn = Scenario(servers=3, impatience="begin", source=BOUNDED, horizon_customers=3000)
    _, stats = simulate(scn)
    xi, sigma, dpat = BOUNDED.window_arrays(0, 2999)
    l = m = 0.0
    for n in range(3000):
        assert stats.l_chain[n] == l       # bit-exact: same arithmetic
        assert stats.m_chain[n] == m
        mark = MarkTriple(xi[n], sigma[n], dpat[n])
        l = step(l, mark, SIGMA_PLUS_D)
        m = step(m, mark, D_ONLY)
    # continuous-time and arrival-recursion forms agree up to reassociation
    assert np.max(np.abs(stats.l_before - stats.l_chain)) <= 1e-9
    assert np.max(np.abs(stats.m_before - stats.m_chain)) <= 1e-9


def test_des_l_chain_matches_recursion_step_end_model():
    scn = Scenario(servers=2, impatience="end", source=BOUNDED, horizon_customers=2000)
    _, stats = simulate(scn)
    xi, sigma, dpat = BOUNDED.window_arrays(0, 1999)
    l = 0.0
    for n in range(2000):
        assert stats.l_chain[n] == l
        l = step(l, MarkTriple(xi[n], sigma[n], dpat[n]), D_ONLY)


def test_cross_validation_examples():
    det = deterministic_source(1.0, 0.6, 0.3, seed=1)
    assert cross_validate_recursion(
        Scenario(servers=1, impatience="begin", source=det, horizon_customers=100)) == 0.0

    hard = deterministic_source(1.0, 1.5, 0.2, seed=1)
    assert cross_validate_recursion(
        Scenario(servers=1, impatience="end", source=hard, horizon_customers=100)) == 0.0

    for model in ("begin", "end"):
        disc = cross_validate_recursion(
            Scenario(servers=1, impatience=model, source=BOUNDED, horizon_customers=10_000))
        assert disc <= 1e-9


def test_cross_validation_with_batch_arrivals():
    batch = iid_source(Discrete((0.0, 2.0), (0.3, 0.7)), Uniform(0.0, 1.2), Uniform(0.0, 0.6),
                       seed=77)
    for model in ("begin", "end"):
        disc = cross_validate_recursion(
            Scenario(servers=1, impatience=model, source=batch, horizon_customers=5000))
        assert disc <= 1e-9


def test_cross_validation_requires_single_server():
    scn = Scenario(servers=2, impatience="begin", source=BOUNDED, horizon_customers=10)
    with pytest.raises(CapabilityError):
        cross_validate_recursion(scn)


def test_work_conservation_single_server_begin():
    scn = Scenario(servers=1, impatience="begin", source=BOUNDED, horizon_customers=2000)
    records, _ = simulate(scn)
    des_w = workload_before_arrivals(records)
    for r in records:
        if des_w[r.index] > 0.0:
            busy = any(k.service_start is not None and k.service_start <= r.arrival < k.departure
                       for k in records[:r.index])
            assert busy


def test_des_abandonment_matches_birth_death_oracle():
    # independent of the recursion path: the simulator's abandonment fraction
    # against the memoryless birth-death ground truth, plus Little's law
    import math
    from renege import Exponential, OracleSpec, birth_death_abandonment
    lam, mu, gamma = 0.8, 1.0, 0.5
    oracle, _ = birth_death_abandonment(OracleSpec(lam, mu, gamma))
    src = iid_source(Exponential(lam), Exponential(mu), Exponential(gamma), seed=2024)
    records, stats = simulate(Scenario(servers=1, impatience="begin", source=src,
                                       horizon_customers=100_000))
    frac = stats.outcome_counts["abandoned_queue"] / stats.arrivals
    assert abs(frac - oracle) <= 3.0 * math.sqrt(oracle * (1 - oracle) / stats.arrivals)
    mean_sojourn = sum(r.departure - r.arrival for r in records) / len(records)
    lam_emp = stats.arrivals / stats.horizon_time
    assert stats.time_average_congestion == pytest.approx(lam_emp * mean_sojourn, rel=0.02)


def test_scenario_validation(bounded_src):
    with pytest.raises(ValueError):
        Scenario(servers=0, impatience="begin", source=bounded_src, horizon_customers=5)
    with pytest.raises(ValueError):
        Scenario(servers=1, impatience="nope", source=bounded_src, horizon_customers=5)
    with pytest.raises(ValueError):
        Scenario(servers=1, impatience="end", source=bounded_src, horizon_customers=0)
