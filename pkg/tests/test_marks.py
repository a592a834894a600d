import math

import numpy as np
import pytest

from renege import (
    ConfigError,
    Deterministic,
    Discrete,
    Exponential,
    MarkTriple,
    StateMarginals,
    TruncatedExponential,
    Uniform,
    deterministic_source,
    iid_source,
    markov_source,
    source_from_config,
)


def test_deterministic_mark_at_negative_index():
    src = deterministic_source(1.0, 0.6, 0.3, seed=5)
    assert src.mark_at(-5) == MarkTriple(1.0, 0.6, 0.3)


def test_mark_at_is_pure(bounded_src):
    assert bounded_src.mark_at(7) == bounded_src.mark_at(7)
    # and batch access agrees bit for bit with single access
    xi, sigma, dpat = bounded_src.window_arrays(-3, 3)
    for k, n in enumerate(range(-3, 4)):
        m = bounded_src.mark_at(n)
        assert (m.xi, m.sigma, m.dpat) == (xi[k], sigma[k], dpat[k])


def test_shift_identity_definition_composition(bounded_src):
    src = bounded_src
    assert src.shift(0).mark_at(11) == src.mark_at(11)
    assert src.shift(3).mark_at(2) == src.mark_at(5)
    assert src.shift(4).shift(-9).mark_at(1) == src.shift(-5).mark_at(1)


def test_window_basics(bounded_src):
    assert bounded_src.window(0, 0) == [bounded_src.mark_at(0)]
    det = deterministic_source(2.0, 1.0, 0.5, seed=0)
    assert det.window(-2, 1) == [MarkTriple(2.0, 1.0, 0.5)] * 4
    a, b, c = -4, 1, 6
    assert bounded_src.window(a, b) + bounded_src.window(b + 1, c) == bounded_src.window(a, c)
    with pytest.raises(ValueError):
        bounded_src.window(2, 1)


def test_empirical_stationarity_of_xi():
    src = iid_source(Exponential(1.0), Exponential(1.0), Exponential(0.5), seed=99)
    n = 100_000
    m1 = src.window_arrays(0, n - 1)[0]
    m2 = src.window_arrays(n, 2 * n - 1)[0]
    se_diff = math.sqrt(m1.var(ddof=1) / n + m2.var(ddof=1) / n)
    assert abs(m1.mean() - m2.mean()) <= 5.0 * se_diff


def test_bound_enforcement():
    src = iid_source(Uniform(0.5, 2.0), TruncatedExponential(1.0, 0.7), Uniform(0.0, 0.4),
                     seed=3)
    _, sigma, dpat = src.window_arrays(0, 50_000)
    assert sigma.max() <= 0.7
    assert dpat.max() <= 0.4
    assert src.alpha_bound_for("sigma_plus_d") == 0.7 + 0.4
    assert src.alpha_bound_for("sigma_min_d") == 0.4
    assert src.alpha_bound_for("d_only") == 0.4


def test_unbounded_alpha_has_no_bound():
    src = iid_source(Uniform(0.5, 1.5), Exponential(1.0), Uniform(0.0, 0.4), seed=3)
    assert src.alpha_bound_for("sigma_plus_d") is None
    assert src.alpha_bound_for("sigma_min_d") == 0.4  # min is bounded by either factor


def test_declared_alpha_bound_validation():
    with pytest.raises(ConfigError):
        iid_source(Exponential(1.0), Exponential(1.0), Exponential(1.0), seed=1,
                   alpha_bound=5.0)
    with pytest.raises(ConfigError):
        iid_source(Uniform(0.5, 1.5), Uniform(0.0, 0.8), Uniform(0.0, 0.4), seed=1,
                   alpha_bound=1.0)  # below the 1.2 support bound
    src = iid_source(Uniform(0.5, 1.5), Uniform(0.0, 0.8), Uniform(0.0, 0.4), seed=1,
                     alpha_bound=1.2000000000000002)
    assert src.alpha_bound == 1.2000000000000002


def test_constructor_rejects_zero_mean_xi():
    with pytest.raises(ConfigError):
        deterministic_source(0.0, 1.0, 1.0, seed=1)


def test_batch_arrivals_allowed_with_positive_mean():
    src = iid_source(Discrete((0.0, 2.0), (0.3, 0.7)), Uniform(0, 1), Uniform(0, 1), seed=8)
    xi = src.window_arrays(0, 20_000)[0]
    assert (xi == 0.0).any() and src.mean_xi == pytest.approx(1.4)


def test_marginal_validation():
    with pytest.raises(ConfigError):
        Uniform(2.0, 1.0)
    with pytest.raises(ConfigError):
        Exponential(0.0)
    with pytest.raises(ConfigError):
        Discrete((1.0, 2.0), (0.6, 0.6))
    with pytest.raises(ConfigError):
        Deterministic(-1.0)
    with pytest.raises(ConfigError):
        MarkTriple(1.0, -0.1, 0.0)


def test_truncated_exponential_mean_matches_samples():
    m = TruncatedExponential(2.0, 1.5)
    src = iid_source(Deterministic(1.0), m, Deterministic(0.0), seed=21)
    sigma = src.window_arrays(0, 200_000)[1]
    assert sigma.mean() == pytest.approx(m.mean, abs=5 * sigma.std() / math.sqrt(sigma.size))


def test_discrete_frequencies():
    m = Discrete((0.5, 1.0, 3.0), (0.2, 0.5, 0.3))
    src = iid_source(Deterministic(1.0), m, Deterministic(0.0), seed=22)
    sigma = src.window_arrays(0, 100_000)[1]
    for atom, p in zip(m.atoms, m.probs):
        freq = float(np.mean(sigma == atom))
        assert freq == pytest.approx(p, abs=5 * math.sqrt(p * (1 - p) / sigma.size))


def _two_state_markov(seed=11, stream=0):
    fast = StateMarginals(Uniform(0.2, 0.6), Uniform(0.0, 0.3), Uniform(0.0, 0.2))
    slow = StateMarginals(Uniform(1.0, 2.0), Uniform(0.0, 0.8), Uniform(0.0, 0.4))
    return markov_source(((0.9, 0.1), (0.4, 0.6)), (fast, slow), seed=seed, stream=stream)


def test_markov_requires_minorization():
    st = StateMarginals(Uniform(0.5, 1.5), Uniform(0, 1), Uniform(0, 1))
    with pytest.raises(ConfigError):
        markov_source(((0.0, 1.0), (1.0, 0.0)), (st, st), seed=1)  # period-2 flip
    with pytest.raises(ConfigError):
        markov_source(((0.5, 0.5),), (st, st), seed=1)  # wrong shape


def test_markov_purity_is_request_order_independent():
    a = _two_state_markov()
    b = _two_state_markov()
    idx = [5, -40, 12, -3, 100, -41, 0, 7, -100]
    got_a = [a.mark_at(i) for i in idx]
    got_b = [b.mark_at(i) for i in sorted(idx)]
    lookup = dict(zip(sorted(idx), got_b))
    assert got_a == [lookup[i] for i in idx]


def test_markov_shift_and_stationary_frequencies():
    src = _two_state_markov(seed=77)
    assert src.shift(5).mark_at(-2) == src.mark_at(3)
    # state frequencies match the exact stationary law: pi = (0.8, 0.2)
    pi = src.stationary_state_probs
    assert pi == pytest.approx([0.8, 0.2], abs=1e-12)
    n = 60_000
    xi = src.window_arrays(0, n - 1)[0]
    fast_freq = float(np.mean(xi <= 0.6))  # fast-state xi never exceeds 0.6
    se = math.sqrt(0.8 * 0.2 / n)
    # correlated draws: generous 10 se
    assert abs(fast_freq - 0.8) <= 10 * se
    # windows far apart agree distributionally
    xi2 = src.window_arrays(10 ** 6, 10 ** 6 + n - 1)[0]
    assert abs(xi.mean() - xi2.mean()) <= 8 * math.sqrt(xi.var() / n + xi2.var() / n)


def test_markov_mean_xi_is_stationary_average():
    src = _two_state_markov()
    assert src.mean_xi == pytest.approx(0.8 * 0.4 + 0.2 * 1.5, abs=1e-12)


def test_source_from_config_roundtrip():
    cfg = {
        "kind": "iid", "seed": 4, "stream": 2,
        "xi": {"dist": "uniform", "low": 0.5, "high": 1.5},
        "sigma": {"dist": "truncated-exponential", "rate": 1.0, "cap": 0.8},
        "dpat": {"dist": "discrete", "atoms": [0.1, 0.4], "probs": [0.5, 0.5]},
    }
    src = source_from_config(cfg)
    assert src.kind == "iid" and src.seed == 4 and src.stream == 2
    assert src.alpha_bound_for("sigma_plus_d") == pytest.approx(1.2)
    with pytest.raises(ConfigError):
        source_from_config({"kind": "iid", "seed": 1})
    with pytest.raises(ConfigError):
        source_from_config({"kind": "nope", "seed": 1})
    mk = {
        "kind": "markov", "seed": 9,
        "transition": [[0.9, 0.1], [0.4, 0.6]],
        "states": [
            {"xi": {"dist": "uniform", "low": 0.2, "high": 0.6},
             "sigma": {"dist": "uniform", "low": 0.0, "high": 0.3},
             "dpat": {"dist": "uniform", "low": 0.0, "high": 0.2}},
            {"xi": {"dist": "uniform", "low": 1.0, "high": 2.0},
             "sigma": {"dist": "uniform", "low": 0.0, "high": 0.8},
             "dpat": {"dist": "uniform", "low": 0.0, "high": 0.4}},
        ],
    }
    msrc = source_from_config(mk)
    assert msrc.kind == "markov" and msrc.alpha_bound_for("d_only") == 0.4


def test_substreams_differ(bounded_src):
    assert bounded_src.substream(1).mark_at(0) != bounded_src.mark_at(0)
    assert bounded_src.substream(0).mark_at(0) == bounded_src.mark_at(0)
