import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import _sm64, stream_seed_reference
from santafe_lob.params import (DESK, PAPER, ModelParams, NonPositiveParameter, SeedSpec,
                                derive_stream_seed, derive_stream_seeds, epsilon, make_rng, n_st,
                                regime_report, validate)


def test_paper_scale_values():
    p = ModelParams(10000, 1, 1, 1e-6, 10**6)
    assert validate(p) is p
    assert math.isclose(p.n_st, 0.01)
    assert math.isclose(p.epsilon, 2e-4)
    assert PAPER.n_st == p.n_st


def test_desk_scale_values():
    p = ModelParams(1000, 1, 0.1, 1e-4, 10**4)
    validate(p)
    assert math.isclose(n_st(p), 0.1)
    assert math.isclose(epsilon(p), 1.1e-3)
    assert DESK.cutoff == 10**4 and DESK.lam == 1000


def test_epsilon_examples():
    assert math.isclose(epsilon(ModelParams(10000, 1, 1, 1e-6, 10)), 2e-4)
    assert math.isclose(epsilon(ModelParams(10000, 1, 0, 1e-6, 10)), 1e-4)
    assert epsilon(ModelParams(2.0, 1.0, 1.0, 0.1, 10)) == 1.0


@pytest.mark.parametrize("field,bad", [("lam", 0.0), ("v", 0.0), ("mu", -1.0), ("delta", 0.0),
                                       ("cutoff", 0), ("lam", math.inf), ("v", math.nan)])
def test_rejects_bad_values(field, bad):
    kw = dict(lam=1000.0, v=1.0, mu=0.1, delta=1e-4, cutoff=100)
    kw[field] = bad
    with pytest.raises(NonPositiveParameter):
        validate(ModelParams(**kw))


def test_error_names_lambda():
    with pytest.raises(NonPositiveParameter, match="lambda"):
        validate(ModelParams(0.0, 1, 1, 1e-4, 10))


def test_regime_report_flags():
    assert regime_report(DESK).ok
    r = regime_report(ModelParams(1000, 1, 100, 1e-4, 10))
    assert not r.ok and r.small_tick and not r.high_liquidity


def test_stream_seed_matches_reference():
    assert _sm64(0) == 0xE220A8397B1DCDAF  # first splitmix64 output from state 0
    for master in (0, 1, 20240601, 2**64 - 1):
        for idx in (0, 1, 2, 1000):
            assert derive_stream_seed(SeedSpec(master, idx)) == stream_seed_reference(master, idx)


def test_stream_seed_deterministic_and_distinct():
    s = SeedSpec(123, 0)
    assert derive_stream_seed(s) == derive_stream_seed(SeedSpec(123, 0))
    assert derive_stream_seed(s) != derive_stream_seed(SeedSpec(123, 1))


def test_no_collisions_over_a_million_indices():
    seeds = derive_stream_seeds(987654321, np.arange(1_000_001))
    assert np.unique(seeds).shape[0] == seeds.shape[0]
    for k in (0, 17, 999_999):
        assert int(seeds[k]) == derive_stream_seed(SeedSpec(987654321, k))


def test_seedspec_bounds():
    with pytest.raises(ValueError):
        SeedSpec(-1)
    with pytest.raises(ValueError):
        SeedSpec(1, -1)


def test_make_rng_reproducible():
    a = make_rng(SeedSpec(5, 3)).random(10)
    b = make_rng(SeedSpec(5, 3)).random(10)
    assert np.array_equal(a, b)


@given(lam=st.floats(1e-3, 1e6), v=st.floats(1e-3, 1e3), mu=st.floats(0, 1e3),
       delta=st.floats(1e-8, 1.0))
def test_derived_constants_single_source(lam, v, mu, delta):
    p = ModelParams(lam, v, mu, delta, 10)
    assert p.epsilon == (v + mu) / lam
    assert p.n_st == lam * delta / v
    assert p.submission_rate == lam * delta


@given(master=st.integers(0, 2**64 - 1), idx=st.integers(0, 2**40))
def test_seed_function_agrees_with_vectorised(master, idx):
    assert int(derive_stream_seeds(master, [idx])[0]) == derive_stream_seed(SeedSpec(master, idx))
