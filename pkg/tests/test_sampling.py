import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from stableweb.rng import RngStream
from stableweb.sampling import (CalibrationError, ConfigurationError, StableLaw,
                                analytic_tail_constant, build_increment_law,
                                calibrate_tail_constant, draw_step, max_tail_constant,
                                sample_increments, sample_stable_many, scale_root,
                                steps_from_words, walk_char_fn)

alphas = st.floats(1.05, 1.95)


@given(alphas, st.floats(0.01, 0.99), st.integers(10, 400))
def test_increment_law_is_a_symmetric_distribution(alpha, frac, x_max):
    law = build_increment_law(alpha, frac * max_tail_constant(alpha, x_max), x_max)
    p = law.probabilities
    assert np.all(p >= 0)
    assert math.isclose(p[0] + 2 * (math.fsum(p[1:]) + law.tail_mass), 1.0, abs_tol=1e-12)
    m = np.arange(1, x_max + 1)
    assert np.allclose(p[1:], law.tail_constant * m ** -(1 + alpha), rtol=1e-12)
    assert law.pmf(-7) == law.pmf(7)
    assert np.all(np.diff(law.cdf_abs) >= 0)
    # the rounded envelope beyond the table sums to the reported tail mass
    far = sum(law.pmf(k) for k in range(x_max + 1, x_max + 200001))
    rest = law.tail_constant / alpha * (x_max + 200000.5) ** -alpha
    assert math.isclose(far + rest, law.tail_mass, rel_tol=1e-9)


@given(alphas, st.integers(10, 400))
def test_infeasible_tail_constant_rejected(alpha, x_max):
    cap = max_tail_constant(alpha, x_max)
    build_increment_law(alpha, cap * (1 - 1e-9), x_max)
    with pytest.raises(ConfigurationError):
        build_increment_law(alpha, cap * (1 + 1e-9), x_max)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5, 2.3])
def test_alpha_outside_range_rejected(alpha):
    with pytest.raises(ConfigurationError):
        build_increment_law(alpha, 0.1)
    with pytest.raises(ConfigurationError):
        StableLaw(alpha)


def test_compiled_step_matches_vector_twin():
    law = build_increment_law(1.5, 0.3, 50)
    words = RngStream(3, 1).blocks(5000).ravel()
    # force tail draws too: words with top bits set land beyond the table
    words = np.concatenate([words, np.uint64(MASK_TOP) | words[:200]])
    vec = steps_from_words(law, words)
    scalar = np.array([draw_step(w, *law.tables()) for w in words])
    assert np.array_equal(vec, scalar)
    assert np.abs(vec).max() > law.x_max


MASK_TOP = 0xFFFF000000000000


def test_step_frequencies_match_pmf():
    law = build_increment_law(1.5, 0.3, 30)
    x = sample_increments(law, RngStream(11, 0), 400_000)
    bins = np.arange(0, 6)
    observed = np.array([np.sum(np.abs(x) == k) for k in bins] + [np.sum(np.abs(x) > 5)])
    expected_p = np.r_[law.p0, 2 * law.probabilities[1:6], 0.0]
    expected_p[-1] = 1 - expected_p.sum()
    _, pval = stats.chisquare(observed, expected_p * x.size)
    assert pval > 1e-4
    # beyond the table the tail follows the continuous envelope
    for m in (31, 100, 400):
        q = law.tail_prob(m)
        z = (np.sum(np.abs(x) >= m) - q * x.size) / math.sqrt(q * (1 - q) * x.size)
        assert abs(z) < 4.5
    assert abs(np.mean(x > 0) - np.mean(x < 0)) < 0.01


def test_stable_sampler_characteristic_function():
    law = StableLaw(1.5, 0.7)
    x = sample_stable_many(law, 2.0, RngStream(1, 2), 200_000)
    for theta in (0.3, 1.0, 2.5):
        assert abs(np.mean(np.cos(theta * x)) - law.char_fn(theta, 2.0)) < 0.01
    assert abs(np.mean(np.sin(x))) < 0.01


def test_stable_sampler_rejects_bad_duration():
    with pytest.raises(ValueError):
        sample_stable_many(StableLaw(1.5), 0.0, RngStream(0), 3)


def test_scale_root_snaps_integers():
    assert scale_root(64, 1.5) == 16.0
    assert scale_root(2 ** 15, 1.5) == 1024.0
    assert scale_root(10, 1.5) == pytest.approx(10 ** (2 / 3), rel=1e-15)


def test_walk_char_fn_is_reproducible():
    law = build_increment_law(1.5, 0.2)
    a = walk_char_fn(law, 64, 500, [1.0], seed=4)
    b = walk_char_fn(law, 64, 500, [1.0], seed=4)
    assert np.array_equal(a, b)


def test_calibration_reproduces_analytic_constant_and_is_a_fixed_point():
    law = StableLaw(1.5)
    kw = dict(n_steps=2 ** 10, replicas=20_000, seed=1, rtol=1e-3)
    c = calibrate_tail_constant(law, **kw)
    assert abs(c / analytic_tail_constant(law) - 1) < 0.1
    again = calibrate_tail_constant(law, initial=c, **kw)
    assert abs(again / c - 1) < 2e-3


def test_calibration_error_when_scale_unreachable():
    with pytest.raises(CalibrationError) as info:
        calibrate_tail_constant(StableLaw(1.5, 50.0), n_steps=64, replicas=200)
    assert "resid_hi" in info.value.residuals
