import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivecog.info import (PAIRS, DegenerateChannelError, DegenerateChannelWarning,
                           DiscretizationSpec, conditional_entropy, digitize, entropy,
                           joint_histogram, mutual_information, pair_names, pairwise_features,
                           table_information)
from drivecog.preproc import CleanTrial, InsufficientSamplesError, UnusableTrialError

from conftest import make_trial, noise_trial
from oracles import brute_force_entropy, brute_force_mi, equal_width_codes


def _random_table(rng, nx, ny):
    p = rng.random((nx, ny)) * (rng.random((nx, ny)) > 0.3)
    if p.sum() == 0:
        p[0, 0] = 1.0
    return p / p.sum()


def test_entropy_examples():
    assert entropy([0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy(np.full(8, 1 / 8)) == pytest.approx(3.0, abs=1e-15)
    with pytest.raises(ValueError):
        entropy([0.7, 0.7])
    with pytest.raises(ValueError):
        entropy([1.2, -0.2])


def test_table_identities_on_random_tables():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        p = _random_table(rng, rng.integers(1, 9), rng.integers(1, 9))
        hx, hy, i = table_information(p)
        assert i >= 0
        _, _, i_t = table_information(p.T)
        assert abs(i - i_t) <= 1e-12
        # H(Y|X) from the definition: sum_x p(x) H(Y | X = x)
        px = p.sum(axis=1)
        h_cond = sum(px[a] * entropy(p[a] / px[a]) for a in range(len(px)) if px[a] > 0)
        assert abs(h_cond - (hy - i)) <= 1e-12


def test_table_mi_against_direct_sum():
    rng = np.random.default_rng(7)
    for _ in range(500):
        p = _random_table(rng, rng.integers(1, 5), rng.integers(1, 5))
        px, py = p.sum(axis=1), p.sum(axis=0)
        ref = sum(p[a, b] * math.log2(p[a, b] / (px[a] * py[b]))
                  for a in range(p.shape[0]) for b in range(p.shape[1]) if p[a, b] > 0)
        assert abs(table_information(p)[2] - max(ref, 0.0)) <= 1e-12


def test_digitize_matches_histogram_edges():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300)
    assert digitize(x, DiscretizationSpec(8)).tolist() == equal_width_codes(x, 8)
    with pytest.raises(DegenerateChannelError):
        digitize(np.ones(40), DiscretizationSpec())
    with pytest.raises(ValueError):
        DiscretizationSpec(1)


def test_sample_mi_against_brute_force():
    rng = np.random.default_rng(11)
    for n_bins in (2, 3, 4, 8):
        spec = DiscretizationSpec(n_bins)
        for _ in range(20):
            x = rng.normal(size=200)
            y = 0.6 * x + rng.normal(size=200)
            xc, yc = equal_width_codes(x, n_bins), equal_width_codes(y, n_bins)
            mi = brute_force_mi(xc, yc)
            assert abs(mutual_information(x, y, spec) - mi) <= 1e-12
            h = brute_force_entropy(yc) - mi
            assert abs(conditional_entropy(x, y, spec) - max(h, 0.0)) <= 1e-12


def test_identical_and_independent_signals():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5000)
    hx = brute_force_entropy(equal_width_codes(x, 8))
    assert mutual_information(x, x) == pytest.approx(hx, abs=1e-12)
    assert conditional_entropy(x, x) == pytest.approx(0.0, abs=1e-12)
    # plug-in bias for independent samples is about (B-1)^2 / (2 n ln 2) bits
    y = rng.normal(size=5000)
    assert mutual_information(x, y) < 5 * 49 / (2 * 5000 * math.log(2))


def test_invariant_to_monotone_affine_maps():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=400), rng.normal(size=400)
    base = mutual_information(x, y)
    assert mutual_information(3 * x + 7, 0.5 * y - 2) == pytest.approx(base, abs=1e-12)


def test_length_checks():
    with pytest.raises(ValueError):
        joint_histogram(np.zeros(40), np.zeros(41))
    with pytest.raises(ValueError):
        joint_histogram(np.arange(10.0), np.arange(10.0))


def test_joint_histogram_sums_to_one():
    rng = np.random.default_rng(5)
    p = joint_histogram(rng.normal(size=100), rng.normal(size=100))
    assert p.shape == (8, 8) and p.sum() == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 6))
def test_sample_mi_properties(seed, n_bins):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=64)
    y = rng.normal(size=64) + rng.uniform(-1, 1) * x
    spec = DiscretizationSpec(n_bins)
    i_xy = mutual_information(x, y, spec)
    assert i_xy >= 0
    assert abs(i_xy - mutual_information(y, x, spec)) <= 1e-12
    assert i_xy <= math.log2(n_bins) + 1e-12


def test_pairwise_features_shape_and_oracle():
    t = noise_trial(8)
    clean = CleanTrial(t, np.zeros(t.n_samples, bool))
    feats = pairwise_features(clean)
    assert feats.shape == (91,) and len(PAIRS) == 91
    x = t.samples
    for k in (0, 45, 90):
        i, j = PAIRS[k]
        xi, xj = equal_width_codes(x[:, i], 8), equal_width_codes(x[:, j], 8)
        ref = brute_force_entropy(xj) - brute_force_mi(xi, xj)
        assert abs(feats[k] - ref) <= 1e-12
    mi = pairwise_features(clean, mode="mi")
    assert np.all(mi >= 0)
    assert len(pair_names()) == 91 and pair_names()[0] == "cond_entropy:AF4|AF3"
    with pytest.raises(ValueError):
        pairwise_features(clean, mode="joint")


def test_identical_channels_give_zero_conditional_entropy():
    rng = np.random.default_rng(2)
    col = rng.normal(size=512)
    t = make_trial(np.tile(col[:, None], (1, 14)))
    feats = pairwise_features(CleanTrial(t, np.zeros(512, bool)))
    np.testing.assert_allclose(feats, 0.0, atol=1e-12)


def test_masked_samples_are_skipped():
    t = noise_trial(9)
    mask = np.zeros(t.n_samples, bool)
    mask[100:150] = True
    x = t.samples.copy()
    x[100:150] = 1e6  # would dominate the bin range if used
    masked = pairwise_features(CleanTrial(make_trial(x), mask))
    ref = pairwise_features(CleanTrial(make_trial(np.delete(t.samples, np.s_[100:150], 0)),
                                       np.zeros(t.n_samples - 50, bool)))
    np.testing.assert_allclose(masked, ref, atol=1e-12)


def test_degenerate_channel_warns():
    x = noise_trial(1).samples.copy()
    x[:, 3] = 2.0
    with pytest.warns(DegenerateChannelWarning):
        feats = pairwise_features(CleanTrial(make_trial(x), np.zeros(len(x), bool)))
    touched = [k for k, (i, j) in enumerate(PAIRS) if 3 in (i, j)]
    assert np.all(feats[touched] == 3.0)


def test_unusable_and_short_trials():
    t = noise_trial(1)
    mask = np.ones(t.n_samples, bool)
    with pytest.raises(UnusableTrialError):
        pairwise_features(CleanTrial(t, mask))
    short = make_trial(np.random.default_rng(0).normal(size=(31, 14)))
    with pytest.raises(InsufficientSamplesError):
        pairwise_features(CleanTrial(short, np.zeros(31, bool)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pairwise_features(CleanTrial(t, np.zeros(t.n_samples, bool)))
