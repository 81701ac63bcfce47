"""Tests for Monte Carlo sampling, PREDICT and CERTIFY."""

import numpy as np
import pytest

from certsmooth import smoothing
from certsmooth.errors import InvalidArgumentError
from certsmooth.numerics import clopper_pearson_lower, gaussian_cdf, gaussian_quantile
from certsmooth.smoothing import (
    ABSTAIN,
    SAMPLE_BLOCK,
    STREAM_ESTIMATION,
    STREAM_SELECTION,
    SmoothingParams,
    certify_mc,
    derive_rng,
    predict,
    predict_from_counts,
    radius_from_lower,
    radius_two_sided,
    sample_counts,
    top_two,
)


class TestSmoothingParams:

    @pytest.mark.parametrize("kwargs", [
        {"sigma": 0.0, "n": 100},
        {"sigma": -1.0, "n": 100},
        {"sigma": 0.5, "n": 50, "n0": 100},
        {"sigma": 0.5, "n": 100, "n0": 0},
        {"sigma": 0.5, "n": 100, "alpha": 1.0},
        {"sigma": 0.5, "n": 100, "seed": -1},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            SmoothingParams(**kwargs)

    def test_snapshot(self):
        assert SmoothingParams(sigma=0.5, n=200).snapshot() == {
            "sigma": 0.5, "n": 200, "n0": 100, "alpha": 0.001, "seed": 0,
        }


class TestSampleCounts:

    def test_constant_classifier(self, constant_classifier):
        f = constant_classifier(3, 4, 2)
        counts = sample_counts(f, np.zeros(3), sigma=5.0, n=1234, seed=0)
        np.testing.assert_array_equal(counts, [0, 0, 1234, 0])

    def test_sums_to_n(self, sign_classifier):
        counts = sample_counts(sign_classifier, np.array([0.1]), sigma=1.0, n=SAMPLE_BLOCK + 17, seed=3)
        assert counts.sum() == SAMPLE_BLOCK + 17
        assert counts.dtype == np.int64

    def test_deterministic(self, sign_classifier):
        a = sample_counts(sign_classifier, np.array([0.0]), 1.0, 5000, seed=9, example_id=4)
        b = sample_counts(sign_classifier, np.array([0.0]), 1.0, 5000, seed=9, example_id=4)
        np.testing.assert_array_equal(a, b)

    def test_independent_of_worker_count(self, sign_classifier):
        n = 3 * SAMPLE_BLOCK + 5
        serial = sample_counts(sign_classifier, np.array([0.2]), 1.0, n, seed=1, workers=1)
        threaded = sample_counts(sign_classifier, np.array([0.2]), 1.0, n, seed=1, workers=4)
        np.testing.assert_array_equal(serial, threaded)

    def test_concentrates_on_noisy_accuracy(self, sign_classifier):
        # class 0 has probability Phi(a / sigma) at x = a
        a, sigma, n = 0.5, 1.0, 10_000
        p = gaussian_cdf(a / sigma)
        counts = sample_counts(sign_classifier, np.array([a]), sigma, n, seed=2)
        assert abs(counts[0] / n - p) < 4 * np.sqrt(p * (1 - p) / n)

    def test_streams_are_disjoint(self):
        a = derive_rng(0, 0, STREAM_SELECTION, 0).standard_normal(8)
        b = derive_rng(0, 0, STREAM_ESTIMATION, 0).standard_normal(8)
        c = derive_rng(0, 1, STREAM_SELECTION, 0).standard_normal(8)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_dimension_mismatch(self, sign_classifier):
        with pytest.raises(InvalidArgumentError):
            sample_counts(sign_classifier, np.zeros(3), 1.0, 10, seed=0)

    def test_invalid_n(self, sign_classifier):
        with pytest.raises(InvalidArgumentError):
            sample_counts(sign_classifier, np.zeros(1), 1.0, 0, seed=0)


class TestPredict:

    def test_significant_majority(self):
        assert predict_from_counts(np.array([100, 0, 0]), 0.001) == 0

    def test_balanced_abstains(self):
        assert predict_from_counts(np.array([50, 50, 0]), 0.999) == ABSTAIN

    def test_vacuous_threshold_returns_majority(self):
        assert predict_from_counts(np.array([0, 7, 3]), 1 - 1e-9) == 1

    def test_top_two_ties_go_low(self):
        assert top_two(np.array([3, 5, 5])) == (1, 2)

    def test_predict_constant_classifier(self, constant_classifier):
        f = constant_classifier(2, 3, 1)
        assert predict(f, np.zeros(2), SmoothingParams(sigma=0.5, n=100)) == 1


class TestCertify:

    def test_constant_classifier_radius(self, constant_classifier):
        f = constant_classifier(3, 3, 0)
        params = SmoothingParams(sigma=0.5, n=100_000, n0=100, alpha=0.001)
        outcome = certify_mc(f, np.zeros(3), params)
        expected = 0.5 * gaussian_quantile(clopper_pearson_lower(100_000, 100_000, 0.001))
        assert outcome.decision == 0
        assert outcome.radius == pytest.approx(expected, abs=1e-12)
        assert outcome.elapsed >= 0

    def test_even_split_abstains(self, sign_classifier):
        outcome = certify_mc(sign_classifier, np.array([0.0]), SmoothingParams(sigma=1.0, n=2000))
        assert outcome.abstained
        assert outcome.radius == 0.0

    def test_radius_is_sound_and_tight(self, sign_classifier):
        # the smoothed sign classifier is robust at x = a up to exactly a
        a = 1.0
        outcome = certify_mc(sign_classifier, np.array([a]), SmoothingParams(sigma=1.0, n=10_000))
        assert outcome.decision == 0
        assert 0.9 < outcome.radius <= a

    def test_selection_and_estimation_use_separate_streams(self, monkeypatch, sign_classifier):
        seen = []
        real = smoothing.derive_rng

        def spy(master_seed, example_id, stream, block):
            seen.append((example_id, stream, block))
            return real(master_seed, example_id, stream, block)

        monkeypatch.setattr(smoothing, "derive_rng", spy)
        params = SmoothingParams(sigma=1.0, n=2 * SAMPLE_BLOCK, n0=100)
        certify_mc(sign_classifier, np.array([0.5]), params, example_id=7)

        streams = {stream for _, stream, _ in seen}
        assert streams == {STREAM_SELECTION, STREAM_ESTIMATION}
        assert len(seen) == len(set(seen))
        assert all(example_id == 7 for example_id, _, _ in seen)

    def test_threads_do_not_change_outcome(self, sign_classifier):
        params = SmoothingParams(sigma=1.0, n=3 * SAMPLE_BLOCK)
        a = certify_mc(sign_classifier, np.array([0.3]), params, workers=1)
        b = certify_mc(sign_classifier, np.array([0.3]), params, workers=3)
        assert (a.decision, a.radius) == (b.decision, b.radius)

    def test_more_samples_give_larger_median_radius(self, sign_classifier):
        xs = np.linspace(-2.0, 2.0, 100)

        def median_radius(n):
            params = SmoothingParams(sigma=1.0, n=n, n0=100)
            return np.median([certify_mc(sign_classifier, np.array([x]), params, example_id=i).radius
                              for i, x in enumerate(xs)])

        assert median_radius(10_000) >= median_radius(100)


class TestRadius:

    def test_radius_at_half_is_zero(self):
        assert radius_from_lower(0.5, 1.0) == 0.0

    def test_radius_survives_probability_one(self):
        assert np.isfinite(radius_from_lower(1.0, 0.5))

    def test_radius_strictly_increases_with_lower_bound(self):
        radii = [radius_from_lower(p, 0.5) for p in np.linspace(0.501, 0.999, 200)]
        assert all(a < b for a, b in zip(radii, radii[1:]))

    @pytest.mark.parametrize("p", [0.6, 0.9, 0.999])
    def test_radius_is_linear_in_sigma(self, p):
        for sigma in (0.12, 0.25, 0.5, 1.0):
            assert radius_from_lower(p, sigma) == pytest.approx(sigma * radius_from_lower(p, 1.0), rel=1e-12)

    def test_two_sided_equal_probabilities(self):
        assert radius_two_sided(0.4, 0.4, 1.0) == 0.0

    def test_two_sided_reduces_to_one_sided(self):
        assert radius_two_sided(0.9, 0.1, 0.5) == pytest.approx(radius_from_lower(0.9, 0.5), abs=1e-12)

    def test_two_sided_reference(self):
        assert radius_two_sided(0.8413447, 0.1586553, 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_two_sided_ordering(self):
        with pytest.raises(InvalidArgumentError):
            radius_two_sided(0.3, 0.6, 1.0)
