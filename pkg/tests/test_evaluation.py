"""Tests for accuracy tables, the estimation report, variance study and bench."""

import math

import numpy as np
import pytest

from certsmooth.certifiers import MonteCarloCertifier, create_certifier
from certsmooth.data import LabeledExample, make_splits, stack
from certsmooth.errors import FormatError, InvalidArgumentError
from certsmooth.evaluation import (
    LOG_COLUMNS,
    CertificationLog,
    CertRow,
    average_certified_radius,
    bench,
    binomial_variance_agreement,
    certified_accuracy,
    certified_accuracy_table,
    certify_examples,
    estimation_report,
    load_log,
    median_relative_error,
    save_accuracy_table,
    save_log,
    variance_study,
)
from certsmooth.model import TrainConfig, init_params, train
from certsmooth.smoothing import ABSTAIN, SmoothingParams, predict
from certsmooth.surrogate import accelerated_certify, build_counts_dataset, train_surrogate


def _log(rows: list[tuple[int, float, bool]]) -> CertificationLog:
    """Rows of (decision, radius, correct) with sequential ids."""
    return CertificationLog([
        CertRow(i, 0, decision, radius, correct, 0.0, "test")
        for i, (decision, radius, correct) in enumerate(rows)
    ])


class TestCertifiedAccuracy:

    def test_empty_log(self):
        assert certified_accuracy(CertificationLog(), 0.5) == 0.0
        assert average_certified_radius(CertificationLog()) == 0.0

    def test_all_correct(self):
        assert certified_accuracy(_log([(0, 1.0, True)] * 5), 0.25) == 1.0

    def test_mixed_rows(self):
        log = _log([(0, 0.5, True), (0, 0.1, True), (1, 0.9, False), (ABSTAIN, 0.0, False)])
        assert certified_accuracy(log, 0.0) == 0.5
        assert certified_accuracy(log, 0.25) == 0.25
        assert average_certified_radius(log) == pytest.approx(0.15)

    def test_one_correct_among_four(self):
        log = _log([(0, 0.8, True), (ABSTAIN, 0.0, False), (ABSTAIN, 0.0, False), (2, 0.4, False)])
        assert average_certified_radius(log) == pytest.approx(0.2)

    def test_all_abstain(self):
        assert average_certified_radius(_log([(ABSTAIN, 0.0, False)] * 3)) == 0.0

    def test_negative_radius(self):
        with pytest.raises(InvalidArgumentError):
            certified_accuracy(_log([(0, 1.0, True)]), -0.1)

    def test_table_row(self, tmp_path):
        row = certified_accuracy_table(_log([(0, 0.6, True), (0, 1.2, True)]), [0.0, 0.5, 1.0])
        assert row == {"r=0": 1.0, "r=0.5": 1.0, "r=1": 0.5, "acr": pytest.approx(0.9)}
        path = tmp_path / "accuracy.tsv"
        save_accuracy_table({"mc": row}, path)
        assert path.read_text().splitlines() == ["method\tr=0\tr=0.5\tr=1\tacr", "mc\t1.0000\t1.0000\t0.5000\t0.9000"]


class TestLogFiles:

    def test_round_trip(self, tmp_path):
        log = CertificationLog([
            CertRow(3, 1, 1, 0.123456789, True, 1.5, "mc"),
            CertRow(4, 0, ABSTAIN, 0.0, False, 2.25, "mc"),
        ])
        path = tmp_path / "log.tsv"
        save_log(log, path)
        assert path.read_text().splitlines()[0] == "\t".join(LOG_COLUMNS)
        loaded = load_log(path)
        assert [(r.example_id, r.decision, r.radius, r.correct) for r in loaded.rows] == [
            (3, 1, 0.123456789, True), (4, ABSTAIN, 0.0, False),
        ]

    def test_bad_header(self, tmp_path):
        path = tmp_path / "log.tsv"
        path.write_text("a\tb\n")
        with pytest.raises(FormatError) as info:
            load_log(path)
        assert info.value.field == "header"


class TestEstimationReport:

    def test_identical_logs(self):
        log = _log([(0, 0.5, True), (1, 0.8, True)])
        row = estimation_report(log, log).rows[0]
        assert row.underestimation_pct == 0.0
        assert row.overestimation_pct == 0.0
        assert row.mean_error_under == 0.0
        assert row.mean_error_over == 0.0
        assert row.tie_pct == 100.0

    def test_single_underestimate(self):
        row = estimation_report(_log([(0, 1.0, True)]), _log([(0, 0.8, True)])).rows[0]
        assert row.underestimation_pct == 100.0
        assert row.percentage_error_under == pytest.approx(20.0)

    def test_split_statistics(self):
        mc = _log([(0, 1.0, True), (0, 0.5, True), (0, 0.3, True), (0, 0.2, True), (ABSTAIN, 0.0, False)])
        fast = _log([(0, 0.8, True), (0, 0.6, True), (0, 0.3, True), (0, 0.9, True), (0, 1.0, True)])
        row = estimation_report(mc, fast, r_min=0.25, model="h").rows[0]
        assert row.model == "h"
        assert row.n_eligible == 3
        assert row.underestimation_pct == pytest.approx(100 / 3)
        assert row.overestimation_pct == pytest.approx(100 / 3)
        assert row.tie_pct == pytest.approx(100 / 3)
        assert row.percentage_error_under == pytest.approx(20.0)
        assert row.ground_acr_under == pytest.approx(1.0)
        assert row.mean_error_under == pytest.approx(0.2)
        assert row.error_variance_under == pytest.approx(0.0)
        assert row.percentage_error_over == pytest.approx(20.0)
        assert row.ground_acr_over == pytest.approx(0.5)
        assert row.mean_error_over == pytest.approx(0.1)

    def test_mismatched_ids(self):
        with pytest.raises(InvalidArgumentError):
            estimation_report(_log([(0, 1.0, True)]), _log([(0, 1.0, True), (0, 1.0, True)]))

    def test_median_relative_error(self):
        mc = _log([(0, 1.0, True), (0, 0.5, True), (0, 0.4, True)])
        fast = _log([(0, 0.8, True), (0, 0.6, True), (0, 0.4, True)])
        assert median_relative_error(mc, fast) == pytest.approx(0.2)
        assert math.isnan(median_relative_error(_log([(ABSTAIN, 0.0, False)]), _log([(0, 1.0, True)])))

    def test_save(self, tmp_path):
        path = tmp_path / "estimation.tsv"
        estimation_report(_log([(0, 1.0, True)]), _log([(0, 0.8, True)]), model="h").save(path)
        header, row = path.read_text().splitlines()
        assert header.split("\t")[0] == "model"
        assert row.split("\t")[0] == "h"
        assert row.split("\t")[-1] == "1"


class TestCertifyExamples:

    def test_rows_follow_examples(self, constant_classifier):
        f = constant_classifier(2, 3, 1)
        examples = [LabeledExample(10 + i, np.zeros(2), i % 3) for i in range(6)]
        certifier = MonteCarloCertifier(f, SmoothingParams(sigma=0.5, n=500, n0=50))
        log = certify_examples(certifier, examples, record_time=False)
        assert [r.example_id for r in log.rows] == list(range(10, 16))
        assert [r.correct for r in log.rows] == [e.label == 1 for e in examples]
        assert all(r.elapsed_ms == 0.0 and r.method == "mc" for r in log.rows)
        assert log.params["n"] == 500

    def test_workers_do_not_change_rows(self, sign_classifier):
        examples = [LabeledExample(i, np.array([x]), int(x <= 0)) for i, x in enumerate(np.linspace(-1, 1, 9))]
        certifier = MonteCarloCertifier(sign_classifier, SmoothingParams(sigma=0.5, n=1000))
        serial = certify_examples(certifier, examples, workers=1, record_time=False)
        threaded = certify_examples(certifier, examples, workers=4, record_time=False)
        assert serial.rows == threaded.rows

    def test_baseline_equals_mc_at_100(self, sign_classifier):
        examples = [LabeledExample(i, np.array([x]), int(x <= 0)) for i, x in enumerate(np.linspace(-2, 2, 7))]
        params = SmoothingParams(sigma=0.5, n=10_000, n0=100)
        baseline = certify_examples(create_certifier("baseline", sign_classifier, params), examples, record_time=False)
        mc = certify_examples(create_certifier("mc", sign_classifier, SmoothingParams(sigma=0.5, n=100)),
                              examples, record_time=False)
        assert [(r.decision, r.radius) for r in baseline.rows] == [(r.decision, r.radius) for r in mc.rows]
        assert baseline.params["n"] == 100


class TestVarianceStudy:

    def test_constant_classifier(self, constant_classifier):
        f = constant_classifier(2, 3, 0)
        examples = [LabeledExample(i, np.zeros(2), 0) for i in range(3)]
        study = variance_study(f, examples, sigma=0.5, n=200, resamples=5, seed=0)
        assert study.counts.shape == (3, 5, 3)
        assert np.all(study.per_class_variance == 0)
        assert study.normalized_pct == 0.0

    def test_matches_binomial_variance(self, sign_classifier, tmp_path):
        examples = [LabeledExample(i, np.array([x]), 0) for i, x in enumerate([0.0, 0.1, -0.2])]
        study = variance_study(sign_classifier, examples, sigma=1.0, n=1000, resamples=30, seed=1)
        assert binomial_variance_agreement(study) >= 0.95
        assert 10.0 < study.normalized_pct < 40.0
        path = tmp_path / "variance.tsv"
        study.save(path)
        assert len(path.read_text().splitlines()) == 1 + 2 + 1

    def test_needs_two_resamples(self, sign_classifier):
        with pytest.raises(InvalidArgumentError):
            variance_study(sign_classifier, [LabeledExample(0, np.zeros(1), 0)], 1.0, 10, resamples=1, seed=0)


class TestBench:

    def test_table_shape_and_trend(self, constant_classifier, tmp_path):
        f = constant_classifier(2, 3, 0)
        h = constant_classifier(2, 3, 0, head="simplex")
        examples = [LabeledExample(i, np.zeros(2), 0) for i in range(3)]
        table = bench(f, h, examples, SmoothingParams(sigma=0.5, n=100, n0=50), [100, 50_000], repeats=3, warmup=1)
        assert [(r.method, r.n) for r in table.rows] == [
            ("mc", 100), ("surrogate", 100), ("mc", 50_000), ("surrogate", 50_000),
        ]
        for r in table.rows:
            expected = (1, 1) if r.method == "surrogate" else (None, None)
            assert (r.passes_min, r.passes_max) == expected
        assert table.median("mc", 50_000) > table.median("mc", 100)
        table.save(tmp_path / "bench.tsv")
        lines = (tmp_path / "bench.tsv").read_text().splitlines()
        assert lines[0].startswith("method\tn\tmedian_ms")
        assert lines[1].split("\t")[6:8] == ["", ""]
        assert lines[2].split("\t")[6:8] == ["1", "1"]

    def test_sweep_must_ascend(self, constant_classifier):
        f = constant_classifier(2, 3, 0)
        h = constant_classifier(2, 3, 0, head="simplex")
        with pytest.raises(InvalidArgumentError):
            bench(f, h, [LabeledExample(0, np.zeros(2), 0)], SmoothingParams(sigma=0.5, n=100), [1000, 100])


def test_acr_bounds_certified_accuracy(rng):
    rows = [(int(rng.integers(-1, 3)), float(rng.uniform(0, 2)), bool(rng.integers(0, 2))) for _ in range(40)]
    log = _log([(d, r if d != ABSTAIN else 0.0, c and d != ABSTAIN) for d, r, c in rows])
    acr = average_certified_radius(log)
    accuracies = [certified_accuracy(log, r) for r in np.linspace(0, 2, 21)]
    assert all(a >= b for a, b in zip(accuracies, accuracies[1:]))
    assert all(acr >= r * a - 1e-12 for r, a in zip(np.linspace(0, 2, 21), accuracies))


SIGMA = 0.25


@pytest.fixture(scope="module")
def trained_task():
    """Base classifier and surrogate trained on well separated blobs."""
    train_split, test_split = make_splits(
        "blobs", d=4, k=3, n_train=300, n_test=200, separation=6.0, blob_std=1.0, seed=11,
    )
    inputs, labels = stack(train_split)
    f = train(
        init_params([4, 16, 3], seed=0), inputs, labels, "cross_entropy",
        TrainConfig(epochs=30, batch_size=32, learning_rate=1e-2, lr_step=1000, seed=0),
        noise_sigma=SIGMA,
    )
    dataset = build_counts_dataset(f, train_split, SIGMA, 2000, seed=0)
    h = train_surrogate(
        dataset, train_split, [16],
        TrainConfig(epochs=150, batch_size=32, learning_rate=1e-2, lr_step=1000, seed=0),
    )
    return f, h, test_split


class TestTrainedTask:

    def test_surrogate_tracks_sampling_and_beats_baseline(self, trained_task):
        f, h, examples = trained_task
        params = SmoothingParams(sigma=SIGMA, n=10_000)
        mc = certify_examples(create_certifier("mc", f, params), examples, record_time=False)
        fast = certify_examples(create_certifier("surrogate", f, params, surrogate=h), examples, record_time=False)
        baseline = certify_examples(create_certifier("baseline", f, params), examples, record_time=False)

        acr_mc = average_certified_radius(mc)
        acr_fast = average_certified_radius(fast)
        assert acr_mc > 0
        assert acr_fast >= 0.8 * acr_mc
        assert acr_fast > average_certified_radius(baseline)
        assert median_relative_error(mc, fast, r_min=0.25) <= 0.25

    def test_certified_outcomes_agree_with_predict(self, trained_task):
        f, h, examples = trained_task
        params = SmoothingParams(sigma=SIGMA, n=10_000)
        certified = 0
        for example in examples:
            outcome = accelerated_certify(f, h, example.x, params, example_id=example.id)
            if outcome.abstained:
                assert outcome.radius == 0.0
                continue
            certified += 1
            assert outcome.decision == outcome.count_top
            assert outcome.decision == predict(f, example.x, params, example_id=example.id)
            assert outcome.p_a_lower > 0.5
            assert outcome.radius > 0
        assert certified > len(examples) // 2


def test_bench_complexity_trend():
    f = init_params([16, 64, 64, 4], seed=0)
    h = init_params([16, 64, 64, 4], head="simplex", seed=1)
    examples = [LabeledExample(i, np.full(16, 0.1 * i), 0) for i in range(4)]
    sweep = [100, 1_000, 10_000, 100_000]
    table = bench(f, h, examples, SmoothingParams(sigma=0.25, n=100), sweep, repeats=7, warmup=2)

    fast = [table.median("surrogate", n) for n in sweep]
    assert max(fast) <= 2.0 * min(fast)
    assert table.median("mc", 100_000) >= 50 * table.median("mc", 1_000)
