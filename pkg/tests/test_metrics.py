"""Metric definitions checked against brute-force reimplementations."""

import math

import numpy as np
import pytest

from dyadformer.metrics import (
    TRAITS,
    PredictionRecord,
    UndefinedCorrelationError,
    aggregate_participant,
    mse_part,
    mse_seq,
    pearson_part,
    render_report,
    report_table,
)
from dyadformer.tensor import RngStream


def rec(pid, pred, truth, task="Talk", start=0, sid="s000"):
    return PredictionRecord(
        session_id=sid, task=task, participant_id=pid,
        sequence_start=start, prediction=pred, ground_truth=truth,
    )


def random_records(rng, n_participants=20, n_seq=5, tasks=("Animals", "Talk")):
    records = []
    for i in range(n_participants):
        truth = rng.normal(5)
        for j in range(n_seq):
            records.append(
                rec(
                    f"p{i:03d}", rng.normal(5), truth,
                    task=tasks[i % len(tasks)], start=j, sid=f"s{i:03d}",
                )
            )
    return records


# -- brute-force references, written as plain loops -------------------------


def brute_mse_seq(records):
    out = []
    for k in range(5):
        errs = [(r.prediction[k] - r.ground_truth[k]) ** 2 for r in records]
        out.append(sum(errs) / len(errs))
    return np.array(out)


def brute_median(values):
    vals = sorted(values)
    n = len(vals)
    if n % 2 == 1:
        return vals[n // 2]
    return 0.5 * (vals[n // 2 - 1] + vals[n // 2])


def brute_mse_part(records):
    pids = sorted({r.participant_id for r in records})
    out = []
    for k in range(5):
        errs = []
        for pid in pids:
            mine = [r for r in records if r.participant_id == pid]
            med = brute_median([r.prediction[k] for r in mine])
            errs.append((med - mine[0].ground_truth[k]) ** 2)
        out.append(sum(errs) / len(errs))
    return np.array(out)


def brute_pearson(records):
    pids = sorted({r.participant_id for r in records})
    out = []
    for k in range(5):
        xs, ys = [], []
        for pid in pids:
            mine = [r for r in records if r.participant_id == pid]
            xs.append(brute_median([r.prediction[k] for r in mine]))
            ys.append(mine[0].ground_truth[k])
        mx = sum(xs) / len(xs)
        my = sum(ys) / len(ys)
        num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
        den = math.sqrt(
            sum((x - mx) ** 2 for x in xs) * sum((y - my) ** 2 for y in ys)
        )
        out.append(num / den)
    return np.array(out)


class TestMseSeq:
    def test_brute_force_equivalence(self):
        records = random_records(RngStream(0), n_participants=40, n_seq=5)
        assert len(records) == 200
        np.testing.assert_array_equal(mse_seq(records), brute_mse_seq(records))

    def test_perfect_predictions(self):
        truth = RngStream(1).normal(5)
        records = [rec("p0", truth.copy(), truth.copy(), start=i) for i in range(3)]
        np.testing.assert_array_equal(mse_seq(records), np.zeros(5))

    def test_single_record_frozen(self):
        r = rec("p0", np.full(5, 1.0), np.zeros(5))
        np.testing.assert_array_equal(mse_seq([r]), np.ones(5))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mse_seq([])


class TestAggregateParticipant:
    def test_odd_count_takes_middle(self):
        truth = np.zeros(5)
        records = [
            rec("p0", np.full(5, v), truth, start=i)
            for i, v in enumerate([3.0, 1.0, 2.0])
        ]
        med, t = aggregate_participant(records)["p0"]
        np.testing.assert_array_equal(med, np.full(5, 2.0))
        np.testing.assert_array_equal(t, truth)

    def test_even_count_averages_central_pair(self):
        truth = np.zeros(5)
        records = [
            rec("p0", np.full(5, v), truth, start=i)
            for i, v in enumerate([4.0, 1.0, 2.0, 100.0])
        ]
        med, _ = aggregate_participant(records)["p0"]
        np.testing.assert_array_equal(med, np.full(5, 3.0))

    def test_median_is_per_trait(self):
        truth = np.zeros(5)
        p1 = np.array([1.0, 10.0, 0.0, 0.0, 0.0])
        p2 = np.array([2.0, 30.0, 0.0, 0.0, 0.0])
        p3 = np.array([3.0, 20.0, 0.0, 0.0, 0.0])
        records = [rec("p0", p, truth, start=i) for i, p in enumerate([p1, p2, p3])]
        med, _ = aggregate_participant(records)["p0"]
        np.testing.assert_array_equal(med[:2], [2.0, 20.0])

    def test_inconsistent_ground_truth_rejected(self):
        records = [
            rec("p0", np.zeros(5), np.zeros(5), start=0),
            rec("p0", np.zeros(5), np.ones(5), start=1),
        ]
        with pytest.raises(ValueError, match="inconsistent"):
            aggregate_participant(records)


class TestMsePart:
    def test_brute_force_equivalence(self):
        records = random_records(RngStream(2), n_participants=30, n_seq=4)
        np.testing.assert_allclose(mse_part(records), brute_mse_part(records), atol=0)

    def test_median_beats_outlier(self):
        truth = np.zeros(5)
        # 1 wild sequence out of 3: the median ignores it, the mean would not
        records = [
            rec("p0", np.full(5, v), truth, start=i)
            for i, v in enumerate([0.1, 0.0, 50.0])
        ] + [rec("p1", np.zeros(5), np.ones(5), start=0)]
        per_part = mse_part(records)
        assert per_part[0] == pytest.approx((0.1**2 + 1.0) / 2)


class TestPearsonPart:
    def test_brute_force_equivalence(self):
        records = random_records(RngStream(3), n_participants=25, n_seq=3)
        np.testing.assert_allclose(
            pearson_part(records), brute_pearson(records), atol=1e-12
        )

    def test_textbook_fixture(self):
        # x = (1,2,3), y = (2,4,5): r = 3 / sqrt(2 * 14/3) ... computed below
        xs, ys = [1.0, 2.0, 3.0], [2.0, 4.0, 5.0]
        records = [
            rec(f"p{i}", np.full(5, x), np.full(5, y))
            for i, (x, y) in enumerate(zip(xs, ys))
        ]
        x, y = np.array(xs), np.array(ys)
        expect = float(
            ((x - x.mean()) @ (y - y.mean()))
            / math.sqrt(((x - x.mean()) ** 2).sum() * ((y - y.mean()) ** 2).sum())
        )
        np.testing.assert_allclose(pearson_part(records), np.full(5, expect), atol=1e-15)
        np.testing.assert_allclose(pearson_part(records), 0.98198051, atol=1e-8)

    def test_affine_invariance(self):
        rng = RngStream(4)
        records = random_records(rng, n_participants=15, n_seq=2)
        base = pearson_part(records)
        scaled = [
            rec(r.participant_id, 3.0 * r.prediction + 7.0, r.ground_truth,
                task=r.task, start=r.sequence_start, sid=r.session_id)
            for r in records
        ]
        np.testing.assert_allclose(pearson_part(scaled), base, atol=1e-12)

    def test_perfect_anticorrelation(self):
        records = [
            rec(f"p{i}", np.full(5, -float(i)), np.full(5, float(i)))
            for i in range(5)
        ]
        np.testing.assert_allclose(pearson_part(records), -1.0, atol=1e-12)

    def test_strict_zero_variance_raises(self):
        records = [rec(f"p{i}", np.zeros(5), RngStream(5).normal(5) + i)
                   for i in range(3)]
        with pytest.raises(UndefinedCorrelationError, match="trait O"):
            pearson_part(records)

    def test_non_strict_gives_nan(self):
        records = [rec(f"p{i}", np.zeros(5), np.full(5, float(i))) for i in range(3)]
        vals = pearson_part(records, strict=False)
        assert np.isnan(vals).all()

    def test_needs_two_participants(self):
        with pytest.raises(ValueError):
            pearson_part([rec("p0", np.zeros(5), np.zeros(5))])


class TestDuplicationInvariance:
    def test_doubling_every_record_changes_nothing(self):
        records = random_records(RngStream(6), n_participants=10, n_seq=3)
        doubled = records + [
            rec(r.participant_id, r.prediction, r.ground_truth,
                task=r.task, start=r.sequence_start + 100, sid=r.session_id)
            for r in records
        ]
        np.testing.assert_allclose(mse_seq(doubled), mse_seq(records), atol=1e-15)
        np.testing.assert_allclose(mse_part(doubled), mse_part(records), atol=1e-15)
        np.testing.assert_allclose(
            pearson_part(doubled), pearson_part(records), atol=1e-12
        )


class TestReportTable:
    def test_row_layout(self):
        records = random_records(RngStream(7), tasks=("Animals", "Talk"))
        rows = report_table(records)
        groups = [g for g, _, _, _ in rows]
        # canonical task order, then Overall
        seen = list(dict.fromkeys(groups))
        assert seen == ["Animals", "Talk", "Overall"]
        per_group = len(rows) // 3
        assert per_group == 3 * 6  # 3 metrics x (5 traits + Avg)

    def test_avg_row_is_mean_of_traits(self):
        records = random_records(RngStream(8))
        rows = report_table(records, group_by="overall")
        by_metric = {}
        for _, trait, metric, value in rows:
            by_metric.setdefault(metric, {})[trait] = value
        for metric, vals in by_metric.items():
            traits = [vals[t] for t in TRAITS]
            assert vals["Avg"] == pytest.approx(np.mean(traits), abs=1e-12)

    def test_overall_group_matches_direct_metrics(self):
        records = random_records(RngStream(9))
        rows = report_table(records, group_by="overall")
        direct = mse_seq(records)
        got = {t: v for _, t, m, v in rows if m == "mse_seq"}
        for k, t in enumerate(TRAITS):
            assert got[t] == direct[k]

    def test_bad_group_by(self):
        records = random_records(RngStream(10))
        with pytest.raises(ValueError):
            report_table(records, group_by="session")

    def test_rows_deterministic(self):
        records = random_records(RngStream(11))
        assert report_table(records) == report_table(records)


class TestRenderReport:
    def test_contains_groups_and_values(self):
        records = random_records(RngStream(12), tasks=("Ghost",))
        text = render_report(report_table(records))
        assert "== Ghost ==" in text
        assert "== Overall ==" in text
        assert "mse_seq" in text and "pearson_part" in text

    def test_nan_rendered_as_na(self):
        records = [rec(f"p{i}", np.zeros(5), np.full(5, float(i))) for i in range(3)]
        text = render_report(report_table(records, group_by="overall"))
        assert "n/a" in text
        assert "nan" not in text

    def test_render_deterministic(self):
        records = random_records(RngStream(13))
        rows = report_table(records)
        assert render_report(rows) == render_report(rows)
