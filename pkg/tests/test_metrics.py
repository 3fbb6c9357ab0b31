import numpy as np
import pytest

from artinv.metrics import (ConstantInputError, MetricError, UtteranceMetrics,
                            aggregate, correlation, format_report, rmse,
                            score_utterance, write_report_csv, write_summary_csv)
from artinv.corpus import Speaker


class TestRmse:
    def test_identical_inputs_give_zero(self):
        x = np.array([1.0, -2.0, 3.0])
        assert rmse(x, x) == 0.0

    def test_hand_computed_example(self):
        assert abs(rmse([0.0, 0.0], [3.0, 4.0]) - np.sqrt(12.5)) < 1e-9

    def test_translation_invariance(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(50), rng.standard_normal(50)
        assert abs(rmse(a, b) - rmse(a + 3.7, b + 3.7)) < 1e-12

    def test_triangle_bound(self):
        rng = np.random.default_rng(1)
        a, b, c = (rng.standard_normal(64) for _ in range(3))
        assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12

    def test_length_mismatch_rejected(self):
        with pytest.raises(MetricError, match="mismatch"):
            rmse([1.0], [1.0, 2.0])

    def test_empty_rejected(self):
        with pytest.raises(MetricError, match="empty"):
            rmse([], [])


class TestCorrelation:
    def test_self_correlation_is_one(self):
        x = np.array([0.0, 1.0, 3.0, 2.0])
        assert abs(correlation(x, x) - 1.0) < 1e-12

    def test_negation_flips_sign(self):
        x = np.array([0.0, 1.0, 3.0, 2.0])
        assert abs(correlation(x, -x) + 1.0) < 1e-12

    def test_positive_affine_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(100)
        assert abs(correlation(2.5 * x + 7.0, x) - 1.0) < 1e-9
        y = rng.standard_normal(100)
        assert abs(correlation(2.5 * x + 7.0, y) - correlation(x, y)) < 1e-9

    def test_matches_brute_force_pearson_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal(73)
            b = rng.standard_normal(73) + 0.4 * a
            # independent oracle: summation formula evaluated term by term
            ma = sum(a) / len(a)
            mb = sum(b) / len(b)
            num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
            den = (sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b)) ** 0.5
            assert abs(correlation(a, b) - num / den) < 1e-9

    def test_constant_input_is_undefined(self):
        with pytest.raises(ConstantInputError):
            correlation(np.ones(10), np.arange(10.0))

    def test_too_short_rejected(self):
        with pytest.raises(MetricError, match="two samples"):
            correlation([1.0], [2.0])


def fake_metrics(utt, spk, corr_value, rmse_value=1.0):
    return UtteranceMetrics(utt, spk, rmse_mm=np.full(10, rmse_value),
                            corr=np.full(10, corr_value))


SPEAKERS = [Speaker("sA", "L1", "M"), Speaker("sB", "L2", "F")]


class TestAggregate:
    def test_single_utterance_degenerate(self):
        report = aggregate([fake_metrics("u1", "sA", 0.7, 2.0)], SPEAKERS[:1])
        g = report.groups["all"]
        assert np.allclose(g.corr, 0.7)
        assert np.allclose(g.rmse_mm, 2.0)
        assert abs(g.mean_corr - 0.7) < 1e-12

    def test_two_speaker_mean(self):
        report = aggregate([fake_metrics("u1", "sA", 0.8),
                            fake_metrics("u2", "sB", 0.9)], SPEAKERS)
        assert abs(report.groups["all"].mean_corr - 0.85) < 1e-12
        assert abs(report.groups["L1"].mean_corr - 0.8) < 1e-12
        assert abs(report.groups["female"].mean_corr - 0.9) < 1e-12

    def test_speaker_then_group_averaging_order(self):
        # two utterances for sA average first, then combine with sB
        report = aggregate([fake_metrics("u1", "sA", 0.6),
                            fake_metrics("u2", "sA", 0.8),
                            fake_metrics("u3", "sB", 0.9)], SPEAKERS)
        assert abs(report.groups["all"].mean_corr - (0.7 + 0.9) / 2) < 1e-12

    def test_permutation_invariance(self):
        ms = [fake_metrics(f"u{i}", "sA" if i % 2 else "sB", 0.5 + 0.05 * i)
              for i in range(8)]
        a = aggregate(ms, SPEAKERS)
        b = aggregate(list(reversed(ms)), list(reversed(SPEAKERS)))
        for name in a.groups:
            assert np.allclose(a.groups[name].corr, b.groups[name].corr)

    def test_unknown_speaker_rejected(self):
        with pytest.raises(MetricError, match="unknown speaker"):
            aggregate([fake_metrics("u1", "ghost", 0.5)], SPEAKERS)

    def test_mean_row_is_arithmetic_mean_of_channels(self):
        rng = np.random.default_rng(4)
        um = UtteranceMetrics("u", "sA", rmse_mm=rng.uniform(0, 3, 10),
                              corr=rng.uniform(-1, 1, 10))
        report = aggregate([um], SPEAKERS[:1])
        g = report.groups["all"]
        assert abs(g.mean_corr - g.corr.mean()) < 1e-9
        assert abs(g.mean_rmse - g.rmse_mm.mean()) < 1e-9

    def test_uninformative_groupings_omitted(self):
        same = [Speaker("sA", "L1", "M"), Speaker("sC", "L1", "M")]
        report = aggregate([fake_metrics("u1", "sA", 0.5),
                            fake_metrics("u2", "sC", 0.6)], same)
        assert set(report.groups) == {"all"}


class TestScoreUtterance:
    def test_constant_channel_reported_missing_with_diagnostic(self):
        rng = np.random.default_rng(5)
        ref = rng.standard_normal((50, 10))
        pred = ref.copy()
        pred[:, 3] = 2.0  # constant prediction
        diags = []
        um = score_utterance("u9", "sA", pred, ref, diags)
        assert np.isnan(um.corr[3])
        assert not np.isnan(um.corr[0])
        assert any("u9" in d and "VT4" in d for d in diags)

    def test_streams_trimmed_to_common_length(self):
        rng = np.random.default_rng(6)
        ref = rng.standard_normal((50, 10))
        um = score_utterance("u", "sA", ref[:40].copy(), ref)
        assert np.allclose(um.rmse_mm, 0.0)
        assert np.allclose(um.corr, 1.0)


class TestReportOutput:
    def test_csv_and_text_outputs(self, tmp_path):
        report = aggregate([fake_metrics("u1", "sA", 0.8, 1.5),
                            fake_metrics("u2", "sB", 0.9, 0.5)], SPEAKERS)
        write_report_csv(report, tmp_path / "report.csv")
        write_summary_csv(report, tmp_path / "summary.csv")
        text = format_report(report)
        assert "group all" in text and "VT10" in text and "MEAN" in text
        body = (tmp_path / "report.csv").read_text()
        assert body.splitlines()[0].startswith("group,speakers,corr_VT1")
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        # one record per (group, channel, metric) plus MEAN rows and header
        groups = len(report.groups)
        assert len(summary) == 1 + groups * (10 * 2 + 2)

    def test_reference_footer_only_on_request(self):
        report = aggregate([fake_metrics("u1", "sA", 0.8)], SPEAKERS[:1])
        assert "reference means" not in format_report(report)
        footer = format_report(report, reference_footer=True)
        assert "0.83" in footer and "1.25" in footer

    def test_diagnostics_echoed_as_warnings(self):
        report = aggregate([fake_metrics("u1", "sA", 0.8)], SPEAKERS[:1],
                           diagnostics=["u1/VT2: constant sequence"])
        assert "warning: u1/VT2" in format_report(report)
