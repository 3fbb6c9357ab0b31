"""RMSE and Pearson correlation between predicted and reference trajectories,
aggregated per channel across utterances, speakers, and speaker groups.

Correlation is computed per utterance against utterance-level means, then
averaged utterance -> speaker -> group, in that order. Constant sequences
have no defined correlation; they are reported as missing, excluded from the
means, and flagged in the report diagnostics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .trajectory import CHANNEL_COUNT, CHANNEL_NAMES

# Published reference means for context (not reproducible at desk scale).
REFERENCE_MEAN_CORRELATION = 0.83
REFERENCE_MEAN_RMSE_MM = 1.25


class MetricError(ValueError):
    pass


class ConstantInputError(MetricError):
    """Pearson correlation is undefined for a constant sequence."""


def rmse(pred, ref) -> float:
    """Root of the mean squared elementwise difference."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {ref.shape}")
    if pred.size == 0:
        raise MetricError("empty input")
    return float(np.sqrt(np.mean((pred - ref) ** 2)))


def correlation(pred, ref) -> float:
    """Pearson correlation: covariance over the product of standard deviations."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {ref.shape}")
    if pred.size < 2:
        raise MetricError("need at least two samples")
    dp = pred - pred.mean()
    dr = ref - ref.mean()
    denom = math.sqrt(float(np.sum(dp * dp)) * float(np.sum(dr * dr)))
    if denom == 0.0:
        raise ConstantInputError("correlation undefined for a constant sequence")
    return float(np.sum(dp * dr) / denom)


@dataclass
class UtteranceMetrics:
    utt_id: str
    speaker_id: str
    rmse_mm: np.ndarray           # (10,)
    corr: np.ndarray              # (10,), NaN where undefined


def score_utterance(utt_id, speaker_id, predicted_mm, reference_mm,
                    diagnostics=None) -> UtteranceMetrics:
    """Per-channel metrics for one utterance; streams are trimmed to the
    shorter length (they are frame-synchronous by construction)."""
    L = min(predicted_mm.shape[0], reference_mm.shape[0])
    if L == 0:
        raise MetricError(f"utterance {utt_id!r}: no overlapping frames")
    pred = predicted_mm[:L]
    ref = reference_mm[:L]
    r = np.zeros(CHANNEL_COUNT)
    c = np.zeros(CHANNEL_COUNT)
    for ch in range(CHANNEL_COUNT):
        r[ch] = rmse(pred[:, ch], ref[:, ch])
        try:
            c[ch] = correlation(pred[:, ch], ref[:, ch])
        except ConstantInputError:
            c[ch] = np.nan
            if diagnostics is not None:
                diagnostics.append(
                    f"{utt_id}/{CHANNEL_NAMES[ch]}: constant sequence, "
                    f"correlation undefined")
    return UtteranceMetrics(utt_id, speaker_id, rmse_mm=r, corr=c)


@dataclass
class GroupReport:
    group: str
    speaker_count: int
    rmse_mm: np.ndarray           # (10,) per-channel means, NaN-aware
    corr: np.ndarray              # (10,)

    @property
    def mean_rmse(self):
        return float(np.nanmean(self.rmse_mm))

    @property
    def mean_corr(self):
        return float(np.nanmean(self.corr))


@dataclass
class MetricReport:
    groups: dict = field(default_factory=dict)   # name -> GroupReport
    diagnostics: list = field(default_factory=list)


def _nanmean_rows(rows):
    stacked = np.vstack(rows)
    with np.errstate(invalid="ignore"):
        return np.nanmean(stacked, axis=0)


def aggregate(per_utterance, speakers, diagnostics=None) -> MetricReport:
    """Average utterance -> speaker -> group.

    per_utterance: list of UtteranceMetrics; speakers: list of corpus.Speaker
    (or anything with id/group/gender). Groups: "all", plus L1/L2 and
    male/female when the metadata distinguishes them.
    """
    report = MetricReport(diagnostics=list(diagnostics or []))
    by_speaker = {}
    meta = {s.id: s for s in speakers}
    for um in per_utterance:
        if um.speaker_id not in meta:
            raise MetricError(f"utterance {um.utt_id!r} has unknown speaker "
                              f"{um.speaker_id!r}")
        by_speaker.setdefault(um.speaker_id, []).append(um)

    speaker_rmse = {}
    speaker_corr = {}
    for spk, ums in by_speaker.items():
        speaker_rmse[spk] = _nanmean_rows([um.rmse_mm for um in ums])
        speaker_corr[spk] = _nanmean_rows([um.corr for um in ums])

    def members(pred):
        return [spk for spk in sorted(by_speaker) if pred(meta[spk])]

    selections = [("all", lambda s: True),
                  ("L1", lambda s: s.group == "L1"),
                  ("L2", lambda s: s.group == "L2"),
                  ("male", lambda s: s.gender == "M"),
                  ("female", lambda s: s.gender == "F")]
    for name, pred in selections:
        spks = members(pred)
        if not spks:
            continue
        if name != "all" and len(spks) == len(by_speaker):
            continue  # the grouping does not distinguish anyone
        report.groups[name] = GroupReport(
            group=name, speaker_count=len(spks),
            rmse_mm=_nanmean_rows([speaker_rmse[s] for s in spks]),
            corr=_nanmean_rows([speaker_corr[s] for s in spks]))
    return report


def write_report_csv(report: MetricReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "speakers"]
                        + [f"corr_{n}" for n in CHANNEL_NAMES] + ["corr_mean"]
                        + [f"rmse_{n}" for n in CHANNEL_NAMES] + ["rmse_mean"])
        for name, g in report.groups.items():
            writer.writerow([name, g.speaker_count]
                            + [_fmt(v) for v in g.corr] + [_fmt(g.mean_corr)]
                            + [_fmt(v) for v in g.rmse_mm] + [_fmt(g.mean_rmse)])


def write_summary_csv(report: MetricReport, path):
    """One record per (group, channel, metric) for machine consumption."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "channel", "metric", "value"])
        for name, g in report.groups.items():
            for ch, cname in enumerate(CHANNEL_NAMES):
                writer.writerow([name, cname, "correlation", _fmt(g.corr[ch])])
                writer.writerow([name, cname, "rmse_mm", _fmt(g.rmse_mm[ch])])
            writer.writerow([name, "MEAN", "correlation", _fmt(g.mean_corr)])
            writer.writerow([name, "MEAN", "rmse_mm", _fmt(g.mean_rmse)])


def format_report(report: MetricReport, reference_footer=False) -> str:
    """Aligned plain-text tables, one block per group."""
    lines = []
    for name, g in report.groups.items():
        lines.append(f"group {name} ({g.speaker_count} speaker(s))")
        header = f"  {'channel':<8}{'correlation':>14}{'rmse_mm':>12}"
        lines.append(header)
        for ch, cname in enumerate(CHANNEL_NAMES):
            lines.append(f"  {cname:<8}{_fmt(g.corr[ch]):>14}{_fmt(g.rmse_mm[ch]):>12}")
        lines.append(f"  {'MEAN':<8}{_fmt(g.mean_corr):>14}{_fmt(g.mean_rmse):>12}")
        lines.append("")
    if reference_footer:
        lines.append(f"reference means: correlation {REFERENCE_MEAN_CORRELATION:.2f}, "
                     f"rmse {REFERENCE_MEAN_RMSE_MM:.2f} mm")
    for d in report.diagnostics:
        lines.append(f"warning: {d}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "missing"
    return f"{v:.6f}"
