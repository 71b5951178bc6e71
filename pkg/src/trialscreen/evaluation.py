"""Dataset construction and evaluation statistics.

Covers cross-trial negative augmentation (mutually exclusive metastatic
groups), stratified splitting and sampling, confusion metrics with Wilson
score intervals, a pooled two-proportion z-test, matched-case subsetting,
and the disqualifying-count histogram used to justify triage thresholds.
Positive class is Eligible throughout: sensitivity is the eligible-patient
detection rate.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from datetime import date
from statistics import NormalDist
from typing import Iterable, Mapping, Optional, Sequence

from .eligibility import Determination, EligibilityReport
from .errors import EvalSampleError, UndefinedIntervalError, ValidationError
from .protocol import MetastaticGroup, Trial

PairKey = tuple[str, str]  # (trial_id, patient_id)


@dataclass(frozen=True)
class LabeledPair:
    patient_id: str
    trial_id: str
    label: Determination
    label_source: str = "Original"  # "Original" or "CrossTrial"
    determination_date: Optional[date] = None

    def __post_init__(self) -> None:
        if self.label_source not in ("Original", "CrossTrial"):
            raise ValidationError(f"unknown label source {self.label_source!r}")

    @property
    def key(self) -> PairKey:
        return (self.trial_id, self.patient_id)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValidationError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass(frozen=True)
class Estimate:
    point: float
    lo: float
    hi: float


@dataclass(frozen=True)
class MetricsSummary:
    accuracy: Estimate
    sensitivity: Estimate
    specificity: Estimate
    ppv: Estimate
    npv: Estimate


# ---------------------------------------------------------------------------
# Dataset construction

def augment_cross_trial(pairs: Sequence[LabeledPair],
                        trials: Sequence[Trial]) -> list[LabeledPair]:
    """Derive extra negatives from mutually exclusive metastatic groups.

    A patient eligible for a metastatic-required trial cannot also be
    eligible for any metastatic-excluded trial, and vice versa; each such
    implication becomes a CrossTrial NotEligible label unless the (patient,
    trial) pair already carries a label.  Original pairs pass through.
    """
    by_group: dict[MetastaticGroup, list[Trial]] = {
        MetastaticGroup.REQUIRED: [], MetastaticGroup.EXCLUDED: []}
    trial_ids = set()
    for trial in trials:
        if trial.id in trial_ids:
            raise ValidationError(f"duplicate trial {trial.id!r}")
        trial_ids.add(trial.id)
        if trial.metastatic_group in by_group:
            by_group[trial.metastatic_group].append(trial)
    opposite = {
        MetastaticGroup.REQUIRED: by_group[MetastaticGroup.EXCLUDED],
        MetastaticGroup.EXCLUDED: by_group[MetastaticGroup.REQUIRED],
    }
    group_by_trial = {t.id: t.metastatic_group for t in trials}

    labeled: set[PairKey] = set()
    for pair in pairs:
        if pair.key in labeled:
            raise ValidationError(f"duplicate label for {pair.key}")
        labeled.add(pair.key)

    out = list(pairs)
    for pair in pairs:
        if pair.label is not Determination.POTENTIALLY_ELIGIBLE:
            continue
        group = group_by_trial.get(pair.trial_id)
        if group not in opposite:
            continue
        for target in sorted(opposite[group], key=lambda t: t.id):
            key = (target.id, pair.patient_id)
            if key in labeled:
                continue
            labeled.add(key)
            out.append(LabeledPair(patient_id=pair.patient_id, trial_id=target.id,
                                   label=Determination.NOT_ELIGIBLE,
                                   label_source="CrossTrial",
                                   determination_date=pair.determination_date))
    return out


def _stratum_rng(seed: int | str, trial_id: str, label: str) -> random.Random:
    return random.Random(f"{seed}:{trial_id}:{label}")


def _strata(pairs: Iterable[LabeledPair]) -> dict[tuple[str, str], list[LabeledPair]]:
    strata: dict[tuple[str, str], list[LabeledPair]] = {}
    for pair in pairs:
        strata.setdefault((pair.trial_id, pair.label.value), []).append(pair)
    for members in strata.values():
        members.sort(key=lambda p: p.key)
    return strata


def stratified_split(pairs: Sequence[LabeledPair], fraction: float,
                     seed: int | str) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Split per (trial, label) stratum at the given train fraction.

    Within each stratum the test side gets floor((1 - fraction) * n) pairs,
    so odd strata tip toward train and singletons always train.  The split
    depends only on the seed and pair identities, not input order.
    """
    if not 0 < fraction < 1:
        raise ValidationError("fraction must be strictly between 0 and 1")
    train: list[LabeledPair] = []
    test: list[LabeledPair] = []
    for (trial_id, label), members in sorted(_strata(pairs).items()):
        rng = _stratum_rng(seed, trial_id, label)
        shuffled = members[:]
        rng.shuffle(shuffled)
        n_test = math.floor(len(shuffled) * (1.0 - fraction))
        test.extend(shuffled[:n_test])
        train.extend(shuffled[n_test:])
    train.sort(key=lambda p: p.key)
    test.sort(key=lambda p: p.key)
    return train, test


def stratified_eval_sample(pairs: Sequence[LabeledPair], positives_per_trial: int,
                           negatives_per_trial: int, seed: int | str) -> list[LabeledPair]:
    """Fixed-size per-trial sample for the manual-review arm.

    Negatives with Original labels are preferred; CrossTrial negatives only
    fill the remainder.  Any trial that cannot meet its quota fails the
    whole sample with the deficient strata listed.
    """
    if positives_per_trial < 0 or negatives_per_trial < 0:
        raise ValidationError("per-trial counts must be >= 0")
    by_trial: dict[str, list[LabeledPair]] = {}
    for pair in pairs:
        by_trial.setdefault(pair.trial_id, []).append(pair)

    sample: list[LabeledPair] = []
    deficient: list[str] = []
    for trial_id in sorted(by_trial):
        members = sorted(by_trial[trial_id], key=lambda p: p.key)
        positives = [p for p in members
                     if p.label is Determination.POTENTIALLY_ELIGIBLE]
        orig_neg = [p for p in members if p.label is Determination.NOT_ELIGIBLE
                    and p.label_source == "Original"]
        cross_neg = [p for p in members if p.label is Determination.NOT_ELIGIBLE
                     and p.label_source == "CrossTrial"]
        if len(positives) < positives_per_trial:
            deficient.append(f"{trial_id}: {len(positives)} positives "
                             f"< {positives_per_trial}")
            continue
        if len(orig_neg) + len(cross_neg) < negatives_per_trial:
            deficient.append(f"{trial_id}: {len(orig_neg) + len(cross_neg)} "
                             f"negatives < {negatives_per_trial}")
            continue
        rng = _stratum_rng(seed, trial_id, "sample")
        pos_pool = positives[:]
        rng.shuffle(pos_pool)
        sample.extend(pos_pool[:positives_per_trial])
        n_orig = min(negatives_per_trial, len(orig_neg))
        orig_pool = orig_neg[:]
        rng.shuffle(orig_pool)
        sample.extend(orig_pool[:n_orig])
        if n_orig < negatives_per_trial:
            cross_pool = cross_neg[:]
            rng.shuffle(cross_pool)
            sample.extend(cross_pool[:negatives_per_trial - n_orig])
    if deficient:
        raise EvalSampleError(deficient)
    sample.sort(key=lambda p: p.key)
    return sample


# ---------------------------------------------------------------------------
# Metrics

def confusion(predictions: Mapping[PairKey, Determination],
              labels: Sequence[LabeledPair]) -> ConfusionMatrix:
    label_keys = {p.key for p in labels}
    if label_keys != set(predictions):
        raise ValidationError(
            f"predictions cover {len(predictions)} pairs, labels cover "
            f"{len(label_keys)}; the sets must match")
    tp = fn = fp = tn = 0
    for pair in labels:
        predicted_eligible = (predictions[pair.key]
                              is Determination.POTENTIALLY_ELIGIBLE)
        actually_eligible = pair.label is Determination.POTENTIALLY_ELIGIBLE
        if actually_eligible and predicted_eligible:
            tp += 1
        elif actually_eligible:
            fn += 1
        elif predicted_eligible:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fn=fn, fp=fp, tn=tn)


def wilson_interval(successes: int, n: int,
                    confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Boundary cases are exact: zero successes pin the lower bound to 0.0 and
    all successes pin the upper bound to 1.0.
    """
    if n < 1:
        raise UndefinedIntervalError("interval undefined for n = 0")
    if not 0 <= successes <= n:
        raise ValidationError("successes must lie in [0, n]")
    if not 0 < confidence < 1:
        raise ValidationError("confidence must be strictly between 0 and 1")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def two_proportion_test(k1: int, n1: int, k2: int, n2: int) -> float:
    """Two-tailed pooled z-test for equality of two proportions."""
    if n1 < 1 or n2 < 1:
        raise ValidationError("both sample sizes must be >= 1")
    if not 0 <= k1 <= n1 or not 0 <= k2 <= n2:
        raise ValidationError("successes must lie in [0, n]")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        if p1 == p2:
            return 1.0
        raise ValidationError("degenerate pooled proportion with unequal rates")
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (p1 - p2) / se
    return math.erfc(abs(z) / math.sqrt(2.0))


def _estimate(successes: int, n: int, confidence: float) -> Estimate:
    lo, hi = wilson_interval(successes, n, confidence)
    return Estimate(point=successes / n, lo=lo, hi=hi)


def metrics_summary(cm: ConfusionMatrix,
                    confidence: float = 0.95) -> MetricsSummary:
    """Point estimates with Wilson intervals; degenerate denominators raise."""
    return MetricsSummary(
        accuracy=_estimate(cm.tp + cm.tn, cm.total, confidence),
        sensitivity=_estimate(cm.tp, cm.tp + cm.fn, confidence),
        specificity=_estimate(cm.tn, cm.tn + cm.fp, confidence),
        ppv=_estimate(cm.tp, cm.tp + cm.fp, confidence),
        npv=_estimate(cm.tn, cm.tn + cm.fn, confidence))


def matched_subset(arm_a: Sequence[LabeledPair], arm_b: Sequence[LabeledPair],
                   seed: int | str) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Downsample both arms to the stratum-wise minimum.

    After matching, both subsets have identical per-(trial, label) counts,
    hence equal size and equal label prevalence.
    """
    strata_a = _strata(arm_a)
    strata_b = _strata(arm_b)
    common = sorted(set(strata_a) & set(strata_b))
    if not common:
        raise ValidationError("the two arms share no (trial, label) strata")
    subset_a: list[LabeledPair] = []
    subset_b: list[LabeledPair] = []
    for key in common:
        m = min(len(strata_a[key]), len(strata_b[key]))
        for strata, subset, arm_tag in ((strata_a, subset_a, "a"),
                                        (strata_b, subset_b, "b")):
            rng = _stratum_rng(seed, f"{key[0]}:{arm_tag}", key[1])
            pool = strata[key][:]
            rng.shuffle(pool)
            subset.extend(pool[:m])
    subset_a.sort(key=lambda p: p.key)
    subset_b.sort(key=lambda p: p.key)
    return subset_a, subset_b


def disqualifying_histogram(reports: Sequence[EligibilityReport],
                            labels: Sequence[LabeledPair]) -> dict[int, dict[str, int]]:
    """Per-count {tn, fn} tallies over predicted negatives.

    A predicted negative whose true label is Eligible is a false negative;
    the histogram shows where in the count distribution those live.
    """
    label_by_key = {p.key: p.label for p in labels}
    histogram: dict[int, dict[str, int]] = {}
    for report in reports:
        if report.determination is not Determination.NOT_ELIGIBLE:
            continue
        key = (report.trial_id, report.patient_id)
        if key not in label_by_key:
            raise ValidationError(f"no label for predicted negative {key}")
        bin_ = histogram.setdefault(report.disqualifying_count, {"tn": 0, "fn": 0})
        if label_by_key[key] is Determination.POTENTIALLY_ELIGIBLE:
            bin_["fn"] += 1
        else:
            bin_["tn"] += 1
    return histogram
