"""Dataset construction and evaluation statistics on the packaged protocols.

Patients eligible for a metastatic-required trial are ineligible for every
metastatic-excluded trial by definition, and vice versa.  Starting from
per-trial label marginals, cross-trial augmentation multiplies the scarce
negative labels, a stratified split keeps label balance per trial, and the
metrics come with Wilson score intervals.
"""

import itertools

from trialscreen.eligibility import Determination
from trialscreen.evaluation import (ConfusionMatrix, LabeledPair,
                                    augment_cross_trial, metrics_summary,
                                    stratified_split, two_proportion_test,
                                    wilson_interval)
from trialscreen.protocol import load_packaged_protocols

ELIGIBLE_PER_TRIAL = {"16-323": 387, "18-486": 56, "19-300": 167,
                      "19-410": 29, "21-283": 27, "22-259": 30}
NEGATIVE_PER_TRIAL = {"16-323": 13, "18-486": 5, "19-300": 5,
                      "19-410": 3, "21-283": 6, "22-259": 3}


def build_pairs():
    seq = itertools.count()
    pairs = []
    for trial_id, n in ELIGIBLE_PER_TRIAL.items():
        pairs += [LabeledPair(patient_id=f"P{next(seq):05d}", trial_id=trial_id,
                              label=Determination.POTENTIALLY_ELIGIBLE,
                              label_source="Original") for _ in range(n)]
    for trial_id, n in NEGATIVE_PER_TRIAL.items():
        pairs += [LabeledPair(patient_id=f"P{next(seq):05d}", trial_id=trial_id,
                              label=Determination.NOT_ELIGIBLE,
                              label_source="Original") for _ in range(n)]
    return pairs


def main():
    trials = load_packaged_protocols()
    print("protocol fixture:")
    for t in trials:
        print(f"  {t.id}  {t.nct_id}  metastatic_group={t.metastatic_group.value:8s}  "
              f"{len(t.criteria)} criteria")

    pairs = build_pairs()
    augmented = augment_cross_trial(pairs, trials)
    added = [p for p in augmented if p.label_source == "CrossTrial"]
    print()
    print(f"labels: {len(pairs)} original -> {len(augmented)} after "
          f"cross-trial augmentation (+{len(added)} negatives)")
    per_trial = {}
    for p in added:
        per_trial[p.trial_id] = per_trial.get(p.trial_id, 0) + 1
    for trial_id in sorted(per_trial):
        print(f"  {trial_id}: +{per_trial[trial_id]} cross-trial negatives")

    train, test = stratified_split(augmented, 0.5, seed=11)
    print()
    print(f"stratified 50/50 split: {len(train)} train / {len(test)} test")
    test_pos = sum(1 for p in test
                   if p.label is Determination.POTENTIALLY_ELIGIBLE)
    print(f"  test positives {test_pos}, test negatives {len(test) - test_pos}")

    cm = ConfusionMatrix(tp=340, fn=8, fp=6, tn=793)
    summary = metrics_summary(cm)
    print()
    print(f"illustrative confusion matrix: tp={cm.tp} fn={cm.fn} "
          f"fp={cm.fp} tn={cm.tn}")
    for name, est in (("accuracy", summary.accuracy),
                      ("sensitivity", summary.sensitivity),
                      ("specificity", summary.specificity),
                      ("ppv", summary.ppv),
                      ("npv", summary.npv)):
        print(f"  {name:12s} {est.point:.4f}  "
              f"95% CI [{est.lo:.4f}, {est.hi:.4f}]")

    lo, hi = wilson_interval(0, 25)
    print()
    print(f"Wilson interval stays honest at the boundary: "
          f"0/25 -> [{lo:.4f}, {hi:.4f}]")
    p = two_proportion_test(340, 348, 320, 348)
    print(f"two-proportion test, 340/348 vs 320/348: p = {p:.5f}")


if __name__ == "__main__":
    main()
