"""Patient-wise splitting and the few-shot sampling protocol.

All plans are deterministic per seed (portable xorshift stream) and
patient-disjoint: every slice of a patient lands in the same split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficiencyError, SizeError, ValidationError
from .interchange import Manifest, ManifestEntry, load_mask_png
from .rng import Xorshift64Star

Key = tuple[str, str, int]


@dataclass
class SplitPlan:
    train: set[Key]
    val: set[Key]
    test: set[Key]
    seed: int
    ratios: tuple[float, ...]

    def __post_init__(self):
        patients = [ {k[0] for k in s} for s in (self.train, self.val, self.test) ]
        for i in range(3):
            for j in range(i + 1, 3):
                overlap = patients[i] & patients[j]
                if overlap:
                    raise ValidationError(f"patients {sorted(overlap)} appear in two splits")


@dataclass
class FewShotSample:
    train_slices: list[ManifestEntry]
    val_slices: list[ManifestEntry]
    seed: int

    def __post_init__(self):
        keys = [e.key for e in self.train_slices + self.val_slices]
        if len(self.train_slices) != 5 or len(self.val_slices) != 5:
            raise ValidationError("few-shot sample must hold 5 train + 5 val slices")
        if len(set(keys)) != 10:
            raise ValidationError("few-shot sample entries must be distinct")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "train": [e.to_json() for e in self.train_slices],
            "val": [e.to_json() for e in self.val_slices],
        }


def _label_histogram(entries: list[ManifestEntry]) -> dict[str, int]:
    """Slice counts per label; unlabeled slices pool under one pseudo-label
    so the histogram always sums to the slice count."""
    hist: dict[str, int] = {}
    for e in entries:
        label = e.class_label if e.class_label is not None else "__unlabeled__"
        hist[label] = hist.get(label, 0) + 1
    return hist


def patient_split(manifest: Manifest, ratios, seed: int = 0,
                  stratify_key: bool = False) -> SplitPlan:
    """Greedy patient-level split targeting the given slice-count ratios.

    Patients are visited in seeded shuffle order; each goes to the split
    with the largest remaining slice deficit, which keeps every split
    within one patient's slice count of its target. With stratify_key,
    ties within one patient's worth of deficit prefer the split whose
    label histogram is furthest below the global proportions.
    """
    ratios = tuple(float(r) for r in ratios)
    if any(r <= 0 for r in ratios):
        raise ValidationError("ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios sum to {sum(ratios)}, expected 1")
    if len(ratios) > 3:
        raise ValidationError("at most train/val/test supported")

    by_patient: dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries:
        by_patient.setdefault(e.patient_id, []).append(e)
    patients = sorted(by_patient)
    if len(patients) < len(ratios):
        raise SizeError(f"{len(patients)} patients cannot fill {len(ratios)} splits")

    rng = Xorshift64Star(seed)
    rng.shuffle(patients)

    n_total = len(manifest.entries)
    targets = [r * n_total for r in ratios]
    assigned: list[list[ManifestEntry]] = [[] for _ in ratios]
    counts = [0] * len(ratios)
    global_hist = _label_histogram(manifest.entries)
    global_total = sum(global_hist.values()) or 1
    split_hists: list[dict[str, int]] = [{} for _ in ratios]

    def label_error(i: int, extra: dict[str, int]) -> float:
        """L1 distance between the split's label counts and its pro-rata
        share of the global label histogram."""
        cost = 0.0
        for label, total_cnt in global_hist.items():
            have = split_hists[i].get(label, 0) + extra.get(label, 0)
            cost += abs(have - ratios[i] * total_cnt)
        return cost

    for pid in patients:
        entries = by_patient[pid]
        deficits = [targets[i] - counts[i] for i in range(len(ratios))]
        if stratify_key:
            phist = _label_histogram(entries)
            best = min(range(len(ratios)),
                       key=lambda i: (label_error(i, phist) - label_error(i, {}),
                                      -deficits[i], i))
        else:
            best = max(range(len(ratios)), key=lambda i: deficits[i])
        assigned[best].extend(entries)
        counts[best] += len(entries)
        for label, cnt in _label_histogram(entries).items():
            split_hists[best][label] = split_hists[best].get(label, 0) + cnt

    sets = [ {e.key for e in bucket} for bucket in assigned ]
    while len(sets) < 3:
        sets.append(set())
    return SplitPlan(train=sets[0], val=sets[1], test=sets[2], seed=seed, ratios=ratios)


def mask_is_empty(entry: ManifestEntry) -> bool:
    if entry.mask_path is None:
        return True
    return not load_mask_png(entry.mask_path).labels.any()


def fewshot_sample(pool: Manifest, seed: int = 0) -> FewShotSample:
    """5 fine-tuning + 5 validation slices, non-empty masks, spread across
    patients round-robin, without replacement."""
    eligible = [e for e in pool.entries if not mask_is_empty(e)]
    if len(eligible) < 10:
        raise InsufficiencyError(f"only {len(eligible)} slices with non-empty masks, need 10")

    by_patient: dict[str, list[ManifestEntry]] = {}
    for e in eligible:
        by_patient.setdefault(e.patient_id, []).append(e)
    patients = sorted(by_patient)
    rng = Xorshift64Star(seed)
    rng.shuffle(patients)
    for pid in patients:
        rng.shuffle(by_patient[pid])

    picked: list[ManifestEntry] = []
    round_idx = 0
    while len(picked) < 10:
        progressed = False
        for pid in patients:
            bucket = by_patient[pid]
            if round_idx < len(bucket):
                picked.append(bucket[round_idx])
                progressed = True
                if len(picked) == 10:
                    break
        if not progressed:
            break
        round_idx += 1
    return FewShotSample(train_slices=picked[:5], val_slices=picked[5:10], seed=seed)


def repeat_protocol(task, n_repeats: int = 10, seeds=None) -> tuple[list, dict]:
    """Run task(seed) n times and aggregate mean/std per reported metric.

    task returns a flat dict of metric name -> float. With a single repeat
    the std is reported as 0.0 and flagged undefined.
    """
    if n_repeats < 1:
        raise ValidationError("n_repeats must be >= 1")
    if seeds is None:
        seeds = list(range(n_repeats))
    if len(seeds) != n_repeats:
        raise ValidationError("len(seeds) must equal n_repeats")
    reports = [task(seed) for seed in seeds]
    metrics = sorted({k for r in reports for k in r})
    summary = {}
    for m in metrics:
        vals = np.array([r[m] for r in reports if m in r], dtype=np.float64)
        summary[m] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
            "n": int(vals.size),
            "std_defined": bool(vals.size > 1),
        }
    return reports, summary
