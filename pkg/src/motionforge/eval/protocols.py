"""LOSO and stratified K-fold protocols and the fractional-data augmentation experiment."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from ..motiondata.clips import ACTIONS, MotionWindow
from ..synthesis import rollout_batch
from .classify import CLASSIFIER_FRAMES, ClassifierConfig, f1_scores, macro_f1, predict, train_action_classifier

log = logging.getLogger(__name__)

CONDITIONS = ("real", "real+synthetic", "synthetic-only")
SEED_FRAMES = 25
ROLLOUT_ITERATIONS = 4
# relative macro-F1 gains reported for the real dataset, kept as reference points only
REFERENCE_GAINS = {0.1: 0.27, 0.2: 0.09}


@dataclass
class FoldReport:
    fold: int
    held_out: tuple
    condition: str
    per_class_f1: list
    macro_f1: float
    support: list
    n_train_real: int
    n_train_synthetic: int
    n_test: int
    train_ids: list = field(default_factory=list, repr=False)
    test_ids: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("train_ids")
        d.pop("test_ids")
        d["held_out"] = ";".join(map(str, self.held_out))
        return d


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MOTIONFORGE_THREADS", "1")))
    except ValueError:
        raise ValueError("MOTIONFORGE_THREADS must be an integer") from None


def _labels(windows) -> np.ndarray:
    return np.array([w.label for w in windows])


def window_key(window: MotionWindow) -> str:
    """Stable identity of a source window: subject, action and start frame."""
    return f"{window.subject}/{window.action}/{window.source}"


def classifier_view(window: MotionWindow) -> MotionWindow:
    """The last 100 frames, matching what a seed-dropped rollout yields."""
    return replace(window, frames=window.frames[-CLASSIFIER_FRAMES:])


def stratified_subsample(labels, fraction: float, rng: np.random.Generator) -> np.ndarray | None:
    """Indices keeping round(fraction * n_c) of each class c; None if a class would be empty."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    labels = np.asarray(labels)
    keep = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n = int(np.floor(fraction * len(idx) + 0.5))
        if n < 1:
            return None
        keep.append(np.sort(rng.choice(idx, size=n, replace=False)))
    return np.sort(np.concatenate(keep))


def synthesize_windows(generator, windows, batch_size: int = 64) -> list[MotionWindow]:
    """One generated window per input: seeded by its first 25 frames, 4 iterations, seed dropped."""
    out = []
    for lo in range(0, len(windows), batch_size):
        chunk = windows[lo : lo + batch_size]
        seeds = np.stack([w.frames[:SEED_FRAMES] for w in chunk])
        y = np.eye(len(ACTIONS))[_labels(chunk)]
        frames = rollout_batch(generator, seeds, y, ROLLOUT_ITERATIONS, drop_seed=True)
        for w, f in zip(chunk, frames):
            out.append(MotionWindow(f, w.fps, w.action, w.subject, source=-2))
    return out


def _resolve_generator(generator, held_out):
    return generator(held_out) if callable(generator) and not hasattr(generator, "parameters") else generator


def _run_fold(fold, held_out, train, test, condition, generator, fraction, clf_config, seed):
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    rng = np.random.default_rng([seed, fold])
    keep = stratified_subsample(_labels(train), fraction, rng)
    if keep is None:
        warnings.warn(f"fold {fold}: fraction {fraction} leaves a class without samples; skipped")
        return None
    real = [train[i] for i in keep]
    synth = []
    if condition != "real":
        gen = _resolve_generator(generator, held_out)
        if gen is None:
            raise ValueError(f"condition {condition!r} needs a generator")
        synth = synthesize_windows(gen, real)
    pool = [] if condition == "synthetic-only" else [classifier_view(w) for w in real]
    pool += synth
    cfg = replace(clf_config or ClassifierConfig(), seed=int(seed) * 1000 + fold)
    clf, _ = train_action_classifier(pool, cfg)
    test_frames = np.stack([classifier_view(w).frames for w in test])
    y_true = _labels(test)
    f1, support = f1_scores(y_true, predict(clf, test_frames), cfg.n_classes)
    return FoldReport(
        fold,
        tuple(held_out),
        condition,
        f1.tolist(),
        macro_f1(f1, support),
        support.tolist(),
        len(real),
        len(synth),
        len(test),
        train_ids=[window_key(w) for w in real],
        test_ids=[window_key(w) for w in test],
    )


def _run_folds(jobs) -> list[FoldReport]:
    n = thread_count()
    if n == 1:
        results = [_run_fold(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(lambda j: _run_fold(*j), jobs))
    return [r for r in results if r is not None]


def loso_splits(windows) -> list[tuple[str, list[int], list[int]]]:
    """(held-out subject, train indices, test indices) per subject, in sorted subject order."""
    subjects = sorted({w.subject for w in windows})
    if len(subjects) < 2:
        raise ValueError(f"LOSO needs at least 2 subjects, got {len(subjects)}")
    out = []
    for s in subjects:
        test = [i for i, w in enumerate(windows) if w.subject == s]
        train = [i for i, w in enumerate(windows) if w.subject != s]
        out.append((s, train, test))
    return out


def run_loso(
    windows,
    generator=None,
    fraction: float = 1.0,
    condition: str = "real",
    clf_config: ClassifierConfig | None = None,
    seed: int = 0,
) -> list[FoldReport]:
    """One fold per subject.

    ``generator`` is a Generator or a callable mapping the held-out subject
    to a generator trained without that subject.
    """
    windows = list(windows)
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    jobs = []
    for fold, (s, tr, te) in enumerate(loso_splits(windows)):
        jobs.append(
            (fold, (s,), [windows[i] for i in tr], [windows[i] for i in te], condition, generator, fraction, clf_config, seed)
        )
    return _run_folds(jobs)


def stratified_kfold_splits(labels, k: int = 10, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Test-index arrays for K folds; each class is dealt round-robin after shuffling.

    The dealing start rotates with the running class offset so fold sizes
    differ by at most one.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("K must be >= 2")
    classes, counts = np.unique(labels, return_counts=True)
    if k > counts.min():
        raise ValueError(f"K={k} exceeds the smallest class count {counts.min()}")
    rng = rng or np.random.default_rng(0)
    folds = [[] for _ in range(k)]
    start = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(labels == c))
        for n, i in enumerate(idx):
            folds[(start + n) % k].append(i)
        start = (start + len(idx)) % k
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def run_stratified_kfold(
    windows,
    generator=None,
    k: int = 10,
    condition: str = "real",
    fraction: float = 1.0,
    clf_config: ClassifierConfig | None = None,
    seed: int = 0,
) -> list[FoldReport]:
    return _kfold_with_split_seed(windows, generator, k, condition, fraction, clf_config, seed, seed)


def _kfold_with_split_seed(windows, generator, k, condition, fraction, clf_config, split_seed, seed):
    windows = list(windows)
    splits = stratified_kfold_splits(_labels(windows), k, np.random.default_rng([split_seed, 10]))
    jobs = []
    for fold, test_idx in enumerate(splits):
        test_set = set(test_idx.tolist())
        train = [w for i, w in enumerate(windows) if i not in test_set]
        test = [windows[i] for i in test_idx]
        held = tuple(sorted({w.subject for w in test}))
        jobs.append((fold, held, train, test, condition, generator, fraction, clf_config, seed))
    return _run_folds(jobs)


def sign_test(deltas) -> dict:
    """One-sided paired sign test that positive deltas dominate; ties are dropped."""
    deltas = np.asarray(deltas, dtype=float)
    wins, losses = int(np.sum(deltas > 0)), int(np.sum(deltas < 0))
    ties = len(deltas) - wins - losses
    n = wins + losses
    p = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return {"wins": wins, "losses": losses, "ties": ties, "p_value": float(p)}


def augmentation_experiment(
    windows,
    generator,
    fractions=(0.1, 0.2),
    protocol: str = "loso",
    k: int = 10,
    clf_config: ClassifierConfig | None = None,
    seed: int = 0,
    repeats: int = 1,
) -> dict:
    """Real-only vs real+synthetic F1, paired per fold (both use the same real subset).

    With ``repeats`` > 1 each fold is rerun with seeds ``seed .. seed + repeats - 1``
    (fresh subsample and classifier init) and its macro-F1 averaged before pairing.
    """
    if protocol not in ("loso", "kfold"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    report = {"protocol": protocol, "reference_gains": {str(f): g for f, g in REFERENCE_GAINS.items()}, "fractions": {}}
    for frac in fractions:
        runs = {"real": [], "real+synthetic": []}
        for r in range(repeats):
            for cond in runs:
                if protocol == "loso":
                    runs[cond] += run_loso(windows, generator, frac, cond, clf_config, seed + r)
                else:
                    # the fold split stays fixed across repeats
                    runs[cond] += _kfold_with_split_seed(windows, generator, k, cond, frac, clf_config, seed, seed + r)
        per_fold = {c: {} for c in runs}
        for c, reps in runs.items():
            for x in reps:
                per_fold[c].setdefault(x.fold, []).append(x)
        folds = []
        for fold, reals in sorted(per_fold["real"].items()):
            augs = per_fold["real+synthetic"].get(fold)
            if augs is None or len(augs) != len(reals):
                continue
            f_real = float(np.mean([x.macro_f1 for x in reals]))
            f_aug = float(np.mean([x.macro_f1 for x in augs]))
            folds.append(
                {
                    "fold": fold,
                    "held_out": list(reals[0].held_out),
                    "f1_real": f_real,
                    "f1_augmented": f_aug,
                    "delta": f_aug - f_real,
                }
            )
        deltas = [f["delta"] for f in folds]
        mean_real = float(np.mean([f["f1_real"] for f in folds])) if folds else float("nan")
        mean_aug = float(np.mean([f["f1_augmented"] for f in folds])) if folds else float("nan")
        report["fractions"][str(frac)] = {
            "folds": folds,
            "summary": {
                "n_folds": len(folds),
                "mean_f1_real": mean_real,
                "mean_f1_augmented": mean_aug,
                "mean_delta": float(np.mean(deltas)) if folds else float("nan"),
                "relative_gain": (mean_aug - mean_real) / mean_real if folds and mean_real > 0 else float("nan"),
                "sign_test": sign_test(deltas),
            },
            "reports": {c: [x.row() for x in v] for c, v in runs.items()},
        }
    return report
