"""Action classifier training and F1 scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import AdamState, adam_step
from ..losses import classification_loss
from ..model import Classifier, ModelConfig
from ..motiondata.clips import ACTIONS

CLASSIFIER_FRAMES = 100


@dataclass(frozen=True)
class ClassifierConfig:
    widths: tuple = (16, 32, 32)
    kernel: int = 5
    epochs: int = 30
    min_steps: int = 300  # small sets get extra epochs so every condition trains to convergence
    batch_size: int = 32
    alpha: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    n_joints: int = 16
    n_classes: int = len(ACTIONS)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_joints=self.n_joints,
            n_classes=self.n_classes,
            kernel=self.kernel,
            classifier_widths=tuple(self.widths),
        )


@dataclass
class ClassifierReport:
    losses: list  # mean cross-entropy per epoch
    train_accuracy: float
    n_train: int


def _stack(windows):
    x = np.stack([w.frames for w in windows])
    y = np.array([w.label for w in windows])
    return x, y


def train_action_classifier(windows, config: ClassifierConfig | None = None):
    """Fit a small conv classifier with cross-entropy; returns (classifier, report)."""
    config = config or ClassifierConfig()
    windows = list(windows)
    if not windows:
        raise ValueError("empty training set")
    x, y = _stack(windows)
    if len(np.unique(y)) < 2:
        raise ValueError(f"training set holds a single class ({ACTIONS[int(y[0])]}); need at least two")
    rng = np.random.default_rng([config.seed, 77])
    clf = Classifier(config.model_config(), rng)
    params = clf.parameters()
    opt = AdamState.for_params(params, alpha=config.alpha, beta1=config.beta1, beta2=config.beta2)
    targets = np.eye(config.n_classes)[y]
    losses = []
    per_epoch = -(-len(x) // config.batch_size)
    for _ in range(max(config.epochs, -(-config.min_steps // per_epoch))):
        order = rng.permutation(len(x))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss = classification_loss(clf(x[idx]), targets[idx])
            adam_step(params, dc.gradients(loss, params), opt)
            total += loss.item() * len(idx)
        losses.append(total / len(x))
    acc = float((predict(clf, x) == y).mean())
    return clf, ClassifierReport(losses, acc, len(x))


def predict(classifier: Classifier, frames, batch_size: int = 64) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    out = []
    with dc.no_grad():
        for lo in range(0, len(frames), batch_size):
            out.append(np.argmax(classifier.logits(frames[lo : lo + batch_size]).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def f1_scores(y_true, y_pred, n_classes: int = len(ACTIONS)):
    """Per-class F1 and support.  A class never true nor predicted scores F1 = 0."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    f1 = np.zeros(n_classes)
    support = np.zeros(n_classes, dtype=int)
    for c in range(n_classes):
        tp = int(np.sum((y_true == c) & (y_pred == c)))
        fp = int(np.sum((y_true != c) & (y_pred == c)))
        fn = int(np.sum((y_true == c) & (y_pred != c)))
        support[c] = tp + fn
        denom = 2 * tp + fp + fn
        f1[c] = 2 * tp / denom if denom else 0.0
    return f1, support


def macro_f1(f1, support) -> float:
    """Mean F1 over classes present in the test set."""
    f1, support = np.asarray(f1), np.asarray(support)
    present = support > 0
    return float(f1[present].mean()) if present.any() else 0.0
