"""Adversarial training: critic, classifier and autoregressive generator phases."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import diffcore as dc
from .diffcore import AdamState, Tensor, adam_step
from .diffcore import tensor as T
from .losses import (
    blend_loss,
    classification_loss,
    critic_loss,
    generator_loss,
    gradient_penalty,
    skeleton_loss,
)
from .model import ModelConfig, Networks, save_checkpoint
from .motiondata.clips import ACTIONS, MotionWindow
from .motiondata.preprocess import NormalizationStats
from .motiondata.skeleton import SkeletonSpec

log = logging.getLogger(__name__)

CONFIG_KEYS = (
    "lambda_gp", "n_critic", "n_generator", "alpha", "beta1", "beta2",
    "batch_size", "epochs", "seed", "window_T", "classes",
)  # fmt: skip


@dataclass
class TrainConfig:
    lambda_gp: float = 10.0
    n_critic: int = 6
    n_generator: int = 2
    alpha: float = 0.005
    beta1: float = 0.0
    beta2: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    window_T: int = 25
    classes: int = len(ACTIONS)

    def __post_init__(self):
        for k in ("n_critic", "n_generator", "batch_size", "window_T", "classes"):
            if int(getattr(self, k)) < 1:
                raise ValueError(f"{k} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lambda_gp < 0:
            raise ValueError("lambda_gp must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    def adam(self) -> dict:
        return {"alpha": self.alpha, "beta1": self.beta1, "beta2": self.beta2}


def read_config(path) -> TrainConfig:
    """Parse a flat ``key = value`` file holding exactly the TrainConfig keys."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {k!r}")
        values[k] = v
    for k in CONFIG_KEYS:
        if k not in values:
            raise ValueError(f"{path}: missing config key {k!r}")
    kinds = {f.name: f.type for f in fields(TrainConfig)}
    parsed = {k: (int(v) if kinds[k] in ("int", int) else float(v)) for k, v in values.items()}
    return TrainConfig(**parsed)


def write_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text("".join(f"{k} = {getattr(cfg, k)!r}\n" for k in CONFIG_KEYS), encoding="utf-8")


def checksum(params) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


class Batch(NamedTuple):
    prior: np.ndarray  # (m, T, J, 3)
    future: np.ndarray  # (m, T, J, 3)
    control: np.ndarray  # (m, Y)
    real: bool = True


class PairSampler:
    """Draws (prior, future, control) batches from normalized fixed-length windows.

    Each sample picks an action uniformly, a window of that action, and a
    random offset holding two consecutive T-frame spans.
    """

    def __init__(self, windows: list[MotionWindow], window_T: int, n_classes: int = len(ACTIONS)):
        if not windows:
            raise ValueError("no training windows")
        self.frames = np.stack([w.frames for w in windows])
        self.labels = np.array([w.label for w in windows])
        self.subjects = [w.subject for w in windows]
        self.T = window_T
        self.n_classes = n_classes
        if self.frames.shape[1] < 2 * window_T:
            raise ValueError(f"windows of {self.frames.shape[1]} frames cannot hold two {window_T}-frame spans")
        self.by_class = [np.flatnonzero(self.labels == c) for c in range(n_classes)]
        self.present = [c for c in range(n_classes) if len(self.by_class[c])]

    def __len__(self) -> int:
        return len(self.frames)

    def sample(self, rng: np.random.Generator, m: int):
        cls = np.asarray(self.present)[rng.integers(0, len(self.present), size=m)]
        idx = np.array([self.by_class[c][rng.integers(0, len(self.by_class[c]))] for c in cls])
        span = self.frames.shape[1] - 2 * self.T
        off = rng.integers(0, span + 1, size=m)
        t = off[:, None] + np.arange(2 * self.T)[None, :]
        motion = self.frames[idx[:, None], t]
        y = np.eye(self.n_classes)[cls]
        return Batch(motion[:, : self.T], motion[:, self.T :], y, True)


@dataclass
class Ablation:
    use_blend: bool = True
    use_skeleton: bool = True


@dataclass
class TrainerState:
    nets: Networks
    opt_generator: AdamState
    opt_critic: AdamState
    opt_classifier: AdamState
    epoch: int = 0
    step: int = 0
    history: list = field(default_factory=list)  # (step, phase, component, value)


class NonFiniteLoss(FloatingPointError):
    pass


class Trainer:
    """Runs the three update phases over one :class:`TrainerState`.

    ``counters`` and ``events`` are instrumentation: generator invocations per
    phase, generated samples handed to the classifier, and the phase order.
    """

    def __init__(
        self,
        nets: Networks,
        skeleton: SkeletonSpec,
        config: TrainConfig,
        ablation: Ablation | None = None,
        stats: NormalizationStats | None = None,
    ):
        self.cfg = config
        self.skeleton = skeleton
        self.ablation = ablation or Ablation()
        self.stats = stats
        hyper = config.adam()
        self.state = TrainerState(
            nets,
            AdamState.for_params(nets.generator.parameters(), **hyper),
            AdamState.for_params(nets.critic.parameters(), **hyper),
            AdamState.for_params(nets.classifier.parameters(), **hyper),
        )
        self.rng = np.random.default_rng([config.seed, 2024])
        self.counters = {"generator_calls": {}, "classifier_generated_samples": 0}
        self.events: list[str] = []
        self._phase = "idle"

    @property
    def nets(self) -> Networks:
        return self.state.nets

    def _generate(self, seed, y):
        calls = self.counters["generator_calls"]
        calls[self._phase] = calls.get(self._phase, 0) + 1
        return self.nets.generator(seed, y)

    def _metric(self, frames):
        """Normalized frames -> meters (differentiable); identity without stats."""
        if self.stats is None:
            return frames
        j = self.nets.cfg.n_joints
        std = Tensor(self.stats.std.reshape(j, 3))
        mean = Tensor(self.stats.mean.reshape(j, 3))
        return frames * std + mean

    def _record(self, phase: str, values: dict):
        for k, v in values.items():
            self.state.history.append((self.state.step, phase, k, float(v)))

    def _check(self, phase, loss: Tensor, values: dict):
        if not np.isfinite(loss.data).all():
            self._record(phase, {"nonfinite": 1.0})
            raise NonFiniteLoss(f"{phase} loss non-finite at step {self.state.step}: {values}")

    # -- phases ---------------------------------------------------------------

    def critic_update(self, batch, rng=None) -> dict:
        rng = rng if rng is not None else self.rng
        self._phase = "critic"
        self.events.append("critic")
        x, z, y = batch[:3]
        critic = self.nets.critic
        with dc.no_grad():
            z_fake = self._generate(x, y).data
        real = np.concatenate([x, z], axis=1)
        fake = np.concatenate([x, z_fake], axis=1)
        eps = rng.uniform(0.0, 1.0, size=len(x))
        gp, norms = gradient_penalty(lambda m: critic(m, y), real, fake, eps=eps, return_norms=True)
        s_real = critic(real, y)
        s_fake = critic(fake, y)
        loss = critic_loss(s_real, s_fake, gp, self.cfg.lambda_gp)
        values = {
            "critic": float(s_fake.data.mean() - s_real.data.mean()),
            "gp": gp.item(),
            "gp_norm": float(norms.data.mean()),
            "total": loss.item(),
        }
        self._check("critic", loss, values)
        params = critic.parameters()
        adam_step(params, dc.gradients(loss, params), self.state.opt_critic)
        self._record("critic", values)
        self.last_eps = eps
        return values

    def classifier_update(self, batch) -> dict:
        """One step on real futures only."""
        self._phase = "classifier"
        self.events.append("classifier")
        _, z, y = batch[:3]
        if not getattr(batch, "real", False):
            self.counters["classifier_generated_samples"] += len(z)
            raise ValueError("classifier updates accept real batches only")
        clf = self.nets.classifier
        loss = classification_loss(clf(z), y)
        values = {"class": loss.item()}
        self._check("classifier", loss, values)
        params = clf.parameters()
        adam_step(params, dc.gradients(loss, params), self.state.opt_classifier)
        self._record("classifier", values)
        return values

    def generator_update(self, batch) -> list[dict]:
        """Initialize from the real prior, then feed each output back as the next seed."""
        self._phase = "generator"
        self.events.append("generator")
        x, _, y = batch[:3]
        gen, critic, clf = self.nets.generator, self.nets.critic, self.nets.classifier
        reference = x[:, 0]  # first pose of the original real prior, fixed across iterations
        with dc.no_grad():
            seed = self._generate(x, y).data
        params = gen.parameters()
        out = []
        for k in range(self.cfg.n_generator):
            fake = self._generate(seed, y)
            skel = None
            if self.ablation.use_skeleton:
                skel = skeleton_loss(self._metric(Tensor(reference)), self._metric(fake), self.skeleton)
            blend = blend_loss(seed[:, -1], fake[:, 0]) if self.ablation.use_blend else None
            cls = classification_loss(clf(fake), y)
            scores = critic(T.concat([Tensor(seed), fake], axis=1), y)
            breakdown = generator_loss(scores, skel, blend, cls)
            values = breakdown.values()
            self._check("generator", breakdown.total, values)
            adam_step(params, dc.gradients(breakdown.total, params), self.state.opt_generator)
            self._record("generator", values)
            self.events.append(f"generator_iter{k + 1}")
            out.append(values)
            seed = fake.data
        self.last_generator_seed = seed
        return out

    # -- loop -------------------------------------------------------------------

    def outer_loop(self, sampler: PairSampler) -> None:
        m = self.cfg.batch_size
        for _ in range(self.cfg.n_critic):
            self.critic_update(sampler.sample(self.rng, m))
            self.classifier_update(sampler.sample(self.rng, m))
        self.generator_update(sampler.sample(self.rng, m))
        self.state.step += 1

    def checkpoint_tensors(self) -> dict:
        out = {}
        for net in ("generator", "critic", "classifier"):
            for n, arr in getattr(self.nets, net).state_dict().items():
                out[f"{net}.{n}"] = arr
        return out

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"epoch": self.state.epoch, "step": self.state.step, "ablation": asdict(self.ablation)}
        meta.update(extra or {})
        save_checkpoint(path, self.checkpoint_tensors(), self.nets.cfg.to_dict(), self.cfg.to_dict(), meta)

    def snapshot(self) -> dict:
        return {
            "tensors": self.checkpoint_tensors(),
            "opts": [
                (s.t, [a.copy() for a in s.m], [a.copy() for a in s.v])
                for s in (self.state.opt_generator, self.state.opt_critic, self.state.opt_classifier)
            ],
        }

    def restore(self, snap: dict) -> None:
        for net in ("generator", "critic", "classifier"):
            prefix = net + "."
            getattr(self.nets, net).load_state_dict(
                {k[len(prefix) :]: v for k, v in snap["tensors"].items() if k.startswith(prefix)}
            )
        for s, (t, m, v) in zip(
            (self.state.opt_generator, self.state.opt_critic, self.state.opt_classifier), snap["opts"]
        ):
            s.t, s.m, s.v = t, [a.copy() for a in m], [a.copy() for a in v]


def loops_per_epoch(n_windows: int, cfg: TrainConfig) -> int:
    return max(1, math.ceil(n_windows / (cfg.batch_size * cfg.n_critic)))


def fit(
    trainer: Trainer,
    sampler: PairSampler,
    epochs: int | None = None,
    loops: int | None = None,
    out_dir=None,
    on_epoch: Callable[[Trainer], dict] | None = None,
    checkpoint_extra: dict | None = None,
) -> Trainer:
    """Run ``epochs`` epochs of ``loops`` outer loops each.

    A non-finite loss aborts that loop and restores the state from before it;
    two in a row stop training and keep the last good checkpoint.  With
    ``out_dir`` a checkpoint is written at epoch 0 and after every epoch.
    ``on_epoch`` may return metrics, logged under phase "validation".
    """
    cfg = trainer.cfg
    epochs = cfg.epochs if epochs is None else epochs
    loops = loops or loops_per_epoch(len(sampler), cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        trainer.save(out / f"ckpt_{trainer.state.epoch:04d}.bin", checkpoint_extra)
    if on_epoch is not None and trainer.state.epoch == 0:
        trainer._record("validation", on_epoch(trainer))
    bad_streak = 0
    for _ in range(epochs):
        for _ in range(loops):
            snap = trainer.snapshot()
            try:
                trainer.outer_loop(sampler)
                bad_streak = 0
            except (NonFiniteLoss, FloatingPointError) as exc:
                trainer.restore(snap)
                bad_streak += 1
                log.warning("aborted outer loop: %s", exc)
                if bad_streak >= 2:
                    log.error("two consecutive non-finite losses; halting at epoch %d", trainer.state.epoch)
                    trainer.halted = True
                    return trainer
        trainer.state.epoch += 1
        if on_epoch is not None:
            trainer._record("validation", on_epoch(trainer))
        if out is not None:
            trainer.save(out / f"ckpt_{trainer.state.epoch:04d}.bin", checkpoint_extra)
    return trainer


def write_history(history, path) -> None:
    lines = ["step,phase,component,value"]
    lines += [f"{s},{p},{c},{v!r}" for s, p, c, v in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_trainer(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    skeleton: SkeletonSpec,
    ablation: Ablation | None = None,
    stats: NormalizationStats | None = None,
) -> Trainer:
    return Trainer(Networks.build(model_cfg, train_cfg.seed), skeleton, train_cfg, ablation, stats)
