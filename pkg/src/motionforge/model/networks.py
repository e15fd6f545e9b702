"""Generator, critic and classifier."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..diffcore import tensor as T
from .layers import Conv1d, Dense, LayerNorm, Module, SelfAttention

N_CLASSES = 4


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    n_joints: int = 16
    n_classes: int = N_CLASSES
    window_T: int = 25
    kernel: int = 5
    encoder_widths: tuple = (64, 128, 256)
    latent: int = 256
    decoder_widths: tuple = (128, 64)
    critic_widths: tuple = (64, 128, 256, 256)
    classifier_widths: tuple = (32, 64, 128)
    attention_ratio: int = 8
    generator_attention: str | None = "decoder"  # "decoder", "encoder" or None
    critic_attention: bool = True
    out_scale: float = 3.0
    slope: float = 0.2
    last_pose_skip: bool = False  # last seed pose fed to the output head as extra channels

    def __post_init__(self):
        for name in ("encoder_widths", "decoder_widths", "critic_widths", "classifier_widths"):
            setattr(self, name, tuple(int(w) for w in getattr(self, name)))
        if self.generator_attention not in ("decoder", "encoder", None):
            raise ValueError("generator_attention must be 'decoder', 'encoder' or None")
        if len(self.critic_widths) < 2:
            raise ValueError("critic needs at least two conv layers")

    @property
    def n_channels(self) -> int:
        return 3 * self.n_joints

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """Narrow widths sized for single-core runs of a few minutes."""
        base = dict(
            encoder_widths=(16, 32, 32),
            latent=64,
            decoder_widths=(32, 16),
            critic_widths=(16, 32, 32, 32),
            classifier_widths=(16, 32, 32),
        )
        base.update(overrides)
        return cls(**base)


def _conv_len(n, kernel, stride, pad):
    return (n + 2 * pad - kernel) // stride + 1


def to_channels(frames) -> Tensor:
    """(B, T, J, 3) -> (B, 3J, T)."""
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    b, t = x.shape[0], x.shape[1]
    return T.transpose(x.reshape(b, t, -1), (0, 2, 1))


def from_channels(x: Tensor, n_joints: int) -> Tensor:
    """(B, 3J, T) -> (B, T, J, 3)."""
    b, _, t = x.shape
    return T.transpose(x, (0, 2, 1)).reshape(b, t, n_joints, 3)


def control_channels(control, length: int) -> Tensor:
    """Broadcast (B, Y) one-hot controls along time: (B, Y, length)."""
    y = control if isinstance(control, Tensor) else Tensor(control)
    return T.broadcast_to(y.reshape(y.shape[0], y.shape[1], 1), (y.shape[0], y.shape[1], length))


class ConvBlock(Module):
    """conv -> layer norm -> leaky rectifier."""

    def __init__(self, c_in, c_out, kernel, stride, rng, slope):
        super().__init__()
        self.conv = self.child("conv", Conv1d(c_in, c_out, kernel, stride, kernel // 2, rng))
        self.norm = self.child("norm", LayerNorm(c_out))
        self.slope = slope

    def __call__(self, x):
        return dc.leaky_relu(self.norm(self.conv(x)), self.slope)


class Generator(Module):
    """Seed window + control -> future window of the same length."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        k = cfg.kernel
        c = cfg.n_channels + cfg.n_classes
        lengths = [cfg.window_T]
        self.encoder = []
        for i, w in enumerate(cfg.encoder_widths):
            self.encoder.append(self.child(f"enc{i}", ConvBlock(c, w, k, 2, rng, cfg.slope)))
            lengths.append(_conv_len(lengths[-1], k, 2, k // 2))
            c = w
        self.enc_lengths = lengths
        self.enc_attn = None
        if cfg.generator_attention == "encoder":
            self.enc_attn = self.child("enc_attn", SelfAttention(c, cfg.attention_ratio, rng))
        flat = c * lengths[-1]
        self.to_latent = self.child("to_latent", Dense(flat, cfg.latent, rng))
        self.from_latent = self.child("from_latent", Dense(cfg.latent + cfg.n_classes, flat, rng))
        self.bottom = (c, lengths[-1])
        # decoder retraces the encoder lengths in reverse
        dec_lengths = list(reversed(lengths[:-1]))
        self.decoder = []
        for i, w in enumerate(cfg.decoder_widths):
            self.decoder.append(self.child(f"dec{i}", ConvBlock(c, w, k, 1, rng, cfg.slope)))
            c = w
        self.dec_lengths = dec_lengths
        self.dec_attn = None
        if cfg.generator_attention == "decoder":
            self.dec_attn = self.child("dec_attn", SelfAttention(c, cfg.attention_ratio, rng))
        head_in = c + (cfg.n_channels if cfg.last_pose_skip else 0)
        self.head = self.child("head", Conv1d(head_in, cfg.n_channels, k, 1, k // 2, rng))

    def forward_channels(self, x: Tensor, control) -> Tensor:
        cfg = self.cfg
        b = x.shape[0]
        h = T.concat([x, control_channels(control, x.shape[2])], axis=1)
        for blk in self.encoder:
            h = blk(h)
        if self.enc_attn is not None:
            h = self.enc_attn(h)
        z = dc.leaky_relu(self.to_latent(h.reshape(b, -1)), cfg.slope)
        y = control if isinstance(control, Tensor) else Tensor(control)
        h = dc.leaky_relu(self.from_latent(T.concat([z, y], axis=1)), cfg.slope)
        h = h.reshape(b, *self.bottom)
        for i, blk in enumerate(self.decoder):
            length = self.dec_lengths[i] if i < len(self.dec_lengths) else cfg.window_T
            h = blk(dc.resize_time(h, length))
        if self.dec_attn is not None:
            h = self.dec_attn(h)
        h = dc.resize_time(h, cfg.window_T)
        if cfg.last_pose_skip:
            last = x[:, :, -1:] * Tensor(np.ones((1, 1, cfg.window_T)))
            h = T.concat([h, last], axis=1)
        return dc.tanh(self.head(h)) * cfg.out_scale

    def __call__(self, seed, control) -> Tensor:
        """seed: (B, T, J, 3), control: (B, Y) -> (B, T, J, 3)."""
        cfg = self.cfg
        x = to_channels(seed)
        if x.shape[1:] != (cfg.n_channels, cfg.window_T):
            raise dc.ShapeError(
                "generator", f"seed extents {tuple(seed.shape)} vs T={cfg.window_T}, J={cfg.n_joints}"
            )
        y = control if isinstance(control, Tensor) else Tensor(control)
        if y.shape != (x.shape[0], cfg.n_classes):
            raise dc.ShapeError("generator", f"control extents {y.shape} vs batch {x.shape[0]}")
        out = from_channels(self.forward_channels(x, y), cfg.n_joints)
        if not np.all(np.isfinite(out.data)):
            raise NonFiniteError(f"generator produced non-finite output; {describe(self)}")
        return out


class Critic(Module):
    """Scores a (prior, future) pair; one unbounded real per sample."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(1)
        self.cfg = cfg
        k = cfg.kernel
        c = cfg.n_channels + cfg.n_classes
        n = 2 * cfg.window_T
        self.blocks = []
        self.attn = None
        widths = cfg.critic_widths
        for i, w in enumerate(widths):
            self.blocks.append(self.child(f"conv{i}", ConvBlock(c, w, k, 2, rng, cfg.slope)))
            n = _conv_len(n, k, 2, k // 2)
            c = w
            if cfg.critic_attention and i == len(widths) - 2:
                self.attn = self.child("attn", SelfAttention(c, cfg.attention_ratio, rng))
        self.head = self.child("head", Dense(c * n, 1, rng))

    def __call__(self, motion, control) -> Tensor:
        """motion: (B, 2T, J, 3), control: (B, Y) -> (B,)."""
        cfg = self.cfg
        x = to_channels(motion)
        if x.shape[1:] != (cfg.n_channels, 2 * cfg.window_T):
            raise dc.ShapeError(
                "critic", f"motion extents {tuple(motion.shape)} vs 2T={2 * cfg.window_T}, J={cfg.n_joints}"
            )
        y = control if isinstance(control, Tensor) else Tensor(control)
        if y.shape != (x.shape[0], cfg.n_classes):
            raise dc.ShapeError("critic", f"control extents {y.shape} vs batch {x.shape[0]}")
        h = T.concat([x, control_channels(y, x.shape[2])], axis=1)
        for i, blk in enumerate(self.blocks):
            h = blk(h)
            if self.attn is not None and i == len(self.blocks) - 2:
                h = self.attn(h)
        return self.head(h.reshape(h.shape[0], -1)).reshape(-1)


class Classifier(Module):
    """Conv stack, global average pooling, softmax over the action classes."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(2)
        self.cfg = cfg
        k = cfg.kernel
        c = cfg.n_channels
        self.blocks = []
        for i, w in enumerate(cfg.classifier_widths):
            self.blocks.append(self.child(f"conv{i}", ConvBlock(c, w, k, 2, rng, cfg.slope)))
            c = w
        self.head = self.child("head", Dense(c, cfg.n_classes, rng))

    def logits(self, motion) -> Tensor:
        x = to_channels(motion)
        if x.shape[1] != self.cfg.n_channels:
            raise dc.ShapeError("classifier", f"motion extents {tuple(motion.shape)} vs J={self.cfg.n_joints}")
        h = x
        for blk in self.blocks:
            h = blk(h)
        return self.head(T.mean(h, axis=2))

    def __call__(self, motion) -> Tensor:
        """motion: (B, L, J, 3) -> (B, Y) class probabilities."""
        return dc.softmax(self.logits(motion), axis=1)


def layer_inventory(module: Module) -> list[str]:
    return [type(m).__name__ for m in module.modules()]


def describe(module: Module) -> str:
    parts = []
    for name, p in module.named_parameters():
        bad = int(np.size(p.data) - np.isfinite(p.data).sum())
        parts.append(f"{name}{list(p.shape)}" + (f" nonfinite={bad}" if bad else ""))
    return ", ".join(parts)


@dataclass
class Networks:
    generator: Generator
    critic: Critic
    classifier: Classifier
    cfg: ModelConfig = field(repr=False, default=None)

    @classmethod
    def build(cls, cfg: ModelConfig, seed: int = 0) -> "Networks":
        g, c, k = (np.random.default_rng([seed, i]) for i in range(3))
        return cls(Generator(cfg, g), Critic(cfg, c), Classifier(cfg, k), cfg)


def generator_forward(generator: Generator, seed: np.ndarray, control: np.ndarray) -> np.ndarray:
    """Single-window convenience wrapper: (T, J, 3) seed, (Y,) control -> (T, J, 3)."""
    with dc.no_grad():
        out = generator(np.asarray(seed)[None], np.asarray(control, dtype=float)[None])
    return out.data[0]


def critic_forward(critic: Critic, motion: np.ndarray, control: np.ndarray) -> np.ndarray:
    with dc.no_grad():
        return critic(np.asarray(motion), np.asarray(control, dtype=float)).data


def classifier_forward(classifier: Classifier, motion: np.ndarray) -> np.ndarray:
    with dc.no_grad():
        return classifier(np.asarray(motion)).data


def self_attention_forward(x: np.ndarray, layer: SelfAttention) -> np.ndarray:
    """(C, N) feature map -> (C, N)."""
    with dc.no_grad():
        return layer(Tensor(np.asarray(x)[None])).data[0]
