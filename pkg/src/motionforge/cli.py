"""Command-line entry point: ``motionforge <command> [options]``.

Commands: synth-data, preprocess, train, generate, evaluate, plot.  Every
command writes a ``manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .eval import (
    CONDITIONS,
    ClassifierConfig,
    angle_error_curve,
    augmentation_experiment,
    curve_auc,
    run_loso,
    run_stratified_kfold,
    write_curve_csv,
    write_fold_csv,
    write_json,
    write_line_plot,
)
from .model import Generator, ModelConfig, load_checkpoint
from .motiondata import (
    ACTIONS,
    DEFAULT_WINDOWS_PER_SUBJECT,
    MotionClip,
    MotionWindow,
    NormalizationStats,
    build_dataset,
    clips_to_windows,
    default_skeleton,
    load_clips,
    normalize,
    one_hot,
    read_skeleton,
    write_clip_csv,
    write_skeleton,
)
from .synthesis import RolloutConfig, RolloutError, denormalize_motion, rollout, write_pose_strip
from .training import Ablation, PairSampler, fit, make_trainer, read_config, write_history

log = logging.getLogger("motionforge")

SKELETON_FILE = "skeleton.txt"
STATS_FILE = "stats.json"
WINDOW_DIR = "windows"


class CommandError(Exception):
    """A user-facing failure; printed without a traceback, exit status 1."""


# -- manifest ----------------------------------------------------------------


def file_hash(path) -> str:
    """Git-style blob hash (sha1 over ``blob <size>\\0`` + content)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _hash_inputs(paths) -> dict:
    out = {}
    for p in paths:
        p = Path(p)
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            if f.name != "manifest.json":
                out[str(f)] = file_hash(f)
    return out


class RunManifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.data = {
            "tool": f"motionforge {__version__}",
            "command": command,
            "arguments": {k: v for k, v in vars(args).items() if k != "func"},
            "started": _now(),
        }

    def finish(self, out_dir, config_path=None, config=None, seed=None, inputs=(), outputs=()):
        self.data.update(
            {
                "config_path": str(config_path) if config_path else None,
                "config": config or {},
                "seed": seed,
                "inputs": [str(p) for p in inputs],
                "input_hashes": _hash_inputs([p for p in inputs if Path(p).exists()]),
                "outputs": [str(p) for p in outputs],
                "finished": _now(),
            }
        )
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_json(self.data, Path(out_dir) / "manifest.json")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# -- shared helpers ----------------------------------------------------------


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CommandError(f"cannot write to {out}: {exc.strerror or exc}") from None
    return out


def _parse_counts(text: str | None) -> dict:
    if not text:
        return dict(DEFAULT_WINDOWS_PER_SUBJECT)
    counts = {}
    for item in text.split(","):
        k, _, v = item.partition("=")
        if k.strip() not in ACTIONS or not v.strip().isdigit():
            raise CommandError(f"bad --windows entry {item!r}; use action=count with actions {', '.join(ACTIONS)}")
        counts[k.strip()] = int(v)
    return counts


def _load_prepared(data_dir):
    """(windows, stats, skeleton) from a ``preprocess`` output directory."""
    data_dir = Path(data_dir)
    if not (data_dir / STATS_FILE).exists():
        raise CommandError(f"{data_dir} is not a preprocessed dataset (no {STATS_FILE}); run 'preprocess' first")
    skeleton = read_skeleton(data_dir / SKELETON_FILE)
    stats = NormalizationStats.from_dict(json.loads((data_dir / STATS_FILE).read_text()))
    clips = load_clips(data_dir / WINDOW_DIR, skeleton)
    if not clips:
        raise CommandError(f"{data_dir / WINDOW_DIR} holds no windows")
    windows = [MotionWindow(c.frames, c.fps, c.action, c.subject, source=i) for i, c in enumerate(clips)]
    return windows, stats, skeleton


def _model_config(args, skeleton, window_T) -> ModelConfig:
    maker = ModelConfig.desk if args.widths == "desk" else ModelConfig
    kw = {"n_joints": skeleton.n_joints, "window_T": window_T}
    if args.no_attention:
        kw.update(generator_attention=None, critic_attention=False)
    return maker(**kw)


def _load_generator(ckpt):
    try:
        tensors, header = load_checkpoint(ckpt)
    except (OSError, ValueError) as exc:
        raise CommandError(f"cannot read checkpoint {ckpt}: {exc}") from None
    cfg = ModelConfig.from_dict(header["model_config"])
    gen = Generator(cfg)
    gen.load_state_dict({k[len("generator.") :]: v for k, v in tensors.items() if k.startswith("generator.")})
    return gen, cfg, header


def _check_compat(cfg: ModelConfig, skeleton, window_len: int):
    if cfg.n_joints != skeleton.n_joints:
        raise CommandError(f"checkpoint expects J={cfg.n_joints} joints, dataset has J={skeleton.n_joints}")
    if window_len < cfg.window_T:
        raise CommandError(f"checkpoint expects T={cfg.window_T} seed frames, dataset windows have {window_len}")


# -- commands ----------------------------------------------------------------


def cmd_synth_data(args) -> int:
    if args.subjects < 1:
        raise CommandError("--subjects must be >= 1")
    out = _out_dir(args.out)
    man = RunManifest("synth-data", args)
    skeleton = default_skeleton()
    counts = _parse_counts(args.windows)
    clips = build_dataset(args.subjects, args.seed, counts, skeleton)
    written = [out / SKELETON_FILE]
    write_skeleton(skeleton, written[0])
    for clip in clips:
        path = out / f"{clip.subject}_{clip.action}.csv"
        write_clip_csv(clip, path)
        written.append(path)
    man.finish(out, config={"subjects": args.subjects, "windows_per_subject": counts}, seed=args.seed, outputs=written)
    print(f"wrote {len(clips)} clips for {args.subjects} subjects to {out}")
    return 0


def cmd_preprocess(args) -> int:
    src = Path(args.data)
    skel_path = src / SKELETON_FILE
    skeleton = read_skeleton(skel_path) if skel_path.exists() else default_skeleton()
    clips = load_clips(src, skeleton)
    if not clips:
        raise CommandError(f"no motion CSV files under {src}")
    out = _out_dir(args.out)
    man = RunManifest("preprocess", args)
    windows = clips_to_windows(clips, skeleton, args.length)
    if not windows:
        raise CommandError("no windows survived segmentation")
    normed, stats = normalize(windows)
    wdir = out / WINDOW_DIR
    wdir.mkdir(exist_ok=True)
    for old in wdir.glob("*.csv"):
        old.unlink()
    counters: dict = {}
    written = [out / SKELETON_FILE, out / STATS_FILE]
    for w in normed:
        key = (w.subject, w.action)
        counters[key] = counters.get(key, 0) + 1
        path = wdir / f"{w.subject}_{w.action}_{counters[key] - 1:04d}.csv"
        write_clip_csv(MotionClip(w.frames, w.fps, w.subject, w.action), path)
        written.append(path)
    write_skeleton(skeleton, written[0])
    write_json(stats.to_dict(), written[1])
    man.finish(out, config={"length": args.length}, inputs=[src], outputs=written[:2] + [wdir])
    print(f"wrote {len(normed)} normalized windows to {wdir}")
    return 0


def cmd_train(args) -> int:
    try:
        cfg = read_config(args.config)
    except (OSError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    windows, stats, skeleton = _load_prepared(args.data)
    out = _out_dir(args.out)
    man = RunManifest("train", args)
    model_cfg = _model_config(args, skeleton, cfg.window_T)
    ablation = Ablation(use_blend=not args.no_blend_loss, use_skeleton=not args.no_skeleton_loss)
    trainer = make_trainer(model_cfg, cfg, skeleton, ablation)
    sampler = PairSampler(windows, cfg.window_T, cfg.classes)
    extra = {"stats": stats.to_dict()}
    fit(trainer, sampler, cfg.epochs, args.loops, out, checkpoint_extra=extra)
    write_history(trainer.state.history, out / "losses.csv")
    ckpts = sorted(out.glob("ckpt_*.bin"))
    man.finish(
        out,
        config_path=args.config,
        config={"train": cfg.to_dict(), "model": model_cfg.to_dict(), "ablation": vars(ablation)},
        seed=cfg.seed,
        inputs=[args.config, args.data],
        outputs=ckpts + [out / "losses.csv"],
    )
    if getattr(trainer, "halted", False):
        raise CommandError("training halted after two consecutive non-finite losses; last good checkpoint kept")
    print(f"trained {trainer.state.epoch} epoch(s), {trainer.state.step} outer loops; outputs in {out}")
    return 0


def cmd_generate(args) -> int:
    if args.action not in ACTIONS:
        raise CommandError(f"unknown action {args.action!r}; valid actions: {', '.join(ACTIONS)}")
    if args.iterations < 0:
        raise CommandError("--iterations must be >= 0")
    gen, cfg, header = _load_generator(args.ckpt)
    windows, stats, skeleton = _load_prepared(args.data)
    _check_compat(cfg, skeleton, windows[0].length)
    pool = [w for w in windows if w.action == args.action]
    if not pool:
        raise CommandError(f"dataset holds no {args.action!r} windows to seed from")
    if args.iterations == 0 and args.drop_seed:
        raise CommandError("--drop-seed with --iterations 0 leaves no frames")
    out = _out_dir(args.out)
    man = RunManifest("generate", args)
    rng = np.random.default_rng(args.seed)
    picks = rng.choice(len(pool), size=args.count, replace=len(pool) < args.count)
    rc = RolloutConfig(cfg.window_T, args.iterations, args.drop_seed)
    written = []
    status = 0
    for n, i in enumerate(picks):
        seed = pool[i].frames[: cfg.window_T]
        try:
            clip = rollout(gen, seed, one_hot(args.action), rc, pool[i].fps, f"gen{n:02d}")
        except RolloutError as exc:
            log.error("%s", exc)
            status = 1
            if exc.partial is None:
                continue
            clip = exc.partial
        clip = denormalize_motion(clip, stats)
        stem = out / f"{args.action}_{n:02d}"
        write_clip_csv(clip, stem.with_suffix(".csv"))
        write_pose_strip(clip.frames, skeleton, stem.with_suffix(".svg"), every=args.every, title=f"{args.action} {n}")
        written += [stem.with_suffix(".csv"), stem.with_suffix(".svg")]
    man.finish(
        out,
        config={"rollout": asdict(rc), "model": cfg.to_dict()},
        seed=args.seed,
        inputs=[args.ckpt, args.data],
        outputs=written,
    )
    print(f"wrote {len(written) // 2} clip(s) of {rc.n_frames} frames to {out}")
    return status


def cmd_evaluate(args) -> int:
    if not 0 < args.fraction <= 1:
        raise CommandError(f"--fraction must lie in (0, 1], got {args.fraction}")
    if args.repeats < 1:
        raise CommandError("--repeats must be >= 1")
    needs_gen = args.condition != "real"
    if needs_gen and not args.ckpt:
        raise CommandError(f"condition {args.condition!r} needs --ckpt")
    windows, stats, skeleton = _load_prepared(args.data)
    gen = cfg = None
    if args.ckpt:
        gen, cfg, _ = _load_generator(args.ckpt)
        _check_compat(cfg, skeleton, windows[0].length)
    out = _out_dir(args.out)
    man = RunManifest("evaluate", args)
    clf_cfg = ClassifierConfig(epochs=args.clf_epochs, n_joints=skeleton.n_joints)
    written = []
    summary: dict = {"protocol": args.protocol, "fraction": args.fraction, "condition": args.condition}
    if args.condition == "both":
        rep = augmentation_experiment(
            windows, gen, (args.fraction,), args.protocol, args.k, clf_cfg, args.seed, args.repeats
        )
        frac = rep["fractions"][str(args.fraction)]
        rows = frac["reports"]["real"] + frac["reports"]["real+synthetic"]
        summary.update(frac["summary"])
        summary["paired_folds"] = frac["folds"]
        summary["reference_gains"] = rep["reference_gains"]
    else:
        if args.protocol == "loso":
            reports = run_loso(windows, gen, args.fraction, args.condition, clf_cfg, args.seed)
        else:
            reports = run_stratified_kfold(windows, gen, args.k, args.condition, args.fraction, clf_cfg, args.seed)
        rows = [r.row() for r in reports]
        f1 = [r["macro_f1"] for r in rows]
        summary.update({"n_folds": len(rows), "mean_macro_f1": float(np.mean(f1)) if f1 else float("nan")})
    write_fold_csv(rows, out / "folds.csv")
    written.append(out / "folds.csv")
    if gen is not None:
        curve = angle_error_curve(gen, windows, stats, skeleton, args.horizon)
        write_curve_csv({"angle_error": curve}, out / "angle_curve.csv")
        write_line_plot({"angle_error": curve}, out / "angle_curve.svg", title="mean angle error", ylabel="radians")
        summary["angle_error_auc"] = curve_auc(curve)
        written += [out / "angle_curve.csv", out / "angle_curve.svg"]
    write_json(summary, out / "report.json")
    written.append(out / "report.json")
    man.finish(out, config=summary | {"k": args.k}, seed=args.seed, inputs=[args.data] + ([args.ckpt] if args.ckpt else []), outputs=written)
    print(json.dumps({k: v for k, v in summary.items() if not isinstance(v, (list, dict))}, indent=2))
    return 0


def _read_plot_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CommandError(f"{path} is empty")
    head, body = rows[0], rows[1:]
    if head == ["step", "phase", "component", "value"]:
        series: dict = {}
        for step, phase, comp, value in body:
            series.setdefault(f"{phase}/{comp}", {}).setdefault(int(step), []).append(float(value))
        return {k: [float(np.mean(v[s])) for s in sorted(v)] for k, v in series.items()}
    if head and head[0] == "frame":
        return {name: [float(r[i]) for r in body if r[i] != ""] for i, name in enumerate(head[1:], 1)}
    raise CommandError(f"{path}: expected a losses.csv or a frame-indexed curve CSV")


def cmd_plot(args) -> int:
    curves = _read_plot_csv(args.input)
    if args.series:
        missing = [s for s in args.series if s not in curves]
        if missing:
            raise CommandError(f"unknown series {missing}; available: {', '.join(curves)}")
        curves = {k: curves[k] for k in args.series}
    out = Path(args.out)
    _out_dir(out.parent if str(out.parent) else ".")
    man = RunManifest("plot", args)
    write_line_plot(curves, out, title=args.title or Path(args.input).name)
    man.finish(out.parent, inputs=[args.input], outputs=[out])
    print(f"wrote {out}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motionforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="write a procedural motion dataset")
    s.add_argument("--subjects", type=int, default=6, help="number of procedural subjects")
    s.add_argument("--seed", type=int, default=0, help="dataset seed")
    s.add_argument("--windows", help="per-subject window counts, e.g. knock=64,lift=88,throw=64,walk=80")
    s.add_argument("--out", required=True, help="output directory for clip CSVs and skeleton.txt")
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("preprocess", help="remove global motion, window and normalize")
    s.add_argument("--data", required=True, help="directory of raw clip CSVs")
    s.add_argument("--out", required=True, help="output directory for windows and stats.json")
    s.add_argument("--length", type=int, default=125, help="frames per window")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="adversarial training")
    s.add_argument("--config", required=True, help="key = value training config")
    s.add_argument("--data", required=True, help="preprocessed dataset directory")
    s.add_argument("--out", required=True, help="directory for checkpoints and losses.csv")
    s.add_argument("--epochs", type=int, help="override the config epoch count")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--loops", type=int, help="outer loops per epoch (default: one pass over the windows)")
    s.add_argument("--widths", choices=("full", "desk"), default="full", help="layer widths preset")
    s.add_argument("--no-attention", action="store_true", help="drop the generator and critic attention layers")
    s.add_argument("--no-blend-loss", action="store_true", help="train without the seam blend term")
    s.add_argument("--no-skeleton-loss", action="store_true", help="train without the bone-length term")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="autoregressive rollouts from dataset seeds")
    s.add_argument("--ckpt", required=True, help="checkpoint written by train")
    s.add_argument("--data", required=True, help="preprocessed dataset providing seeds and statistics")
    s.add_argument("--action", required=True, help="knock, lift, throw or walk")
    s.add_argument("--iterations", type=int, default=4, help="generated windows after the seed")
    s.add_argument("--drop-seed", action="store_true", help="omit the seed frames from the output")
    s.add_argument("--count", type=int, default=1, help="number of clips")
    s.add_argument("--seed", type=int, default=0, help="seed for picking seed windows")
    s.add_argument("--every", type=int, default=10, help="frames between drawn poses")
    s.add_argument("--out", default="generated", help="output directory for CSVs and SVG pose strips")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", help="LOSO / stratified K-fold classification reports")
    s.add_argument("--data", required=True, help="preprocessed dataset directory")
    s.add_argument("--ckpt", help="generator checkpoint, needed for synthetic conditions and the angle curve")
    s.add_argument("--protocol", choices=("loso", "kfold"), default="loso")
    s.add_argument("--k", type=int, default=10, help="folds for kfold")
    s.add_argument("--fraction", type=float, default=1.0, help="share of real training windows kept per class")
    s.add_argument("--condition", choices=CONDITIONS + ("both",), default="real", help="both pairs real with real+synthetic")
    s.add_argument("--clf-epochs", type=int, default=30, help="classifier epochs (at least 300 steps are run)")
    s.add_argument("--repeats", type=int, default=1, help="subsample and classifier reruns averaged per fold (condition both)")
    s.add_argument("--horizon", type=int, default=70, help="frames in the angle error curve")
    s.add_argument("--seed", type=int, default=0, help="subsampling and classifier seed")
    s.add_argument("--out", default="report", help="output directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot", help="SVG line plot of losses.csv or a curve CSV")
    s.add_argument("--input", required=True, help="losses.csv or a curve CSV")
    s.add_argument("--out", required=True, help="SVG path")
    s.add_argument("--series", nargs="*", help="subset of series names")
    s.add_argument("--title")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"motionforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
