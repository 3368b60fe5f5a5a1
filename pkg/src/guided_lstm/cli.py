"""Command-line entry point.

Every training flag also reads a default from the environment: ``--beta``
falls back to ``GLSTM_BETA``, ``--bn-feature`` to ``GLSTM_BN_FEATURE`` and so
on (field name upper-cased with the ``GLSTM_`` prefix).
"""

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import gating, metrics
from .data import (
    AUDIO_DIM,
    RGB_DIM,
    SyntheticTaskSpec,
    SyntheticSpecError,
    generate_synthetic,
    load_dataset,
    parse_example,
    read_tfrecord_file,
    save_dataset,
)
from .model import CELL_KINDS, MODEL_KINDS, TrainConfig
from .translator import ConfigError

ENV_PREFIX = "GLSTM_"

_CHOICES = {"model": MODEL_KINDS, "cell": CELL_KINDS, "loss_word": ("", "softmax", "binary")}


def _env_default(field):
    raw = os.environ.get(ENV_PREFIX + field.name.upper())
    if raw is None:
        return field.default
    if field.type in (bool, "bool"):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    kind = type(field.default)
    return kind(raw)


def add_config_flags(parser):
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        default = _env_default(f)
        if isinstance(f.default, bool):
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                                default=default)
        else:
            parser.add_argument(flag, dest=f.name, type=type(f.default), default=default,
                                choices=_CHOICES.get(f.name))


def config_from_args(args):
    return TrainConfig(**{f.name: getattr(args, f.name) for f in dataclasses.fields(TrainConfig)})


def add_data_flags(parser, prefix, synthetic_default):
    parser.add_argument(f"--{prefix}-data", nargs="+", type=Path,
                        help="TFRecord files of video-level examples")
    parser.add_argument(f"--synthetic-{prefix}", type=int, default=synthetic_default,
                        help="number of synthetic videos when no files are given")


def add_synthetic_flags(parser):
    parser.add_argument("--vocab-size", type=int, default=None)
    parser.add_argument("--rgb-dim", type=int, default=RGB_DIM)
    parser.add_argument("--audio-dim", type=int, default=AUDIO_DIM)
    parser.add_argument("--mean-tags", type=float, default=3.4)
    parser.add_argument("--max-tags", type=int, default=30)
    parser.add_argument("--noise", type=float, default=0.5)
    parser.add_argument("--data-seed", type=int, default=0)


def synthetic_spec(args):
    vocab = args.vocab_size or 50
    spec = SyntheticTaskSpec(vocab_size=vocab, rgb_dim=args.rgb_dim, audio_dim=args.audio_dim,
                             mean_tags=args.mean_tags, max_tags=min(args.max_tags, vocab),
                             noise=args.noise, seed=args.data_seed)
    try:
        spec.validate()
    except SyntheticSpecError as exc:
        raise SystemExit(f"synthetic data: {exc}")
    return spec


def resolve_data(args, prefix, start=0):
    paths = getattr(args, f"{prefix}_data")
    if paths:
        return load_dataset(paths, args.rgb_dim, args.audio_dim)
    n = getattr(args, f"synthetic_{prefix}")
    if not n:
        return None
    return generate_synthetic(synthetic_spec(args), n, start=start)


# -- subcommands -------------------------------------------------------------


def cmd_train(args):
    from .train import evaluate, init_state, train_steps, write_run

    cfg = config_from_args(args)
    try:
        cfg = cfg.resolved()
    except ConfigError as exc:
        raise SystemExit(f"config error: {exc}")
    data = resolve_data(args, "train")
    if data is None:
        raise SystemExit("no training data: pass --train-data or --synthetic-train")
    val = resolve_data(args, "val", start=len(data) if not args.train_data else 0)
    vocab = args.vocab_size or 1 + max(max(l) for l in data.labels)
    state = init_state(cfg, vocab, data.features.shape[1])
    train_steps(state, data, cfg.iterations, val)
    report = evaluate(state.model, val, cfg.eval_top_n) if val is not None else None
    out = Path(args.out)
    write_run(out, state, report)
    if report is not None:
        text = metrics.format_report(report, title=f"{cfg.model} ({cfg.cell}, beta={cfg.beta})")
        (out / "report.txt").write_text(text)
        sys.stdout.write(text)
    if args.figures:
        from .plotting import plot_training_curves
        (out / "figures").mkdir(exist_ok=True)
        plot_training_curves(state.rows, out / "figures" / "training.png", title=cfg.model)
    print(f"run written to {out}")


def cmd_eval(args):
    from .train import evaluate, load_state

    state = load_state(args.checkpoint)
    model = state.model
    if args.eval_data:
        data = resolve_data(args, "eval")
    elif args.synthetic_eval:
        data = generate_synthetic(synthetic_spec(args), args.synthetic_eval, start=args.start)
    else:
        raise SystemExit("no evaluation data: pass --eval-data or --synthetic-eval")
    if data.features.shape[1] != model.d_x:
        raise SystemExit(f"checkpoint expects {model.d_x}-d features, data has "
                         f"{data.features.shape[1]}")
    report = evaluate(model, data, args.top_n)
    text = metrics.format_report(report, title=str(args.checkpoint))
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(metrics.report_csv(report))
        (out / "report.txt").write_text(text)
        if args.figures:
            from .plotting import plot_metric_bars
            plot_metric_bars({model.config.model: report}, out / "metrics.png")
    else:
        sys.stdout.write(metrics.report_csv(report))


def cmd_gradcheck(args):
    from .gradcheck import run_gradcheck

    results = run_gradcheck(seeds=range(args.seeds), tol=args.tol)
    print("group,rel_error,status")
    for r in results:
        print(f"{r.group},{r.rel_error:.3e},{'pass' if r.passed else 'FAIL'}")
    return 0 if all(r.passed for r in results) else 1


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def cmd_gating(args):
    rows = gating.ordering_report(_floats(args.p), _floats(args.q), _floats(args.betas),
                                  trials=args.trials, steps=args.steps, seed=args.seed)
    text = gating.report_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.figure:
        from .plotting import plot_gamma_curves
        plot_gamma_curves(rows, args.figure)
    bad = [r for r in rows if r.verdict not in ("degenerate", gating.expected_trend(r.p, r.q))]
    if bad:
        print(f"{len(bad)} cells disagree with the sign of p - q", file=sys.stderr)
        return 1
    return 0


def cmd_make_synthetic(args):
    spec = synthetic_spec(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = generate_synthetic(spec, args.train)
    val = generate_synthetic(spec, args.val, start=args.train)
    save_dataset(out / "train.tfrecord", train, spec.rgb_dim)
    save_dataset(out / "val.tfrecord", val, spec.rgb_dim)
    print(f"wrote {len(train)} train and {len(val)} validation videos to {out}")


def cmd_inspect(args):
    n = 0
    counts = []
    for rec in read_tfrecord_file(args.path):
        ex = parse_example(rec, args.rgb_dim, args.audio_dim)
        counts.append(len(ex.labels))
        if n < args.limit:
            labels = " ".join(str(l) for l in sorted(ex.labels))
            print(f"{ex.id.decode(errors='replace')}\tlabels=[{labels}]\t"
                  f"rgb={len(ex.mean_rgb)} audio={len(ex.mean_audio)}")
        n += 1
    mean = float(np.mean(counts)) if counts else 0.0
    print(f"{n} records, {mean:.2f} labels per video on average")


def build_parser():
    p = argparse.ArgumentParser(prog="guided-lstm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write a run directory")
    add_data_flags(t, "train", 0)
    add_data_flags(t, "val", 0)
    add_synthetic_flags(t)
    add_config_flags(t)
    t.add_argument("--out", default="run")
    t.add_argument("--figures", action="store_true", help="render PNG figures into OUT/figures")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    add_data_flags(e, "eval", 0)
    add_synthetic_flags(e)
    e.add_argument("--start", type=int, default=0, help="first synthetic video index")
    e.add_argument("--top-n", type=int, default=20)
    e.add_argument("--out", default=None)
    e.add_argument("--figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient check")
    g.add_argument("--seeds", type=int, default=3)
    g.add_argument("--tol", type=float, default=1e-5)
    g.set_defaults(func=cmd_gradcheck)

    grid = ",".join(f"{0.1 * k:.1f}" for k in range(1, 10))
    a = sub.add_parser("gating-analyze", help="equilibrium analysis of label injection")
    a.add_argument("--p", default=grid)
    a.add_argument("--q", default=grid)
    a.add_argument("--betas", default="0,0.25,0.5,0.75,1")
    a.add_argument("--trials", type=int, default=100_000)
    a.add_argument("--steps", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    a.add_argument("--figure", default=None, help="PNG path for gamma(beta) curves")
    a.set_defaults(func=cmd_gating)

    m = sub.add_parser("make-synthetic", help="write a synthetic train/val TFRecord pair")
    add_synthetic_flags(m)
    m.add_argument("--train", type=int, default=5000)
    m.add_argument("--val", type=int, default=1000)
    m.add_argument("--out-dir", default="synthetic")
    m.set_defaults(func=cmd_make_synthetic)

    i = sub.add_parser("inspect-tfrecord", help="summarize a video-level TFRecord file")
    i.add_argument("path", type=Path)
    i.add_argument("--limit", type=int, default=10)
    i.add_argument("--rgb-dim", type=int, default=RGB_DIM)
    i.add_argument("--audio-dim", type=int, default=AUDIO_DIM)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
