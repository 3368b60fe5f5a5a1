"""Minibatch training, evaluation and checkpoint round-tripping."""

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .metrics import METRIC_NAMES, evaluate_predictions
from .model import Adam, TrainConfig, VideoModel, clip_by_global_norm

log = logging.getLogger(__name__)

LOG_FIELDS = ("iteration", "loss_word", "loss_class", *METRIC_NAMES)


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration, norms):
        worst = max(norms, key=norms.get)
        super().__init__(f"non-finite loss at iteration {iteration}; "
                         f"largest parameter norm {worst}={norms[worst]:.4g}")
        self.iteration = iteration
        self.norms = norms


@dataclass
class TrainState:
    model: VideoModel
    optimizer: Adam
    rng: np.random.Generator
    iteration: int = 0
    rows: list = field(default_factory=list)


def init_state(config, vocab_size, feature_dim):
    model = VideoModel(config, vocab_size, feature_dim)
    opt = Adam(model.params, lr=model.config.learning_rate)
    return TrainState(model, opt, np.random.default_rng([model.config.seed, 1]))


def evaluate(model, dataset, top_n=20):
    preds = model.predict(dataset.features)
    return evaluate_predictions(preds, dataset.labels, top_n)


def train_steps(state, dataset, n_steps, val=None, on_row=None):
    """Advance training by ``n_steps`` minibatch updates.

    Every update appends a log row; metric columns are filled at evaluation
    iterations (every ``eval_every`` and the final one) when ``val`` is given.
    """
    model, cfg = state.model, state.model.config
    params = model.params
    n = len(dataset)
    batch = min(cfg.batch_size, n)
    final = state.iteration + n_steps
    for _ in range(n_steps):
        state.iteration += 1
        idx = np.sort(state.rng.choice(n, size=batch, replace=False))
        labels = [dataset.labels[i] for i in idx]
        lw, lc, grads, _ = model.loss_and_grads(dataset.features[idx], labels, state.rng)
        if not (np.isfinite(lw) and np.isfinite(lc)):
            raise TrainingDiverged(state.iteration,
                                   {k: float(np.linalg.norm(v)) for k, v in params.items()})
        clip_by_global_norm(grads, cfg.clip_norm)
        state.optimizer.step(params, grads)
        row = {"iteration": state.iteration, "loss_word": lw, "loss_class": lc}
        due = state.iteration == final or (cfg.eval_every and state.iteration % cfg.eval_every == 0)
        if val is not None and due:
            row.update(evaluate(model, val, cfg.eval_top_n))
            log.info("iteration %d: %s", state.iteration,
                     ", ".join(f"{k}={row[k]:.4f}" for k in METRIC_NAMES))
        state.rows.append(row)
        if on_row is not None:
            on_row(row)
    return state


def train(config, dataset, val=None, vocab_size=None, state=None):
    """Train a fresh model (or resume ``state``) up to ``config.iterations``."""
    if vocab_size is None:
        vocab_size = 1 + max(max(l) for l in dataset.labels)
    if state is None:
        state = init_state(config, vocab_size, dataset.features.shape[1])
    remaining = state.model.config.iterations - state.iteration
    return train_steps(state, dataset, max(remaining, 0), val)


def _fmt(v):
    if v is None or v == "":
        return ""
    return str(v) if isinstance(v, int) else repr(float(v))


def log_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in LOG_FIELDS])
    return buf.getvalue()


def read_log_csv(text):
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({k: (int(v) if k == "iteration" else float(v)) for k, v in r.items() if v != ""})
    return rows


# -- checkpoints -------------------------------------------------------------


def state_to_checkpoint(state):
    model, opt = state.model, state.optimizer
    tensors = {}
    for k, v in model.params.items():
        tensors[f"param/{k}"] = v
    for k, s in model.bn_states().items():
        tensors[f"bn/{k}/mean"] = s.pop_mean
        tensors[f"bn/{k}/var"] = s.pop_var
    for k in model.params:
        tensors[f"adam_m/{k}"] = opt.m[k]
        tensors[f"adam_v/{k}"] = opt.v[k]
    manifest = {
        "config": model.config.to_dict(),
        "vocab_size": model.V,
        "feature_dim": model.d_x,
        "iteration": state.iteration,
        "adam_t": opt.t,
        "rng_state": state.rng.bit_generator.state,
    }
    return manifest, tensors


def state_from_checkpoint(manifest, tensors):
    cfg = TrainConfig.from_dict(manifest["config"])
    state = init_state(cfg, manifest["vocab_size"], manifest["feature_dim"])
    model, opt = state.model, state.optimizer

    def put(dst, key):
        if key not in tensors:
            raise checkpoint.CheckpointError(f"checkpoint lacks tensor {key}")
        if tensors[key].shape != dst.shape:
            raise checkpoint.CheckpointError(f"{key}: shape {tensors[key].shape} != {dst.shape}")
        dst[...] = tensors[key]

    for k, v in model.params.items():
        put(v, f"param/{k}")
        put(opt.m[k], f"adam_m/{k}")
        put(opt.v[k], f"adam_v/{k}")
    for k, s in model.bn_states().items():
        put(s.pop_mean, f"bn/{k}/mean")
        put(s.pop_var, f"bn/{k}/var")
    opt.t = manifest["adam_t"]
    state.rng.bit_generator.state = manifest["rng_state"]
    state.iteration = manifest["iteration"]
    return state


def save_state(path, state):
    checkpoint.save(path, *state_to_checkpoint(state))


def load_state(path):
    return state_from_checkpoint(*checkpoint.load(path))


def write_run(run_dir, state, report=None):
    """Persist the resolved config, loss log and checkpoint of a run."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(state.model.config.to_dict(), indent=2, sort_keys=True) + "\n")
    (run_dir / "metrics.csv").write_text(log_csv(state.rows))
    save_state(run_dir / "checkpoint.bin", state)
    if report is not None:
        from .metrics import report_csv
        (run_dir / "eval.csv").write_text(report_csv(report))
