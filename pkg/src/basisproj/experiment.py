"""Training loop, evaluation and the front-layer comparison grid."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bpl import BasisSet, InitSpec, init_bases
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import Dataset, generate_synthetic, load_dataset, sparsity_ratio, train_test_split
from .errors import ConfigError, InvalidArgumentError, SchemaError, TrainingError
from .linalg import nmf_factorize, svd_top_k
from .metrics import (
    MetricsReport,
    export_basis_embedding,
    format_float,
    multilabel_f1,
    per_class_scores,
    threshold_predict,
)
from .nn import ClassifierModel, bce_loss, sigmoid
from .optim import AdamState, CosineSchedule, adam_step, lr_at_step

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


def resolve_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data.path is not None:
        return load_dataset(cfg.data.path)
    return generate_synthetic(cfg.data.synthetic_spec())


def split_dataset(cfg: ExperimentConfig, d: Dataset):
    if cfg.data.test_fraction == 0:
        return d, None
    return train_test_split(d, cfg.data.test_fraction, cfg.data.split_seed)


def build_model(cfg: ExperimentConfig, f_dim: int, n_classes: int, init_data=None,
                skip_init: bool = False) -> ClassifierModel:
    """Construct a seeded model; BPL bases come from the configured initializer.

    ``init_data`` (elements x F) feeds the svd/nmf initializers. ``skip_init``
    leaves zero bases in place, for when parameters are about to be
    overwritten from a checkpoint.
    """
    m = cfg.model
    n = m.n_bases or f_dim
    basis_set = None
    if m.front == "bpl":
        if skip_init:
            bases = np.zeros((n, f_dim))
        else:
            spec = InitSpec(
                method=cfg.init.method,
                seed=cfg.init_seed,
                concentration=cfg.init.concentration,
                nmf_iterations=cfg.init.nmf_iterations,
                data=init_data if cfg.init.method in ("svd", "nmf") else None,
            )
            bases = init_bases(spec, n, f_dim).bases
        basis_set = BasisSet(bases, norm_type=m.norm_type, denominator=m.denominator)
    return ClassifierModel(
        m.front,
        f_dim,
        n_classes,
        n_bases=n,
        width=m.width,
        n_blocks=m.n_blocks,
        kernel_size=m.kernel_size,
        basis_set=basis_set,
        rng=np.random.default_rng(cfg.seed),
    )


def predict_proba(model: ClassifierModel, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    out = [sigmoid(model.forward(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]
    return np.concatenate(out)


def front_output(model: ClassifierModel, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    return np.concatenate([model.front_forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def evaluate(model: ClassifierModel, d: Dataset, threshold: float = 0.5, loss_history=None) -> MetricsReport:
    x, y = d.intensities(), d.labels()
    if x.shape[-1] != model.in_dim or y.shape[-1] != model.n_classes:
        raise SchemaError(
            f"dataset (F={x.shape[-1]}, classes={y.shape[-1]}) does not match model "
            f"(F={model.in_dim}, classes={model.n_classes})"
        )
    pred = threshold_predict(predict_proba(model, x), threshold)
    return MetricsReport(
        micro_f1=multilabel_f1(pred, y, "micro"),
        macro_f1=multilabel_f1(pred, y, "macro"),
        per_class=per_class_scores(pred, y),
        sparsity_before=sparsity_ratio(x),
        sparsity_after=sparsity_ratio(front_output(model, x)),
        loss_history=list(loss_history or []),
    )


def _batch_indices(n: int, batch_size: int, seed: int, step: int) -> np.ndarray:
    # Each epoch has its own seeded permutation so any step can be replayed.
    per_epoch = math.ceil(n / batch_size)
    epoch, j = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return perm[j * batch_size:(j + 1) * batch_size]


@dataclass
class TrainResult:
    model: ClassifierModel
    adam: AdamState
    history: dict
    train_metrics: MetricsReport
    test_metrics: Optional[MetricsReport]
    config: ExperimentConfig
    initial_bases: Optional[np.ndarray] = None
    report: dict = field(default_factory=dict)


def _checkpoint(cfg, step, model, adam, history, initial_bases) -> Checkpoint:
    extra = {"in_dim": model.in_dim, "n_classes": model.n_classes}
    if initial_bases is not None:
        extra["initial_bases"] = initial_bases.tolist()
    return Checkpoint(
        config=cfg.to_dict(),
        step=step,
        params=model.parameters(),
        adam=adam,
        history=history,
        extra=extra,
    )


def train(
    cfg: ExperimentConfig,
    dataset: Optional[Dataset] = None,
    out_dir=None,
    resume=None,
) -> TrainResult:
    """Train a classifier per ``cfg``; optionally resume from a checkpoint.

    When ``resume`` is given its stored config replaces ``cfg``.
    """
    ckpt = None
    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        cfg = ExperimentConfig.from_dict(ckpt.config)
    d = dataset if dataset is not None else resolve_dataset(cfg)
    train_set, test_set = split_dataset(cfg, d)

    model = build_model(cfg, train_set.f_dim, train_set.n_classes, train_set.elements(),
                        skip_init=ckpt is not None)
    o = cfg.optim
    adam = AdamState(beta1=o.beta1, beta2=o.beta2, eps_hat=o.eps, base_lr=o.lr)
    history = {"loss": [], "train_f1": []}
    initial_bases = model.basis_set.bases.copy() if model.basis_set is not None else None
    if ckpt is not None:
        model.load_parameters(ckpt.params)
        adam = ckpt.adam
        history = {"loss": list(ckpt.history.get("loss", [])), "train_f1": list(ckpt.history.get("train_f1", []))}
        if "initial_bases" in ckpt.extra:
            initial_bases = np.asarray(ckpt.extra["initial_bases"], dtype=np.float64)
    start = ckpt.step if ckpt is not None else 0

    sched = CosineSchedule(o.lr, o.lr_min, cfg.steps)
    x_all, y_all = train_set.intensities(), train_set.labels()
    params = model.parameters()
    out_dir = Path(out_dir) if out_dir is not None else None

    for step in range(start, cfg.steps):
        idx = _batch_indices(len(train_set), cfg.batch_size, cfg.seed, step)
        logits = model.forward(x_all[idx])
        loss = bce_loss(logits, y_all[idx])
        if not math.isfinite(loss.value):
            raise TrainingError(f"non-finite loss at step {step + 1}")
        grads = model.backward(loss.grad)
        adam_step(params, grads, adam, lr_at_step(step, sched))
        history["loss"].append(loss.value)
        done = step + 1
        if done % cfg.log_every == 0 or done == cfg.steps:
            f1 = evaluate(model, train_set, cfg.threshold).micro_f1
            history["train_f1"].append([done, f1])
            log.info("step %d/%d loss %.6f train micro-F1 %.4f", done, cfg.steps, loss.value, f1)
        if out_dir is not None and cfg.checkpoint_every and done % cfg.checkpoint_every == 0 and done < cfg.steps:
            save_checkpoint(
                _checkpoint(cfg, done, model, adam, history, initial_bases),
                out_dir / "checkpoints" / f"step_{done:07d}.ckpt",
            )

    train_metrics = evaluate(model, train_set, cfg.threshold, history["loss"])
    test_metrics = evaluate(model, test_set, cfg.threshold) if test_set is not None else None
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "train",
        "package_version": __version__,
        "config": cfg.to_dict(),
        "steps": cfg.steps,
        "n_train": len(train_set),
        "n_test": len(test_set) if test_set is not None else 0,
        "train": _metrics_dict(train_metrics),
        "test": _metrics_dict(test_metrics) if test_metrics is not None else None,
        "history": history,
    }
    result = TrainResult(model, adam, history, train_metrics, test_metrics, cfg, initial_bases, report)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "config.json", cfg.to_dict())
        save_checkpoint(_checkpoint(cfg, cfg.steps, model, adam, history, initial_bases), out_dir / "final.ckpt")
        if initial_bases is not None:
            np.save(out_dir / "initial_bases.npy", initial_bases)
        write_json(out_dir / "train_report.json", report)
    return result


def _metrics_dict(m: MetricsReport) -> dict:
    d = m.to_dict()
    d.pop("loss_history", None)
    return d


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def model_from_checkpoint(ckpt: Checkpoint):
    cfg = ExperimentConfig.from_dict(ckpt.config)
    model = build_model(cfg, ckpt.extra["in_dim"], ckpt.extra["n_classes"], skip_init=True)
    model.load_parameters(ckpt.params)
    return model, cfg


def evaluate_checkpoint(path, dataset_path=None) -> dict:
    """Forward-only scoring of a checkpoint on a dataset directory.

    Without ``dataset_path`` the dataset named by the checkpoint's config
    is used in full.
    """
    ckpt = load_checkpoint(path)
    model, cfg = model_from_checkpoint(ckpt)
    d = load_dataset(dataset_path) if dataset_path is not None else resolve_dataset(cfg)
    m = evaluate(model, d, cfg.threshold)
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "evaluate",
        "package_version": __version__,
        "checkpoint_step": ckpt.step,
        "n_samples": len(d),
        "metrics": _metrics_dict(m),
    }


# -- comparison grid ------------------------------------------------------

SIZED_FRONTS = ("fully_connected", "bpl")


def grid_cells(cfg: ExperimentConfig, f_dim: int) -> list:
    """(front, n_bases, init) triples; sizes/initializers apply only where meaningful."""
    g = cfg.compare
    cells = []
    for front in g.fronts:
        if front not in SIZED_FRONTS:
            cells.append((front, f_dim, None))
        elif front == "fully_connected":
            cells += [(front, int(n), None) for n in g.sizes]
        else:
            cells += [(front, int(n), init) for n in g.sizes for init in g.initializers]
    return cells


def _run_cell(args):
    cfg_dict, front, n, init, seed, dataset = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    changes = {"seed": seed, "model.front": front, "model.n_bases": n}
    if init is not None:
        changes["init.method"] = init
    cfg = cfg.replace(**changes)
    res = train(cfg, dataset=dataset)
    m = res.test_metrics if res.test_metrics is not None else res.train_metrics
    return {"seed": seed, "micro_f1": m.micro_f1, "macro_f1": m.macro_f1, "sparsity_after": m.sparsity_after}


def compare(cfg: ExperimentConfig, dataset: Optional[Dataset] = None, out_dir=None) -> dict:
    """Train and score every grid cell on a shared split.

    Cells that cannot be built (e.g. more factorization bases than the data
    supports) are recorded with their error instead of aborting the grid.
    """
    d = dataset if dataset is not None else resolve_dataset(cfg)
    base = cfg.to_dict()
    seeds = [int(s) for s in cfg.compare.seeds]
    cells = grid_cells(cfg, d.f_dim)
    if ("identity", d.f_dim, None) not in cells:
        cells.insert(0, ("identity", d.f_dim, None))

    jobs = [(base, front, n, init, s, d) for front, n, init in cells for s in seeds]
    if cfg.compare.workers > 1:
        with ProcessPoolExecutor(cfg.compare.workers) as ex:
            futures = [ex.submit(_guarded, j) for j in jobs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_guarded(j) for j in jobs]

    rows = []
    for c, (front, n, init) in enumerate(cells):
        runs = outcomes[c * len(seeds):(c + 1) * len(seeds)]
        cell = {"front": front, "n_bases": n, "init": init, "steps": cfg.steps, "seeds": seeds}
        errors = [r for r in runs if "error" in r]
        if errors:
            cell.update(status="error", error=errors[0]["error"])
        else:
            cell.update(
                status="ok",
                micro_f1=float(np.mean([r["micro_f1"] for r in runs])),
                macro_f1=float(np.mean([r["macro_f1"] for r in runs])),
                sparsity_after=float(np.mean([r["sparsity_after"] for r in runs])),
                per_seed=runs,
            )
        rows.append(cell)

    baseline = next(r for r in rows if r["front"] == "identity")
    for r in rows:
        if r["status"] == "ok" and baseline["status"] == "ok" and baseline["micro_f1"] > 0:
            r["pct_change_micro"] = 100.0 * (r["micro_f1"] - baseline["micro_f1"]) / baseline["micro_f1"]
        else:
            r["pct_change_micro"] = None
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "compare",
        "package_version": __version__,
        "config": cfg.to_dict(),
        "baseline": {"front": "identity", "micro_f1": baseline.get("micro_f1")},
        "cells": rows,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_json(out_dir / "config.json", cfg.to_dict())
        write_json(out_dir / "compare_report.json", report)
        write_compare_csv(report, out_dir / "compare_report.csv")
    return report


def _guarded(job):
    try:
        return _run_cell(job)
    except (InvalidArgumentError, ConfigError) as exc:
        return {"seed": job[4], "error": {"type": type(exc).__name__, "message": str(exc)}}


def write_compare_csv(report: dict, path) -> None:
    cols = ["front", "n_bases", "init", "status", "micro_f1", "macro_f1", "sparsity_after",
            "pct_change_micro", "steps", "seeds", "error"]
    lines = [",".join(cols)]
    for r in report["cells"]:
        vals = []
        for c in cols:
            v = r.get(c)
            if c == "error":
                v = f"{v['type']}: {v['message']}" if v else ""
            elif c == "seeds":
                v = " ".join(str(s) for s in v)
            elif isinstance(v, float):
                v = format_float(v)
            vals.append("" if v is None else str(v).replace(",", ";"))
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- basis inspection -----------------------------------------------------


def inspect_bases(ckpt_path, out_path, initial=None, factorizations: bool = False) -> np.ndarray:
    """Export a joint 2-D PCA embedding of learned (and reference) bases."""
    ckpt = load_checkpoint(ckpt_path)
    if "front.bases" not in ckpt.params:
        raise InvalidArgumentError(f"{ckpt_path}: checkpoint has no BPL front")
    learned = ckpt.params["front.bases"]
    sets = []
    if initial is not None:
        arr = np.load(initial) if not isinstance(initial, np.ndarray) else initial
        sets.append(("initial", arr))
    if factorizations:
        cfg = ExperimentConfig.from_dict(ckpt.config)
        train_set, _ = split_dataset(cfg, resolve_dataset(cfg))
        elements = train_set.elements()
        k = min(learned.shape[0], *elements.shape)
        sets.append(("svd", svd_top_k(elements, k).right_vectors.T))
        h = nmf_factorize(elements, k, iterations=cfg.init.nmf_iterations, seed=cfg.init_seed).h
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        sets.append(("nmf", np.divide(h, norms, out=np.zeros_like(h), where=norms > 0)))
    sets.append(("learned", learned))
    return export_basis_embedding(sets, out_path)


__all__ = [
    "TrainResult",
    "build_model",
    "compare",
    "evaluate",
    "evaluate_checkpoint",
    "grid_cells",
    "inspect_bases",
    "train",
]


def schema_path(name: str) -> Path:
    """Location of a shipped JSON schema, e.g. ``schema_path("train_report")``."""
    return Path(__file__).parent / "schemas" / f"{name}.schema.json"
