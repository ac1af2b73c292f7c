"""Multi-label scores and the 2-D basis embedding export."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .linalg import pca_project_2d


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray


@dataclass
class MetricsReport:
    micro_f1: float
    macro_f1: float
    per_class: dict
    sparsity_before: float | None = None
    sparsity_after: float | None = None
    loss_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def threshold_predict(probabilities, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise InvalidArgumentError(f"threshold must be in [0, 1], got {threshold}")
    p = np.asarray(probabilities, dtype=np.float64)
    return (p >= threshold).astype(np.int64)


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise InvalidArgumentError(f"prediction {pred.shape} and truth {truth.shape} must be matching 2-D arrays")
    for name, a in (("prediction", pred), ("truth", truth)):
        if not np.all((a == 0) | (a == 1)):
            raise InvalidArgumentError(f"{name} must be binary")
    return pred.astype(bool), truth.astype(bool)


def confusion_counts(pred, truth) -> ConfusionCounts:
    p, t = _check_pair(pred, truth)
    return ConfusionCounts(
        tp=np.sum(p & t, axis=0),
        fp=np.sum(p & ~t, axis=0),
        fn=np.sum(~p & t, axis=0),
    )


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def per_class_scores(pred, truth) -> dict:
    c = confusion_counts(pred, truth)
    pp = c.tp + c.fp
    ap = c.tp + c.fn
    return {
        "precision": np.where(pp > 0, c.tp / np.maximum(pp, 1), 0.0).tolist(),
        "recall": np.where(ap > 0, c.tp / np.maximum(ap, 1), 0.0).tolist(),
        "f1": _f1(c.tp, c.fp, c.fn).tolist(),
    }


def multilabel_f1(pred, truth, mode: str = "micro") -> float:
    """Micro pools counts over classes; macro averages per-class F1 (0/0 -> 0)."""
    c = confusion_counts(pred, truth)
    if mode == "micro":
        return float(_f1(c.tp.sum(), c.fp.sum(), c.fn.sum()))
    if mode == "macro":
        return float(np.mean(_f1(c.tp, c.fp, c.fn)))
    raise InvalidArgumentError(f"mode must be 'micro' or 'macro', got {mode!r}")


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def export_basis_embedding(sets, path) -> np.ndarray:
    """Write a joint PCA embedding of several basis/component matrices to CSV.

    ``sets`` is a sequence of ``(name, matrix)`` pairs (a dict works too).
    All rows are stacked and embedded together so the sets share axes.
    Returns the stacked 2-D embedding.
    """
    items = list(sets.items()) if isinstance(sets, dict) else list(sets)
    mats = [(name, np.atleast_2d(np.asarray(m, dtype=np.float64))) for name, m in items]
    if not mats:
        raise InvalidArgumentError("no basis sets given")
    dims = {m.shape[1] for _, m in mats}
    if len(dims) != 1:
        raise InvalidArgumentError(f"basis sets disagree on element dimension: {sorted(dims)}")
    stacked = np.vstack([m for _, m in mats])
    if stacked.shape[0] < 2:
        raise InvalidArgumentError("need at least 2 rows in total to embed")
    emb = pca_project_2d(stacked)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set_name", "basis_index", "pc1", "pc2"])
        row = 0
        for name, m in mats:
            for i in range(m.shape[0]):
                w.writerow([name, i, format_float(emb[row, 0]), format_float(emb[row, 1])])
                row += 1
    return emb
