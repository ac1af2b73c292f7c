"""Dense factorizations used by the initializers and the embedding export.

Everything here works on float64 numpy arrays and is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

_JACOBI_TOL = 1e-15
_MAX_SWEEPS = 80


@dataclass(frozen=True)
class SvdResult:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray


@dataclass(frozen=True)
class NmfResult:
    w: np.ndarray
    h: np.ndarray
    final_objective: float
    objective_trace: list = field(default_factory=list)


def as_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return a


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _complete_orthonormal(q: np.ndarray, valid: np.ndarray) -> np.ndarray:
    # Replace columns flagged invalid with unit vectors orthogonal to the rest.
    q = q.copy()
    n = q.shape[0]
    for j in np.flatnonzero(~valid):
        others = q[:, valid]
        for e in range(n):
            cand = np.zeros(n)
            cand[e] = 1.0
            for _ in range(2):
                cand -= others @ (others.T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-8:
                q[:, j] = cand / norm
                valid = valid.copy()
                valid[j] = True
                break
    return q


def _one_sided_jacobi(a: np.ndarray):
    """Hestenes one-sided Jacobi on a tall matrix (rows >= cols).

    Returns (s, u, v) with all cols singular triplets, unsorted.
    """
    u = a.copy()
    n = u.shape[1]
    v = np.eye(n)
    negligible = 1e-30 * float(np.sum(a * a))
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui, uj = u[:, i], u[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if abs(gamma) <= max(_JACOBI_TOL * np.sqrt(alpha * beta), negligible):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta  # avoids overflow in zeta**2
                else:
                    t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ui - s * uj
                new_j = s * ui + c * uj
                u[:, i], u[:, j] = new_i, new_j
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if not rotated:
            break
    sv = np.linalg.norm(u, axis=0)
    scale = sv.max() if sv.size else 0.0
    valid = sv > max(scale, 1.0) * 1e-13 if scale > 0 else np.zeros(n, dtype=bool)
    left = np.zeros_like(u)
    left[:, valid] = u[:, valid] / sv[valid]
    if not valid.all():
        left = _complete_orthonormal(left, valid)
    return sv, left, v


def svd_top_k(m, k: int) -> SvdResult:
    """Top-k singular triplets of ``m`` by one-sided Jacobi rotations.

    Singular values come back in descending order; each right vector is
    sign-normalized so its largest-magnitude entry is positive.
    """
    a = as_matrix(m)
    rows, cols = a.shape
    if not 1 <= k <= min(rows, cols):
        raise InvalidArgumentError(f"k={k} outside [1, {min(rows, cols)}] for a {rows}x{cols} matrix")
    transposed = cols > rows
    if transposed:
        s, right, left = _one_sided_jacobi(a.T)
    else:
        s, left, right = _one_sided_jacobi(a)
    # stable sort keeps column order for ties
    order = np.argsort(-s, kind="stable")[:k]
    s, left, right = s[order], left[:, order], right[:, order]
    right = _fix_signs(right)
    # keep U consistent with the flipped V: u_i = m v_i / s_i
    signs = np.sign(np.einsum("ij,ij->j", a @ right, left))
    signs[signs == 0] = 1.0
    left = left * signs
    return SvdResult(singular_values=s, left_vectors=left, right_vectors=right)


def nmf_objective(m: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    r = m - w @ h
    return float(np.sum(r * r))


def nmf_factorize(m, k: int, iterations: int = 200, seed: int = 0, eps: float = 1e-12) -> NmfResult:
    """Multiplicative-update NMF minimizing the squared Frobenius error.

    The objective is recorded after every full (H, W) update; the first
    trace entry is the objective at initialization.
    """
    a = as_matrix(m)
    if np.any(a < 0):
        raise InvalidArgumentError("NMF input has negative entries")
    rows, cols = a.shape
    if not 1 <= k <= min(rows, cols):
        raise InvalidArgumentError(f"k={k} outside [1, {min(rows, cols)}] for a {rows}x{cols} matrix")
    if iterations < 0:
        raise InvalidArgumentError("iterations must be non-negative")

    rng = np.random.default_rng(seed)
    scale = np.sqrt(a.mean() / k)
    w = np.abs(rng.standard_normal((rows, k))) * scale
    h = np.abs(rng.standard_normal((k, cols))) * scale

    trace = [nmf_objective(a, w, h)]
    for _ in range(iterations):
        h *= (w.T @ a) / (w.T @ w @ h + eps)
        w *= (a @ h.T) / (w @ (h @ h.T) + eps)
        trace.append(nmf_objective(a, w, h))
    return NmfResult(w=w, h=h, final_objective=trace[-1], objective_trace=trace)


def pca_project_2d(points) -> np.ndarray:
    """Center the rows and project them onto the two leading principal axes.

    Axis signs follow the largest-magnitude-entry-positive rule so plots are
    reproducible.
    """
    a = as_matrix(points, "points")
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise InvalidArgumentError(f"need at least 2 rows and 2 cols, got {a.shape}")
    centered = a - a.mean(axis=0)
    res = svd_top_k(centered, 2)
    return centered @ res.right_vectors


def sample_variance(a: np.ndarray) -> np.ndarray:
    """Column variances with the (rows - 1) convention used by the PCA export."""
    return np.var(a, axis=0, ddof=1)
