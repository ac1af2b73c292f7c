"""Basis-projected layer.

Each data element ``x`` (an F-vector, e.g. one mass spectrum) is projected
onto ``N`` learnable bases. Stored bases ``B`` are clamped into the unit
p-norm ball, ``B' = B / max(1, ||B||_p)``, and the layer emits one scalar
coefficient per basis::

    c_n = (x . B'_n) / ||B'_n||_p

so the output has shape ``(..., N)``. Rows whose clamped norm falls below
``epsilon`` produce a zero coefficient and a zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .linalg import as_matrix, nmf_factorize, svd_top_k

DENOMINATORS = ("norm", "norm_squared")
# Rows are rescaled only beyond this norm; freshly clamped rows can read a
# few ulps above 1 and must not be rescaled again.
CLAMP_LIMIT = 1.0 + 1e-12
INIT_METHODS = ("von_mises", "multivariate_normal", "svd", "nmf")


@dataclass
class BasisSet:
    bases: np.ndarray
    norm_type: float = 2.0
    epsilon: float = 1e-12
    denominator: str = "norm"

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.float64)
        if self.bases.ndim != 2 or self.bases.shape[0] < 1 or self.bases.shape[1] < 1:
            raise InvalidArgumentError(f"bases must be a non-empty N x F matrix, got {self.bases.shape}")
        if not np.all(np.isfinite(self.bases)):
            raise InvalidArgumentError("bases contain NaN or Inf")
        if not self.norm_type > 0:
            raise InvalidArgumentError("norm_type must be positive")
        if self.denominator not in DENOMINATORS:
            raise InvalidArgumentError(f"denominator must be one of {DENOMINATORS}")

    @property
    def n_bases(self) -> int:
        return self.bases.shape[0]

    @property
    def element_dim(self) -> int:
        return self.bases.shape[1]


@dataclass
class ProjectionOutput:
    coefficients: np.ndarray
    inputs: np.ndarray
    raw_bases: np.ndarray
    clamped: np.ndarray
    raw_norms: np.ndarray
    norms: np.ndarray
    active: np.ndarray
    basis_set: BasisSet


@dataclass
class InitSpec:
    method: str = "von_mises"
    seed: int = 0
    concentration: float = math.pi
    center: Optional[np.ndarray] = None
    data: Optional[np.ndarray] = None
    nmf_iterations: int = 200

    def __post_init__(self):
        if self.method not in INIT_METHODS:
            raise InvalidArgumentError(f"unknown init method {self.method!r}; expected one of {INIT_METHODS}")


def row_norms(b: np.ndarray, p: float) -> np.ndarray:
    if p == 2:
        return np.sqrt(np.einsum("ij,ij->i", b, b))
    return np.sum(np.abs(b) ** p, axis=1) ** (1.0 / p)


def _norm_grad(b: np.ndarray, norms: np.ndarray, p: float) -> np.ndarray:
    # d||b||_p / db for rows with non-zero norm
    safe = np.where(norms > 0, norms, 1.0)[:, None]
    if p == 2:
        return b / safe
    return np.sign(b) * np.abs(b) ** (p - 1) / safe ** (p - 1)


def clamp_bases(b: BasisSet) -> BasisSet:
    """Rescale rows with p-norm above one back onto the unit sphere.

    Rows already inside the ball are returned untouched (bit-for-bit).
    """
    norms = row_norms(b.bases, b.norm_type)
    out = b.bases.copy()
    big = norms > CLAMP_LIMIT
    out[big] = b.bases[big] / norms[big, None]
    return replace(b, bases=out)


def bpl_forward(x, b: BasisSet) -> ProjectionOutput:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 1 or x.shape[-1] != b.element_dim:
        raise InvalidArgumentError(
            f"input last dimension {x.shape[-1] if x.ndim else None} != element_dim {b.element_dim}"
        )
    p = b.norm_type
    raw_norms = row_norms(b.bases, p)
    clamped = clamp_bases(b).bases
    norms = row_norms(clamped, p)
    active = norms >= b.epsilon
    denom = norms if b.denominator == "norm" else norms * norms
    # x . (B / s) / d == (x . B) / (s d): taking the inner product on the raw
    # rows keeps exactly orthogonal pairs at exactly zero
    shrink = np.where(raw_norms > CLAMP_LIMIT, raw_norms, 1.0)
    scale = np.zeros_like(norms)
    scale[active] = 1.0 / (shrink[active] * denom[active])
    coeffs = ((x.reshape(-1, b.element_dim) @ b.bases.T) * scale).reshape(*x.shape[:-1], b.n_bases)
    return ProjectionOutput(
        coefficients=coeffs,
        inputs=x,
        raw_bases=b.bases,
        clamped=clamped,
        raw_norms=raw_norms,
        norms=norms,
        active=active,
        basis_set=b,
    )


def bpl_backward(grad_y, cache: ProjectionOutput):
    """Gradients with respect to the input and the unclamped bases.

    The clamp is differentiated as part of the forward map; a row sitting
    exactly on the unit sphere uses the identity (unclamped) branch.
    """
    g = np.asarray(grad_y, dtype=np.float64)
    if g.shape != cache.coefficients.shape:
        raise InvalidArgumentError(f"grad shape {g.shape} != output shape {cache.coefficients.shape}")
    b = cache.basis_set
    p = b.norm_type
    q = 1.0 if b.denominator == "norm" else 2.0
    clamped, norms, active = cache.clamped, cache.norms, cache.active

    scale = np.zeros_like(norms)
    scale[active] = 1.0 / norms[active] ** q
    grad_x = (g.reshape(-1, g.shape[-1]) @ (clamped * scale[:, None])).reshape(cache.inputs.shape)

    n, f = clamped.shape
    g2 = g.reshape(-1, n)
    x2 = cache.inputs.reshape(-1, f)
    # sum over elements of g_n * x and of g_n * (x . B'_n)
    gx = g2.T @ x2
    dots = x2 @ clamped.T
    gdot = np.einsum("en,en->n", g2, dots)

    grad_clamped = np.zeros_like(clamped)
    dnorm = _norm_grad(clamped, norms, p)
    a = active
    grad_clamped[a] = gx[a] * scale[a, None] - (q * gdot[a] / norms[a] ** (q + 1))[:, None] * dnorm[a]

    grad_b = grad_clamped.copy()
    big = cache.raw_norms > CLAMP_LIMIT
    if np.any(big):
        raw = cache.raw_bases[big]
        r = cache.raw_norms[big]
        gr = _norm_grad(raw, r, p)
        gc = grad_clamped[big]
        proj = np.einsum("ij,ij->i", gc, raw)
        grad_b[big] = gc / r[:, None] - (proj / (r * r))[:, None] * gr
    return grad_x, grad_b


# -- initializers ---------------------------------------------------------


def sample_von_mises(kappa: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Angles from a von Mises(0, kappa) law, by Best & Fisher rejection sampling."""
    if not kappa > 0:
        raise InvalidArgumentError("concentration must be positive")
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    if kappa < 1e-5:
        r = 1.0 / kappa + kappa

    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(size - filled, 16)
        u1, u2, u3 = rng.random((3, m))
        z = np.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3[accept] - 0.5) * np.arccos(np.clip(f[accept], -1.0, 1.0))
        take = min(theta.size, size - filled)
        out[filled:filled + take] = theta[:take]
        filled += take
    return out


def _unit_center(spec: InitSpec, f: int) -> np.ndarray:
    if spec.center is None:
        return np.full(f, 1.0 / math.sqrt(f))
    c = np.asarray(spec.center, dtype=np.float64).reshape(-1)
    if c.size != f:
        raise InvalidArgumentError(f"center has length {c.size}, expected {f}")
    norm = np.linalg.norm(c)
    if not norm > 0:
        raise InvalidArgumentError("center vector must be non-zero")
    return c / norm


def init_von_mises(spec: InitSpec, n: int, f: int) -> BasisSet:
    """Unit bases whose angle to a center direction is von Mises distributed.

    The angle's magnitude is used, and the orthogonal direction is uniform,
    so the bases spread over the hemisphere around the center.
    """
    if f < 2:
        raise InvalidArgumentError("von Mises init needs element_dim >= 2")
    rng = np.random.default_rng(spec.seed)
    center = _unit_center(spec, f)
    theta = np.abs(sample_von_mises(spec.concentration, n, rng))
    g = rng.standard_normal((n, f))
    g -= np.outer(g @ center, center)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    bases = np.cos(theta)[:, None] * center + np.sin(theta)[:, None] * g
    bases /= np.linalg.norm(bases, axis=1, keepdims=True)
    return BasisSet(bases)


def init_multivariate_normal(spec: InitSpec, n: int, f: int) -> BasisSet:
    rng = np.random.default_rng(spec.seed)
    return BasisSet(rng.normal(0.0, 1.0 / math.sqrt(f), size=(n, f)))


def init_from_factorization(spec: InitSpec, n: int, f: int) -> BasisSet:
    if spec.data is None:
        raise InvalidArgumentError(f"{spec.method} init requires a data matrix")
    data = as_matrix(spec.data, "init data")
    if data.shape[1] != f:
        raise InvalidArgumentError(f"init data has {data.shape[1]} columns, expected {f}")
    cap = min(data.shape)
    if n > cap:
        raise CapacityError(f"{spec.method} can supply at most {cap} bases, {n} requested")
    if spec.method == "svd":
        return BasisSet(svd_top_k(data, n).right_vectors.T.copy())
    if spec.method == "nmf":
        h = nmf_factorize(data, n, iterations=spec.nmf_iterations, seed=spec.seed).h
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        return BasisSet(np.divide(h, norms, out=np.zeros_like(h), where=norms > 0))
    raise InvalidArgumentError(f"{spec.method} is not a factorization method")


def init_bases(spec: InitSpec, n: int, f: int) -> BasisSet:
    if n < 1 or f < 1:
        raise InvalidArgumentError("n and f must be positive")
    if spec.method == "von_mises":
        return init_von_mises(spec, n, f)
    if spec.method == "multivariate_normal":
        return init_multivariate_normal(spec, n, f)
    return init_from_factorization(spec, n, f)
