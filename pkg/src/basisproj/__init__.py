"""Basis-projected layer for pattern-sparse spectra, in plain numpy."""

__version__ = "0.1.0"

from .bpl import (  # noqa: E402
    BasisSet,
    InitSpec,
    ProjectionOutput,
    bpl_backward,
    bpl_forward,
    clamp_bases,
    init_bases,
    init_from_factorization,
    init_multivariate_normal,
    init_von_mises,
)
from .data import Dataset, SpectrumSample, SyntheticSpec, generate_synthetic, sparsity_ratio  # noqa: E402
from .linalg import nmf_factorize, pca_project_2d, svd_top_k  # noqa: E402
from .metrics import multilabel_f1, threshold_predict  # noqa: E402
from .nn import ClassifierModel, bce_loss, unit_vectorize  # noqa: E402
from .optim import AdamState, CosineSchedule, adam_step, lr_at_step  # noqa: E402
