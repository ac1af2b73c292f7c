"""
Four ways to start the bases
============================

von Mises directions around a centre, Gaussian rows, and components
from SVD or NMF of the data elements. The factorizations cannot give
more bases than the rank allows.
"""

import math

import numpy as np

from basisproj import InitSpec, init_bases
from basisproj.data import SyntheticSpec, generate_synthetic
from basisproj.errors import CapacityError

d = generate_synthetic(SyntheticSpec(n_samples=24))
elements = d.elements()  # (samples * T) x F
f = d.f_dim

for method in ("von_mises", "multivariate_normal", "svd", "nmf"):
    b = init_bases(InitSpec(method=method, seed=0, data=elements, nmf_iterations=100), 24, f).bases
    norms = np.linalg.norm(b, axis=1)
    print(f"{method:20s} norms {norms.min():.3f}..{norms.max():.3f}  mean entry {b.mean():+.4f}")

# the von Mises angle to the centre has mean cosine I1(k)/I0(k)
b = init_bases(InitSpec(method="von_mises", seed=1, concentration=math.pi), 2000, f).bases
print("mean cos to centre", np.mean(b @ np.full(f, 1 / math.sqrt(f))))

# N > F is fine for random draws but not for SVD or NMF
try:
    init_bases(InitSpec(method="svd", data=elements), 72, f)
except CapacityError as exc:
    print("svd with 72 bases:", exc)
