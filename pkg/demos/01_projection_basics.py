"""
Projecting sparse spectra onto learned bases
============================================

A basis-projected layer replaces each m/z vector of a spectrum by its
scalar projections onto N bases. Rows outside the unit ball are pulled
back onto it first, so the bases can only rotate and shrink.
"""

import numpy as np

from basisproj import BasisSet, InitSpec, bpl_forward, clamp_bases, init_bases
from basisproj.data import SyntheticSpec, generate_synthetic, sparsity_ratio

# a hand-sized case: x = [3, 4] against the first axis gives 3
print(bpl_forward(np.array([3.0, 4.0]), BasisSet([[1.0, 0.0]])).coefficients)

# the clamp rescales [3, 4] to [0.6, 0.8] and leaves short rows alone
print(clamp_bases(BasisSet([[3.0, 4.0], [0.3, 0.4]])).bases)

# shrinking a row inside the ball does not change the coefficient, it is
# the direction that matters
x = np.array([[2.0, 0.0]])
for row in ([0.5, 0.0], [0.25, 0.0], [4.0, 0.0]):
    print(row, bpl_forward(x, BasisSet([row])).coefficients[0, 0])

# a synthetic GC-MS-like dataset is about 80% zeros
d = generate_synthetic(SyntheticSpec())
x = d.intensities()
print("input sparsity", round(sparsity_ratio(x), 4))

# projected onto 48 bases drawn around the all-ones direction nearly
# every coefficient is non-zero; only an element orthogonal to a basis
# (e.g. disjoint support) keeps a zero
bases = init_bases(InitSpec(method="von_mises", seed=0), 48, d.f_dim)
out = bpl_forward(x, bases).coefficients
print("output shape", out.shape, "output sparsity", round(sparsity_ratio(out), 4))
