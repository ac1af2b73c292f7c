"""
Where do the learned bases go?
==============================

Train briefly, then put the initial bases, the SVD and NMF components of
the data and the learned bases on one 2-D PCA plane and write it to CSV.
"""

import csv
import tempfile
from pathlib import Path

import numpy as np

from basisproj.config import ExperimentConfig
from basisproj.experiment import inspect_bases, train

out = Path(tempfile.mkdtemp(prefix="bases_"))
cfg = ExperimentConfig.from_dict({
    "steps": 200,
    "log_every": 100,
    "model": {"width": 16, "n_blocks": 2, "n_bases": 24},
    "optim": {"lr": 3e-3},
    "data": {"synthetic": {"n_samples": 32, "t_dim": 64}},
})
train(cfg, out_dir=out)

emb = inspect_bases(out / "final.ckpt", out / "embedding.csv",
                    initial=out / "initial_bases.npy", factorizations=True)

with open(out / "embedding.csv") as fh:
    rows = list(csv.DictReader(fh))
for name in ("initial", "svd", "nmf", "learned"):
    pts = np.array([[float(r["pc1"]), float(r["pc2"])] for r in rows if r["set_name"] == name])
    print(f"{name:8s} {len(pts):3d} points, centroid ({pts[:, 0].mean():+.3f}, {pts[:, 1].mean():+.3f})")
print("csv written to", out / "embedding.csv")

# to look at it:
# import matplotlib.pyplot as plt
# for name in ...: plt.scatter(...)
