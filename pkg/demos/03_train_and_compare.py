"""
Training a classifier with a projection front
=============================================

A small residual 1d-CNN over the time axis, with either the raw spectrum
or its projection coefficients as channels. Run sizes here are cut down
so the script finishes in under a minute on one core; the full
benchmark lives in the acceptance tests.
"""

from basisproj.config import ExperimentConfig
from basisproj.experiment import compare, train

base = {
    "steps": 300,
    "log_every": 100,
    "model": {"width": 16, "n_blocks": 4},
    "optim": {"lr": 3e-3},
    "data": {"synthetic": {"n_samples": 48, "t_dim": 64}},
}

cfg = ExperimentConfig.from_dict(base)
res = train(cfg)
print("train micro-F1", round(res.train_metrics.micro_f1, 4))
print("test  micro-F1", round(res.test_metrics.micro_f1, 4), "macro", round(res.test_metrics.macro_f1, 4))
print("sparsity before/after the front",
      round(res.test_metrics.sparsity_before, 4), round(res.test_metrics.sparsity_after, 4))

# a small grid: plain CNN against BPL at N = F with two initializers,
# plus a factorization cell that asks for more bases than F
grid = dict(base, compare={
    "fronts": ["identity", "bpl"],
    "sizes": [48, 72],
    "initializers": ["von_mises", "svd"],
})
report = compare(ExperimentConfig.from_dict(grid))
for c in report["cells"]:
    if c["status"] == "ok":
        print(f"{c['front']:10s} N={c['n_bases']:3d} {str(c['init']):10s} "
              f"micro-F1 {c['micro_f1']:.4f} ({c['pct_change_micro']:+.1f}%)")
    else:
        print(f"{c['front']:10s} N={c['n_bases']:3d} {str(c['init']):10s} -  {c['error']['type']}")
