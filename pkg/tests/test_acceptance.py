"""Acceptance checks, one test per criterion, at the stated tolerances.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from basisproj.bpl import BasisSet, InitSpec, bpl_backward, bpl_forward, clamp_bases, init_bases, row_norms
from basisproj.checkpoint import load_checkpoint, save_checkpoint
from basisproj.config import ExperimentConfig
from basisproj.data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset, sparsity_ratio
from basisproj.errors import CapacityError
from basisproj.experiment import build_model, compare, front_output, train
from basisproj.linalg import nmf_factorize, svd_top_k
from basisproj.metrics import multilabel_f1
from basisproj.optim import AdamState, CosineSchedule, adam_step, lr_at_step

from oracles import all_binary_matrices, bessel_i, brute_f1, central_difference, jacobi_eigenvalues, rel_error

# desk-scale width used for the training criteria (see README)
DESK_WIDTH = 32


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@criterion(1, "BPL backward matches central differences")
def test_c01_gradient_correctness(record_property):
    t0 = time.perf_counter()
    worst, clamped, unclamped = 0.0, 0, 0
    for seed in range(120):
        rng = np.random.default_rng(seed)
        n, f = int(rng.integers(1, 6)), int(rng.integers(2, 7))
        b = rng.normal(size=(n, f))
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        b *= rng.uniform(0.2, 3.0, size=(n, 1))  # rows on both sides of the unit sphere
        clamped += int(np.sum(np.linalg.norm(b, axis=1) > 1))
        unclamped += int(np.sum(np.linalg.norm(b, axis=1) < 1))
        x = rng.normal(size=(3, f))
        g = rng.normal(size=(3, n))
        basis = BasisSet(b)
        gx, gb = bpl_backward(g, bpl_forward(x, basis))
        loss = lambda: float(np.sum(bpl_forward(x, basis).coefficients * g))
        worst = max(worst, rel_error(gx, central_difference(loss, x, 1e-6)),
                    rel_error(gb, central_difference(loss, basis.bases, 1e-6)))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max rel err {worst:.2e}, {elapsed:.1f}s, rows {clamped} clamped / {unclamped} not")
    assert clamped > 0 and unclamped > 0
    assert worst < 1e-4
    assert elapsed < 10


basis_arrays = hnp.arrays(
    np.float64,
    hnp.array_shapes(min_dims=2, max_dims=2, max_side=16),
    elements=st.floats(-1e6, 1e6, allow_nan=False),
)


@criterion(2, "clamp bound and bit-for-bit idempotence")
@settings(max_examples=1000, deadline=None, database=None)
@given(basis_arrays)
def test_c02_clamp_invariant(b):
    once = clamp_bases(BasisSet(b))
    assert np.all(row_norms(once.bases, 2) <= 1 + 1e-12)
    assert np.all(np.linalg.norm(once.bases, axis=1) <= 1 + 1e-12)
    assert clamp_bases(once).bases.tobytes() == once.bases.tobytes()


@criterion(3, "BPL output sparsity below 0.01; identity unchanged")
def test_c03_sparsity_annihilation(record_property):
    d = generate_synthetic(SyntheticSpec())
    x = d.intensities()
    before = sparsity_ratio(x)
    cfg = ExperimentConfig.from_dict({"model": {"width": DESK_WIDTH}})
    bpl = front_output(build_model(cfg, d.f_dim, d.n_classes), x)
    ident = front_output(build_model(cfg.replace(**{"model.front": "identity"}), d.f_dim, d.n_classes), x)
    after = sparsity_ratio(bpl)
    record_property("detail", f"input {before:.4f} -> BPL {after:.4f}, identity {sparsity_ratio(ident):.4f}")
    assert abs(before - 0.80) <= 0.02
    assert after < 0.01
    assert sparsity_ratio(ident) == before
    assert np.array_equal(ident, x)


@criterion(4, "orthogonal basis/element pairs give exactly zero")
def test_c04_orthogonal_exact_zero():
    rng = np.random.default_rng(0)
    for _ in range(500):
        half = int(rng.integers(1, 8))
        a = rng.integers(-50, 51, size=2 * half).astype(float)
        # pairwise rotation by 90 degrees: (a0, a1) -> (-a1, a0) is orthogonal in exact arithmetic
        b = np.empty_like(a)
        b[0::2], b[1::2] = -a[1::2], a[0::2]
        scale = float(rng.choice([0.25, 1.0, 64.0]))  # inside and outside the unit ball
        c = bpl_forward(a[None, :], BasisSet(scale * b[None, :])).coefficients
        assert c[0, 0] == 0.0
    # disjoint supports, the sparse case
    for _ in range(200):
        f = int(rng.integers(2, 30))
        mask = rng.random(f) < 0.5
        x = np.where(mask, rng.random(f), 0.0)
        b = np.where(~mask, rng.normal(size=f), 0.0)
        assert bpl_forward(x, BasisSet(b[None, :])).coefficients[0] == 0.0


@criterion(5, "SVD vs Gram eigen oracle; NMF monotone and non-negative")
def test_c05_factorization_oracles(record_property):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(40):
        r, c = int(rng.integers(1, 21)), int(rng.integers(1, 21))
        m = rng.normal(size=(r, c))
        k = min(r, c)
        gram = m.T @ m if c <= r else m @ m.T
        expected = np.sqrt(np.maximum(jacobi_eigenvalues(gram), 0.0))[:k]
        worst = max(worst, float(np.max(np.abs(svd_top_k(m, k).singular_values - expected))))
    record_property("detail", f"max singular value error {worst:.1e}")
    assert worst < 1e-8
    for _ in range(20):
        r, c = int(rng.integers(2, 21)), int(rng.integers(2, 21))
        k = int(rng.integers(1, min(r, c) + 1))
        res = nmf_factorize(rng.random((r, c)), k, iterations=200, seed=int(rng.integers(1000)))
        trace = np.array(res.objective_trace)
        # non-increasing at floating-point resolution: once at a fixed point the
        # objective may wobble by an ulp or two
        assert np.all(np.diff(trace) <= 8 * np.finfo(float).eps * trace[1:])
        assert res.w.min() >= 0 and res.h.min() >= 0


@criterion(6, "von Mises statistics, unit norms, capacity errors")
def test_c06_initializer_statistics(record_property):
    f = 48
    b = init_bases(InitSpec(method="von_mises", concentration=math.pi, seed=0), 2000, f).bases
    centre = np.full(f, 1 / math.sqrt(f))
    mean_cos = float(np.mean(b @ centre))
    oracle = bessel_i(1, math.pi) / bessel_i(0, math.pi)
    record_property("detail", f"mean cos {mean_cos:.4f} vs oracle {oracle:.4f}")
    assert abs(mean_cos - oracle) < 0.03
    assert np.max(np.abs(np.linalg.norm(b, axis=1) - 1)) < 1e-12
    data = np.random.default_rng(1).random((40, 10))
    for method in ("svd", "nmf"):
        with pytest.raises(CapacityError):
            init_bases(InitSpec(method=method, data=data), 11, 10)  # N > F
        with pytest.raises(CapacityError):
            init_bases(InitSpec(method=method, data=data[:6]), 7, 10)  # N > rows
        assert init_bases(InitSpec(method=method, data=data, nmf_iterations=20), 10, 10).n_bases == 10


@criterion(7, "Adam trace, schedule endpoints, quadratic minimization")
def test_c07_optimizer(record_property):
    params = {"p": np.array([1.0])}
    state = AdamState(base_lr=0.1)
    adam_step(params, {"p": np.array([2.0])}, state)
    p1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8)
    assert abs(params["p"][0] - p1) < 1e-12
    adam_step(params, {"p": np.array([-1.0])}, state)
    m2, v2 = 0.9 * 0.2 - 0.1, 0.999 * 0.004 + 0.001
    p2 = p1 - 0.1 * (m2 / (1 - 0.9 ** 2)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
    assert abs(params["p"][0] - p2) < 1e-12

    for lr_max, lr_min, total in ((1e-3, 0.0, 2000), (0.3, 0.01, 7), (1.0, 1e-6, 1)):
        s = CosineSchedule(lr_max, lr_min, total)
        assert lr_at_step(0, s) == lr_max
        assert lr_at_step(total, s) == lr_min

    params = {"p": np.array([0.0])}
    state = AdamState(base_lr=0.01)
    steps = 0
    while abs(params["p"][0] - 3.0) >= 1e-3 and steps < 5000:
        adam_step(params, {"p": 2 * (params["p"] - 3.0)}, state)
        steps += 1
    record_property("detail", f"quadratic converged in {steps} steps")
    assert abs(params["p"][0] - 3.0) < 1e-3


@criterion(8, "micro/macro F1 equal brute-force enumeration")
def test_c08_metric_oracle():
    mats = [np.array(m) for m in all_binary_matrices(3, 2)]
    worst = 0.0
    for pred in mats:
        for truth in mats:
            for mode in ("micro", "macro"):
                worst = max(worst, abs(multilabel_f1(pred, truth, mode) - brute_f1(pred.tolist(), truth.tolist(), mode)))
    assert len(mats) ** 2 == 2 ** 12
    assert worst < 1e-12


@criterion(9, "overfit 16 samples to train micro-F1 1.0")
def test_c09_overfit(record_property):
    cfg = ExperimentConfig.from_dict({
        "steps": 2000,
        "log_every": 250,
        "model": {"width": DESK_WIDTH},
        "data": {"synthetic": {"n_samples": 16}, "test_fraction": 0.0},
    })
    t0 = time.perf_counter()
    res = train(cfg)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"train micro-F1 {res.train_metrics.micro_f1:.4f}, {elapsed:.0f}s")
    assert res.train_metrics.micro_f1 == 1.0
    assert elapsed < 300


BENCH = {
    "steps": 2000,
    "log_every": 2000,
    "model": {"width": DESK_WIDTH},
    "compare": {"fronts": ["identity", "bpl"], "sizes": [48, 72], "initializers": ["von_mises"], "seeds": [0, 1, 2]},
}


@criterion(10, "held-out ordering BPL(N=F) > CNN + 0.02, BPL(N>F) >= BPL(N=F) - 0.01")
@pytest.mark.slow
def test_c10_directional_benchmark(record_property, tmp_path):
    t0 = time.perf_counter()
    report = compare(ExperimentConfig.from_dict(BENCH), out_dir=tmp_path)
    elapsed = time.perf_counter() - t0
    cells = {(c["front"], c["n_bases"]): c for c in report["cells"]}
    cnn = cells[("identity", 48)]["micro_f1"]
    eq = cells[("bpl", 48)]["micro_f1"]
    over = cells[("bpl", 72)]["micro_f1"]
    record_property("detail", f"CNN {cnn:.4f}, BPL N=48 {eq:.4f}, BPL N=72 {over:.4f}, {elapsed / 60:.1f} min")
    assert eq > cnn + 0.02
    assert over >= eq - 0.01
    assert elapsed < 30 * 60


@criterion(11, "determinism, resume and round-trips are bit-exact")
def test_c11_determinism_and_persistence(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "steps": 40, "log_every": 10, "checkpoint_every": 20, "model": {"width": 8, "n_blocks": 2},
    })
    train(cfg, out_dir=tmp_path / "a")
    train(cfg, out_dir=tmp_path / "b")
    for f in ("train_report.json", "final.ckpt", "config.json", "initial_bases.npy"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    resumed = train(cfg, out_dir=tmp_path / "r", resume=tmp_path / "a" / "checkpoints" / "step_0000020.ckpt")
    full = json.loads((tmp_path / "a" / "train_report.json").read_text())
    assert json.loads((tmp_path / "r" / "train_report.json").read_text()) == full
    assert (tmp_path / "r" / "final.ckpt").read_bytes() == (tmp_path / "a" / "final.ckpt").read_bytes()
    assert resumed.train_metrics.micro_f1 == full["train"]["micro_f1"]

    ck = load_checkpoint(tmp_path / "a" / "final.ckpt")
    save_checkpoint(ck, tmp_path / "copy.ckpt")
    assert (tmp_path / "copy.ckpt").read_bytes() == (tmp_path / "a" / "final.ckpt").read_bytes()

    d = generate_synthetic(SyntheticSpec(seed=3))
    save_dataset(d, tmp_path / "data")
    back = load_dataset(tmp_path / "data")
    assert back.intensities().tobytes() == d.intensities().tobytes()
    assert back.labels().tobytes() == d.labels().tobytes()
