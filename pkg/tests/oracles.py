"""Reference computations kept independent of the package code paths."""

import itertools
import math

import numpy as np


def jacobi_eigenvalues(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * np.linalg.norm(a):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def bessel_i(order, x, terms=60):
    """Modified Bessel function of the first kind by its power series."""
    total = 0.0
    for k in range(terms):
        total += (x / 2.0) ** (2 * k + order) / (math.factorial(k) * math.factorial(k + order))
    return total


def brute_counts(pred, truth):
    """TP/FP/FN per class by looping over every cell."""
    n, c = len(pred), len(pred[0])
    tp, fp, fn = [0] * c, [0] * c, [0] * c
    for i in range(n):
        for j in range(c):
            if pred[i][j] and truth[i][j]:
                tp[j] += 1
            elif pred[i][j] and not truth[i][j]:
                fp[j] += 1
            elif truth[i][j] and not pred[i][j]:
                fn[j] += 1
    return tp, fp, fn


def brute_f1(pred, truth, mode):
    tp, fp, fn = brute_counts(pred, truth)

    def f1(a, b, c):
        return 0.0 if 2 * a + b + c == 0 else 2 * a / (2 * a + b + c)

    if mode == "micro":
        return f1(sum(tp), sum(fp), sum(fn))
    return sum(f1(a, b, c) for a, b, c in zip(tp, fp, fn)) / len(tp)


def all_binary_matrices(rows, cols):
    for bits in itertools.product((0, 1), repeat=rows * cols):
        yield [list(bits[r * cols:(r + 1) * cols]) for r in range(rows)]


def central_difference(f, x, h=1e-6):
    """Numerical gradient of scalar f at array x (x is perturbed in place and restored)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))
