"""Shared builders and the brute-force QP oracle used by the SVM tests."""

import numpy as np

from blightpipe import svm
from blightpipe.featstore import FeatureMatrix, LabeledDataset


def make_dataset(x, y, ids=None) -> LabeledDataset:
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int8)
    if ids is None:
        ids = tuple(f"s{i:04d}" for i in range(len(y)))
    return LabeledDataset(FeatureMatrix(x), y, ids)


def planted_dataset(data_seed=2024, n=120, cols=6):
    """Label = sign(col0 + col1); remaining columns standard normal noise."""
    rng = np.random.default_rng(data_seed)
    x = rng.normal(size=(n, cols))
    y = np.sign(x[:, 0] + x[:, 1]).astype(np.int8)
    y[y == 0] = 1
    return make_dataset(x, y)


def toy_pipeline_dataset(data_seed=7, n=200, cols=64, informative=4):
    """Synthetic pipeline input: a few informative columns, the rest noise."""
    rng = np.random.default_rng(data_seed)
    y = np.where(rng.uniform(size=n) < 0.55, 1, -1).astype(np.int8)
    x = rng.normal(size=(n, cols))
    for j in range(informative):
        x[:, j] = y * 1.2 + rng.normal(scale=0.4, size=n)
    return make_dataset(x, y)


# ---------------------------------------------------------------------------
# Brute-force dual QP oracle.
#
# The SVM dual maximizes W(a) = sum(a) - 0.5 (a*y)' K (a*y) over the box
# [0, C]^n subject to sum(a*y) = 0. The last variable is eliminated through
# the equality constraint and the rest is searched on a refining grid: each
# pass lays a uniform grid over the current box, then re-centers a box of
# one old step half-width on the best point, until the spacing reaches the
# requested resolution. The dual is concave, so the incumbent cannot be
# trapped away from the optimum; the oracle is additionally checked against
# the hand-solved instances in test_svm.py.


def dual_objective(alpha, y, gram):
    alpha = np.asarray(alpha, dtype=np.float64)
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ gram @ v)


def best_grid_objective(y, gram, c, resolution=1e-3, steps=15):
    """Maximal W over the refining feasible grid; returns (w, alpha)."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    free = n - 1
    q = (y[:, None] * y[None, :]) * gram
    centers = np.full(free, c / 2.0)
    half = c / 2.0
    best_w, best_alpha = -np.inf, None
    while True:
        axes = [
            np.linspace(max(0.0, m - half), min(c, m + half), steps)
            for m in centers
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        last = -y[-1] * (pts @ y[:free])
        ok = (last >= -1e-9) & (last <= c + 1e-9)
        if ok.any():
            full = np.concatenate(
                [pts[ok], np.clip(last[ok], 0.0, c)[:, None]], axis=1
            )
            for chunk in np.array_split(full, max(1, len(full) // 200_000)):
                w = chunk.sum(axis=1) - 0.5 * np.einsum(
                    "ij,jk,ik->i", chunk, q, chunk
                )
                i = int(np.argmax(w))
                if w[i] > best_w:
                    best_w, best_alpha = float(w[i]), chunk[i].copy()
        step = 2.0 * half / (steps - 1)
        if step <= resolution:
            return best_w, best_alpha
        if best_alpha is not None:
            centers = best_alpha[:free]
        half = step


def independent_kkt_gap(model, spec, points, y, c, strict=1e-9):
    """Max-violating-pair gap recomputed from a model's pruned duals.

    Reconstructs the full alpha vector by matching support rows back to
    dataset rows (the dual coefficient sign identifies the label when
    identical rows carry opposite labels), then evaluates the
    two-threshold condition from its definition. Returns (gap, alpha).
    """
    points = np.asarray(points, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(len(y))
    for j, row in enumerate(model.support_rows):
        matches = np.flatnonzero(
            (np.abs(points - row[None, :]) < 1e-12).all(axis=1)
        )
        sign = 1.0 if model.dual_coefs[j] > 0 else -1.0
        hit = next(m for m in matches if alpha[m] == 0.0 and y[m] == sign)
        alpha[hit] = abs(model.dual_coefs[j])
    gram = svm.kernel_matrix(spec, points, points)
    f_err = gram @ (alpha * y) - y
    up = ((y > 0) & (alpha < c - strict)) | ((y < 0) & (alpha > strict))
    low = ((y > 0) & (alpha > strict)) | ((y < 0) & (alpha < c - strict))
    if not (up.any() and low.any()):
        return 0.0, alpha
    return float(f_err[low].max() - f_err[up].min()), alpha
