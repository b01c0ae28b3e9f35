"""Binary kernel SVM trained with sequential minimal optimization.

The solver keeps the two-threshold bookkeeping of Keerthi-style SMO: with
F_i = f_i - y_i (f_i the biasless decision value), b_up is the minimum F
over the "up" index set ((y > 0 and alpha < C) or (y < 0 and alpha > 0))
and b_low the maximum F over the "low" set ((y > 0 and alpha > 0) or
(y < 0 and alpha < C)). Each step optimizes the maximal violating pair
(i_low, i_up) analytically; training stops when b_low - b_up <= 2 * tol
and the bias is -(b_up + b_low) / 2.

Kernels divide inputs by the scale sigma:

    linear       <x/s, y/s>
    polynomial   (1 + <x/s, y/s>) ** degree
    gaussian     exp(-|x - y|^2 / s^2)    (no factor 2 in the exponent)

The six stock classifier variants share C = 1: linear, quadratic and cubic
polynomial at scale 1 (inputs are standardized first), and fine / medium /
coarse gaussian at scale sqrt(P)/4, sqrt(P), 4*sqrt(P).
"""

import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DimensionError,
    FormatError,
    TrainingError,
)
from .featstore import ColumnStats, standardize_apply, standardize_fit

KINDS = ("linear", "polynomial", "gaussian")
ALPHA_SNAP = 1e-8  # dual variables this close to a bound are set on it


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    scale: float = 1.0
    degree: int = 0
    box_constraint: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree not in (2, 3):
            raise ConfigurationError(
                f"polynomial degree must be 2 or 3, got {self.degree}"
            )
        if self.scale <= 0:
            raise ConfigurationError("kernel scale must be positive")
        if self.box_constraint <= 0:
            raise ConfigurationError("box constraint must be positive")


def kernel_scale_for(kind_variant: str, num_features: int) -> float:
    """MATLAB-style preset scales for the gaussian variants."""
    if num_features < 1:
        raise ConfigurationError("num_features must be >= 1")
    root = float(np.sqrt(num_features))
    try:
        return {"fine": root / 4, "medium": root, "coarse": 4 * root, "unit": 1.0}[
            kind_variant
        ]
    except KeyError:
        raise ConfigurationError(f"unknown scale variant {kind_variant!r}") from None


def classifier_suite(num_features: int, box_constraint: float = 1.0):
    """The six stock (name, KernelSpec) variants for P input columns."""
    c = box_constraint
    return [
        ("linear", KernelSpec("linear", 1.0, box_constraint=c)),
        ("quadratic", KernelSpec("polynomial", 1.0, degree=2, box_constraint=c)),
        ("cubic", KernelSpec("polynomial", 1.0, degree=3, box_constraint=c)),
        ("fine-gaussian",
         KernelSpec("gaussian", kernel_scale_for("fine", num_features), box_constraint=c)),
        ("medium-gaussian",
         KernelSpec("gaussian", kernel_scale_for("medium", num_features), box_constraint=c)),
        ("coarse-gaussian",
         KernelSpec("gaussian", kernel_scale_for("coarse", num_features), box_constraint=c)),
    ]


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise kernel values between the rows of a (m,P) and b (k,P)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"kernel inputs have {a.shape[1]} and {b.shape[1]} columns"
        )
    s2 = spec.scale * spec.scale
    if spec.kind == "linear":
        return (a @ b.T) / s2
    if spec.kind == "polynomial":
        return (1.0 + (a @ b.T) / s2) ** spec.degree
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / s2)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    return float(kernel_matrix(spec, x, y)[0, 0])


class _RowCache:
    """LRU cache of full kernel rows keyed by training-row index."""

    def __init__(self, compute, capacity: int):
        self._compute = compute
        self._capacity = max(1, int(capacity))
        self._rows = OrderedDict()

    def row(self, i: int) -> np.ndarray:
        rows = self._rows
        if i in rows:
            rows.move_to_end(i)
            return rows[i]
        value = self._compute(i)
        rows[i] = value
        if len(rows) > self._capacity:
            rows.popitem(last=False)
        return value


@dataclass(frozen=True)
class SvmModel:
    """Trained classifier; immutable, predict is pure.

    ``support_rows`` are stored in standardized space; ``stats`` maps raw
    inputs into that space at prediction time. ``dual_coefs`` are the
    signed products alpha_i * y_i.
    """

    support_rows: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    kernel: KernelSpec
    stats: ColumnStats

    @property
    def num_features(self) -> int:
        return self.support_rows.shape[1]


def _smo(rows_of, y, c, tol, budget):
    """Core pair-update loop; returns (alpha, bias, gap, steps)."""
    n = y.shape[0]
    alpha = np.zeros(n)
    f_err = -y.astype(np.float64)  # F_i with all alpha zero
    pos, neg = y > 0, y < 0
    steps = 0
    while True:
        up = (pos & (alpha < c)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < c))
        if not up.any() or not low.any():
            b_up = f_err[up].min() if up.any() else None
            b_low = f_err[low].max() if low.any() else None
            gap = 0.0
            break
        up_idx = np.flatnonzero(up)
        low_idx = np.flatnonzero(low)
        i_up = up_idx[np.argmin(f_err[up_idx])]
        i_low = low_idx[np.argmax(f_err[low_idx])]
        b_up, b_low = f_err[i_up], f_err[i_low]
        gap = b_low - b_up
        if gap <= 2.0 * tol:
            break
        if steps >= budget:
            raise ConvergenceError(
                f"no convergence after {steps} pair steps", kkt_gap=float(gap)
            )
        steps += 1

        i1, i2 = int(i_low), int(i_up)
        y1, y2 = float(y[i1]), float(y[i2])
        a1o, a2o = alpha[i1], alpha[i2]
        if y1 != y2:
            lo, hi = max(0.0, a2o - a1o), min(c, c + a2o - a1o)
        else:
            lo, hi = max(0.0, a2o + a1o - c), min(c, a2o + a1o)
        row1 = rows_of(i1)
        row2 = rows_of(i2)
        eta = row1[i1] + row2[i2] - 2.0 * row1[i2]
        slope = y2 * (f_err[i1] - f_err[i2])
        if eta > 1e-15:
            a2n = min(hi, max(lo, a2o + slope / eta))
        else:
            # flat or degenerate direction: best feasible endpoint
            gain_lo = (lo - a2o) * slope - 0.5 * eta * (lo - a2o) ** 2
            gain_hi = (hi - a2o) * slope - 0.5 * eta * (hi - a2o) ** 2
            a2n = lo if gain_lo >= gain_hi else hi
        a1n = a1o - y1 * y2 * (a2n - a2o)
        if a1n < ALPHA_SNAP:
            a1n = 0.0
        elif a1n > c - ALPHA_SNAP:
            a1n = c
        if a2n < ALPHA_SNAP:
            a2n = 0.0
        elif a2n > c - ALPHA_SNAP:
            a2n = c
        d1, d2 = a1n - a1o, a2n - a2o
        alpha[i1], alpha[i2] = a1n, a2n
        f_err += (y1 * d1) * row1 + (y2 * d2) * row2

    if b_up is None:
        bias = -float(b_low)
    elif b_low is None:
        bias = -float(b_up)
    else:
        bias = -(float(b_up) + float(b_low)) / 2.0
    return alpha, bias, float(gap), steps


def train(
    ds,
    spec: KernelSpec,
    tol: float = 1e-3,
    max_passes: int = 200,
    standardize: bool = True,
    cache_rows: int = 1024,
) -> SvmModel:
    """Fit an SVM on a labeled dataset.

    Standardization stats are fit on this data and stored in the model, so
    predict accepts raw feature vectors. The pair-step budget is
    max_passes * n; exhausting it raises ConvergenceError with the final
    KKT gap.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    y = ds.labels.astype(np.float64)
    if not ((y > 0).any() and (y < 0).any()):
        raise TrainingError("training data must contain both classes")
    if standardize:
        stats = standardize_fit(ds.features)
    else:
        stats = ColumnStats.identity(ds.features.cols)
    x = standardize_apply(ds.features, stats).values.astype(np.float64)

    cache = _RowCache(
        lambda i: kernel_matrix(spec, x[i : i + 1], x)[0], capacity=cache_rows
    )
    c = float(spec.box_constraint)
    n = y.shape[0]
    alpha, bias, gap, _ = _smo(cache.row, y, c, tol, budget=max_passes * n)

    balance = float(np.dot(alpha, y))
    if abs(balance) > 1e-6 * c * n:
        raise TrainingError(f"dual constraint violated: sum alpha*y = {balance:g}")
    support = alpha > ALPHA_SNAP
    return SvmModel(
        support_rows=np.ascontiguousarray(x[support]),
        dual_coefs=alpha[support] * y[support],
        bias=bias,
        kernel=spec,
        stats=stats,
    )


def decision_values(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Decision function over raw feature rows (m, P)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.stats.mean.shape[0]:
        raise DimensionError(
            f"input has {x.shape[1]} columns, model expects {model.stats.mean.shape[0]}"
        )
    from .featstore import FeatureMatrix

    xs = standardize_apply(FeatureMatrix(x.astype(np.float32)), model.stats)
    if model.support_rows.shape[0] == 0:
        return np.full(x.shape[0], model.bias)
    k = kernel_matrix(model.kernel, xs.values.astype(np.float64), model.support_rows)
    return k @ model.dual_coefs + model.bias


def predict(model: SvmModel, x) -> tuple:
    """Classify one raw feature vector; ties at 0 go to the positive class."""
    value = float(decision_values(model, np.asarray(x, dtype=np.float64)[None, :])[0])
    return (1 if value >= 0 else -1), value


def predict_batch(model: SvmModel, x: np.ndarray) -> tuple:
    values = decision_values(model, x)
    labels = np.where(values >= 0, 1, -1).astype(np.int8)
    return labels, values


MODEL_MAGIC = b"SVMMODL1"
_KIND_CODE = {"linear": 0, "polynomial": 1, "gaussian": 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def save_model(model: SvmModel, path) -> None:
    """Versioned binary container; round trip is bit-exact."""
    n_sv, p = model.support_rows.shape
    head = MODEL_MAGIC + struct.pack(
        "<IIdddII",
        _KIND_CODE[model.kernel.kind],
        model.kernel.degree,
        model.kernel.scale,
        model.kernel.box_constraint,
        model.bias,
        n_sv,
        p,
    )
    body = b"".join(
        np.ascontiguousarray(part, dtype=dt).tobytes()
        for part, dt in (
            (model.stats.mean, "<f8"),
            (model.stats.std, "<f8"),
            (model.stats.constant, "u1"),
            (model.dual_coefs, "<f8"),
            (model.support_rows, "<f8"),
        )
    )
    Path(path).write_bytes(head + body)


def load_model(path) -> SvmModel:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:8] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file", offset=0)
    kind_code, degree, scale, c, bias, n_sv, p = struct.unpack_from("<IIdddII", raw, 8)
    if kind_code not in _CODE_KIND:
        raise FormatError(f"{path}: unknown kernel code {kind_code}", offset=8)
    offset = 8 + struct.calcsize("<IIdddII")
    expected = offset + 8 * p + 8 * p + p + 8 * n_sv + 8 * n_sv * p
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes, found {len(raw)}",
            offset=min(len(raw), expected),
        )

    def take(count, dt):
        nonlocal offset
        width = np.dtype(dt).itemsize * count
        out = np.frombuffer(raw, dtype=dt, count=count, offset=offset).copy()
        offset += width
        return out

    mean = take(p, "<f8")
    std = take(p, "<f8")
    constant = take(p, "u1").astype(bool)
    dual = take(n_sv, "<f8")
    rows = take(n_sv * p, "<f8").reshape(n_sv, p)
    spec = KernelSpec(
        _CODE_KIND[kind_code], scale, degree=degree, box_constraint=c
    )
    return SvmModel(
        support_rows=rows,
        dual_coefs=dual,
        bias=bias,
        kernel=spec,
        stats=ColumnStats(mean=mean, std=std, constant=constant),
    )
