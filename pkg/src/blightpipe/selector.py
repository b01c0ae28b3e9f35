"""Wrapper feature selection with an equilibrium-optimizer search.

Candidate solutions are continuous positions in [0,1]^P binarized to
column masks (top-k, or a 0.5 threshold in penalty mode) and scored by
the validation error of an SVM restricted to the masked columns.

The search keeps an equilibrium pool of the 4 best solutions found so
far plus their mean. Each iteration, every particle draws a pool member
uniformly and moves by

    t   = (1 - iter/T) ** (a2 * iter / T)
    F   = a1 * sign(r - 0.5) * (exp(-lambda * t) - 1)
    GCP = 0.5 * r1  if r2 >= GP else 0          (r1, r2 scalars)
    G   = GCP * (C_eq - lambda * C) * F
    C  <- C_eq + (C - C_eq) * F + (G / lambda) * (1 - F)

with lambda, r drawn uniform in (0,1)^P and positions clamped to [0,1].

Determinism contract: particle i consumes counter-based substream i of
the configured seed, in this exact order: P initial position draws;
then per iteration P lambda draws, P r draws, one pool-pick draw, r1,
r2. The internal fitness folds come from substream 2**32.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svm
from .errors import ConfigurationError, StratificationError
from .featstore import make_folds, subset
from .rng import CounterRng, substream_seed

FOLD_STREAM = 2**32  # substream index reserved for fitness fold assignment


@dataclass(frozen=True)
class EoConfig:
    population: int = 10
    max_iter: int = 30
    a1: float = 2.0
    a2: float = 1.0
    generation_prob: float = 0.5
    target_k: int = None
    penalty_weight: float = 0.99
    seed: int = 0
    fitness_folds: int = 3

    def __post_init__(self):
        if self.population < 4:
            raise ConfigurationError("population must be >= 4 (equilibrium pool)")
        if not 0 < self.generation_prob < 1:
            raise ConfigurationError("generation_prob must lie strictly in (0,1)")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0")
        if self.target_k is not None and self.target_k < 1:
            raise ConfigurationError("target_k must be >= 1 when set")
        if not 0 < self.penalty_weight <= 1:
            raise ConfigurationError("penalty_weight must lie in (0,1]")
        if self.fitness_folds < 2:
            raise ConfigurationError("fitness_folds must be >= 2")


@dataclass(frozen=True)
class FeatureMask:
    indices: tuple
    total_cols: int

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", indices)
        if not indices:
            raise ConfigurationError("mask must select at least one column")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ConfigurationError("mask indices must be strictly increasing")
        if indices[0] < 0 or indices[-1] >= self.total_cols:
            raise ConfigurationError(
                f"mask indices must lie in [0, {self.total_cols})"
            )

    def __len__(self):
        return len(self.indices)


def binarize(position: np.ndarray, target_k, total_cols=None) -> FeatureMask:
    """Continuous position -> column mask.

    Fixed-k mode keeps the k largest coordinates, ties broken by smaller
    index. Penalty mode keeps coordinates > 0.5 and repairs an empty mask
    by promoting the single largest coordinate.
    """
    position = np.asarray(position, dtype=np.float64)
    if not np.isfinite(position).all():
        raise ConfigurationError("position contains non-finite values")
    p = position.shape[0]
    if total_cols is None:
        total_cols = p
    if target_k is not None:
        if target_k > p:
            raise ConfigurationError(f"target_k {target_k} exceeds {p} columns")
        order = np.argsort(-position, kind="stable")[:target_k]
        return FeatureMask(tuple(sorted(int(i) for i in order)), total_cols)
    chosen = np.flatnonzero(position > 0.5)
    if chosen.size == 0:
        chosen = np.array([int(np.argmax(position))])
    return FeatureMask(tuple(int(i) for i in chosen), total_cols)


def _fold_error(ds, mask, spec, folds, standardize, svm_options):
    """Mean held-out misclassification over the given internal folds."""
    cols = np.asarray(mask.indices)
    rates = []
    for fold in range(folds.k):
        train_rows = folds.train_indices(fold)
        test_rows = folds.test_indices(fold)
        train_ds = subset(ds, rows=train_rows, cols=cols)
        if len(np.unique(train_ds.labels)) < 2:
            raise StratificationError(f"fitness fold {fold} lost a class")
        model = svm.train(train_ds, spec, standardize=standardize, **svm_options)
        labels, _ = svm.predict_batch(
            model, ds.features.values[np.ix_(test_rows, cols)].astype(np.float64)
        )
        rates.append(float(np.mean(labels != ds.labels[test_rows])))
    return float(np.mean(rates))


def fitness(
    ds, mask: FeatureMask, spec, cfg: EoConfig, standardize=True, **svm_options
) -> float:
    """Wrapper objective; lower is better, deterministic given cfg.seed.

    Extra keyword arguments (tol, max_passes, cache_rows) reach the
    fitness SVM trainer unchanged.
    """
    folds = make_folds(
        ds.labels, cfg.fitness_folds, substream_seed(cfg.seed, FOLD_STREAM)
    )
    error = _fold_error(ds, mask, spec, folds, standardize, svm_options)
    if cfg.target_k is not None:
        return error
    w = cfg.penalty_weight
    return w * error + (1.0 - w) * (len(mask) / mask.total_cols)


@dataclass
class _Pool:
    """Elitist pool of the 4 best (fitness, position, mask) seen so far."""

    entries: list = field(default_factory=list)

    def offer(self, fit, position, mask):
        # strict improvement only, so equal-fitness entries never churn
        if len(self.entries) < 4:
            self.entries.append((fit, position.copy(), mask))
            self.entries.sort(key=lambda e: e[0])
            return
        if fit < self.entries[-1][0]:
            self.entries[-1] = (fit, position.copy(), mask)
            self.entries.sort(key=lambda e: e[0])

    def candidates(self):
        positions = [e[1] for e in self.entries]
        while len(positions) < 4:  # population >= 4 makes this a no-op
            positions.append(positions[-1])
        return positions + [np.mean(positions, axis=0)]

    @property
    def best(self):
        return self.entries[0]


def eo_select(ds, spec, cfg: EoConfig, standardize=True, **svm_options):
    """Run the optimizer; returns (best FeatureMask, best-fitness trace).

    The trace has one entry per iteration and is non-increasing. With
    max_iter = 0 the best of the random initial population is returned
    and the trace is empty.
    """
    p = ds.features.cols
    if cfg.target_k is not None and cfg.target_k > p:
        raise ConfigurationError(f"target_k {cfg.target_k} exceeds {p} columns")
    if len(np.unique(ds.labels)) < 2:
        raise StratificationError("selection needs both classes present")

    folds = make_folds(
        ds.labels, cfg.fitness_folds, substream_seed(cfg.seed, FOLD_STREAM)
    )
    cache = {}

    def score(position):
        mask = binarize(position, cfg.target_k, total_cols=p)
        if mask.indices not in cache:
            error = _fold_error(ds, mask, spec, folds, standardize, svm_options)
            if cfg.target_k is None:
                w = cfg.penalty_weight
                error = w * error + (1.0 - w) * (len(mask) / p)
            cache[mask.indices] = error
        return cache[mask.indices], mask

    streams = [
        CounterRng(substream_seed(cfg.seed, i)) for i in range(cfg.population)
    ]
    positions = [streams[i].uniform_array(p) for i in range(cfg.population)]
    pool = _Pool()
    for i in range(cfg.population):
        fit, mask = score(positions[i])
        pool.offer(fit, positions[i], mask)

    trace = []
    big_t = cfg.max_iter
    for it in range(1, big_t + 1):
        t = (1.0 - it / big_t) ** (cfg.a2 * it / big_t)
        candidates = pool.candidates()
        for i in range(cfg.population):
            rng = streams[i]
            lam = rng.uniform_array(p)
            r = rng.uniform_array(p)
            c_eq = candidates[rng.randbelow(len(candidates))]
            r1 = rng.uniform()
            r2 = rng.uniform()
            f = cfg.a1 * np.sign(r - 0.5) * (np.exp(-lam * t) - 1.0)
            gcp = 0.5 * r1 if r2 >= cfg.generation_prob else 0.0
            g = gcp * (c_eq - lam * positions[i]) * f
            positions[i] = c_eq + (positions[i] - c_eq) * f + (g / lam) * (1.0 - f)
            np.clip(positions[i], 0.0, 1.0, out=positions[i])
        for i in range(cfg.population):
            fit, mask = score(positions[i])
            pool.offer(fit, positions[i], mask)
        trace.append(pool.best[0])

    best_fit, _, best_mask = pool.best
    return best_mask, trace


def write_mask(path, mask: FeatureMask, seed: int, config_hash: str) -> None:
    """Mask CSV: provenance comment, header, one column index per line."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(
            f"# total_cols={mask.total_cols},seed={seed},config_hash={config_hash}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(["column_index"])
        for index in mask.indices:
            writer.writerow([index])


def load_mask(path):
    """Read a mask CSV; returns (FeatureMask, seed, config_hash)."""
    from .errors import FormatError

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{path}: missing provenance comment")
    meta = {}
    for item in lines[0].lstrip("#").strip().split(","):
        key, _, value = item.partition("=")
        meta[key] = value
    if len(lines) < 2 or lines[1] != "column_index":
        raise FormatError(f"{path}: missing column_index header")
    indices = tuple(int(line) for line in lines[2:] if line.strip())
    mask = FeatureMask(indices, int(meta["total_cols"]))
    return mask, int(meta["seed"]), meta.get("config_hash", "")


def write_trace(path, trace, config_hash: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["iteration", "best_fitness"])
        for i, value in enumerate(trace, start=1):
            writer.writerow([i, f"{value:.10g}"])
