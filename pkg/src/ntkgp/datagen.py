"""Synthetic regression datasets and input transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import ContractError, DegenerateInputError, ShapeError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs, responses and a record of how they were produced.

    ``rescale`` holds per-column ``(mean, divisor)`` arrays when the inputs
    were rescaled, ``normalized`` is true once rows lie on the unit sphere.
    """

    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)
    normalized: bool = False
    rescale: Optional[tuple] = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or len(self.X) != len(self.y):
            raise ShapeError(f"X must be n x d and y length n, got {self.X.shape} and {self.y.shape}")

    def __len__(self):
        return len(self.y)

    def subset(self, idx):
        return replace(self, X=self.X[idx], y=self.y[idx])


@dataclass(frozen=True)
class SampleBounds:
    low: tuple
    high: tuple

    def __post_init__(self):
        if len(self.low) != len(self.high) or not all(a < b for a, b in zip(self.low, self.high)):
            raise ContractError(f"need low < high per dimension, got {self.low}, {self.high}")

    @classmethod
    def box(cls, low, high, dim):
        return cls((float(low),) * dim, (float(high),) * dim)

    @property
    def dim(self):
        return len(self.low)


# ---------------------------------------------------------------------------
# Sampling


def latin_hypercube(n: int, bounds: SampleBounds, seed: int) -> np.ndarray:
    """One point per stratum per dimension, strata shuffled independently."""
    if n < 1:
        raise ContractError("n must be >= 1")
    unit = qmc.LatinHypercube(d=bounds.dim, rng=np.random.default_rng(seed)).random(n)
    return qmc.scale(unit, bounds.low, bounds.high)


def _noise(rng, n, sd, noisy):
    return rng.normal(0.0, sd, n) if noisy and sd > 0 else np.zeros(n)


# ---------------------------------------------------------------------------
# Parametric curve


def parametric_curve(y, t):
    r = np.asarray(y, dtype=float) ** 2 + 1
    return np.column_stack([r * np.sin(t), r * np.cos(t)])


def gen_parametric(n: int, seed: int, noise_sd: float = 0.0) -> Dataset:
    """Spiral in the plane whose radius encodes the response ``y``."""
    if n < 1:
        raise ContractError("n must be >= 1")
    rng = np.random.default_rng(seed)
    y = rng.uniform(-2.0, 2.0, n)
    t = rng.uniform(-2 * math.pi, 2 * math.pi, n)
    X = parametric_curve(y, t)
    y_obs = y + _noise(rng, n, noise_sd, True)
    return Dataset(X, y_obs, {"generator": "parametric", "n": n, "seed": seed, "noise_sd": noise_sd})


# ---------------------------------------------------------------------------
# 2-D test surfaces


def ackley(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    return (-20 * np.exp(-0.2 * np.sqrt(0.5 * (x1**2 + x2**2)))
            - np.exp(0.5 * (np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2))) + math.e + 20)


def franke(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    return (0.75 * np.exp(-((9 * x1 - 2) ** 2) / 4 - ((9 * x2 - 2) ** 2) / 4)
            + 0.75 * np.exp(-((9 * x1 + 1) ** 2) / 49 - (9 * x2 + 1) / 10)
            + 0.5 * np.exp(-((9 * x1 - 7) ** 2) / 4 - ((9 * x2 - 3) ** 2) / 4)
            - 0.2 * np.exp(-((9 * x1 - 4) ** 2) - (9 * x2 - 7) ** 2))


def nonpoly(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    return ((30 + 5 * x1 * np.sin(5 * x1)) * (4 + np.exp(-5 * x2)) - 100) / 6


SURFACES = {
    # name: (function, low, high, noise sd)
    "ackley": (ackley, 1.0, 7.0, 0.75),
    "franke": (franke, -0.5, 1.0, 0.10),
    "nonpoly": (nonpoly, 0.0, 2.0, 1.0),
}


def gen_surface(kind: str, n: int, seed: int, noisy: bool = False) -> Dataset:
    if kind not in SURFACES:
        raise ContractError(f"unknown surface {kind!r}; choose from {sorted(SURFACES)}")
    fn, lo, hi, sd = SURFACES[kind]
    X = latin_hypercube(n, SampleBounds.box(lo, hi, 2), seed)
    rng = np.random.default_rng([seed, 1])
    y = fn(X) + _noise(rng, n, sd, noisy)
    return Dataset(X, y, {"generator": kind, "n": n, "seed": seed, "noisy": noisy})


# ---------------------------------------------------------------------------
# Friedman benchmarks


def friedman1(X):
    X = np.atleast_2d(X)
    return (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
            + 10 * X[:, 3] + 5 * X[:, 4])


def _friedman_inner(X):
    return X[:, 1] * X[:, 2] - 1.0 / (X[:, 1] * X[:, 3])


def friedman2(X):
    X = np.atleast_2d(X)
    return np.sqrt(X[:, 0] ** 2 + _friedman_inner(X) ** 2)


def friedman3(X):
    X = np.atleast_2d(X)
    return np.arctan(_friedman_inner(X) / X[:, 0])


FRIEDMAN = {1: (friedman1, 1.5), 2: (friedman2, 5.0), 3: (friedman3, 0.15)}


def _friedman_inputs(which, n, rng):
    if which == 1:
        return rng.uniform(0.0, 1.0, (n, 10))
    return np.column_stack([
        100.0 * (1.0 - rng.uniform(0.0, 1.0, n)),  # (0, 100]: never exactly zero
        rng.uniform(40 * np.pi, 560 * np.pi, n),
        rng.uniform(0.0, 1.0, n),
        rng.uniform(1.0, 11.0, n),
    ])


def gen_friedman(which: int, n: int, seed: int, noisy: bool = False) -> Dataset:
    if which not in FRIEDMAN:
        raise ContractError(f"Friedman benchmark must be 1, 2 or 3, got {which!r}")
    if n < 1:
        raise ContractError("n must be >= 1")
    fn, sd = FRIEDMAN[which]
    rng = np.random.default_rng(seed)
    X = _friedman_inputs(which, n, rng)
    y = fn(X) + _noise(rng, n, sd, noisy)
    return Dataset(X, y, {"generator": f"friedman{which}", "n": n, "seed": seed, "noisy": noisy})


GENERATORS = ("parametric", *SURFACES, "friedman1", "friedman2", "friedman3")


def generate(name: str, n: int, seed: int, noisy: bool = False) -> Dataset:
    """Dispatch a generator by name with its default noise level."""
    if name == "parametric":
        return gen_parametric(n, seed, 0.15 if noisy else 0.0)
    if name in SURFACES:
        return gen_surface(name, n, seed, noisy)
    if name.startswith("friedman") and name[-1:] in "123":
        return gen_friedman(int(name[-1]), n, seed, noisy)
    raise ContractError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")


# ---------------------------------------------------------------------------
# Transforms


def normalize_to_sphere(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms[:, 0] == 0)
        raise DegenerateInputError(f"cannot project zero rows onto the sphere: rows {bad[:10].tolist()}")
    return X / norms


def column_stats(X, divide_by: str = "variance"):
    """Per-column ``(mean, divisor)``; the divisor is the population variance or std."""
    if divide_by not in ("variance", "std"):
        raise ContractError("divide_by must be 'variance' or 'std'")
    X = np.asarray(X, dtype=float)
    m = X.mean(axis=0)
    v = X.var(axis=0)
    s = v if divide_by == "variance" else np.sqrt(v)
    s = np.where(s > 0, s, 1.0)
    return m, s


def apply_rescale(X, stats):
    m, s = stats
    return (np.asarray(X, dtype=float) - m) / s


def rescale_columns(X, divide_by: str = "variance"):
    """Centre each column and divide by its variance (or std).  Returns ``(X', stats)``."""
    stats = column_stats(X, divide_by)
    return apply_rescale(X, stats), stats


def split(ds: Dataset, train_fraction: float, seed: int):
    """Seeded random partition; the training side gets ``floor(fraction * n)`` rows."""
    if not 0 < train_fraction < 1:
        raise ContractError("train_fraction must lie strictly between 0 and 1")
    n = len(ds)
    n_train = int(math.floor(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ContractError(f"split of {n} rows at {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def prepare_inputs(train: Dataset, test: Dataset, rescale: bool, normalize: bool,
                   divide_by: str = "variance"):
    """Apply the train-fitted rescale first, then sphere projection, to both sides."""
    Xtr, Xte, stats = train.X, test.X, None
    if rescale:
        Xtr, stats = rescale_columns(Xtr, divide_by)
        Xte = apply_rescale(Xte, stats)
    if normalize:
        Xtr, Xte = normalize_to_sphere(Xtr), normalize_to_sphere(Xte)
    return (replace(train, X=Xtr, normalized=normalize, rescale=stats),
            replace(test, X=Xte, normalized=normalize, rescale=stats))
