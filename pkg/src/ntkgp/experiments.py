"""Experiment drivers shared by the command line and the acceptance tests."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional


from . import datagen as dg
from . import gp
from .dataio import fire_inverse, load_concrete, load_fire, regression_metrics
from .errors import ContractError, NtkGpError
from .kernels import GAUSSIAN, LAPLACE, KernelSpec
from .matching import MatchData, posterior_match

log = logging.getLogger(__name__)

DEFAULT_DEPTHS = (2, 3, 10)

# sizes and splits used for each synthetic family
DEFAULT_SIZES = {"parametric": 100, "ackley": 1000, "franke": 1000, "nonpoly": 1000,
                 "friedman1": 200, "friedman2": 200, "friedman3": 200}


@dataclass(frozen=True)
class SyntheticConfig:
    dataset: str = "parametric"
    n: Optional[int] = None
    train_fraction: float = 0.5
    depths: tuple = DEFAULT_DEPTHS
    noisy: bool = False
    normalize: bool = True
    x_rescale: bool = False
    y_rescale: bool = True
    divide_by: str = "variance"
    n_restart: int = 9
    alpha: float = gp.DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        if self.dataset not in DEFAULT_SIZES:
            raise ContractError(f"unknown dataset {self.dataset!r}; choose from {sorted(DEFAULT_SIZES)}")
        if not self.depths or any(int(d) < 0 for d in self.depths):
            raise ContractError("depths must be a non-empty list of nonnegative integers")

    @property
    def size(self):
        return self.n if self.n is not None else DEFAULT_SIZES[self.dataset]


@dataclass(frozen=True)
class RealConfig:
    dataset: str = "concrete"
    path: str = ""
    space: str = "Rd"
    depths: tuple = DEFAULT_DEPTHS
    train_fraction: float = 0.75
    divide_by: str = "variance"
    y_rescale: bool = True
    n_restart: int = 9
    alpha: float = gp.DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        if self.dataset not in ("concrete", "fire"):
            raise ContractError("dataset must be 'concrete' or 'fire'")
        if self.space not in ("Rd", "sphere"):
            raise ContractError("space must be 'Rd' or 'sphere'")


@dataclass
class CellResult:
    """One (depth, kernel) cell of an experiment grid."""

    depth: Optional[int]
    kernel: str
    status: str = "ok"
    metrics: dict = field(default_factory=dict)
    hyperparameters: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: str = ""


def _opts(cfg, y_rescale=None):
    return gp.FitOptions(n_restart=cfg.n_restart, alpha=cfg.alpha, seed=cfg.seed,
                         y_rescale=cfg.y_rescale if y_rescale is None else y_rescale)


def prepare_synthetic(cfg: SyntheticConfig):
    ds = dg.generate(cfg.dataset, cfg.size, cfg.seed, cfg.noisy)
    train, test = dg.split(ds, cfg.train_fraction, cfg.seed)
    return dg.prepare_inputs(train, test, cfg.x_rescale, cfg.normalize, cfg.divide_by)


def run_posterior_match(cfg: SyntheticConfig):
    """Fit an NTK GP per depth and match Laplace and Gaussian posterior means to it.

    Returns ``(cells, curves, test)`` where ``curves[depth]`` maps each
    kernel name to its posterior mean on the test inputs.  A failing cell is
    recorded with ``status="failed"`` and the sweep continues.
    """
    train, test = prepare_synthetic(cfg)
    data = MatchData(train.X, train.y, test.X)
    cells, curves = [], {}
    for depth in cfg.depths:
        t0 = time.perf_counter()
        kern = KernelSpec.ntk(int(depth), noise=1.0 if cfg.noisy else None)
        try:
            model = gp.fit(train.X, train.y, kern, _opts(cfg))
        except NtkGpError as exc:
            log.warning("NTK fit failed at depth %s: %s", depth, exc)
            cells.append(CellResult(depth, "ntk", "failed", error=str(exc),
                                    seconds=time.perf_counter() - t0))
            continue
        ntk_mean = gp.predict_mean(model, test.X)
        cells.append(CellResult(depth, "ntk", metrics=regression_metrics(test.y, ntk_mean),
                                hyperparameters=model.kernel.values(),
                                seconds=time.perf_counter() - t0))
        curves[depth] = {"ntk": ntk_mean}
        for kind in (LAPLACE, GAUSSIAN):
            t1 = time.perf_counter()
            try:
                rep = posterior_match(model, kind, data)
            except NtkGpError as exc:
                cells.append(CellResult(depth, kind, "failed", error=str(exc),
                                        seconds=time.perf_counter() - t1))
                continue
            curves[depth][kind] = rep.curve["matern_mean"]
            metrics = {"match_rmse": rep.rmse, "match_rho": rep.rho,
                       **regression_metrics(test.y, rep.curve["matern_mean"])}
            hyp = {"length_scale": rep.length_scale, "constant": model.kernel.values()["constant"]}
            if "noise" in model.kernel.values():
                hyp["noise"] = model.kernel.values()["noise"]
            cells.append(CellResult(depth, kind, rep.status, metrics, hyp,
                                    time.perf_counter() - t1))
    return cells, curves, test


def load_real(cfg: RealConfig):
    loader = load_concrete if cfg.dataset == "concrete" else load_fire
    return loader(cfg.path)


def run_fit_real(cfg: RealConfig, kernels=None):
    """Independently fit NTK (each depth), Laplace and Gaussian GPs with a noise term.

    Inputs are always rescaled; for the fire data the metrics are computed
    after mapping predictions back from the log scale.
    """
    ds = load_real(cfg)
    train, test = dg.split(ds, cfg.train_fraction, cfg.seed)
    train, test = dg.prepare_inputs(train, test, True, cfg.space == "sphere", cfg.divide_by)
    specs = [("ntk", d, KernelSpec.ntk(int(d), noise=1.0)) for d in cfg.depths]
    specs += [(LAPLACE, None, KernelSpec.laplace(noise=1.0)),
              (GAUSSIAN, None, KernelSpec.gaussian(noise=1.0))]
    if kernels is not None:
        specs = [s for s in specs if s[0] in kernels]
    y_true = fire_inverse(test.y) if cfg.dataset == "fire" else test.y
    cells, preds = [], {}
    for name, depth, kern in specs:
        t0 = time.perf_counter()
        try:
            model = gp.fit(train.X, train.y, kern, _opts(cfg))
        except NtkGpError as exc:
            cells.append(CellResult(depth, name, "failed", error=str(exc),
                                    seconds=time.perf_counter() - t0))
            continue
        pred = gp.predict_mean(model, test.X)
        if cfg.dataset == "fire":
            pred = fire_inverse(pred)
        preds[(name, depth)] = pred
        cells.append(CellResult(depth, name, metrics=regression_metrics(y_true, pred),
                                hyperparameters=model.kernel.values(),
                                seconds=time.perf_counter() - t0))
    return cells, preds, y_true


def cells_to_dicts(cells):
    return [asdict(c) for c in cells]
