"""Acceptance checks, one test per criterion.

Each test logs a ``CRITERION k: PASS|FAIL ...`` line before asserting, so the
summary at the end of the pytest run lists every outcome.  Run directly with
``python tests/test_acceptance.py``.
"""
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from ntkgp import gp
from ntkgp import matching as mt
from ntkgp.datagen import SampleBounds, latin_hypercube
from ntkgp.dataio import pearson, r_squared, rmse
from ntkgp.experiments import RealConfig, SyntheticConfig, run_fit_real, run_posterior_match
from ntkgp.kernels import KernelSpec, NtkParams, gram, ntk_beta_grad, ntk_eval, ntk_eval_normalized
from ntkgp.oracle import FiniteNetConfig, empirical_ntk_batch

from conftest import ACCEPTANCE_LINES, DATA_DIR, sphere_points


def report(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_criterion_01_normalized_diagonal():
    rng = np.random.default_rng(101)
    worst = 0.0
    with Timer() as t:
        for _ in range(10_000):
            d = int(rng.integers(1, 21))
            x = rng.standard_normal(d) * 10 ** rng.uniform(-2, 2)
            p = NtkParams(int(rng.integers(1, 11)), float(rng.uniform(0, 10)))
            worst = max(worst, abs(ntk_eval_normalized(x, x, p) - 1.0))
    ok = worst < 1e-12 and t.seconds < 10
    assert report(1, ok, f"max |k(x,x)-1|={worst:.2e} over 1e4 cases in {t.seconds:.1f}s")


def test_criterion_02_bias_gradient():
    rng = np.random.default_rng(202)
    worst, at_zero = 0.0, 0.0
    with Timer() as t:
        for _ in range(100):
            d = int(rng.integers(2, 11))
            x, z = rng.standard_normal((2, d))
            depth = int(rng.integers(1, 11))
            beta = float(rng.uniform(0.05, 10))
            h = 1e-5 * max(1.0, beta)
            g = ntk_beta_grad(x, z, NtkParams(depth, beta))
            fd = (ntk_eval_normalized(x, z, NtkParams(depth, beta + h))
                  - ntk_eval_normalized(x, z, NtkParams(depth, beta - h))) / (2 * h)
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd)))
            at_zero = max(at_zero, abs(ntk_beta_grad(x, z, NtkParams(depth, 0.0))))
    ok = worst < 1e-6 and at_zero == 0.0 and t.seconds < 5
    assert report(2, ok, f"max rel err={worst:.2e}, max |grad| at beta=0 is {at_zero:.1e}, {t.seconds:.2f}s")


def test_criterion_03_large_bias_limit():
    rng = np.random.default_rng(303)
    X, Z = sphere_points(rng, 100, 5), sphere_points(rng, 100, 5)
    with Timer() as t:
        gaps = []
        for x, z in zip(X, Z):
            lam = float(np.clip(x @ z, -1, 1))
            # the normalised depth-1 kernel divides by 2 (beta^2 + 1), so the limit is halved
            gaps.append(abs(ntk_eval_normalized(x, z, NtkParams(1, 1e6)) - 0.5 * (2 - math.acos(lam) / math.pi)))
    worst = max(gaps)
    ok = worst <= 1e-5 and t.seconds < 1
    assert report(3, ok, f"max gap={worst:.2e} over 100 sphere pairs, {t.seconds:.3f}s")


@pytest.mark.slow
def test_criterion_04_finite_width_oracle():
    rng = np.random.default_rng(404)
    X, Z = sphere_points(rng, 10, 3), sphere_points(rng, 10, 3)
    worst = 0.0
    with Timer() as t:
        for depth in (2, 3):
            mean, _ = empirical_ntk_batch(X, Z, FiniteNetConfig(depth, 5000, samples=100, seed=depth),
                                          biases=[0.0, 0.5])
            for i, beta in enumerate((0.0, 0.5)):
                exact = np.array([ntk_eval(x, z, NtkParams(depth, beta)) for x, z in zip(X, Z)])
                worst = max(worst, float(np.max(np.abs(mean[i] - exact) / np.abs(exact))))
    ok = worst <= 0.03 and t.seconds < 300
    assert report(4, ok, f"max rel err={worst:.4f} (H=5000, S=100, D in {{2,3}}, beta in {{0,0.5}}), {t.seconds:.0f}s")


def test_criterion_05_reference_pairs():
    x1, z1 = np.array([0.8027, 0.2299, 0.5503]), np.array([0.7982, 0.3818, 0.4658])
    x2, z2 = np.array([0.0389, 0.9663, 0.2545]), np.array([0.6941, 0.5958, 0.4040])
    with Timer() as t:
        d1 = mt.d_theta(x1, z1, 3, 2.122, 2.036)
        d2 = mt.d_theta(x2, z2, 3, 2.122, 2.036)
    ok = abs(d1 - 0.001296) <= 5e-3 and abs(d2 - 0.0000187) <= 5e-3 and t.seconds < 1
    assert report(5, ok, f"d1={d1:.6f} (0.001296), d2={d2:.7f} (0.0000187), {t.seconds:.4f}s")


@pytest.mark.slow
def test_criterion_06_bias_length_scale_matching():
    with Timer() as t:
        reps = {d: mt.match_bias_lengthscale(100, 1000, d, seed=0) for d in (3, 4, 5, 6)}
    ells = [reps[d].length_scale for d in (3, 4, 5, 6)]
    r3, r6 = reps[3], reps[6]
    ok6 = abs(r6.length_scale - 1.0524) <= 0.02
    ok3 = abs(r3.beta - 2.122) <= 0.1 and abs(r3.length_scale - 2.036) <= 0.1
    shape = all(a > b for a, b in zip(ells, ells[1:]))
    ok = ok6 and ok3 and shape and t.seconds < 120
    detail = (f"D=6 l={r6.length_scale:.4f}; D=3 beta={r3.beta:.3f} l={r3.length_scale:.3f}; "
              f"l over D=3..6 {[round(v, 3) for v in ells]}; {t.seconds:.0f}s")
    assert report(6, ok, detail)


def test_criterion_07_gp_equals_kernel_ridge():
    rng = np.random.default_rng(707)
    worst = 0.0
    with Timer() as t:
        for i in range(20):
            n, d = int(rng.integers(2, 31)), int(rng.integers(1, 6))
            X, y = rng.standard_normal((n, d)), rng.standard_normal(n)
            Xs = rng.standard_normal((7, d))
            lam = float(10 ** rng.uniform(-3, 0))
            base = [KernelSpec.ntk(int(rng.integers(1, 5)), float(rng.uniform(0, 2))),
                    KernelSpec.laplace(float(rng.uniform(0.3, 3))),
                    KernelSpec.gaussian(float(rng.uniform(0.3, 3)))][i % 3]
            # the GP adds a tiny jitter on top of the noise; 1e-14 keeps it far below the tolerance
            noisy = KernelSpec.from_dict({**base.to_dict(),
                                           "noise": {"value": n * lam, "bounds": [1e-5, 1e5], "fixed": True}}).fixed_all()
            model = gp.condition(X, y, noisy, alpha=1e-14, y_rescale=False)
            latent = base.fixed_all()
            K = gram(latent, X, X.copy())
            krr = gram(latent, Xs, X) @ np.linalg.solve(K + n * lam * np.eye(n), y)
            worst = max(worst, float(np.max(np.abs(gp.predict_mean(model, Xs) - krr))))
    ok = worst < 1e-8 and t.seconds < 5
    assert report(7, ok, f"max |GP mean - KRR| = {worst:.2e} over 20 problems, {t.seconds:.2f}s")


@pytest.mark.slow
def test_criterion_08_posterior_matching_on_circle():
    with Timer() as t:
        cells, _, _ = run_posterior_match(SyntheticConfig("parametric", n=100, depths=(2, 3, 10), seed=0))
    by = {(c.depth, c.kernel): c for c in cells}
    parts, ok = [], t.seconds < 120
    for depth in (2, 3, 10):
        lap, gau = by.get((depth, "laplace")), by.get((depth, "gaussian"))
        if lap is None or gau is None or "match_rho" not in lap.metrics or "match_rmse" not in gau.metrics:
            ok = False
            parts.append(f"D={depth} missing")
            continue
        rho, lr, gr = lap.metrics["match_rho"], lap.metrics["match_rmse"], gau.metrics["match_rmse"]
        ok = ok and rho >= 0.99 and lr < gr
        parts.append(f"D={depth} rho={rho:.4f} rmse lap={lr:.4f} gau={gr:.4f}")
    assert report(8, ok, "; ".join(parts) + f"; {t.seconds:.0f}s")


@pytest.mark.slow
def test_criterion_09_friedman1():
    r2 = {}
    with Timer() as t:
        for space, normalize in (("R10", False), ("S9", True)):
            cfg = SyntheticConfig("friedman1", depths=(2,), normalize=normalize, x_rescale=True,
                                  y_rescale=True, seed=0)
            cells, _, _ = run_posterior_match(cfg)
            ntk = [c for c in cells if c.kernel == "ntk"][0]
            r2[space] = ntk.metrics.get("r2", float("nan"))
    ok = r2["R10"] >= 0.70 and r2["S9"] >= 0.70 and t.seconds < 300
    assert report(9, ok, f"NTK D=2 R2 R10={r2['R10']:.4f} S9={r2['S9']:.4f}, {t.seconds:.0f}s")


def _fire_path():
    env = os.environ.get("NTKGP_FIRE_CSV")
    if env:
        return Path(env)
    return DATA_DIR / "forestfires.csv"


@pytest.mark.slow
def test_criterion_10_real_datasets():
    with Timer() as t:
        cells, _, _ = run_fit_real(RealConfig("concrete", str(DATA_DIR / "concrete.csv"), depths=(2,)),
                                   kernels={"ntk"})
        concrete_r2 = cells[0].metrics.get("r2", float("nan"))
        ok_concrete = concrete_r2 >= 0.85
        fire = _fire_path()
        if fire.exists():
            fcells, _, _ = run_fit_real(RealConfig("fire", str(fire)))
            ok_fire = all(c.status == "ok" and c.metrics["r2"] < 0 and 70 <= c.metrics["rmse"] <= 90
                          for c in fcells)
            fire_detail = ", ".join(f"{c.kernel}{'' if c.depth is None else c.depth} "
                                    f"r2={c.metrics.get('r2', float('nan')):.3f} "
                                    f"rmse={c.metrics.get('rmse', float('nan')):.1f}" for c in fcells)
        else:
            ok_fire = False
            fire_detail = f"data not found at {fire} (set NTKGP_FIRE_CSV)"
    ok = ok_concrete and ok_fire and t.seconds < 600
    assert report(10, ok, f"concrete NTK D=2 R2={concrete_r2:.4f}; fire: {fire_detail}; {t.seconds:.0f}s")


def _rmse_sum(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / len(a))


def _pearson_sum(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    return num / math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))


def _r2_sum(t, p):
    m = sum(t) / len(t)
    return 1 - sum((x - y) ** 2 for x, y in zip(t, p)) / sum((x - m) ** 2 for x in t)


def test_criterion_11_metrics_and_sampling():
    rng = np.random.default_rng(1111)
    worst, strata_ok = 0.0, True
    with Timer() as t:
        for n in (2, 5, 50, 500):
            a, b = rng.standard_normal((2, n))
            a_l, b_l = a.tolist(), b.tolist()
            worst = max(worst, abs(rmse(a, b) - _rmse_sum(a_l, b_l)),
                        abs(pearson(a, b) - _pearson_sum(a_l, b_l)),
                        abs(r_squared(a, b) - _r2_sum(a_l, b_l)))
        for n in (1, 2, 7, 100, 1000):
            for d in (1, 2, 5, 10):
                P = latin_hypercube(n, SampleBounds.box(-2.0, 3.0, d), seed=n + d)
                idx = np.minimum(np.floor((P + 2.0) / 5.0 * n).astype(int), n - 1)
                strata_ok &= all(np.array_equal(np.sort(idx[:, j]), np.arange(n)) for j in range(d))
    ok = worst < 1e-12 and strata_ok and t.seconds < 5
    assert report(11, ok, f"max metric deviation={worst:.1e}, LHS strata ok={strata_ok}, {t.seconds:.2f}s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
