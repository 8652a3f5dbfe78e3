import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ntkgp.errors import ContractError, DegenerateInputError, DomainError, ShapeError
from ntkgp.kernels import (KernelSpec, MaternParams, NtkParams, gaussian_eval, gram,
                           gram_with_grads, kappa0, kappa1, kernel_diag, laplace_eval,
                           ntk_beta_grad, ntk_eval, ntk_eval_normalized, ntk_recursion,
                           ntk_shallow_limit)

from conftest import sphere_points

PAIR1 = (np.array([0.8027, 0.2299, 0.5503]), np.array([0.7982, 0.3818, 0.4658]))


def naive_ntk(x, z, depth, beta):
    """Layer-by-layer scalar evaluation written out from the closed forms."""
    nx, nz = math.sqrt(sum(a * a for a in x)), math.sqrt(sum(b * b for b in z))
    s = sum(a * b for a, b in zip(x, z))
    t = s + beta**2
    for _ in range(depth):
        lam = max(-1.0, min(1.0, s / (nx * nz)))
        ang = math.acos(lam)
        sdot = (math.pi - ang) / math.pi
        s = (math.sin(ang) + (math.pi - ang) * math.cos(ang)) / math.pi * nx * nz
        t = t * sdot + s + beta**2
    return t


class TestArcCosine:
    def test_known_values(self):
        assert kappa0(1.0) == pytest.approx(1.0)
        assert kappa0(0.0) == pytest.approx(0.5)
        assert kappa0(-1.0) == pytest.approx(0.0)
        assert kappa1(1.0) == pytest.approx(1.0)
        assert kappa1(0.0) == pytest.approx(1 / math.pi)
        assert kappa1(-1.0) == pytest.approx(0.0, abs=1e-15)

    def test_clamps_rounding_overshoot(self):
        assert kappa0(1 + 1e-12) == pytest.approx(1.0)
        assert kappa1(-1 - 1e-12) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_out_of_domain(self):
        with pytest.raises(DomainError):
            kappa0(1.1)
        with pytest.raises(DomainError):
            kappa1(-1.5)

    @given(st.floats(-1, 1))
    def test_kappa1_matches_trig_form(self, u):
        th = math.acos(u)
        assert kappa1(u) == pytest.approx((math.sin(th) + (math.pi - th) * math.cos(th)) / math.pi,
                                          abs=1e-14)


class TestNtkRecursion:
    def test_depth_zero_is_affine_dot_product(self, rng):
        x, z = rng.standard_normal((2, 4))
        assert ntk_eval(x, z, NtkParams(0, 0.7)) == pytest.approx(x @ z + 0.49)

    def test_depth_one_closed_form(self):
        x, z = PAIR1
        lam = x @ z / (np.linalg.norm(x) * np.linalg.norm(z))
        nn = np.linalg.norm(x) * np.linalg.norm(z)
        b2 = 1.3**2
        want = (x @ z + b2) * kappa0(lam) + kappa1(lam) * nn + b2
        assert ntk_eval(x, z, NtkParams(1, 1.3)) == pytest.approx(want, rel=1e-14)

    @pytest.mark.parametrize("depth", [1, 2, 3, 6, 10])
    @pytest.mark.parametrize("beta", [0.0, 0.5, 3.0])
    def test_vectorised_agrees_with_naive(self, rng, depth, beta):
        for _ in range(5):
            x, z = rng.standard_normal((2, 5)) * rng.uniform(0.2, 4)
            assert ntk_eval(x, z, NtkParams(depth, beta)) == pytest.approx(
                naive_ntk(x, z, depth, beta), rel=1e-12)

    def test_state_exposes_every_layer(self):
        st_ = ntk_recursion(*PAIR1, depth=3, bias=0.5)
        assert len(st_.theta) == 4 and len(st_.lam) == 3
        assert st_.theta[-1] == pytest.approx(ntk_eval(*PAIR1, NtkParams(3, 0.5)))
        assert all(-1 <= l <= 1 for l in st_.lam)

    def test_sphere_diagonal(self, rng):
        x = sphere_points(rng, 1, 6)[0]
        for D in (1, 3, 7):
            assert ntk_eval(x, x, NtkParams(D, 2.0)) == pytest.approx((D + 1) * 5.0)

    def test_zero_input_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            ntk_eval(np.zeros(3), np.ones(3), NtkParams(2, 0.0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ntk_eval(np.ones(3), np.ones(2), NtkParams(2, 0.0))

    def test_symmetry(self, rng):
        x, z = rng.standard_normal((2, 4))
        p = NtkParams(4, 1.1)
        assert ntk_eval_normalized(x, z, p) == ntk_eval_normalized(z, x, p)

    def test_antipodal_inputs(self):
        x = np.array([1.0, 0.0])
        k = ntk_eval_normalized(x, -x, NtkParams(2, 0.0))
        assert np.isfinite(k) and -1 <= k <= 1


class TestParams:
    @pytest.mark.parametrize("kw", [dict(depth=-1), dict(depth=2, bias=-0.1),
                                    dict(depth=2, constant=0.0), dict(depth=2, noise=-1.0),
                                    dict(depth=2, normalization="other")])
    def test_invalid_ntk_params(self, kw):
        with pytest.raises(ContractError):
            NtkParams(**kw)

    def test_invalid_matern(self):
        with pytest.raises(ContractError):
            MaternParams(0.0)
        with pytest.raises(ContractError):
            MaternParams(1.0, nu="three-halves")


class TestNormalisation:
    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-100, 100)),
           st.integers(1, 10), st.floats(0, 10))
    def test_unit_diagonal_anywhere(self, x, depth, beta):
        if np.linalg.norm(x) < 1e-6:
            return
        assert abs(ntk_eval_normalized(x, x, NtkParams(depth, beta)) - 1) < 1e-12

    def test_constant_mode_matches_on_sphere(self, rng):
        x, z = sphere_points(rng, 2, 4)
        a = ntk_eval_normalized(x, z, NtkParams(3, 0.8))
        b = ntk_eval_normalized(x, z, NtkParams(3, 0.8, normalization="constant"))
        assert a == pytest.approx(b, rel=1e-13)

    def test_constant_mode_off_sphere_is_not_unit(self):
        x = np.array([3.0, 4.0])
        assert ntk_eval_normalized(x, x, NtkParams(2, 0.0, normalization="constant")) == pytest.approx(25.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 8), st.floats(0, 5), st.integers(0, 2**32 - 1))
    def test_bounded_by_one_on_sphere(self, depth, beta, seed):
        x, z = sphere_points(np.random.default_rng(seed), 2, 3)
        assert abs(ntk_eval_normalized(x, z, NtkParams(depth, beta))) <= 1 + 1e-12


class TestBetaGradient:
    def test_zero_at_zero_bias(self, rng):
        x, z = rng.standard_normal((2, 3))
        for D in (1, 2, 5):
            for mode in ("diagonal", "constant"):
                assert ntk_beta_grad(x, z, NtkParams(D, 0.0, normalization=mode)) == 0.0

    @pytest.mark.parametrize("mode", ["diagonal", "constant"])
    def test_central_difference(self, rng, mode):
        for _ in range(30):
            x, z = rng.standard_normal((2, 4))
            D, b = int(rng.integers(1, 8)), rng.uniform(0.1, 5)
            h = 1e-5 * max(1.0, b)
            f = lambda bb: ntk_eval_normalized(x, z, NtkParams(D, bb, normalization=mode))
            fd = (f(b + h) - f(b - h)) / (2 * h)
            g = ntk_beta_grad(x, z, NtkParams(D, b, normalization=mode))
            assert g == pytest.approx(fd, rel=1e-6, abs=1e-10)


class TestShallowLimit:
    def test_formula(self):
        x, z = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert ntk_shallow_limit(x, z) == pytest.approx(1.5)

    def test_normalised_depth_one_tends_to_half_the_limit(self, rng):
        for x, z in zip(sphere_points(rng, 20, 3), sphere_points(rng, 20, 3)):
            k = ntk_eval_normalized(x, z, NtkParams(1, 1e6))
            assert k == pytest.approx(0.5 * ntk_shallow_limit(x, z), abs=1e-9)


class TestMatern:
    def test_closed_forms(self):
        x, z = np.array([0.0, 0.0]), np.array([3.0, 4.0])
        assert laplace_eval(x, z, MaternParams(2.0)) == pytest.approx(math.exp(-2.5))
        assert gaussian_eval(x, z, MaternParams(5.0, "inf")) == pytest.approx(math.exp(-0.5))

    def test_against_scikit_learn(self, rng):
        from sklearn.gaussian_process.kernels import RBF, Matern
        A, B = rng.standard_normal((6, 3)), rng.standard_normal((4, 3))
        np.testing.assert_allclose(gram(KernelSpec.laplace(0.7), A, B), Matern(0.7, nu=0.5)(A, B),
                                   rtol=1e-12)
        np.testing.assert_allclose(gram(KernelSpec.gaussian(1.3), A, B), RBF(1.3)(A, B), rtol=1e-12)


class TestGram:
    def test_matches_pointwise(self, rng):
        A, B = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
        k = KernelSpec.ntk(3, bias=0.4, constant=2.0)
        G = gram(k, A, B)
        for i in range(5):
            for j in range(4):
                assert G[i, j] == pytest.approx(2.0 * ntk_eval_normalized(A[i], B[j], NtkParams(3, 0.4)),
                                                rel=1e-12)

    def test_psd_and_symmetric(self, rng):
        A = rng.standard_normal((30, 4))
        for k in (KernelSpec.ntk(2, 0.3), KernelSpec.laplace(0.5), KernelSpec.gaussian(0.5)):
            K = gram(k, A)
            np.testing.assert_array_equal(K, K.T)
            assert np.linalg.eigvalsh(K).min() > -1e-10

    def test_noise_only_on_training_diagonal(self, rng):
        A = rng.standard_normal((4, 2))
        k = KernelSpec.laplace(1.0, noise=0.3)
        np.testing.assert_allclose(gram(k, A) - gram(k, A, A.copy()), 0.3 * np.eye(4), atol=1e-15)

    def test_diag(self, rng):
        A = rng.standard_normal((7, 3))
        k = KernelSpec.ntk(4, 1.5, constant=3.0)
        np.testing.assert_allclose(kernel_diag(k, A), np.diag(gram(k, A)), rtol=1e-12)

    def test_empty(self):
        assert gram(KernelSpec.laplace(), np.zeros((0, 2)), np.ones((3, 2))).shape == (0, 3)

    def test_column_mismatch(self):
        with pytest.raises(ShapeError):
            gram(KernelSpec.laplace(), np.ones((2, 2)), np.ones((2, 3)))

    @pytest.mark.parametrize("spec", [KernelSpec.ntk(3, 0.7, 1.5, noise=0.2),
                                      KernelSpec.ntk(2, 1.2, normalization="constant"),
                                      KernelSpec.laplace(0.8, 2.0, noise=0.1),
                                      KernelSpec.gaussian(1.4, 0.5, noise=0.05)])
    def test_log_gradients_by_finite_difference(self, rng, spec):
        A = rng.standard_normal((6, 3))
        _, grads = gram_with_grads(spec, A)
        th = spec.theta
        for i, G in enumerate(grads):
            e = np.zeros_like(th)
            e[i] = 1e-6
            fd = (gram(spec.with_theta(th + e), A) - gram(spec.with_theta(th - e), A)) / 2e-6
            np.testing.assert_allclose(G, fd, rtol=1e-6, atol=1e-9)

    def test_fixed_hyperparameter_has_no_gradient(self, rng):
        spec = KernelSpec.ntk(2, 1.0, fix_bias=True)
        assert spec.free_names() == ["constant"]
        with pytest.raises(ContractError):
            gram_with_grads(spec, rng.standard_normal((3, 2)), ["bias"])


class TestKernelSpec:
    def test_dict_round_trip(self):
        k = KernelSpec.ntk(3, 0.5, 2.0, noise=0.1, fix_constant=True)
        assert KernelSpec.from_dict(k.to_dict()) == k

    def test_theta_round_trip(self):
        k = KernelSpec.gaussian(2.0, 3.0, noise=0.5)
        assert k.with_theta(k.theta).values() == pytest.approx(k.values())

    def test_ntk_needs_depth(self):
        with pytest.raises(ContractError):
            KernelSpec("ntk", bias=None)

    def test_str(self):
        assert "depth=3" in str(KernelSpec.ntk(3))
