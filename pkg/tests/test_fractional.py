import numpy as np
import pytest

from mvolt.fractional import (
    FractionalKernelSpec,
    fit_fractional_measure,
    fractional_kernel_exact,
    fractional_kernel_quadrature,
    fractional_nodes,
)
from mvolt.measures import eval_kernel


class TestOracle:
    @pytest.mark.parametrize("hurst", [0.1, 0.25, 0.4])
    def test_quadrature_matches_gamma_closed_form(self, hurst):
        t = np.geomspace(1e-3, 10.0, 40)
        q = fractional_kernel_quadrature(t, hurst)
        e = fractional_kernel_exact(t, hurst)
        assert np.max(np.abs(q / e - 1.0)) < 1e-9

    def test_requires_positive_time(self):
        with pytest.raises(ValueError):
            fractional_kernel_quadrature(np.array([0.0]), 0.3)


class TestSpecValidation:
    def test_hurst_range(self):
        with pytest.raises(ValueError, match="1/2"):
            FractionalKernelSpec(np.array([[0.5]]), 1e-2, 1.0, 10)

    def test_hurst_symmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            FractionalKernelSpec(np.array([[0.2, 0.1], [0.3, 0.2]]), 1e-2, 1.0, 10)

    def test_window_order(self):
        with pytest.raises(ValueError):
            FractionalKernelSpec(np.array([[0.2]]), 1.0, 0.5, 10)

    def test_too_few_nodes(self):
        with pytest.raises(ValueError, match="2 nodes"):
            FractionalKernelSpec(np.array([[0.2]]), 1e-2, 1.0, 1)


class TestFit:
    def test_k20_reaches_5em3(self):
        for hurst in (0.1, 0.25, 0.4):
            spec = FractionalKernelSpec(np.array([[hurst]]), 1e-3, 10.0, 20)
            fit = fit_fractional_measure(spec)
            assert fit.sup_rel_error <= 5e-3

    def test_error_monotone_in_k(self):
        errs = []
        for k in (10, 20, 40):
            spec = FractionalKernelSpec(np.array([[0.25]]), 1e-3, 10.0, k)
            errs.append(fit_fractional_measure(spec).sup_rel_error)
        assert errs[0] >= errs[1] >= errs[2]

    def test_nested_node_ladder(self):
        n10 = fractional_nodes(1e-3, 10.0, 10)
        n20 = fractional_nodes(1e-3, 10.0, 20)
        # every level-10 node reappears at level 20
        for x in n10:
            assert np.min(np.abs(n20 - x)) <= 1e-12 * x

    def test_dyadic_scaling_ratio(self):
        # fitted kernel inherits K(2t)/K(t) ~ 2^(H - 1/2) on the window
        hurst = 0.25
        spec = FractionalKernelSpec(np.array([[hurst]]), 1e-3, 10.0, 20)
        fit = fit_fractional_measure(spec)
        t = np.geomspace(2e-3, 4.0, 12)
        k1 = eval_kernel(fit.measure, t)[:, 0, 0]
        k2 = eval_kernel(fit.measure, 2.0 * t)[:, 0, 0]
        np.testing.assert_allclose(k2 / k1, 2.0 ** (hurst - 0.5), rtol=2e-2)

    def test_reported_error_holds_on_finer_grid(self):
        spec = FractionalKernelSpec(np.array([[0.1]]), 1e-3, 10.0, 20)
        fit = fit_fractional_measure(spec)
        t = np.geomspace(1e-3, 10.0, 25000)
        fitted = eval_kernel(fit.measure, t)[:, 0, 0]
        err = np.max(np.abs(fitted / fractional_kernel_exact(t, 0.1) - 1.0))
        assert err <= 2.0 * fit.sup_rel_error

    def test_matrix_of_hurst_indices(self):
        h = np.array([[0.1, 0.25], [0.25, 0.4]])
        spec = FractionalKernelSpec(h, 1e-2, 5.0, 20)
        fit = fit_fractional_measure(spec)
        t = np.geomspace(1e-2, 5.0, 200)
        K = eval_kernel(fit.measure, t)
        for i in range(2):
            for j in range(2):
                target = fractional_kernel_exact(t, h[i, j])
                assert np.max(np.abs(K[:, i, j] / target - 1.0)) <= 5e-3

    def test_infeasible_tolerance_reported(self):
        spec = FractionalKernelSpec(np.array([[0.1]]), 1e-3, 10.0, 4)
        with pytest.raises(ValueError, match="infeasible"):
            fit_fractional_measure(spec, tol=1e-8)
