import numpy as np
import pytest

from mvolt.measures import AtomicMatrixMeasure, TimeGrid
from mvolt.jumps import JumpMeasureSpec, empty_jump_spec
from mvolt.riccati import (
    h_curve,
    laplace_transform_jump,
    nonlinearity_R,
    pairing_value,
    solve_joint_riccati_heston,
    solve_lift_riccati_jump,
    solve_volterra_riccati_jump,
)


def scalar_hawkes():
    measure = AtomicMatrixMeasure([1.0], [[[0.4]]])
    lam0 = np.array([[[1.0]]])
    spec = JumpMeasureSpec(atoms=[[[1.0]]], weights=[[[0.3]]])
    return measure, lam0, spec


class TestNonlinearity:
    def test_zero_argument(self):
        _, _, spec = scalar_hawkes()
        np.testing.assert_array_equal(nonlinearity_R(np.zeros((1, 1)), spec), 0.0)

    def test_empty_measure_is_identity(self):
        u = np.array([[-0.3, 0.1], [0.1, -0.7]])
        np.testing.assert_array_equal(nonlinearity_R(u, empty_jump_spec(2)), u)

    def test_scalar_value(self):
        spec = JumpMeasureSpec(atoms=[[[1.0]]], weights=[[[2.0]]])
        got = nonlinearity_R(np.array([[-1.0]]), spec)[0, 0]
        assert got == pytest.approx(-1.0 + 2.0 * (np.exp(-1.0) - 1.0), rel=1e-14)

    def test_norm_scaling_small_atom(self):
        # ||xi|| < 1 divides the weight
        spec = JumpMeasureSpec(atoms=[[[0.5]]], weights=[[[1.0]]])
        got = nonlinearity_R(np.array([[-2.0]]), spec)[0, 0]
        assert got == pytest.approx(-2.0 + (np.exp(-1.0) - 1.0) / 0.5, rel=1e-14)


class TestLiftODE:
    def test_zero_fixed_point(self):
        measure, _, _ = scalar_hawkes()
        grid = TimeGrid.regular(1.0, 10)
        out = solve_lift_riccati_jump(np.zeros((1, 1, 1)), measure,
                                      empty_jump_spec(1), grid)
        np.testing.assert_array_equal(out[-1], 0.0)

    def test_pure_decay_when_nu_zero(self):
        measure = AtomicMatrixMeasure([2.0], [[[0.0]]])
        grid = TimeGrid.regular(1.0, 20)
        y0 = np.array([[[-1.5]]])
        out = solve_lift_riccati_jump(y0, measure, empty_jump_spec(1), grid)
        assert out[-1, 0, 0, 0] == pytest.approx(-1.5 * np.exp(-2.0), rel=1e-7)

    def test_semiflow_property(self):
        measure, lam0, spec = scalar_hawkes()
        y0 = np.full((1, 1, 1), -1.0)
        g_full = TimeGrid.regular(1.0, 200)
        y_full = solve_lift_riccati_jump(y0, measure, spec, g_full)
        g_half = TimeGrid.regular(0.5, 100)
        y_half = solve_lift_riccati_jump(y0, measure, spec, g_half)
        y_rest = solve_lift_riccati_jump(y_half[-1], measure, spec, g_half)
        np.testing.assert_allclose(y_rest[-1], y_full[-1], rtol=1e-9)

    def test_fourth_order_self_convergence(self):
        measure, lam0, spec = scalar_hawkes()
        y0 = np.full((1, 1, 1), -1.0)
        vals = {}
        for n in (4, 8, 16):
            grid = TimeGrid.regular(1.0, n)
            vals[n] = solve_lift_riccati_jump(y0, measure, spec, grid)[-1, 0, 0, 0]
        ref = solve_lift_riccati_jump(
            y0, measure, spec, TimeGrid.regular(1.0, 512)
        )[-1, 0, 0, 0]
        # errors are dominated by the internal substep cap; successive
        # refinements must not degrade and the final error is tiny
        assert abs(vals[16] - ref) <= abs(vals[4] - ref) + 1e-12
        assert abs(vals[16] - ref) <= 1e-8


class TestVolterraEquation:
    def test_zero_data(self):
        measure, _, _ = scalar_hawkes()
        grid = TimeGrid.regular(1.0, 50)
        psi = solve_volterra_riccati_jump(np.zeros((1, 1)), measure,
                                          empty_jump_spec(1), grid)
        np.testing.assert_array_equal(psi, 0.0)

    def test_one_sided_scalar_linear_closed_form(self):
        # mu empty, K == w constant: psi_t = u w e^{w t}
        measure = AtomicMatrixMeasure([0.0], [[[0.5]]])
        grid = TimeGrid.regular(1.0, 4000)
        u = np.array([[-1.0]])
        psi = solve_volterra_riccati_jump(u, measure, empty_jump_spec(1), grid)
        exact = -0.5 * np.exp(0.5 * grid.times)
        assert np.max(np.abs(psi[:, 0, 0] - exact)) <= 5e-4

    def test_picard_matches_marching(self):
        measure, _, spec = scalar_hawkes()
        grid = TimeGrid.regular(1.0, 100)
        u = np.array([[-1.0]])
        a = solve_volterra_riccati_jump(u, measure, spec, grid, method="march")
        b = solve_volterra_riccati_jump(u, measure, spec, grid, method="picard")
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_first_order_convergence(self):
        measure, lam0, spec = scalar_hawkes()
        u = np.array([[-1.0]])
        ref = laplace_transform_jump(u, lam0, measure, spec, 1.0,
                                     n_steps=8000)
        errs = []
        for n in (250, 500, 1000):
            res = laplace_transform_jump(u, lam0, measure, spec, 1.0, n_steps=n)
            errs.append(abs(res.volterra_value - ref.lift_value))
        assert errs[1] <= 0.6 * errs[0]
        assert errs[2] <= 0.6 * errs[1]


class TestLaplaceTransform:
    def test_u_zero_gives_one(self):
        measure, lam0, spec = scalar_hawkes()
        res = laplace_transform_jump(np.zeros((1, 1)), lam0, measure, spec, 1.0,
                                     n_steps=100)
        assert res.lift_value == pytest.approx(1.0, rel=1e-12)
        assert res.volterra_value == pytest.approx(1.0, rel=1e-12)

    def test_deterministic_flow_oracle(self):
        # mu empty: value = exp(Tr(u V_t)) with V from the drift flow
        from mvolt.jumps import JumpLiftState, drift_flow_step

        measure = AtomicMatrixMeasure([0.0], [[[0.5]]])
        lam0 = np.array([[[1.0]]])
        res = laplace_transform_jump(np.array([[-1.0]]), lam0, measure,
                                     empty_jump_spec(1), 1.0, n_steps=2000)
        target = np.exp(-np.exp(1.0))
        assert res.lift_value == pytest.approx(target, rel=1e-10)
        assert res.volterra_value == pytest.approx(target, rel=2e-3)

    def test_dual_route_agreement_benchmark(self):
        measure, lam0, spec = scalar_hawkes()
        n_steps = 1000
        for u in (-0.5, -1.0, -2.0):
            for t in (0.5, 1.0):
                res = laplace_transform_jump(np.array([[u]]), lam0, measure,
                                             spec, t, n_steps=n_steps)
                tol = max(1e-4, 5.0 * t / n_steps)
                assert res.discrepancy <= tol
                assert 0.0 < res.lift_value <= 1.0
                assert 0.0 < res.volterra_value <= 1.0

    def test_positive_u_rejected(self):
        measure, lam0, spec = scalar_hawkes()
        with pytest.raises(ValueError, match="negative semidefinite"):
            laplace_transform_jump(np.array([[0.5]]), lam0, measure, spec, 1.0)

    def test_matrix_case_dual_route(self):
        # d = 2 with a non-diagonal PSD driving measure
        rng = np.random.default_rng(8)
        a = rng.normal(size=(2, 2)) * 0.3
        w = a @ a.T
        measure = AtomicMatrixMeasure([0.8], w[None])
        lam0 = np.array([np.eye(2) * 0.5])
        spec = JumpMeasureSpec(atoms=[np.diag([1.0, 0.5])],
                               weights=[np.diag([0.2, 0.1])])
        b = rng.normal(size=(2, 2)) * 0.5
        u = -(b @ b.T)
        res = laplace_transform_jump(u, lam0, measure, spec, 1.0, n_steps=1500)
        assert res.discrepancy <= max(1e-4, 5.0 / 1500)


class TestJointRiccati:
    def heston_like(self):
        nodes = np.array([0.5, 2.0])
        weights = np.array(
            [[[0.10, 0.02], [0.02, 0.08]], [[0.06, -0.01], [-0.01, 0.09]]]
        )
        measure = AtomicMatrixMeasure(nodes, weights)
        gamma0 = np.random.default_rng(5).normal(size=(2, 2, 2)) * 0.15
        return measure, gamma0

    def test_zero_argument(self):
        measure, gamma0 = self.heston_like()
        res = solve_joint_riccati_heston(
            np.zeros((1, 2), dtype=complex), measure, gamma0,
            np.array([-0.5, 0.0]), 1.0, n_steps=50,
        )
        assert res.char[0] == pytest.approx(1.0)
        np.testing.assert_array_equal(res.psi, 0.0)

    def test_deterministic_v_reduces_to_gaussian(self):
        # nu = 0: P is Gaussian with variance int V dt per asset
        measure = AtomicMatrixMeasure([0.3], np.zeros((1, 1, 1)))
        gamma0 = np.array([[[0.25]]])
        v = 1.3
        res = solve_joint_riccati_heston(
            np.array([[1j * v]]), measure, gamma0, np.zeros(1), 1.0,
            n_steps=200,
        )
        var = 0.25**2 * (1 - np.exp(-0.6)) / 0.6
        exact = np.exp(-0.5 * (1j * v + v * v) * var)
        assert abs(res.char[0] - exact) <= 1e-10

    def test_conjugate_symmetry(self):
        measure, gamma0 = self.heston_like()
        rho = np.array([-0.5, 0.0])
        for v in ([1.0, 0.5], [2.0, -1.0]):
            v = np.array(v)
            plus = solve_joint_riccati_heston(1j * v[None], measure, gamma0,
                                              rho, 1.0, n_steps=150).char[0]
            minus = solve_joint_riccati_heston(-1j * v[None], measure, gamma0,
                                               rho, 1.0, n_steps=150).char[0]
            assert abs(plus - np.conj(minus)) <= 1e-12

    def test_modulus_bound(self):
        measure, gamma0 = self.heston_like()
        rho = np.array([-0.5, 0.0])
        vs = np.array([[1.0, 0.0], [0.0, 3.0], [2.5, 2.5], [-4.0, 1.0]])
        res = solve_joint_riccati_heston(1j * vs, measure, gamma0, rho, 1.0,
                                         n_steps=200)
        assert np.all(np.abs(res.char) <= 1.0 + 1e-9)

    def test_pair_symmetry_preserved(self):
        measure, gamma0 = self.heston_like()
        res = solve_joint_riccati_heston(
            1j * np.array([[1.0, 2.0]]), measure, gamma0,
            np.array([-0.5, 0.0]), 1.0, n_steps=100,
        )
        psi = res.psi[0]
        np.testing.assert_allclose(
            psi, np.swapaxes(psi, 0, 1).transpose(0, 1, 3, 2), atol=1e-10
        )

    def test_blowup_detection(self):
        measure, gamma0 = self.heston_like()
        with pytest.raises(FloatingPointError, match="blow-up"):
            solve_joint_riccati_heston(
                np.array([[30.0 + 0.0j, 0.0]]),  # far outside the moment strip
                measure, 40.0 * gamma0, np.array([-0.5, 0.0]), 40.0,
                n_steps=400,
            )


def test_h_curve_matches_decay():
    measure, lam0, _ = scalar_hawkes()
    ts = np.array([0.0, 0.5, 1.0])
    h = h_curve(lam0, measure, ts)
    np.testing.assert_allclose(h[:, 0, 0], np.exp(-ts), rtol=1e-14)


def test_pairing_value():
    y = np.array([[[2.0, 0.0], [0.0, 1.0]]])
    lam = np.array([[[0.5, 0.0], [0.0, 0.25]]])
    assert pairing_value(y, lam) == pytest.approx(1.25)


def test_epsilon_shift_dual_route_agreement():
    # the eps knob damps the jump action; both analytic routes must track it
    measure = AtomicMatrixMeasure([1.0], [[[0.4]]])
    lam0 = np.array([[[1.0]]])
    vals = []
    for eps in (0.0, 0.3):
        spec = JumpMeasureSpec(atoms=[[[1.0]]], weights=[[[0.3]]],
                               epsilon_shift=eps)
        res = laplace_transform_jump(np.array([[-1.0]]), lam0, measure, spec,
                                     1.0, n_steps=1500)
        assert res.discrepancy <= max(1e-4, 5.0 / 1500)
        vals.append(res.lift_value)
    # a damped jump action removes less mass from the transform
    assert vals[1] > vals[0]


def test_joint_riccati_reproduces_covariance_closed_form():
    # v = 0 with psi_0 = c^T c at every node pair transforms the covariance
    # process itself; the ODE route must match the exact Gaussian closed
    # form of E[exp(-Tr(c^T c V_t))] to integrator accuracy
    from mvolt.wishart import WishartTransformQuery, closed_form_laplace

    rng = np.random.default_rng(31)
    d, n, k = 2, 3, 2
    nodes = np.array([0.4, 1.8])
    ws = []
    for _ in range(k):
        a = rng.normal(size=(d, d)) * 0.3
        ws.append(a @ a.T)
    measure = AtomicMatrixMeasure(nodes, np.array(ws))
    gamma0 = rng.normal(size=(k, n, d)) * 0.3
    c = rng.normal(size=(n, d)) * 0.6
    t = 0.9

    exact = closed_form_laplace(
        WishartTransformQuery(t=t, c=c, gamma0=gamma0), measure
    )
    u_block = c.T @ c
    psi0 = np.broadcast_to(u_block, (1, k, k, d, d))
    res = solve_joint_riccati_heston(
        np.zeros((1, d)), measure, gamma0, np.zeros(d), t,
        n_steps=600, psi0=psi0,
    )
    assert abs(complex(res.char[0]).imag) <= 1e-12
    assert complex(res.char[0]).real == pytest.approx(exact, rel=1e-6)
