"""Named validation checks: Monte Carlo vs analytic transforms.

Each check runs one simulator against its closed-form or Riccati-based
transform and reports z-scores (for stochastic comparisons) or residuals
(for deterministic identities).  A check passes when every |z| <= 3 and
every residual meets its stated tolerance.  The CLI ``validate`` subcommand
and the acceptance test suite both drive these functions; path counts are
parameters so the CLI can also run cheap smoke versions of the full-scale
configuration.
"""

from __future__ import annotations

import numpy as np

from .fractional import (
    FractionalKernelSpec,
    fit_fractional_measure,
    fractional_kernel_quadrature,
)
from .heston import HestonModelSpec, char_function, fourier_price_call, simulate_heston_terminal
from .jumps import (
    JumpLiftState,
    JumpMeasureSpec,
    LinearFlow,
    hawkes_jump_spec,
    simulate_jump_path,
    volterra_projection,
)
from .kernelops import resolvent_residual, resolvent_second_kind
from .measures import AtomicMatrixMeasure, TimeGrid, eval_kernel
from .mc import collect_paths, estimate_mean
from .riccati import laplace_transform_jump
from .wishart import (
    WishartTransformQuery,
    affine_transform_wishart,
    closed_form_laplace,
    simulate_wishart,
)


def _result(name: str, passed: bool, **details) -> dict:
    out = {"name": name, "passed": bool(passed)}
    out.update(details)
    return out


def random_wishart_setup(seed: int = 2024, d: int = 2, n: int = 3, k: int = 4):
    """Reference randomized transform configuration (geometric nodes)."""
    rng = np.random.default_rng(seed)
    nodes = np.geomspace(0.25, 4.0, k)
    weights = []
    for _ in range(k):
        a = rng.normal(size=(d, d)) * 0.35
        weights.append(a @ a.T)
    measure = AtomicMatrixMeasure(nodes, np.array(weights))
    gamma0 = rng.normal(size=(k, n, d)) * 0.3
    cs = rng.normal(size=(6, n, d)) * 0.6
    ts = np.array([0.3, 0.5, 0.8, 1.2, 1.7, 2.5])
    return measure, gamma0, cs, ts


def check_wishart_transform(n_paths: int = 100_000, seed: int = 11, workers: int = 1) -> dict:
    """MC mean of exp(-Tr(c^T c V_t)) vs the closed form at 6 (c, t) points."""
    measure, gamma0, cs, ts = random_wishart_setup()
    v_samples = simulate_wishart(measure, gamma0, ts, n_paths, seed, workers=workers)
    points = []
    worst = 0.0
    for j, (c, t) in enumerate(zip(cs, ts)):
        u = c.T @ c
        analytic = closed_form_laplace(
            WishartTransformQuery(t=float(t), c=c, gamma0=gamma0), measure
        )
        est = estimate_mean(np.exp(-np.einsum("ab,pab->p", u, v_samples[:, j])))
        z = float(est.z_score(analytic))
        worst = max(worst, abs(z))
        points.append(
            {"t": float(t), "analytic": analytic, "mc": float(est.mean),
             "stderr": float(est.stderr), "z_score": z}
        )
    return _result("wishart_transform", worst <= 3.0, points=points,
                   max_abs_z=worst, n_paths=n_paths)


def check_wishart_scalar(n_paths: int = 100_000, seed: int = 12, workers: int = 1) -> dict:
    """Scalar benchmark: analytic (1+2t)^(-1/2), closed form to 1e-12, MC z."""
    measure = AtomicMatrixMeasure([0.0], [[[1.0]]])
    gamma0 = np.zeros((1, 1, 1))
    ts = np.array([0.5, 1.0, 2.0])
    v_samples = simulate_wishart(measure, gamma0, ts, n_paths, seed, workers=workers)
    points = []
    worst_z, worst_form = 0.0, 0.0
    for j, t in enumerate(ts):
        exact = (1.0 + 2.0 * t) ** -0.5
        query = WishartTransformQuery(t=float(t), c=np.array([[1.0]]), gamma0=gamma0)
        analytic = closed_form_laplace(query, measure)
        phi, pair = affine_transform_wishart(query, measure)
        form_err = max(abs(analytic / exact - 1.0),
                       abs(np.exp(-phi - pair) / exact - 1.0))
        est = estimate_mean(np.exp(-v_samples[:, j, 0, 0]))
        z = float(est.z_score(exact))
        worst_z = max(worst_z, abs(z))
        worst_form = max(worst_form, form_err)
        points.append(
            {"t": float(t), "exact": exact, "analytic": analytic,
             "mc": float(est.mean), "stderr": float(est.stderr), "z_score": z,
             "closed_form_rel_err": form_err}
        )
    return _result("wishart_scalar", worst_z <= 3.0 and worst_form <= 1e-12,
                   points=points, max_abs_z=worst_z,
                   max_closed_form_rel_err=worst_form, n_paths=n_paths)


class HawkesPathFn:
    """Picklable per-path simulator returning [counts..., compensators..., V(t_j)...]."""

    def __init__(self, measure, lam0, spec, horizon, thinning_dt, record_times,
                 grid_steps=None):
        self.measure = measure
        self.lam0 = np.asarray(lam0, dtype=float)
        self.spec = spec
        self.horizon = float(horizon)
        self.thinning_dt = float(thinning_dt)
        if grid_steps is None:
            grid_steps = max(int(round(self.horizon / self.thinning_dt)), 1)
        self.grid = TimeGrid.regular(self.horizon, grid_steps)
        self.record_times = np.asarray(record_times, dtype=float)
        self.rec_idx = []
        for rt in self.record_times:
            m = int(np.argmin(np.abs(self.grid.times - rt)))
            if abs(self.grid.times[m] - rt) > 1e-9:
                raise ValueError("record times must lie on the recording grid")
            self.rec_idx.append(m)
        self.flow = LinearFlow(self.measure)

    def __call__(self, rng):
        state = JumpLiftState(
            t=0.0, lam=self.lam0, measure=self.measure,
            counts=np.zeros(self.spec.n_atoms),
        )
        rec = simulate_jump_path(
            state, self.spec, self.horizon, rng, self.thinning_dt, self.grid,
            flow=self.flow,
        )
        v_at = [rec.v_path[m].reshape(-1) for m in self.rec_idx]
        return np.concatenate([rec.counts_path[-1], rec.compensators, *v_at])


def check_hawkes_compensator(
    n_paths: int = 100_000, seed: int = 21, workers: int = 1, d: int = 2
) -> dict:
    """E[N_i(T)] vs E[int_0^T V_ii dt] per component, diagonal preset."""
    nodes = np.array([0.6, 2.5])
    weights = np.zeros((2, d, d))
    lam0 = np.zeros((2, d, d))
    for i in range(d):
        weights[0, i, i], weights[1, i, i] = 0.35, 0.2
        lam0[0, i, i], lam0[1, i, i] = 0.8, 0.4
    measure = AtomicMatrixMeasure(nodes, weights)
    spec = hawkes_jump_spec(d)
    fn = HawkesPathFn(measure, lam0, spec, horizon=1.0, thinning_dt=0.25,
                      record_times=[1.0])
    values = collect_paths(fn, n_paths, seed, workers=workers)
    points, worst = [], 0.0
    for i in range(d):
        diff = values[:, i] - values[:, d + i]
        est = estimate_mean(diff)
        z = float(est.z_score(0.0))
        worst = max(worst, abs(z))
        points.append(
            {"component": i, "mean_counts": float(values[:, i].mean()),
             "mean_compensator": float(values[:, d + i].mean()),
             "diff_stderr": float(est.stderr), "z_score": z}
        )
    return _result("hawkes_compensator", worst <= 3.0, points=points,
                   max_abs_z=worst, n_paths=n_paths)


def check_jump_transform(
    n_paths: int = 100_000, seed: int = 31, workers: int = 1, n_steps: int = 1000
) -> dict:
    """Scalar self-exciting benchmark: lift ODE vs Volterra form vs MC.

    The two analytic routes must agree within max(1e-4, 5 dt) relative and
    both must match the Monte Carlo estimate within 3 standard errors.
    """
    measure = AtomicMatrixMeasure([1.0], [[[0.4]]])
    lam0 = np.array([[[1.0]]])
    spec = JumpMeasureSpec(atoms=[[[1.0]]], weights=[[[0.3]]])
    ts = [0.5, 1.0]
    us = [-0.5, -1.0, -2.0]
    fn = HawkesPathFn(measure, lam0, spec, horizon=1.0, thinning_dt=0.25,
                      record_times=ts, grid_steps=4)
    values = collect_paths(fn, n_paths, seed, workers=workers)
    v_cols = {t: values[:, 2 + j] for j, t in enumerate(ts)}
    points, worst_z, worst_gap = [], 0.0, 0.0
    for u in us:
        for t in ts:
            res = laplace_transform_jump(
                np.array([[u]]), lam0, measure, spec, t, n_steps=n_steps
            )
            tol = max(1e-4, 5.0 * t / n_steps)
            est = estimate_mean(np.exp(u * v_cols[t]))
            z = float(est.z_score(res.lift_value))
            worst_z = max(worst_z, abs(z))
            worst_gap = max(worst_gap, res.discrepancy / tol)
            points.append(
                {"u": u, "t": t, "lift_value": res.lift_value,
                 "volterra_value": res.volterra_value,
                 "route_rel_gap": res.discrepancy, "route_tol": tol,
                 "mc": float(est.mean), "stderr": float(est.stderr),
                 "z_score": z}
            )
    return _result("jump_transform", worst_z <= 3.0 and worst_gap <= 1.0,
                   points=points, max_abs_z=worst_z,
                   max_route_gap_over_tol=worst_gap, n_paths=n_paths)


class RepresentationPathFn:
    """Per-path sup gap between the lift V and its Volterra reconstruction."""

    def __init__(self, measure, lam0, spec, horizon, grid_steps):
        self.fn = HawkesPathFn(measure, lam0, spec, horizon, thinning_dt=0.25,
                               record_times=[horizon], grid_steps=grid_steps)
        self.measure = measure
        self.lam0 = np.asarray(lam0, dtype=float)
        self.spec = spec
        self.horizon = float(horizon)

    def __call__(self, rng):
        state = JumpLiftState(
            t=0.0, lam=self.lam0, measure=self.measure,
            counts=np.zeros(self.spec.n_atoms),
        )
        rec = simulate_jump_path(
            state, self.spec, self.horizon, rng, self.fn.thinning_dt,
            self.fn.grid, flow=self.fn.flow,
        )
        recon = volterra_projection(rec, self.measure, self.lam0, self.spec)
        return float(np.max(np.abs(recon - rec.v_path)))


def check_representation_equivalence(
    n_paths: int = 100, seed: int = 41, workers: int = 1
) -> dict:
    """Lift V vs Volterra-projected V on random diagonal-preset paths.

    The max-over-time gap must scale like the grid step: halving dt at
    least halves the median gap (with 10 percent slack) and the coarse
    median stays below an absolute O(dt) budget.
    """
    d = 2
    nodes = np.array([0.6, 2.5])
    weights = np.zeros((2, d, d))
    lam0 = np.zeros((2, d, d))
    for i in range(d):
        weights[0, i, i], weights[1, i, i] = 0.35, 0.2
        lam0[0, i, i], lam0[1, i, i] = 0.8, 0.4
    measure = AtomicMatrixMeasure(nodes, weights)
    spec = hawkes_jump_spec(d)
    gaps = {}
    for steps in (64, 128):
        fn = RepresentationPathFn(measure, lam0, spec, horizon=1.0,
                                  grid_steps=steps)
        vals = collect_paths(fn, n_paths, seed, workers=workers)
        gaps[steps] = float(np.median(vals))
    ratio = gaps[128] / max(gaps[64], 1e-300)
    coarse_ok = gaps[64] <= 40.0 * (1.0 / 64)
    return _result(
        "representation_equivalence",
        ratio <= 0.55 and coarse_ok,
        median_gap_coarse=gaps[64], median_gap_fine=gaps[128],
        fine_over_coarse=ratio, n_paths=n_paths,
    )


def check_resolvent(dt_fine: float = 1e-4) -> dict:
    """Resolvent identity: scalar closed form and first-order residuals."""
    # scalar closed form c e^{-2 c t} at c = 1 on [0, 1]
    grid = TimeGrid.regular(1.0, int(round(1.0 / dt_fine)))
    K = np.ones((len(grid), 1, 1))
    R = resolvent_second_kind(K, grid)
    exact = np.exp(-2.0 * grid.times)
    scalar_err = float(np.max(np.abs(R[:, 0, 0] - exact)))

    # residual convergence on a matrix kernel over 3 refinements
    def matrix_kernel(times):
        base = np.array([[0.8, 0.2], [0.2, 0.5]])
        bump = np.array([[0.3, -0.1], [-0.1, 0.4]])
        return (np.exp(-0.7 * times)[:, None, None] * base
                + np.exp(-2.0 * times)[:, None, None] * bump)

    residuals = []
    for steps in (50, 100, 200):
        g = TimeGrid.regular(1.0, steps)
        Km = matrix_kernel(g.times)
        Rm = resolvent_second_kind(Km, g)
        residuals.append(resolvent_residual(Km, Rm, g))
    halves = all(residuals[i + 1] <= 0.55 * residuals[i] for i in range(2))
    bounded = all(r <= 5.0 * (1.0 / s) for r, s in zip(residuals, (50, 100, 200)))
    return _result(
        "resolvent_identity",
        scalar_err <= 1e-6 and halves and bounded,
        scalar_closed_form_err=scalar_err, residuals=[float(r) for r in residuals],
    )


def check_fractional_fit() -> dict:
    """Sup relative error <= 5e-3 at k=20 vs the quadrature oracle; monotone in k."""
    points = []
    ok = True
    for hurst in (0.1, 0.25, 0.4):
        errs = {}
        for k in (10, 20, 40):
            spec = FractionalKernelSpec(np.array([[hurst]]), 1e-3, 10.0, k)
            fit = fit_fractional_measure(spec)
            # independent verification vs the high-resolution quadrature oracle
            t_check = np.geomspace(1e-3, 10.0, 400)
            oracle = fractional_kernel_quadrature(t_check, hurst)
            fitted = eval_kernel(fit.measure, t_check)[:, 0, 0]
            errs[k] = float(np.max(np.abs(fitted / oracle - 1.0)))
        monotone = errs[10] >= errs[20] >= errs[40]
        ok = ok and errs[20] <= 5e-3 and monotone
        points.append({"hurst": hurst, "sup_rel_err": errs, "monotone": monotone})
    return _result("fractional_fit", ok, points=points)


def heston_reference_model(seed: int = 5) -> HestonModelSpec:
    """d=2, n=2, k=2, no jumps, rho = (-0.5, 0) reference model."""
    nodes = np.array([0.5, 2.0])
    weights = np.array(
        [[[0.10, 0.02], [0.02, 0.08]], [[0.06, -0.01], [-0.01, 0.09]]]
    )
    measure = AtomicMatrixMeasure(nodes, weights)
    gamma0 = np.random.default_rng(seed).normal(size=(2, 2, 2)) * 0.15
    return HestonModelSpec(measure=measure, gamma0=gamma0,
                           rho=[-0.5, 0.0], p0=[0.0, 0.0])


def check_heston_charfn(
    n_paths: int = 200_000, seed: int = 51, workers: int = 1, n_steps: int = 256
) -> dict:
    """Characteristic function vs MC on a 5-point v grid; martingale per asset."""
    model = heston_reference_model()
    t = 1.0
    p_samples = simulate_heston_terminal(
        model, t, n_steps, n_paths, seed, workers=workers
    )[:, 0, :]
    vs = np.array([[1.0, 0.0], [0.0, 1.5], [1.0, 1.0], [-2.0, 0.5], [3.0, -1.0]])
    points, worst = [], 0.0
    analytic = char_function(model, vs, t, n_steps=400)
    for j, v in enumerate(vs):
        f = np.exp(1j * (p_samples @ v))
        re = estimate_mean(f.real)
        im = estimate_mean(f.imag)
        z_re = float(re.z_score(analytic[j].real))
        z_im = float(im.z_score(analytic[j].imag))
        worst = max(worst, abs(z_re), abs(z_im))
        points.append(
            {"v": v.tolist(), "analytic_re": float(analytic[j].real),
             "analytic_im": float(analytic[j].imag), "mc_re": float(re.mean),
             "mc_im": float(im.mean), "z_re": z_re, "z_im": z_im}
        )
    mart = []
    for a in range(model.d):
        g = estimate_mean(np.exp(p_samples[:, a] - model.p0[a]))
        z = float(g.z_score(1.0))
        worst = max(worst, abs(z))
        mart.append({"asset": a, "mean": float(g.mean),
                     "stderr": float(g.stderr), "z_score": z})
    return _result("heston_charfn", worst <= 3.0, points=points,
                   martingale=mart, max_abs_z=worst, n_paths=n_paths)


def check_fourier_price(
    n_paths: int = 200_000, seed: int = 61, workers: int = 1, n_steps: int = 256
) -> dict:
    """Degenerate model vs the Gaussian closed form; generic model vs MC."""
    from scipy.stats import norm

    # deterministic-V degenerate model
    meas0 = AtomicMatrixMeasure([0.3], [[[0.0]]])
    m0 = HestonModelSpec(measure=meas0, gamma0=np.array([[[0.25]]]),
                         rho=[0.0], p0=[0.0])
    t = 1.0
    var0 = 0.25**2 * (1.0 - np.exp(-2.0 * 0.3 * t)) / (2.0 * 0.3)
    det_points, det_ok = [], True
    for strike in (0.8, 1.0, 1.2):
        fp = fourier_price_call(m0, 0, strike, t)
        s = np.sqrt(var0)
        d1 = (np.log(1.0 / strike) + 0.5 * var0) / s
        bs = float(norm.cdf(d1) - strike * norm.cdf(d1 - s))
        err = abs(fp.price - bs)
        det_ok = det_ok and err <= 1e-4
        det_points.append({"strike": strike, "fourier": fp.price,
                           "gaussian_closed_form": bs, "abs_err": err})

    # generic model vs MC at three strikes
    model = heston_reference_model()
    p_samples = simulate_heston_terminal(
        model, t, n_steps, n_paths, seed, workers=workers
    )[:, 0, :]
    spot = np.exp(p_samples[:, 0])
    gen_points, worst = [], 0.0
    for strike in (0.9, 1.0, 1.1):
        fp = fourier_price_call(model, 0, strike, t)
        est = estimate_mean(np.clip(spot - strike, 0.0, None))
        z = float(est.z_score(fp.price))
        worst = max(worst, abs(z))
        gen_points.append({"strike": strike, "fourier": fp.price,
                           "mc": float(est.mean), "stderr": float(est.stderr),
                           "z_score": z})
    return _result("fourier_price", det_ok and worst <= 3.0,
                   degenerate=det_points, generic=gen_points,
                   max_abs_z=worst, n_paths=n_paths)


CHECKS = {
    "wishart_transform": check_wishart_transform,
    "wishart_scalar": check_wishart_scalar,
    "hawkes_compensator": check_hawkes_compensator,
    "jump_transform": check_jump_transform,
    "representation_equivalence": check_representation_equivalence,
    "resolvent_identity": check_resolvent,
    "fractional_fit": check_fractional_fit,
    "heston_charfn": check_heston_charfn,
    "fourier_price": check_fourier_price,
}

MC_CHECKS = {
    "wishart_transform", "wishart_scalar", "hawkes_compensator",
    "jump_transform", "representation_equivalence", "heston_charfn",
    "fourier_price",
}


def run_checks(names, n_paths=None, seed=None, workers: int = 1) -> list[dict]:
    """Run named checks; MC checks receive (n_paths, seed, workers) overrides."""
    results = []
    for name in names:
        if name not in CHECKS:
            raise KeyError(f"unknown check {name!r}; available: {sorted(CHECKS)}")
        fn = CHECKS[name]
        kwargs = {}
        if name in MC_CHECKS:
            if n_paths is not None:
                kwargs["n_paths"] = int(n_paths)
            if seed is not None:
                kwargs["seed"] = int(seed)
            kwargs["workers"] = workers
        results.append(fn(**kwargs))
    return results
