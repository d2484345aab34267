"""Command-line interface: kernels, simulators, transforms, validation.

Subcommands
-----------
kernel fit|eval        fit fractional kernels, tabulate kernel values
ou simulate            exact OU lift paths to CSV
wishart simulate       squared-lift paths to CSV
wishart transform      MC vs closed-form transform report (JSON)
hawkes simulate        jump lift event log (+ optional V grid) to CSV
transform laplace      jump-lift Laplace transform, both analytic routes
transform charfn       price characteristic function report
heston simulate|charfn|price
validate               run the named MC-vs-analytic check suite

Exit codes: 0 success, 1 check failure, 2 configuration error.  All reports
are deterministic for a fixed seed; ``--workers`` never changes numbers.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import configio
from .configio import ConfigError
from .fractional import FractionalKernelSpec, fit_fractional_measure
from .heston import char_function, fourier_price_call, simulate_heston_terminal
from .jumps import hawkes_jump_spec
from .measures import eval_kernel
from .mc import estimate_mean, run_path_blocks
from .ou import simulate_lift_blocks
from .riccati import laplace_transform_jump
from .validate import CHECKS, HawkesPathFn, run_checks
from .wishart import WishartTransformQuery, closed_form_laplace, simulate_wishart


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _json_report(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _clean(x):
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


# kernel --------------------------------------------------------------------

def cmd_kernel_fit(args) -> int:
    sec = configio.read_sections(args.hurst)[""]
    if "hurst" not in sec:
        raise ConfigError(f"{args.hurst}: missing 'hurst' field")
    spec = FractionalKernelSpec(
        np.asarray(sec["hurst"], dtype=float), args.tmin, args.tmax, args.nodes
    )
    fit = fit_fractional_measure(spec, tol=args.tol)
    configio.write_measure(args.out, fit.measure)
    print(f"fitted {args.nodes} nodes, sup relative error {fit.sup_rel_error:.3e}")
    return 0


def cmd_kernel_eval(args) -> int:
    measure = configio.read_measure(args.measure)
    times = configio.parse_float_list(args.times)
    d = measure.d
    header = ["t"] + [f"K_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    rows = []
    for t in times:
        K = eval_kernel(measure, t)
        rows.append([t] + [K[i, j] for i in range(d) for j in range(d)])
    _write_text(args.out, configio.format_csv(header, rows))
    return 0


# ou / wishart ----------------------------------------------------------------

def _simulation_times(dt: float, steps: int) -> np.ndarray:
    return np.linspace(dt, steps * dt, steps)


class _OUBlock:
    def __init__(self, measure, gamma0, times):
        self.measure, self.gamma0, self.times = measure, gamma0, times

    def __call__(self, seed, start, stop):
        gam = simulate_lift_blocks(
            self.measure, self.gamma0, self.times, seed, start, stop
        )
        return gam.sum(axis=2)  # (B, T, n, d)


def cmd_ou_simulate(args) -> int:
    measure = configio.read_measure(args.measure)
    gamma0_m = configio.read_measure(args.gamma0)
    if not np.array_equal(gamma0_m.nodes, measure.nodes):
        raise ConfigError("gamma0 and measure must share the same nodes")
    times = _simulation_times(args.dt, args.steps)
    xs = run_path_blocks(
        _OUBlock(measure, gamma0_m.weights, times), args.paths, args.seed,
        workers=args.workers,
    )
    n, d = xs.shape[2], xs.shape[3]
    header = ["path", "t"] + [f"X_{a + 1}{b + 1}" for a in range(n) for b in range(d)]
    rows = []
    for p in range(xs.shape[0]):
        for j, t in enumerate(times):
            rows.append([p, t] + list(xs[p, j].reshape(-1)))
    _write_text(args.out, configio.format_csv(header, rows))
    return 0


def cmd_wishart_simulate(args) -> int:
    measure = configio.read_measure(args.measure)
    gamma0_m = configio.read_measure(args.gamma0)
    times = _simulation_times(args.dt, args.steps)
    vs = simulate_wishart(
        measure, gamma0_m.weights, times, args.paths, args.seed,
        workers=args.workers,
    )
    d = vs.shape[-1]
    header = ["path", "t"] + [f"V_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    rows = []
    for p in range(vs.shape[0]):
        for j, t in enumerate(times):
            rows.append([p, t] + list(vs[p, j].reshape(-1)))
    _write_text(args.out, configio.format_csv(header, rows))
    return 0


def cmd_wishart_transform(args) -> int:
    measure = configio.read_measure(args.measure)
    gamma0_m = configio.read_measure(args.gamma0)
    c_sec = configio.read_sections(args.c)[""]
    if "c" not in c_sec:
        raise ConfigError(f"{args.c}: missing 'c' field (n x d matrix)")
    c = np.asarray(c_sec["c"], dtype=float)
    times = np.asarray(configio.parse_float_list(args.times))
    vs = simulate_wishart(
        measure, gamma0_m.weights, times, args.paths, args.seed,
        workers=args.workers,
    )
    u = c.T @ c
    entries = []
    for j, t in enumerate(times):
        analytic = closed_form_laplace(
            WishartTransformQuery(t=float(t), c=c, gamma0=gamma0_m.weights),
            measure,
        )
        est = estimate_mean(np.exp(-np.einsum("ab,pab->p", u, vs[:, j])))
        entries.append(
            {"t": float(t), "analytic": analytic, "mc": float(est.mean),
             "stderr": float(est.stderr), "z_score": float(est.z_score(analytic))}
        )
    _write_text(args.out, _json_report(_clean({"entries": entries,
                                               "paths": args.paths,
                                               "seed": args.seed})))
    return 0


# hawkes ----------------------------------------------------------------------

def cmd_hawkes_simulate(args) -> int:
    if args.model is not None:
        measure, lam0, spec = configio.read_jump_model(args.model)
    else:
        if args.measure is None or args.lambda0 is None:
            raise ConfigError(
                "hawkes simulate needs either --model or both --measure "
                "and --lambda0"
            )
        if args.preset != "hawkes":
            raise ConfigError(f"unknown preset {args.preset!r}")
        measure = configio.read_measure(args.measure)
        lam0 = configio.read_measure(args.lambda0).weights
        spec = hawkes_jump_spec(measure.d)
    grid_steps = args.grid_steps or max(int(round(args.T / args.thinning_dt)), 1)
    fn = HawkesPathFn(measure, lam0, spec, horizon=args.T,
                      thinning_dt=args.thinning_dt, record_times=[args.T],
                      grid_steps=grid_steps)

    events_rows = []
    vgrid_rows = []
    d = measure.d
    from .jumps import JumpLiftState, simulate_jump_path
    from .mc import path_rng

    for p in range(args.paths):
        state = JumpLiftState(t=0.0, lam=lam0, measure=measure,
                              counts=np.zeros(spec.n_atoms))
        rec = simulate_jump_path(state, spec, args.T, path_rng(args.seed, p),
                                 args.thinning_dt, fn.grid, flow=fn.flow)
        for jt, atom, rate in zip(rec.jump_times, rec.jump_atoms,
                                  rec.intensity_at_jumps):
            events_rows.append([p, jt, int(atom), rate])
        if args.out_grid:
            for j, t in enumerate(fn.grid.times):
                vgrid_rows.append([p, t] + list(rec.v_path[j].reshape(-1)))
    _write_text(args.out, configio.format_csv(
        ["path", "t", "atom", "intensity_at_jump"], events_rows))
    if args.out_grid:
        header = ["path", "t"] + [f"V_{i + 1}{j + 1}" for i in range(d)
                                  for j in range(d)]
        _write_text(args.out_grid, configio.format_csv(header, vgrid_rows))
    return 0


# transforms ------------------------------------------------------------------

def cmd_transform_laplace(args) -> int:
    measure, lam0, spec = configio.read_jump_model(args.model)
    u_sec = configio.read_sections(args.u)[""]
    if "u" not in u_sec:
        raise ConfigError(f"{args.u}: missing 'u' field (d x d NSD matrix)")
    u = np.asarray(u_sec["u"], dtype=float)
    entries = []
    for t in configio.parse_float_list(args.t):
        res = laplace_transform_jump(u, lam0, measure, spec, t,
                                     n_steps=args.riccati_steps)
        entries.append(
            {"t": t, "lift_value": res.lift_value,
             "volterra_value": res.volterra_value,
             "route_rel_gap": res.discrepancy}
        )
    _write_text(args.out, _json_report(_clean({"entries": entries})))
    return 0


def cmd_transform_charfn(args) -> int:
    model = configio.read_heston_model(args.model)
    vs = np.asarray(configio.parse_float_list(args.v), dtype=float)
    if vs.size % model.d:
        raise ConfigError(
            f"--v must list multiples of d={model.d} floats (flattened vectors)"
        )
    vmat = vs.reshape(-1, model.d)
    values = char_function(model, vmat, args.t, n_steps=args.riccati_steps)
    entries = [
        {"v": v.tolist(), "re": float(val.real), "im": float(val.imag),
         "modulus": float(abs(val))}
        for v, val in zip(vmat, np.atleast_1d(values))
    ]
    _write_text(args.out, _json_report(_clean({"t": args.t, "entries": entries})))
    return 0


# heston ----------------------------------------------------------------------

def cmd_heston_simulate(args) -> int:
    model = configio.read_heston_model(args.model)
    times = np.linspace(0.0, args.T, args.steps + 1)
    ps = simulate_heston_terminal(
        model, args.T, args.steps, args.paths, args.seed,
        workers=args.workers, record_times=times,
    )
    d = model.d
    header = ["path", "t"] + [f"P_{i + 1}" for i in range(d)]
    rows = []
    for p in range(ps.shape[0]):
        for j, t in enumerate(times):
            rows.append([p, t] + list(ps[p, j]))
    _write_text(args.out, configio.format_csv(header, rows))
    return 0


def cmd_heston_charfn(args) -> int:
    return cmd_transform_charfn(args)


def cmd_heston_price(args) -> int:
    model = configio.read_heston_model(args.model)
    strikes = configio.parse_float_list(args.strikes)
    ps = simulate_heston_terminal(
        model, args.maturity, args.steps, args.paths, args.seed,
        workers=args.workers,
    )[:, 0, :]
    spot = np.exp(ps[:, args.asset])
    rows = []
    for strike in strikes:
        fp = fourier_price_call(model, args.asset, strike, args.maturity,
                                alpha=args.alpha, riccati_steps=args.riccati_steps)
        est = estimate_mean(np.clip(spot - strike, 0.0, None))
        rows.append([strike, args.maturity, fp.price, float(est.mean),
                     float(est.stderr)])
    _write_text(args.out, configio.format_csv(
        ["strike", "maturity", "fourier_price", "mc_price", "mc_stderr"], rows))
    return 0


# validate ----------------------------------------------------------------------

def cmd_validate(args) -> int:
    sec = configio.read_sections(args.config)
    # check list may live in [validate]; [run] holds paths/seed/workers
    # overrides and [output] an optional json target, mirroring the layout
    # of every other experiment config
    body = sec.get("validate", sec.get("", {}))
    run_sec = sec.get("run", {})
    out_sec = sec.get("output", {})
    names = body.get("checks", [])
    if not isinstance(names, list):
        raise ConfigError(f"{args.config}: 'checks' must be a list of names")
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"{args.config}: unknown checks {unknown}; "
                          f"available: {sorted(CHECKS)}")
    paths = run_sec.get("paths", body.get("paths"))
    seed = run_sec.get("seed", body.get("seed"))
    workers = int(run_sec.get("workers", args.workers))
    results = run_checks(names, n_paths=paths, seed=seed, workers=workers)
    report = {"checks": _clean(results), "passed": all(r["passed"] for r in results)}
    text = _json_report(report)
    out_target = args.out if args.out != "-" else out_sec.get("json", "-")
    _write_text(out_target, text)
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        extras = []
        if "max_abs_z" in r:
            extras.append(f"max|z|={r['max_abs_z']:.2f}")
        print(f"{status} {r['name']} {' '.join(extras)}")
    return 0 if report["passed"] else 1


# parser ----------------------------------------------------------------------

def _add_mc_flags(p, paths_default=1000):
    p.add_argument("--paths", type=int, default=paths_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mvolt",
        description="Finite-rank lifts of matrix-valued Volterra processes: "
                    "simulation and transform validation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", help="kernel fitting and evaluation")
    ksub = k.add_subparsers(dest="subcommand", required=True)
    kf = ksub.add_parser("fit", help="fit a fractional kernel as an exponential sum")
    kf.add_argument("--hurst", required=True, help="file with 'hurst = [[...]]'")
    kf.add_argument("--nodes", type=int, required=True)
    kf.add_argument("--tmin", type=float, required=True)
    kf.add_argument("--tmax", type=float, required=True)
    kf.add_argument("--tol", type=float, default=None)
    kf.add_argument("--out", required=True)
    kf.set_defaults(fn=cmd_kernel_fit)
    ke = ksub.add_parser("eval", help="tabulate kernel values")
    ke.add_argument("--measure", required=True)
    ke.add_argument("--times", required=True, help="comma-separated times")
    ke.add_argument("--out", default="-")
    ke.set_defaults(fn=cmd_kernel_eval)

    ou = sub.add_parser("ou", help="matrix OU lift simulation")
    osub = ou.add_subparsers(dest="subcommand", required=True)
    os_ = osub.add_parser("simulate")
    os_.add_argument("--measure", required=True)
    os_.add_argument("--gamma0", required=True)
    os_.add_argument("--dt", type=float, required=True)
    os_.add_argument("--steps", type=int, required=True)
    _add_mc_flags(os_, paths_default=100)
    os_.add_argument("--out", default="-")
    os_.set_defaults(fn=cmd_ou_simulate)

    w = sub.add_parser("wishart", help="squared-lift simulation and transform")
    wsub = w.add_subparsers(dest="subcommand", required=True)
    ws = wsub.add_parser("simulate")
    ws.add_argument("--measure", required=True)
    ws.add_argument("--gamma0", required=True)
    ws.add_argument("--dt", type=float, required=True)
    ws.add_argument("--steps", type=int, required=True)
    _add_mc_flags(ws, paths_default=100)
    ws.add_argument("--out", default="-")
    ws.set_defaults(fn=cmd_wishart_simulate)
    wt = wsub.add_parser("transform")
    wt.add_argument("--measure", required=True)
    wt.add_argument("--gamma0", required=True)
    wt.add_argument("--c", required=True, help="file with 'c = [[...]]'")
    wt.add_argument("--times", required=True)
    _add_mc_flags(wt, paths_default=10000)
    wt.add_argument("--out", default="-")
    wt.set_defaults(fn=cmd_wishart_transform)

    hk = sub.add_parser("hawkes", help="self-exciting jump lift simulation")
    hsub = hk.add_subparsers(dest="subcommand", required=True)
    hs = hsub.add_parser("simulate")
    hs.add_argument("--preset", default="hawkes")
    hs.add_argument("--model", default=None, help="jump model file (overrides preset)")
    hs.add_argument("--measure", default=None)
    hs.add_argument("--lambda0", default=None)
    hs.add_argument("--T", type=float, required=True)
    hs.add_argument("--thinning-dt", type=float, default=0.25)
    hs.add_argument("--grid-steps", type=int, default=None)
    _add_mc_flags(hs, paths_default=100)
    hs.add_argument("--out", default="-")
    hs.add_argument("--out-grid", default=None)
    hs.set_defaults(fn=cmd_hawkes_simulate)

    tr = sub.add_parser("transform", help="analytic transforms of the jump lift")
    tsub = tr.add_subparsers(dest="subcommand", required=True)
    tl = tsub.add_parser("laplace")
    tl.add_argument("--model", required=True)
    tl.add_argument("--u", required=True, help="file with 'u = [[...]]' (NSD)")
    tl.add_argument("--t", required=True, help="comma-separated times")
    tl.add_argument("--riccati-steps", type=int, default=400)
    tl.add_argument("--out", default="-")
    tl.set_defaults(fn=cmd_transform_laplace)
    tc = tsub.add_parser("charfn")
    tc.add_argument("--model", required=True)
    tc.add_argument("--v", required=True,
                    help="comma-separated floats, flattened (B, d) arguments")
    tc.add_argument("--t", type=float, required=True)
    tc.add_argument("--riccati-steps", type=int, default=400)
    tc.add_argument("--out", default="-")
    tc.set_defaults(fn=cmd_transform_charfn)

    he = sub.add_parser("heston", help="covariance-modulated price model")
    hesub = he.add_subparsers(dest="subcommand", required=True)
    hsim = hesub.add_parser("simulate")
    hsim.add_argument("--model", required=True)
    hsim.add_argument("--T", type=float, required=True)
    hsim.add_argument("--steps", type=int, default=64)
    _add_mc_flags(hsim, paths_default=100)
    hsim.add_argument("--out", default="-")
    hsim.set_defaults(fn=cmd_heston_simulate)
    hch = hesub.add_parser("charfn")
    hch.add_argument("--model", required=True)
    hch.add_argument("--v", required=True)
    hch.add_argument("--t", type=float, required=True)
    hch.add_argument("--riccati-steps", type=int, default=400)
    hch.add_argument("--out", default="-")
    hch.set_defaults(fn=cmd_heston_charfn)
    hp = hesub.add_parser("price")
    hp.add_argument("--model", required=True)
    hp.add_argument("--asset", type=int, default=0)
    hp.add_argument("--strikes", required=True)
    hp.add_argument("--maturity", type=float, required=True)
    hp.add_argument("--alpha", type=float, default=1.5)
    hp.add_argument("--steps", type=int, default=256)
    hp.add_argument("--riccati-steps", type=int, default=400)
    _add_mc_flags(hp, paths_default=20000)
    hp.add_argument("--out", default="-")
    hp.set_defaults(fn=cmd_heston_price)

    va = sub.add_parser("validate", help="run MC-vs-analytic checks")
    va.add_argument("--config", required=True)
    va.add_argument("--workers", type=int, default=1)
    va.add_argument("--out", default="-")
    va.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
