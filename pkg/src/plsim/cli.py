"""Command-line front end: fit / select / test / simulate / bandwidth.

Exit codes: 0 success, 1 computational failure (machine-readable JSON on
stderr), 2 usage error.  Output files are written atomically (temp file +
rename).  With --deterministic, volatile fields (runtimes) are omitted so
reruns are byte-identical.
"""

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from plsim import __version__
from plsim.exceptions import NoConvergence, PlsimError
from plsim.kernels import KERNELS
from plsim.model import validate_dataset
from plsim.profile import fit_plsim
from plsim.scad import bic_search
from plsim.inference import (
    LinearHypothesis,
    kernel_constants,
    test_linear_t1,
    test_linear_wald,
    test_link_t2,
)
from plsim.simlab import (
    SimDesign,
    run_mc_estimation,
    run_mc_power,
    run_mc_selection,
)


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--y", required=True, help="response column name")
    p.add_argument("--z", required=True,
                   help="comma-separated index covariate columns")
    p.add_argument("--x", default="",
                   help="comma-separated linear covariate columns (may be empty)")


def _add_fit_flags(p):
    p.add_argument("--bandwidth", default="cv",
                   help="'cv' or a fixed numeric bandwidth")
    p.add_argument("--bandwidth-grid", default=None,
                   help="CV grid as 'LO:HI:COUNT' (absolute bandwidths)")
    p.add_argument("--kernel", default="triweight", choices=sorted(KERNELS))
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--grad", default="exact", choices=["exact", "score", "fd"],
                   help="gradient mode of the profile optimizer")


def build_parser():
    root = _Parser(prog="plsim", description=__doc__)
    root.add_argument("--version", action="store_true",
                      help="print version and the kernel constant table")
    sub = root.add_subparsers(dest="command")

    p_fit = sub.add_parser("fit", parents=[], help="profile least-squares fit")
    _add_data_flags(p_fit)
    _add_fit_flags(p_fit)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--allow-partial", action="store_true")
    p_fit.add_argument("--deterministic", action="store_true")

    p_sel = sub.add_parser("select", help="SCAD variable selection with BIC/AIC")
    _add_data_flags(p_sel)
    _add_fit_flags(p_sel)
    p_sel.add_argument("--criterion", default="bic", choices=["bic", "aic"])
    p_sel.add_argument("--grid", type=int, default=50)
    p_sel.add_argument("--penalize", default="both",
                       choices=["both", "beta", "alpha"])
    p_sel.add_argument("--aic-constant", default="2pq", choices=["2pq", "classic"])
    p_sel.add_argument("--out", required=True)
    p_sel.add_argument("--deterministic", action="store_true")

    p_test = sub.add_parser("test", help="hypothesis tests")
    tsub = p_test.add_subparsers(dest="test_kind")
    p_lin = tsub.add_parser("linear", help="linear hypothesis A zeta = delta")
    _add_data_flags(p_lin)
    _add_fit_flags(p_lin)
    p_lin.add_argument("--A", required=True, dest="a_file",
                       help="CSV matrix (no header), m x (p+q)")
    p_lin.add_argument("--delta", required=True, dest="delta_file",
                       help="CSV vector (no header), length m")
    p_lin.add_argument("--method", default="t1", choices=["t1", "wald"])
    p_lin.add_argument("--out", default=None)
    p_link = tsub.add_parser("link", help="goodness-of-link test")
    _add_data_flags(p_link)
    _add_fit_flags(p_link)
    p_link.add_argument("--rk-variant", default="printed",
                        choices=["printed", "squared"])
    p_link.add_argument("--out", default=None)

    p_sim = sub.add_parser("simulate", help="Monte Carlo studies")
    p_sim.add_argument("--example", required=True,
                       choices=["1a", "1b", "2i", "2ii", "2iii", "3", "4"])
    p_sim.add_argument("--n", type=int, default=200)
    p_sim.add_argument("--sigma", type=float, default=0.1)
    p_sim.add_argument("--reps", type=int, default=None,
                       help="defaults: 200 estimation, 100 selection, 500 power")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--criterion", default="bic", choices=["bic", "aic"])
    p_sim.add_argument("--c-grid", default=None,
                       help="comma-separated c values for the power designs")
    p_sim.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--power-csv", default=None)
    p_sim.add_argument("--deterministic", action="store_true")

    p_bw = sub.add_parser("bandwidth", help="cross-validation bandwidth table")
    _add_data_flags(p_bw)
    p_bw.add_argument("--kernel", default="triweight", choices=sorted(KERNELS))
    p_bw.add_argument("--bandwidth-grid", default=None,
                      help="CV grid as 'LO:HI:COUNT'")
    p_bw.add_argument("--out", required=True)
    p_bw.add_argument("--deterministic", action="store_true")

    return root


def parse_args(argv):
    """argv (without the program name) -> RunConfig; exits 2 on usage errors."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.version:
        return RunConfig("version", {})
    if ns.command is None:
        parser.error("a command is required (fit, select, test, simulate, bandwidth)")
    opts = {k: v for k, v in vars(ns).items() if k not in ("command", "version")}
    command = ns.command
    if command == "test":
        if opts.get("test_kind") is None:
            parser.error("test requires a subcommand: linear or link")
        command = f"test-{opts.pop('test_kind')}"
    if opts.get("bandwidth_grid") is not None and opts.get("bandwidth", "cv") != "cv":
        parser.error("--bandwidth-grid conflicts with a fixed --bandwidth")
    return RunConfig(command, opts)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".plsim-tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=1) + "\n")


def _load_dataset(cfg):
    table = pd.read_csv(cfg.data)
    z_names = [c for c in cfg.z.split(",") if c]
    x_names = [c for c in cfg.x.split(",") if c]
    return validate_dataset(table, z_names, x_names, cfg.y)


def _resolve_bandwidth(cfg):
    if cfg.options.get("bandwidth_grid"):
        lo, hi, k = cfg.bandwidth_grid.split(":")
        return "cv", list(np.exp(np.linspace(np.log(float(lo)), np.log(float(hi)),
                                             int(k))))
    bw = cfg.options.get("bandwidth", "cv")
    if bw == "cv":
        return "cv", None
    return float(bw), None


def _fit_from_config(cfg, data):
    h, grid = _resolve_bandwidth(cfg)
    return fit_plsim(data, h=h, kernel=cfg.kernel, tol=cfg.tol,
                     max_iter=cfg.max_iter, cv_grid=grid,
                     grad_mode=cfg.options.get("grad", "exact"))


def _cmd_version():
    lines = [f"plsim {__version__}", "",
             "kernel       K(0)      intK^2    r_K(printed)"]
    for name in sorted(KERNELS):
        k0, ik2, rk = kernel_constants(name)
        lines.append(f"{name:<12} {k0:<9.6f} {ik2:<9.6f} {rk:.6f}")
    print("\n".join(lines))
    return 0


def _cmd_fit(cfg):
    data = _load_dataset(cfg)
    try:
        fit = _fit_from_config(cfg, data)
    except NoConvergence as exc:
        if cfg.options.get("allow_partial") and exc.fit is not None:
            _write_json(cfg.out, exc.fit.to_dict())
        raise
    _write_json(cfg.out, fit.to_dict())
    return 0


def _cmd_select(cfg):
    data = _load_dataset(cfg)
    fit = _fit_from_config(cfg, data)
    mode = {"both": "both", "beta": "beta_only", "alpha": "alpha_only"}[cfg.penalize]
    path = bic_search(data, fit, grid_size=cfg.grid, criterion=cfg.criterion,
                      mode=mode, aic_constant=cfg.aic_constant)
    out = path.to_dict()
    out["unpenalized"] = fit.to_dict()
    _write_json(cfg.out, out)
    return 0


def _read_matrix(path):
    return pd.read_csv(path, header=None).to_numpy(dtype=float)


def _cmd_test_linear(cfg):
    data = _load_dataset(cfg)
    a = _read_matrix(cfg.a_file)
    delta = _read_matrix(cfg.delta_file).reshape(-1)
    hyp = LinearHypothesis(a, delta)
    fit = _fit_from_config(cfg, data)
    if cfg.method == "t1":
        res = test_linear_t1(data, hyp, fit=fit)
    else:
        res = test_linear_wald(fit, hyp)
    payload = res.to_dict()
    if cfg.options.get("out"):
        _write_json(cfg.out, payload)
    print(json.dumps(payload))
    return 0


def _cmd_test_link(cfg):
    data = _load_dataset(cfg)
    fit = _fit_from_config(cfg, data)
    res = test_link_t2(data, fit=fit, rk_variant=cfg.rk_variant)
    payload = res.to_dict()
    if cfg.options.get("out"):
        _write_json(cfg.out, payload)
    print(json.dumps(payload))
    return 0


def _cmd_simulate(cfg):
    kind = {"1a": "estimation", "1b": "estimation", "2i": "selection",
            "2ii": "selection", "2iii": "selection", "3": "power",
            "4": "power"}[cfg.example]
    reps = cfg.reps
    if reps is None:
        reps = {"estimation": 200, "selection": 100, "power": 500}[kind]
    c_grid = ()
    if cfg.options.get("c_grid"):
        c_grid = tuple(float(v) for v in cfg.c_grid.split(","))
    design = SimDesign(cfg.example, n=cfg.n, sigma=cfg.sigma, reps=reps,
                       seed=cfg.seed, c_grid=c_grid, criterion=cfg.criterion,
                       threads=cfg.threads)
    if kind == "estimation":
        report = run_mc_estimation(design)
    elif kind == "selection":
        report = run_mc_selection(design)
    else:
        report = run_mc_power(design, "t1" if cfg.example == "3" else "t2")
    _write_json(cfg.out, report.to_dict(deterministic=cfg.deterministic))
    if cfg.options.get("power_csv") and report.power:
        rows = ["c,rejection_rate"] + [
            f"{e['c']:.17g},{e['rejection_rate']:.17g}" for e in report.power]
        _atomic_write(cfg.power_csv, "\n".join(rows) + "\n")
    return 0


def _cmd_bandwidth(cfg):
    from plsim.profile import _ols_candidates
    from plsim.smoother import cv_score, default_grid

    data = _load_dataset(cfg)
    alpha0, beta0 = _ols_candidates(data)[0]
    lam = data.z @ alpha0
    ystar = data.y - data.x @ beta0 if data.q else data.y
    if cfg.options.get("bandwidth_grid"):
        lo, hi, k = cfg.bandwidth_grid.split(":")
        grid = list(np.exp(np.linspace(np.log(float(lo)), np.log(float(hi)),
                                       int(k))))
    else:
        grid = default_grid(lam)
    scores = [cv_score(lam, ystar, h, cfg.kernel) for h in grid]
    finite = [(h, s) for h, s in zip(grid, scores) if np.isfinite(s)]
    if not finite:
        raise PlsimError("every grid bandwidth is degenerate")
    best = min(reversed(finite), key=lambda t: t[1])
    _write_json(cfg.out, {
        "kernel": cfg.kernel,
        "pilot_alpha": list(alpha0),
        "grid": [{"h": float(h), "loo_score": (None if not np.isfinite(s)
                                               else float(s))}
                 for h, s in zip(grid, scores)],
        "selected_h": float(best[0]),
    })
    return 0


def run(config):
    """Execute a RunConfig; returns the process exit code."""
    try:
        if config.command == "version":
            return _cmd_version()
        handler = {
            "fit": _cmd_fit,
            "select": _cmd_select,
            "test-linear": _cmd_test_linear,
            "test-link": _cmd_test_link,
            "simulate": _cmd_simulate,
            "bandwidth": _cmd_bandwidth,
        }[config.command]
        return handler(config)
    except PlsimError as exc:
        sys.stderr.write(json.dumps(exc.payload()) + "\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(json.dumps({"code": "FileNotFound",
                                     "message": str(exc)}) + "\n")
        return 1
    except (RuntimeError, ValueError) as exc:
        sys.stderr.write(json.dumps({"code": "ComputationFailed",
                                     "message": str(exc)}) + "\n")
        return 1


def main(argv=None):
    config = parse_args(sys.argv[1:] if argv is None else list(argv))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
