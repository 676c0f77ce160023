"""Seedable generators for the four Monte Carlo designs, and the estimation,
selection and power runners with their report containers.

Reproducibility contract: every replicate draws from its own counter-based
substream keyed by (seed, stream id), so serial and process-parallel runs
produce byte-identical reports; aggregation is an ordered reduction over
replicate indices.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from plsim.exceptions import PlsimError
from plsim.model import Dataset
from plsim.profile import fit_plsim
from plsim.scad import bic_search
from plsim.inference import LinearHypothesis, test_linear_t1, test_linear_wald, test_link_t2

SIN_A = 0.3912
SIN_B = 1.3409

ALPHA_EX2 = np.array([1.0, 3.0, 1.5, 0.5, 0.0, 0.0, 0.0, 0.0]) / np.sqrt(12.5)
BETA_EX2 = np.array([3.0, 2.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.2, 0.3, 0.15, 0.0, 0.0])
BETA_EX3_NULL_IDX = (2, 3, 4, 6)   # 0-based positions of beta_3,4,5,7

AUX_STREAM = 1 << 48  # offset of non-replicate substreams


def _rng(seed, stream):
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sin_link(lam):
    return np.sin((lam - SIN_A) * np.pi / (SIN_B - SIN_A))


@dataclass(frozen=True)
class Truth:
    alpha: np.ndarray
    beta: np.ndarray
    sigma: float

    @property
    def names(self):
        return ([f"alpha{i+1}" for i in range(len(self.alpha))]
                + [f"beta{i+1}" for i in range(len(self.beta))])

    @property
    def values(self):
        return np.concatenate([self.alpha, self.beta])


def gen_example1_model41(n, seed, stream=0):
    """y = 4 {(z1+z2-1)/sqrt2}^2 + 4 + 0.2 eps, z uniform on [0,1]."""
    rng = _rng(seed, stream)
    z = rng.uniform(0.0, 1.0, (n, 2))
    eps = rng.standard_normal(n)
    lam = (z[:, 0] + z[:, 1] - 1.0) / np.sqrt(2.0)
    y = 4.0 * lam**2 + 4.0 + 0.2 * eps
    truth = Truth(np.array([1.0, 1.0]) / np.sqrt(2.0), np.zeros(0), 0.2)
    return Dataset(y, z, np.empty((n, 0))), truth


def gen_example1_model42(n, sigma=0.1, beta=0.3, seed=0, stream=0):
    """sin link on (z1+z2+z3)/sqrt3 plus beta X; X alternates 0 (odd rows),
    1 (even rows) deterministically."""
    rng = _rng(seed, stream)
    z = rng.uniform(0.0, 1.0, (n, 3))
    eps = rng.standard_normal(n)
    x = ((np.arange(n) + 1) % 2 == 0).astype(float)[:, None]
    lam = z.sum(1) / np.sqrt(3.0)
    y = _sin_link(lam) + beta * x[:, 0] + sigma * eps
    truth = Truth(np.full(3, 1.0) / np.sqrt(3.0), np.array([beta]), sigma)
    return Dataset(y, z, x), truth


def _ex2_covariates(scenario, n, rng):
    if scenario == "i":
        z = rng.uniform(0.0, 1.0, (n, 8))
        x = rng.uniform(0.0, 1.0, (n, 12))
    elif scenario == "ii":
        z = rng.standard_normal((n, 8))
        x1 = rng.standard_normal((n, 5))
        xb = (rng.random((n, 2)) < 0.5).astype(float)
        x2 = rng.standard_normal((n, 5))
        x = np.column_stack([x1, xb, x2])
    elif scenario == "iii":
        z = rng.uniform(0.0, 1.0, (n, 8))
        idx = np.arange(12)
        cov = 0.25 * 0.4 ** np.abs(idx[:, None] - idx[None, :])
        w = rng.standard_normal((n, 12)) @ np.linalg.cholesky(cov).T
        shift = np.zeros((n, 12))
        shift[:, 0] = 1.5 * np.exp(1.5 * z[:, 0])
        shift[:, 1] = 5.0 * z[:, 0]
        shift[:, 2] = 5.0 * np.sqrt(z[:, 1])
        shift[:, 3] = 3.0 * z[:, 0] + z[:, 1] ** 2
        x = w + shift
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return z, x


def gen_example2(scenario, n, sigma, seed, stream=0, beta=None):
    """Sparse 8+12 covariate design with the sin link; scenarios (i)-(iii)
    vary the covariate laws."""
    rng = _rng(seed, stream)
    z, x = _ex2_covariates(scenario, n, rng)
    eps = rng.standard_normal(n)
    bt = BETA_EX2 if beta is None else np.asarray(beta, dtype=float)
    y = _sin_link(z @ ALPHA_EX2) + x @ bt + sigma * eps
    return Dataset(y, z, x), Truth(ALPHA_EX2.copy(), bt.copy(), sigma)


def gen_example3(n, sigma, c1, seed, stream=0):
    """Scenario (i) with beta_3 = beta_4 = beta_5 = beta_7 = c1."""
    bt = BETA_EX2.copy()
    bt[list(BETA_EX3_NULL_IDX)] = c1
    return gen_example2("i", n, sigma, seed, stream, beta=bt)


def gen_example4(n, sigma, c2, seed, stream=0):
    """y = eta{(z1+z2+z3)/sqrt3} - 0.5 x1 + 0.3 x2 + sigma eps with
    eta(u) = c2 sin{pi (u-a)/(b-a)} + u; covariates uniform on [0,1]."""
    rng = _rng(seed, stream)
    z = rng.uniform(0.0, 1.0, (n, 3))
    x = rng.uniform(0.0, 1.0, (n, 2))
    eps = rng.standard_normal(n)
    lam = z.sum(1) / np.sqrt(3.0)
    eta = c2 * np.sin(np.pi * (lam - SIN_A) / (SIN_B - SIN_A)) + lam
    y = eta - 0.5 * x[:, 0] + 0.3 * x[:, 1] + sigma * eps
    truth = Truth(np.full(3, 1.0) / np.sqrt(3.0), np.array([-0.5, 0.3]), sigma)
    return Dataset(y, z, x), truth


GENERATORS = {
    "1a": lambda n, sigma, seed, stream, c: gen_example1_model41(n, seed, stream),
    "1b": lambda n, sigma, seed, stream, c: gen_example1_model42(n, sigma, 0.3, seed, stream),
    "2i": lambda n, sigma, seed, stream, c: gen_example2("i", n, sigma, seed, stream),
    "2ii": lambda n, sigma, seed, stream, c: gen_example2("ii", n, sigma, seed, stream),
    "2iii": lambda n, sigma, seed, stream, c: gen_example2("iii", n, sigma, seed, stream),
    "3": lambda n, sigma, seed, stream, c: gen_example3(n, sigma, c, seed, stream),
    "4": lambda n, sigma, seed, stream, c: gen_example4(n, sigma, c, seed, stream),
}

DEFAULT_C1_GRID = [round(0.01 * i, 2) for i in range(11)]
DEFAULT_C1_GRID_HIGH = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08,
                        0.09, 0.15, 0.2]
DEFAULT_C2_GRID = [0.0, 0.025, 0.05, 0.075, 0.1]
DEFAULT_C2_GRID_HIGH = [0.0, 0.05, 0.1, 0.15, 0.2]


@dataclass(frozen=True)
class SimDesign:
    example_id: str
    n: int = 200
    sigma: float = 0.1
    reps: int = 200
    seed: int = 0
    c_grid: tuple = ()
    criterion: str = "bic"
    threads: int = 1
    level: float = 0.05

    def __post_init__(self):
        if self.example_id not in GENERATORS:
            raise ValueError(f"unknown example {self.example_id!r}; "
                             f"choose from {sorted(GENERATORS)}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def generate(self, stream, c=0.0):
        return GENERATORS[self.example_id](self.n, self.sigma, self.seed,
                                           stream, c)


@dataclass
class SimReport:
    example_id: str
    n: int
    sigma: float
    reps: int
    seed: int
    kind: str
    param_names: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    phi0_mean: float = None
    phi0_mse: float = None
    selection: dict = None
    power: list = field(default_factory=list)
    failures: int = 0
    runtime: float = 0.0

    def to_dict(self, deterministic=False):
        out = {
            "example": self.example_id,
            "n": self.n,
            "sigma": self.sigma,
            "reps": self.reps,
            "seed": self.seed,
            "kind": self.kind,
            "failures": self.failures,
        }
        if self.param_names:
            out["parameters"] = {
                "names": self.param_names,
                "truth": self.truth,
                "mean": self.mean,
                "mse": self.mse,
            }
        if self.phi0_mean is not None:
            out["phi0"] = {"mean": self.phi0_mean, "mse": self.phi0_mse}
        if self.selection is not None:
            out["selection"] = self.selection
        if self.power:
            out["power"] = self.power
        if not deterministic:
            out["runtime_seconds"] = self.runtime
        return out


# ---------------------------------------------------------------------------
# replicate workers (top level so they pickle for the process pool)

def _estimation_rep(args):
    design, rep = args
    data, truth = design.generate(rep)
    try:
        fit = fit_plsim(data)
    except PlsimError:
        return rep, None
    return rep, (list(fit.alpha), list(fit.beta))


def _selection_rep(args):
    design, rep = args
    data, truth = design.generate(rep)
    p, q = data.p, data.q
    za = truth.alpha == 0.0
    zb = truth.beta == 0.0
    try:
        full = fit_plsim(data)
        path = bic_search(data, full, grid_size=50, criterion=design.criterion)
        sel = path.selected.zeta
        oracle = fit_plsim(data.subset(~za, ~zb))
    except PlsimError:
        return rep, None
    alpha_o = np.zeros(p)
    alpha_o[~za] = oracle.alpha
    beta_o = np.zeros(q)
    beta_o[~zb] = oracle.beta
    # fresh evaluation draws for the model-error expectations
    rng = _rng(design.seed, AUX_STREAM + rep)
    z_ev, x_ev = _ex2_covariates(design.example_id[1:], 10_000, rng)

    def me_alpha(a):
        d = z_ev @ (np.asarray(a) - truth.alpha)
        return float(d @ d) / len(d)

    def me_beta(b):
        d = x_ev @ (np.asarray(b) - truth.beta)
        return float(d @ d) / len(d)

    eps = 1e-300
    out = {
        "rme_alpha": me_alpha(sel.alpha) / max(me_alpha(full.alpha), eps),
        "rme_beta": me_beta(sel.beta) / max(me_beta(full.beta), eps),
        "rme_alpha_oracle": me_alpha(alpha_o) / max(me_alpha(full.alpha), eps),
        "rme_beta_oracle": me_beta(beta_o) / max(me_beta(full.beta), eps),
        "c_alpha": int(np.sum((sel.alpha == 0.0) & za)),
        "i_alpha": int(np.sum((sel.alpha == 0.0) & ~za)),
        "c_beta": int(np.sum((sel.beta == 0.0) & zb)),
        "i_beta": int(np.sum((sel.beta == 0.0) & ~zb)),
    }
    return rep, out


PILOT_STREAM = 1 << 47  # reserved stream for design-level pilot draws


def design_pilot_bandwidth(design):
    """CV bandwidth computed once per design on a dedicated pilot replicate.

    The T1 reference distribution (chi-square with m degrees of freedom) has
    no bandwidth adjustment, so selecting h by CV inside every test replicate
    couples the bandwidth to the statistic and inflates the size (data that
    overfit at small h both select small h and over-reject).  A pilot
    bandwidth breaks that coupling; T2 keeps per-replicate CV because its
    degrees of freedom scale with 1/h and absorb the adaptivity.
    """
    data, _ = design.generate(PILOT_STREAM)
    return fit_plsim(data).h


def _power_rep(args):
    design, rep, c_idx, c, which, h_fixed = args
    stream = (c_idx << 32) + rep
    data, truth = design.generate(stream, c=c)
    try:
        if which == "t1":
            p, q = data.p, data.q
            hyp = LinearHypothesis.zero_coords(
                [p + j for j in BETA_EX3_NULL_IDX], p, q)
            fit = fit_plsim(data, h=h_fixed if h_fixed is not None else "cv")
            res = test_linear_t1(data, hyp, fit=fit)
            wald = test_linear_wald(fit, hyp)
            return (rep, c_idx), (res.p_value, res.statistic, wald.p_value)
        else:
            res = test_link_t2(data)
            return (rep, c_idx), (res.p_value, res.statistic, None)
    except PlsimError:
        return (rep, c_idx), None


def _run_jobs(jobs, worker, threads):
    if threads <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs, chunksize=1))


def _check_failures(n_fail, total):
    if n_fail > 0.05 * total:
        raise RuntimeError(
            f"{n_fail} of {total} replicates failed (> 5%); aborting the run")


def run_mc_estimation(design):
    """Fit every replicate; report per-parameter means and MSEs (plus the
    index angle arccos(alpha_1) for the quadratic-link design)."""
    t0 = time.time()
    _, truth = design.generate(0)
    results = _run_jobs([(design, r) for r in range(design.reps)],
                        _estimation_rep, design.threads)
    results.sort(key=lambda t: t[0])
    rows = [np.concatenate([np.asarray(a), np.asarray(b)])
            for _, ab in results if ab is not None
            for a, b in [ab]]
    n_fail = design.reps - len(rows)
    _check_failures(n_fail, design.reps)
    mat = np.vstack(rows)
    tv = truth.values
    report = SimReport(
        design.example_id, design.n, design.sigma, design.reps, design.seed,
        kind="estimation",
        param_names=truth.names,
        truth=[float(v) for v in tv],
        mean=[float(v) for v in mat.mean(0)],
        mse=[float(v) for v in ((mat - tv) ** 2).mean(0)],
        failures=n_fail,
    )
    if design.example_id == "1a":
        phi0 = np.arccos(np.clip(mat[:, 0], -1.0, 1.0))
        phi0_true = np.arccos(truth.alpha[0])
        report.phi0_mean = float(phi0.mean())
        report.phi0_mse = float(((phi0 - phi0_true) ** 2).mean())
    report.runtime = time.time() - t0
    return report


def run_mc_selection(design, criterion=None):
    """SCAD path + tuning selection per replicate; reports MRME and the
    correct/incorrect zero counts for the selected and oracle fits."""
    if criterion is not None:
        design = replace(design, criterion=criterion)
    if not design.example_id.startswith("2"):
        raise ValueError("selection runs use the sparse example designs 2i-2iii")
    t0 = time.time()
    _, truth = design.generate(0)
    results = _run_jobs([(design, r) for r in range(design.reps)],
                        _selection_rep, design.threads)
    results.sort(key=lambda t: t[0])
    rows = [d for _, d in results if d is not None]
    n_fail = design.reps - len(rows)
    _check_failures(n_fail, design.reps)
    za = int(np.sum(truth.alpha == 0.0))
    zb = int(np.sum(truth.beta == 0.0))
    sel = {
        "criterion": design.criterion,
        "mrme_alpha": float(np.median([r["rme_alpha"] for r in rows])),
        "mrme_beta": float(np.median([r["rme_beta"] for r in rows])),
        "c_alpha": float(np.mean([r["c_alpha"] for r in rows])),
        "i_alpha": float(np.mean([r["i_alpha"] for r in rows])),
        "c_beta": float(np.mean([r["c_beta"] for r in rows])),
        "i_beta": float(np.mean([r["i_beta"] for r in rows])),
        "oracle": {
            "mrme_alpha": float(np.median([r["rme_alpha_oracle"] for r in rows])),
            "mrme_beta": float(np.median([r["rme_beta_oracle"] for r in rows])),
            "c_alpha": float(za),
            "i_alpha": 0.0,
            "c_beta": float(zb),
            "i_beta": 0.0,
        },
        "true_zero_counts": {"alpha": za, "beta": zb},
    }
    report = SimReport(
        design.example_id, design.n, design.sigma, design.reps, design.seed,
        kind="selection", selection=sel, failures=n_fail)
    report.runtime = time.time() - t0
    return report


def run_mc_power(design, which):
    """Rejection rate of T1 (example 3) or T2 (example 4) at the design
    level over the c grid."""
    if which not in ("t1", "t2"):
        raise ValueError("which must be 't1' or 't2'")
    t0 = time.time()
    if design.c_grid:
        grid = list(design.c_grid)
    elif which == "t1":
        grid = DEFAULT_C1_GRID if design.sigma <= 0.175 else DEFAULT_C1_GRID_HIGH
    else:
        grid = DEFAULT_C2_GRID if design.sigma <= 0.175 else DEFAULT_C2_GRID_HIGH
    h_fixed = design_pilot_bandwidth(design) if which == "t1" else None
    jobs = [(design, r, ci, c, which, h_fixed)
            for ci, c in enumerate(grid) for r in range(design.reps)]
    results = _run_jobs(jobs, _power_rep, design.threads)
    results.sort(key=lambda t: (t[0][1], t[0][0]))
    power = []
    n_fail = 0
    for ci, c in enumerate(grid):
        cell = [v for (r, cj), v in results if cj == ci]
        ok = [v for v in cell if v is not None]
        n_fail += len(cell) - len(ok)
        rate = float(np.mean([1.0 if v[0] < design.level else 0.0 for v in ok]))
        entry = {"c": float(c), "rejection_rate": rate,
                 "replicates": len(ok)}
        if which == "t1":
            entry["wald_rejection_rate"] = float(
                np.mean([1.0 if v[2] < design.level else 0.0 for v in ok]))
        power.append(entry)
    _check_failures(n_fail, len(jobs))
    report = SimReport(
        design.example_id, design.n, design.sigma, design.reps, design.seed,
        kind=f"power[{which}]", power=power, failures=n_fail)
    report.runtime = time.time() - t0
    return report
