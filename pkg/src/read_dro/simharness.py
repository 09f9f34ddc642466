"""Synthetic-data experiments with seeded replications and CSV output.

Data generation follows a shared-representation design: source directions are
iid Gaussian columns, the target coefficient is a unit combination of them
plus isotropic noise with correlation ``rho``, covariates are standard normal,
and responses are linear with Gaussian noise.  Four experiment families sweep
correlation (I), source count (II), a single-source alignment weight (III),
and evaluation under span-preserving parameter shifts (IV); a coverage mode
replicates the confidence-region construction.

Per-row runtimes are recorded only when timings are enabled; the default
output is byte-for-byte reproducible from the seed, independent of the
thread count.
"""

import time
from dataclasses import dataclass

import numpy as np

from ._backend import thread_map
from .core import Dataset, Representation, psi_matrix
from .rwpi import _eta_quantile, _score_draws, build_xis, confidence_region, select_delta
from .solver import SolverConfig, fit_erm, fit_read
from .tuning import TuneConfig, tune_lambda

DEFAULT_SOLVER = SolverConfig()

EXPERIMENTS = ("I", "II", "III", "IV", "coverage")
_EXP_ID = {name: i for i, name in enumerate(EXPERIMENTS)}
METHODS = ("ERM", "DRO", "KG-DRO", "READ")

ROWS_HEADER = "experiment,setting,method,rep,bias_reduction,mse_improvement,runtime_seconds"
SUMMARY_HEADER = "experiment,setting,method,mean,stderr,n"

DEFAULT_SWEEPS = {
    "I": (0.65, 0.75, 0.85, 0.95),
    "II": (15, 25, 35, 45),
}


@dataclass(frozen=True)
class SimConfig:
    d: int
    N: int
    M: int
    reps: int
    C: float = 1.0
    rho: float = 0.85
    K: int = 0
    sigma_noise: float = 1.0
    alpha: float = 0.1
    L: int = 2000
    mu: float = 1.0
    nu: float = 0.0
    seed: int = 0
    experiment: str = "I"
    sweep: tuple | None = None
    a_grid: tuple | None = None
    b_grid: tuple | None = None
    lambda_grid_points: int = 50
    full_lambda_grid: bool = False
    lambda_fixed: float = 5.0
    n_envs: int = 20
    timings: bool = False
    solver: SolverConfig = DEFAULT_SOLVER

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}"
            )
        if self.K > self.M:
            raise ValueError(f"K = {self.K} exceeds M = {self.M}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.sigma_noise <= 0:
            raise ValueError("sigma_noise must be positive")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


def default_config(experiment: str, reps: int, seed: int) -> SimConfig:
    """Desk-scale base settings for each experiment family."""
    bases = {
        "I": dict(d=50, N=70, M=7, C=2.0, rho=0.85, K=0, mu=1.0, nu=0.0),
        "II": dict(d=50, N=90, M=25, C=1.0, rho=0.85, K=5, mu=1.0, nu=0.3),
        "III": dict(d=30, N=90, M=1, C=1.0, rho=0.62, K=1),
        "IV": dict(d=50, N=70, M=7, C=2.0, rho=0.85, K=0, mu=1.0, nu=0.0),
        "coverage": dict(d=5, N=200, M=1, C=1.0, rho=0.8, K=1),
    }
    if experiment not in bases:
        raise ValueError(f"unknown experiment {experiment!r}")
    return SimConfig(reps=reps, seed=seed, experiment=experiment, **bases[experiment])


@dataclass(frozen=True)
class RunRow:
    experiment: str
    setting: str
    method: str
    rep: int
    bias_reduction: float | None
    mse_improvement: float | None
    runtime_seconds: float


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    setting: str
    method: str
    mean: float
    stderr: float
    n: int


@dataclass(frozen=True)
class SimResult:
    """Per-replication rows plus the experiment's aggregated headline metric.

    The summary aggregates bias reduction for experiments I and II, the mean
    bias norm per weight value for experiment III (the ablation curve), and
    the MSE improvement for experiment IV.
    """

    experiment: str
    rows: tuple
    summary: tuple


def gen_knowledge(d: int, M: int, C: float, rng) -> np.ndarray:
    """Source directions: d x M with iid N(0, C/d) entries."""
    return rng.standard_normal((d, M)) * np.sqrt(C / d)


def gen_beta(Theta, rho: float, C: float, K: int, rng):
    """Target coefficient correlated with a unit source combination.

    ``kappa`` has K nonzero entries (0 means dense) drawn N(0,1) on a uniform
    support and normalized to unit length; the target is
    ``rho * Theta kappa + sqrt(1 - rho^2) * eps`` with isotropic ``eps``.
    """
    Theta = np.asarray(Theta, dtype=np.float64)
    d, M = Theta.shape
    kappa = np.zeros(M)
    if M > 0:
        support = np.arange(M) if K == 0 else np.sort(rng.choice(M, size=K, replace=False))
        vals = rng.standard_normal(support.size)
        kappa[support] = vals / np.linalg.norm(vals)
    theta_k = Theta @ kappa
    eps = rng.standard_normal(d) * np.sqrt(C / d)
    beta_star = rho * theta_k + np.sqrt(1.0 - rho**2) * eps
    return beta_star, kappa


def gen_data(beta_star, N: int, sigma_noise: float, rng) -> Dataset:
    """Standard-normal covariates, linear responses with Gaussian noise."""
    beta_star = np.asarray(beta_star, dtype=np.float64)
    X = rng.standard_normal((N, beta_star.shape[0]))
    y = X @ beta_star + sigma_noise * rng.standard_normal(N)
    return Dataset(X, y)


def run_methods(train: Dataset, val: Dataset, Theta, cfg: SimConfig, mc_seed: int):
    """Fit ERM, plain DRO, fully-aligned DRO, and the tuned estimator.

    All radius selections share the Monte Carlo seed, so method comparisons
    use common random numbers.  Returns (betas, runtimes) keyed by method.
    """
    Theta = np.asarray(Theta, dtype=np.float64)
    M = Theta.shape[1]
    betas, times = {}, {}

    t0 = time.perf_counter()
    beta_erm = fit_erm(train)
    times["ERM"] = time.perf_counter() - t0
    betas["ERM"] = beta_erm

    for name, lam in (("DRO", np.zeros(M)), ("KG-DRO", np.full(M, np.inf))):
        t0 = time.perf_counter()
        rep = Representation(Theta, lam)
        qe = select_delta(train, beta_erm, rep, cfg.alpha, cfg.L, mc_seed)
        betas[name] = fit_read(train, rep, qe.delta, cfg.solver).beta
        times[name] = time.perf_counter() - t0

    t0 = time.perf_counter()
    grids = {}
    if cfg.a_grid is not None:
        grids["a_grid"] = cfg.a_grid
    if cfg.b_grid is not None:
        grids["b_grid"] = cfg.b_grid
    tcfg = TuneConfig(mu=cfg.mu, nu=cfg.nu, alpha=cfg.alpha, L=cfg.L, **grids)
    tuned = tune_lambda(train, val, Theta, tcfg, mc_seed, solver_cfg=cfg.solver)
    rep_hat = Representation(Theta, tuned.lambda_)
    betas["READ"] = fit_read(train, rep_hat, tuned.delta, cfg.solver).beta
    times["READ"] = time.perf_counter() - t0
    return betas, times


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _spawn(cfg: SimConfig, setting_idx: int, rep: int):
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(_EXP_ID[cfg.experiment], setting_idx, rep))
    data_ss, mc_ss = ss.spawn(2)
    return np.random.default_rng(data_ss), int(mc_ss.generate_state(1)[0])


def _mean_stderr(vals):
    vals = np.asarray(vals, dtype=np.float64)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return mean, stderr


def _rep_standard(cfg: SimConfig, setting_idx: int, setting_label: str, rep: int,
                  rho: float, M: int, with_envs: bool):
    rng, mc_seed = _spawn(cfg, setting_idx, rep)
    Theta = gen_knowledge(cfg.d, M, cfg.C, rng)
    beta_star, _ = gen_beta(Theta, rho, cfg.C, cfg.K, rng)
    train = gen_data(beta_star, cfg.N, cfg.sigma_noise, rng)
    val = gen_data(beta_star, cfg.N, cfg.sigma_noise, rng)
    betas, times = run_methods(train, val, Theta, cfg, mc_seed)

    err_erm = float(np.linalg.norm(betas["ERM"] - beta_star))
    improvements = {m: None for m in METHODS}
    if with_envs:
        basis = np.linalg.qr(Theta)[0] if Theta.size else np.zeros((cfg.d, 0))
        sigma2 = cfg.sigma_noise**2
        imps = {m: [] for m in METHODS}
        for _ in range(cfg.n_envs):
            z = rng.standard_normal(cfg.d) * np.sqrt(cfg.C / (5.0 * cfg.d))
            pz = basis @ (basis.T @ z)
            beta_env = beta_star + (z - pz) + 0.2 * pz
            mse_erm = sigma2 + float(np.sum((betas["ERM"] - beta_env) ** 2))
            for m in METHODS:
                mse_m = sigma2 + float(np.sum((betas[m] - beta_env) ** 2))
                imps[m].append(1.0 - mse_m / mse_erm)
        improvements = {m: float(np.mean(imps[m])) for m in METHODS}
        improvements["ERM"] = 0.0

    rows = []
    for m in METHODS:
        if m == "ERM":
            red = 0.0
        else:
            red = 1.0 - float(np.linalg.norm(betas[m] - beta_star)) / err_erm
        rows.append(RunRow(
            experiment=cfg.experiment,
            setting=setting_label,
            method=m,
            rep=rep,
            bias_reduction=red,
            mse_improvement=improvements[m],
            runtime_seconds=times[m] if cfg.timings else 0.0,
        ))
    return rows


def _run_sweep_experiment(cfg: SimConfig, threads=None) -> SimResult:
    with_envs = cfg.experiment == "IV"
    if cfg.experiment == "I":
        sweep = cfg.sweep or DEFAULT_SWEEPS["I"]
        tasks = [(i, _fmt(v), float(v), cfg.M) for i, v in enumerate(sweep)]
    elif cfg.experiment == "II":
        sweep = cfg.sweep or DEFAULT_SWEEPS["II"]
        tasks = [(i, _fmt(v), cfg.rho, int(v)) for i, v in enumerate(sweep)]
    else:  # IV: single setting at the configured correlation
        tasks = [(0, _fmt(cfg.rho), cfg.rho, cfg.M)]

    jobs = [
        (setting_idx, label, rep, rho, M)
        for setting_idx, label, rho, M in tasks
        for rep in range(cfg.reps)
    ]
    chunks = thread_map(
        lambda j: _rep_standard(cfg, j[0], j[1], j[2], j[3], j[4], with_envs),
        jobs,
        threads,
    )
    rows = tuple(r for chunk in chunks for r in chunk)

    metric = "mse_improvement" if with_envs else "bias_reduction"
    summary = []
    for setting_idx, label, _, _ in tasks:
        for m in METHODS:
            vals = [getattr(r, metric) for r in rows if r.setting == label and r.method == m]
            mean, se = _mean_stderr(vals)
            summary.append(SummaryRow(cfg.experiment, label, m, mean, se, len(vals)))
    return SimResult(cfg.experiment, rows, tuple(summary))


def _lambda_grid(cfg: SimConfig):
    n_pts = 200 if cfg.full_lambda_grid else cfg.lambda_grid_points
    grid = list(np.linspace(0.0, 200.0, n_pts))
    grid.append(float("inf"))
    return grid


def _rep_ablation(cfg: SimConfig, rep: int, grid):
    rng, mc_seed = _spawn(cfg, 0, rep)
    Theta = gen_knowledge(cfg.d, 1, cfg.C, rng)
    beta_star, _ = gen_beta(Theta, cfg.rho, cfg.C, 1, rng)
    train = gen_data(beta_star, cfg.N, cfg.sigma_noise, rng)

    t0 = time.perf_counter()
    beta_erm = fit_erm(train)
    err_erm = float(np.linalg.norm(beta_erm - beta_star))
    xis = build_xis(train, beta_erm)
    H, _ = _score_draws(train, beta_erm, cfg.L, mc_seed)

    rows, norms = [], []
    for lam in grid:
        rep_lam = Representation(Theta, np.array([lam]))
        eta, _ = _eta_quantile(xis, psi_matrix(rep_lam), H, cfg.alpha)
        beta_hat = fit_read(train, rep_lam, eta / cfg.N, cfg.solver).beta
        norm = float(np.linalg.norm(beta_hat - beta_star))
        norms.append(norm)
        label = _fmt(lam)
        elapsed = time.perf_counter() - t0 if cfg.timings else 0.0
        rows.append(RunRow(cfg.experiment, label, "ERM", rep, 0.0, None, 0.0))
        rows.append(RunRow(cfg.experiment, label, "READ", rep, 1.0 - norm / err_erm,
                           None, elapsed))
        t0 = time.perf_counter()
    return rows, norms


def _run_ablation(cfg: SimConfig, threads=None) -> SimResult:
    grid = _lambda_grid(cfg)
    results = thread_map(lambda r: _rep_ablation(cfg, r, grid), range(cfg.reps), threads)
    rows = tuple(r for chunk, _ in results for r in chunk)
    norms = np.array([n for _, n in results])  # reps x len(grid)
    summary = []
    for j, lam in enumerate(grid):
        mean, se = _mean_stderr(norms[:, j])
        summary.append(SummaryRow(cfg.experiment, _fmt(lam), "READ", mean, se, cfg.reps))
    return SimResult(cfg.experiment, rows, tuple(summary))


def run_experiment(cfg: SimConfig, threads: int | None = None) -> SimResult:
    """Run the configured experiment family over all settings and reps."""
    if cfg.experiment in ("I", "II", "IV"):
        return _run_sweep_experiment(cfg, threads)
    if cfg.experiment == "III":
        return _run_ablation(cfg, threads)
    raise ValueError(
        f"run_experiment handles experiments I-IV; got {cfg.experiment!r}"
    )


def coverage_experiment(cfg: SimConfig, threads: int | None = None) -> float:
    """Empirical coverage of the confidence region at a fixed alignment weight."""

    def one_rep(rep):
        rng, mc_seed = _spawn(cfg, 0, rep)
        Theta = gen_knowledge(cfg.d, cfg.M, cfg.C, rng)
        beta_star, _ = gen_beta(Theta, cfg.rho, cfg.C, cfg.K, rng)
        data = gen_data(beta_star, cfg.N, cfg.sigma_noise, rng)
        beta_erm = fit_erm(data)
        rep_lam = Representation(Theta, np.full(cfg.M, cfg.lambda_fixed))
        region = confidence_region(data, beta_erm, rep_lam, cfg.alpha, cfg.L, mc_seed)
        return bool(region.contains(beta_star))

    covered = thread_map(one_rep, range(cfg.reps), threads)
    return float(np.mean(covered))


def write_rows_csv(result: SimResult, path):
    with open(path, "w", newline="") as fh:
        fh.write(ROWS_HEADER + "\n")
        for r in result.rows:
            fh.write(
                f"{r.experiment},{r.setting},{r.method},{r.rep},"
                f"{_fmt(r.bias_reduction)},{_fmt(r.mse_improvement)},"
                f"{_fmt(r.runtime_seconds)}\n"
            )


def write_summary_csv(result: SimResult, path):
    with open(path, "w", newline="") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for s in result.summary:
            fh.write(
                f"{s.experiment},{s.setting},{s.method},"
                f"{_fmt(s.mean)},{_fmt(s.stderr)},{s.n}\n"
            )
