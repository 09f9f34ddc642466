"""Estimators for the robust regression objective.

The central fit minimizes

    f(beta) = ||y - X beta||_2 / sqrt(N) + sqrt(delta) * ||beta||_Psi,

where ``||.||_Psi`` is the seminorm induced by the representation geometry.
Stationarity reduces the problem to a scalar fixed point: beta(mu) solves the
generalized ridge system ``(X'X + mu Psi) beta = X'y`` and the multiplier mu
must satisfy ``mu ||beta(mu)||_Psi = sqrt(delta N) ||y - X beta(mu)||``.  The
sign of that residual is monotone in mu, so a sign-change bracket plus
bisection finds the fixed point; degenerate optima (beta in the null space of
Psi, including beta = 0) are detected first by a subgradient test.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import read_subgrad_descent
from .core import Dataset, Representation, phi, psi_matrix
from .errors import ConvergenceError, SingularDesignError

MU_CAP = 1e16
ZERO_RESIDUAL_RTOL = 1e-14
PSI_RANGE_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 200
    bracket_growth: float = 10.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.bracket_growth > 1:
            raise ValueError("bracket_growth must exceed 1")


@dataclass(frozen=True)
class ReadEstimate:
    """A fitted robust regression together with solver diagnostics.

    ``mu`` is the internal ridge multiplier at the fixed point (0 when the
    penalty is inactive, ``inf`` on the degenerate branch where the solution
    lies in the null space of Psi).
    """

    beta: np.ndarray
    kappa: np.ndarray = field(repr=False)
    delta: float
    objective: float
    iterations: int
    converged: bool
    mu: float


def fit_erm(data: Dataset) -> np.ndarray:
    """Ordinary least squares through an SVD-based orthogonal factorization."""
    X, y = data.X, data.y
    d = data.d
    xtx = X.T @ X
    evals = np.linalg.eigvalsh(xtx)
    thresh = 1e-12 * np.trace(xtx) / d
    if evals[0] <= thresh:
        rank = int(np.sum(evals > thresh))
        raise SingularDesignError(
            f"design matrix is rank deficient: numerical rank {rank} < {d}"
        )
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def fit_restricted(data: Dataset, Theta) -> np.ndarray:
    """Least squares restricted to the column span of ``Theta``."""
    Theta = np.asarray(Theta, dtype=np.float64)
    if Theta.ndim != 2 or Theta.shape[0] != data.d:
        raise ValueError(
            f"Theta must be {data.d} x M, got shape {Theta.shape}"
        )
    basis = scipy.linalg.orth(Theta) if Theta.size else np.zeros((data.d, 0))
    if basis.shape[1] == 0:
        return np.zeros(data.d)
    XO = data.X @ basis
    sv = np.linalg.svd(XO, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1.0):
        raise SingularDesignError(
            "restricted design X @ basis(Theta) is rank deficient"
        )
    coef, *_ = np.linalg.lstsq(XO, data.y, rcond=None)
    return basis @ coef


def objective_value(data: Dataset, rep: Representation, delta: float, beta) -> float:
    """``||y - X beta|| / sqrt(N) + sqrt(delta) * phi(beta)``.

    With ``delta = inf`` the convention ``inf * 0 = 0`` applies when the
    seminorm vanishes (up to floating-point dust).
    """
    beta = np.asarray(beta, dtype=np.float64)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    rmse = float(np.linalg.norm(data.y - data.X @ beta)) / np.sqrt(data.n)
    if delta == 0:
        return rmse
    pen = phi(beta, rep, 2).value
    if np.isinf(delta):
        if pen <= 1e-12 * max(1.0, float(np.linalg.norm(beta))):
            return rmse
        return float("inf")
    return rmse + float(np.sqrt(delta)) * pen


def _solve_ridge(xtx, psi, mu, xty, d):
    A = xtx + mu * psi
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
        return scipy.linalg.cho_solve((c, low), xty, check_finite=False)
    except scipy.linalg.LinAlgError:
        A = A + (1e-12 * np.trace(A) / d) * np.eye(d)
        return np.linalg.solve(A, xty)


def _null_space_candidate(data: Dataset, basis):
    if basis.shape[1] == 0:
        return np.zeros(data.d)
    XO = data.X @ basis
    coef, *_ = np.linalg.lstsq(XO, data.y, rcond=None)
    return basis @ coef


def fit_read(
    data: Dataset,
    rep: Representation,
    delta: float,
    cfg: SolverConfig | None = None,
) -> ReadEstimate:
    """Minimize the robust objective at radius ``delta``.

    ``delta = 0`` returns the least-squares fit exactly; ``delta = inf``
    returns the least-squares fit restricted to the null space of Psi.  For
    intermediate radii the scalar fixed point described in the module
    docstring is bracketed and bisected.
    """
    if cfg is None:
        cfg = SolverConfig()
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    X, y = data.X, data.y
    n, d = data.n, data.d
    if rep.d != d:
        raise ValueError(f"representation dimension {rep.d} != data dimension {d}")

    def finish(beta, mu, iterations):
        return ReadEstimate(
            beta=beta,
            kappa=phi(beta, rep, 2).kappa,
            delta=float(delta),
            objective=objective_value(data, rep, delta, beta),
            iterations=iterations,
            converged=True,
            mu=mu,
        )

    if delta == 0:
        return finish(fit_erm(data), 0.0, 0)

    geom = psi_matrix(rep)
    psi = geom.Psi
    sqrt_dn = np.sqrt(delta * n)

    # Degenerate branch: the residual minimizer over the null space of Psi
    # (beta = 0 when Psi is nonsingular) is optimal iff the rescaled gradient
    # of the fit term lies in the subdifferential of the penalty there.
    beta_null = _null_space_candidate(data, geom.infinite_block_basis)
    r_null = y - X @ beta_null
    nr_null = float(np.linalg.norm(r_null))
    if nr_null <= ZERO_RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(y))):
        return finish(beta_null, float("inf"), 0)
    s = (X.T @ r_null) / (np.sqrt(n) * nr_null)
    w, V = np.linalg.eigh(psi)
    in_range = w > PSI_RANGE_RTOL * max(w[-1], 1.0)
    proj = V[:, in_range].T @ s
    dual_norm = float(np.sqrt(np.sum(proj**2 / w[in_range]))) if in_range.any() else 0.0
    if dual_norm <= np.sqrt(delta):
        return finish(beta_null, float("inf"), 0)

    xtx = X.T @ X
    xty = X.T @ y
    iterations = 0

    def g_of(mu):
        beta = _solve_ridge(xtx, psi, mu, xty, d)
        res = float(np.linalg.norm(y - X @ beta))
        pen = float(np.sqrt(max(beta @ (psi @ beta), 0.0)))
        return mu * pen - sqrt_dn * res, beta

    g_tol = cfg.tol * max(1.0, sqrt_dn * float(np.linalg.norm(y)))

    _, beta_lo = g_of(0.0)
    iterations += 1
    res_lo = float(np.linalg.norm(y - X @ beta_lo))
    if res_lo <= ZERO_RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(y))):
        # Interpolating least squares: optimal iff the fit term's
        # subdifferential at zero residual can absorb the penalty gradient,
        # i.e. ||X (X'X)^{-1} Psi beta|| * sqrt(delta N) <= ||beta||_Psi.
        pen = float(np.sqrt(max(beta_lo @ (psi @ beta_lo), 0.0)))
        grad_res = float(
            np.linalg.norm(X @ np.linalg.lstsq(xtx, psi @ beta_lo, rcond=None)[0])
        )
        if pen >= sqrt_dn * grad_res:
            return finish(beta_lo, 0.0, iterations)
    lo = 0.0

    hi = 1.0
    g_hi, beta_hi = g_of(hi)
    iterations += 1
    while g_hi < 0.0:
        hi *= cfg.bracket_growth
        if hi > MU_CAP:
            return finish(beta_null, float("inf"), iterations)
        g_hi, beta_hi = g_of(hi)
        iterations += 1

    beta_mid, mu_mid, g_mid = beta_hi, hi, g_hi
    while iterations < cfg.max_iter:
        if abs(g_mid) <= g_tol or (hi - lo) <= cfg.tol * max(1.0, lo):
            return finish(beta_mid, mu_mid, iterations)
        mu_mid = 0.5 * (lo + hi)
        g_mid, beta_mid = g_of(mu_mid)
        iterations += 1
        if g_mid < 0.0:
            lo = mu_mid
        else:
            hi = mu_mid
    if abs(g_mid) <= g_tol or (hi - lo) <= cfg.tol * max(1.0, lo):
        return finish(beta_mid, mu_mid, iterations)
    raise ConvergenceError(
        f"fixed point not bracketed to tolerance after {iterations} iterations "
        f"(|g| = {abs(g_mid):.3e})",
        last_iterate=beta_mid,
        residual=abs(g_mid),
    )


def fit_read_reference(
    data: Dataset,
    rep: Representation,
    delta: float,
    tol: float = 1e-12,
    max_iter: int = 480000,
) -> np.ndarray:
    """Slow subgradient-descent solve of the same objective, for tests.

    Polyak-style steps against a shrinking target level; returns the best
    iterate.  Intended for small instances (d <= 20).
    """
    if not np.isfinite(delta) or delta < 0:
        raise ValueError("delta must be finite and nonnegative")
    geom = psi_matrix(rep)
    try:
        beta0 = fit_erm(data)
    except SingularDesignError:
        beta0 = np.zeros(data.d)
    return read_subgrad_descent(
        data.X, data.y, geom.Psi, float(np.sqrt(delta)), beta0, tol, max_iter
    )
