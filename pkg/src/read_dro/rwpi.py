"""Profile-function machinery for radius selection and confidence regions.

Everything here revolves around the per-sample sensitivity matrices

    Xi_i = (y_i - x_i' beta) I_d - beta x_i',

built at a reference estimate ``beta``.  The conjugate of the empirical
profile function has the closed form ``psi_star(h) = h' M^{-1} h`` with
``M = (1/N) sum_i Xi_i' Psi Xi_i``; its Monte Carlo quantile under
``h ~ N(0, Sigma_scores)`` calibrates the ambiguity radius ``delta = eta / N``
and the induced confidence ellipsoid.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import quad_forms_lower
from .core import Dataset, Geometry, Representation, phi, psi_matrix

RANGE_RTOL = 1e-8
EIG_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class XiSet:
    """Stacked sensitivity matrices (N x d x d) and the estimate they use."""

    xis: np.ndarray = field(repr=False)
    beta_ref: np.ndarray


@dataclass(frozen=True)
class QuantileEstimate:
    """A Monte Carlo radius estimate: ``delta = eta / N``."""

    eta: float
    delta: float
    alpha: float
    L: int
    samples_infinite_fraction: float


@dataclass(frozen=True)
class Region:
    """Ellipsoidal confidence region centered at the least-squares estimate.

    Membership test: ``(Sigma_hat (u - center))' GammaTilde^{-1}
    (Sigma_hat (u - center)) <= eta / n_samples``.  When GammaTilde is
    singular the region degenerates to the affine slice where the transformed
    displacement stays in the range of GammaTilde.
    """

    center: np.ndarray
    Sigma_hat: np.ndarray = field(repr=False)
    GammaTilde: np.ndarray = field(repr=False)
    eta: float
    sigma2_hat: float
    alpha: float
    n_samples: int

    @property
    def threshold(self) -> float:
        return self.eta / self.n_samples

    def quadratic_form(self, u) -> float:
        """The membership quadratic form at ``u`` (inf off the affine slice)."""
        z = self.Sigma_hat @ (np.asarray(u, dtype=np.float64) - self.center)
        w, V = np.linalg.eigh(self.GammaTilde)
        keep = w > EIG_RANK_RTOL * max(w[-1], 1.0)
        coords = V.T @ z
        off = float(np.linalg.norm(coords[~keep]))
        if off > RANGE_RTOL * max(float(np.linalg.norm(z)), 1e-300):
            return float("inf")
        return float(np.sum(coords[keep] ** 2 / w[keep]))

    def contains(self, u) -> bool:
        return self.quadratic_form(u) <= self.threshold


def build_xis(data: Dataset, beta) -> XiSet:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (data.d,):
        raise ValueError(f"beta must have shape ({data.d},), got {beta.shape}")
    if not np.isfinite(beta).all():
        raise ValueError("beta must be finite")
    resid = data.y - data.X @ beta
    eye = np.eye(data.d)
    xis = resid[:, None, None] * eye[None, :, :] - beta[None, :, None] * data.X[:, None, :]
    return XiSet(xis=xis, beta_ref=beta)


def profile_matrix(xis: XiSet, geom: Geometry) -> np.ndarray:
    """``M = (1/N) sum_i Xi_i' Psi Xi_i`` (symmetric PSD)."""
    A = xis.xis
    B = np.matmul(geom.Psi, A)
    M = np.tensordot(A, B, axes=([0, 1], [0, 1])) / A.shape[0]
    return 0.5 * (M + M.T)


def _psi_star_batch(H, M) -> np.ndarray:
    """Row-wise ``h' M^{-1} h`` with pseudo-inverse + infinity off range(M)."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    try:
        L = scipy.linalg.cholesky(M, lower=True, check_finite=False)
        diag = np.diag(L)
        if diag.min() ** 2 > EIG_RANK_RTOL * diag.max() ** 2:
            return quad_forms_lower(L, H)
    except scipy.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(M)
    keep = w > EIG_RANK_RTOL * max(w[-1], 1e-300)
    coords = H @ V
    vals = np.sum(coords[:, keep] ** 2 / w[keep], axis=1) if keep.any() else np.zeros(len(H))
    off = np.linalg.norm(coords[:, ~keep], axis=1)
    norms = np.linalg.norm(H, axis=1)
    vals[off > RANGE_RTOL * np.maximum(norms, 1e-300)] = np.inf
    return vals


def psi_star(h, xis: XiSet, geom: Geometry) -> float:
    """Closed-form conjugate profile value at a single point ``h``."""
    h = np.asarray(h, dtype=np.float64)
    M = profile_matrix(xis, geom)
    return float(_psi_star_batch(h[None, :], M)[0])


def _order_statistic(vals, alpha) -> float:
    L = len(vals)
    k = int(math.ceil((1.0 - alpha) * L - 1e-9))
    k = min(max(k, 1), L)
    return float(np.partition(vals, k - 1)[k - 1])


def _score_draws(data: Dataset, beta, L: int, rng_seed: int):
    """Sample L Gaussians with the empirical score covariance.

    The covariance ``(1/N) sum_i r_i^2 x_i x_i'`` is centered by construction
    at the least-squares estimate (the score mean is exactly zero there), and
    the spectral factorization tolerates a PSD-singular matrix.
    """
    resid = data.y - data.X @ np.asarray(beta, dtype=np.float64)
    scores = resid[:, None] * data.X
    sigma = scores.T @ scores / data.n
    sigma = 0.5 * (sigma + sigma.T)
    w, V = np.linalg.eigh(sigma)
    if w[0] < -1e-8 * max(w[-1], 1.0):
        raise ValueError("score covariance is not positive semidefinite")
    w = np.clip(w, 0.0, None)
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    Z = rng.standard_normal((L, data.d))
    return (Z * np.sqrt(w)) @ V.T, sigma


def _eta_quantile(xis: XiSet, geom: Geometry, H, alpha: float):
    vals = _psi_star_batch(H, profile_matrix(xis, geom))
    eta = _order_statistic(vals, alpha)
    return eta, float(np.mean(np.isinf(vals)))


def select_delta(
    data: Dataset,
    beta_erm,
    rep: Representation,
    alpha: float,
    L: int,
    rng_seed: int,
) -> QuantileEstimate:
    """Monte Carlo radius selection at confidence level ``1 - alpha``.

    Draws ``L`` Gaussians with the empirical score covariance, evaluates the
    conjugate profile form at each, and takes the ``ceil((1-alpha) L)``-th
    order statistic (infinite values sort last).  An infinite quantile means
    the fit should degenerate to the span-restricted problem.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if L < 100:
        raise ValueError(f"need at least 100 Monte Carlo draws, got {L}")
    geom = psi_matrix(rep)
    xis = build_xis(data, beta_erm)
    H, _ = _score_draws(data, beta_erm, L, rng_seed)
    eta, inf_frac = _eta_quantile(xis, geom, H, alpha)
    return QuantileEstimate(
        eta=eta,
        delta=eta / data.n,
        alpha=alpha,
        L=L,
        samples_infinite_fraction=inf_frac,
    )


def confidence_region(
    data: Dataset,
    beta_erm,
    rep: Representation,
    alpha: float,
    L: int,
    rng_seed: int,
) -> Region:
    """Representation-aware confidence ellipsoid centered at ``beta_erm``."""
    if data.n <= data.d:
        raise ValueError("need N > d to estimate the residual variance")
    beta_erm = np.asarray(beta_erm, dtype=np.float64)
    qe = select_delta(data, beta_erm, rep, alpha, L, rng_seed)
    resid = data.y - data.X @ beta_erm
    sigma2 = float(resid @ resid) / (data.n - data.d)
    sigma_hat = data.X.T @ data.X / data.n
    geom = psi_matrix(rep)
    pen = phi(beta_erm, rep, 2).value
    gamma = sigma2 * geom.Psi + pen**2 * sigma_hat
    gamma = 0.5 * (gamma + gamma.T)
    return Region(
        center=beta_erm.copy(),
        Sigma_hat=sigma_hat,
        GammaTilde=gamma,
        eta=qe.eta,
        sigma2_hat=sigma2,
        alpha=alpha,
        n_samples=data.n,
    )


def support_envelope(
    data: Dataset,
    beta_erm,
    rep: Representation,
    alpha: float,
    L: int,
    rng_seed: int,
    K: int,
):
    """Polyhedral outer envelope of the confidence region.

    Samples ``K`` uniform unit directions ``v_k`` and returns
    ``(directions, offsets)`` describing half-spaces
    ``{u : v_k' (u - center) <= offset_k}`` whose intersection contains the
    ellipsoidal region.  Offsets are the exact support function
    ``2 sqrt(t * psi_hat(Sigma_hat^{-1} v))`` of the region at its membership
    threshold ``t = eta / N``, with ``psi_hat(x) = x' M x / 4``.
    """
    if K < data.d + 1:
        raise ValueError(f"need K >= d + 1 = {data.d + 1} directions, got {K}")
    beta_erm = np.asarray(beta_erm, dtype=np.float64)
    geom = psi_matrix(rep)
    xis = build_xis(data, beta_erm)
    H, _ = _score_draws(data, beta_erm, L, rng_seed)
    M = profile_matrix(xis, geom)
    eta, _ = _eta_quantile(xis, geom, H, alpha)
    t = eta / data.n

    dir_rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(1,)))
    V = dir_rng.standard_normal((K, data.d))
    norms = np.linalg.norm(V, axis=1)
    while (norms == 0.0).any():  # pragma: no cover - probability zero
        V[norms == 0.0] = dir_rng.standard_normal((int((norms == 0.0).sum()), data.d))
        norms = np.linalg.norm(V, axis=1)
    V /= norms[:, None]

    sigma_hat = data.X.T @ data.X / data.n
    W = np.linalg.solve(sigma_hat, V.T)
    psi_vals = 0.25 * np.einsum("dk,dk->k", W, M @ W)
    offsets = 2.0 * np.sqrt(t * psi_vals)
    return V, offsets
