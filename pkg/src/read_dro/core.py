"""Domain types and the regularizer/cost geometry.

The central objects are a prior-coefficient matrix ``Theta`` (one column per
knowledge source) with per-source alignment weights ``Lambda`` in ``[0, inf]``,
the induced matrix ``Psi = (I + Theta diag(Lambda) Theta')^{-1}``, the
direction-weighted squared transport cost

    cost_c(u) = ||u||_q^2 + sum_m lambda_m (theta_m' u)^2,

and its dual seminorm

    phi(beta)^2 = inf_k { ||beta - Theta k||_p^2 + sum_m k_m^2 / lambda_m }.

``lambda_m = inf`` removes the ridge cost along ``theta_m`` (phi vanishes on
span of those columns); ``lambda_m = 0`` pins ``k_m = 0``.  Infinite entries
are handled by exact limit formulas, never by large finite surrogates.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import phi_kappa_subgrad

RANK_TOL_FACTOR = 1e-10
INNER_PRODUCT_TOL = 1e-12


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    return a


def _as_vector(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Dataset:
    """A design matrix ``X`` (N x d) and response vector ``y`` (length N)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_matrix(self.X, "X")
        y = _as_vector(self.y, "y")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"need N >= 1 and d >= 1, got X shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.isfinite(X).all() or not np.isfinite(y).all():
            raise ValueError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Representation:
    """Prior directions ``Theta`` (d x M) with alignment weights ``Lambda``.

    ``M = 0`` (empty ``Theta``) means no prior knowledge.  ``Lambda`` entries
    live in ``[0, inf]``; ``inf`` is allowed and meaningful.
    """

    Theta: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        Theta = _as_matrix(self.Theta, "Theta")
        lam = _as_vector(self.Lambda, "Lambda")
        if Theta.shape[1] != lam.shape[0]:
            raise ValueError(
                f"Theta has {Theta.shape[1]} columns but Lambda has "
                f"{lam.shape[0]} entries"
            )
        if not np.isfinite(Theta).all():
            raise ValueError("Theta entries must be finite")
        if np.isnan(lam).any() or (lam < 0).any():
            raise ValueError("Lambda entries must be in [0, inf]")
        object.__setattr__(self, "Theta", Theta)
        object.__setattr__(self, "Lambda", lam)

    @property
    def d(self) -> int:
        return self.Theta.shape[0]

    @property
    def n_sources(self) -> int:
        return self.Theta.shape[1]

    @classmethod
    def empty(cls, d: int) -> "Representation":
        return cls(np.zeros((d, 0)), np.zeros(0))


@dataclass(frozen=True)
class Geometry:
    """The matrix ``Psi`` plus the null-space bookkeeping for infinite weights.

    ``infinite_block_basis`` is an orthonormal d x r basis of the span of the
    columns of ``Theta`` whose weight is infinite; ``Psi`` vanishes on it.
    ``is_seminorm`` is True iff that span is nontrivial (r > 0).
    """

    Psi: np.ndarray
    infinite_block_basis: np.ndarray
    is_seminorm: bool


@dataclass(frozen=True)
class PhiValue:
    value: float
    kappa: np.ndarray = field(repr=False)


def _reduced_system(rep: Representation):
    """Columns and inverse weights actually entering the Woodbury inverse.

    Zero-weight columns are dropped (their coefficient is pinned to zero), and
    among the infinite-weight columns linearly dependent ones are dropped via
    rank-revealing pivoted QR so that Theta'Theta + diag(1/Lambda) stays
    invertible.  Returns (kept_indices, Theta_kept, inv_lambda_kept,
    infinite_block_basis).
    """
    Theta, lam = rep.Theta, rep.Lambda
    d = rep.d
    if rep.n_sources == 0:
        return np.zeros(0, dtype=np.intp), np.zeros((d, 0)), np.zeros(0), np.zeros((d, 0))

    scale = np.linalg.norm(Theta, 2) if Theta.size else 0.0
    tol = RANK_TOL_FACTOR * max(scale, 1e-300)

    inf_idx = np.flatnonzero(np.isinf(lam))
    finite_idx = np.flatnonzero((lam > 0) & np.isfinite(lam))

    if inf_idx.size:
        _, R, piv = scipy.linalg.qr(
            Theta[:, inf_idx], mode="economic", pivoting=True
        )
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > tol))
        inf_kept = inf_idx[piv[:rank]]
        basis = scipy.linalg.orth(Theta[:, inf_kept], rcond=RANK_TOL_FACTOR) \
            if rank else np.zeros((d, 0))
    else:
        inf_kept = inf_idx
        basis = np.zeros((d, 0))

    kept = np.concatenate([finite_idx, inf_kept])
    kept.sort()
    inv_lam = np.where(np.isinf(lam[kept]), 0.0, 1.0 / lam[kept]) if kept.size else np.zeros(0)
    return kept, Theta[:, kept], inv_lam, basis


def psi_matrix(rep: Representation) -> Geometry:
    """Build ``Psi = (I + Theta diag(Lambda) Theta')^{-1}`` and its geometry.

    Infinite weights are taken in the exact limit: the Woodbury form
    ``I - Theta (Theta'Theta + diag(1/Lambda))^{-1} Theta'`` stays finite with
    the inverse-weight entry set to zero.
    """
    d = rep.d
    kept, Tk, inv_lam, basis = _reduced_system(rep)
    if kept.size == 0:
        psi = np.eye(d)
    else:
        A = Tk.T @ Tk + np.diag(inv_lam)
        Z = np.linalg.solve(A, Tk.T)
        psi = np.eye(d) - Tk @ Z
        psi = 0.5 * (psi + psi.T)
    return Geometry(Psi=psi, infinite_block_basis=basis, is_seminorm=basis.shape[1] > 0)


def phi(beta, rep: Representation, p: int | float = 2) -> PhiValue:
    """Evaluate the dual seminorm and its minimizing source coefficients.

    For ``p = 2`` the closed form ``value^2 = beta' Psi beta`` with
    ``kappa = (Theta'Theta + diag(1/Lambda))^{-1} Theta' beta`` is used.  For
    ``p`` in {1, inf} the inner minimization is solved by a damped subgradient
    method (tolerance 1e-8, at most 5000 iterations); that path is a standalone
    numeric routine and is not used by the fitting pipeline.
    """
    beta = _as_vector(beta, "beta")
    if beta.shape[0] != rep.d:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {rep.d}")
    if p not in (1, 2, np.inf):
        raise ValueError(f"p must be one of 1, 2, inf; got {p}")

    M = rep.n_sources
    kappa = np.zeros(M)
    kept, Tk, inv_lam, _ = _reduced_system(rep)

    if p == 2:
        if kept.size == 0:
            return PhiValue(float(np.linalg.norm(beta)), kappa)
        A = Tk.T @ Tk + np.diag(inv_lam)
        b = Tk.T @ beta
        kr = np.linalg.solve(A, b)
        # evaluate the primal objective at the minimizer instead of the
        # quadratic form beta'Psi beta: identical in exact arithmetic but free
        # of cancellation when beta is (nearly) in the fully-aligned span
        resid = beta - Tk @ kr
        val_sq = float(resid @ resid + np.sum(inv_lam * kr * kr))
        kappa[kept] = kr
        return PhiValue(float(np.sqrt(max(val_sq, 0.0))), kappa)

    # p in {1, inf}: normalize so the solve is scale invariant, which makes
    # phi(t*beta) = |t|*phi(beta) hold by construction.
    scale = float(np.linalg.norm(beta))
    if scale == 0.0:
        return PhiValue(0.0, kappa)
    u = beta / scale
    if kept.size == 0:
        val = np.sum(np.abs(u)) if p == 1 else np.max(np.abs(u))
        return PhiValue(float(scale * val), kappa)
    kr = phi_kappa_subgrad(u, Tk, inv_lam, p == 1, 1e-8, 5000)
    v = u - Tk @ kr
    pn = np.sum(np.abs(v)) if p == 1 else np.max(np.abs(v))
    val_sq = pn * pn + float(np.sum(inv_lam * kr * kr))
    kappa[kept] = scale * kr
    return PhiValue(float(scale * np.sqrt(max(val_sq, 0.0))), kappa)


def cost_c(u, rep: Representation, q: int | float = 2) -> float:
    """Direction-weighted squared transport cost of a covariate perturbation.

    Returns ``+inf`` exactly when some infinite-weight direction has a nonzero
    projection (inner product beyond ``1e-12``).
    """
    u = _as_vector(u, "u")
    if u.shape[0] != rep.d:
        raise ValueError(f"u has length {u.shape[0]}, expected {rep.d}")
    if q not in (1, 2, np.inf):
        raise ValueError(f"q must be one of 1, 2, inf; got {q}")
    if q == 1:
        base = np.sum(np.abs(u)) ** 2
    elif q == 2:
        base = float(u @ u)
    else:
        base = np.max(np.abs(u)) ** 2 if u.size else 0.0
    lam = rep.Lambda
    proj = rep.Theta.T @ u if rep.n_sources else np.zeros(0)
    inf_mask = np.isinf(lam)
    if np.any(np.abs(proj[inf_mask]) > INNER_PRODUCT_TOL):
        return float("inf")
    fin = ~inf_mask
    return float(base + np.sum(lam[fin] * proj[fin] ** 2))
