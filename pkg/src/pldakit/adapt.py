"""Unsupervised domain adaptation from unlabeled in-domain embeddings.

Two model-level adapters are provided. Correlation-alignment adaptation
transports the out-of-domain covariances toward pseudo in-domain ones and
adds only the variance excess, scaled by an interpolation factor, so the
adapted covariances never shrink. Excess-variance adaptation distributes
the in-domain total-variance excess over the within/between covariances
in the model's simultaneously whitened basis. Both recenter the model
mean on the in-domain mean.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import mean_and_cov, pd_inv_sqrt, psd_sqrt, reg_epsilon, sim_diag, sym
from .errors import (
    ConditioningError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
)
from .plda import GaussianPLDA

DEFAULT_GAMMA = 0.5
DEFAULT_WITHIN_SHARE = 0.75
DEFAULT_BETWEEN_SHARE = 0.25

# Below this relative eigenvalue a covariance is treated as singular and
# diagonally loaded before entering a generalized eigenproblem.
_SINGULAR_REL = 1e-12


@dataclass(frozen=True)
class DomainStats:
    """Mean and total covariance of an unlabeled in-domain sample."""

    mean: np.ndarray
    total_cov: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.total_cov, dtype=np.float64)
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ShapeError("mean must be (d,) and total_cov (d, d)")
        if self.count < 2:
            raise InsufficientDataError("domain stats require count >= 2")
        skew = np.abs(cov - cov.T).max()
        if skew > 1e-10 * max(1.0, np.abs(cov).max()):
            raise ConditioningError(f"total_cov is not symmetric (skew {skew:.3e})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "total_cov", sym(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def collect_domain_stats(data: np.ndarray) -> DomainStats:
    """Mean and biased sample covariance, diagonally loaded by
    eps = 1e-6 * trace / d."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    mean, cov = mean_and_cov(data)
    eps = reg_epsilon(cov)
    cov = cov + eps * np.eye(cov.shape[0])
    return DomainStats(mean=mean, total_cov=cov, count=data.shape[0])


def _check_dims(model_dim: int, stats: DomainStats) -> None:
    if stats.dim != model_dim:
        raise ShapeError(
            f"domain stats dimension {stats.dim} does not match model dimension {model_dim}"
        )


def _alignment_transform(c_out: np.ndarray, c_in: np.ndarray) -> np.ndarray:
    """A = C_in^{1/2} C_out^{-1/2} (principal square roots)."""
    return psd_sqrt(c_in) @ pd_inv_sqrt(c_out, "out-domain covariance")


def coral_align_features(
    out_stats: DomainStats, in_stats: DomainStats, x: np.ndarray
) -> np.ndarray:
    """Map out-domain vectors so their second-order statistics match the
    in-domain sample: A (x - out_mean) + in_mean."""
    if out_stats.dim != in_stats.dim:
        raise ShapeError("domain stats dimensions differ")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != out_stats.dim:
        raise ShapeError(f"expected dimension {out_stats.dim}, got {rows.shape[1]}")
    a = _alignment_transform(out_stats.total_cov, in_stats.total_cov)
    out = (rows - out_stats.mean) @ a.T + in_stats.mean
    return out[0] if single else out


def _excess_in_model_basis(phi: np.ndarray, phi_hat: np.ndarray) -> np.ndarray:
    """Positive part of (phi_hat - phi) in the basis that whitens phi.

    Solves the simultaneous diagonalization P' phi P = I,
    P' phi_hat P = diag(lam) and returns P^-T max(lam - 1, 0) P^-1, which
    is exactly phi_hat's variance excess over phi and always PSD. If phi
    is (near) singular it is diagonally loaded for the solve only, so a
    zero excess still returns an exact zero.
    """
    w = np.linalg.eigvalsh(phi)
    base = phi
    if w.min() <= _SINGULAR_REL * max(w.max(), 1.0):
        base = phi + (reg_epsilon(phi) + _SINGULAR_REL) * np.eye(phi.shape[0])
    lam, p = sim_diag(phi_hat, base)
    gain = np.maximum(lam - 1.0, 0.0)
    if not gain.any():
        return np.zeros_like(phi)
    p_inv = p.T @ base  # P' base P = I  =>  P^-1 = P' base
    return sym(p_inv.T @ (gain[:, None] * p_inv))


def coral_plus_adapt(
    model: GaussianPLDA, in_stats: DomainStats, gamma: float = DEFAULT_GAMMA
) -> GaussianPLDA:
    """Correlation-alignment adaptation of both PLDA covariances.

    The model total covariance is aligned to the in-domain total
    covariance, giving pseudo in-domain covariances A phi A'; each
    covariance then absorbs gamma times its positive variance excess, so
    adaptation never reduces variance and gamma = 0 is a no-op. The mean
    is recentered on the in-domain mean.
    """
    _check_dims(model.dim, in_stats)
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must be in [0, 1], got {gamma}")
    w = np.linalg.eigvalsh(model.phi_w)
    if w.min() <= 0.0:
        raise ConditioningError("phi_w must be positive definite for adaptation")
    a = _alignment_transform(model.total_cov, in_stats.total_cov)
    new_cov = []
    for phi in (model.phi_b, model.phi_w):
        phi_hat = sym(a @ phi @ a.T)
        new_cov.append(phi + gamma * _excess_in_model_basis(phi, phi_hat))
    return GaussianPLDA(mu=in_stats.mean, phi_b=new_cov[0], phi_w=new_cov[1])


def excess_variance_adapt(
    model: GaussianPLDA,
    in_stats: DomainStats,
    within_share: float = DEFAULT_WITHIN_SHARE,
    between_share: float = DEFAULT_BETWEEN_SHARE,
) -> GaussianPLDA:
    """Add observed in-domain variance excess back into the model.

    In the basis that simultaneously diagonalizes (phi_b, phi_w) and
    whitens their sum, every direction of the in-domain total covariance
    with variance lam > 1 contributes its excess (lam - 1), split between
    phi_w and phi_b by the given shares; directions with lam <= 1 are
    untouched. The adapted total covariance therefore equals
    max(observed, model) per whitened direction. The mean is recentered
    on the in-domain mean.
    """
    _check_dims(model.dim, in_stats)
    if within_share < 0.0 or between_share < 0.0 or abs(within_share + between_share - 1.0) > 1e-12:
        raise ParameterError(
            f"shares must be nonnegative and sum to 1, got {within_share}/{between_share}"
        )
    total = model.total_cov
    # v whitens the model total covariance and diagonalizes phi_b within it
    _, v = sim_diag(model.phi_b, total)
    v_inv = v.T @ total
    observed = sym(v.T @ in_stats.total_cov @ v)
    lam, u = np.linalg.eigh(observed)
    gain = np.maximum(lam - 1.0, 0.0)
    if not gain.any():
        return GaussianPLDA(mu=in_stats.mean, phi_b=model.phi_b, phi_w=model.phi_w)
    excess_white = u @ (gain[:, None] * u.T)
    excess = sym(v_inv.T @ excess_white @ v_inv)
    return GaussianPLDA(
        mu=in_stats.mean,
        phi_b=model.phi_b + between_share * excess,
        phi_w=model.phi_w + within_share * excess,
    )
