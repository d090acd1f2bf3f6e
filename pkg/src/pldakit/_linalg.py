"""Small symmetric-matrix helpers shared by the model and adaptation code."""

import numpy as np
import scipy.linalg

from .errors import ConditioningError, InsufficientDataError

# Relative scale of the diagonal regularizer added before inversions.
REG_SCALE = 1e-6


def sym(m: np.ndarray) -> np.ndarray:
    """Symmetrize a square matrix, removing numerical skew."""
    return 0.5 * (m + m.T)


def is_symmetric(m: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.all(np.abs(m - m.T) <= tol * max(1.0, np.abs(m).max())))


def reg_epsilon(cov: np.ndarray) -> float:
    """Diagonal loading for a covariance: REG_SCALE * trace / d."""
    d = cov.shape[0]
    return REG_SCALE * float(np.trace(cov)) / d


def mean_and_cov(x: np.ndarray):
    """Sample mean and biased (denominator n) covariance of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 vectors to estimate a covariance, got {x.shape[0] if x.ndim == 2 else 1}"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    return mean, sym(cov)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix (negatives clipped)."""
    w, v = np.linalg.eigh(sym(m))
    w = np.clip(w, 0.0, None)
    return sym((v * np.sqrt(w)) @ v.T)


def pd_inv_sqrt(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Inverse principal square root; requires strictly positive spectrum."""
    w, v = np.linalg.eigh(sym(m))
    if w.min() <= 0.0:
        raise ConditioningError(
            f"{name} is not positive definite (min eigenvalue {w.min():.3e})"
        )
    return sym((v / np.sqrt(w)) @ v.T)


def assert_pd(m: np.ndarray, name: str = "matrix") -> None:
    w = np.linalg.eigvalsh(sym(m))
    if w.min() <= 0.0:
        raise ConditioningError(
            f"{name} is not positive definite (min eigenvalue {w.min():.3e})"
        )


def sim_diag(a: np.ndarray, b: np.ndarray):
    """Simultaneously diagonalize (a, b): returns (lam, p) with
    p.T @ b @ p = I and p.T @ a @ p = diag(lam).

    b must be positive definite; a only needs to be symmetric.
    """
    try:
        lam, p = scipy.linalg.eigh(sym(a), sym(b))
    except scipy.linalg.LinAlgError as exc:
        raise ConditioningError(f"generalized eigenproblem failed: {exc}") from exc
    return lam, p


def logdet_pd(m: np.ndarray, name: str = "matrix") -> float:
    sign, val = np.linalg.slogdet(sym(m))
    if sign <= 0:
        raise ConditioningError(f"{name} has non-positive determinant")
    return float(val)
