"""Two-covariance Gaussian PLDA: preprocessing, EM training, scoring, sampling.

The generative model for an embedding x of speaker s is

    x = mu + y_s + e,    y_s ~ N(0, phi_b),    e ~ N(0, phi_w),

so the marginal is N(mu, phi_b + phi_w), same-speaker pairs share y_s,
and the verification score is the log-likelihood ratio between the
shared-speaker and independent-speaker hypotheses.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._linalg import logdet_pd, mean_and_cov, pd_inv_sqrt, psd_sqrt, reg_epsilon, sym
from .embeddings import EmbeddingArchive, LabeledEmbeddings
from .errors import (
    ConditioningError,
    DegenerateInputError,
    InsufficientDataError,
    MissingKeyError,
    ParameterError,
    ShapeError,
)
from .scores import ScoreSet

LOG_2PI = math.log(2.0 * math.pi)

# Tolerance for symmetry of stored covariances.
SYM_TOL = 1e-10

DEFAULT_ITERATIONS = 20
DEFAULT_VARIANCE_FLOOR = 1e-6

# EM stops early once the per-sample log-likelihood gain drops below this.
EM_RELATIVE_TOL = 1e-7


@dataclass(frozen=True)
class GaussianPLDA:
    """Global mean plus between/within-speaker covariances."""

    mu: np.ndarray
    phi_b: np.ndarray
    phi_w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        phi_b = np.asarray(self.phi_b, dtype=np.float64)
        phi_w = np.asarray(self.phi_w, dtype=np.float64)
        if mu.ndim != 1:
            raise ShapeError("mu must be a vector")
        d = mu.shape[0]
        for name, m in (("phi_b", phi_b), ("phi_w", phi_w)):
            if m.shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {m.shape}")
            skew = np.abs(m - m.T).max() if d else 0.0
            if skew > SYM_TOL * max(1.0, np.abs(m).max()):
                raise ConditioningError(f"{name} is not symmetric (skew {skew:.3e})")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(phi_b)) and np.all(np.isfinite(phi_w))):
            raise DegenerateInputError("model parameters contain non-finite values")
        phi_b = sym(phi_b)
        phi_w = sym(phi_w)
        scale = max(1.0, float(np.trace(phi_b) + np.trace(phi_w)) / max(d, 1))
        wb = np.linalg.eigvalsh(phi_b)
        if wb.min() < -1e-8 * scale:
            raise ConditioningError(
                f"phi_b must be positive semidefinite (min eigenvalue {wb.min():.3e})"
            )
        ww = np.linalg.eigvalsh(phi_w)
        if ww.min() <= 0.0:
            raise ConditioningError(
                f"phi_w must be positive definite (min eigenvalue {ww.min():.3e})"
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi_b", phi_b)
        object.__setattr__(self, "phi_w", phi_w)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def total_cov(self) -> np.ndarray:
        return self.phi_b + self.phi_w


@dataclass(frozen=True)
class Preprocessor:
    """Centering shift, whitening transform, optional length normalization.

    Application order is fixed: shift, then transform, then length norm.
    """

    shift: np.ndarray
    transform: np.ndarray
    apply_length_norm: bool

    def __post_init__(self):
        shift = np.asarray(self.shift, dtype=np.float64)
        transform = np.asarray(self.transform, dtype=np.float64)
        d = shift.shape[0]
        if shift.ndim != 1 or transform.shape != (d, d):
            raise ShapeError("shift must be (d,) and transform (d, d)")
        sign, _ = np.linalg.slogdet(transform)
        if sign == 0:
            raise ConditioningError("preprocessor transform is singular")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "transform", transform)

    @property
    def dim(self) -> int:
        return self.shift.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Preprocess one vector or a matrix of row vectors."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        rows = np.atleast_2d(x)
        if rows.shape[1] != self.dim:
            raise ShapeError(f"expected dimension {self.dim}, got {rows.shape[1]}")
        out = (rows - self.shift) @ self.transform.T
        if self.apply_length_norm:
            out = length_normalize(out)
        return out[0] if single else out


def length_normalize(x: np.ndarray) -> np.ndarray:
    """Scale to norm sqrt(d), preserving direction.

    Accepts one vector or a matrix of row vectors.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("cannot length-normalize non-finite input")
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("cannot length-normalize a zero vector")
    out = rows * (math.sqrt(rows.shape[1]) / norms)[:, None]
    return out[0] if single else out


def fit_preprocessor(data: np.ndarray, use_length_norm: bool = False) -> Preprocessor:
    """Fit centering and whitening on row vectors.

    The transform is the inverse principal square root of the biased
    sample covariance plus eps*I with eps = 1e-6 * trace / d, so the
    preprocessed data has (near) zero mean and identity covariance.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 vectors to fit a preprocessor, got {data.shape[0]}"
        )
    mean, cov = mean_and_cov(data)
    eps = reg_epsilon(cov)
    transform = pd_inv_sqrt(cov + eps * np.eye(cov.shape[0]), "sample covariance")
    return Preprocessor(shift=mean, transform=transform, apply_length_norm=use_length_norm)


def _group_by_speaker(data: LabeledEmbeddings):
    """Group rows by speaker: (X, list of per-speaker row-index arrays)."""
    x = data.archive.matrix
    codes, names = data.speaker_codes()
    groups = [np.flatnonzero(codes == i) for i in range(len(names))]
    return x, groups


def _floor_eigenvalues(m: np.ndarray, floor: float) -> np.ndarray:
    w, v = np.linalg.eigh(sym(m))
    if w.min() >= floor:
        return sym(m)
    w = np.maximum(w, floor)
    return sym((v * w) @ v.T)


def marginal_loglik(model: GaussianPLDA, data: LabeledEmbeddings) -> float:
    """Log-likelihood of the data with same-speaker correlation included.

    For a speaker with n observations the joint covariance is
    I_n (x) phi_w + 1 1' (x) phi_b; the Woodbury identity reduces both
    the log-determinant and the quadratic form to d-dimensional pieces.
    """
    x, groups = _group_by_speaker(data)
    if x.shape[1] != model.dim:
        raise ShapeError(f"model dimension {model.dim}, data dimension {x.shape[1]}")
    n_total, d = x.shape
    phi_w, phi_b = model.phi_w, model.phi_b

    chol_w = scipy.linalg.cholesky(phi_w, lower=True)
    logdet_w = 2.0 * float(np.sum(np.log(np.diag(chol_w))))

    centered = x - model.mu
    half = scipy.linalg.solve_triangular(chol_w, centered.T, lower=True)
    quad_all = float(np.sum(half * half))

    counts = np.array([len(g) for g in groups])
    sums = np.vstack([centered[g].sum(axis=0) for g in groups])

    ll = -0.5 * (n_total * d * LOG_2PI + float((counts - 1).sum()) * logdet_w + quad_all)
    for n in np.unique(counts):
        mask = counts == n
        m_n = phi_w + n * phi_b
        logdet_m = logdet_pd(m_n, "phi_w + n*phi_b")
        corr = sym(np.linalg.solve(m_n.T, np.linalg.solve(phi_w, phi_b).T).T)
        s = sums[mask]
        quad_corr = float(np.einsum("ij,jk,ik->", s, corr, s))
        ll += -0.5 * (int(mask.sum()) * logdet_m) + 0.5 * quad_corr
    return ll


def fit_plda_em(
    data: LabeledEmbeddings,
    iterations: int = DEFAULT_ITERATIONS,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    init: GaussianPLDA | None = None,
) -> GaussianPLDA:
    """Fit the two-covariance model by expectation-maximization.

    Initialization is deterministic: mu at the global mean, phi_b at the
    between-speaker scatter of speaker means, phi_w at the pooled within
    scatter. Pass `init` to warm-start from an existing model instead.
    Training log-likelihood is non-decreasing across iterations; the loop
    exits early once the gain falls below 1e-7 per sample. phi_w
    eigenvalues are floored at `variance_floor` after every update.
    """
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    if variance_floor <= 0.0:
        raise ParameterError("variance_floor must be positive")
    x, groups = _group_by_speaker(data)
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("training data contains non-finite values")
    if len(groups) < 2:
        raise InsufficientDataError(
            f"PLDA training requires at least 2 speakers, got {len(groups)}"
        )
    n_total, d = x.shape
    counts = np.array([len(g) for g in groups])
    n_speakers = len(groups)
    eye = np.eye(d)

    sum_x = x.sum(axis=0)
    sxx = x.T @ x
    speaker_sums = np.vstack([x[g].sum(axis=0) for g in groups])
    speaker_means = speaker_sums / counts[:, None]

    if init is not None:
        if init.dim != d:
            raise ShapeError(f"init model dimension {init.dim}, data dimension {d}")
        mu, phi_b, phi_w = init.mu, init.phi_b, init.phi_w
    else:
        mu = sum_x / n_total
        dev = speaker_means - mu
        phi_b = sym(dev.T @ dev / n_speakers)
        # pooled within scatter
        acc = np.zeros((d, d))
        for g, m in zip(groups, speaker_means):
            r = x[g] - m
            acc += r.T @ r
        phi_w = _floor_eigenvalues(acc / n_total, variance_floor)

    unique_counts = np.unique(counts)
    ll_prev = None
    for _ in range(iterations):
        ll = marginal_loglik(GaussianPLDA(mu, phi_b, phi_w), data)
        if ll_prev is not None and ll - ll_prev < EM_RELATIVE_TOL * n_total:
            break
        ll_prev = ll

        # E-step: posterior mean/covariance of the speaker factor, batched
        # over speakers with the same observation count.
        post_means = np.empty((n_speakers, d))
        post_cov = {}
        for n in unique_counts:
            m_n = phi_w + n * phi_b
            k_n = n * np.linalg.solve(m_n.T, phi_b.T).T  # phi_b (phi_b + phi_w/n)^-1
            post_cov[int(n)] = sym((eye - k_n) @ phi_b)
            mask = counts == n
            post_means[mask] = (speaker_means[mask] - mu) @ k_n.T

        # M-step: joint closed-form update of (mu, phi_b, phi_w).
        weighted_post = counts[:, None] * post_means
        mu_new = (sum_x - weighted_post.sum(axis=0)) / n_total

        cov_sum = sum(int((counts == n).sum()) * post_cov[int(n)] for n in unique_counts)
        phi_b = sym((cov_sum + post_means.T @ post_means) / n_speakers)

        resid = sxx - np.outer(mu_new, sum_x) - np.outer(sum_x, mu_new) + n_total * np.outer(mu_new, mu_new)
        cross = (speaker_sums - counts[:, None] * mu_new).T @ post_means
        second = (counts[:, None] * post_means).T @ post_means
        second += sum(int(n) * int((counts == n).sum()) * post_cov[int(n)] for n in unique_counts)
        phi_w = _floor_eigenvalues((resid - cross - cross.T + second) / n_total, variance_floor)
        mu = mu_new

        # numerical guard: phi_b must stay PSD
        wb = np.linalg.eigvalsh(phi_b)
        if wb.min() < 0.0:
            phi_b = _floor_eigenvalues(phi_b, 0.0)

    return GaussianPLDA(mu, phi_b, phi_w)


def plda_log_density(model: GaussianPLDA, x: np.ndarray) -> float | np.ndarray:
    """Log of the marginal density N(x; mu, phi_b + phi_w)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != model.dim:
        raise ShapeError(f"expected dimension {model.dim}, got {rows.shape[1]}")
    total = model.total_cov
    chol = scipy.linalg.cholesky(total, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    half = scipy.linalg.solve_triangular(chol, (rows - model.mu).T, lower=True)
    quad = np.sum(half * half, axis=0)
    out = -0.5 * (model.dim * LOG_2PI + logdet + quad)
    return float(out[0]) if single else out


class PairScorer:
    """Precomputed same/different-speaker LLR scorer for one model.

    With T = phi_b + phi_w and S = T - phi_b T^-1 phi_b, the LLR for
    centered vectors a, b is

        0.5 (logdet T - logdet S) - 0.5 a'Qa - 0.5 b'Qb + a'Pb,

    Q = S^-1 - T^-1 and P = T^-1 phi_b S^-1 (both symmetric).
    """

    def __init__(self, model: GaussianPLDA):
        self.model = model
        b = model.phi_b
        t = model.total_cov
        t_inv = np.linalg.inv(t)
        s = sym(t - b @ t_inv @ b)
        s_inv = np.linalg.inv(s)
        self._q = sym(s_inv - t_inv)
        self._p = sym(t_inv @ b @ s_inv)
        self._offset = 0.5 * (logdet_pd(t, "total covariance") - logdet_pd(s, "conditional covariance"))

    def _center(self, x: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if rows.shape[1] != self.model.dim:
            raise ShapeError(f"expected dimension {self.model.dim}, got {rows.shape[1]}")
        return rows - self.model.mu

    def score(self, enroll: np.ndarray, test: np.ndarray) -> float:
        return float(self.score_rows(np.atleast_2d(enroll), np.atleast_2d(test))[0])

    def score_rows(self, enroll: np.ndarray, test: np.ndarray) -> np.ndarray:
        """Row-wise scores for aligned (n, d) enroll/test matrices."""
        a = self._center(enroll)
        b = self._center(test)
        if a.shape[0] != b.shape[0]:
            raise ShapeError("enroll and test batches must have equal length")
        qa = np.einsum("ij,jk,ik->i", a, self._q, a)
        qb = np.einsum("ij,jk,ik->i", b, self._q, b)
        cross = np.einsum("ij,jk,ik->i", a, self._p, b)
        return self._offset - 0.5 * qa - 0.5 * qb + cross

    def score_matrix(self, enroll: np.ndarray, test: np.ndarray) -> np.ndarray:
        """All-pairs score matrix, rows = enroll entries, cols = test."""
        a = self._center(enroll)
        b = self._center(test)
        qa = np.einsum("ij,jk,ik->i", a, self._q, a)
        qb = np.einsum("ij,jk,ik->i", b, self._q, b)
        cross = a @ self._p @ b.T
        return self._offset - 0.5 * qa[:, None] - 0.5 * qb[None, :] + cross


def plda_llr_score(model: GaussianPLDA, enroll: np.ndarray, test: np.ndarray) -> float:
    """Same-speaker vs different-speaker log-likelihood ratio for one pair."""
    return PairScorer(model).score(enroll, test)


def score_trials(
    model: GaussianPLDA,
    enroll_archive: EmbeddingArchive,
    test_archive: EmbeddingArchive,
    trials,
    labels=None,
) -> ScoreSet:
    """Score a trial list against enroll/test archives.

    All unresolvable keys are collected and reported in one error.
    """
    pairs = tuple((str(e), str(t)) for e, t in trials)
    if not pairs:
        return ScoreSet(trials=(), scores=np.empty(0), labels=labels)
    idx_e, missing_e = enroll_archive.lookup([e for e, _ in pairs])
    idx_t, missing_t = test_archive.lookup([t for _, t in pairs])
    missing = [f"enroll:{k}" for k in dict.fromkeys(missing_e)]
    missing += [f"test:{k}" for k in dict.fromkeys(missing_t)]
    if missing:
        raise MissingKeyError(missing)
    scorer = PairScorer(model)
    values = scorer.score_rows(enroll_archive.matrix[idx_e], test_archive.matrix[idx_t])
    return ScoreSet(trials=pairs, scores=values, labels=labels)


def sample_embeddings(
    model: GaussianPLDA,
    n_speakers: int,
    per_speaker: int,
    seed: int,
) -> LabeledEmbeddings:
    """Draw a labeled synthetic dataset from the generative model.

    Speaker means come from N(mu, phi_b), observations from
    N(speaker mean, phi_w). Deterministic for a fixed seed.
    """
    if n_speakers < 1 or per_speaker < 1:
        raise ParameterError("n_speakers and per_speaker must be >= 1")
    rng = np.random.default_rng(seed)
    d = model.dim
    sqrt_b = psd_sqrt(model.phi_b)
    sqrt_w = psd_sqrt(model.phi_w)
    speaker_means = model.mu + rng.standard_normal((n_speakers, d)) @ sqrt_b.T
    noise = rng.standard_normal((n_speakers * per_speaker, d)) @ sqrt_w.T
    obs = np.repeat(speaker_means, per_speaker, axis=0) + noise

    width = max(5, len(str(n_speakers - 1)))
    keys = []
    speaker_of = {}
    for i in range(n_speakers):
        spk = f"spk{i:0{width}d}"
        for j in range(per_speaker):
            key = f"{spk}-{j:03d}"
            keys.append(key)
            speaker_of[key] = spk
    return LabeledEmbeddings(EmbeddingArchive(keys, obs), speaker_of)
