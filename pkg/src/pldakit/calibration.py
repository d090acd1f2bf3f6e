"""Affine score calibration and linear multi-system fusion.

Both are trained by minimizing a prior-weighted logistic cross-entropy
over the trial list, with a tiny ridge for uniqueness on separable data.
Calibration maps one system's scores through a*s + b; fusion combines
several systems through sum_i w_i s_i + b. Subsystems whose trained
weight is not positive can be pruned and the fusion retrained on the
survivors. Fused score sets are tagged and refused as fusion inputs, so
fusions of fusions cannot be built by accident.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import AlignmentError, ConditioningError, ParameterError, SingleClassError
from .scores import ScoreSet, first_trial_mismatch

DEFAULT_CALIBRATION_PRIOR = 0.5
RIDGE = 1e-6
GRAD_TOL = 1e-8
MAX_NEWTON_ITER = 500


@dataclass(frozen=True)
class CalibrationModel:
    """Affine score map s -> scale * s + offset."""

    scale: float
    offset: float
    p_eff: float = DEFAULT_CALIBRATION_PRIOR

    def __post_init__(self):
        if not (math.isfinite(self.scale) and math.isfinite(self.offset)):
            raise ParameterError("calibration parameters must be finite")


@dataclass(frozen=True)
class FusionModel:
    """Per-subsystem weights plus offset; `retained` holds the original
    subsystem indices the weights correspond to."""

    weights: tuple[float, ...]
    offset: float
    retained: tuple[int, ...]
    p_eff: float
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.retained):
            raise ParameterError("one weight per retained subsystem required")
        if not all(math.isfinite(w) for w in self.weights) or not math.isfinite(self.offset):
            raise ParameterError("fusion parameters must be finite")
        if self.names is not None and len(self.names) != len(self.retained):
            raise ParameterError("one name per retained subsystem required")


def effective_prior_logit(p_eff: float) -> float:
    """log(p / (1-p)); the Bayes decision threshold for LLRs is its negative."""
    if not 0.0 < p_eff < 1.0:
        raise ParameterError(f"effective prior must be in (0, 1), got {p_eff}")
    return math.log(p_eff / (1.0 - p_eff))


def _class_weights(labels: np.ndarray, p_eff: float) -> np.ndarray:
    n_tar = int(labels.sum())
    n_non = int((~labels).sum())
    if n_tar == 0 or n_non == 0:
        raise SingleClassError(
            f"need both classes, got {n_tar} targets / {n_non} nontargets"
        )
    w = np.where(labels, p_eff / n_tar, (1.0 - p_eff) / n_non)
    return w


def weighted_cross_entropy(scores: ScoreSet, p_eff: float) -> float:
    """Prior-weighted logistic cost of scores interpreted as LLRs.

    Zero for perfectly calibrated, infinitely confident scores; log 2 for
    scores that carry no information at p_eff = 0.5.
    """
    tau = effective_prior_logit(p_eff)
    labels = scores.require_labels()
    w = _class_weights(labels, p_eff)
    y = np.where(labels, 1.0, -1.0)
    return float(np.sum(w * np.logaddexp(0.0, -y * (scores.scores + tau))))


def _train_linear(
    columns: np.ndarray, labels: np.ndarray, p_eff: float
) -> tuple[np.ndarray, float]:
    """Minimize the weighted cross-entropy of columns @ w + b (+ ridge).

    Damped Newton on a strictly convex objective; iterates until the
    gradient norm is below GRAD_TOL.
    """
    tau = effective_prior_logit(p_eff)
    n, m = columns.shape
    if not np.all(np.isfinite(columns)):
        raise ParameterError("scores must be finite for training")
    w = _class_weights(labels, p_eff)
    y = np.where(labels, 1.0, -1.0)
    x = np.hstack([columns, np.ones((n, 1))])

    theta = np.zeros(m + 1)
    theta[:m] = 1.0 / m

    def objective(th):
        z = y * (x @ th + tau)
        return float(np.sum(w * np.logaddexp(0.0, -z)) + RIDGE * np.dot(th, th))

    obj = objective(theta)
    for _ in range(MAX_NEWTON_ITER):
        f = x @ theta
        z = y * (f + tau)
        s = expit(-z)  # sigma(-z)
        grad = x.T @ (-w * y * s) + 2.0 * RIDGE * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm < GRAD_TOL:
            break
        curv = w * s * expit(z)
        hess = (x * curv[:, None]).T @ x + 2.0 * RIDGE * np.eye(m + 1)
        step = np.linalg.solve(hess, -grad)
        t = 1.0
        slope = float(grad @ step)
        while t > 1e-14:
            cand = theta + t * step
            if objective(cand) <= obj + 1e-4 * t * slope:
                break
            t *= 0.5
        theta = theta + t * step
        obj = objective(theta)
    else:
        raise ConditioningError(
            f"calibration/fusion training did not reach gradient tolerance {GRAD_TOL}"
        )
    return theta[:m], float(theta[m])


def train_calibration(scores: ScoreSet, p_eff: float = DEFAULT_CALIBRATION_PRIOR) -> CalibrationModel:
    """Fit the affine map minimizing the weighted cross-entropy."""
    labels = scores.require_labels()
    weights, offset = _train_linear(scores.scores[:, None], labels, p_eff)
    return CalibrationModel(scale=float(weights[0]), offset=offset, p_eff=p_eff)


def apply_affine(model: CalibrationModel, scores: ScoreSet) -> ScoreSet:
    """s -> scale * s + offset, labels and fusion tag passed through."""
    return scores.with_scores(model.scale * scores.scores + model.offset)


def _check_fusion_inputs(subsystem_scores: Sequence[ScoreSet]) -> np.ndarray:
    if len(subsystem_scores) < 1:
        raise ParameterError("fusion requires at least one subsystem")
    first = subsystem_scores[0]
    for other in subsystem_scores[1:]:
        mismatch = first_trial_mismatch(first, other)
        if mismatch is not None:
            raise AlignmentError(
                f"subsystem trial lists differ, first mismatch at {mismatch}"
            )
    for s in subsystem_scores:
        if s.fused:
            raise ParameterError(
                "refusing to fuse an already-fused score set; "
                "fusions of fusions overfit and are not supported"
            )
    return np.column_stack([s.scores for s in subsystem_scores])


def train_fusion(subsystem_scores: Sequence[ScoreSet], p_eff: float) -> FusionModel:
    """Fit weights and offset for the linear combination of subsystems."""
    columns = _check_fusion_inputs(subsystem_scores)
    labels = subsystem_scores[0].require_labels()
    weights, offset = _train_linear(columns, labels, p_eff)
    return FusionModel(
        weights=tuple(float(v) for v in weights),
        offset=offset,
        retained=tuple(range(len(subsystem_scores))),
        p_eff=p_eff,
    )


def apply_fusion(model: FusionModel, subsystem_scores: Sequence[ScoreSet]) -> ScoreSet:
    """Per-trial weighted sum plus offset; output is tagged as fused.

    Accepts either the full original subsystem list (retained entries are
    selected by index) or just the retained subsystems in order.
    """
    if len(subsystem_scores) == len(model.retained):
        chosen = list(subsystem_scores)
    elif len(subsystem_scores) > max(model.retained, default=-1):
        chosen = [subsystem_scores[i] for i in model.retained]
    else:
        raise AlignmentError(
            f"fusion model retains subsystems {list(model.retained)} but only "
            f"{len(subsystem_scores)} score sets were provided"
        )
    first = chosen[0]
    for other in chosen[1:]:
        mismatch = first_trial_mismatch(first, other)
        if mismatch is not None:
            raise AlignmentError(
                f"subsystem trial lists differ, first mismatch at {mismatch}"
            )
    combined = np.zeros(len(first))
    for w, s in zip(model.weights, chosen):
        combined += w * s.scores
    combined += model.offset
    return ScoreSet(trials=first.trials, scores=combined, labels=first.labels, fused=True)


def select_positive_weight_subsystems(
    subsystem_scores: Sequence[ScoreSet], p_eff: float, single_pass: bool = False
) -> FusionModel:
    """Train, drop subsystems with non-positive weight, retrain on the
    survivors; repeat until all weights are positive or one system is
    left. With `single_pass` the drop-and-retrain happens at most once."""

    def finish(active, model):
        return FusionModel(
            weights=model.weights,
            offset=model.offset,
            retained=tuple(active),
            p_eff=p_eff,
        )

    active = list(range(len(subsystem_scores)))
    while True:
        model = train_fusion([subsystem_scores[i] for i in active], p_eff)
        keep = [active[i] for i, w in enumerate(model.weights) if w > 0.0]
        if len(keep) == len(active) or len(active) == 1:
            return finish(active, model)
        if not keep:
            # nothing positive: fall back to the least-bad single system
            keep = [active[int(np.argmax(model.weights))]]
        active = keep
        if single_pass:
            model = train_fusion([subsystem_scores[i] for i in active], p_eff)
            return finish(active, model)