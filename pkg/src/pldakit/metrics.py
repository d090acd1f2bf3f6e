"""Detection performance measures: DET points, EER, detection costs.

The decision rule everywhere is accept iff score >= threshold; ties
count as accepts. Miss and false-alarm rates are empirical staircase
functions evaluated at every distinct score, plus a reject-all endpoint.
"""

from dataclasses import dataclass
from typing import Iterator, Literal

import numpy as np

from .calibration import effective_prior_logit
from .errors import ParameterError
from .scores import ScoreSet

COST_PRESETS = {
    "cmn2": (0.01, 0.005),
    "vast": (0.05,),
}


@dataclass(frozen=True)
class DetCurve:
    """Operating points (threshold, p_miss, p_fa), thresholds ascending."""

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        pm = np.asarray(self.p_miss, dtype=np.float64)
        pf = np.asarray(self.p_fa, dtype=np.float64)
        if not (t.shape == pm.shape == pf.shape) or t.ndim != 1:
            raise ParameterError("DET arrays must be 1-D and equally long")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "p_miss", pm)
        object.__setattr__(self, "p_fa", pf)

    def __iter__(self) -> Iterator[tuple[float, float, float]]:
        return iter(zip(self.thresholds, self.p_miss, self.p_fa))

    def __len__(self) -> int:
        return self.thresholds.shape[0]


@dataclass(frozen=True)
class CostParams:
    """Effective priors the primary cost is averaged over."""

    effective_priors: tuple[float, ...]

    def __post_init__(self):
        priors = tuple(float(p) for p in self.effective_priors)
        if not priors:
            raise ParameterError("at least one effective prior is required")
        for p in priors:
            if not 0.0 < p < 1.0:
                raise ParameterError(f"effective prior must be in (0, 1), got {p}")
        object.__setattr__(self, "effective_priors", priors)

    @classmethod
    def preset(cls, name: str) -> "CostParams":
        try:
            return cls(COST_PRESETS[name])
        except KeyError:
            raise ParameterError(
                f"unknown preset '{name}', choose from {sorted(COST_PRESETS)}"
            ) from None


def det_points(scores: ScoreSet) -> DetCurve:
    """Empirical miss/false-alarm staircase at every distinct score.

    The first point (threshold = min score) accepts everything; a final
    point one unit past the maximum rejects everything.
    """
    tar, non = scores.split()
    tar = np.sort(tar)
    non = np.sort(non)
    nt, nn = tar.size, non.size
    thresholds = np.unique(np.concatenate([tar, non]))
    p_miss = np.searchsorted(tar, thresholds, side="left") / nt
    p_fa = (nn - np.searchsorted(non, thresholds, side="left")) / nn
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    p_miss = np.append(p_miss, 1.0)
    p_fa = np.append(p_fa, 0.0)
    return DetCurve(thresholds=thresholds, p_miss=p_miss, p_fa=p_fa)


def eer(scores: ScoreSet) -> float:
    """Rate where miss equals false alarm, linearly interpolated between
    adjacent staircase points."""
    curve = det_points(scores)
    pm, pf = curve.p_miss, curve.p_fa
    k = int(np.argmax(pm >= pf))  # first crossing; k >= 1 since pm[0]=0, pf[0]=1
    if pm[k] == pf[k]:
        return float(pm[k])
    pm1, pf1 = pm[k - 1], pf[k - 1]
    pm2, pf2 = pm[k], pf[k]
    t = (pf1 - pm1) / ((pm2 - pm1) + (pf1 - pf2))
    return float(pm1 + t * (pm2 - pm1))


def _normalized_cost(p_miss, p_fa, p_eff: float):
    return (p_eff * p_miss + (1.0 - p_eff) * p_fa) / min(p_eff, 1.0 - p_eff)


def actual_dcf(scores: ScoreSet, p_eff: float) -> float:
    """Normalized detection cost at the Bayes threshold -logit(p_eff).

    Assumes calibrated LLR scores; may exceed 1 for miscalibrated systems
    and is deliberately not clipped.
    """
    threshold = -effective_prior_logit(p_eff)
    tar, non = scores.split()
    p_miss = np.count_nonzero(tar < threshold) / tar.size
    p_fa = np.count_nonzero(non >= threshold) / non.size
    return float(_normalized_cost(p_miss, p_fa, p_eff))


def min_dcf(scores: ScoreSet, p_eff: float) -> float:
    """Minimum normalized detection cost over all thresholds."""
    curve = det_points(scores)
    costs = _normalized_cost(curve.p_miss, curve.p_fa, p_eff)
    return float(costs.min())


def c_primary(
    scores: ScoreSet, params: CostParams, mode: Literal["actual", "min"] = "min"
) -> float:
    """Arithmetic mean of the normalized cost over the effective priors."""
    if mode == "actual":
        fn = actual_dcf
    elif mode == "min":
        fn = min_dcf
    else:
        raise ParameterError(f"mode must be 'actual' or 'min', got '{mode}'")
    values = [fn(scores, p) for p in params.effective_priors]
    return float(sum(values) / len(values))
