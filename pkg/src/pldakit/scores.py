"""Trial-aligned score containers."""

from dataclasses import dataclass, replace

import numpy as np

from .errors import LabelError, ParameterError, SingleClassError

Trial = tuple[str, str]


@dataclass(frozen=True)
class ScoreSet:
    """Scores for a list of (enroll_id, test_id) trials.

    `labels` is a boolean array (True = target) or None for unlabeled
    sets, which can be scored and transformed but not evaluated or used
    for training. `fused` marks the output of a fusion so it can be
    refused as a fusion input again.
    """

    trials: tuple[Trial, ...]
    scores: np.ndarray
    labels: np.ndarray | None = None
    fused: bool = False

    def __post_init__(self):
        trials = tuple((str(e), str(t)) for e, t in self.trials)
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1:
            raise ParameterError("scores must be a 1-D array")
        if len(trials) != scores.shape[0]:
            raise ParameterError(
                f"{len(trials)} trials but {scores.shape[0]} scores"
            )
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=bool)
            if labels.shape != scores.shape:
                raise ParameterError("labels and scores must have equal length")
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.scores.shape[0]

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise LabelError("score set has no target/nontarget labels")
        return self.labels

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """(target scores, nontarget scores); requires both classes."""
        labels = self.require_labels()
        tar = self.scores[labels]
        non = self.scores[~labels]
        if tar.size == 0 or non.size == 0:
            raise SingleClassError(
                f"need both classes, got {tar.size} targets / {non.size} nontargets"
            )
        return tar, non

    def with_scores(self, scores: np.ndarray, fused: bool | None = None) -> "ScoreSet":
        return replace(
            self,
            scores=np.asarray(scores, dtype=np.float64),
            fused=self.fused if fused is None else fused,
        )


def first_trial_mismatch(a: ScoreSet, b: ScoreSet) -> Trial | None:
    """First trial where the two sets disagree, or None if aligned."""
    if a.trials == b.trials:
        return None
    for ta, tb in zip(a.trials, b.trials):
        if ta != tb:
            return tb
    longer = a.trials if len(a.trials) > len(b.trials) else b.trials
    return longer[min(len(a.trials), len(b.trials))]
