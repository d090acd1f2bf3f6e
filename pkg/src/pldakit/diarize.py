"""Multi-speaker test handling: cutting, affinity, clustering, scoring.

A multi-speaker recording arrives as a sequence of short cut embeddings.
Pairwise LLR scores between cuts form an affinity matrix; average-linkage
agglomerative clustering with a stopping threshold groups the cuts into
speaker clusters; the enrollment is scored against each cluster mean and
the maximum taken. Whole-segment scoring against the mean of all cuts is
kept as the baseline.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, ShapeError
from .plda import GaussianPLDA, PairScorer

DEFAULT_CUT_LENGTH = 1.0
MIN_CUT_SECONDS = 0.5
DEFAULT_STOP_THRESHOLD = 0.0


@dataclass(frozen=True)
class CutPlan:
    """Contiguous, non-overlapping cut boundaries covering a recording."""

    recording_id: str
    cuts: tuple[tuple[float, float], ...]

    def __post_init__(self):
        cuts = tuple((float(a), float(b)) for a, b in self.cuts)
        if not cuts:
            raise ParameterError("cut plan must contain at least one cut")
        prev_end = 0.0
        for i, (a, b) in enumerate(cuts):
            if abs(a - prev_end) > 1e-9:
                raise ParameterError(f"cut {i} starts at {a}, expected {prev_end}")
            if b - a < MIN_CUT_SECONDS - 1e-9:
                raise ParameterError(f"cut {i} shorter than {MIN_CUT_SECONDS} s")
            prev_end = b
        object.__setattr__(self, "cuts", cuts)

    @property
    def duration(self) -> float:
        return self.cuts[-1][1]

    def __len__(self) -> int:
        return len(self.cuts)


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric pairwise score matrix; the diagonal is unused."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError("affinity matrix must be square")
        if not np.all(np.isfinite(v)):
            raise ShapeError("affinity matrix has non-finite entries")
        skew = np.abs(v - v.T).max() if v.size else 0.0
        if skew > 1e-9 * max(1.0, np.abs(v).max()):
            raise ShapeError(f"affinity matrix is not symmetric (skew {skew:.3e})")
        v = 0.5 * (v + v.T)
        np.fill_diagonal(v, 0.0)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Clustering:
    """Assignment of cut indices to contiguous cluster ids 0..k-1."""

    assignment: tuple[int, ...]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        seen = set(self.assignment)
        if seen != set(range(self.k)):
            raise ParameterError("cluster ids must be contiguous 0..k-1")

    def members(self, cluster: int) -> list[int]:
        return [i for i, c in enumerate(self.assignment) if c == cluster]


class MultiSpeakerScore(NamedTuple):
    score: float
    n_clusters: int


def uniform_cut_plan(
    duration: float, cut_length: float = DEFAULT_CUT_LENGTH, recording_id: str = ""
) -> CutPlan:
    """Uniform cuts of `cut_length` seconds covering [0, duration].

    A trailing remainder of at least 0.5 s becomes its own cut; a shorter
    remainder is merged into the last full cut.
    """
    if duration < MIN_CUT_SECONDS:
        raise ParameterError(f"duration {duration} s is shorter than {MIN_CUT_SECONDS} s")
    if cut_length < MIN_CUT_SECONDS:
        raise ParameterError(f"cut_length must be at least {MIN_CUT_SECONDS} s")
    n_full = int(math.floor(duration / cut_length + 1e-9))
    remainder = duration - n_full * cut_length
    edges = [i * cut_length for i in range(n_full + 1)]
    if remainder >= MIN_CUT_SECONDS - 1e-9 and remainder > 1e-9:
        edges.append(duration)
    else:
        edges[-1] = duration
    cuts = tuple((edges[i], edges[i + 1]) for i in range(len(edges) - 1))
    return CutPlan(recording_id=recording_id, cuts=cuts)


def affinity_matrix(model: GaussianPLDA, cut_embeddings: np.ndarray) -> AffinityMatrix:
    """Pairwise LLR scores between all cuts (diagonal zeroed)."""
    x = np.atleast_2d(np.asarray(cut_embeddings, dtype=np.float64))
    if x.shape[0] < 1:
        raise ParameterError("need at least one cut")
    scorer = PairScorer(model)
    values = scorer.score_matrix(x, x)
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 0.0)
    return AffinityMatrix(values)


def ahc_cluster(affinity: AffinityMatrix, stop_threshold: float = DEFAULT_STOP_THRESHOLD) -> Clustering:
    """Average-linkage agglomeration, merging while the best average
    pairwise affinity is at least `stop_threshold`.

    Clusters are identified by their smallest member index; ties between
    equally good merges break toward the smallest (id, id) pair, making
    the result deterministic. Final ids are renumbered 0..k-1 in order of
    first appearance along the cut sequence.
    """
    n = affinity.n
    w = affinity.values
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    # pair_sum[(a, b)] = total affinity between members of a and b, a < b
    pair_sum: dict[tuple[int, int], float] = {
        (i, j): float(w[i, j]) for i in range(n) for j in range(i + 1, n)
    }

    while len(members) > 1:
        best_pair = (n, n)
        best_avg = -math.inf
        for (a, b), s in pair_sum.items():
            avg = s / (len(members[a]) * len(members[b]))
            if avg > best_avg or (avg == best_avg and (a, b) < best_pair):
                best_avg = avg
                best_pair = (a, b)
        if best_avg < stop_threshold:
            break
        a, b = best_pair
        for c in members:
            if c == a or c == b:
                continue
            key_cb = (min(c, b), max(c, b))
            key_ca = (min(c, a), max(c, a))
            pair_sum[key_ca] += pair_sum.pop(key_cb)
        pair_sum.pop((a, b))
        members[a].extend(members[b])
        del members[b]

    order = sorted(members, key=lambda cid: min(members[cid]))
    assignment = [0] * n
    for new_id, cid in enumerate(order):
        for i in members[cid]:
            assignment[i] = new_id
    return Clustering(assignment=tuple(assignment), k=len(order))


def cluster_means(cut_embeddings: np.ndarray, clustering: Clustering) -> np.ndarray:
    """Arithmetic mean of member cuts per cluster, ordered by cluster id."""
    x = np.atleast_2d(np.asarray(cut_embeddings, dtype=np.float64))
    if x.shape[0] != len(clustering.assignment):
        raise ShapeError(
            f"{x.shape[0]} cuts but assignment covers {len(clustering.assignment)}"
        )
    out = np.empty((clustering.k, x.shape[1]))
    assign = np.asarray(clustering.assignment)
    for c in range(clustering.k):
        out[c] = x[assign == c].mean(axis=0)
    return out


def score_multispeaker_trial(
    model: GaussianPLDA,
    enroll: np.ndarray,
    cut_embeddings: np.ndarray,
    stop_threshold: float = DEFAULT_STOP_THRESHOLD,
) -> MultiSpeakerScore:
    """Cluster the cuts, score the enrollment against every cluster mean,
    and return the maximum score together with the cluster count."""
    aff = affinity_matrix(model, cut_embeddings)
    clustering = ahc_cluster(aff, stop_threshold)
    means = cluster_means(cut_embeddings, clustering)
    scorer = PairScorer(model)
    enroll_rows = np.repeat(np.atleast_2d(np.asarray(enroll, dtype=np.float64)), clustering.k, axis=0)
    scores = scorer.score_rows(enroll_rows, means)
    return MultiSpeakerScore(score=float(scores.max()), n_clusters=clustering.k)


def score_whole_segment(
    model: GaussianPLDA, enroll: np.ndarray, cut_embeddings: np.ndarray
) -> float:
    """Score the enrollment against the mean of all cuts."""
    x = np.atleast_2d(np.asarray(cut_embeddings, dtype=np.float64))
    if x.shape[0] < 1:
        raise ParameterError("need at least one cut")
    scorer = PairScorer(model)
    return scorer.score(np.asarray(enroll, dtype=np.float64), x.mean(axis=0))
