import math

import numpy as np
import pytest

from pldakit import (
    AffinityMatrix,
    GaussianPLDA,
    PairScorer,
    affinity_matrix,
    ahc_cluster,
    cluster_means,
    plda_llr_score,
    sample_embeddings,
    score_multispeaker_trial,
    score_whole_segment,
    uniform_cut_plan,
)
from pldakit.errors import ParameterError

from conftest import random_model


def two_speaker_cuts(rng, cuts_each=10, d=6):
    """Well-separated synthetic cuts; returns (model, cuts, true labels)."""
    model = GaussianPLDA(np.zeros(d), 4.0 * np.eye(d), 0.25 * np.eye(d))
    data = sample_embeddings(model, 2, cuts_each, seed=314)
    labels = [data.speaker_of[k] for k in data.archive.keys]
    return model, data.archive.matrix, labels


class TestUniformCutPlan:
    def test_remainder_becomes_own_cut(self):
        plan = uniform_cut_plan(3.5, 1.0)
        assert plan.cuts == ((0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 3.5))

    def test_short_remainder_merged(self):
        plan = uniform_cut_plan(3.2, 1.0)
        assert plan.cuts == ((0.0, 1.0), (1.0, 2.0), (2.0, 3.2))

    def test_single_cut(self):
        assert uniform_cut_plan(1.0, 1.0).cuts == ((0.0, 1.0),)

    def test_exact_multiple(self):
        assert uniform_cut_plan(2.0, 1.0).cuts == ((0.0, 1.0), (1.0, 2.0))

    def test_shorter_than_cut_length(self):
        assert uniform_cut_plan(0.7, 1.0).cuts == ((0.0, 0.7),)

    def test_too_short_rejected(self):
        with pytest.raises(ParameterError):
            uniform_cut_plan(0.4, 1.0)

    def test_coverage_and_min_length(self, rng):
        for _ in range(100):
            duration = float(rng.uniform(0.5, 60.0))
            cut_length = float(rng.uniform(0.5, 3.0))
            plan = uniform_cut_plan(duration, cut_length)
            assert plan.cuts[0][0] == 0.0
            assert abs(plan.duration - duration) < 1e-9
            for start, end in plan.cuts:
                assert end - start >= 0.5 - 1e-9
            for (_, e1), (s2, _) in zip(plan.cuts, plan.cuts[1:]):
                assert e1 == s2


class TestAffinityMatrix:
    def test_zero_between_model(self, rng):
        d = 3
        model = GaussianPLDA(np.zeros(d), np.zeros((d, d)), np.eye(d))
        aff = affinity_matrix(model, rng.normal(size=(5, d)))
        np.testing.assert_allclose(aff.values, np.zeros((5, 5)), atol=1e-12)

    def test_single_cut(self, rng):
        model = random_model(rng, 3)
        aff = affinity_matrix(model, rng.normal(size=(1, 3)))
        assert aff.n == 1
        assert aff.values[0, 0] == 0.0

    def test_matches_pairwise_scoring(self, rng):
        model = random_model(rng, 4)
        x = rng.normal(size=(8, 4))
        aff = affinity_matrix(model, x)
        for i in range(8):
            for j in range(8):
                if i == j:
                    assert aff.values[i, j] == 0.0
                else:
                    assert abs(aff.values[i, j] - plda_llr_score(model, x[i], x[j])) < 1e-12

    def test_symmetric(self, rng):
        model = random_model(rng, 4)
        aff = affinity_matrix(model, rng.normal(size=(10, 4)))
        np.testing.assert_allclose(aff.values, aff.values.T, atol=1e-12)


class TestAhcCluster:
    def test_high_threshold_gives_singletons(self, rng):
        values = rng.normal(size=(6, 6))
        aff = AffinityMatrix(0.5 * (values + values.T))
        clustering = ahc_cluster(aff, stop_threshold=aff.values.max() + 1.0)
        assert clustering.k == 6

    def test_low_threshold_gives_one_cluster(self, rng):
        values = rng.normal(size=(6, 6))
        aff = AffinityMatrix(0.5 * (values + values.T))
        off_diag = aff.values[~np.eye(6, dtype=bool)]
        clustering = ahc_cluster(aff, stop_threshold=off_diag.min() - 1.0)
        assert clustering.k == 1

    def test_two_well_separated_speakers(self, rng):
        model, cuts, labels = two_speaker_cuts(rng)
        clustering = ahc_cluster(affinity_matrix(model, cuts), stop_threshold=0.0)
        assert clustering.k == 2
        # purity: each cluster contains one speaker only
        for c in range(2):
            members = {labels[i] for i in clustering.members(c)}
            assert len(members) == 1

    def test_offset_invariance(self, rng):
        values = rng.normal(size=(7, 7))
        aff = AffinityMatrix(0.5 * (values + values.T))
        shifted = AffinityMatrix(aff.values + 3.7 - 3.7 * np.eye(7))
        a = ahc_cluster(aff, stop_threshold=0.5)
        b = ahc_cluster(shifted, stop_threshold=0.5 + 3.7)
        assert a.assignment == b.assignment

    def test_cluster_count_monotone_in_threshold(self, rng):
        values = rng.normal(size=(9, 9))
        aff = AffinityMatrix(0.5 * (values + values.T))
        thresholds = np.linspace(3.0, -3.0, 13)
        ks = [ahc_cluster(aff, t).k for t in thresholds]
        assert all(a >= b for a, b in zip(ks, ks[1:]))

    def test_deterministic(self, rng):
        values = rng.normal(size=(8, 8))
        aff = AffinityMatrix(0.5 * (values + values.T))
        a = ahc_cluster(aff, 0.1)
        b = ahc_cluster(AffinityMatrix(aff.values.copy()), 0.1)
        assert a.assignment == b.assignment and a.k == b.k

    def test_tie_break_is_total(self):
        # all-equal affinities: merges must proceed deterministically and
        # collapse to one cluster at threshold 0
        aff = AffinityMatrix(np.ones((4, 4)) - np.eye(4))
        clustering = ahc_cluster(aff, 0.0)
        assert clustering.k == 1

    def test_ids_contiguous_and_ordered_by_first_cut(self, rng):
        model, cuts, _ = two_speaker_cuts(rng)
        clustering = ahc_cluster(affinity_matrix(model, cuts), 0.0)
        assert clustering.assignment[0] == 0
        seen = set()
        for c in clustering.assignment:
            if c not in seen:
                assert c == len(seen)
                seen.add(c)


def reference_ahc(values, threshold):
    """Brute-force average linkage recomputed from scratch each merge."""
    n = values.shape[0]
    clusters = [[i] for i in range(n)]
    while len(clusters) > 1:
        candidates = []
        for i in range(len(clusters)):
            for j in range(len(clusters)):
                if i == j:
                    continue
                a, b = clusters[i], clusters[j]
                ida, idb = min(a), min(b)
                if ida > idb:
                    continue
                total = sum(values[p, q] for p in a for q in b)
                candidates.append((total / (len(a) * len(b)), -ida, -idb, i, j))
        avg, neg_a, neg_b, i, j = max(candidates)
        if avg < threshold:
            break
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    clusters.sort(key=min)
    assignment = [0] * n
    for cid, members in enumerate(clusters):
        for m in members:
            assignment[m] = cid
    return tuple(assignment), len(clusters)


class TestAhcDifferential:
    def test_matches_brute_force_with_ties(self, rng):
        # integer affinities make every linkage average exactly
        # representable, so tie-breaking is exercised for real
        for trial in range(30):
            n = int(rng.integers(2, 12))
            raw = rng.integers(-3, 4, size=(n, n)).astype(float)
            aff = AffinityMatrix(raw + raw.T)
            threshold = float(rng.integers(-3, 4))
            got = ahc_cluster(aff, threshold)
            want_assign, want_k = reference_ahc(aff.values, threshold)
            assert (got.assignment, got.k) == (want_assign, want_k), (
                f"trial {trial}: n={n} threshold={threshold}"
            )


class TestClusterMeans:
    def test_singletons_are_cuts(self, rng):
        x = rng.normal(size=(4, 3))
        from pldakit import Clustering

        clustering = Clustering(assignment=(0, 1, 2, 3), k=4)
        np.testing.assert_array_equal(cluster_means(x, clustering), x)

    def test_midpoint(self):
        from pldakit import Clustering

        x = np.array([[0.0, 2.0], [2.0, 0.0]])
        clustering = Clustering(assignment=(0, 0), k=1)
        np.testing.assert_allclose(cluster_means(x, clustering), [[1.0, 1.0]])

    def test_permutation_invariant(self, rng):
        from pldakit import Clustering

        x = rng.normal(size=(6, 2))
        assign = (0, 1, 0, 1, 0, 1)
        base = cluster_means(x, Clustering(assignment=assign, k=2))
        perm = [4, 2, 0, 5, 3, 1]
        permuted = cluster_means(
            x[perm], Clustering(assignment=tuple(assign[i] for i in perm), k=2)
        )
        np.testing.assert_allclose(np.sort(base, axis=0), np.sort(permuted, axis=0), atol=1e-12)


class TestMultiSpeakerScoring:
    def test_single_cluster_equals_mean_score(self, rng):
        model, cuts, _ = two_speaker_cuts(rng)
        enroll = rng.normal(size=model.dim)
        result = score_multispeaker_trial(model, enroll, cuts, stop_threshold=-math.inf)
        assert result.n_clusters == 1
        assert abs(result.score - score_whole_segment(model, enroll, cuts)) < 1e-12

    def test_selects_target_cluster(self, rng):
        model, cuts, labels = two_speaker_cuts(rng)
        # enroll as speaker of cut 0: a fresh sample near that speaker
        target_cuts = cuts[[i for i, s in enumerate(labels) if s == labels[0]]]
        enroll = target_cuts.mean(axis=0)
        result = score_multispeaker_trial(model, enroll, cuts, 0.0)
        assert result.n_clusters == 2
        clustering = ahc_cluster(affinity_matrix(model, cuts), 0.0)
        means = cluster_means(cuts, clustering)
        scorer = PairScorer(model)
        per_cluster = [scorer.score(enroll, m) for m in means]
        target_cluster = clustering.assignment[0]
        assert result.score == max(per_cluster)
        assert np.argmax(per_cluster) == target_cluster

    def test_max_dominates_cluster_scores(self, rng):
        model, cuts, _ = two_speaker_cuts(rng)
        enroll = rng.normal(size=model.dim)
        result = score_multispeaker_trial(model, enroll, cuts, 0.0)
        clustering = ahc_cluster(affinity_matrix(model, cuts), 0.0)
        scorer = PairScorer(model)
        for mean in cluster_means(cuts, clustering):
            assert result.score >= scorer.score(enroll, mean) - 1e-12

    def test_infinite_threshold_is_per_cut_max(self, rng):
        model, cuts, _ = two_speaker_cuts(rng)
        enroll = rng.normal(size=model.dim)
        result = score_multispeaker_trial(model, enroll, cuts, stop_threshold=math.inf)
        assert result.n_clusters == cuts.shape[0]
        scorer = PairScorer(model)
        per_cut = [scorer.score(enroll, c) for c in cuts]
        assert abs(result.score - max(per_cut)) < 1e-12

    def test_whole_segment_single_cut(self, rng):
        model = random_model(rng, 3)
        enroll = rng.normal(size=3)
        cut = rng.normal(size=(1, 3))
        assert abs(
            score_whole_segment(model, enroll, cut) - plda_llr_score(model, enroll, cut[0])
        ) < 1e-12
