import numpy as np
import pytest

from pldakit import EmbeddingArchive, GaussianPLDA, LabeledEmbeddings, ScoreSet


def random_spd(rng, d, eig_lo=0.2, eig_hi=2.0):
    """Random symmetric positive definite matrix with bounded spectrum."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    m = (q * rng.uniform(eig_lo, eig_hi, size=d)) @ q.T
    return 0.5 * (m + m.T)


def random_model(rng, d):
    return GaussianPLDA(
        mu=rng.normal(0.0, 1.0, size=d),
        phi_b=random_spd(rng, d, 0.3, 1.5),
        phi_w=random_spd(rng, d, 0.2, 1.0),
    )


def make_scoreset(tar, non):
    """Labeled ScoreSet from target and nontarget score arrays."""
    tar = np.asarray(tar, dtype=np.float64)
    non = np.asarray(non, dtype=np.float64)
    scores = np.concatenate([tar, non])
    labels = np.concatenate([np.ones(tar.size, bool), np.zeros(non.size, bool)])
    trials = tuple((f"e{i}", f"t{i}") for i in range(scores.size))
    return ScoreSet(trials=trials, scores=scores, labels=labels)


def llr_components(rng, n_each, k, dim=1):
    """k independent LLR-component systems over one shared trial list.

    Each component is the true LLR of an independent latent factor, so
    sums of components are themselves well-calibrated LLRs.
    """
    from pldakit import GaussianPLDA, PairScorer

    model = GaussianPLDA(np.zeros(dim), np.eye(dim), np.eye(dim))
    scorer = PairScorer(model)
    comps = []
    for _ in range(k):
        y = rng.standard_normal((n_each, dim))
        tar = scorer.score_rows(
            y + rng.standard_normal((n_each, dim)),
            y + rng.standard_normal((n_each, dim)),
        )
        non = scorer.score_rows(
            rng.standard_normal((n_each, dim)) + rng.standard_normal((n_each, dim)),
            rng.standard_normal((n_each, dim)) + rng.standard_normal((n_each, dim)),
        )
        comps.append(np.concatenate([tar, non]))
    labels = np.concatenate([np.ones(n_each, bool), np.zeros(n_each, bool)])
    trials = tuple((f"e{i}", f"t{i}") for i in range(2 * n_each))
    return comps, trials, labels


def labeled_from_arrays(x, speakers):
    keys = [f"u{i:05d}" for i in range(len(speakers))]
    return LabeledEmbeddings(
        EmbeddingArchive(keys, np.asarray(x, dtype=np.float64)),
        {k: s for k, s in zip(keys, speakers)},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20180624)
