"""Synthetic experiment generators.

Two closed-loop desk-scale experiments make every pipeline stage
verifiable without any real corpus:

* a domain-shift experiment: labeled out-of-domain training data from a
  known ground-truth model, plus in-domain data produced by pushing
  fresh samples through a fixed random invertible linear map and mean
  offset (the family of shifts correlation alignment can undo),
* a multi-speaker experiment: recordings built from interleaved cuts of
  several speakers, with enrollment embeddings and target/nontarget
  trials against whole recordings.

Both write plain-text archives plus a JSON manifest recording the shift
and the ground-truth model, and are deterministic given the seed.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from ._linalg import psd_sqrt
from .diarize import uniform_cut_plan
from .embeddings import EmbeddingArchive, LabeledEmbeddings
from .errors import ConfigError, ParseError
from .formats import (
    write_cut_plans,
    write_embedding_archive,
    write_model,
    write_trials,
    write_utt2spk,
)
from .plda import GaussianPLDA, sample_embeddings

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class DomainShiftSpec:
    """Shape of the out-of-domain -> in-domain map.

    rotation_scale interpolates between the identity (0) and a full
    random rotation (1); scale_range bounds the random per-axis scaling;
    offset_magnitude is the length of the mean offset.
    """

    rotation_scale: float = 0.3
    scale_range: tuple[float, float] = (1.0, 2.5)
    offset_magnitude: float = 10.0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi):
            raise ConfigError(f"scale_range must be positive and ordered, got {self.scale_range}")
        if self.rotation_scale < 0.0 or self.offset_magnitude < 0.0:
            raise ConfigError("rotation_scale and offset_magnitude must be >= 0")

    @property
    def is_identity(self) -> bool:
        return (
            self.rotation_scale == 0.0
            and self.scale_range == (1.0, 1.0)
            and self.offset_magnitude == 0.0
        )


@dataclass(frozen=True)
class MultiSpeakerSpec:
    speakers_per_recording: int = 2
    cuts_per_speaker: int = 10

    def __post_init__(self):
        if self.speakers_per_recording < 1 or self.cuts_per_speaker < 1:
            raise ConfigError("multi-speaker counts must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 50
    n_speakers_train: int = 300
    n_speakers_dev: int = 60
    n_speakers_eval: int = 60
    per_speaker: int = 8
    n_adapt: int = 2000
    domain_shift: DomainShiftSpec = field(default_factory=DomainShiftSpec)
    seed: int = 2018
    multi_speaker: MultiSpeakerSpec | None = None

    def __post_init__(self):
        for name in ("dim", "n_speakers_train", "n_speakers_dev", "n_speakers_eval", "per_speaker", "n_adapt"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.per_speaker < 2:
            raise ConfigError("per_speaker must be >= 2 (one enrollment plus tests)")


def _random_ground_truth(
    dim: int,
    rng: np.random.Generator,
    between_eigs: tuple[float, float] = (0.25, 0.9),
    within_eigs: tuple[float, float] = (0.5, 1.5),
) -> GaussianPLDA:
    """A well-conditioned random model.

    Eigenvalue ranges keep per-direction speaker information moderate so
    desk-scale trial sets produce error rates away from 0 and 50%.
    """

    def spd(eig_lo, eig_hi):
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eig = rng.uniform(eig_lo, eig_hi, size=dim)
        m = (q * eig) @ q.T
        return 0.5 * (m + m.T)

    mu = rng.normal(0.0, 1.0, size=dim)
    return GaussianPLDA(mu=mu, phi_b=spd(*between_eigs), phi_w=spd(*within_eigs))


def _shift_map(shift: DomainShiftSpec, dim: int, rng: np.random.Generator):
    """Fixed invertible map L and offset m implementing the domain shift."""
    skew = rng.standard_normal((dim, dim))
    skew = 0.5 * (skew - skew.T)
    # normalize so rotation_scale is (up to) the largest rotation angle
    skew *= 1.0 / max(1.0, np.abs(np.linalg.eigvalsh(1j * skew).real).max())
    rotation = scipy.linalg.expm(shift.rotation_scale * skew)
    scales = rng.uniform(shift.scale_range[0], shift.scale_range[1], size=dim)
    l_map = rotation @ np.diag(scales)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    offset = shift.offset_magnitude * direction
    return l_map, offset


def _verification_split(data: LabeledEmbeddings):
    """First embedding of each speaker enrolls it; the rest are tests."""
    arch = data.archive
    enroll_items, test_items, test_speakers = [], [], []
    seen: set[str] = set()
    for key, row in zip(arch.keys, arch.matrix):
        spk = data.speaker_of[key]
        if spk not in seen:
            seen.add(spk)
            enroll_items.append((spk, row))
        else:
            test_items.append((key, row))
            test_speakers.append(spk)
    enroll = EmbeddingArchive.from_items(enroll_items)
    tests = EmbeddingArchive.from_items(test_items)
    trials = []
    labels = []
    for spk, _ in enroll_items:
        for (key, _), tspk in zip(test_items, test_speakers):
            trials.append((spk, key))
            labels.append(spk == tspk)
    return enroll, tests, tuple(trials), np.array(labels, dtype=bool)


def synth_domain_shift_experiment(config: ExperimentConfig, out_dir) -> dict:
    """Write the domain-shift dataset; returns the manifest dict.

    Out-of-domain: labeled training archive straight from the ground
    truth. In-domain: fresh samples pushed through (L, m) - an unlabeled
    adaptation archive and labeled dev/eval trial sets (all-pairs
    enroll x test, labeled by speaker identity).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    truth = _random_ground_truth(config.dim, rng)
    l_map, offset = _shift_map(config.domain_shift, config.dim, rng)

    seeds = rng.integers(0, 2**63 - 1, size=4)
    train = sample_embeddings(truth, config.n_speakers_train, config.per_speaker, int(seeds[0]))

    def shifted(prefix: str, n_speakers: int, per: int, seed: int) -> LabeledEmbeddings:
        raw = sample_embeddings(truth, n_speakers, per, seed)
        arch = raw.archive.transformed(lambda x: x @ l_map.T + offset)
        renamed_keys = [f"{prefix}-{k}" for k in arch.keys]
        speaker_of = {
            f"{prefix}-{k}": f"{prefix}-{raw.speaker_of[k]}" for k in arch.keys
        }
        return LabeledEmbeddings(EmbeddingArchive(renamed_keys, arch.matrix), speaker_of)

    adapt_pool = shifted("adapt", max(2, config.n_adapt // config.per_speaker), config.per_speaker, int(seeds[1]))
    dev = shifted("dev", config.n_speakers_dev, config.per_speaker, int(seeds[2]))
    evl = shifted("eval", config.n_speakers_eval, config.per_speaker, int(seeds[3]))

    files = {
        "true_model": "true_model.txt",
        "train_embeddings": "train.emb",
        "train_utt2spk": "train.utt2spk",
        "adapt_embeddings": "adapt.emb",
    }
    write_model(truth, out / files["true_model"])
    write_embedding_archive(train.archive, out / files["train_embeddings"])
    write_utt2spk(train.speaker_of, out / files["train_utt2spk"])
    write_embedding_archive(adapt_pool.archive, out / files["adapt_embeddings"])

    for name, data in (("dev", dev), ("eval", evl)):
        enroll, tests, trials, labels = _verification_split(data)
        files[f"{name}_enroll"] = f"{name}_enroll.emb"
        files[f"{name}_test"] = f"{name}_test.emb"
        files[f"{name}_trials"] = f"{name}_trials.txt"
        write_embedding_archive(enroll, out / files[f"{name}_enroll"])
        write_embedding_archive(tests, out / files[f"{name}_test"])
        write_trials(trials, out / files[f"{name}_trials"], labels)

    manifest = {
        "format": 1,
        "experiment": "domain-shift",
        "config": _config_dict(config),
        "files": files,
        "shift": {"linear_map": l_map.tolist(), "mean_offset": offset.tolist()},
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def synth_multispeaker_experiment(config: ExperimentConfig, out_dir) -> dict:
    """Write the multi-speaker dataset; returns the manifest dict.

    Each recording interleaves cuts from `speakers_per_recording`
    distinct speakers drawn from a fresh pool; trials pair every member
    speaker (targets) and as many non-members (nontargets) with the
    recording. Cut keys are `recording#index`.
    """
    if config.multi_speaker is None:
        raise ConfigError("multi_speaker settings are required for this experiment")
    ms = config.multi_speaker
    if ms.speakers_per_recording > config.n_speakers_eval:
        raise ConfigError(
            f"speakers_per_recording {ms.speakers_per_recording} exceeds the "
            f"eval speaker pool {config.n_speakers_eval}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    # per-cut embeddings need clearly separated speakers for clustering
    # to be meaningful, so this truth is more discriminative than the
    # domain-shift one
    truth = _random_ground_truth(config.dim, rng, between_eigs=(0.6, 1.5))

    seeds = rng.integers(0, 2**63 - 1, size=2)
    train = sample_embeddings(truth, config.n_speakers_train, config.per_speaker, int(seeds[0]))

    n_pool = config.n_speakers_eval
    d = config.dim
    pool_rng = np.random.default_rng(int(seeds[1]))
    sqrt_b = psd_sqrt(truth.phi_b)
    sqrt_w = psd_sqrt(truth.phi_w)
    speaker_names = [f"ms{i:04d}" for i in range(n_pool)]
    speaker_means = truth.mu + pool_rng.standard_normal((n_pool, d)) @ sqrt_b.T
    enroll_rows = speaker_means + pool_rng.standard_normal((n_pool, d)) @ sqrt_w.T
    enroll = EmbeddingArchive(speaker_names, enroll_rows)

    n_recordings = config.n_speakers_eval
    cut_items: list[tuple[str, np.ndarray]] = []
    cut_truth: dict[str, str] = {}
    plans = []
    rec_members: list[list[int]] = []
    trials: list[tuple[str, str]] = []
    labels: list[bool] = []
    n_cuts = ms.speakers_per_recording * ms.cuts_per_speaker
    for r in range(n_recordings):
        rec = f"rec{r:04d}"
        members = sorted(pool_rng.choice(n_pool, size=ms.speakers_per_recording, replace=False).tolist())
        rec_members.append(members)
        # round-robin interleaving over the cut plan
        speaker_seq = [members[i % len(members)] for i in range(n_cuts)]
        noise = pool_rng.standard_normal((n_cuts, d)) @ sqrt_w.T
        for i, spk in enumerate(speaker_seq):
            key = f"{rec}#{i}"
            cut_items.append((key, speaker_means[spk] + noise[i]))
            cut_truth[key] = speaker_names[spk]
        plans.append(uniform_cut_plan(float(n_cuts), 1.0, recording_id=rec))
        non_members = [i for i in range(n_pool) if i not in members]
        decoys = pool_rng.choice(len(non_members), size=min(len(members), len(non_members)), replace=False)
        for spk in members:
            trials.append((speaker_names[spk], rec))
            labels.append(True)
        for j in decoys.tolist():
            trials.append((speaker_names[non_members[j]], rec))
            labels.append(False)

    files = {
        "true_model": "true_model.txt",
        "train_embeddings": "train.emb",
        "train_utt2spk": "train.utt2spk",
        "enroll_embeddings": "enroll.emb",
        "cut_embeddings": "cuts.emb",
        "cut_plan": "cutplan.txt",
        "cut_truth": "cut_truth.txt",
        "trials": "trials.txt",
    }
    write_model(truth, out / files["true_model"])
    write_embedding_archive(train.archive, out / files["train_embeddings"])
    write_utt2spk(train.speaker_of, out / files["train_utt2spk"])
    write_embedding_archive(enroll, out / files["enroll_embeddings"])
    write_embedding_archive(EmbeddingArchive.from_items(cut_items), out / files["cut_embeddings"])
    write_cut_plans(plans, out / files["cut_plan"])
    write_utt2spk(cut_truth, out / files["cut_truth"])
    write_trials(tuple(trials), out / files["trials"], np.array(labels, dtype=bool))

    manifest = {
        "format": 1,
        "experiment": "multi-speaker",
        "config": _config_dict(config),
        "files": files,
        "recordings": {
            f"rec{r:04d}": [speaker_names[i] for i in rec_members[r]] for r in range(n_recordings)
        },
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _config_dict(config: ExperimentConfig) -> dict:
    out = {
        "dim": config.dim,
        "n_speakers_train": config.n_speakers_train,
        "n_speakers_dev": config.n_speakers_dev,
        "n_speakers_eval": config.n_speakers_eval,
        "per_speaker": config.per_speaker,
        "n_adapt": config.n_adapt,
        "seed": config.seed,
        "domain_shift": {
            "rotation_scale": config.domain_shift.rotation_scale,
            "scale_min": config.domain_shift.scale_range[0],
            "scale_max": config.domain_shift.scale_range[1],
            "offset_magnitude": config.domain_shift.offset_magnitude,
        },
    }
    if config.multi_speaker is not None:
        out["multi_speaker"] = {
            "speakers_per_recording": config.multi_speaker.speakers_per_recording,
            "cuts_per_speaker": config.multi_speaker.cuts_per_speaker,
        }
    return out


_CONFIG_KEYS = {
    "experiment", "dim", "train_speakers", "dev_speakers", "eval_speakers",
    "per_speaker", "adapt_size", "rotation", "scale_min", "scale_max",
    "offset", "seed", "speakers_per_recording", "cuts_per_speaker",
}


def parse_experiment_config(path) -> tuple[str, ExperimentConfig]:
    """Read a `key = value` config file; returns (experiment kind, config).

    Unknown keys are rejected; omitted keys fall back to defaults.
    Lines starting with '#' are comments.
    """
    values: dict[str, str] = {}
    text = Path(path).read_text()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(path, line_no, "expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ParseError(path, line_no, f"unknown config key '{key}'")
        if key in values:
            raise ParseError(path, line_no, f"duplicate config key '{key}'")
        if not value:
            raise ParseError(path, line_no, f"empty value for '{key}'")
        values[key] = value

    def get_int(key, default):
        return int(values.get(key, default))

    def get_float(key, default):
        return float(values.get(key, default))

    kind = values.get("experiment", "domain-shift")
    if kind not in ("domain-shift", "multi-speaker"):
        raise ConfigError(f"experiment must be 'domain-shift' or 'multi-speaker', got '{kind}'")
    shift = DomainShiftSpec(
        rotation_scale=get_float("rotation", DomainShiftSpec.rotation_scale),
        scale_range=(
            get_float("scale_min", DomainShiftSpec.scale_range[0]),
            get_float("scale_max", DomainShiftSpec.scale_range[1]),
        ),
        offset_magnitude=get_float("offset", DomainShiftSpec.offset_magnitude),
    )
    multi = None
    if kind == "multi-speaker" or "speakers_per_recording" in values or "cuts_per_speaker" in values:
        multi = MultiSpeakerSpec(
            speakers_per_recording=get_int("speakers_per_recording", MultiSpeakerSpec.speakers_per_recording),
            cuts_per_speaker=get_int("cuts_per_speaker", MultiSpeakerSpec.cuts_per_speaker),
        )
    config = ExperimentConfig(
        dim=get_int("dim", ExperimentConfig.dim),
        n_speakers_train=get_int("train_speakers", ExperimentConfig.n_speakers_train),
        n_speakers_dev=get_int("dev_speakers", ExperimentConfig.n_speakers_dev),
        n_speakers_eval=get_int("eval_speakers", ExperimentConfig.n_speakers_eval),
        per_speaker=get_int("per_speaker", ExperimentConfig.per_speaker),
        n_adapt=get_int("adapt_size", ExperimentConfig.n_adapt),
        domain_shift=shift,
        seed=get_int("seed", ExperimentConfig.seed),
        multi_speaker=multi,
    )
    return kind, config
