"""Text file formats: archives, trials, scores, models, cut plans.

Everything is line-oriented, tab-separated text. Floats are written with
17 significant digits so write/read round trips are value-exact, except
score files which use 6 decimal places by convention. Readers reject
malformed input with the 1-based line number; nothing is loaded
partially or silently.
"""

from pathlib import Path
from typing import Sequence

import numpy as np

from ._linalg import sym
from .calibration import CalibrationModel, FusionModel
from .diarize import CutPlan
from .embeddings import EmbeddingArchive
from .errors import LabelError, ModelLoadError, ParseError
from .plda import GaussianPLDA, Preprocessor
from .scores import ScoreSet, Trial

FLOAT_FMT = "%.17g"
SCORE_DECIMALS = 6
MODEL_MAGIC = "plda-model"
PREPROC_MAGIC = "preproc"
CALIBRATION_MAGIC = "calibration"
FUSION_MAGIC = "fusion"
FORMAT_VERSION = 1

# Largest tolerated asymmetry in a stored covariance before the load is
# rejected as tampered.
LOAD_SYM_TOL = 1e-6


def _float_row(values) -> str:
    return " ".join(FLOAT_FMT % v for v in values)


def _lines(path):
    """Yield (line_no, stripped line); blank lines are skipped."""
    text = Path(path).read_text()
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if line.strip():
            yield i, line


def _parse_floats(path, line_no: int, tokens: Sequence[str]) -> np.ndarray:
    out = np.empty(len(tokens))
    for j, tok in enumerate(tokens):
        try:
            out[j] = float(tok)
        except ValueError:
            raise ParseError(path, line_no, f"non-numeric token '{tok}'") from None
    if not np.all(np.isfinite(out)):
        raise ParseError(path, line_no, "non-finite value")
    return out


# ---------------------------------------------------------------------------
# embedding archives: key<TAB>v1 v2 ... vd


def write_embedding_archive(archive: EmbeddingArchive, path) -> None:
    with open(path, "w") as f:
        for key, row in zip(archive.keys, archive.matrix):
            f.write(f"{key}\t{_float_row(row)}\n")


def read_embedding_archive(path) -> EmbeddingArchive:
    keys: list[str] = []
    rows: list[np.ndarray] = []
    seen: dict[str, int] = {}
    dim = None
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, line_no, f"expected 'key<TAB>values', got {len(parts)} fields")
        key, blob = parts
        if not key:
            raise ParseError(path, line_no, "empty key")
        if key in seen:
            raise ParseError(path, line_no, f"duplicate key '{key}' (first seen on line {seen[key]})")
        seen[key] = line_no
        values = _parse_floats(path, line_no, blob.split())
        if dim is None:
            dim = values.shape[0]
            if dim == 0:
                raise ParseError(path, line_no, "empty value row")
        elif values.shape[0] != dim:
            raise ParseError(
                path, line_no, f"ragged row: {values.shape[0]} values, expected {dim}"
            )
        keys.append(key)
        rows.append(values)
    if not keys:
        raise ParseError(path, 1, "archive file is empty")
    return EmbeddingArchive(keys, np.vstack(rows))


# ---------------------------------------------------------------------------
# speaker maps: key<TAB>speaker


def write_utt2spk(speaker_of: dict, path) -> None:
    with open(path, "w") as f:
        for key, spk in speaker_of.items():
            f.write(f"{key}\t{spk}\n")


def read_utt2spk(path) -> dict:
    out: dict[str, str] = {}
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError(path, line_no, "expected 'key<TAB>speaker'")
        if parts[0] in out:
            raise ParseError(path, line_no, f"duplicate key '{parts[0]}'")
        out[parts[0]] = parts[1]
    return out


# ---------------------------------------------------------------------------
# trial lists: enroll<TAB>test[<TAB>target|nontarget]


def write_trials(trials: Sequence[Trial], path, labels=None) -> None:
    with open(path, "w") as f:
        for i, (e, t) in enumerate(trials):
            if labels is None:
                f.write(f"{e}\t{t}\n")
            else:
                word = "target" if labels[i] else "nontarget"
                f.write(f"{e}\t{t}\t{word}\n")


def read_trials(path) -> tuple[tuple[Trial, ...], np.ndarray | None]:
    """Returns (trials, labels); labels is None for an unlabeled list."""
    trials: list[Trial] = []
    labels: list[bool] = []
    labeled = None
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) == 2:
            has_label = False
        elif len(parts) == 3:
            has_label = True
        else:
            raise ParseError(path, line_no, f"expected 2 or 3 fields, got {len(parts)}")
        if not parts[0] or not parts[1]:
            raise ParseError(path, line_no, "empty trial id")
        if labeled is None:
            labeled = has_label
        elif labeled != has_label:
            raise ParseError(path, line_no, "mixed labeled and unlabeled trial lines")
        if has_label:
            if parts[2] == "target":
                labels.append(True)
            elif parts[2] == "nontarget":
                labels.append(False)
            else:
                raise ParseError(path, line_no, f"unknown label token '{parts[2]}'")
        trials.append((parts[0], parts[1]))
    if not trials:
        raise ParseError(path, 1, "trial file is empty")
    return tuple(trials), (np.array(labels, dtype=bool) if labeled else None)


# ---------------------------------------------------------------------------
# score files: enroll<TAB>test<TAB>score (6 decimal places)


def write_scores(scores: ScoreSet, path) -> None:
    with open(path, "w") as f:
        for (e, t), s in zip(scores.trials, scores.scores):
            f.write(f"{e}\t{t}\t{s:.{SCORE_DECIMALS}f}\n")


def read_scores(path) -> ScoreSet:
    trials: list[Trial] = []
    values: list[float] = []
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, line_no, f"expected 3 fields, got {len(parts)}")
        if not parts[0] or not parts[1]:
            raise ParseError(path, line_no, "empty trial id")
        values.append(float(_parse_floats(path, line_no, [parts[2]])[0]))
        trials.append((parts[0], parts[1]))
    if not trials:
        raise ParseError(path, 1, "score file is empty")
    return ScoreSet(trials=tuple(trials), scores=np.array(values))


def attach_labels(scores: ScoreSet, trials: Sequence[Trial], labels: np.ndarray) -> ScoreSet:
    """Label a score set from a labeled trial list, matching by trial id."""
    if labels is None:
        raise LabelError("trial list carries no labels")
    table = {t: bool(l) for t, l in zip(tuple(trials), labels)}
    out = np.empty(len(scores), dtype=bool)
    for i, trial in enumerate(scores.trials):
        if trial not in table:
            raise LabelError(f"trial {trial} not present in the labeled trial list")
        out[i] = table[trial]
    return ScoreSet(trials=scores.trials, scores=scores.scores, labels=out, fused=scores.fused)


# ---------------------------------------------------------------------------
# PLDA models


def write_model(model: GaussianPLDA, path) -> None:
    d = model.dim
    with open(path, "w") as f:
        f.write(f"{MODEL_MAGIC} {FORMAT_VERSION} {d}\n")
        f.write(_float_row(model.mu) + "\n")
        for row in model.phi_b:
            f.write(_float_row(row) + "\n")
        for row in model.phi_w:
            f.write(_float_row(row) + "\n")


def _read_matrix_block(path, lines, d, what) -> np.ndarray:
    rows = []
    for _ in range(d):
        try:
            line_no, line = next(lines)
        except StopIteration:
            raise ModelLoadError(f"{path}: truncated file while reading {what}") from None
        row = _parse_floats(path, line_no, line.split())
        if row.shape[0] != d:
            raise ParseError(path, line_no, f"{what} row has {row.shape[0]} values, expected {d}")
        rows.append(row)
    return np.vstack(rows)


def _check_loaded_cov(m: np.ndarray, name: str) -> np.ndarray:
    skew = np.abs(m - m.T).max()
    if skew > LOAD_SYM_TOL * max(1.0, np.abs(m).max()):
        raise ModelLoadError(f"{name} is asymmetric beyond tolerance (skew {skew:.3e})")
    return sym(m)


def read_model(path) -> GaussianPLDA:
    lines = _lines(path)
    try:
        line_no, header = next(lines)
    except StopIteration:
        raise ModelLoadError(f"{path}: empty model file") from None
    parts = header.split()
    if len(parts) != 3 or parts[0] != MODEL_MAGIC:
        raise ModelLoadError(f"{path}: not a PLDA model file (header '{header}')")
    if parts[1] != str(FORMAT_VERSION):
        raise ModelLoadError(
            f"{path}: unsupported model format version {parts[1]}, expected {FORMAT_VERSION}"
        )
    d = int(parts[2])
    if d < 1:
        raise ModelLoadError(f"{path}: invalid dimension {d}")
    try:
        line_no, mu_line = next(lines)
    except StopIteration:
        raise ModelLoadError(f"{path}: truncated file while reading mean") from None
    mu = _parse_floats(path, line_no, mu_line.split())
    if mu.shape[0] != d:
        raise ParseError(path, line_no, f"mean has {mu.shape[0]} values, expected {d}")
    phi_b = _check_loaded_cov(_read_matrix_block(path, lines, d, "between covariance"), "phi_b")
    phi_w = _check_loaded_cov(_read_matrix_block(path, lines, d, "within covariance"), "phi_w")
    try:
        return GaussianPLDA(mu=mu, phi_b=phi_b, phi_w=phi_w)
    except Exception as exc:
        raise ModelLoadError(f"{path}: invalid model: {exc}") from exc


# ---------------------------------------------------------------------------
# preprocessors


def write_preprocessor(pre: Preprocessor, path) -> None:
    d = pre.dim
    with open(path, "w") as f:
        f.write(f"{PREPROC_MAGIC} {FORMAT_VERSION} {d} {int(pre.apply_length_norm)}\n")
        f.write(_float_row(pre.shift) + "\n")
        for row in pre.transform:
            f.write(_float_row(row) + "\n")


def read_preprocessor(path) -> Preprocessor:
    lines = _lines(path)
    try:
        line_no, header = next(lines)
    except StopIteration:
        raise ModelLoadError(f"{path}: empty preprocessor file") from None
    parts = header.split()
    if len(parts) != 4 or parts[0] != PREPROC_MAGIC:
        raise ModelLoadError(f"{path}: not a preprocessor file (header '{header}')")
    if parts[1] != str(FORMAT_VERSION):
        raise ModelLoadError(
            f"{path}: unsupported preprocessor version {parts[1]}, expected {FORMAT_VERSION}"
        )
    d = int(parts[2])
    lnorm = bool(int(parts[3]))
    try:
        line_no, shift_line = next(lines)
    except StopIteration:
        raise ModelLoadError(f"{path}: truncated preprocessor file") from None
    shift = _parse_floats(path, line_no, shift_line.split())
    if shift.shape[0] != d:
        raise ParseError(path, line_no, f"shift has {shift.shape[0]} values, expected {d}")
    transform = _read_matrix_block(path, lines, d, "transform")
    try:
        return Preprocessor(shift=shift, transform=transform, apply_length_norm=lnorm)
    except Exception as exc:
        raise ModelLoadError(f"{path}: invalid preprocessor: {exc}") from exc


# ---------------------------------------------------------------------------
# calibration / fusion models


def write_calibration(model: CalibrationModel, path) -> None:
    with open(path, "w") as f:
        f.write(f"{CALIBRATION_MAGIC} {FORMAT_VERSION}\n")
        f.write(f"p_eff\t{FLOAT_FMT % model.p_eff}\n")
        f.write(f"scale\t{FLOAT_FMT % model.scale}\n")
        f.write(f"offset\t{FLOAT_FMT % model.offset}\n")


def read_calibration(path) -> CalibrationModel:
    fields = {}
    lines = _lines(path)
    try:
        _, header = next(lines)
    except StopIteration:
        raise ModelLoadError(f"{path}: empty calibration file") from None
    parts = header.split()
    if len(parts) != 2 or parts[0] != CALIBRATION_MAGIC or parts[1] != str(FORMAT_VERSION):
        raise ModelLoadError(f"{path}: not a calibration model file (header '{header}')")
    for line_no, line in lines:
        kv = line.split("\t")
        if len(kv) != 2:
            raise ParseError(path, line_no, "expected 'field<TAB>value'")
        fields[kv[0]] = float(_parse_floats(path, line_no, [kv[1]])[0])
    for need in ("p_eff", "scale", "offset"):
        if need not in fields:
            raise ModelLoadError(f"{path}: missing field '{need}'")
    return CalibrationModel(scale=fields["scale"], offset=fields["offset"], p_eff=fields["p_eff"])


def write_fusion(model: FusionModel, path, names: Sequence[str] | None = None) -> None:
    names = names if names is not None else model.names
    if names is None:
        names = [f"sub{i}" for i in model.retained]
    with open(path, "w") as f:
        f.write(f"{FUSION_MAGIC} {FORMAT_VERSION}\n")
        f.write(f"p_eff\t{FLOAT_FMT % model.p_eff}\n")
        f.write(f"offset\t{FLOAT_FMT % model.offset}\n")
        for name, idx, w in zip(names, model.retained, model.weights):
            f.write(f"subsystem\t{name}\t{idx}\t{FLOAT_FMT % w}\n")


def read_fusion(path) -> FusionModel:
    lines = _lines(path)
    try:
        _, header = next(lines)
    except StopIteration:
        raise ModelLoadError(f"{path}: empty fusion file") from None
    parts = header.split()
    if len(parts) != 2 or parts[0] != FUSION_MAGIC or parts[1] != str(FORMAT_VERSION):
        raise ModelLoadError(f"{path}: not a fusion model file (header '{header}')")
    p_eff = None
    offset = None
    names: list[str] = []
    retained: list[int] = []
    weights: list[float] = []
    for line_no, line in lines:
        kv = line.split("\t")
        if kv[0] == "p_eff" and len(kv) == 2:
            p_eff = float(_parse_floats(path, line_no, [kv[1]])[0])
        elif kv[0] == "offset" and len(kv) == 2:
            offset = float(_parse_floats(path, line_no, [kv[1]])[0])
        elif kv[0] == "subsystem" and len(kv) == 4:
            names.append(kv[1])
            try:
                retained.append(int(kv[2]))
            except ValueError:
                raise ParseError(path, line_no, f"bad subsystem index '{kv[2]}'") from None
            weights.append(float(_parse_floats(path, line_no, [kv[3]])[0]))
        else:
            raise ParseError(path, line_no, f"unrecognized fusion model line '{line}'")
    if p_eff is None or offset is None or not weights:
        raise ModelLoadError(f"{path}: incomplete fusion model")
    return FusionModel(
        weights=tuple(weights),
        offset=offset,
        retained=tuple(retained),
        p_eff=p_eff,
        names=tuple(names),
    )


# ---------------------------------------------------------------------------
# cut plans: recording<TAB>index<TAB>start<TAB>end  (seconds, 3 decimals)


def write_cut_plans(plans: Sequence[CutPlan], path) -> None:
    with open(path, "w") as f:
        for plan in plans:
            for i, (start, end) in enumerate(plan.cuts):
                f.write(f"{plan.recording_id}\t{i}\t{start:.3f}\t{end:.3f}\n")


def read_cut_plans(path) -> list[CutPlan]:
    per_rec: dict[str, list[tuple[int, float, float]]] = {}
    order: list[str] = []
    for line_no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(path, line_no, f"expected 4 fields, got {len(parts)}")
        rec = parts[0]
        if not rec:
            raise ParseError(path, line_no, "empty recording id")
        try:
            idx = int(parts[1])
        except ValueError:
            raise ParseError(path, line_no, f"bad cut index '{parts[1]}'") from None
        start, end = (float(v) for v in _parse_floats(path, line_no, parts[2:]))
        if rec not in per_rec:
            per_rec[rec] = []
            order.append(rec)
        per_rec[rec].append((idx, start, end))
    if not order:
        raise ParseError(path, 1, "cut plan file is empty")
    plans = []
    for rec in order:
        entries = sorted(per_rec[rec])
        if [i for i, _, _ in entries] != list(range(len(entries))):
            raise ParseError(path, 1, f"recording '{rec}' has non-contiguous cut indices")
        plans.append(CutPlan(recording_id=rec, cuts=tuple((s, e) for _, s, e in entries)))
    return plans
