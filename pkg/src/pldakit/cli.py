"""Command-line interface chaining all pipeline stages.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on data errors
(malformed files, dimension mismatches, missing keys, ...).
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import (
    DEFAULT_BETWEEN_SHARE,
    DEFAULT_GAMMA,
    DEFAULT_WITHIN_SHARE,
    collect_domain_stats,
    coral_plus_adapt,
    excess_variance_adapt,
)
from ._linalg import pd_inv_sqrt, psd_sqrt, sym
from .calibration import (
    apply_affine,
    apply_fusion,
    select_positive_weight_subsystems,
    train_calibration,
    train_fusion,
)
from .diarize import (
    DEFAULT_CUT_LENGTH,
    DEFAULT_STOP_THRESHOLD,
    score_multispeaker_trial,
    score_whole_segment,
    uniform_cut_plan,
)
from .embeddings import LabeledEmbeddings
from .errors import ParseError, PldaKitError
from .formats import (
    attach_labels,
    read_calibration,
    read_embedding_archive,
    read_fusion,
    read_model,
    read_preprocessor,
    read_scores,
    read_trials,
    read_utt2spk,
    write_calibration,
    write_cut_plans,
    write_fusion,
    write_model,
    write_preprocessor,
    write_scores,
)
from .metrics import COST_PRESETS, CostParams, det_points
from .plda import GaussianPLDA, fit_plda_em, fit_preprocessor, score_trials
from .report import evaluation_report, render_det_figure, write_det_points
from .scores import ScoreSet
from .synth import (
    ExperimentConfig,
    MultiSpeakerSpec,
    parse_experiment_config,
    synth_domain_shift_experiment,
    synth_multispeaker_experiment,
)


def _shares(text: str) -> tuple[float, float]:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shares '{text}', expected 'within,between'")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("shares must be two comma-separated numbers")
    return parts[0], parts[1]


def _priors(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad prior list '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("at least one prior required")
    return values


def _prior(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad prior '{text}'")
    if not 0.0 < p < 1.0:
        raise argparse.ArgumentTypeError(f"prior must be in (0, 1), got {p}")
    return p


def _load_preprocessed(path, preproc):
    archive = read_embedding_archive(path)
    if preproc is not None:
        archive = archive.transformed(preproc.apply)
    return archive


def _cmd_train_plda(args) -> int:
    archive = read_embedding_archive(args.embeddings)
    speaker_of = read_utt2spk(args.utt2spk)
    preproc = None
    if args.preproc_out:
        preproc = fit_preprocessor(archive.matrix, use_length_norm=args.length_norm)
        archive = archive.transformed(preproc.apply)
        write_preprocessor(preproc, args.preproc_out)
    data = LabeledEmbeddings(archive, speaker_of)
    model = fit_plda_em(data, iterations=args.iterations, variance_floor=args.variance_floor)
    write_model(model, args.model_out)
    print(f"trained on {len(data)} embeddings / {data.n_speakers} speakers -> {args.model_out}")
    return 0


def _coral_transport(model: GaussianPLDA, stats) -> GaussianPLDA:
    """Plain correlation alignment of the model: transport both
    covariances with A and recenter the mean."""
    a = psd_sqrt(stats.total_cov) @ pd_inv_sqrt(model.total_cov, "model total covariance")
    return GaussianPLDA(
        mu=stats.mean,
        phi_b=sym(a @ model.phi_b @ a.T),
        phi_w=sym(a @ model.phi_w @ a.T),
    )


def _cmd_adapt(args) -> int:
    model = read_model(args.model)
    preproc = read_preprocessor(args.preproc) if args.preproc else None
    in_domain = _load_preprocessed(args.in_domain, preproc)
    stats = collect_domain_stats(in_domain.matrix)
    if args.method == "coral":
        adapted = _coral_transport(model, stats)
    elif args.method == "coral-plus":
        adapted = coral_plus_adapt(model, stats, gamma=args.gamma)
    else:
        within, between = args.shares
        adapted = excess_variance_adapt(model, stats, within_share=within, between_share=between)
    write_model(adapted, args.model_out)
    print(f"adapted with {args.method} on {stats.count} in-domain embeddings -> {args.model_out}")
    return 0


def _cmd_score(args) -> int:
    model = read_model(args.model)
    preproc = read_preprocessor(args.preproc) if args.preproc else None
    enroll = _load_preprocessed(args.enroll, preproc)
    tests = _load_preprocessed(args.test, preproc)
    trials, labels = read_trials(args.trials)
    result = score_trials(model, enroll, tests, trials, labels)
    write_scores(result, args.out)
    print(f"scored {len(result)} trials -> {args.out}")
    return 0


def _read_durations(path):
    durations = {}
    text = Path(path).read_text()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, line_no, "expected 'recording<TAB>seconds'")
        try:
            durations[parts[0]] = float(parts[1])
        except ValueError:
            raise ParseError(path, line_no, f"bad duration '{parts[1]}'") from None
    if not durations:
        raise ParseError(path, 1, "durations file is empty")
    return durations


def _cmd_diarize(args) -> int:
    model = read_model(args.model)
    preproc = read_preprocessor(args.preproc) if args.preproc else None
    enroll = _load_preprocessed(args.enroll, preproc)
    cuts = _load_preprocessed(args.cuts, preproc)
    trials, labels = read_trials(args.trials)

    by_recording: dict[str, list[tuple[int, int]]] = {}
    for row, key in enumerate(cuts.keys):
        rec, sep, idx = key.rpartition("#")
        if not sep or not rec:
            raise ParseError(args.cuts, row + 1, f"cut key '{key}' is not 'recording#index'")
        try:
            by_recording.setdefault(rec, []).append((int(idx), row))
        except ValueError:
            raise ParseError(args.cuts, row + 1, f"cut key '{key}' has non-numeric index") from None

    values = np.empty(len(trials))
    cluster_counts = []
    for i, (enroll_id, rec_id) in enumerate(trials):
        if rec_id not in by_recording:
            raise PldaKitError(f"no cuts found for recording '{rec_id}'")
        rows = [r for _, r in sorted(by_recording[rec_id])]
        cut_matrix = cuts.matrix[rows]
        if enroll_id not in enroll:
            raise PldaKitError(f"enrollment '{enroll_id}' not found in archive")
        enroll_vec = enroll.get(enroll_id)
        if args.mode == "whole":
            values[i] = score_whole_segment(model, enroll_vec, cut_matrix)
        else:
            result = score_multispeaker_trial(model, enroll_vec, cut_matrix, args.threshold)
            values[i] = result.score
            cluster_counts.append(result.n_clusters)

    write_scores(ScoreSet(trials=trials, scores=values, labels=labels), args.out)
    if args.plan_out:
        if not args.durations:
            raise PldaKitError("--plan-out requires --durations")
        durations = _read_durations(args.durations)
        plans = [uniform_cut_plan(durations[r], args.cut_length, recording_id=r) for r in sorted(durations)]
        write_cut_plans(plans, args.plan_out)
    extra = ""
    if cluster_counts:
        extra = f", clusters min/median/max {min(cluster_counts)}/{int(np.median(cluster_counts))}/{max(cluster_counts)}"
    print(f"scored {len(trials)} multi-speaker trials ({args.mode}){extra} -> {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    scores = read_scores(args.scores)
    if args.model:
        model = read_calibration(args.model)
        if not args.out:
            raise PldaKitError("--out is required when applying a calibration model")
        calibrated = apply_affine(model, scores)
        write_scores(calibrated, args.out)
        print(f"applied calibration (scale {model.scale:.6f}, offset {model.offset:.6f}) -> {args.out}")
        return 0
    if not args.trials or not args.model_out:
        raise PldaKitError("training needs --trials (labeled) and --model-out")
    trials, labels = read_trials(args.trials)
    labeled = attach_labels(scores, trials, labels)
    model = train_calibration(labeled, p_eff=args.prior)
    write_calibration(model, args.model_out)
    if args.out:
        write_scores(apply_affine(model, labeled), args.out)
    print(f"trained calibration: scale {model.scale:.6f}, offset {model.offset:.6f} -> {args.model_out}")
    return 0


def _cmd_fuse(args) -> int:
    score_sets = [read_scores(p) for p in args.scores]
    names = [Path(p).stem for p in args.scores]
    if args.model:
        model = read_fusion(args.model)
        if not args.out:
            raise PldaKitError("--out is required when applying a fusion model")
        if model.names and set(model.names).issubset(set(names)):
            ordered = [score_sets[names.index(n)] for n in model.names]
        else:
            ordered = score_sets
        fused = apply_fusion(model, ordered)
        write_scores(fused, args.out)
        print(f"applied fusion of {len(model.weights)} subsystems -> {args.out}")
        return 0
    if not args.trials or not args.model_out:
        raise PldaKitError("training needs --trials (labeled) and --model-out")
    trials, labels = read_trials(args.trials)
    labeled = [attach_labels(s, trials, labels) for s in score_sets]
    if args.prune:
        model = select_positive_weight_subsystems(labeled, args.prior, single_pass=args.single_pass)
    else:
        model = train_fusion(labeled, args.prior)
    retained_names = [names[i] for i in model.retained]
    write_fusion(model, args.model_out, names=retained_names)
    if args.out:
        write_scores(apply_fusion(model, [labeled[i] for i in model.retained]), args.out)
    weights = ", ".join(f"{n}={w:.4f}" for n, w in zip(retained_names, model.weights))
    print(f"trained fusion ({weights}) -> {args.model_out}")
    return 0


def _cmd_evaluate(args) -> int:
    scores = read_scores(args.scores)
    trials, labels = read_trials(args.trials)
    labeled = attach_labels(scores, trials, labels)
    params = CostParams(args.priors) if args.priors else CostParams.preset(args.preset)
    report = evaluation_report(labeled, params)
    sys.stdout.write(report)
    if args.report_out:
        Path(args.report_out).write_text(report)
    if args.det_out or args.fig_out:
        curve = det_points(labeled)
        if args.det_out:
            write_det_points(curve, args.det_out)
        if args.fig_out:
            render_det_figure(curve, args.fig_out, title=Path(args.scores).stem)
    return 0


def _cmd_synth(args) -> int:
    if args.config:
        kind, config = parse_experiment_config(args.config)
    else:
        kind, config = "domain-shift", ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if kind == "multi-speaker":
        if config.multi_speaker is None:
            config = replace(config, multi_speaker=MultiSpeakerSpec())
        manifest = synth_multispeaker_experiment(config, args.out)
    else:
        manifest = synth_domain_shift_experiment(config, args.out)
    print(f"wrote {manifest['experiment']} dataset ({len(manifest['files'])} files) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pldakit",
        description="Speaker-verification back-end pipeline on precomputed embeddings",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-plda", help="fit preprocessing and a PLDA model")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--utt2spk", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--preproc-out", help="fit and save a preprocessor (center/whiten)")
    p.add_argument("--length-norm", action="store_true", help="include length normalization in the preprocessor")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--variance-floor", type=float, default=1e-6)
    p.set_defaults(fn=_cmd_train_plda)

    p = sub.add_parser("adapt", help="unsupervised domain adaptation of a PLDA model")
    p.add_argument("--model", required=True)
    p.add_argument("--in-domain", required=True, help="unlabeled in-domain embedding archive")
    p.add_argument("--model-out", required=True)
    p.add_argument("--method", choices=["coral", "coral-plus", "excess-variance"], default="coral-plus")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--shares", type=_shares, default=(DEFAULT_WITHIN_SHARE, DEFAULT_BETWEEN_SHARE),
                   help="within,between split of the variance excess")
    p.add_argument("--preproc")
    p.set_defaults(fn=_cmd_adapt)

    p = sub.add_parser("score", help="score verification trials")
    p.add_argument("--model", required=True)
    p.add_argument("--enroll", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preproc")
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("diarize", help="score multi-speaker trials via clustering")
    p.add_argument("--model", required=True)
    p.add_argument("--enroll", required=True)
    p.add_argument("--cuts", required=True, help="cut archive with keys recording#index")
    p.add_argument("--trials", required=True, help="trials of (enroll_id, recording_id)")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_STOP_THRESHOLD)
    p.add_argument("--mode", choices=["max", "whole"], default="max")
    p.add_argument("--cut-length", type=float, default=DEFAULT_CUT_LENGTH)
    p.add_argument("--durations", help="recording<TAB>seconds file for --plan-out")
    p.add_argument("--plan-out", help="write a uniform cut plan for --durations")
    p.add_argument("--preproc")
    p.set_defaults(fn=_cmd_diarize)

    p = sub.add_parser("calibrate", help="train or apply affine score calibration")
    p.add_argument("--scores", required=True)
    p.add_argument("--trials", help="labeled trials (training)")
    p.add_argument("--prior", type=_prior, default=0.5)
    p.add_argument("--model-out", help="write the trained calibration here")
    p.add_argument("--model", help="apply this calibration instead of training")
    p.add_argument("--out", help="write transformed scores here")
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("fuse", help="train or apply linear score fusion")
    p.add_argument("--scores", action="append", required=True, help="repeat per subsystem")
    p.add_argument("--trials", help="labeled trials (training)")
    p.add_argument("--prior", type=_prior, default=0.005)
    p.add_argument("--prune", action="store_true", help="drop non-positive-weight subsystems and retrain")
    p.add_argument("--single-pass", action="store_true", help="prune and retrain at most once")
    p.add_argument("--model-out")
    p.add_argument("--model", help="apply this fusion instead of training")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_fuse)

    p = sub.add_parser("evaluate", help="EER and detection costs for labeled scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--trials", required=True, help="labeled trial list")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--priors", type=_priors, help="comma-separated effective priors")
    group.add_argument("--preset", choices=sorted(COST_PRESETS), default="cmn2")
    p.add_argument("--det-out", help="write DET points (threshold/pmiss/pfa TSV)")
    p.add_argument("--fig-out", help="render the DET curve figure to this file")
    p.add_argument("--report-out", help="also write the text report here")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic experiment dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(fn=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PldaKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
