import numpy as np
import pytest

from pldakit.cli import main
from pldakit.formats import (
    read_calibration,
    read_cut_plans,
    read_fusion,
    read_model,
    read_scores,
    read_trials,
)


@pytest.fixture(scope="module")
def shift_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    cfg = out / "synth.cfg"
    cfg.write_text(
        "dim = 8\ntrain_speakers = 60\ndev_speakers = 12\neval_speakers = 12\n"
        "per_speaker = 4\nadapt_size = 400\nseed = 31\n"
    )
    assert main(["synth", "--out", str(out / "data"), "--config", str(cfg)]) == 0
    return out / "data"


@pytest.fixture(scope="module")
def trained(shift_dataset, tmp_path_factory):
    work = tmp_path_factory.mktemp("work")
    model = work / "model.txt"
    preproc = work / "preproc.txt"
    rc = main([
        "train-plda",
        "--embeddings", str(shift_dataset / "train.emb"),
        "--utt2spk", str(shift_dataset / "train.utt2spk"),
        "--model-out", str(model),
        "--preproc-out", str(preproc),
    ])
    assert rc == 0
    return work, model, preproc


class TestTrainAndScore:
    def test_model_file_written(self, trained):
        _, model, preproc = trained
        loaded = read_model(model)
        assert loaded.dim == 8
        read_model(model)

    def test_score_writes_all_trials(self, shift_dataset, trained):
        work, model, preproc = trained
        out = work / "raw.txt"
        rc = main([
            "score", "--model", str(model),
            "--enroll", str(shift_dataset / "eval_enroll.emb"),
            "--test", str(shift_dataset / "eval_test.emb"),
            "--trials", str(shift_dataset / "eval_trials.txt"),
            "--preproc", str(preproc),
            "--out", str(out),
        ])
        assert rc == 0
        scores = read_scores(out)
        trials, _ = read_trials(shift_dataset / "eval_trials.txt")
        assert scores.trials == trials

    def test_missing_file_is_exit_1(self, trained, tmp_path):
        work, model, _ = trained
        rc = main([
            "score", "--model", str(model),
            "--enroll", str(tmp_path / "absent.emb"),
            "--test", str(tmp_path / "absent.emb"),
            "--trials", str(tmp_path / "absent.txt"),
            "--out", str(tmp_path / "o.txt"),
        ])
        assert rc == 1

    def test_usage_error_is_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["score"])  # missing required flags
        assert exc.value.code == 2

    def test_unknown_command_is_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestAdapt:
    @pytest.mark.parametrize("method", ["coral", "coral-plus", "excess-variance"])
    def test_methods_produce_loadable_models(self, shift_dataset, trained, method):
        work, model, preproc = trained
        out = work / f"adapted_{method}.txt"
        rc = main([
            "adapt", "--model", str(model),
            "--in-domain", str(shift_dataset / "adapt.emb"),
            "--preproc", str(preproc),
            "--method", method,
            "--model-out", str(out),
        ])
        assert rc == 0
        adapted = read_model(out)
        assert adapted.dim == 8

    def test_coral_plus_variances_never_shrink(self, shift_dataset, trained):
        work, model, preproc = trained
        out = work / "adapted_check.txt"
        main([
            "adapt", "--model", str(model),
            "--in-domain", str(shift_dataset / "adapt.emb"),
            "--preproc", str(preproc),
            "--method", "coral-plus", "--gamma", "0.5",
            "--model-out", str(out),
        ])
        base = read_model(model)
        adapted = read_model(out)
        assert np.linalg.eigvalsh(adapted.phi_w - base.phi_w).min() >= -1e-8


@pytest.fixture(scope="module")
def raw_scores(shift_dataset, trained):
    work, model, preproc = trained
    out = work / "dev_raw.txt"
    main([
        "score", "--model", str(model),
        "--enroll", str(shift_dataset / "dev_enroll.emb"),
        "--test", str(shift_dataset / "dev_test.emb"),
        "--trials", str(shift_dataset / "dev_trials.txt"),
        "--preproc", str(preproc),
        "--out", str(out),
    ])
    return out


@pytest.fixture(scope="module")
def ms_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ms")
    cfg = out / "ms.cfg"
    cfg.write_text(
        "experiment = multi-speaker\ndim = 8\ntrain_speakers = 60\n"
        "eval_speakers = 12\nper_speaker = 4\nspeakers_per_recording = 2\n"
        "cuts_per_speaker = 6\nseed = 13\n"
    )
    assert main(["synth", "--out", str(out / "data"), "--config", str(cfg)]) == 0
    return out / "data"


@pytest.fixture(scope="module")
def ms_model(ms_dataset, tmp_path_factory):
    work = tmp_path_factory.mktemp("mswork")
    model = work / "model.txt"
    preproc = work / "pre.txt"
    main([
        "train-plda", "--embeddings", str(ms_dataset / "train.emb"),
        "--utt2spk", str(ms_dataset / "train.utt2spk"),
        "--model-out", str(model), "--preproc-out", str(preproc),
    ])
    return work, model, preproc


class TestCalibrateFuseEvaluate:
    def test_calibrate_train_and_apply(self, shift_dataset, trained, raw_scores):
        work, _, _ = trained
        cal = work / "cal.txt"
        applied = work / "calibrated.txt"
        rc = main([
            "calibrate", "--scores", str(raw_scores),
            "--trials", str(shift_dataset / "dev_trials.txt"),
            "--prior", "0.5",
            "--model-out", str(cal),
            "--out", str(applied),
        ])
        assert rc == 0
        model = read_calibration(cal)
        raw = read_scores(raw_scores)
        out = read_scores(applied)
        np.testing.assert_allclose(
            out.scores, np.round(model.scale * raw.scores + model.offset, 6), atol=1e-6
        )
        # apply mode reproduces the same file
        second = work / "calibrated2.txt"
        rc = main(["calibrate", "--scores", str(raw_scores), "--model", str(cal),
                   "--out", str(second)])
        assert rc == 0
        assert second.read_text() == applied.read_text()

    def test_fuse_train_prune_apply(self, shift_dataset, trained, raw_scores):
        work, _, _ = trained
        # second subsystem: scaled copy with noise, written via numpy
        raw = read_scores(raw_scores)
        rng = np.random.default_rng(0)
        from pldakit.formats import write_scores

        second = work / "sub2.txt"
        write_scores(raw.with_scores(0.5 * raw.scores + rng.normal(0, 1, len(raw))), second)
        fus = work / "fus.txt"
        fused_out = work / "fused.txt"
        rc = main([
            "fuse", "--scores", str(raw_scores), "--scores", str(second),
            "--trials", str(shift_dataset / "dev_trials.txt"),
            "--prior", "0.01", "--prune",
            "--model-out", str(fus), "--out", str(fused_out),
        ])
        assert rc == 0
        model = read_fusion(fus)
        assert all(w > 0 for w in model.weights)
        # apply mode matches train-time output
        replay = work / "fused2.txt"
        rc = main(["fuse", "--scores", str(raw_scores), "--scores", str(second),
                   "--model", str(fus), "--out", str(replay)])
        assert rc == 0
        assert replay.read_text() == fused_out.read_text()

    def test_evaluate_report_and_outputs(self, shift_dataset, raw_scores, trained, capsys):
        work, _, _ = trained
        det = work / "det.tsv"
        fig = work / "det.png"
        report = work / "report.txt"
        rc = main([
            "evaluate", "--scores", str(raw_scores),
            "--trials", str(shift_dataset / "dev_trials.txt"),
            "--preset", "cmn2",
            "--det-out", str(det), "--fig-out", str(fig),
            "--report-out", str(report),
        ])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "eer_pct" in stdout and "c_primary_min" in stdout
        assert report.read_text() == stdout[stdout.index("trials"):]
        lines = det.read_text().splitlines()
        assert all(len(line.split("\t")) == 3 for line in lines)
        assert fig.stat().st_size > 1000  # a real image came out

    def test_evaluate_with_explicit_priors(self, shift_dataset, raw_scores, capsys):
        rc = main([
            "evaluate", "--scores", str(raw_scores),
            "--trials", str(shift_dataset / "dev_trials.txt"),
            "--priors", "0.05,0.01",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("prior\t") == 2

    def test_evaluate_unlabeled_trials_is_exit_1(self, shift_dataset, raw_scores, tmp_path):
        unlabeled = tmp_path / "unlabeled.txt"
        trials, _ = read_trials(shift_dataset / "dev_trials.txt")
        unlabeled.write_text("".join(f"{e}\t{t}\n" for e, t in trials))
        rc = main(["evaluate", "--scores", str(raw_scores), "--trials", str(unlabeled)])
        assert rc == 1


class TestDiarizeCli:
    def test_max_and_whole_modes(self, ms_dataset, ms_model):
        work, model, preproc = ms_model
        for mode in ("max", "whole"):
            out = work / f"scores_{mode}.txt"
            rc = main([
                "diarize", "--model", str(model),
                "--enroll", str(ms_dataset / "enroll.emb"),
                "--cuts", str(ms_dataset / "cuts.emb"),
                "--trials", str(ms_dataset / "trials.txt"),
                "--preproc", str(preproc),
                "--mode", mode, "--out", str(out),
            ])
            assert rc == 0
            trials, _ = read_trials(ms_dataset / "trials.txt")
            assert read_scores(out).trials == trials

    def test_plan_generation(self, ms_dataset, ms_model, tmp_path):
        work, model, preproc = ms_model
        durations = tmp_path / "durations.txt"
        durations.write_text("recX\t5.4\nrecY\t2.0\n")
        plan = tmp_path / "plan.txt"
        rc = main([
            "diarize", "--model", str(model),
            "--enroll", str(ms_dataset / "enroll.emb"),
            "--cuts", str(ms_dataset / "cuts.emb"),
            "--trials", str(ms_dataset / "trials.txt"),
            "--preproc", str(preproc),
            "--out", str(tmp_path / "s.txt"),
            "--durations", str(durations), "--plan-out", str(plan),
            "--cut-length", "1.0",
        ])
        assert rc == 0
        plans = {p.recording_id: p for p in read_cut_plans(plan)}
        assert len(plans["recX"]) == 5  # 0.4 s remainder merged into the last cut
        assert plans["recX"].duration == 5.4
        assert len(plans["recY"]) == 2


class TestFullPipeline:
    def test_adaptation_improves_eer_through_cli_only(self, shift_dataset, trained, tmp_path):
        """The whole chain through files and subcommands, no library calls."""
        work, model, preproc = trained
        adapted = tmp_path / "adapted.txt"
        assert main([
            "adapt", "--model", str(model),
            "--in-domain", str(shift_dataset / "adapt.emb"),
            "--preproc", str(preproc), "--model-out", str(adapted),
        ]) == 0

        def cli_eer(model_path, out_name):
            scores = tmp_path / out_name
            assert main([
                "score", "--model", str(model_path),
                "--enroll", str(shift_dataset / "eval_enroll.emb"),
                "--test", str(shift_dataset / "eval_test.emb"),
                "--trials", str(shift_dataset / "eval_trials.txt"),
                "--preproc", str(preproc), "--out", str(scores),
            ]) == 0
            report = tmp_path / f"{out_name}.report"
            assert main([
                "evaluate", "--scores", str(scores),
                "--trials", str(shift_dataset / "eval_trials.txt"),
                "--report-out", str(report),
            ]) == 0
            for line in report.read_text().splitlines():
                if line.startswith("eer_pct\t"):
                    return float(line.split("\t")[1])
            raise AssertionError("no eer_pct line in report")

        eer_raw = cli_eer(model, "raw.txt")
        eer_adapted = cli_eer(adapted, "adapted_scores.txt")
        assert eer_adapted < eer_raw


class TestSynthCli:
    def test_seed_override_changes_output(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("dim = 5\ntrain_speakers = 10\ndev_speakers = 3\neval_speakers = 3\nper_speaker = 3\nadapt_size = 30\n")
        assert main(["synth", "--out", str(tmp_path / "a"), "--config", str(cfg)]) == 0
        assert main(["synth", "--out", str(tmp_path / "b"), "--config", str(cfg), "--seed", "77"]) == 0
        assert (tmp_path / "a/train.emb").read_text() != (tmp_path / "b/train.emb").read_text()

    def test_bad_config_is_exit_1(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("bogus_key = 3\n")
        assert main(["synth", "--out", str(tmp_path / "x"), "--config", str(cfg)]) == 1
