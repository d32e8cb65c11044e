"""End-to-end tests for training, inference, sweeps, writers, and the CLI."""

import dataclasses
import math

import numpy as np
import pytest

import causalmvc.pipeline as pipeline
from causalmvc.checkpoint import save_checkpoint
from causalmvc.cli import main as cli_main
from causalmvc.config import (
    ABLATION_MODES,
    ConfigError,
    TrainConfig,
    load_config,
    parse_config_text,
    serialize_config,
)
from causalmvc.data import MultiViewDataset, inject_misalignment, make_synthetic
from causalmvc.metrics import MetricReport
from causalmvc.nn import ShapeError
from causalmvc.pipeline import (
    AblationRow,
    SweepRow,
    TrainHistory,
    ablate,
    evaluate,
    export_embeddings,
    infer,
    ratio_sweep,
    train,
    write_ablation,
    write_assignments,
    write_history,
    write_metrics,
    write_sweep,
)


@pytest.fixture(autouse=True)
def fast_pretrain(monkeypatch):
    monkeypatch.setattr(pipeline, "PRETRAIN_EPOCHS", 5)


def tiny_data(n=24, seed=0):
    return make_synthetic(n, 3, 2, [5, 4], separation=8.0, noise=0.3, seed=seed)


def tiny_config(**overrides):
    base = dict(k=3, h=4, d=3, m=4, epochs=3, batch_size=8, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


class TestTrain:
    def test_history_covers_every_epoch(self):
        state, history = train(tiny_data(), tiny_config(epochs=4))
        assert [rec.epoch for rec in history.records] == [1, 2, 3, 4]
        assert state.epochs_done == 4
        assert history.final_assignment.n_samples == 24

    def test_zero_epochs_still_produces_assignment(self):
        state, history = train(tiny_data(), tiny_config(epochs=0))
        assert history.records == []
        assert state.epochs_done == 0
        assert history.final_assignment.hard.shape == (24,)

    def test_same_seed_is_bit_identical(self):
        data = tiny_data()
        config = tiny_config()
        _, first = train(data, config)
        _, second = train(data, config)
        assert [r.total for r in first.records] == [r.total for r in second.records]
        np.testing.assert_array_equal(
            first.final_assignment.soft, second.final_assignment.soft
        )

    def test_loss_decreases_over_training(self):
        _, history = train(tiny_data(), tiny_config(epochs=8))
        assert history.records[-1].total < history.records[0].total

    def test_anneal_ramps_then_saturates(self):
        _, history = train(tiny_data(), tiny_config(epochs=10))
        coeffs = [rec.anneal for rec in history.records]
        assert np.all(np.diff(coeffs) >= 0)
        warm_end = math.ceil(0.2 * 10)
        assert all(c == 1.0 for c in coeffs[warm_end - 1:])

    def test_metrics_tracked_only_with_labels(self):
        data = tiny_data()
        unlabeled = MultiViewDataset(views=data.views, labels=None)
        _, history = train(unlabeled, tiny_config(epochs=2))
        assert all(rec.acc is None for rec in history.records)
        _, labeled_history = train(data, tiny_config(epochs=2))
        assert all(rec.acc is not None for rec in labeled_history.records)
        assert all(0.0 <= rec.acc <= 1.0 for rec in labeled_history.records)

    def test_no_cau_con_returns_warm_start_without_epochs(self):
        state, history = train(tiny_data(), tiny_config(ablation="no_cau_con"))
        assert history.records == []
        assert state.epochs_done == 0
        assert history.final_assignment.hard.shape == (24,)

    def test_undersized_leftover_batch_is_skipped(self):
        data = tiny_data(n=13)
        _, history = train(data, tiny_config(epochs=2, batch_size=4))
        assert len(history.records) == 2

    def test_too_few_samples_rejected(self):
        data = tiny_data(n=12)
        small = MultiViewDataset(
            views=[v[:2] for v in data.views], labels=data.labels[:2]
        )
        with pytest.raises(ShapeError):
            train(small, tiny_config())


class TestInfer:
    def test_reproduces_cached_final_assignment(self):
        data = tiny_data()
        state, history = train(data, tiny_config())
        again = infer(state, data)
        np.testing.assert_array_equal(again.soft, history.final_assignment.soft)

    def test_checkpoint_file_gives_same_answer(self, tmp_path):
        data = tiny_data()
        state, history = train(data, tiny_config())
        path = tmp_path / "model.ckpt"
        save_checkpoint(state, path)
        again = infer(path, data)
        np.testing.assert_array_equal(again.soft, history.final_assignment.soft)

    def test_explicit_config_matches_stored_default(self):
        data = tiny_data()
        state, history = train(data, tiny_config())
        again = infer(state, data, state.config)
        np.testing.assert_array_equal(again.soft, history.final_assignment.soft)

    def test_covers_every_row_of_misaligned_data(self):
        data = tiny_data()
        state, _ = train(data, tiny_config())
        misaligned, _ = inject_misalignment(data, 0.5, seed=7)
        assignment = infer(state, misaligned)
        assert assignment.hard.shape == (24,)
        assert set(assignment.hard.tolist()) <= {0, 1, 2}

    def test_view_count_mismatch_rejected(self):
        data = tiny_data()
        state, _ = train(data, tiny_config())
        three_views = MultiViewDataset(
            views=[data.views[0], data.views[1], data.views[1].copy()],
            labels=data.labels,
        )
        with pytest.raises(ShapeError):
            infer(state, three_views)

    def test_feature_width_mismatch_rejected(self):
        data = tiny_data()
        state, _ = train(data, tiny_config())
        narrow = MultiViewDataset(
            views=[data.views[0][:, :4], data.views[1]], labels=data.labels
        )
        with pytest.raises(ShapeError):
            infer(state, narrow)

    def test_sample_count_mismatch_rejected_for_variational_modes(self):
        data = tiny_data()
        state, _ = train(data, tiny_config())
        half = MultiViewDataset(
            views=[v[:12] for v in data.views], labels=data.labels[:12]
        )
        with pytest.raises(ShapeError):
            infer(state, half)

    def test_plain_head_mode_accepts_new_sample_counts(self):
        data = tiny_data()
        state, _ = train(data, tiny_config(ablation="no_cau"))
        half = MultiViewDataset(
            views=[v[:12] for v in data.views], labels=data.labels[:12]
        )
        assignment = infer(state, half)
        assert assignment.hard.shape == (12,)


class TestEvaluate:
    def test_relabeled_clustering_scores_perfect(self):
        data = tiny_data()
        state, history = train(data, tiny_config())
        report = evaluate(history.final_assignment, data.labels)
        assert isinstance(report, MetricReport)
        assert report.n_samples == 24
        assert 0.0 <= report.acc <= 1.0

    def test_label_length_mismatch_rejected(self):
        _, history = train(tiny_data(), tiny_config(epochs=0))
        with pytest.raises(ShapeError):
            evaluate(history.final_assignment, np.zeros(5, dtype=np.int64))


class TestRatioSweep:
    def test_rows_follow_requested_ratios(self):
        rows = ratio_sweep(tiny_data(), [0.5, 1.0], tiny_config(epochs=2))
        assert [row.ratio for row in rows] == [0.5, 1.0]
        for row in rows:
            assert 0.0 <= row.report.acc <= 1.0

    def test_ratio_one_equals_training_on_clean_data(self):
        data = tiny_data()
        config = tiny_config(epochs=2)
        rows = ratio_sweep(data, [1.0], config)
        state, _ = train(data, config)
        manual = evaluate(infer(state, data), data.labels)
        assert rows[0].report.acc == manual.acc
        assert rows[0].report.nmi == manual.nmi

    def test_input_validation(self):
        data = tiny_data()
        with pytest.raises(ValueError):
            ratio_sweep(data, [], tiny_config())
        with pytest.raises(ValueError):
            ratio_sweep(data, [1.5], tiny_config())
        unlabeled = MultiViewDataset(views=data.views, labels=None)
        with pytest.raises(ValueError):
            ratio_sweep(unlabeled, [0.5], tiny_config())


class TestAblate:
    def test_one_row_per_mode_in_declared_order(self):
        rows = ablate(tiny_data(), tiny_config(epochs=2))
        assert [row.mode for row in rows] == list(ABLATION_MODES)

    def test_warm_start_only_mode_matches_direct_run(self):
        data = tiny_data()
        config = tiny_config(epochs=2)
        rows = ablate(data, config)
        _, history = train(
            data, dataclasses.replace(config, ablation="no_cau_con")
        )
        direct = evaluate(history.final_assignment, data.labels)
        by_mode = {row.mode: row.report for row in rows}
        assert by_mode["no_cau_con"].acc == direct.acc

    def test_full_row_matches_direct_run(self):
        data = tiny_data()
        config = tiny_config(epochs=2)
        rows = ablate(data, config)
        state, _ = train(data, dataclasses.replace(config, ablation="full"))
        direct = evaluate(infer(state, data), data.labels)
        by_mode = {row.mode: row.report for row in rows}
        assert by_mode["full"].acc == direct.acc

    def test_labels_required(self):
        data = tiny_data()
        unlabeled = MultiViewDataset(views=data.views, labels=None)
        with pytest.raises(ValueError):
            ablate(unlabeled, tiny_config())


class TestExportEmbeddings:
    def test_layout_and_label_agreement(self, tmp_path):
        data = tiny_data()
        config = tiny_config()
        state, _ = train(data, config)
        path = tmp_path / "emb.csv"
        export_embeddings(state, data, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 24
        cells = lines[0].split(",")
        assert len(cells) == 2 * config.m + 1
        labels = np.array([int(line.rsplit(",", 1)[1]) for line in lines])
        np.testing.assert_array_equal(labels, infer(state, data).hard)

    def test_repeated_export_is_byte_identical(self, tmp_path):
        data = tiny_data()
        state, _ = train(data, tiny_config())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_embeddings(state, data, a)
        export_embeddings(state, data, b)
        assert a.read_bytes() == b.read_bytes()

    def test_head_only_mode_has_no_embeddings(self, tmp_path):
        data = tiny_data()
        state, _ = train(data, tiny_config(ablation="no_cau"))
        with pytest.raises(ValueError):
            export_embeddings(state, data, tmp_path / "emb.csv")

    def test_sample_count_mismatch_rejected(self, tmp_path):
        data = tiny_data()
        state, _ = train(data, tiny_config())
        half = MultiViewDataset(views=[v[:12] for v in data.views])
        with pytest.raises(ShapeError):
            export_embeddings(state, half, tmp_path / "emb.csv")


def example_report():
    return MetricReport(acc=0.75, nmi=0.5, purity=0.8, n_samples=4, k_true=2,
                        k_pred=2)


class TestWriters:
    def test_assignments_one_label_per_line(self, tmp_path):
        _, history = train(tiny_data(), tiny_config(epochs=0))
        path = tmp_path / "assignments.txt"
        write_assignments(path, history.final_assignment)
        lines = path.read_text().splitlines()
        assert len(lines) == 24
        assert all(line in {"0", "1", "2"} for line in lines)

    def test_metrics_file_echoes_config(self, tmp_path):
        path = tmp_path / "metrics.txt"
        write_metrics(path, example_report(), tiny_config())
        text = path.read_text()
        assert "acc = 0.75" in text
        assert "config.k = 3" in text
        assert "config.ablation = full" in text

    def test_history_blank_metric_cells_without_labels(self, tmp_path):
        data = tiny_data()
        unlabeled = MultiViewDataset(views=data.views, labels=None)
        _, history = train(unlabeled, tiny_config(epochs=2))
        path = tmp_path / "history.csv"
        write_history(path, history)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,total,l_r,l_elbo,l_c,anneal,acc,nmi,purity"
        assert len(lines) == 3
        assert lines[1].endswith(",,,")

    def test_sweep_and_ablation_tables(self, tmp_path):
        sweep_path = tmp_path / "sweep.csv"
        write_sweep(sweep_path, [SweepRow(ratio=0.5, report=example_report())])
        sweep_lines = sweep_path.read_text().splitlines()
        assert sweep_lines[0] == "ratio,acc,nmi,purity,n_samples,k_true,k_pred"
        assert sweep_lines[1] == "0.5,0.75,0.5,0.80000000000000004,4,2,2"
        ab_path = tmp_path / "ablation.csv"
        write_ablation(ab_path, [AblationRow(mode="full", report=example_report())])
        ab_lines = ab_path.read_text().splitlines()
        assert ab_lines[0] == "mode,acc,nmi,purity,n_samples,k_true,k_pred"
        assert ab_lines[1].startswith("full,0.75,")

    def test_writers_are_byte_deterministic(self, tmp_path):
        data = tiny_data()
        _, history = train(data, tiny_config(epochs=2))
        for writer, arg in (
            (write_history, history),
            (write_assignments, history.final_assignment),
        ):
            a, b = tmp_path / "a.out", tmp_path / "b.out"
            writer(a, arg)
            writer(b, arg)
            assert a.read_bytes() == b.read_bytes()


class TestConfigFormat:
    def test_serialize_parse_round_trip(self):
        config = tiny_config(alpha=0.25, warm_fraction=0.35, ablation="no_con")
        assert parse_config_text(serialize_config(config)) == config

    def test_comments_and_blank_lines_ignored(self):
        config = parse_config_text("# a comment\n\nk = 4  # trailing\nepochs=7\n")
        assert config.k == 4
        assert config.epochs == 7

    def test_rejects_malformed_entries(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config_text("k = 3\nbogus = 1\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("k = 3\nk = 4\n")
        with pytest.raises(ConfigError, match="empty value"):
            parse_config_text("k =\n")
        with pytest.raises(ConfigError, match="expects int"):
            parse_config_text("k = three\n")
        with pytest.raises(ConfigError, match="must set k"):
            parse_config_text("epochs = 5\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just words\n")

    def test_value_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(k=0)
        with pytest.raises(ConfigError):
            TrainConfig(k=2, batch_size=1)
        with pytest.raises(ConfigError):
            TrainConfig(k=2, warm_fraction=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(k=2, ablation="nope")
        with pytest.raises(ConfigError):
            TrainConfig(k=2, lr=0.0)

    def test_load_config_reads_files(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("k = 3\nepochs = 2\nbatch_size = 8\n")
        config = load_config(path)
        assert config.k == 3
        assert config.batch_size == 8


class TestCli:
    def write_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "k = 3\nh = 4\nd = 3\nm = 4\nepochs = 2\nbatch_size = 8\nseed = 0\n"
        )
        return str(path)

    def test_full_workflow(self, tmp_path, capsys):
        data_dir = str(tmp_path / "data")
        assert cli_main([
            "synth", "--out", data_dir, "--n", "24", "--k", "3",
            "--views", "2", "--dims", "5,4", "--separation", "8",
            "--noise", "0.3", "--seed", "0",
        ]) == 0
        mis_dir = str(tmp_path / "mis")
        assert cli_main([
            "inject", "--data", data_dir, "--out", mis_dir,
            "--ratio", "0.5", "--seed", "1",
        ]) == 0
        assert (tmp_path / "mis" / "alignment.json").exists()

        cfg = self.write_config(tmp_path)
        run_dir = tmp_path / "run"
        assert cli_main([
            "train", "--data", data_dir, "--config", cfg, "--out", str(run_dir),
        ]) == 0
        for name in ("model.ckpt", "history.csv", "assignments.txt",
                     "metrics.txt", "training_curves.png"):
            assert (run_dir / name).exists(), name

        infer_dir = tmp_path / "inferred"
        assert cli_main([
            "infer", "--checkpoint", str(run_dir / "model.ckpt"),
            "--data", data_dir, "--out", str(infer_dir),
        ]) == 0
        assert (infer_dir / "assignments.txt").read_text() == (
            run_dir / "assignments.txt"
        ).read_text()

        capsys.readouterr()
        assert cli_main([
            "eval", "--pred", str(infer_dir / "assignments.txt"),
            "--labels", str(tmp_path / "data" / "labels.csv"),
        ]) == 0
        out = capsys.readouterr().out
        assert "acc = " in out and "nmi = " in out

        sweep_dir = tmp_path / "sweep"
        assert cli_main([
            "sweep", "--data", data_dir, "--config", cfg,
            "--ratios", "0.9,1.0", "--out", str(sweep_dir),
        ]) == 0
        assert (sweep_dir / "sweep.csv").exists()
        assert (sweep_dir / "sweep.png").exists()

        ablate_dir = tmp_path / "ablate"
        assert cli_main([
            "ablate", "--data", data_dir, "--config", cfg,
            "--out", str(ablate_dir),
        ]) == 0
        assert (ablate_dir / "ablation.csv").exists()
        assert (ablate_dir / "ablation.png").exists()
        assert len((ablate_dir / "ablation.csv").read_text().splitlines()) == 5

        emb_path = tmp_path / "emb.csv"
        assert cli_main([
            "export-embeddings", "--checkpoint", str(run_dir / "model.ckpt"),
            "--data", data_dir, "--out", str(emb_path),
        ]) == 0
        assert len(emb_path.read_text().splitlines()) == 24

    def test_ablation_override_flag(self, tmp_path):
        data_dir = str(tmp_path / "data")
        cli_main([
            "synth", "--out", data_dir, "--n", "24", "--k", "3",
            "--views", "2", "--dims", "5,4", "--seed", "0",
        ])
        cfg = self.write_config(tmp_path)
        run_dir = tmp_path / "run"
        assert cli_main([
            "train", "--data", data_dir, "--config", cfg,
            "--out", str(run_dir), "--ablation", "no_cau_con",
        ]) == 0
        # warm-start-only runs have no epochs, so no curve figure
        assert not (run_dir / "training_curves.png").exists()

    def test_bad_input_prints_error_and_fails(self, tmp_path, capsys):
        code = cli_main([
            "train", "--data", str(tmp_path / "missing"),
            "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_ratio_list_rejected_by_parser(self, capsys):
        with pytest.raises(SystemExit):
            cli_main([
                "sweep", "--data", "x", "--config", "y",
                "--ratios", "0.5,banana", "--out", "z",
            ])
