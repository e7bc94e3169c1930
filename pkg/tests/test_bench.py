"""Tests for config parsing, the experiment runner, record emission, compare, and the CLI."""

import json

import pytest

from adaplus import bench, cli
from adaplus.bench import (
    LogRow,
    RunRecord,
    RunSummary,
    compare,
    config_to_text,
    emit,
    load_record,
    parse_config,
    record_to_csv,
    run,
)
from adaplus.errors import ConfigError

QUAD_CONFIG = """
# one-dimensional convex sanity run
problem = quadratic
problem.dim = 1
optimizer = adaplus
epochs = 1
steps_per_epoch = 500
seeds = 1
log_every = 50
"""

LGSC_TEMPLATE = """
problem = large_grad_small_curvature
problem.g_mag = 10.0
problem.curvature = 1e-3
optimizer = {optimizer}
weight_decay = 0.0
epochs = 1
steps_per_epoch = 50
seeds = 1
log_every = 1
theta0 = zeros
"""


class TestParseConfig:
    def test_parses_full_config(self):
        config = parse_config(QUAD_CONFIG)
        assert config.problem == "quadratic"
        assert dict(config.problem_params) == {"dim": 1, "condition_number": 1.0}
        assert config.optimizer == "adaplus"
        assert config.epochs == 1
        assert config.steps_per_epoch == 500
        assert config.seeds == (1,)
        assert config.log_every == 50
        assert config.hp.lr == 1e-3
        assert config.schedule.milestones == ()
        assert config.noise.kind == "none"
        assert config.theta0 == "seeded"

    def test_round_trip_through_canonical_text(self):
        config = parse_config(QUAD_CONFIG)
        assert parse_config(config_to_text(config)) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            parse_config(QUAD_CONFIG + "\nmomentum = 0.9\n")

    def test_wrong_problem_param_rejected(self):
        bad = QUAD_CONFIG.replace("problem.dim = 1", "problem.dim = 1\nproblem.margin = 0.5")
        with pytest.raises(ConfigError, match="unknown config keys"):
            parse_config(bad)

    def test_missing_required_key_rejected(self):
        with pytest.raises(ConfigError, match="missing required key 'seeds'"):
            parse_config(QUAD_CONFIG.replace("seeds = 1", ""))

    def test_unknown_optimizer_rejected(self):
        with pytest.raises(ConfigError, match="unknown optimizer"):
            parse_config(QUAD_CONFIG.replace("optimizer = adaplus", "optimizer = lion"))

    def test_unknown_problem_rejected(self):
        with pytest.raises(ConfigError, match="unknown problem"):
            parse_config(QUAD_CONFIG.replace("problem = quadratic", "problem = cifar10"))

    def test_duplicate_seeds_rejected(self):
        with pytest.raises(ConfigError, match="unique"):
            parse_config(QUAD_CONFIG.replace("seeds = 1", "seeds = 3,3"))

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config(QUAD_CONFIG + "\nepochs = 2\n")

    def test_bad_hyperparameter_becomes_config_error(self):
        with pytest.raises(ConfigError, match="beta1"):
            parse_config(QUAD_CONFIG + "\nbeta1 = 1.0\n")

    def test_hash_is_stable_and_ignores_formatting(self):
        config = parse_config(QUAD_CONFIG)
        reparsed = parse_config("# different comments\n" + QUAD_CONFIG.replace(" = ", "="))
        assert config.config_hash() == reparsed.config_hash()
        assert len(config.config_hash()) == 64

    def test_hash_changes_with_values(self):
        a = parse_config(QUAD_CONFIG)
        b = parse_config(QUAD_CONFIG.replace("seeds = 1", "seeds = 4"))
        assert a.config_hash() != b.config_hash()


class TestRun:
    def test_one_dimensional_quadratic_converges(self):
        record = run(parse_config(QUAD_CONFIG))
        assert not record.summary.aborted
        assert record.summary.final_loss < 1e-6

    def test_identical_configs_give_identical_records(self):
        config = parse_config(QUAD_CONFIG)
        a, b = run(config), run(config)
        assert a.rows == b.rows
        assert a.config_hash == b.config_hash
        assert record_to_csv(a) == record_to_csv(b)

    def test_rows_strictly_ordered_and_log_every_respected(self):
        config = parse_config(QUAD_CONFIG.replace("seeds = 1", "seeds = 5,2"))
        record = run(config)
        keys = [(r.seed, r.epoch, r.step) for r in record.rows]
        assert keys == sorted(keys)
        # 500 steps logged every 50 -> 10 rows per seed
        assert len(record.rows) == 20
        assert {r.step for r in record.rows} == {50, 100, 150, 200, 250, 300, 350, 400, 450, 500}

    def test_schedule_drop_shows_in_lr_column(self):
        text = QUAD_CONFIG.replace("epochs = 1", "epochs = 10").replace(
            "steps_per_epoch = 500", "steps_per_epoch = 10"
        ).replace("log_every = 50", "log_every = 10") + "milestones = 5\n"
        record = run(parse_config(text))
        lrs = {r.epoch: r.lr for r in record.rows}
        for epoch in range(10):
            expected = 1e-3 if epoch < 5 else 1e-4
            assert lrs[epoch] == pytest.approx(expected, rel=1e-15)

    def test_parallel_replicas_match_sequential(self, monkeypatch):
        config = parse_config(QUAD_CONFIG.replace("seeds = 1", "seeds = 1,2,3,4"))
        sequential = run(config)
        monkeypatch.setenv(bench.PARALLELISM_ENV, "4")
        parallel = run(config)
        assert sequential.rows == parallel.rows

    def test_aborting_run_is_flagged_with_partial_rows(self):
        # a huge rate on the banana function overflows within a few steps
        text = """
problem = rosenbrock
problem.dim = 2
optimizer = sgdm
lr = 1e6
epochs = 1
steps_per_epoch = 100
seeds = 1
log_every = 1
"""
        record = run(parse_config(text))
        assert record.summary.aborted
        assert "seed 1" in record.summary.abort_reason
        assert len(record.rows) < 100


class TestEmit:
    def make_record(self, rows):
        return RunRecord(
            config_hash="f" * 64,
            problem_id="quadratic(dim=1)",
            optimizer_id="adam",
            config=(("problem", "quadratic"),),
            rows=tuple(rows),
            summary=RunSummary(final_loss=1.0, best_loss=0.5, wall_time_s=0.1),
        )

    def test_empty_record_gives_header_only_csv(self):
        assert record_to_csv(self.make_record([])) == "seed,epoch,step,lr,loss,grad_norm,param_norm\n"

    def test_three_rows_give_four_csv_lines(self):
        rows = [LogRow(1, 0, i, 1e-3, 1.0 / (i + 1), 0.1, 2.0) for i in range(3)]
        text = record_to_csv(self.make_record(rows))
        assert len(text.splitlines()) == 4

    def test_csv_has_17_significant_digit_decimals(self):
        rows = [LogRow(1, 0, 1, 1e-3, 1.0 / 3.0, 0.1, 2.0)]
        line = record_to_csv(self.make_record(rows)).splitlines()[1]
        assert line.split(",")[4] == f"{1.0 / 3.0:.17g}"

    def test_csv_values_round_trip_losslessly(self):
        record = run(parse_config(QUAD_CONFIG))
        lines = record_to_csv(record).splitlines()[1:]
        for line, row in zip(lines, record.rows):
            seed, epoch, step, lr, loss, grad_norm, param_norm = line.split(",")
            assert (int(seed), int(epoch), int(step)) == (row.seed, row.epoch, row.step)
            assert float(lr) == row.lr
            assert float(loss) == row.loss
            assert float(grad_norm) == row.grad_norm
            assert float(param_norm) == row.param_norm

    def test_json_round_trip(self, tmp_path):
        record = run(parse_config(QUAD_CONFIG))
        path = tmp_path / "record.json"
        emit(record, "json", path)
        assert load_record(path) == record

    def test_aborted_record_refuses_csv(self, tmp_path):
        record = self.make_record([])
        flagged = RunRecord(
            config_hash=record.config_hash,
            problem_id=record.problem_id,
            optimizer_id=record.optimizer_id,
            config=record.config,
            rows=record.rows,
            summary=RunSummary(1.0, 0.5, 0.1, aborted=True, abort_reason="boom"),
        )
        with pytest.raises(ValueError, match="aborted"):
            emit(flagged, "csv", tmp_path / "x.csv")
        emit(flagged, "json", tmp_path / "x.json")
        assert load_record(tmp_path / "x.json").summary.aborted

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="format"):
            emit(self.make_record([]), "yaml", tmp_path / "x.yaml")


class TestCompare:
    def test_single_record_table_equals_summary(self):
        record = run(parse_config(QUAD_CONFIG))
        table = compare([record])
        assert len(table.rows) == 1
        row = table.rows[0]
        assert row.final_mean == pytest.approx(record.summary.final_loss, rel=1e-15)
        assert row.best_mean == pytest.approx(record.summary.best_loss, rel=1e-15)
        assert table.best_final_label == "adaplus"

    def test_zero_stddev_for_identical_trajectories(self):
        # fixed start, no noise: both seeds trace the same trajectory
        text = QUAD_CONFIG.replace("seeds = 1", "seeds = 1,2") + "theta0 = zeros\n"
        record = run(parse_config(text))
        table = compare([record])
        assert table.rows[0].final_std == 0.0
        assert table.rows[0].best_std == 0.0

    def test_mismatched_problems_rejected(self):
        a = run(parse_config(QUAD_CONFIG))
        b = run(parse_config(QUAD_CONFIG.replace("problem.dim = 1", "problem.dim = 2")))
        with pytest.raises(ConfigError, match="different problems"):
            compare([a, b])

    def test_belief_kernel_beats_variance_kernel_on_ramp(self):
        records = [
            run(parse_config(LGSC_TEMPLATE.format(optimizer=opt)))
            for opt in ("adaplus", "adamw")
        ]
        table = compare(records)
        assert table.best_final_label == "adaplus"
        by_label = {row.label: row for row in table.rows}
        assert by_label["adaplus"].final_mean < by_label["adamw"].final_mean

    def test_render_marks_best(self):
        records = [
            run(parse_config(LGSC_TEMPLATE.format(optimizer=opt)))
            for opt in ("adaplus", "adamw")
        ]
        text = compare(records).render()
        lines = text.splitlines()
        assert lines[0].startswith("problem: large_grad_small_curvature")
        adaplus_line = next(line for line in lines if line.startswith("adaplus"))
        assert "*" in adaplus_line


class TestCli:
    def write_config(self, tmp_path, text, name="run.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_run_writes_csv_and_exits_zero(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, QUAD_CONFIG)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        produced = out / "run.csv"
        assert produced.exists()
        assert produced.read_text().splitlines()[0] == bench.CSV_HEADER
        assert "final loss" in capsys.readouterr().out

    def test_run_is_byte_identical_across_executions(self, tmp_path):
        cfg = self.write_config(tmp_path, QUAD_CONFIG)
        cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
        cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "run.csv").read_bytes() == (tmp_path / "b" / "run.csv").read_bytes()

    def test_bad_config_exits_one(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, QUAD_CONFIG + "\nbogus = 1\n")
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_config_file_exits_one(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 1

    def test_numerical_abort_exits_two_and_flags_output(self, tmp_path, capsys):
        text = """
problem = rosenbrock
problem.dim = 2
optimizer = sgdm
lr = 1e6
epochs = 1
steps_per_epoch = 100
seeds = 1
log_every = 1
"""
        cfg = self.write_config(tmp_path, text, name="diverge.cfg")
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--format", "csv"]) == 2
        flagged = out / "diverge.aborted.json"
        assert flagged.exists()
        assert json.loads(flagged.read_text())["summary"]["aborted"] is True
        assert not (out / "diverge.csv").exists()

    def test_compare_command(self, tmp_path, capsys):
        paths = []
        for opt in ("adaplus", "adamw"):
            cfg = self.write_config(tmp_path, LGSC_TEMPLATE.format(optimizer=opt), name=f"{opt}.cfg")
            cli.main(["run", "--config", str(cfg), "--out", str(tmp_path), "--format", "json"])
            paths.append(str(tmp_path / f"{opt}.json"))
        capsys.readouterr()
        table_out = tmp_path / "table.txt"
        assert cli.main(["compare", "--inputs", *paths, "--out", str(table_out)]) == 0
        text = table_out.read_text()
        assert "adaplus" in text and "adamw" in text
        assert capsys.readouterr().out.startswith("problem:")

    def test_compare_mismatched_problems_exits_one(self, tmp_path, capsys):
        cfg_a = self.write_config(tmp_path, QUAD_CONFIG, name="a.cfg")
        cfg_b = self.write_config(
            tmp_path, QUAD_CONFIG.replace("problem.dim = 1", "problem.dim = 2"), name="b.cfg"
        )
        for cfg in (cfg_a, cfg_b):
            cli.main(["run", "--config", str(cfg), "--out", str(tmp_path), "--format", "json"])
        code = cli.main(
            ["compare", "--inputs", str(tmp_path / "a.json"), str(tmp_path / "b.json")]
        )
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_selftest_passes(self, capsys):
        assert cli.main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "selftest: OK" in out
        assert out.count("PASS") >= 10

    def test_usage_errors_exit_one(self, tmp_path, capsys):
        # exit code 2 is reserved for numerical aborts
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--config"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--config", "x", "--out", str(tmp_path), "--format", "xml"])
        assert exc.value.code == 1
