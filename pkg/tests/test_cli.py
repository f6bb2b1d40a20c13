import filecmp
import os
from pathlib import Path

import numpy as np
import pytest

from cisgraph.cli import EXIT_CONFIG, EXIT_EMPTY, EXIT_OK, EXIT_RUNTIME, main
from cisgraph.config import (
    ConfigError,
    parse_config_text,
    render_config,
    resolve_config,
)


def run_cli(*args) -> int:
    return main(list(args))


class TestConfig:
    def test_parse_and_render_roundtrip(self):
        text = "iterations = 12\nmodel = linear\nlinear.a = 2.0\n"
        values = parse_config_text(text)
        assert values == {"iterations": "12", "model": "linear", "linear.a": "2.0"}
        assert parse_config_text(render_config(values)) == values

    def test_comments_and_blanks(self):
        values = parse_config_text("# a comment\n\nmode = adaptive  # trailing\n")
        assert values == {"mode": "adaptive"}

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"cell_count": "4"})
        assert "cell_count" in str(err.value)

    def test_bad_value_named(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"iterations": "many"})
        assert "iterations" in str(err.value)

    def test_model_param_mismatch(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"model": "cstr", "linear.a": "2"})
        assert "linear.a" in str(err.value)

    def test_flags_win_over_file(self):
        resolved = resolve_config({"iterations": "5"}, {"iterations": "7"})
        assert resolved.run_config.iterations == 7

    def test_workers_env_override(self, monkeypatch):
        monkeypatch.setenv("CISGRAPH_WORKERS", "3")
        resolved = resolve_config({}, {"workers": "1"})
        assert resolved.run_config.plan.workers == 3
        assert resolved.effective["workers"] == "3"

    def test_defaults_match_documented_values(self):
        resolved = resolve_config({})
        rc = resolved.run_config
        assert rc.model.name == "cstr"
        assert rc.iterations == 20
        assert rc.adaptive.n_neighbors == 3
        assert rc.image.samples_per_dim == 3 and rc.image.bloat == 0.1
        assert rc.plan.batch_size == 1024


class TestRunCommand:
    def test_successful_run_and_outputs(self, tmp_path):
        out = tmp_path / "lin"
        code = run_cli("run", "--model", "linear", "--iterations", "6",
                       "--bloat", "0.05", "--output-dir", str(out))
        assert code == EXIT_OK
        for name in ("final.cells", "metrics.tsv", "timings.tsv", "summary.txt",
                     "effective.cfg"):
            assert (out / name).exists()

    def test_empty_result_exit_code(self, tmp_path):
        code = run_cli("run", "--model", "shift", "--iterations", "3",
                       "--output-dir", str(tmp_path / "sh"))
        assert code == EXIT_EMPTY

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        code = run_cli("run", "--model", "linear", "--set", "linear.q=1",
                       "--output-dir", str(tmp_path / "x"))
        assert code == EXIT_CONFIG
        assert "linear.q" in capsys.readouterr().err

    def test_runtime_failure_exit_code(self, tmp_path):
        code = run_cli("hull", str(tmp_path / "missing.cells"), "-o",
                       str(tmp_path / "hull.txt"))
        assert code == EXIT_RUNTIME

    def test_config_file_roundtrip_reproduces_outputs(self, tmp_path):
        first = tmp_path / "first"
        code = run_cli("run", "--model", "linear", "--iterations", "7",
                       "--bloat", "0.05", "--N", "2", "--mode", "adaptive",
                       "--output-dir", str(first), "--export-edges")
        assert code == EXIT_OK
        second = tmp_path / "second"
        code = run_cli("run", "--config", str(first / "effective.cfg"),
                       "--output-dir", str(second), "--export-edges")
        assert code == EXIT_OK
        for name in ("final.cells", "metrics.tsv", "edges.tsv", "effective.cfg"):
            assert filecmp.cmp(first / name, second / name, shallow=False), name


class TestSweepCommand:
    def test_n_sweep_with_full_token(self, tmp_path):
        out = tmp_path / "sweep"
        code = run_cli("sweep", "--model", "linear", "--iterations", "5",
                       "--bloat", "0.05", "--N", "0,full",
                       "--output-dir", str(out))
        assert code == EXIT_OK
        assert (out / "N_0" / "final.cells").exists()
        assert (out / "N_full" / "final.cells").exists()
        table = (out / "sweep.tsv").read_text().splitlines()
        assert table[0].startswith("point\titeration")
        points = {line.split("\t")[0] for line in table[1:]}
        assert points == {"N_0", "N_full"}
        # the full-token point must run in full mode
        cfg = parse_config_text((out / "N_full" / "effective.cfg").read_text())
        assert cfg["mode"] == "full"

    def test_worker_sweep(self, tmp_path):
        out = tmp_path / "wsweep"
        code = run_cli("sweep", "--model", "linear", "--iterations", "4",
                       "--bloat", "0.05", "--workers", "1,2",
                       "--output-dir", str(out))
        assert code == EXIT_OK
        a = (out / "workers_1" / "final.cells").read_bytes()
        b = (out / "workers_2" / "final.cells").read_bytes()
        assert a == b


class TestHullAndCompare:
    @pytest.fixture()
    def cstr_cells(self, tmp_path):
        out = tmp_path / "cstr"
        assert run_cli("run", "--model", "cstr", "--iterations", "5",
                       "--output-dir", str(out)) == EXIT_OK
        return out / "final.cells"

    def test_hull_output(self, tmp_path, cstr_cells):
        hull_path = tmp_path / "hull.txt"
        assert run_cli("hull", str(cstr_cells), "-o", str(hull_path)) == EXIT_OK
        lines = [l for l in hull_path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == lines[-1] and len(lines) >= 4

    def test_compare_identical_is_zero(self, capsys, cstr_cells):
        assert run_cli("compare", str(cstr_cells), str(cstr_cells)) == EXIT_OK
        assert float(capsys.readouterr().out.splitlines()[-1]) == 0.0

    def test_compare_detects_difference(self, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        run_cli("run", "--model", "linear", "--iterations", "5", "--bloat", "0.05",
                "--output-dir", str(a))
        run_cli("run", "--model", "linear", "--iterations", "6", "--bloat", "0.05",
                "--output-dir", str(b))
        assert run_cli("compare", str(a / "final.cells"), str(b / "final.cells")) == EXIT_OK
        assert float(capsys.readouterr().out.splitlines()[-1]) > 0.0
