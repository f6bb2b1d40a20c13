import filecmp
from pathlib import Path

import numpy as np
import pytest

from cisgraph.adaptive import AdaptiveConfig
from cisgraph.engine import (
    RunConfig,
    check_stop,
    run,
    write_run_outputs,
)
from cisgraph.geometry import Covering, read_cells_file
from cisgraph.graph import BuildPlan
from cisgraph.image import ImageConfig
from cisgraph.system import cstr_model, identity_model, linear_test_model, shift_model


def retained_union_1d(covering: Covering):
    if len(covering) == 0:
        return None
    return float(covering.lo[:, 0].min()), float(covering.hi[:, 0].max())


class TestRunBasics:
    def test_identity_retains_everything(self):
        res = run(RunConfig(model=identity_model(), iterations=5,
                            image=ImageConfig(2, 0.0)))
        assert res.termination == "iterations"
        assert res.covering.volume() == pytest.approx(1.0, rel=0)
        for m in res.metrics:
            assert m.cells_before == m.cells_after

    def test_shift_empties_after_first_iteration(self):
        res = run(RunConfig(model=shift_model(), iterations=5))
        assert res.termination == "empty"
        assert len(res.metrics) == 1
        assert res.metrics[0].cells_after == 0
        assert res.empty

    def test_linear_recovers_invariant_set(self):
        res = run(RunConfig(model=linear_test_model(2.0), iterations=10,
                            image=ImageConfig(3, 0.05)))
        lo, hi = retained_union_1d(res.covering)
        width = 2.0 / 2**10
        assert lo <= -0.5 and hi >= 0.5
        assert lo >= -0.5 - 4 * width and hi <= 0.5 + 4 * width

    def test_full_mode_doubles_before_retention(self):
        res = run(RunConfig(model=cstr_model(), iterations=6))
        for prev, cur in zip(res.metrics, res.metrics[1:]):
            assert cur.cells_before == 2 * prev.cells_after

    def test_bootstrap_splits_once_per_dimension(self):
        res = run(RunConfig(model=cstr_model(), iterations=1))
        assert res.metrics[0].cells_before == 4
        assert (res.covering.depths == 2).all()

    def test_monotone_shrinkage_flag(self):
        res = run(RunConfig(model=cstr_model(), iterations=6))
        assert res.containment_ok

    def test_adaptive_grows_slower_than_full(self):
        full = run(RunConfig(model=cstr_model(), iterations=9))
        adap = run(RunConfig(model=cstr_model(), iterations=9,
                             adaptive=AdaptiveConfig(mode="adaptive", n_neighbors=3)))
        assert len(adap.covering) < len(full.covering)
        assert adap.containment_ok

    def test_adaptive_full_mode_equivalence(self):
        # mode=full through the adaptive machinery reproduces the standard
        # covering sequence exactly
        a = run(RunConfig(model=cstr_model(), iterations=5,
                          adaptive=AdaptiveConfig(mode="full")))
        b = run(RunConfig(model=cstr_model(), iterations=5))
        assert np.array_equal(a.covering.bits, b.covering.bits)
        assert np.array_equal(a.covering.depths, b.covering.depths)

    def test_snapshots_and_final_graph(self):
        res = run(RunConfig(model=cstr_model(), iterations=4,
                            snapshot_iterations=(2, 3), keep_final_graph=True))
        assert set(res.snapshots) == {2, 3}
        assert res.final_graph is not None
        assert res.final_graph.n_vertices == res.metrics[-1].cells_before

    def test_parallel_plan_same_result(self):
        serial = run(RunConfig(model=cstr_model(), iterations=5))
        par = run(RunConfig(model=cstr_model(), iterations=5,
                            plan=BuildPlan(batch_size=16, workers=2)))
        assert np.array_equal(serial.covering.bits, par.covering.bits)
        assert [m.edges for m in serial.metrics] == [m.edges for m in par.metrics]


class TestCheckStop:
    def test_iteration_limit(self):
        cfg = RunConfig(model=identity_model(), iterations=20)
        cov = Covering.initial(identity_model().X)
        assert check_stop(20, cov, cfg) == "iterations"
        assert check_stop(19, cov, cfg) is None

    def test_diameter_threshold(self):
        cfg = RunConfig(model=identity_model(), iterations=50, min_diameter=0.3)
        cov = Covering.initial(identity_model().X)
        assert check_stop(1, cov, cfg) is None
        cov = cov.subdivide(None).subdivide(None)
        assert check_stop(2, cov, cfg) == "min_diameter"

    def test_empty_covering(self):
        cfg = RunConfig(model=identity_model(), iterations=50)
        cov = Covering.initial(identity_model().X).retain(np.array([], dtype=np.int64))
        assert check_stop(1, cov, cfg) == "empty"

    def test_min_diameter_terminates_run(self):
        res = run(RunConfig(model=identity_model(), iterations=50, min_diameter=0.1,
                            image=ImageConfig(2, 0.0)))
        assert res.termination == "min_diameter"
        assert res.covering.diameter() <= 0.1


class TestOutputs:
    def test_reproducible_outputs(self, tmp_path):
        cfg = dict(model=cstr_model(), iterations=5, keep_final_graph=True)
        a = write_run_outputs(run(RunConfig(**cfg)), tmp_path / "a", export_edges=True)
        b = write_run_outputs(run(RunConfig(**cfg)), tmp_path / "b", export_edges=True)
        for key in ("cells", "metrics", "summary", "edges"):
            assert filecmp.cmp(a[key], b[key], shallow=False), key

    def test_cells_file_status_column(self, tmp_path):
        res = run(RunConfig(model=cstr_model(), iterations=4))
        paths = write_run_outputs(res, tmp_path / "out")
        with open(paths["cells"]) as fp:
            cov, status = read_cells_file(fp)
        assert len(cov) == len(res.covering)
        assert set(status) <= {"boundary", "interior"}
        assert status.count("boundary") == int(res.boundary_mask.sum())

    def test_metrics_columns_deterministic(self, tmp_path):
        res = run(RunConfig(model=identity_model(), iterations=3,
                            image=ImageConfig(2, 0.0)))
        paths = write_run_outputs(res, tmp_path / "out")
        header = Path(paths["metrics"]).read_text().splitlines()[0]
        assert header.split("\t") == [
            "iteration", "cells_before", "cells_after", "edges",
            "boundary_cells", "diameter",
        ]
        timings_header = Path(paths["timings"]).read_text().splitlines()[0]
        assert timings_header.split("\t") == [
            "iteration", "t_subdivide_ms", "t_build_ms", "t_analyze_ms",
        ]

    def test_summary_contents(self, tmp_path):
        res = run(RunConfig(model=shift_model(), iterations=2))
        paths = write_run_outputs(res, tmp_path / "out")
        text = Path(paths["summary"]).read_text()
        assert "final_cells = 0" in text
        assert "termination = empty" in text

    def test_edges_require_kept_graph(self, tmp_path):
        res = run(RunConfig(model=identity_model(), iterations=2,
                            image=ImageConfig(2, 0.0)))
        with pytest.raises(ValueError):
            write_run_outputs(res, tmp_path / "out", export_edges=True)
