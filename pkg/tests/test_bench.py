import numpy as np
import pytest

from cisgraph.bench import (
    brute_force_cis_1d,
    brute_force_graph,
    linear_cis_oracle,
    replicate_paper_experiments,
)
from cisgraph.geometry import Covering
from cisgraph.image import ImageConfig
from cisgraph.system import identity_model, linear_test_model, sample_inputs, shift_model


class TestCis1dOracle:
    def test_expanding_linear_map(self):
        # fixed point of the one-step feasibility deletion: the boundary s
        # solves 2s - 0.5 = s, so the largest invariant set is [-0.5, 0.5]
        intervals = brute_force_cis_1d(linear_test_model(2.0), 1e-4)
        assert len(intervals) == 1
        lo, hi = intervals[0]
        assert lo == pytest.approx(-0.5, abs=2e-4)
        assert hi == pytest.approx(0.5, abs=2e-4)
        oracle = linear_cis_oracle(2.0, 0.5)
        assert oracle.contains(0.499) and not oracle.contains(0.501)

    def test_identity_keeps_everything(self):
        intervals = brute_force_cis_1d(identity_model(), 1e-3)
        assert intervals == [(0.0, 1.0)]

    def test_shift_empties(self):
        assert brute_force_cis_1d(shift_model(), 1e-3) == []

    def test_rejects_2d_models(self):
        from cisgraph.system import cstr_model

        with pytest.raises(ValueError):
            brute_force_cis_1d(cstr_model(), 1e-3)


class TestBruteForceGraph:
    def test_identity_self_loops(self):
        m = identity_model()
        cov = Covering.initial(m.X)
        for _ in range(3):
            cov = cov.subdivide(None)
        g = brute_force_graph(cov, m, sample_inputs(m.U, 2), ImageConfig(2, 0.0))
        assert g.self_loop_mask().all()

    def test_empty_covering(self):
        m = identity_model()
        cov = Covering.initial(m.X).retain(np.array([], dtype=np.int64))
        g = brute_force_graph(cov, m, sample_inputs(m.U, 2), ImageConfig(2, 0.0))
        assert g.n_vertices == 0 and g.edge_count == 0

    def test_size_cap(self):
        m = identity_model()
        cov = Covering.initial(m.X)
        for _ in range(11):
            cov = cov.subdivide(None)
        with pytest.raises(ValueError, match="capped"):
            brute_force_graph(cov, m, sample_inputs(m.U, 2), ImageConfig(2, 0.0))

    def test_matches_serial_builder_on_random_instances(self):
        from cisgraph.graph import build_graph_serial
        from conftest import random_covering

        rng = np.random.default_rng(61)
        for _ in range(8):
            a = float(rng.uniform(1.2, 3.0))
            m = linear_test_model(a)
            cov = random_covering(rng, m.X, rounds=int(rng.integers(3, 7)),
                                  keep_fraction=0.8)
            inputs = sample_inputs(m.U, 3)
            cfg = ImageConfig(int(rng.integers(2, 4)), float(rng.uniform(0, 0.2)))
            got = build_graph_serial(cov, cov.build_index(), m, inputs, cfg)
            want = brute_force_graph(cov, m, inputs, cfg)
            assert got.same_edges(want)


class TestReplication:
    def test_quick_report(self, tmp_path):
        report = replicate_paper_experiments(
            tmp_path, iterations=8, parallel_iterations=6, n_values=(0, 3),
            workers=(1, 2), quick=True,
        )
        assert (tmp_path / "report.tsv").exists()
        assert (tmp_path / "summary.txt").exists()
        assert report["adaptive_speedup"] > 0
        rows = {r["experiment"]: r for r in report["rows"]}
        assert rows["sweep_N_3"]["final_cells"] < rows["sweep_N_full"]["final_cells"]
        lines = (tmp_path / "report.tsv").read_text().splitlines()
        assert lines[0].split("\t")[0] == "experiment"
        assert len(lines) == 1 + len(report["rows"])
