"""Grid archive tests, including the brute-force binning and replay oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gacqd import archive as arch
from gacqd.archive import Archive, GridSpec, grid_index
from gacqd.errors import EmptyArchiveError, NumericFault, ShapeError


def brute_force_bin(spec, descriptor):
    """Independent per-axis linear scan over cell edges."""
    cell = 0
    for axis in range(len(spec.dims)):
        n, lo, hi = spec.dims[axis], spec.lower[axis], spec.upper[axis]
        d = min(max(descriptor[axis], lo), hi)
        edges = [lo + (hi - lo) * k / n for k in range(1, n)]
        i = 0
        for edge in edges:
            if d >= edge:
                i += 1
        cell = cell * n + i
    return cell


class TestGridIndex:
    def test_floor_arithmetic(self):
        spec = GridSpec((10, 10), (0.0, 0.0), (1.0, 1.0))
        cell = grid_index(spec, [0.55, 0.21])
        assert arch.axis_indices(spec, cell) == (5, 2)

    def test_upper_bound_clamps_to_last_cell(self):
        spec = GridSpec((10,), (0.0,), (1.0,))
        assert grid_index(spec, [1.0]) == 9
        assert grid_index(spec, [2.5]) == 9
        assert grid_index(spec, [-1.0]) == 0

    def test_matches_brute_force_scan(self):
        spec = GridSpec((7, 13), (-0.5, 2.0), (1.5, 3.0))
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            d = rng.uniform([-1.0, 1.5], [2.0, 3.5])
            assert grid_index(spec, d) == brute_force_bin(spec, d)

    def test_nonfinite_descriptor_raises(self):
        spec = GridSpec((4,), (0.0,), (1.0,))
        with pytest.raises(NumericFault):
            grid_index(spec, [np.inf])

    def test_axis_round_trip(self):
        spec = GridSpec((3, 4, 5), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
        for cell in range(spec.total_cells):
            axes = arch.axis_indices(spec, cell)
            folded = 0
            for n, i in zip(spec.dims, axes):
                folded = folded * n + i
            assert folded == cell


class TestTryInsert:
    def spec(self):
        return GridSpec((5, 5), (0.0, 0.0), (1.0, 1.0))

    def test_empty_cell_accepts(self):
        a = Archive(self.spec())
        out = a.try_insert(np.zeros(3), 1.0, [0.1, 0.1], "init", 0)
        assert out.kind == "new_cell" and len(a) == 1

    def test_tie_keeps_incumbent(self):
        a = Archive(self.spec())
        a.try_insert(np.zeros(3), 5.0, [0.1, 0.1], "init", 0)
        out = a.try_insert(np.ones(3), 5.0, [0.1, 0.1], "ga", 1)
        assert out.kind == "rejected"
        assert np.array_equal(a.cells[out.cell].genotype, np.zeros(3))

    def test_improvement_replaces(self):
        a = Archive(self.spec())
        a.try_insert(np.zeros(3), 5.0, [0.1, 0.1], "init", 0)
        out = a.try_insert(np.ones(3), 6.5, [0.1, 0.1], "pg", 2)
        assert out.kind == "improved"
        assert out.fitness_delta == pytest.approx(1.5)
        assert a.cells[out.cell].generation_added == 2

    def test_nonfinite_fitness_raises(self):
        a = Archive(self.spec())
        with pytest.raises(NumericFault):
            a.try_insert(np.zeros(3), np.nan, [0.1, 0.1], "init", 0)

    def test_insert_copies_genotype(self):
        a = Archive(self.spec())
        g = np.zeros(3)
        out = a.try_insert(g, 1.0, [0.1, 0.1], "actor", 0)
        g[:] = 99.0
        assert np.array_equal(a.cells[out.cell].genotype, np.zeros(3))

    def test_replay_oracle_over_random_insertions(self):
        spec = GridSpec((6, 6), (0.0, 0.0), (1.0, 1.0))
        a = Archive(spec)
        rng = np.random.default_rng(1)
        log = []
        for k in range(1000):
            desc = rng.random(2)
            fit = float(rng.normal())
            a.try_insert(np.array([float(k)]), fit, desc, "ga", k)
            log.append((desc, fit, k))
        # brute-force per-cell max over the log (first maximum wins ties)
        best = {}
        for desc, fit, k in log:
            cell = brute_force_bin(spec, desc)
            if cell not in best or fit > best[cell][0]:
                best[cell] = (fit, k)
        assert set(a.cells) == set(best)
        for cell, (fit, k) in best.items():
            assert a.cells[cell].fitness == fit
            assert np.array_equal(a.cells[cell].genotype, [float(k)])

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1),
                              st.floats(-100, 100)), max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_per_cell_fitness_never_decreases(self, inserts):
        a = Archive(GridSpec((3, 3), (0.0, 0.0), (1.0, 1.0)))
        history: dict[int, float] = {}
        for i, (dx, dy, fit) in enumerate(inserts):
            before = dict(history)
            out = a.try_insert(np.zeros(1), fit, [dx, dy], "ga", i)
            history[out.cell] = a.cells[out.cell].fitness
            for cell, old in before.items():
                assert a.cells[cell].fitness >= old
                if cell != out.cell:
                    assert a.cells[cell].fitness == old


class TestSelection:
    def test_single_elite_always_selected(self):
        a = Archive(GridSpec((4,), (0.0,), (1.0,)))
        a.try_insert(np.array([7.0]), 1.0, [0.2], "init", 0)
        picks = a.select_uniform(np.random.default_rng(0), 3)
        assert len(picks) == 3
        assert all(np.array_equal(p.genotype, [7.0]) for p in picks)

    def test_two_elites_are_uniform(self):
        a = Archive(GridSpec((4,), (0.0,), (1.0,)))
        a.try_insert(np.array([0.0]), 1.0, [0.1], "init", 0)
        a.try_insert(np.array([1.0]), 1.0, [0.9], "init", 0)
        picks = a.select_uniform(np.random.default_rng(1), 100_000)
        freq = np.mean([p.genotype[0] for p in picks])
        assert abs(freq - 0.5) < 0.01

    def test_k_zero_gives_empty(self):
        a = Archive(GridSpec((4,), (0.0,), (1.0,)))
        a.try_insert(np.array([0.0]), 1.0, [0.1], "init", 0)
        assert a.select_uniform(np.random.default_rng(2), 0) == []

    def test_empty_archive_raises(self):
        a = Archive(GridSpec((4,), (0.0,), (1.0,)))
        with pytest.raises(EmptyArchiveError):
            a.select_uniform(np.random.default_rng(3), 1)


class TestMetrics:
    def test_empty_archive(self):
        m = Archive(GridSpec((10, 10), (0.0, 0.0), (1.0, 1.0))).metrics(0.0)
        assert m.qd_score == 0.0 and m.coverage == 0.0 and m.max_fitness is None

    def test_two_elites_direct_sums(self):
        a = Archive(GridSpec((10, 10), (0.0, 0.0), (1.0, 1.0)))
        a.try_insert(np.zeros(1), 3.0, [0.05, 0.05], "init", 0)
        a.try_insert(np.zeros(1), 5.0, [0.95, 0.95], "init", 0)
        m = a.metrics(0.0)
        assert m.qd_score == 8.0
        assert m.coverage == pytest.approx(0.02)
        assert m.max_fitness == 5.0

    def test_metrics_match_recount_from_dump(self, tmp_path):
        a = Archive(GridSpec((8, 8), (0.0, 0.0), (1.0, 1.0)))
        rng = np.random.default_rng(5)
        for k in range(200):
            a.try_insert(rng.normal(size=4), float(rng.normal()), rng.random(2),
                         "ga", k)
        arch.dump_archive(a, tmp_path / "a.csv", tmp_path / "a.bin")
        qd = 0.0
        count = 0
        fits = []
        for line in (tmp_path / "a.csv").read_text().splitlines():
            if line.startswith("#") or line.startswith("cell_index"):
                continue
            fit = float(line.split(",")[3])
            qd += fit - (-1.5)
            fits.append(fit)
            count += 1
        m = a.metrics(-1.5)
        assert m.qd_score == pytest.approx(qd, rel=1e-12)
        assert m.coverage == count / 64
        assert m.max_fitness == max(fits)


class TestDumpRoundTrip:
    def test_round_trip_bit_exact(self, tmp_path):
        a = Archive(GridSpec((5, 7), (-1.0, 0.0), (1.0, 2.0)))
        rng = np.random.default_rng(9)
        for k in range(80):
            a.try_insert(rng.normal(size=6), float(rng.normal()),
                         rng.uniform([-1, 0], [1, 2]), "pg", k)
        arch.dump_archive(a, tmp_path / "a.csv", tmp_path / "a.bin",
                          header_lines=["key=value"])
        b = arch.load_archive(tmp_path / "a.csv", tmp_path / "a.bin")
        assert b.spec == a.spec
        assert set(b.cells) == set(a.cells)
        for cell, e in a.cells.items():
            r = b.cells[cell]
            assert r.genotype.tobytes() == e.genotype.tobytes()
            assert r.fitness == e.fitness
            assert r.source == e.source and r.generation_added == e.generation_added
        ma, mb = a.metrics(0.0), b.metrics(0.0)
        assert (ma.qd_score, ma.coverage, ma.max_fitness) == \
            (mb.qd_score, mb.coverage, mb.max_fitness)

    def test_dump_is_deterministic(self, tmp_path):
        a = Archive(GridSpec((4, 4), (0.0, 0.0), (1.0, 1.0)))
        rng = np.random.default_rng(2)
        for k in range(30):
            a.try_insert(rng.normal(size=3), float(rng.normal()), rng.random(2),
                         "ga", k)
        arch.dump_archive(a, tmp_path / "x.csv", tmp_path / "x.bin")
        arch.dump_archive(a, tmp_path / "y.csv", tmp_path / "y.bin")
        assert (tmp_path / "x.csv").read_bytes() == (tmp_path / "y.csv").read_bytes()
        assert (tmp_path / "x.bin").read_bytes() == (tmp_path / "y.bin").read_bytes()


class TestGridValidation:
    def test_bad_bounds(self):
        with pytest.raises(ShapeError):
            GridSpec((4,), (1.0,), (0.0,))

    def test_mismatched_lengths(self):
        with pytest.raises(ShapeError):
            GridSpec((4, 4), (0.0,), (1.0,))
