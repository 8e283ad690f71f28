import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relbolt.equilibrium import JuttnerParams, juttner_eval
from relbolt.grid import GridFunction, MomentumGrid
from relbolt.initial import InitialCondition
from relbolt.io import CSV_COLUMNS, MAGIC, CsvWriter, FormatError, read_csv, read_state, write_state
from relbolt.solver import DiagnosticsRecord


def _record(t):
    return DiagnosticsRecord(t, 1.0 / 3.0, (0.1, -0.2, 1e-17), 2.5, -1.25, 0.5, 1.0, 2.0, 3.0, 4.0, 0.125, 0.0, 3)


class TestCsv:
    def test_round_trip_is_exact(self, tmp_path):
        path = tmp_path / "d.csv"
        with CsvWriter(path) as w:
            for t in (0.0, 0.1, 0.2):
                w.write(_record(t))
        assert path.read_text().splitlines()[0] == f"# {MAGIC}"
        data = read_csv(path)
        assert tuple(data) == CSV_COLUMNS
        assert_allclose(data["t"], [0.0, 0.1, 0.2], rtol=0, atol=0)
        assert data["mass"][0] == 1.0 / 3.0
        assert data["pz"][0] == 1e-17
        assert data["cap_count"][2] == 3

    def test_missing_magic(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("t,mass\n0,1\n")
        with pytest.raises(FormatError):
            read_csv(path)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(f"# {MAGIC}\nt,mass\n0,1\n")
        with pytest.raises(FormatError):
            read_csv(path)


class TestState:
    def test_round_trip(self, tmp_path, rng):
        grid = MomentumGrid(5, 2.5)
        f = GridFunction(grid, rng.random(grid.shape))
        path = tmp_path / "s.bin"
        write_state(path, f, 3.0, t=0.25)
        g, header = read_state(path)
        assert g.grid == grid
        assert np.array_equal(g.values, f.values)
        assert header == {"n_per_axis": 5, "p_max": 2.5, "rho": 3.0, "t": 0.25}
        assert not (tmp_path / "s.bin.tmp").exists()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "s.bin"
        path.write_bytes(b"NOTMAGIC\n{}\n")
        with pytest.raises(FormatError, match="magic"):
            read_state(path)

    def test_truncated_payload(self, tmp_path):
        grid = MomentumGrid(3, 1.0)
        path = tmp_path / "s.bin"
        write_state(path, GridFunction.zeros(grid), 0.0)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="bytes"):
            read_state(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "s.bin"
        path.write_bytes(f"{MAGIC}\n{{\"p_max\": 1}}\n".encode())
        with pytest.raises(FormatError, match="header"):
            read_state(path)


class TestInitialCondition:
    grid = MomentumGrid(6, 3.0)

    def test_juttner(self):
        f = InitialCondition("juttner", {"n": 2.0, "theta": 0.5}).build(self.grid)
        assert_allclose(f.values, juttner_eval(JuttnerParams(2.0, 0.5), self.grid.nodes))

    def test_two_bump_is_sum(self):
        ic = InitialCondition("two_bump", {"u1": (0.5, 0, 0), "u2": (0, 0.5, 0)})
        a = juttner_eval(JuttnerParams.from_velocity(0.5, 0.5, (0.5, 0, 0)), self.grid.nodes)
        b = juttner_eval(JuttnerParams.from_velocity(0.5, 0.5, (0, 0.5, 0)), self.grid.nodes)
        assert_allclose(ic.build(self.grid).values, a + b)

    def test_box(self):
        f = InitialCondition("box", {"value": 0.3, "half_width": 1.0}).build(self.grid)
        assert_allclose(f.integrate(), 0.3 * 8.0)

    def test_truncated(self):
        eps = 0.05
        f = InitialCondition("truncated", {"eps": eps, "base": "juttner", "theta": 0.05}).build(self.grid)
        base = InitialCondition("juttner", {"theta": 0.05}).build(self.grid).values
        expected = np.minimum(base, 1 / eps) + eps * np.exp(-self.grid.energies)
        assert_allclose(f.values, expected)
        assert f.values.max() <= 1 / eps + eps
        assert f.values.min() > 0

    def test_file(self, tmp_path):
        f = InitialCondition("box").build(self.grid)
        path = tmp_path / "s.bin"
        write_state(path, f, 0.0)
        g = InitialCondition("file", {"path": str(path)}).build(self.grid)
        assert np.array_equal(f.values, g.values)
        with pytest.raises(ValueError, match="init.path"):
            InitialCondition("file", {"path": str(path)}).build(MomentumGrid(4, 3.0))

    @pytest.mark.parametrize(
        "kind, params, key",
        [
            ("gauss", {}, "unknown initial condition"),
            ("juttner", {"theta": 0.0}, "init.theta"),
            ("juttner", {"width": 1.0}, "init.width"),
            ("juttner", {"u": (1.0, 2.0)}, "init.u"),
            ("box", {"value": -1.0}, "init.value"),
            ("truncated", {"base": "truncated"}, "init.base"),
            ("truncated", {"eps": 0.0}, "init.eps"),
            ("file", {}, "init.path"),
        ],
    )
    def test_invalid(self, kind, params, key):
        with pytest.raises(ValueError, match=key):
            InitialCondition(kind, params)

    def test_to_dict(self):
        d = InitialCondition("truncated", {"base": "juttner"}).to_dict()
        assert d["kind"] == "truncated" and d["base"] == "juttner" and d["u"] == [0.0, 0.0, 0.0]
