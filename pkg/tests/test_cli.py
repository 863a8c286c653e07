import csv
import json
import subprocess
import sys


from cirschemes import __version__
from cirschemes.cli import main

BASE_SIM = "simulate --scheme sd --a 1 --k 2 --l 1 --sigma 1 --x0 4 --t-max 1 --steps 10000 --paths 1 --seed 42".split()


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    meta = json.loads(lines[0][2:])
    return meta, list(csv.reader(lines[1:]))


class TestValidate:
    def test_gate_i_rejection(self, capsys):
        code = main("validate --scheme sd --a 0 --k 2 --l 1 --sigma 3 --steps 10 --t-max 1".split())
        assert code == 2
        assert "gate i" in capsys.readouterr().out

    def test_broadened_gate_accepts(self):
        assert main("validate --scheme sd --a 1 --k 2 --l 1 --sigma 3 --steps 10 --t-max 1".split()) == 0

    def test_negative_sigma_is_usage(self):
        assert main("validate --scheme sd --a 1 --sigma -1".split()) == 64

    def test_bad_flag(self):
        assert main(["validate", "--bogus"]) == 64
        assert main([]) == 64

    def test_two_factor(self, capsys):
        assert main("validate --scheme tf-squared --steps 1 --t-max 2".split()) == 2
        assert "step" in capsys.readouterr().out


class TestSimulate:
    def test_long_single_path(self, tmp_path):
        out = tmp_path / "base.csv"
        assert main(BASE_SIM + ["-o", str(out)]) == 0
        meta, rows = read_csv(out)
        assert rows[0] == ["path_id", "t", "y"]
        assert len(rows) - 1 == 10001
        assert all(float(r[2]) >= 0 for r in rows[1:])
        assert meta["schema"] == 1 and meta["version"] == __version__
        assert meta["config"]["seed"] == 42
        assert b"\r" not in out.read_bytes()

    def test_round_trip_precision(self, tmp_path):
        from cirschemes.one_factor import simulate_paths
        from cirschemes.params import CirParams, GridSpec, SchemeSpec

        out = tmp_path / "p.csv"
        assert main("simulate --scheme sd --a 0.5 --steps 20 --paths 3 --seed 7 -o".split() + [str(out)]) == 0
        _, rows = read_csv(out)
        values = simulate_paths(CirParams(2, 1, 1, 4), GridSpec(1.0, 20), SchemeSpec("sd", 0.5), 7, [0, 1, 2]).values
        assert [float(r[2]) for r in rows[1:]] == values.ravel().tolist()

    def test_zero_paths(self, tmp_path):
        out = tmp_path / "empty.csv"
        assert main("simulate --scheme sd --a 1 --paths 0 -o".split() + [str(out)]) == 0
        _, rows = read_csv(out)
        assert rows == [["path_id", "t", "y"]]

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = "simulate --scheme split --sigma 1.1 --steps 50 --paths 5 --seed 3 -o".split()
        assert main(args + [str(a)]) == 0
        assert main(args + [str(b)]) == 0
        # only the output path differs in the embedded config
        la, lb = a.read_text().splitlines(), b.read_text().splitlines()
        assert la[1:] == lb[1:]
        first = a.read_bytes()
        assert main(args + [str(a)]) == 0
        assert a.read_bytes() == first

    def test_two_factor_columns(self, tmp_path):
        out = tmp_path / "tf.csv"
        args = "simulate --scheme tf-split --lambda12 0.5 --lambda22 0.5 --steps 10 --paths 2 -o".split()
        assert main(args + [str(out)]) == 0
        _, rows = read_csv(out)
        assert rows[0] == ["path_id", "t", "y1", "y2"]
        assert len(rows) == 1 + 2 * 11

    def test_json_format(self, tmp_path):
        out = tmp_path / "p.json"
        assert main("simulate --scheme exact --steps 4 --paths 2 --format json -o".split() + [str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["schema"] == 1 and data["version"] == __version__
        assert len(data["paths"]) == 2 and len(data["paths"][0]["y"]) == 5

    def test_gate_rejection(self):
        assert main("simulate --scheme sd --a 0 --sigma 3".split()) == 2

    def test_io_error(self, tmp_path):
        assert main("simulate --scheme sd --a 1 -o".split() + [str(tmp_path / "missing" / "x.csv")]) == 74

    def test_figure(self, tmp_path):
        fig = tmp_path / "paths.png"
        args = "simulate --scheme sd --a 1 --steps 100 --paths 3 -o".split() + [str(tmp_path / "p.csv"), "--figure", str(fig)]
        assert main(args) == 0
        assert fig.read_bytes()[:4] == b"\x89PNG"


class TestConverge:
    def test_strong_report(self, tmp_path):
        out = tmp_path / "c.json"
        args = "converge --scheme sd --a 0 --sigma 0.5 --steps 16 --levels 4 --paths 2000 --seed 1 -o".split()
        assert main(args + [str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["schema"] == 1
        assert data["report"]["version"] == __version__
        assert data["report"]["fitted_order"] >= 0.4
        _, rows = read_csv(tmp_path / "c.csv")
        assert rows[0] == ["delta", "strong_error", "std_error"]
        assert len(rows) == 1 + 4 + 1

    def test_levels_precondition(self, tmp_path):
        assert main("converge --scheme sd --a 0 --levels 1 -o".split() + [str(tmp_path / "c.json")]) == 2

    def test_rerun_identical_modulo_runtime(self, tmp_path):
        reports = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            args = "converge --scheme sd --a 1 --steps 8 --levels 3 --paths 300 --seed 5 --csv".split()
            assert main(args + [str(tmp_path / "l.csv"), "-o", str(out)]) == 0
            data = json.loads(out.read_text())
            data["report"].pop("runtime_seconds")
            data["config"].pop("output")
            reports.append(data)
        assert reports[0] == reports[1]

    def test_weak_mode(self, tmp_path):
        out = tmp_path / "w.json"
        assert main("converge --mode weak --scheme exact --steps 4 --paths 1000 -o".split() + [str(out)]) == 0
        report = json.loads(out.read_text())["report"]
        assert report["kind"] == "weak" and report["ladder"][0]["weak_mean_error"] >= 0


class TestSignflip:
    def test_deterministic(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main("signflip --scheme sd --a 0 --sigma 0 --levels 3 --paths 50 -o".split() + [str(out)]) == 0
        _, rows = read_csv(out)
        assert rows[0][:2] == ["delta", "flip_fraction"]
        assert all(float(r[1]) == 0.0 for r in rows[1:])
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["schema"] == 1 and data["report"]["version"] == __version__

    def test_ladder_non_increasing(self, tmp_path):
        out = tmp_path / "s.csv"
        args = "signflip --scheme sd --a 1 --sigma 2.5 --x0 0.5 --levels 4 --paths 2000 -o".split()
        assert main(args + [str(out)]) == 0
        report = json.loads((tmp_path / "s.json").read_text())["report"]
        assert report["fraction_non_increasing"] and report["weighted_non_increasing"]

    def test_non_sd_scheme(self):
        assert main("signflip --scheme euler".split()) == 2


def test_audit_and_compare(tmp_path):
    out = tmp_path / "a.json"
    assert main("audit --scheme euler --sigma 1.9 --x0 1 --t-max 10 --steps 100 --paths 500 -o".split() + [str(out)]) == 0
    report = json.loads(out.read_text())["report"]
    assert report["negative_nodes"] > 0 and not report["positivity_preserving"]
    cmp_out = tmp_path / "cmp.csv"
    assert main("compare --scheme sd --a 1 --steps 100 -o".split() + [str(cmp_out)]) == 0
    _, rows = read_csv(cmp_out)
    assert rows[0] == ["path_id", "t", "y_sd", "y_euler"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cirschemes", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
