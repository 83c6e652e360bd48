import math
import re
from pathlib import Path

import numpy as np
import pytest

from regimemm.cli import main
from regimemm.model import format_config, table1_spec, with_params


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "table1.cfg"
    path.write_text(format_config(table1_spec()))
    return str(path)


def write_config(tmp_path, spec, name="spec.cfg"):
    path = tmp_path / name
    path.write_text(format_config(spec))
    return str(path)


def run_files(out_dir, command):
    runs = list((Path(out_dir) / command).iterdir())
    assert len(runs) >= 1
    return runs[-1]


class TestAttractor:
    def test_beta_one(self, config_path, capsys):
        assert main(["attractor", config_path, "--beta", "1"]) == 0
        out = capsys.readouterr().out
        value = float(out.split("=")[1])
        assert value == pytest.approx(0.572, abs=1e-3)

    def test_beta_two(self, config_path, capsys):
        assert main(["attractor", config_path, "--beta", "2"]) == 0
        value = float(capsys.readouterr().out.split("=")[1])
        assert value == pytest.approx(0.636, abs=1e-3)

    def test_symmetric_rates(self, tmp_path, capsys):
        base = table1_spec()
        spec = with_params(base, regimes=(base.regimes[0], base.regimes[0]))
        cfg = write_config(tmp_path, spec)
        assert main(["attractor", cfg, "--beta", "1"]) == 0
        value = float(capsys.readouterr().out.split("=")[1])
        assert value == pytest.approx(0.5, abs=1e-9)

    def test_terminal_cost_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, table1_spec(terminal_cost_c=0.01))
        assert main(["attractor", cfg, "--beta", "1"]) == 3


class TestSolveFull:
    def test_row_count_and_manifest(self, config_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert main(["solve-full", config_path, "--out", out, "--steps", "40"]) == 0
        run_dir = run_files(out, "solve-full")
        surface = (run_dir / "surface_full.csv").read_text()
        body = [
            l for l in surface.splitlines() if l and not l.startswith("#") and not l.startswith("t,")
        ]
        assert len(body) == 41 * 7 * 2
        manifest = (run_dir / "manifest.txt").read_text()
        match = re.search(r"manifest_hash = (\w+)", manifest)
        assert match and f"# manifest = {match.group(1)}" in surface

    def test_missing_config(self, tmp_path):
        assert main(["solve-full", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2

    def test_invalid_config(self, tmp_path, capsys):
        spec = with_params(
            table1_spec(), inventory_cap_Nstar=math.inf, risk_aversion_gamma=0.5,
            running_penalty_zeta=0.0, terminal_cost_c=0.0,
        )
        cfg = write_config(tmp_path, spec)
        assert main(["solve-full", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "unbounded inventory requires" in capsys.readouterr().err

    def test_parse_error_reports_line(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("horizon_T = banana\n")
        assert main(["solve-full", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "horizon_T" in capsys.readouterr().err


class TestSolvePartial:
    def test_writes_surface_with_cfl(self, config_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert main(["solve-partial", config_path, "--out", out, "--mpi", "20"]) == 0
        run_dir = run_files(out, "solve-partial")
        text = (run_dir / "surface_partial.csv").read_text()
        assert "# cfl_max_coeff" in text
        assert "cfl_max_coeff" in capsys.readouterr().out

    def test_three_regimes_exit_2(self, tmp_path, capsys):
        base = table1_spec()
        spec = with_params(
            base,
            regimes=base.regimes + (base.regimes[1],),
            generator_Q=np.array([[-2.0, 1, 1], [1, -2.0, 1], [1, 1, -2.0]]),
            initial_filter_mu0=np.array([0.4, 0.3, 0.3]),
        )
        cfg = write_config(tmp_path, spec)
        assert main(["solve-partial", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "k = 2" in capsys.readouterr().err

    def test_byte_identical_rerun_except_wall_clock(self, config_path, tmp_path):
        out = str(tmp_path / "out")
        for _ in range(2):
            assert main(["solve-partial", config_path, "--out", out, "--mpi", "12"]) == 0
        run_dir = run_files(out, "solve-partial")
        # same hash directory reused; surface identical, manifests differ only in clock
        assert (run_dir / "surface_partial.csv").exists()


class TestSimulate:
    def test_fixed_policy_summary_and_paths(self, config_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        code = main(
            [
                "simulate", config_path, "--out", out,
                "--policy", "fixed:0.04", "--paths", "6", "--seed", "9",
            ]
        )
        assert code == 0
        run_dir = run_files(out, "simulate")
        names = sorted(p.name for p in run_dir.iterdir())
        assert names == [
            "manifest.txt", "path_000.csv", "path_001.csv", "path_002.csv",
            "path_003.csv", "summary.txt",
        ]
        summary = (run_dir / "summary.txt").read_text()
        assert "mean_pnl = " in summary
        path0 = (run_dir / "path_000.csv").read_text()
        assert path0.splitlines()[1] == "t,S,N,X,pi1,spread_bid,spread_ask,event_side"

    def test_export_paths_capped_by_paths(self, config_path, tmp_path):
        out = str(tmp_path / "out")
        assert (
            main(
                ["simulate", config_path, "--out", out, "--policy", "fixed:0.05", "--paths", "2"]
            )
            == 0
        )
        run_dir = run_files(out, "simulate")
        assert not (run_dir / "path_002.csv").exists()

    def test_partial_policy_runs(self, config_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        code = main(
            [
                "simulate", config_path, "--out", out,
                "--policy", "partial", "--paths", "5", "--mpi", "30", "--seed", "1",
            ]
        )
        assert code == 0

    def test_unknown_policy(self, config_path, tmp_path):
        assert (
            main(["simulate", config_path, "--out", str(tmp_path), "--policy", "zigzag"]) == 2
        )

    def test_unavailable_surface_exit_3(self, tmp_path, capsys):
        # partial surface cannot exist for a risk-averse model
        spec = with_params(table1_spec(), risk_aversion_gamma=0.4)
        cfg = write_config(tmp_path, spec)
        code = main(
            ["simulate", cfg, "--out", str(tmp_path / "o"), "--policy", "partial", "--paths", "2"]
        )
        assert code == 3
        assert "surface unavailable" in capsys.readouterr().err

    def test_deterministic_rerun(self, config_path, tmp_path):
        out1 = str(tmp_path / "a")
        out2 = str(tmp_path / "b")
        argv = ["simulate", config_path, "--policy", "fixed:0.04", "--paths", "3", "--seed", "5"]
        assert main(argv + ["--out", out1]) == 0
        assert main(argv + ["--out", out2]) == 0
        f1 = (run_files(out1, "simulate") / "path_000.csv").read_bytes()
        f2 = (run_files(out2, "simulate") / "path_000.csv").read_bytes()
        assert f1 == f2


class TestCompare:
    def test_emits_aligned_series(self, config_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert main(["compare", config_path, "--out", out, "--mpi", "20"]) == 0
        run_dir = run_files(out, "compare")
        text = (run_dir / "compare_ask.csv").read_text()
        header = [l for l in text.splitlines() if l.startswith("t,")][0]
        assert header == "t,n,partial_ask_pi0,partial_ask_pi0.6,partial_ask_pi1,full_ask_i1,full_ask_i2"
        # blocked ask side at n = -N* shows the stub marker
        stub_rows = [l for l in text.splitlines() if l.split(",")[1:2] == ["-3"]]
        assert stub_rows and all("inf" in l for l in stub_rows)
        summary = (run_dir / "summary.txt").read_text()
        assert "pi = 0.6" in summary
        assert "stub (side blocked)" in summary
