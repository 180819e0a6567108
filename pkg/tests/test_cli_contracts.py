#!/usr/bin/env python3
"""
CLI Contract Tests for the kernel-verify command

Exercise the run / sweep / gen / report subcommands in-process and check
files written, exit codes and the error envelope on failure.
"""

import json
from pathlib import Path

import pytest
from typer.testing import CliRunner

from app.cli import app

pytestmark = pytest.mark.cli

runner = CliRunner()

SYNTHETIC = "clients=5,impostors=3,per=6,dim=8,sep=8,warp=radial"


def _json_line(output: str) -> dict:
    line = next(l for l in output.splitlines() if l.startswith("{"))
    return json.loads(line)


class TestRunCommand:
    """run: learn, fit and evaluate"""

    def test_run_writes_reports(self, quiet_cli):
        result = runner.invoke(app, ["run", "--synthetic", SYNTHETIC, "--kernel", "rbf:sigma=2",
                                     "--learn", "dinkelbach", "--modes", "OnC,OnI", "--seed", "1",
                                     "--out", "r1.json"])
        assert result.exit_code == 0, result.output

        reports = json.loads((quiet_cli / "r1.json").read_text())
        assert [r["mode"] for r in reports] == ["OnC", "OnI"]
        assert all(r["kernel"] == {"family": "rbf", "sigma": 2.0} for r in reports)
        assert "test_ter" in result.output

    def test_run_is_deterministic(self, quiet_cli):
        args = ["run", "--synthetic", SYNTHETIC, "--kernel", "rbf:sigma=2", "--seed", "1"]
        assert runner.invoke(app, args + ["--out", "a.json"]).exit_code == 0
        assert runner.invoke(app, args + ["--out", "b.json"]).exit_code == 0
        assert (quiet_cli / "a.json").read_bytes() == (quiet_cli / "b.json").read_bytes()

    def test_run_default_paths_and_roc(self, quiet_cli):
        result = runner.invoke(app, ["run", "--synthetic", SYNTHETIC, "--baseline",
                                     "--modes", "OnI", "--roc", "curves/roc.csv"])
        assert result.exit_code == 0, result.output
        reports = json.loads((quiet_cli / "reports" / "report.json").read_text())
        assert len(reports) == 1 and reports[0]["method"] == "baseline"
        header = (quiet_cli / "curves" / "roc.csv").read_text().splitlines()[0]
        assert header == "threshold,far,frr"

    def test_compare_emits_paired_reports(self, quiet_cli):
        result = runner.invoke(app, ["run", "--synthetic", SYNTHETIC, "--kernel", "rbf:sigma=2",
                                     "--compare", "--out", "cmp.json", "--roc", "roc.csv"])
        assert result.exit_code == 0, result.output
        reports = json.loads((quiet_cli / "cmp.json").read_text())
        assert [(r["method"], r["mode"]) for r in reports] == [
            ("baseline", "OnC"), ("baseline", "OnI"), ("learned", "OnC"), ("learned", "OnI")]
        assert (quiet_cli / "roc_learned_OnI.csv").exists()
        assert (quiet_cli / "roc_baseline_OnC.csv").exists()

    def test_run_from_config_file(self, quiet_cli):
        (quiet_cli / "run.json").write_text(json.dumps({
            "source": {"synthetic": {"clients": 3, "impostors": 2, "per": 8, "dim": 6, "sep": 10}},
            "kernel": {"family": "linear"},
            "learn": {"mode": "fixed_alpha", "alpha": 1.0},
            "modes": ["OnC"],
            "output": {"report": "from_config.json"},
        }))
        result = runner.invoke(app, ["run", "--config", "run.json"])
        assert result.exit_code == 0, result.output
        reports = json.loads((quiet_cli / "from_config.json").read_text())
        assert reports[0]["learn"]["mode"] == "fixed_alpha"

    def test_missing_protocol_file(self, quiet_cli):
        gen = runner.invoke(app, ["gen", "--synthetic", "clients=3,impostors=1,per=4,dim=3,sep=6"])
        assert gen.exit_code == 0, gen.output
        result = runner.invoke(app, ["run", "--samples", "data/samples.csv",
                                     "--protocol", "data/missing.json"])
        assert result.exit_code == 2
        assert "E-FILE-NOT-FOUND" in result.output
        assert "ERROR_ENVELOPE" in result.output

    def test_conflicting_sources(self, quiet_cli):
        result = runner.invoke(app, ["run", "--synthetic", SYNTHETIC, "--samples", "s.csv"])
        assert result.exit_code == 2
        assert "E-USAGE" in result.output

    def test_bad_kernel(self, quiet_cli):
        result = runner.invoke(app, ["run", "--synthetic", SYNTHETIC, "--kernel", "rbf:sigma=-1"])
        assert result.exit_code == 2
        assert "E-KERNEL" in result.output

    def test_bad_config_value(self, quiet_cli, monkeypatch):
        monkeypatch.setenv("KERNEL_VERIFY_LEARN_MAX_ITER", "0")
        result = runner.invoke(app, ["run", "--synthetic", SYNTHETIC])
        assert result.exit_code == 2
        assert "E-CONFIG" in result.output


class TestSweepCommand:
    """sweep: one run per grid kernel"""

    def test_sweep_writes_json_and_table(self, quiet_cli):
        result = runner.invoke(app, ["sweep", "--synthetic", "clients=3,impostors=2,per=8,dim=6,sep=10",
                                     "--grid", "rbf:sigma=5", "--grid", "rbf:sigma=10",
                                     "--baseline", "--out", "sweep/out.json"])
        assert result.exit_code == 0, result.output
        reports = json.loads((quiet_cli / "sweep" / "out.json").read_text())
        assert len(reports) == 4
        table = (quiet_cli / "sweep" / "out.csv").read_text().splitlines()
        assert table[0].startswith("method,kernel,mode,threshold")
        assert len(table) == 1 + 4

    def test_empty_grid(self, quiet_cli):
        result = runner.invoke(app, ["sweep", "--synthetic", SYNTHETIC])
        assert result.exit_code == 2
        assert "E-USAGE" in result.output

    @staticmethod
    def _write_run_config(path: Path):
        path.write_text(json.dumps({
            "source": {"synthetic": {"clients": 3, "impostors": 2, "per": 8, "dim": 6, "sep": 10}},
            "kernel": "linear",
            "baseline": True,
            "modes": ["OnI"],
            "seed": 3,
        }))

    def test_sweep_from_config_file(self, quiet_cli):
        self._write_run_config(quiet_cli / "run.json")
        result = runner.invoke(app, ["sweep", "--config", "run.json", "--grid", "rbf:sigma=5",
                                     "--out", "sweep/cfg.json"])
        assert result.exit_code == 0, result.output
        reports = json.loads((quiet_cli / "sweep" / "cfg.json").read_text())
        assert [r["mode"] for r in reports] == ["OnI"]
        assert reports[0]["method"] == "baseline"
        assert reports[0]["kernel"] == {"family": "rbf", "sigma": 5.0}

    def test_sweep_config_kernel_is_default_grid(self, quiet_cli):
        self._write_run_config(quiet_cli / "run.json")
        result = runner.invoke(app, ["sweep", "--config", "run.json", "--out", "sweep/cfg.json"])
        assert result.exit_code == 0, result.output
        reports = json.loads((quiet_cli / "sweep" / "cfg.json").read_text())
        assert [r["kernel"] for r in reports] == [{"family": "linear"}]


class TestGenAndReportCommands:
    """gen writes a dataset pair; report re-renders a stored report"""

    def test_gen_then_run_from_files(self, quiet_cli):
        gen = runner.invoke(app, ["gen", "--synthetic", "clients=3,impostors=2,per=8,dim=5,sep=10",
                                  "--seed", "4", "--samples-out", "d/s.csv",
                                  "--protocol-out", "d/p.json"])
        assert gen.exit_code == 0, gen.output
        summary = _json_line(gen.stdout)
        assert summary["N"] == 5 * 8
        assert summary["n"] == 3 * 4
        assert Path(quiet_cli / "d" / "s.csv").read_text().splitlines()[0] == "f0,f1,f2,f3,f4,identity"
        protocol = json.loads((quiet_cli / "d" / "p.json").read_text())
        assert protocol["clients"] == ["c000", "c001", "c002"]

        run = runner.invoke(app, ["run", "--samples", "d/s.csv", "--protocol", "d/p.json",
                                  "--out", "files.json"])
        assert run.exit_code == 0, run.output

    def test_report_renders_table(self, quiet_cli):
        run = runner.invoke(app, ["run", "--synthetic", SYNTHETIC, "--out", "r.json"])
        assert run.exit_code == 0, run.output
        result = runner.invoke(app, ["report", "r.json", "--decimals", "1"])
        assert result.exit_code == 0, result.output
        assert "OnC" in result.stdout and "OnI" in result.stdout
        assert "linear" in result.stdout

    def test_report_missing_file(self, quiet_cli):
        result = runner.invoke(app, ["report", "nope.json"])
        assert result.exit_code == 2
        assert "E-FILE-NOT-FOUND" in result.output
