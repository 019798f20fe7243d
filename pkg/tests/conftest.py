import json
import time
from pathlib import Path

import pytest

from mbsa.beam import BeamModel
from mbsa import cli

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
NM = 1e-9


@pytest.fixture
def alu_beam():
    return BeamModel.rectangular(0.682, 21e-3, 1e-3, 69e9, 2700.0)


@pytest.fixture
def fiber():
    return BeamModel.circular(36 * NM, 1 * NM, 79e9, 19300.0)


def run_cli(args):
    t0 = time.perf_counter()
    code = cli.main([str(a) for a in args])
    return code, time.perf_counter() - t0


@pytest.fixture(scope="session")
def vdw_run(tmp_path_factory):
    """One CLI run of the bundled groove scenario, shared by the slow checks."""
    out = tmp_path_factory.mktemp("vdw_a")
    code, seconds = run_cli(["--quiet", "simulate", "--config", SCENARIOS / "vdw_groove.json", "--out", out])
    report = json.loads((out / "report.json").read_text())
    return {"code": code, "seconds": seconds, "out": out, "report": report}


@pytest.fixture(scope="session")
def magnetic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mag_a")
    code, seconds = run_cli(["--quiet", "simulate", "--config", SCENARIOS / "magnetic.json", "--out", out])
    report = json.loads((out / "report.json").read_text())
    return {"code": code, "seconds": seconds, "out": out, "report": report}


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
