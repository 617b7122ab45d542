import time
from pathlib import Path

import pytest

from lexiforge import synthetic
from lexiforge.lexicon import parse_lexicon
from lexiforge.pipeline import PipelineConfig, run_pipeline

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def small_lexicon():
    return parse_lexicon(
        "surface\tcategory\n"
        "virtual reality\tdig\n"
        "innovation\tinn\n"
        "innovation technology\tdig\n"
        "functionality and design\tinn\n"
        "design solutions\tinn\n"
        "circular economy\tsus\n"
        "business model\tbus\n"
    )


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    return synthetic.generate(tmp_path_factory.mktemp("synthetic"))


@pytest.fixture(scope="session")
def synthetic_run(synthetic_dir):
    """One full pipeline run (scheme 1, linear-CRF and CNN-CRF) shared by the end-to-end checks."""
    cfg = PipelineConfig.build(synthetic_dir / "config.json")
    t0 = time.perf_counter()
    cells = run_pipeline(cfg)
    return {"cfg": cfg, "cells": cells, "seconds": time.perf_counter() - t0, "workdir": cfg.workdir}


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in file order."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props or (outcome == "passed" and rep.when != "call"):
                continue
            detail = f"  [{props['detail']}]" if "detail" in props else ""
            lines.append((rep.location[1] or 0, f"{'PASS' if outcome == 'passed' else 'FAIL'}  {props['criterion']}{detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
