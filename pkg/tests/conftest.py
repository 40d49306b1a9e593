"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from rds_lab import blockmodel, spectral


@pytest.fixture(scope="session")
def two_block_87():
    """The (p, q) = (0.8, 0.7) two-block model used across modules."""
    return blockmodel.BlockModel.two_block(0.8, 0.7)


@pytest.fixture(scope="session")
def dec_87(two_block_87):
    return spectral.decompose(blockmodel.block_process_from(two_block_87))


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance criterion at the end of the run."""
    reports = []
    for status in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(status, []))
    lines = {}
    for rep in reports:
        if getattr(rep, "when", "call") != "call":
            continue
        nodeid = getattr(rep, "nodeid", "")
        if "test_acceptance.py::test_criterion_" not in nodeid:
            continue
        name = nodeid.split("::")[-1]
        number = int(name.split("_")[2])
        verdict = "PASS" if rep.passed else "FAIL"
        lines[number] = (verdict, name)
    if not lines:
        return
    import sys

    module = sys.modules.get("tests.test_acceptance") or sys.modules.get(
        "test_acceptance"
    )
    DETAILS = getattr(module, "DETAILS", {}) if module else {}
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        verdict, name = lines[number]
        detail = DETAILS.get(number, "")
        suffix = f" -- {detail}" if detail else ""
        terminalreporter.write_line(f"criterion {number:2d} {verdict}{suffix}")
