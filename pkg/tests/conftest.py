from __future__ import annotations

from dataclasses import replace

import pytest

from voikit import builtin
from voikit.distributions import ParameterSpec
from voikit.evppi import estimate_evppi
from voikit.model import run_psa


@pytest.fixture(scope="session")
def linear_normal():
    return builtin.get_model("linear-normal")


@pytest.fixture(scope="session")
def beta_binomial():
    return builtin.get_model("beta-binomial")


@pytest.fixture(scope="session")
def ln_psa(linear_normal):
    return run_psa(linear_normal, 2000, 3)


@pytest.fixture(scope="session")
def ln_aug(ln_psa):
    return estimate_evppi(ln_psa, ["phi"], 1e4, seed=4, bootstrap=50)


@pytest.fixture(scope="session")
def bb_psa(beta_binomial):
    return run_psa(beta_binomial, 2000, 5)


@pytest.fixture(scope="session")
def bb_aug(bb_psa):
    return estimate_evppi(bb_psa, ["p.resp"], 1e4, seed=6, bootstrap=50)


def _with_dummy(model):
    """``model`` plus a parameter ``z`` that the model never reads."""
    return replace(model, name=model.name + "+z",
                   parameters=model.parameters + (ParameterSpec("z", "normal", 0.3, 0.1**2),))


@pytest.fixture(scope="session")
def ln_dummy(linear_normal):
    return _with_dummy(linear_normal)


@pytest.fixture(scope="session")
def ln_dummy_psa(ln_dummy):
    return run_psa(ln_dummy, 2000, 8)


# acceptance criteria report one PASS/FAIL line each at the end of the run
_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.setdefault(number, []).append((passed, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entries = _CRITERIA[number]
        ok = all(p for p, _ in entries)
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}")
        for _, line in entries:
            terminalreporter.write_line(f"    {line}")
