from pathlib import Path

import pytest

from rpgfuzz.fixture import SPEC_PATH
from rpgfuzz.rpg import build_initial_rpg
from rpgfuzz.spec_model import load_spec

from helpers import refine_running_example

DATA = Path(__file__).with_name("data")


@pytest.fixture
def petstore_spec():
    return load_spec(SPEC_PATH)


@pytest.fixture
def full_petstore_spec():
    return load_spec(DATA / "petstore_v2.yaml")


@pytest.fixture
def initial_rpg(petstore_spec):
    return build_initial_rpg(petstore_spec)


@pytest.fixture
def refined_rpg(initial_rpg):
    return refine_running_example(initial_rpg.copy())


_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {title}")
