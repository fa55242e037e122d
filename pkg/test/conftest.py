#  Adopted from https://docs.pytest.org/en/latest/example/simple.html#control-skipping-of-tests-according-to-command-line-option
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true",
                     help="Run the full-scale experiments")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: full-scale experiment "
                   "(M >= 1e5, tens of repeats)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        # --runslow given in cli: do not skip slow tests
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
