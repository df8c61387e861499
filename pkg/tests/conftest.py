import numpy as np
import pytest

from marrowcell.config import ModelConfig
from marrowcell.fixtures import generate_synthetic_fixture
from marrowcell.model import build_classifier
from marrowcell.taxonomy import load_class_taxonomy

_acceptance_results: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion): gating acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance_results.append(("PASS" if report.passed else "FAIL", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in _acceptance_results:
        terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture(scope="session")
def taxonomy():
    return load_class_taxonomy()


@pytest.fixture(scope="session")
def three_class_tree(tmp_path_factory, taxonomy):
    root = tmp_path_factory.mktemp("fixture3")
    return generate_synthetic_fixture({"BAS": 20, "BLA": 20, "EBO": 20}, root, taxonomy, seed=0)


@pytest.fixture
def stub_config():
    return ModelConfig(backbone_name="tiny-stub", random_init=True, input_size=64)


@pytest.fixture
def stub_model(stub_config):
    return build_classifier(stub_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
