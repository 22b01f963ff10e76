import pytest

from lpvfrd import benchmark as bm
from lpvfrd.ctrlparam import ControllerParameterization
from pipeline import run_pipeline


@pytest.fixture(scope="session")
def disk():
    return bm.build_unbalanced_disk()


@pytest.fixture(scope="session")
def dataset(disk):
    return bm.generate_dataset(disk)


@pytest.fixture(scope="session")
def reference():
    return bm.reference_controller()


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """generate-data -> synthesize -> analyze through the CLI, run once per session."""
    return run_pipeline(tmp_path_factory.mktemp("pipeline"))


@pytest.fixture(scope="session")
def synthesized(pipeline):
    return ControllerParameterization.from_json(pipeline["controller"].read_text())
