import pytest

from mwclust.cli import RunConfig, build_pipeline
from mwclust.dataset import SEEDS_LABEL, seeds_path

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def seeds_config():
    return RunConfig(input=str(seeds_path()), label_column=SEEDS_LABEL, strategy="kmeans", max_depth=3)


@pytest.fixture(scope="session")
def seeds_pipeline(seeds_config):
    return build_pipeline(seeds_config)


@pytest.fixture
def write_csv(tmp_path):
    def write(name, header, rows):
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return write
