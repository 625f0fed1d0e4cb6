import pytest
from click.testing import CliRunner


@pytest.fixture
def run_cli(tmp_path, monkeypatch):
    """Invoke the CLI in a scratch directory with FLOWLAB_OUT pointing inside it."""
    from flowlab.cli import cli

    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FLOWLAB_OUT", str(tmp_path / "runs"))
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)

    return invoke


@pytest.fixture
def write_config(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.rsplit(".", 1)[-1] == "test_acceptance"), None)
    results = getattr(mod, "RESULTS", [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
