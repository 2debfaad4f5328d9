import pytest

from .conftest import CLI, CLIRunner


@pytest.mark.smoke
def test_gradcheck_passes(cli_runner: CLIRunner) -> None:
    result = cli_runner([CLI, "gradcheck", "--seed", "1"])
    assert result.returncode == 0, result
    assert "FAIL" not in result.stdout
    assert "All 34 checks passed" in result.stdout


def test_gradcheck_zero_tolerance(cli_runner: CLIRunner) -> None:
    result = cli_runner([CLI, "gradcheck", "--tolerance", "0"])
    assert result.returncode == 1, result


@pytest.mark.smoke
def test_version(cli_runner: CLIRunner) -> None:
    result = cli_runner([CLI, "--version"])
    assert result.returncode == 0, result
    assert "linear-distill package version" in result.stdout
