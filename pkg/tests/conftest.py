from dataclasses import replace

import pytest

from objvote.harness import default_threads, load_preset, run_experiment
from objvote.registry import MODEL_RULES

ACCEPT_SEED = 1
ACCEPT_INSTANCES = 20_000

_criteria: list[str] = []


def record_criterion(line: str) -> None:
    _criteria.append(line)


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def run_preset(name: str, rules=None, voter_counts=None, n_instances=ACCEPT_INSTANCES):
    spec = load_preset(name, n_instances=n_instances, seed=ACCEPT_SEED, voter_counts=voter_counts)
    keep = tuple(r for r in (rules or spec.rules) if r not in MODEL_RULES)
    return run_experiment(replace(spec, rules=keep), threads=default_threads())


@pytest.fixture(scope="session")
def table_1a():
    """Preset 1a at desk scale, every rule that needs no trained model."""
    return run_preset("1a")
