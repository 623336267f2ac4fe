"""Shared fixtures, random-case builders, and the acceptance report hook.

Acceptance tests register one verdict per criterion through
``record_criterion``; a terminal-summary hook prints the collected lines
after the normal pytest report so they survive output capture.
"""

from __future__ import annotations

import numpy as np
import pytest

from trajphd import (
    BirthModel,
    ClutterModel,
    LinearModels,
    Rectangle,
    ScenarioConfig,
    ScriptedTrajectory,
)

ACCEPTANCE_RESULTS: dict = {}


def record_criterion(number: int, passed: bool, detail: str = ""):
    """Store one criterion verdict; call before asserting so FAIL still prints."""
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        line = f"[acceptance] criterion {number}: {'PASS' if passed else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# Random small-scenario builder shared by parity and contract tests


def small_scenario(rng: np.random.Generator, seed: int) -> ScenarioConfig:
    """Random linear-Gaussian scenario with <= 3 targets over 20 steps."""
    n_steps = 20
    models = LinearModels(
        F=np.kron(np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]])),
        Q=float(rng.uniform(0.5, 3.0))
        * np.kron(np.eye(2), np.array([[1.0 / 3.0, 0.5], [0.5, 1.0]])),
        H=np.kron(np.eye(2), np.array([[1.0, 0.0]])),
        R=float(rng.uniform(1.0, 6.0)) * np.eye(2),
        p_S=float(rng.uniform(0.9, 0.995)),
        p_D=float(rng.uniform(0.8, 0.98)),
    )
    region = Rectangle(np.array([0.0, 0.0]), np.array([300.0, 300.0]))
    n_birth = int(rng.integers(1, 4))
    means = np.column_stack(
        [
            rng.uniform(40.0, 260.0, n_birth),
            rng.uniform(-1.0, 1.0, n_birth),
            rng.uniform(40.0, 260.0, n_birth),
            rng.uniform(-1.0, 1.0, n_birth),
        ]
    )
    birth = BirthModel(
        weights=np.full(n_birth, float(rng.uniform(0.05, 0.15))),
        means=means,
        covs=np.diag([100.0, 1.0, 100.0, 1.0]),
    )
    clutter = ClutterModel(rate=float(rng.uniform(2.0, 10.0)), region=region)
    n_targets = int(rng.integers(1, 4))
    script = []
    for _ in range(n_targets):
        b = int(rng.integers(1, 6))
        d = int(rng.integers(b + 8, n_steps + 1))
        script.append(
            ScriptedTrajectory(
                birth_time=b,
                death_time=d,
                birth_component=int(rng.integers(0, n_birth)),
            )
        )
    return ScenarioConfig(
        n_steps=n_steps,
        models=models,
        birth=birth,
        clutter=clutter,
        script=tuple(script),
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
