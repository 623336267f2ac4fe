"""Scenario simulation: ground truth, measurements, and density sampling.

Generates linear-Gaussian ground-truth trajectory sets (scripted or sampled
from the birth/survival model), synthesizes measurements under the standard
detection-plus-clutter model, and samples trajectory sets from an
IID-cluster multitrajectory density for statistical tests.

All randomness flows through counter-based Philox generators derived from
(seed, run, purpose) tuples, so every run and every purpose (truth,
measurements, sampling) has an independent substream and results never
depend on scheduling or job count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cardesf import CardinalityPmf
from .errors import ConfigError
from .filters import BirthModel, ClutterModel, Rectangle
from .trajgauss import (
    GmTrajectoryPhd,
    LinearModels,
    Trajectory,
    TrajectorySet,
)

__all__ = [
    "Trajectory",
    "TrajectorySet",
    "ScriptedTrajectory",
    "ScenarioConfig",
    "substream",
    "cv_models",
    "generate_truth",
    "generate_measurements",
    "generate_measurement_sequence",
    "sample_iid_cluster",
    "benchmark_scenario",
]

_PURPOSE_CODES = {"truth": 1, "measurements": 2, "sampler": 3}


def substream(seed: int, run: int, purpose: str, extra: int | None = None):
    """Independent Philox generator for one (seed, run, purpose) cell.

    ``extra`` subdivides a purpose further (the per-step measurement draw),
    keeping each step reproducible in isolation.
    """
    if purpose not in _PURPOSE_CODES:
        raise ConfigError(f"unknown rng purpose: {purpose!r}")
    key = (int(seed), int(run), _PURPOSE_CODES[purpose])
    if extra is not None:
        key = key + (int(extra),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def cv_models(
    sampling_period: float,
    process_noise: float,
    survival_probability: float,
    detection_probability: float,
    measurement_noise_variance: float,
) -> LinearModels:
    """Nearly-constant-velocity models on the plane, position-only sensing.

    State is (p_x, v_x, p_y, v_y); both axes share the white-acceleration
    kinematics, and the sensor observes (p_x, p_y) with isotropic noise.
    """
    tau = float(sampling_period)
    if tau <= 0.0:
        raise ConfigError("sampling period must be positive")
    f1 = np.array([[1.0, tau], [0.0, 1.0]])
    q1 = process_noise * np.array(
        [[tau**3 / 3.0, tau**2 / 2.0], [tau**2 / 2.0, tau]]
    )
    F = np.kron(np.eye(2), f1)
    Q = np.kron(np.eye(2), q1)
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    R = measurement_noise_variance * np.eye(2)
    return LinearModels(
        F=F, Q=Q, H=H, R=R, p_S=survival_probability, p_D=detection_probability
    )


@dataclass(frozen=True)
class ScriptedTrajectory:
    """One scripted ground-truth track: lifetime plus how it starts.

    Exactly one of ``initial_state`` (explicit vector) or
    ``birth_component`` (index into the birth model to draw the initial
    state from) must be given. ``death_time`` is the last step the target
    is alive, inclusive.
    """

    birth_time: int
    death_time: int
    initial_state: np.ndarray | None = None
    birth_component: int | None = None

    def __post_init__(self):
        if (self.initial_state is None) == (self.birth_component is None):
            raise ConfigError(
                "give exactly one of initial_state and birth_component"
            )
        if self.death_time < self.birth_time:
            raise ConfigError("death_time must be >= birth_time")
        if self.initial_state is not None:
            state = np.asarray(self.initial_state, dtype=float)
            state.setflags(write=False)
            object.__setattr__(self, "initial_state", state)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to simulate one scenario.

    ``script`` is a tuple of :class:`ScriptedTrajectory` for scripted truth,
    or None to sample births from the birth model and deaths from survival
    coin flips.
    """

    n_steps: int
    models: LinearModels
    birth: BirthModel
    clutter: ClutterModel
    script: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.script is not None:
            object.__setattr__(self, "script", tuple(self.script))
            for s in self.script:
                if not 1 <= s.birth_time <= s.death_time <= self.n_steps:
                    raise ConfigError(
                        "scripted lifetimes must lie within [1, n_steps]"
                    )
                if (
                    s.birth_component is not None
                    and not 0 <= s.birth_component < self.birth.n_components
                ):
                    raise ConfigError("scripted birth component out of range")

    @property
    def region(self) -> Rectangle:
        return self.clutter.region


def _evolve(
    initial: np.ndarray,
    n_extra: int,
    models: LinearModels,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stack of states starting at ``initial``, driven by process noise."""
    states = np.empty((n_extra + 1, initial.size))
    states[0] = initial
    if n_extra:
        chol_q = np.linalg.cholesky(models.Q) if models.Q.any() else None
        for j in range(n_extra):
            x = models.F @ states[j]
            if chol_q is not None:
                x = x + chol_q @ rng.standard_normal(initial.size)
            states[j + 1] = x
    return states


def generate_truth(
    config: ScenarioConfig, run: int = 0, rng: np.random.Generator | None = None
) -> TrajectorySet:
    """Ground-truth trajectory set for one run.

    Scripted mode evolves each scripted track from its initial state (drawn
    from its birth component when not explicit) until its death step,
    inclusive. Sampled mode draws the number of births per step from a
    Poisson with the birth model's total weight, assigns each birth to a
    component at random, and keeps each target alive by p_S coin flips.
    """
    if rng is None:
        rng = substream(config.seed, run, "truth")
    models, birth = config.models, config.birth
    trajectories = []
    if config.script is not None:
        for s in config.script:
            if s.initial_state is not None:
                x0 = np.asarray(s.initial_state, dtype=float)
            else:
                j = s.birth_component
                x0 = rng.multivariate_normal(birth.means[j], birth.covs[j])
            states = _evolve(x0, s.death_time - s.birth_time, models, rng)
            trajectories.append(Trajectory(s.birth_time, states))
        return TrajectorySet(tuple(trajectories))
    total = birth.total_weight
    probs = birth.weights / total if total > 0 else None
    chol_q = np.linalg.cholesky(models.Q) if models.Q.any() else None
    alive = []  # (birth_time, list of states)
    for k in range(1, config.n_steps + 1):
        survivors = []
        for birth_time, states in alive:
            if rng.random() < models.p_S:
                x = models.F @ states[-1]
                if chol_q is not None:
                    x = x + chol_q @ rng.standard_normal(models.n_x)
                states.append(x)
                survivors.append((birth_time, states))
            else:
                trajectories.append((birth_time, states))
        alive = survivors
        n_new = rng.poisson(total) if total > 0 else 0
        for _ in range(n_new):
            j = rng.choice(birth.n_components, p=probs)
            x0 = rng.multivariate_normal(birth.means[j], birth.covs[j])
            alive.append((k, [x0]))
    trajectories.extend(alive)
    trajectories.sort(key=lambda t: t[0])
    return TrajectorySet(
        tuple(Trajectory(t, np.stack(states)) for t, states in trajectories)
    )


def generate_measurements(
    truth: TrajectorySet,
    config: ScenarioConfig,
    k: int,
    rng: np.random.Generator | None = None,
    run: int = 0,
) -> np.ndarray:
    """Measurement set at step k: detections plus clutter, shuffled.

    Each target alive at k is detected independently with probability p_D,
    producing H x plus Gaussian noise; the clutter count follows the clutter
    model's cardinality (Poisson by default) with points uniform over the
    region. Returns an (m, n_z) array in random order.
    """
    if rng is None:
        rng = substream(config.seed, run, "measurements", extra=k)
    models, clutter = config.models, config.clutter
    chol_r = np.linalg.cholesky(models.R)
    rows = []
    for traj in truth:
        if not traj.alive_at(k):
            continue
        if rng.random() < models.p_D:
            z = models.H @ traj.state_at(k) + chol_r @ rng.standard_normal(
                models.n_z
            )
            rows.append(z)
    if clutter.card_pmf is not None:
        n_clutter = int(
            rng.choice(clutter.card_pmf.n_max + 1, p=clutter.card_pmf.probs)
        )
    else:
        n_clutter = int(rng.poisson(clutter.rate)) if clutter.rate > 0 else 0
    if n_clutter:
        rows.extend(clutter.region.sample(rng, n_clutter))
    if not rows:
        return np.empty((0, models.n_z))
    Z = np.stack(rows)
    return Z[rng.permutation(Z.shape[0])]


def generate_measurement_sequence(
    truth: TrajectorySet, config: ScenarioConfig, run: int = 0
) -> list:
    """Measurement sets for steps 1..n_steps, one substream per step."""
    return [
        generate_measurements(truth, config, k, run=run)
        for k in range(1, config.n_steps + 1)
    ]


def sample_iid_cluster(
    cardinality: CardinalityPmf,
    mixture: GmTrajectoryPhd,
    rng: np.random.Generator,
) -> TrajectorySet:
    """One trajectory set drawn from an IID-cluster multitrajectory density.

    Draws the set size from ``cardinality``, then each trajectory
    independently: a mixture component (which fixes birth time and length),
    then the state sequence from that component's Gaussian. ``mixture`` may
    be the normalized single-trajectory density (weights summing to 1) or
    the PHD itself (weights summing to the cardinality mean); anything else
    is rejected.
    """
    weights = np.array([c.weight for c in mixture.components])
    total = float(weights.sum())
    if abs(total - 1.0) > 1e-6 and abs(total - cardinality.mean()) > 1e-6:
        raise ConfigError(
            "mixture weights must sum to 1 or to the cardinality mean"
        )
    probs = weights / total
    n = int(rng.choice(cardinality.n_max + 1, p=cardinality.probs))
    trajectories = []
    for _ in range(n):
        j = int(rng.choice(weights.size, p=probs))
        c = mixture.components[j]
        x = c.mean + np.linalg.cholesky(c.cov) @ rng.standard_normal(c.mean.size)
        trajectories.append(Trajectory(c.birth_time, x.reshape(-1, c.state_dim)))
    return TrajectorySet(tuple(trajectories))


def benchmark_scenario(seed: int = 0) -> ScenarioConfig:
    """The benchmark scenario: four crossing-lifetime targets on a 2 km box.

    Nearly-constant-velocity targets, position-only sensing, 100 steps,
    Poisson clutter with 50 expected returns per scan, and a three-component
    birth model. Two targets are born at step 1 from the same birth
    component and die at step 79; the others live over steps 5..69 and
    10..94. Initial states are drawn from the birth components per run.
    """
    models = cv_models(
        sampling_period=0.5,
        process_noise=3.24,
        survival_probability=0.99,
        detection_probability=0.9,
        measurement_noise_variance=4.0,
    )
    birth = BirthModel(
        weights=np.array([0.1, 0.1, 0.1]),
        means=np.array(
            [
                [85.0, 0.0, 140.0, 0.0],
                [-5.0, 0.0, 220.0, 0.0],
                [7.0, 0.0, 50.0, 0.0],
            ]
        ),
        covs=np.broadcast_to(
            np.diag([225.0, 100.0, 225.0, 100.0]), (3, 4, 4)
        ).copy(),
    )
    clutter = ClutterModel(
        rate=50.0,
        region=Rectangle(lo=np.zeros(2), hi=np.full(2, 2000.0)),
    )
    script = (
        ScriptedTrajectory(birth_time=1, death_time=79, birth_component=0),
        ScriptedTrajectory(birth_time=1, death_time=79, birth_component=0),
        ScriptedTrajectory(birth_time=5, death_time=69, birth_component=1),
        ScriptedTrajectory(birth_time=10, death_time=94, birth_component=2),
    )
    return ScenarioConfig(
        n_steps=100,
        models=models,
        birth=birth,
        clutter=clutter,
        script=script,
        seed=seed,
    )
