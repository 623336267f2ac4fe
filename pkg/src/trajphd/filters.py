"""Multi-target filters over trajectory and target-state Gaussian mixtures.

Four filters share the linear-Gaussian models of :mod:`trajphd.trajgauss`:

* the trajectory PHD filter (Poisson approximation over sets of
  trajectories),
* the trajectory CPHD filter (IID-cluster approximation: PHD plus a full
  cardinality distribution),
* tagged PHD and tagged CPHD baselines, which run the standard
  current-state filters and build tracks by linking component tags.

Each filter exposes predict, update, reduce (pruning/absorption), and
estimate, plus a one-call per-step driver. Filter states are immutable;
every operation returns a new state.

Internally the trajectory filters keep each mixture component in a packed
form: states older than the L-scan window are stored as independent per-step
marginals, and only the trailing window carries a joint mean and covariance.
Since the update only touches states correlated with the current one, this
is exact for the L-scan recursion and keeps per-step cost bounded. The dense
single-component operations in :mod:`trajphd.trajgauss` are the readable
reference; equivalence is pinned by tests.

All quantities on the weight and cardinality paths (innovation moments,
likelihoods, update factors) are computed from the trailing state block
alone, so weights, cardinality, and estimated birth times do not depend on
the choice of L.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve, solve_triangular
from scipy.special import gammaln, logsumexp
from scipy.stats import binom, poisson

from .cardesf import (
    DEFAULT_N_MAX,
    CardinalityPmf,
    log_psi_update_factors,
    predict_cardinality,
)
from .errors import (
    ConfigError,
    DegenerateMixtureError,
    ImpossibleMeasurementError,
    InvalidComponentError,
    SingularInnovationError,
)
from .trajgauss import (
    GmTrajectoryPhd,
    LinearModels,
    Trajectory,
    TrajectoryComponent,
    TrajectorySet,
)

__all__ = [
    "Rectangle",
    "BirthModel",
    "ClutterModel",
    "ReductionConfig",
    "TphdState",
    "TcphdState",
    "TaggedState",
    "tphd_predict",
    "tphd_update",
    "tcphd_predict",
    "tcphd_update",
    "reduce_mixture",
    "estimate_tphd",
    "estimate_tcphd",
    "tphd_step",
    "tcphd_step",
    "tagged_phd_step",
    "tagged_cphd_step",
]

_MAX_CONDITION = 1e12


# ---------------------------------------------------------------------------
# Model types


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box, the surveillance region for measurements."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ConfigError("region must have positive extent on every axis")

    @property
    def area(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.lo.size))


@dataclass(frozen=True)
class BirthModel:
    """Gaussian-mixture birth intensity with a configurable cardinality.

    ``weights[j]`` is the expected number of births from component j per
    step. The birth cardinality defaults to a truncated Poisson with mean
    equal to the total weight; an explicit PMF may be supplied for the
    TCPHD filter.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    card_pmf: CardinalityPmf | None = None

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = np.broadcast_to(covs, (weights.size,) + covs.shape).copy()
        for a in (weights, means, covs):
            a.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        n_x = means.shape[1]
        if means.shape[0] != weights.size or covs.shape != (weights.size, n_x, n_x):
            raise ConfigError("birth model arrays have inconsistent shapes")
        if weights.min(initial=0.0) < 0.0:
            raise ConfigError("birth weights must be nonnegative")

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def cardinality(self, n_max: int = DEFAULT_N_MAX) -> CardinalityPmf:
        if self.card_pmf is not None:
            return self.card_pmf
        return CardinalityPmf.poisson(self.total_weight, n_max)


@dataclass(frozen=True)
class ClutterModel:
    """Clutter uniform over a rectangular region with configurable count law.

    The count defaults to Poisson(rate); an explicit PMF may be supplied for
    the TCPHD filter.
    """

    rate: float
    region: Rectangle
    card_pmf: CardinalityPmf | None = None

    def __post_init__(self):
        if self.rate < 0.0:
            raise ConfigError("clutter rate must be nonnegative")

    def log_density_at(self, z) -> float:
        """log spatial density; uniform over the region everywhere."""
        return -float(np.log(self.region.area))

    def density_at(self, z) -> float:
        return 1.0 / self.region.area

    def log_intensity_at(self, z) -> float:
        """log(rate * density); -inf for a clutter-free model."""
        if self.rate == 0.0:
            return -np.inf
        return float(np.log(self.rate)) + self.log_density_at(z)

    def log_card_pmf(self, m: int) -> float:
        if m < 0:
            return -np.inf
        if self.card_pmf is not None:
            if m > self.card_pmf.n_max:
                return -np.inf
            with np.errstate(divide="ignore"):
                return float(np.log(self.card_pmf.probs[m]))
        return float(poisson.logpmf(m, self.rate))


@dataclass(frozen=True)
class ReductionConfig:
    """Mixture-reduction and window parameters shared by all filters."""

    prune_threshold: float = 1e-4
    absorb_threshold: float = 4.0
    max_components: int = 30
    lscan: int = 1

    def __post_init__(self):
        if self.prune_threshold < 0.0 or self.absorb_threshold < 0.0:
            raise ConfigError("thresholds must be nonnegative")
        if self.max_components < 1 or self.lscan < 1:
            raise ConfigError("max_components and lscan must be >= 1")


# ---------------------------------------------------------------------------
# Packed trajectory components

class PackedComponent(NamedTuple):
    """One trajectory-Gaussian with frozen past marginals and a live window.

    ``frozen_means``/``frozen_covs`` hold independent per-step marginals for
    states that left the L-scan window, oldest first; ``mean``/``cov`` are
    the joint moments of the trailing window states. Arrays are shared
    between components and must never be mutated.
    """

    weight: float
    birth_time: int
    frozen_means: tuple
    frozen_covs: tuple
    mean: np.ndarray
    cov: np.ndarray


def _packed_duration(c: PackedComponent, n_x: int) -> int:
    return len(c.frozen_means) + c.mean.size // n_x


def _packed_from_component(c: TrajectoryComponent) -> PackedComponent:
    """Whole trajectory kept in the window; freezing happens in prediction."""
    return PackedComponent(
        weight=c.weight,
        birth_time=c.birth_time,
        frozen_means=(),
        frozen_covs=(),
        mean=np.array(c.mean),
        cov=np.array(c.cov),
    )


def _packed_to_component(c: PackedComponent, n_x: int) -> TrajectoryComponent:
    if c.frozen_means:
        mean = np.concatenate(list(c.frozen_means) + [c.mean])
        cov = block_diag(*c.frozen_covs, c.cov)
    else:
        mean, cov = c.mean, c.cov
    return TrajectoryComponent(
        weight=c.weight,
        birth_time=c.birth_time,
        mean=mean,
        cov=cov,
        state_dim=n_x,
    )


def _packed_trajectory(c: PackedComponent, n_x: int) -> Trajectory:
    if c.frozen_means:
        mean = np.concatenate(list(c.frozen_means) + [c.mean])
    else:
        mean = c.mean
    return Trajectory(c.birth_time, mean.reshape(-1, n_x))


# ---------------------------------------------------------------------------
# Filter states


@dataclass(frozen=True)
class TphdState:
    """Trajectory PHD filter state: a Gaussian-mixture PHD over trajectories."""

    packed: tuple = field(default=())
    time: int = 0
    state_dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "packed", tuple(self.packed))
        if self.packed and self.state_dim < 1:
            raise InvalidComponentError("state_dim required for nonempty state")
        for c in self.packed:
            if c.birth_time + _packed_duration(c, self.state_dim) - 1 != self.time:
                raise InvalidComponentError("component not alive at state time")

    @property
    def phd(self) -> GmTrajectoryPhd:
        return GmTrajectoryPhd(
            tuple(_packed_to_component(c, self.state_dim) for c in self.packed),
            self.time,
        )

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.packed])

    def expected_count(self) -> float:
        return float(sum(c.weight for c in self.packed))

    @staticmethod
    def initial() -> "TphdState":
        return TphdState((), 0, 0)

    @staticmethod
    def from_components(components, time: int) -> "TphdState":
        components = tuple(components)
        if not components:
            return TphdState((), time, 0)
        n_x = components[0].state_dim
        return TphdState(
            tuple(_packed_from_component(c) for c in components), time, n_x
        )


@dataclass(frozen=True)
class TcphdState:
    """Trajectory CPHD filter state: PHD plus cardinality distribution."""

    packed: tuple = field(default=())
    time: int = 0
    state_dim: int = 0
    cardinality: CardinalityPmf = field(
        default_factory=lambda: CardinalityPmf.delta(0)
    )

    def __post_init__(self):
        object.__setattr__(self, "packed", tuple(self.packed))
        if self.packed and self.state_dim < 1:
            raise InvalidComponentError("state_dim required for nonempty state")
        for c in self.packed:
            if c.birth_time + _packed_duration(c, self.state_dim) - 1 != self.time:
                raise InvalidComponentError("component not alive at state time")

    @property
    def phd(self) -> GmTrajectoryPhd:
        return GmTrajectoryPhd(
            tuple(_packed_to_component(c, self.state_dim) for c in self.packed),
            self.time,
        )

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.packed])

    def expected_count(self) -> float:
        return float(sum(c.weight for c in self.packed))

    @staticmethod
    def initial(n_max: int = DEFAULT_N_MAX) -> "TcphdState":
        return TcphdState((), 0, 0, CardinalityPmf.delta(0, n_max))

    @staticmethod
    def from_components(
        components, time: int, cardinality: CardinalityPmf
    ) -> "TcphdState":
        components = tuple(components)
        n_x = components[0].state_dim if components else 0
        return TcphdState(
            tuple(_packed_from_component(c) for c in components),
            time,
            n_x,
            cardinality,
        )


# ---------------------------------------------------------------------------
# Shared prediction / update kernels


def _predict_packed(
    packed, models: LinearModels, lscan: int | None
) -> tuple:
    """Survival-scaled single-step prediction of every packed component.

    Appends the propagated current state to the window, then freezes leading
    window states until the window covers at most ``lscan`` steps. The new
    trailing block is computed from the trailing slice only, so it is
    identical for every window size.
    """
    n_x = models.n_x
    F, Q, p_S = models.F, models.Q, models.p_S
    out = []
    for c in packed:
        last_mean = c.mean[-n_x:]
        last_cov = c.cov[-n_x:, -n_x:]
        new_mean_block = F @ last_mean
        new_cov_block = F @ last_cov @ F.T + Q
        new_cov_block = (new_cov_block + new_cov_block.T) / 2.0
        d = c.mean.size
        cross = c.cov[:, -n_x:] @ F.T
        mean = np.concatenate([c.mean, new_mean_block])
        cov = np.empty((d + n_x, d + n_x))
        cov[:d, :d] = c.cov
        cov[:d, d:] = cross
        cov[d:, :d] = cross.T
        cov[d:, d:] = new_cov_block
        frozen_means, frozen_covs = c.frozen_means, c.frozen_covs
        if lscan is not None:
            while mean.size > lscan * n_x:
                frozen_means = frozen_means + (mean[:n_x],)
                frozen_covs = frozen_covs + (cov[:n_x, :n_x],)
                mean = mean[n_x:]
                cov = cov[n_x:, n_x:]
        out.append(
            PackedComponent(
                weight=p_S * c.weight,
                birth_time=c.birth_time,
                frozen_means=frozen_means,
                frozen_covs=frozen_covs,
                mean=mean,
                cov=cov,
            )
        )
    return tuple(out)


def _birth_packed(birth: BirthModel, k: int) -> tuple:
    return tuple(
        PackedComponent(
            weight=float(birth.weights[j]),
            birth_time=k,
            frozen_means=(),
            frozen_covs=(),
            mean=birth.means[j],
            cov=birth.covs[j],
        )
        for j in range(birth.n_components)
    )


class _UpdateKernel(NamedTuple):
    """Per-component Kalman quantities for one measurement set."""

    log_q: np.ndarray          # (J, m) measurement log likelihoods
    gains: list                # window gains, (w*n_x, n_z) each
    post_covs: list            # posterior window covariances
    zbars: list                # predicted measurements, (n_z,) each


def _innovation_cholesky(S: np.ndarray):
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 0.0 or eig[0] < eig[-1] / _MAX_CONDITION:
        raise SingularInnovationError(
            "innovation covariance is singular or ill-conditioned"
        )
    return cho_factor(S, lower=True)


def _update_kernel(
    packed, Z: np.ndarray, models: LinearModels, gate_chi2: float | None = None
) -> _UpdateKernel:
    """Kalman moments and log likelihoods for every (component, measurement).

    The innovation moments and the trailing block of the posterior are
    computed from the trailing state slice, then written over the
    window-level result, keeping the weight path independent of the window
    size.
    """
    n_x, n_z = models.n_x, models.n_z
    H, R = models.H, models.R
    m = Z.shape[0]
    log_q = np.full((len(packed), m), -np.inf)
    gains, post_covs, zbars = [], [], []
    log_norm_const = -0.5 * n_z * np.log(2.0 * np.pi)
    for j, c in enumerate(packed):
        last_mean = c.mean[-n_x:]
        last_cov = c.cov[-n_x:, -n_x:]
        zbar = H @ last_mean
        S = H @ last_cov @ H.T + R
        S = (S + S.T) / 2.0
        chol = _innovation_cholesky(S)
        # Trailing-slice gain and posterior block.
        PHt_last = last_cov @ H.T
        gain_last = cho_solve(chol, PHt_last.T).T
        post_last = last_cov - gain_last @ PHt_last.T
        post_last = (post_last + post_last.T) / 2.0
        # Window-level gain and posterior, trailing block overwritten with
        # the slice-computed values.
        PHt = c.cov[:, -n_x:] @ H.T
        gain = cho_solve(chol, PHt.T).T
        gain[-n_x:] = gain_last
        post = c.cov - gain @ PHt.T
        post = (post + post.T) / 2.0
        post[-n_x:, -n_x:] = post_last
        if m:
            innov = Z - zbar
            u = solve_triangular(chol[0], innov.T, lower=True)
            log_q[j] = (
                log_norm_const
                - np.log(np.diag(chol[0])).sum()
                - 0.5 * (u * u).sum(axis=0)
            )
            if gate_chi2 is not None:
                log_q[j, (u * u).sum(axis=0) > gate_chi2] = -np.inf
        gains.append(gain)
        post_covs.append(post)
        zbars.append(zbar)
    return _UpdateKernel(log_q, gains, post_covs, zbars)


def _materialize_update(
    packed,
    Z: np.ndarray,
    kernel: _UpdateKernel,
    log_w_missed: np.ndarray,
    log_w_det: np.ndarray,
    prune_threshold: float | None,
    n_x: int,
) -> tuple:
    """Assemble the posterior mixture: missed block, then (z, j) blocks.

    Components whose weight would not survive pruning are never built when a
    threshold is given; passing None materializes the full mixture.
    """
    thr = -np.inf if prune_threshold is None else prune_threshold
    out = []
    with np.errstate(over="ignore"):
        w_missed = np.exp(log_w_missed)
        w_det = np.exp(log_w_det)
    for j, c in enumerate(packed):
        if prune_threshold is None or w_missed[j] > thr:
            out.append(c._replace(weight=float(w_missed[j])))
    m = Z.shape[0]
    if m == 0:
        return tuple(out)
    buckets = [[] for _ in range(m)]
    for j, c in enumerate(packed):
        keep = np.nonzero(w_det[j] > thr)[0] if prune_threshold is not None else np.arange(m)
        if keep.size == 0:
            continue
        innov = Z[keep] - kernel.zbars[j]
        means = c.mean + innov @ kernel.gains[j].T
        for row, i in enumerate(keep):
            buckets[i].append(
                PackedComponent(
                    weight=float(w_det[j, i]),
                    birth_time=c.birth_time,
                    frozen_means=c.frozen_means,
                    frozen_covs=c.frozen_covs,
                    mean=means[row],
                    cov=kernel.post_covs[j],
                )
            )
    for bucket in buckets:
        out.extend(bucket)
    return tuple(out)


def _log_weights(packed) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.array([c.weight for c in packed]))


# ---------------------------------------------------------------------------
# Trajectory PHD filter


def tphd_predict(
    state: TphdState,
    models: LinearModels,
    birth: BirthModel,
    lscan: int | None = None,
) -> TphdState:
    """Advance the PHD one step: survival prediction plus birth components.

    Every surviving component is extended by the propagated current state
    and truncated to the trailing ``lscan`` window (None keeps the full
    joint). Birth components are appended with the new step as birth time.
    """
    k = state.time + 1
    survivors = _predict_packed(state.packed, models, lscan)
    return TphdState(survivors + _birth_packed(birth, k), k, models.n_x)


def tphd_update(
    state: TphdState,
    Z,
    models: LinearModels,
    clutter: ClutterModel,
    prune_threshold: float | None = None,
    gate_chi2: float | None = None,
) -> TphdState:
    """Measurement update of the predicted trajectory PHD.

    The posterior mixture is the missed-detection block (weights scaled by
    1 - p_D) followed by one component per (measurement, prior component)
    pair. With ``prune_threshold`` set, pairs that would be pruned anyway
    are never materialized; the surviving weights are unchanged.
    """
    Z = _as_measurement_array(Z, models.n_z)
    if not state.packed:
        return state
    kernel = _update_kernel(state.packed, Z, models, gate_chi2)
    log_w = _log_weights(state.packed)
    with np.errstate(divide="ignore"):
        log_pd = np.log(models.p_D) if models.p_D > 0 else -np.inf
        log_1mpd = np.log1p(-models.p_D) if models.p_D < 1 else -np.inf
    log_w_missed = log_1mpd + log_w
    if Z.shape[0]:
        log_kappa = np.array([clutter.log_intensity_at(z) for z in Z])
        with np.errstate(invalid="ignore"):
            log_sum_wq = logsumexp(log_w[:, None] + kernel.log_q, axis=0)
        log_denom = np.logaddexp(log_kappa, log_pd + log_sum_wq)
        log_w_det = log_pd + log_w[:, None] + kernel.log_q - log_denom[None, :]
    else:
        log_w_det = np.empty((len(state.packed), 0))
    packed = _materialize_update(
        state.packed, Z, kernel, log_w_missed, log_w_det, prune_threshold, models.n_x
    )
    return TphdState(packed, state.time, state.state_dim)


# ---------------------------------------------------------------------------
# Trajectory CPHD filter


def tcphd_predict(
    state: TcphdState,
    models: LinearModels,
    birth: BirthModel,
    lscan: int | None = None,
) -> TcphdState:
    """Advance PHD and cardinality one step.

    The PHD prediction shares the trajectory PHD code path verbatim; the
    cardinality is the survival-thinned prior convolved with the birth
    cardinality.
    """
    k = state.time + 1
    survivors = _predict_packed(state.packed, models, lscan)
    card = predict_cardinality(
        state.cardinality, models.p_S, birth.cardinality(state.cardinality.n_max)
    )
    return TcphdState(survivors + _birth_packed(birth, k), k, models.n_x, card)


def tcphd_update(
    state: TcphdState,
    Z,
    models: LinearModels,
    clutter: ClutterModel,
    prune_threshold: float | None = None,
    gate_chi2: float | None = None,
) -> TcphdState:
    """Measurement update of the predicted trajectory CPHD.

    Kalman moments are identical to the trajectory PHD update; the weights
    use the Psi factors, evaluated in log domain with shared scales so that
    the missed/detected ratios are exact at any measurement count.
    """
    Z = _as_measurement_array(Z, models.n_z)
    m = Z.shape[0]
    with np.errstate(divide="ignore"):
        log_rho = np.log(state.cardinality.probs)
        log_pd = np.log(models.p_D) if models.p_D > 0 else -np.inf
        log_1mpd = np.log1p(-models.p_D) if models.p_D < 1 else -np.inf
    if not state.packed:
        # No mass to update; only the cardinality reacts to the clutter count.
        log_lambda = np.full(m, -np.inf)
        log_psi0, log_ip0, _, _ = log_psi_update_factors(
            log_lambda, clutter.log_card_pmf, log_1mpd, -np.inf, log_rho
        )
        card = _normalized_card(log_psi0 + log_rho)
        return TcphdState((), state.time, state.state_dim, card)
    kernel = _update_kernel(state.packed, Z, models, gate_chi2)
    log_w = _log_weights(state.packed)
    total_w = float(np.sum(np.exp(log_w)))
    if total_w <= 0.0:
        raise DegenerateMixtureError("update requires positive total weight")
    log_sum_w = float(np.log(total_w))
    log_cbreve = np.array([clutter.log_density_at(z) for z in Z])
    with np.errstate(invalid="ignore"):
        log_sum_wq = logsumexp(log_w[:, None] + kernel.log_q, axis=0) if m else np.empty(0)
    log_lambda = log_pd + log_sum_wq - log_cbreve
    log_psi0, log_ip0, log_ip1, log_ip1_del = log_psi_update_factors(
        log_lambda, clutter.log_card_pmf, log_1mpd, log_sum_w, log_rho
    )
    if not np.isfinite(log_ip0):
        raise ImpossibleMeasurementError("update normalizer is zero")
    card = _normalized_card(log_psi0 + log_rho)
    log_w_missed = log_1mpd + log_ip1 - log_ip0 + log_w
    if m:
        log_w_det = (
            log_pd
            + log_w[:, None]
            + kernel.log_q
            - log_cbreve[None, :]
            + log_ip1_del[None, :]
            - log_ip0
        )
    else:
        log_w_det = np.empty((len(state.packed), 0))
    packed = _materialize_update(
        state.packed, Z, kernel, log_w_missed, log_w_det, prune_threshold, models.n_x
    )
    return TcphdState(packed, state.time, state.state_dim, card)


def _normalized_card(log_unnorm: np.ndarray) -> CardinalityPmf:
    shift = log_unnorm.max()
    if not np.isfinite(shift):
        raise ImpossibleMeasurementError("cardinality update lost all mass")
    probs = np.exp(log_unnorm - shift)
    return CardinalityPmf(probs / probs.sum())


def _as_measurement_array(Z, n_z: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        return Z.reshape(0, n_z)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.ndim != 2 or Z.shape[1] != n_z:
        raise InvalidComponentError("measurement array must be (m, n_z)")
    return Z


# ---------------------------------------------------------------------------
# Reduction (pruning and absorption) and estimation


def reduce_mixture(state, config: ReductionConfig):
    """Prune low-weight components, absorb near-duplicates, cap the count.

    Components with weight <= prune threshold are dropped. Repeatedly, the
    highest-weight survivor absorbs every remaining component whose current
    state lies within the absorption Mahalanobis radius measured with the
    absorber's current-state covariance; the absorber keeps its trajectory
    and gains the absorbed weights. Finally only the ``max_components``
    heaviest survive. The cardinality distribution (CPHD state) is
    untouched.
    """
    n_x = state.state_dim
    packed = [c for c in state.packed if c.weight > config.prune_threshold]
    out = []
    if packed:
        weights = np.array([c.weight for c in packed])
        means = np.stack([c.mean[-n_x:] for c in packed])
        alive = np.ones(len(packed), dtype=bool)
        while alive.any():
            masked = np.where(alive, weights, -np.inf)
            j = int(np.argmax(masked))
            chol = cho_factor(packed[j].cov[-n_x:, -n_x:], lower=True)
            idx = np.nonzero(alive)[0]
            diff = means[idx] - means[j]
            u = solve_triangular(chol[0], diff.T, lower=True)
            d2 = (u * u).sum(axis=0)
            absorbed = idx[d2 <= config.absorb_threshold]
            out.append(packed[j]._replace(weight=float(weights[absorbed].sum())))
            alive[absorbed] = False
        if len(out) > config.max_components:
            order = np.argsort(-np.array([c.weight for c in out]), kind="stable")
            keep = np.sort(order[: config.max_components])
            out = [out[i] for i in keep]
    if isinstance(state, TcphdState):
        return TcphdState(tuple(out), state.time, state.state_dim, state.cardinality)
    return TphdState(tuple(out), state.time, state.state_dim)


def _top_components(packed, n: int) -> list:
    order = np.argsort(-np.array([c.weight for c in packed]), kind="stable")
    return [packed[i] for i in order[:n]]


def estimate_tphd(state: TphdState) -> TrajectorySet:
    """Trajectory estimates: round the total weight, report that many.

    Rounding is half-away-from-zero and the count is capped at the number
    of mixture components; the heaviest components are reported with their
    full trajectory means.
    """
    n_hat = min(int(np.floor(state.expected_count() + 0.5)), len(state.packed))
    return TrajectorySet(
        tuple(
            _packed_trajectory(c, state.state_dim)
            for c in _top_components(state.packed, n_hat)
        )
    )


def estimate_tcphd(state: TcphdState) -> TrajectorySet:
    """Trajectory estimates: the cardinality-PMF mode, capped at the count."""
    n_hat = min(int(np.argmax(state.cardinality.probs)), len(state.packed))
    return TrajectorySet(
        tuple(
            _packed_trajectory(c, state.state_dim)
            for c in _top_components(state.packed, n_hat)
        )
    )


def tphd_step(
    state: TphdState,
    Z,
    models: LinearModels,
    birth: BirthModel,
    clutter: ClutterModel,
    config: ReductionConfig,
):
    """One filter cycle: predict, update, reduce, estimate."""
    predicted = tphd_predict(state, models, birth, config.lscan)
    updated = tphd_update(
        predicted, Z, models, clutter, prune_threshold=config.prune_threshold
    )
    reduced = reduce_mixture(updated, config)
    return reduced, estimate_tphd(reduced)


def tcphd_step(
    state: TcphdState,
    Z,
    models: LinearModels,
    birth: BirthModel,
    clutter: ClutterModel,
    config: ReductionConfig,
):
    """One filter cycle: predict, update, reduce, estimate."""
    predicted = tcphd_predict(state, models, birth, config.lscan)
    updated = tcphd_update(
        predicted, Z, models, clutter, prune_threshold=config.prune_threshold
    )
    reduced = reduce_mixture(updated, config)
    return reduced, estimate_tcphd(reduced)


# ---------------------------------------------------------------------------
# Tagged PHD / CPHD baselines
#
# Standard current-state Gaussian-mixture PHD and CPHD recursions with an
# opaque integer tag riding on every component. Deliberately self-contained:
# the Kalman algebra, the thinning convolution, and the update factors are
# written against plain arrays here, independent of the trajectory code
# paths above, so these filters double as reference implementations.


@dataclass(frozen=True)
class TaggedState:
    """Tagged GM-(C)PHD state plus the track segments reported last step."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    tags: np.ndarray
    next_tag: int = 0
    time: int = 0
    cardinality: CardinalityPmf | None = None
    tracks: dict = field(default_factory=dict)

    @staticmethod
    def initial(n_x: int, with_cardinality: bool = False, n_max: int = DEFAULT_N_MAX):
        return TaggedState(
            weights=np.empty(0),
            means=np.empty((0, n_x)),
            covs=np.empty((0, n_x, n_x)),
            tags=np.empty(0, dtype=int),
            next_tag=0,
            time=0,
            cardinality=CardinalityPmf.delta(0, n_max) if with_cardinality else None,
            tracks={},
        )


def _tagged_predict(state: TaggedState, models: LinearModels, birth: BirthModel):
    F, Q = models.F, models.Q
    weights = np.concatenate([models.p_S * state.weights, birth.weights])
    means = np.concatenate([state.means @ F.T, birth.means])
    covs = np.concatenate(
        [F @ state.covs @ F.T + Q, birth.covs]
        if state.covs.size
        else [state.covs, birth.covs]
    )
    n_b = birth.n_components
    tags = np.concatenate(
        [state.tags, np.arange(state.next_tag, state.next_tag + n_b)]
    )
    return weights, means, covs, tags, state.next_tag + n_b


def _tagged_kalman(means, covs, Z, models: LinearModels):
    """Per-component innovation moments and log likelihoods, plain arrays."""
    H, R = models.H, models.R
    J, m = means.shape[0], Z.shape[0]
    n_z = models.n_z
    log_q = np.full((J, m), -np.inf)
    gains = np.empty((J, means.shape[1], n_z))
    posts = np.empty_like(covs)
    zbars = means @ H.T
    for j in range(J):
        S = H @ covs[j] @ H.T + R
        S = (S + S.T) / 2.0
        eig = np.linalg.eigvalsh(S)
        if eig[0] <= 0.0 or eig[0] < eig[-1] / _MAX_CONDITION:
            raise SingularInnovationError("singular innovation covariance")
        Lc = np.linalg.cholesky(S)
        PHt = covs[j] @ H.T
        K = np.linalg.solve(S, PHt.T).T
        gains[j] = K
        post = covs[j] - K @ PHt.T
        posts[j] = (post + post.T) / 2.0
        if m:
            u = np.linalg.solve(Lc, (Z - zbars[j]).T)
            log_q[j] = (
                -0.5 * n_z * np.log(2.0 * np.pi)
                - np.log(np.diag(Lc)).sum()
                - 0.5 * (u * u).sum(axis=0)
            )
    return log_q, gains, posts, zbars


def _scaled_esf(lam: np.ndarray):
    """log e_j of a nonnegative multiset via a scaled linear recurrence."""
    m = lam.size
    if m == 0:
        return np.zeros(1)
    s = max(float(lam.max()), 1.0)
    table = np.zeros(m + 1)
    table[0] = 1.0
    scaled = lam / s
    for x in scaled:
        table[1:] = table[1:] + x * table[:-1]
    with np.errstate(divide="ignore"):
        return np.log(table) + np.arange(m + 1) * np.log(s)


def _tagged_cphd_factors(weights, log_q, Z, clutter, p_D, card: CardinalityPmf):
    """Update factors of the standard GM-CPHD, self-contained evaluation.

    Returns (posterior cardinality, missed scale, per-measurement detection
    scale array). The missed scale multiplies (1 - p_D) * w_j; the detection
    scale multiplies p_D * w_j * q_j(z) / clutter_density(z).
    """
    m = Z.shape[0]
    n_max = card.n_max
    n = np.arange(n_max + 1)
    with np.errstate(divide="ignore"):
        log_rho = np.log(card.probs)
        log_sum_w = np.log(weights.sum())
        log_1mpd = np.log1p(-p_D) if p_D < 1 else -np.inf
        log_wq = np.log(weights[:, None]) + log_q if m else np.empty((0, 0))
    lam = (
        p_D * np.exp(logsumexp(log_wq, axis=0)) / np.array([clutter.density_at(z) for z in Z])
        if m
        else np.empty(0)
    )
    log_e = _scaled_esf(lam)
    # Clutter count -> log probability, indexed by count.
    log_clut = np.array([clutter.log_card_pmf(i) for i in range(m + 1)])

    def upsilon(u: int, log_e_table: np.ndarray, mz: int):
        jj = np.arange(mz + 1)[None, :]
        nn = n[:, None]
        valid = jj <= nn - u
        surv = nn - jj - u
        with np.errstate(invalid="ignore"):
            terms = (
                gammaln(mz - jj + 1)
                + log_clut[mz - jj]
                + np.where(surv == 0, 0.0, surv * log_1mpd)
                - (jj + u) * log_sum_w
                + gammaln(nn + 1)
                - gammaln(np.where(valid, surv, 0) + 1)
                + log_e_table[jj]
            )
            return logsumexp(np.where(valid, terms, -np.inf), axis=1)

    log_ups0 = upsilon(0, log_e, m)
    log_ups1 = upsilon(1, log_e, m)
    log_ip0 = logsumexp(log_ups0 + log_rho)
    log_ip1 = logsumexp(log_ups1 + log_rho)
    post_card_log = log_ups0 + log_rho
    shift = post_card_log.max()
    probs = np.exp(post_card_log - shift)
    post_card = CardinalityPmf(probs / probs.sum())
    missed_scale = np.exp(log_ip1 - log_ip0)
    # <Upsilon^1[w, Z minus z], rho> per deletion. Only the ESF table depends
    # on the deleted measurement, so the (n, j) part is collapsed once.
    det_scale = np.empty(m)
    if m:
        jj = np.arange(m)[None, :]
        nn = n[:, None]
        valid = nn >= jj + 1
        surv = nn - jj - 1
        with np.errstate(invalid="ignore"):
            b = np.where(
                valid,
                np.where(surv == 0, 0.0, surv * log_1mpd)
                + gammaln(nn + 1)
                - gammaln(np.where(valid, surv, 0) + 1)
                + log_rho[:, None],
                -np.inf,
            )
            collapsed = (
                logsumexp(b, axis=0)
                - (jj[0] + 1) * log_sum_w
                + gammaln(m - jj[0])
                + log_clut[m - 1 - jj[0]]
            )
            for i in range(m):
                log_e_del = _scaled_esf(np.delete(lam, i))
                det_scale[i] = np.exp(logsumexp(collapsed + log_e_del) - log_ip0)
    return post_card, missed_scale, det_scale


def _tagged_reduce(weights, means, covs, tags, config: ReductionConfig):
    keep = weights > config.prune_threshold
    weights, means, covs, tags = (
        weights[keep],
        means[keep],
        covs[keep],
        tags[keep],
    )
    out_idx, out_w = [], []
    alive = np.ones(weights.size, dtype=bool)
    while alive.any():
        masked = np.where(alive, weights, -np.inf)
        j = int(np.argmax(masked))
        diff = means[alive] - means[j]
        d2 = np.einsum("ij,ij->i", diff @ np.linalg.inv(covs[j]), diff)
        absorbed = np.nonzero(alive)[0][d2 <= config.absorb_threshold]
        out_idx.append(j)
        out_w.append(weights[absorbed].sum())
        alive[absorbed] = False
    order = np.argsort(-np.asarray(out_w), kind="stable")[: config.max_components]
    sel = np.sort(order)
    idx = [out_idx[i] for i in sel]
    return (
        np.asarray([out_w[i] for i in sel]),
        means[idx],
        covs[idx],
        tags[idx],
    )


def _tagged_estimate(state: TaggedState, n_hat: int):
    """Top components with pairwise-distinct tags; extend or restart tracks."""
    order = np.argsort(-state.weights, kind="stable")
    chosen = []
    seen = set()
    for j in order:
        tag = int(state.tags[j])
        if tag in seen:
            continue
        seen.add(tag)
        chosen.append(j)
        if len(chosen) == n_hat:
            break
    new_tracks = {}
    k = state.time
    for j in chosen:
        tag = int(state.tags[j])
        x = state.means[j]
        if tag in state.tracks:
            birth, states = state.tracks[tag]
            new_tracks[tag] = (birth, states + [x])
        else:
            new_tracks[tag] = (k, [x])
    estimate = TrajectorySet(
        tuple(
            Trajectory(birth, np.stack(states))
            for birth, states in new_tracks.values()
        )
    )
    return new_tracks, estimate


def _tagged_core_step(
    state: TaggedState,
    Z,
    models: LinearModels,
    birth: BirthModel,
    clutter: ClutterModel,
    config: ReductionConfig,
    with_cardinality: bool,
):
    Z = _as_measurement_array(Z, models.n_z)
    m = Z.shape[0]
    weights, means, covs, tags, next_tag = _tagged_predict(state, models, birth)
    card = None
    if with_cardinality:
        card = _tagged_predict_cardinality(
            state.cardinality, models.p_S, birth.cardinality(state.cardinality.n_max)
        )
    log_q, gains, posts, zbars = _tagged_kalman(means, covs, Z, models)
    if with_cardinality:
        card, missed_scale, det_scale = _tagged_cphd_factors(
            weights, log_q, Z, clutter, models.p_D, card
        )
        new_w = [(1.0 - models.p_D) * missed_scale * weights]
    else:
        new_w = [(1.0 - models.p_D) * weights]
    new_m, new_c, new_t = [means], [covs], [tags]
    q = np.exp(log_q)
    for i in range(m):
        if with_cardinality:
            wz = models.p_D * weights * q[:, i] / clutter.density_at(Z[i]) * det_scale[i]
        else:
            denom = clutter.rate * clutter.density_at(Z[i]) + models.p_D * float(
                weights @ q[:, i]
            )
            wz = models.p_D * weights * q[:, i] / denom
        new_w.append(wz)
        new_m.append(means + np.einsum("jxz,z->jx", gains, Z[i]) - np.einsum("jxz,jz->jx", gains, zbars))
        new_c.append(posts)
        new_t.append(tags)
    weights = np.concatenate(new_w)
    means = np.concatenate(new_m)
    covs = np.concatenate(new_c)
    tags = np.concatenate(new_t)
    weights, means, covs, tags = _tagged_reduce(weights, means, covs, tags, config)
    k = state.time + 1
    if with_cardinality:
        n_hat = min(int(np.argmax(card.probs)), weights.size)
    else:
        n_hat = min(int(np.floor(weights.sum() + 0.5)), weights.size)
    interim = TaggedState(
        weights, means, covs, tags, next_tag, k, card, state.tracks
    )
    new_tracks, estimate = _tagged_estimate(interim, n_hat)
    return (
        TaggedState(weights, means, covs, tags, next_tag, k, card, new_tracks),
        estimate,
    )


def _tagged_predict_cardinality(
    prior: CardinalityPmf, p_S: float, birth_card: CardinalityPmf
) -> CardinalityPmf:
    """Thinning plus birth convolution written against plain arrays."""
    n_max = prior.n_max
    n = np.arange(n_max + 1)
    thinned = np.zeros(n_max + 1)
    for nn in n:
        if prior.probs[nn] > 0.0:
            thinned[: nn + 1] += prior.probs[nn] * binom.pmf(np.arange(nn + 1), nn, p_S)
    full = np.convolve(thinned, birth_card.probs)[: n_max + 1]
    return CardinalityPmf(full / full.sum())


def tagged_phd_step(
    state: TaggedState,
    Z,
    models: LinearModels,
    birth: BirthModel,
    clutter: ClutterModel,
    config: ReductionConfig,
):
    """One cycle of the tagged GM-PHD baseline; returns (state, estimate).

    Estimation reports the rounded-total-weight top components with
    pairwise-distinct tags. An estimate whose tag was reported at the
    previous step extends that track; otherwise it starts a new one at the
    current step.
    """
    return _tagged_core_step(state, Z, models, birth, clutter, config, False)


def tagged_cphd_step(
    state: TaggedState,
    Z,
    models: LinearModels,
    birth: BirthModel,
    clutter: ClutterModel,
    config: ReductionConfig,
):
    """One cycle of the tagged GM-CPHD baseline; returns (state, estimate)."""
    return _tagged_core_step(state, Z, models, birth, clutter, config, True)
