"""Gaussian algebra over trajectory states.

A trajectory is a birth time plus a contiguous sequence of target states.
This module provides the building blocks for Gaussian-mixture densities over
trajectories: weighted Gaussian components whose mean stacks the whole state
sequence, single-component prediction and measurement update (Kalman algebra
acting on the trailing state), the L-scan covariance truncation, and
expected-count queries.

All types are immutable value types and all operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidComponentError, SingularInnovationError

__all__ = [
    "LinearModels",
    "TrajectoryComponent",
    "GmTrajectoryPhd",
    "Trajectory",
    "TrajectorySet",
    "predict_component",
    "update_component",
    "lscan_truncate",
    "expected_count",
    "expected_count_in",
    "gaussian_logpdf",
]

# Relative tolerance for symmetry checks and the eigenvalue floor used to
# accept matrices as PSD despite floating-point drift.
_SYM_RTOL = 1e-9
_PSD_FLOOR = 1e-9

# Innovation covariances with eigenvalue spread beyond this are refused.
_MAX_CONDITION = 1e12


def _as_readonly(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_covariance(P: np.ndarray, what: str) -> None:
    scale = max(np.abs(P).max(initial=0.0), 1.0)
    if not np.allclose(P, P.T, rtol=0.0, atol=_SYM_RTOL * scale):
        raise InvalidComponentError(f"{what} is not symmetric")
    floor = -_PSD_FLOOR * max(np.trace(P), 1.0)
    if np.linalg.eigvalsh(P).min() < floor:
        raise InvalidComponentError(f"{what} has a negative eigenvalue")


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return (P + P.T) / 2.0


@dataclass(frozen=True)
class LinearModels:
    """Linear-Gaussian motion and measurement model with constant p_S, p_D.

    Attributes
    ----------
    F, Q : ndarray
        State transition matrix and process-noise covariance, (n_x, n_x).
    H, R : ndarray
        Measurement matrix (n_z, n_x) and noise covariance (n_z, n_z).
    p_S, p_D : float
        Survival and detection probabilities, both in [0, 1].
    """

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    p_S: float
    p_D: float

    def __post_init__(self):
        object.__setattr__(self, "F", _as_readonly(self.F))
        object.__setattr__(self, "Q", _as_readonly(self.Q))
        object.__setattr__(self, "H", _as_readonly(self.H))
        object.__setattr__(self, "R", _as_readonly(self.R))
        n_x = self.F.shape[0]
        if self.F.shape != (n_x, n_x) or self.Q.shape != (n_x, n_x):
            raise InvalidComponentError("F and Q must be square with equal size")
        n_z = self.H.shape[0]
        if self.H.shape != (n_z, n_x) or self.R.shape != (n_z, n_z):
            raise InvalidComponentError("H and R dimensions are inconsistent")
        _check_covariance(self.Q, "Q")
        _check_covariance(self.R, "R")
        if not (0.0 <= self.p_S <= 1.0 and 0.0 <= self.p_D <= 1.0):
            raise InvalidComponentError("p_S and p_D must lie in [0, 1]")

    @property
    def n_x(self) -> int:
        return self.F.shape[0]

    @property
    def n_z(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class TrajectoryComponent:
    """One weighted Gaussian over a trajectory.

    The mean stacks the state sequence oldest-first, so a component born at
    ``birth_time`` with duration i covers steps birth_time .. birth_time+i-1
    and ``mean`` has length i * state_dim.
    """

    weight: float
    birth_time: int
    mean: np.ndarray
    cov: np.ndarray
    state_dim: int

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_readonly(self.mean))
        object.__setattr__(self, "cov", _as_readonly(self.cov))
        if not (np.isfinite(self.weight) and self.weight >= 0.0):
            raise InvalidComponentError("weight must be finite and nonnegative")
        if self.mean.ndim != 1:
            raise InvalidComponentError("mean must be a vector")
        d = self.mean.size
        if self.state_dim < 1 or d == 0 or d % self.state_dim != 0:
            raise InvalidComponentError(
                "mean length must be a positive multiple of state_dim"
            )
        if self.cov.shape != (d, d):
            raise InvalidComponentError("cov shape does not match mean length")
        _check_covariance(self.cov, "cov")

    @property
    def duration(self) -> int:
        return self.mean.size // self.state_dim

    @property
    def last_step(self) -> int:
        """Time step of the trailing state."""
        return self.birth_time + self.duration - 1

    def states(self) -> np.ndarray:
        """State sequence as an array of shape (duration, state_dim)."""
        return self.mean.reshape(self.duration, self.state_dim)

    def trailing_mean(self) -> np.ndarray:
        return self.mean[-self.state_dim:]

    def trailing_cov(self) -> np.ndarray:
        return self.cov[-self.state_dim:, -self.state_dim:]


@dataclass(frozen=True)
class GmTrajectoryPhd:
    """Gaussian-mixture PHD over trajectories at a given time step.

    The container accepts components of any duration so that mixtures over
    both alive and dead trajectories can be represented; the filters maintain
    the alive constraint (birth_time + duration - 1 == time) on every
    component they propagate, checkable via :meth:`is_alive_mixture`.
    """

    components: tuple = field(default=())
    time: int = 0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        for c in self.components:
            if not isinstance(c, TrajectoryComponent):
                raise InvalidComponentError("components must be TrajectoryComponent")

    def is_alive_mixture(self) -> bool:
        return all(c.last_step == self.time for c in self.components)


@dataclass(frozen=True)
class Trajectory:
    """A birth time plus a contiguous state sequence, one row per step."""

    birth_time: int
    states: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        if states.shape[0] < 1:
            raise InvalidComponentError("trajectory must cover at least one step")

    @property
    def duration(self) -> int:
        return self.states.shape[0]

    @property
    def last_step(self) -> int:
        return self.birth_time + self.duration - 1

    def alive_at(self, k: int) -> bool:
        return self.birth_time <= k <= self.last_step

    def state_at(self, k: int) -> np.ndarray:
        if not self.alive_at(k):
            raise InvalidComponentError(f"trajectory not alive at step {k}")
        return self.states[k - self.birth_time]


@dataclass(frozen=True)
class TrajectorySet:
    """Ground truth or estimate: a finite set of trajectories."""

    trajectories: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for tr in self.trajectories:
            if not isinstance(tr, Trajectory):
                raise InvalidComponentError("entries must be Trajectory values")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def alive_view(self, k: int) -> "TrajectorySet":
        """Trajectories alive at step k, truncated to the steps up to k."""
        kept = []
        for tr in self.trajectories:
            if tr.alive_at(k):
                kept.append(
                    Trajectory(tr.birth_time, tr.states[: k - tr.birth_time + 1])
                )
        return TrajectorySet(tuple(kept))

    def states_at(self, k: int) -> np.ndarray:
        """Stacked states of the trajectories alive at step k."""
        rows = [tr.state_at(k) for tr in self.trajectories if tr.alive_at(k)]
        if not rows:
            return np.empty((0, 0))
        return np.stack(rows)


def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of a multivariate Gaussian, evaluated via Cholesky.

    Raises
    ------
    SingularInnovationError
        If ``cov`` cannot be factorized or is conditioned worse than 1e12.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 0.0 or eig[0] < eig[-1] / _MAX_CONDITION:
        raise SingularInnovationError("covariance is singular or ill-conditioned")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("covariance factorization failed") from exc
    u = np.linalg.solve(L, x - mean)
    return float(
        -0.5 * (x.size * np.log(2.0 * np.pi) + u @ u) - np.log(np.diag(L)).sum()
    )


def predict_component(
    c: TrajectoryComponent, models: LinearModels
) -> TrajectoryComponent:
    """Predict one trajectory component a single step ahead.

    The trailing state is propagated through F and appended; earlier states
    are untouched, so the top-left block of the output covariance equals the
    input covariance exactly. The weight is scaled by p_S.
    """
    n_x = models.n_x
    if c.state_dim != n_x:
        raise InvalidComponentError("component state_dim does not match models")
    P = c.cov
    last_cov = P[-n_x:, -n_x:]
    cross = P[:, -n_x:] @ models.F.T
    new_block = models.F @ last_cov @ models.F.T + models.Q
    d = c.mean.size
    cov = np.empty((d + n_x, d + n_x))
    cov[:d, :d] = P
    cov[:d, d:] = cross
    cov[d:, :d] = cross.T
    cov[d:, d:] = _symmetrize(new_block)
    mean = np.concatenate([c.mean, models.F @ c.mean[-n_x:]])
    return TrajectoryComponent(
        weight=models.p_S * c.weight,
        birth_time=c.birth_time,
        mean=mean,
        cov=cov,
        state_dim=n_x,
    )


def update_component(
    c: TrajectoryComponent, z: np.ndarray, models: LinearModels
):
    """Kalman update of a trajectory component against one measurement.

    Only the trailing state is observed; the gain carries the correction into
    every past state correlated with it. Returns ``(posterior, likelihood)``
    where the likelihood is the Gaussian density of ``z`` under the predicted
    measurement distribution. The posterior keeps the input weight; mixture
    weighting is the caller's job.
    """
    n_x = models.n_x
    if c.state_dim != n_x:
        raise InvalidComponentError("component state_dim does not match models")
    z = np.asarray(z, dtype=float)
    if z.shape != (models.n_z,):
        raise InvalidComponentError("measurement length does not match H")
    zbar = models.H @ c.mean[-n_x:]
    S = _symmetrize(models.H @ c.trailing_cov() @ models.H.T + models.R)
    loglik = gaussian_logpdf(z, zbar, S)
    chol = cho_factor(S, lower=True)
    # Cross covariance of the full trajectory with the predicted measurement.
    PHt = c.cov[:, -n_x:] @ models.H.T
    gain = cho_solve(chol, PHt.T).T
    mean = c.mean + gain @ (z - zbar)
    cov = _symmetrize(c.cov - gain @ PHt.T)
    posterior = TrajectoryComponent(
        weight=c.weight,
        birth_time=c.birth_time,
        mean=mean,
        cov=cov,
        state_dim=n_x,
    )
    return posterior, float(np.exp(loglik))


def lscan_truncate(c: TrajectoryComponent, L: int) -> TrajectoryComponent:
    """Drop covariance correlations outside the trailing L-step window.

    States older than the last L steps keep their marginal blocks but become
    independent of everything else; the trailing L*state_dim block is copied
    unchanged. A window covering the whole trajectory is a no-op.
    """
    if L < 1:
        raise InvalidComponentError("L must be >= 1")
    i = c.duration
    if i <= L:
        return c
    n_x = c.state_dim
    d = c.mean.size
    cov = np.zeros((d, d))
    for s in range(i - L):
        lo = s * n_x
        cov[lo:lo + n_x, lo:lo + n_x] = c.cov[lo:lo + n_x, lo:lo + n_x]
    w = L * n_x
    cov[-w:, -w:] = c.cov[-w:, -w:]
    return TrajectoryComponent(
        weight=c.weight,
        birth_time=c.birth_time,
        mean=c.mean,
        cov=cov,
        state_dim=n_x,
    )


def expected_count(phd: GmTrajectoryPhd) -> float:
    """Expected number of trajectories: the sum of mixture weights."""
    return float(sum(c.weight for c in phd.components))


def expected_count_in(phd: GmTrajectoryPhd, predicate) -> float:
    """Expected number of trajectories whose (birth_time, duration) matches.

    ``predicate`` is a callable of (birth_time, duration) returning truth.
    """
    return float(
        sum(c.weight for c in phd.components if predicate(c.birth_time, c.duration))
    )
