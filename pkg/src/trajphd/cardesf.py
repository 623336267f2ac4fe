"""Cardinality-distribution machinery for the CPHD-style recursions.

Holds truncated cardinality probability mass functions, elementary symmetric
functions (ESF) evaluated by the one-pass recurrence, the prediction
convolution (binomial survival thinning plus birth), and the Psi update
factors. Linear-domain entry points implement the published formulas
directly; the filters use the log-domain variants, which evaluate the same
sums with logsumexp so that factorial growth never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom

from .errors import DegenerateMixtureError, ImpossibleMeasurementError, InvalidComponentError

__all__ = [
    "CardinalityPmf",
    "EsfTable",
    "esf",
    "log_esf",
    "leave_one_out_log_esf",
    "predict_cardinality",
    "psi_factor",
    "log_psi_table",
    "log_psi_update_factors",
    "update_cardinality",
]

DEFAULT_N_MAX = 100

_PMF_TOL = 1e-9


@dataclass(frozen=True)
class CardinalityPmf:
    """Truncated PMF over the number of targets or trajectories.

    ``probs[n]`` is the probability of n objects, n = 0..N_max. ``lost_mass``
    records how much probability was cut off by truncation before the factory
    renormalized.
    """

    probs: np.ndarray
    lost_mass: float = 0.0

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidComponentError("cardinality PMF must be a nonempty vector")
        if probs.min() < 0.0:
            raise InvalidComponentError("cardinality PMF has negative entries")
        if abs(probs.sum() - 1.0) > _PMF_TOL:
            raise InvalidComponentError("cardinality PMF does not sum to 1")

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(self.probs @ np.arange(self.probs.size))

    @staticmethod
    def delta(n: int, n_max: int = DEFAULT_N_MAX) -> "CardinalityPmf":
        if not 0 <= n <= n_max:
            raise InvalidComponentError("delta location outside [0, n_max]")
        probs = np.zeros(n_max + 1)
        probs[n] = 1.0
        return CardinalityPmf(probs)

    @staticmethod
    def poisson(rate: float, n_max: int = DEFAULT_N_MAX) -> "CardinalityPmf":
        """Poisson PMF truncated at n_max and renormalized."""
        if rate < 0.0:
            raise InvalidComponentError("Poisson rate must be nonnegative")
        if rate == 0.0:
            return CardinalityPmf.delta(0, n_max)
        n = np.arange(n_max + 1)
        probs = np.exp(n * np.log(rate) - rate - gammaln(n + 1))
        kept = probs.sum()
        return CardinalityPmf(probs / kept, lost_mass=float(1.0 - kept))

    @staticmethod
    def from_probs(probs, renormalize: bool = False) -> "CardinalityPmf":
        probs = np.asarray(probs, dtype=float)
        if renormalize:
            total = probs.sum()
            if total <= 0.0:
                raise ImpossibleMeasurementError("cannot normalize zero-mass PMF")
            return CardinalityPmf(probs / total, lost_mass=0.0)
        return CardinalityPmf(probs)


@dataclass(frozen=True)
class EsfTable:
    """Elementary symmetric functions of a multiset: values[j] = e_j."""

    values: np.ndarray = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.size == 0 or values[0] != 1.0:
            raise InvalidComponentError("ESF table must start with e_0 = 1")
        if not np.isfinite(values).all():
            raise InvalidComponentError("ESF table has non-finite entries")


def esf(values) -> EsfTable:
    """Elementary symmetric functions by the one-pass recurrence.

    Prepending an element x maps e_j -> e_j + x * e_{j-1}; iterating over the
    multiset fills the whole table in O(n^2). The empty multiset gives [1].
    """
    values = np.asarray(values, dtype=float)
    table = np.zeros(values.size + 1)
    table[0] = 1.0
    for x in values:
        table[1:] = table[1:] + x * table[:-1]
    return EsfTable(table)


def log_esf(log_values: np.ndarray) -> np.ndarray:
    """log e_j of a multiset given elementwise logs; robust to huge inputs."""
    log_values = np.asarray(log_values, dtype=float)
    table = np.full(log_values.size + 1, -np.inf)
    table[0] = 0.0
    for lx in log_values:
        table[1:] = np.logaddexp(table[1:], lx + table[:-1])
    return table


def leave_one_out_log_esf(log_values: np.ndarray) -> np.ndarray:
    """log ESF tables of every size-(m-1) subset obtained by one deletion.

    Returns an (m, m) matrix whose row r is log e_j of the multiset without
    element r, j = 0..m-1. All rows are advanced jointly, skipping row r when
    element r is folded in.
    """
    log_values = np.asarray(log_values, dtype=float)
    m = log_values.size
    tables = np.full((m, m), -np.inf)
    if m == 0:
        return tables
    tables[:, 0] = 0.0
    for r in range(m):
        mask = np.arange(m) != r
        tables[mask, 1:] = np.logaddexp(
            tables[mask, 1:], log_values[r] + tables[mask, :-1]
        )
    return tables


def predict_cardinality(
    prior: CardinalityPmf, p_S: float, birth: CardinalityPmf
) -> CardinalityPmf:
    """Survival-thinned prior convolved with the birth cardinality.

    Each of n existing objects survives independently with probability p_S,
    so the survivor count given n is binomial(n, p_S); the birth count adds
    independently. Truncated back to the prior's support and renormalized,
    with the clipped probability recorded as lost mass.
    """
    if not 0.0 <= p_S <= 1.0:
        raise InvalidComponentError("p_S must lie in [0, 1]")
    n_max = max(prior.n_max, birth.n_max)
    n = np.arange(prior.n_max + 1)
    # thinned[j] = sum_n prior(n) * C(n, j) p_S^j (1-p_S)^(n-j)
    pmf_matrix = binom.pmf(n[None, :], n[:, None], p_S)
    thinned = prior.probs @ pmf_matrix
    full = np.convolve(thinned, birth.probs)
    kept = full[: n_max + 1]
    lost = float(full[n_max + 1:].sum())
    total = kept.sum()
    if total <= 0.0:
        raise ImpossibleMeasurementError("predicted cardinality lost all mass")
    return CardinalityPmf(kept / total, lost_mass=lost)


def _log_pow(exponent: np.ndarray, log_base: float) -> np.ndarray:
    """exponent * log_base with the convention 0 * (-inf) = 0."""
    with np.errstate(invalid="ignore"):
        out = np.where(exponent == 0, 0.0, exponent * log_base)
    return out


def log_psi_table(
    u: int,
    log_sum_w: float,
    log_esf_values: np.ndarray,
    log_clutter_pmf,
    n_measurements: int,
    log_one_minus_pd: float,
    n_max: int,
) -> np.ndarray:
    """log Psi^u(n) for n = 0..n_max as a logsumexp over the order index j.

    ``log_esf_values`` is the log-ESF table of the likelihood multiset Lambda
    (of the full measurement set, or a deleted one for the per-measurement
    factors); ``log_clutter_pmf`` maps an integer clutter count to its log
    probability; ``n_measurements`` is the size of the multiset behind the
    ESF table.
    """
    if u not in (0, 1):
        raise InvalidComponentError("u must be 0 or 1")
    mz = n_measurements
    if log_esf_values.size != mz + 1:
        raise InvalidComponentError("ESF table size does not match |Z|")
    n = np.arange(n_max + 1)[:, None]
    j = np.arange(mz + 1)[None, :]
    # Terms with j > n - u are outside the sum; mark them invalid.
    valid = j <= n - u
    surv = n - j - u
    clutter = np.array([log_clutter_pmf(mz - jj) for jj in range(mz + 1)])
    log_terms = (
        gammaln(mz - j + 1)
        + clutter[None, :]
        + _log_pow(surv, log_one_minus_pd)
        - _log_pow(j + u + np.zeros_like(surv), log_sum_w)
        + gammaln(n + 1)
        - gammaln(np.where(valid, surv, 0) + 1)
        + log_esf_values[None, :]
    )
    log_terms = np.where(valid, log_terms, -np.inf)
    with np.errstate(invalid="ignore"):
        return logsumexp(log_terms, axis=1)


def log_psi_update_factors(
    log_lambda: np.ndarray,
    log_clutter_pmf,
    log_one_minus_pd: float,
    log_sum_w: float,
    log_rho: np.ndarray,
):
    """Everything a CPHD-style measurement update needs, in log domain.

    Parameters
    ----------
    log_lambda : ndarray, shape (m,)
        Elementwise log of the likelihood multiset Lambda(w, Z).
    log_clutter_pmf : callable
        Integer clutter count -> log probability.
    log_one_minus_pd, log_sum_w : float
        log(1 - p_D) and log of the total mixture weight.
    log_rho : ndarray, shape (n_max + 1,)
        Log of the predicted cardinality PMF.

    Returns
    -------
    log_psi0 : ndarray, shape (n_max + 1,)
        log Psi^0[w, Z](n); drives the cardinality update.
    log_ip0, log_ip1 : float
        log <Psi^0, rho> and log <Psi^1, rho>.
    log_ip1_deleted : ndarray, shape (m,)
        log <Psi^1[w, Z minus z], rho> for each measurement z. These share
        the scales of log_ip0, so ratios of the returned quantities are
        exact.
    """
    log_lambda = np.asarray(log_lambda, dtype=float)
    log_rho = np.asarray(log_rho, dtype=float)
    m = log_lambda.size
    n_max = log_rho.size - 1
    full_esf = log_esf(log_lambda)
    log_psi0 = log_psi_table(
        0, log_sum_w, full_esf, log_clutter_pmf, m, log_one_minus_pd, n_max
    )
    log_psi1 = log_psi_table(
        1, log_sum_w, full_esf, log_clutter_pmf, m, log_one_minus_pd, n_max
    )
    with np.errstate(invalid="ignore"):
        log_ip0 = float(logsumexp(log_psi0 + log_rho))
        log_ip1 = float(logsumexp(log_psi1 + log_rho))
    if m == 0:
        return log_psi0, log_ip0, log_ip1, np.empty(0)

    # <Psi^1[w, Z minus z], rho> for all z at once. The n-dependent part of
    # each Psi^1 term is shared across deletions, so it is collapsed into
    # c1[j] once; the deletion-specific part is the leave-one-out ESF row.
    n = np.arange(n_max + 1)[:, None]
    j = np.arange(m)[None, :]
    valid = n >= j + 1
    surv = n - j - 1
    n_terms = (
        _log_pow(surv, log_one_minus_pd)
        + gammaln(n + 1)
        - gammaln(np.where(valid, surv, 0) + 1)
        + log_rho[:, None]
    )
    n_terms = np.where(valid, n_terms, -np.inf)
    with np.errstate(invalid="ignore"):
        c1 = logsumexp(n_terms, axis=0) - _log_pow(j[0] + 1, log_sum_w)
    loo = leave_one_out_log_esf(log_lambda)
    clutter = np.array([log_clutter_pmf(m - 1 - jj) for jj in range(m)])
    deleted_terms = gammaln(m - 1 - j[0] + 1) + clutter + loo + c1
    with np.errstate(invalid="ignore"):
        log_ip1_deleted = logsumexp(deleted_terms, axis=1)
    return log_psi0, log_ip0, log_ip1, log_ip1_deleted


def psi_factor(
    u: int,
    weights,
    measurements,
    clutter_card: CardinalityPmf,
    clutter_density_at,
    p_D: float,
    likelihood_matrix,
    n_max: int = DEFAULT_N_MAX,
) -> np.ndarray:
    """Psi^u[w, Z](n) for n = 0..n_max, in linear domain.

    ``likelihood_matrix[j, i]`` is q_j(z_i), the predicted-measurement density
    of component j at measurement i; ``clutter_density_at`` maps a measurement
    to its spatial clutter density. Internally everything is evaluated in log
    domain; the result is exponentiated at the end, which is exact whenever
    the true values fit in double precision.
    """
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0.0:
        raise DegenerateMixtureError("Psi factor requires positive total weight")
    q = np.atleast_2d(np.asarray(likelihood_matrix, dtype=float))
    measurements = list(measurements)
    mz = len(measurements)
    if mz == 0:
        q = q.reshape(weights.size, 0)
    if q.shape != (weights.size, mz):
        raise InvalidComponentError("likelihood matrix shape does not match")
    with np.errstate(divide="ignore"):
        log_lambda = np.array(
            [
                np.log(p_D) - np.log(clutter_density_at(z)) + _log_dot(weights, q[:, i])
                for i, z in enumerate(measurements)
            ]
        )
        log_probs = np.log(clutter_card.probs)

    def log_clutter_pmf(m: int) -> float:
        if 0 <= m <= clutter_card.n_max:
            return float(log_probs[m])
        return -np.inf

    with np.errstate(divide="ignore"):
        log_one_minus_pd = np.log1p(-p_D) if p_D < 1.0 else -np.inf
        table = log_psi_table(
            u,
            float(np.log(total)),
            log_esf(log_lambda),
            log_clutter_pmf,
            mz,
            log_one_minus_pd,
            n_max,
        )
    return np.exp(table)


def _log_dot(weights: np.ndarray, q_col: np.ndarray) -> float:
    """log(w^T q) with underflow-free accumulation."""
    with np.errstate(divide="ignore"):
        terms = np.log(weights) + np.log(q_col)
    return float(logsumexp(terms))


def update_cardinality(prior: CardinalityPmf, psi0) -> CardinalityPmf:
    """Posterior cardinality proportional to Psi^0(n) * prior(n).

    ``psi0`` may carry an arbitrary positive common scale; it cancels in the
    normalization.
    """
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.size < prior.probs.size:
        raise InvalidComponentError("psi0 shorter than the cardinality PMF")
    unnorm = prior.probs * psi0[: prior.probs.size]
    total = unnorm.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ImpossibleMeasurementError(
            "cardinality update normalizer is zero or non-finite"
        )
    return CardinalityPmf(unnorm / total)
