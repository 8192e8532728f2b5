"""FNMR point estimates and variances under within-subject correlation.

Decisions on the same subject share a common correlation rho; decisions on
different subjects are independent. Everything here only needs the
per-subject error counts ``e_i`` and attempt counts ``m_i``, so the functions
accept any object exposing ``errors`` and ``attempts`` arrays (a
:class:`~fnmr_audit.data.GroupDataset` or :class:`SubjectCounts`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EstimationError(ValueError):
    pass


class DegenerateRateError(EstimationError):
    """The estimated rate is 0 or 1, so the correlation is 0/0."""


class InestimableCorrelationError(EstimationError):
    """No subject contributes a pair of decisions."""


@dataclass(frozen=True)
class SubjectCounts:
    errors: np.ndarray
    attempts: np.ndarray
    group_id: str = ""


@dataclass(frozen=True)
class GroupEstimates:
    group_id: str
    pi_hat: float
    rho_hat: float
    m0: float
    n_pi: int
    n_subjects: int
    var_pi_hat: float
    degenerate: bool = False
    rho_estimable: bool = True

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "pi_hat": self.pi_hat,
            "rho_hat": self.rho_hat,
            "m0": self.m0,
            "n_pi": self.n_pi,
            "n_subjects": self.n_subjects,
            "var_pi_hat": self.var_pi_hat,
            "degenerate": self.degenerate,
            "rho_estimable": self.rho_estimable,
        }


def _counts(g):
    e = np.asarray(g.errors, dtype=np.int64)
    m = np.asarray(g.attempts, dtype=np.int64)
    if m.size == 0 or int(m.sum()) < 1:
        raise EstimationError("group has no decisions")
    return e, m


def estimate_fnmr(g) -> float:
    """Total errors over total decisions."""
    e, m = _counts(g)
    return int(e.sum()) / int(m.sum())


def compute_m0(g) -> float:
    """Effective attempts per subject, sum(m_i^2) / N_pi."""
    _, m = _counts(g)
    return int((m * m).sum()) / int(m.sum())


def rho_numerator(e, m, pi: float) -> float:
    """Sum over subjects of sum_{j != j'} (D_ij - pi)(D_ij' - pi).

    Per subject this is (sum_j dev_j)^2 - sum_j dev_j^2, where the squared
    deviations total e(1-pi)^2 + (m-e)pi^2 because the decisions are binary.
    """
    e = np.asarray(e, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    total_dev = e - m * pi
    sq_dev = e * (1.0 - pi) ** 2 + (m - e) * pi**2
    return float(np.sum(total_dev * total_dev - sq_dev))


def estimate_rho(g) -> float:
    """Moment estimator of the intra-class correlation.

    Raises DegenerateRateError when the rate is 0 or 1 and
    InestimableCorrelationError when every subject has a single attempt.
    """
    e, m = _counts(g)
    pairs = int((m * (m - 1)).sum())
    if pairs == 0:
        raise InestimableCorrelationError("no subject has two or more attempts")
    errors, total = int(e.sum()), int(m.sum())
    if errors == 0 or errors == total:
        raise DegenerateRateError(f"estimated rate is {errors / total}")
    pi = errors / total
    return rho_numerator(e, m, pi) / (pi * (1.0 - pi) * pairs)


def variance_fnmr(pi: float, rho: float, g) -> float:
    """Var(pi_hat) = pi(1-pi)(1 + (m0-1) rho) / N_pi."""
    if not 0.0 <= pi <= 1.0:
        raise EstimationError(f"pi must lie in [0, 1], got {pi}")
    _, m = _counts(g)
    n_pi = int(m.sum())
    m0 = int((m * m).sum()) / n_pi
    return pi * (1.0 - pi) * (1.0 + (m0 - 1.0) * rho) / n_pi


def variance_fnmr_pairs(pi: float, rho: float, g) -> float:
    """Same variance written as N_pi^-2 pi(1-pi)[N_pi + rho sum m_i(m_i-1)]."""
    if not 0.0 <= pi <= 1.0:
        raise EstimationError(f"pi must lie in [0, 1], got {pi}")
    _, m = _counts(g)
    n_pi = int(m.sum())
    pairs = int((m * (m - 1)).sum())
    return pi * (1.0 - pi) * (n_pi + rho * pairs) / n_pi**2


def estimate_group(g) -> GroupEstimates:
    """Rate, correlation, m0 and variance for one group.

    A 0 or 1 rate sets rho_hat to 0 and marks the estimate degenerate; the
    variance is zero either way. Single-attempt designs also get rho_hat = 0
    (``rho_estimable=False``) since rho then has no effect on the variance.
    """
    e, m = _counts(g)
    pi = estimate_fnmr(g)
    degenerate = False
    estimable = True
    try:
        rho = estimate_rho(g)
    except DegenerateRateError:
        rho, degenerate = 0.0, True
    except InestimableCorrelationError:
        rho, estimable = 0.0, False
        degenerate = pi in (0.0, 1.0)
    return GroupEstimates(
        group_id=str(getattr(g, "group_id", "")),
        pi_hat=pi,
        rho_hat=rho,
        m0=compute_m0(g),
        n_pi=int(m.sum()),
        n_subjects=int(m.size),
        var_pi_hat=variance_fnmr(pi, rho, g),
        degenerate=degenerate,
        rho_estimable=estimable,
    )
