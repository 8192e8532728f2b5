"""Subject-level bootstrap F-test for equal FNMR across G groups.

Observed statistic::

    F = [sum_g N_g (pi_g - pi)^2 / (G-1)] /
        [sum_g N_g pi_g (1 - pi_g)(1 + (m0_g - 1) rho_g) / (N - G)]

The reference distribution resamples subjects (with their full decision
vectors) independently within each group, shifts every bootstrap group rate
by ``pi - pi_g`` so that all groups share the pooled rate, and recomputes the
statistic with the bootstrap decision counts, m0 and rho.
"""

from __future__ import annotations

import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import GroupDataset, StudyDataset
from .estimators import GroupEstimates, estimate_fnmr, estimate_group
from .streams import ReplicateStreams, check_seed

DEFAULT_REPLICATES = 999
DEFAULT_ALPHA = 0.05
BLOCK_SIZE = 128


class UndefinedStatisticError(ArithmeticError):
    """The F denominator is not positive; ``terms`` holds per-group variance terms."""

    def __init__(self, message, terms=None):
        super().__init__(message)
        self.terms = terms or {}


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = DEFAULT_REPLICATES
    alpha: float = DEFAULT_ALPHA
    seed: int | None = None

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        seed = secrets.randbits(64) if self.seed is None else check_seed(self.seed)
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "seed", seed)

    @property
    def K(self) -> int:
        return self.replicates


@dataclass(frozen=True)
class FTestResult:
    f_observed: float
    f_reference: np.ndarray = field(repr=False)
    p_value: float
    pooled_pi_hat: float
    groups: list[GroupEstimates]
    reject_at_alpha: bool
    alpha: float
    K: int
    seed: int
    degenerate_replicates: int = 0

    def to_dict(self, include_reference: bool = False) -> dict:
        out = {
            "f_observed": self.f_observed,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "K": self.K,
            "seed": self.seed,
            "pooled_pi_hat": self.pooled_pi_hat,
            "reject_at_alpha": self.reject_at_alpha,
            "groups": [
                {k: g.to_dict()[k] for k in ("group_id", "pi_hat", "rho_hat", "m0", "n_pi")}
                for g in self.groups
            ],
            "degenerate_replicates": self.degenerate_replicates,
        }
        if include_reference:
            out["f_reference"] = [None if not np.isfinite(v) else float(v) for v in self.f_reference]
        return out


def pooled_fnmr(groups: list[GroupEstimates]) -> float:
    """Decision-weighted mean of the group rates."""
    if len(groups) < 2:
        raise ValueError(f"need at least two groups, got {len(groups)}")
    weights = np.array([g.n_pi for g in groups], dtype=np.float64)
    rates = np.array([g.pi_hat for g in groups])
    if np.any(weights < 1):
        raise ValueError("every group needs at least one decision")
    return float(np.sum(weights * rates) / np.sum(weights))


def _pooled_exact(study: StudyDataset) -> float:
    errors = sum(int(g.errors.sum()) for g in study.groups)
    return errors / study.N


def f_statistic(groups: list[GroupEstimates], pooled: float) -> float:
    G = len(groups)
    if G < 2:
        raise ValueError(f"need at least two groups, got {G}")
    n = np.array([g.n_pi for g in groups], dtype=np.float64)
    pi = np.array([g.pi_hat for g in groups])
    if np.all(pi == pi[0]):
        return 0.0
    between = float(np.sum(n * (pi - pooled) ** 2)) / (G - 1)
    dof = int(n.sum()) - G
    terms = n * pi * (1.0 - pi) * (1.0 + (np.array([g.m0 for g in groups]) - 1.0) * np.array(
        [g.rho_hat for g in groups]
    ))
    within = float(np.sum(terms))
    if dof <= 0 or within <= 0.0:
        raise UndefinedStatisticError(
            f"F is undefined: within-group variance sum {within:.6g} with {dof} degrees of freedom",
            {g.group_id: float(t) for g, t in zip(groups, terms)},
        )
    return between / (within / dof)


def resample_group(g: GroupDataset, plan=None, rng: np.random.Generator | None = None) -> GroupDataset:
    """Draw n_g subjects with replacement, keeping each drawn subject's decisions.

    ``plan`` is a vector of 0-based subject indices; when omitted it is drawn
    from ``rng``.
    """
    if plan is None:
        rng = rng if rng is not None else np.random.default_rng()
        plan = rng.integers(0, g.n_subjects, size=g.n_subjects)
    plan = np.asarray(plan, dtype=np.int64)
    if plan.shape != (g.n_subjects,):
        raise ValueError(f"plan must hold {g.n_subjects} indices, got shape {plan.shape}")
    return g.take(plan)


def centered_bootstrap_fnmr(resampled, pi_hat_g: float, pooled: float) -> float:
    """Bootstrap rate shifted onto the pooled rate; may leave [0, 1]."""
    return estimate_fnmr(resampled) - pi_hat_g + pooled


@dataclass
class ReplicateSums:
    """Per-replicate sufficient statistics of one resampled group."""

    errors: np.ndarray
    decisions: np.ndarray
    sq_attempts: np.ndarray | None = None
    sq_errors: np.ndarray | None = None
    cross: np.ndarray | None = None

    @property
    def rate(self) -> np.ndarray:
        return self.errors / self.decisions

    @property
    def m0(self) -> np.ndarray:
        return self.sq_attempts / self.decisions

    def rho(self) -> np.ndarray:
        p = self.rate
        num = (
            self.sq_errors
            - 2.0 * p * self.cross
            + p * p * self.sq_attempts
            - self.errors * (1.0 - 2.0 * p)
            - self.decisions * p * p
        )
        den = p * (1.0 - p) * (self.sq_attempts - self.decisions)
        out = np.zeros_like(p)
        ok = den > 0
        np.divide(num, den, out=out, where=ok)
        return out


def replicate_sums(errors, attempts, streams: ReplicateStreams, replicates, group: int,
                   full: bool = True) -> ReplicateSums:
    """Resample one group for each replicate index and reduce to sums."""
    e = np.asarray(errors, dtype=np.int64)
    m = np.asarray(attempts, dtype=np.int64)
    idx = streams.indices(replicates, group, m.size)
    mm = e[idx]
    if not full and m.min() == m.max():
        return ReplicateSums(
            errors=mm.sum(axis=1).astype(np.float64),
            decisions=np.full(idx.shape[0], float(m.sum())),
        )
    me = m[idx]
    sums = ReplicateSums(
        errors=mm.sum(axis=1).astype(np.float64),
        decisions=me.sum(axis=1).astype(np.float64),
    )
    if full:
        sums.sq_attempts = (me * me).sum(axis=1).astype(np.float64)
        sums.sq_errors = (mm * mm).sum(axis=1).astype(np.float64)
        sums.cross = (mm * me).sum(axis=1).astype(np.float64)
    return sums


def map_blocks(fn, K: int, threads: int = 1, block: int = BLOCK_SIZE) -> list:
    """Apply ``fn`` to fixed replicate blocks; results come back in block order."""
    blocks = [np.arange(s, min(s + block, K)) for s in range(0, K, block)]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def bootstrap_f_values(counts, pi_hats: np.ndarray, pooled: float, streams: ReplicateStreams,
                       replicates: np.ndarray) -> np.ndarray:
    """F statistics for a block of replicates; ``inf`` marks an undefined replicate."""
    G = len(counts)
    sums = [replicate_sums(e, m, streams, replicates, g) for g, (e, m) in enumerate(counts)]
    n_b = np.vstack([s.decisions for s in sums])
    c = np.vstack([s.rate for s in sums]) - pi_hats[:, None] + pooled
    m0 = np.vstack([s.m0 for s in sums])
    rho = np.vstack([s.rho() for s in sums])
    total = n_b.sum(axis=0)
    pbar = (n_b * c).sum(axis=0) / total
    between = (n_b * (c - pbar) ** 2).sum(axis=0) / (G - 1)
    flat = np.ptp(c, axis=0) == 0
    between[flat] = 0.0
    var = np.clip(c * (1.0 - c), 0.0, None)
    within = (n_b * var * (1.0 + (m0 - 1.0) * rho)).sum(axis=0) / (total - G)
    out = np.full(len(replicates), np.inf)
    ok = (within > 0) & (total - G > 0)
    np.divide(between, within, out=out, where=ok)
    out[flat] = 0.0
    return out


def bootstrap_f_test(study: StudyDataset, cfg: BootstrapConfig | None = None,
                     threads: int = 1) -> FTestResult:
    cfg = cfg or BootstrapConfig()
    if study.G < 2:
        raise ValueError(f"need at least two groups, got {study.G}")
    estimates = [estimate_group(g) for g in study.groups]
    pooled = _pooled_exact(study)
    f_obs = f_statistic(estimates, pooled)

    counts = [(g.errors, g.attempts) for g in study.groups]
    pi_hats = np.array([e.pi_hat for e in estimates])
    streams = ReplicateStreams(cfg.seed)
    parts = map_blocks(
        lambda r: bootstrap_f_values(counts, pi_hats, pooled, streams, r), cfg.K, threads
    )
    f_ref = np.concatenate(parts)
    exceed = int(np.count_nonzero(f_ref >= f_obs))
    p = (1 + exceed) / (cfg.K + 1)
    return FTestResult(
        f_observed=f_obs,
        f_reference=f_ref,
        p_value=p,
        pooled_pi_hat=pooled,
        groups=estimates,
        reject_at_alpha=p < cfg.alpha,
        alpha=cfg.alpha,
        K=cfg.K,
        seed=cfg.seed,
        degenerate_replicates=int(np.count_nonzero(np.isinf(f_ref))),
    )
