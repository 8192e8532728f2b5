"""Single margin of error M for flagging groups whose FNMR departs from the pooled rate.

Each replicate resamples every group, centers the bootstrap rates on the
pooled rate and records phi = max_g |centered_g - pooled|. M is the
1 - alpha/2 quantile of the phi values (nearest rank); groups whose observed
rate lies outside (pooled - M, pooled + M) are flagged.

The 1 - alpha/2 level follows the published procedure even though the
accompanying text describes the exceedance chance as alpha.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import StudyDataset
from .estimators import estimate_fnmr
from .ftest import BootstrapConfig, _pooled_exact, map_blocks, replicate_sums
from .streams import ReplicateStreams


@dataclass(frozen=True)
class GroupFlag:
    group_id: str
    pi_hat: float
    flagged: bool


@dataclass(frozen=True)
class MoeResult:
    pooled_pi_hat: float
    margin: float
    interval: tuple[float, float]
    groups: list[GroupFlag]
    phi_distribution: np.ndarray = field(repr=False)
    alpha: float
    K: int
    seed: int

    @property
    def flagged(self) -> list[str]:
        return [g.group_id for g in self.groups if g.flagged]

    @classmethod
    def from_dict(cls, d: dict) -> "MoeResult":
        return cls(
            pooled_pi_hat=d["pooled_pi_hat"],
            margin=d["margin"],
            interval=tuple(d["interval"]),
            groups=[GroupFlag(g["group_id"], g["pi_hat"], g["flagged"]) for g in d["groups"]],
            phi_distribution=np.asarray(d.get("phi_distribution") or [], dtype=np.float64),
            alpha=d["alpha"],
            K=d["K"],
            seed=d["seed"],
        )

    def to_dict(self, include_phi: bool = False) -> dict:
        out = {
            "pooled_pi_hat": self.pooled_pi_hat,
            "margin": self.margin,
            "interval": list(self.interval),
            "groups": [
                {"group_id": g.group_id, "pi_hat": g.pi_hat, "flagged": g.flagged}
                for g in self.groups
            ],
            "alpha": self.alpha,
            "K": self.K,
            "seed": self.seed,
        }
        if include_phi:
            out["phi_distribution"] = [float(v) for v in self.phi_distribution]
        return out


def max_abs_deviation(centered, pooled: float) -> float:
    centered = np.asarray(centered, dtype=np.float64)
    if centered.size < 2:
        raise ValueError("need at least two group rates")
    return float(np.max(np.abs(centered - pooled)))


def nearest_rank(values, level: float) -> float:
    """Order statistic at 1-based rank ceil(level * K)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("empty sample")
    # rounding guards against 0.975 * 1000 landing a hair above 975
    rank = math.ceil(round(level * v.size, 9))
    return float(v[min(max(rank, 1), v.size) - 1])


def interval_bounds(pooled: float, margin: float) -> tuple[float, float]:
    return (pooled - margin, pooled + margin)


def flag_groups(rates: dict[str, float], pooled: float, margin: float) -> list[GroupFlag]:
    lower, upper = interval_bounds(pooled, margin)
    return [GroupFlag(gid, r, bool(r < lower or r > upper)) for gid, r in rates.items()]


def phi_values(counts, pi_hats: np.ndarray, streams: ReplicateStreams,
               replicates: np.ndarray) -> np.ndarray:
    # centered_g - pooled reduces to raw_g - pi_g, so phi does not depend on the pooled rate
    dev = np.vstack([
        replicate_sums(e, m, streams, replicates, g, full=False).rate - pi_hats[g]
        for g, (e, m) in enumerate(counts)
    ])
    return np.abs(dev).max(axis=0)


def phi_distribution(counts, cfg: BootstrapConfig, threads: int = 1) -> np.ndarray:
    pi_hats = np.array([int(np.sum(e)) / int(np.sum(m)) for e, m in counts])
    streams = ReplicateStreams(cfg.seed)
    return np.concatenate(
        map_blocks(lambda r: phi_values(counts, pi_hats, streams, r), cfg.K, threads)
    )


def margin_from_counts(counts, cfg: BootstrapConfig, threads: int = 1) -> float:
    """M for groups given as ``(errors, attempts)`` arrays; used by the simulator."""
    return nearest_rank(phi_distribution(counts, cfg, threads), 1.0 - cfg.alpha / 2.0)


def margin_of_error(study: StudyDataset, cfg: BootstrapConfig | None = None,
                    threads: int = 1) -> MoeResult:
    cfg = cfg or BootstrapConfig()
    if study.G < 2:
        raise ValueError(f"need at least two groups, got {study.G}")
    pooled = _pooled_exact(study)
    counts = [(g.errors, g.attempts) for g in study.groups]
    phi = phi_distribution(counts, cfg, threads)
    margin = nearest_rank(phi, 1.0 - cfg.alpha / 2.0)
    rates = {g.group_id: estimate_fnmr(g) for g in study.groups}
    return MoeResult(
        pooled_pi_hat=pooled,
        margin=margin,
        interval=interval_bounds(pooled, margin),
        groups=flag_groups(rates, pooled, margin),
        phi_distribution=phi,
        alpha=cfg.alpha,
        K=cfg.K,
        seed=cfg.seed,
    )


def format_bound(x: float) -> str:
    return f"{round(x, 6):g}"


def write_flag_table(result: MoeResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group_id", "flagged"))
        for g in result.groups:
            w.writerow((g.group_id, int(g.flagged)))


def write_figure_series(result: MoeResult, path) -> None:
    """Per-group rates with the pooled line and interval bounds, one row per group."""
    lower, upper = result.interval
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group_id", "pi_hat", "pooled_pi_hat", "lower", "upper", "flagged"))
        for g in result.groups:
            w.writerow((g.group_id, repr(g.pi_hat), repr(result.pooled_pi_hat),
                        repr(lower), repr(upper), int(g.flagged)))
