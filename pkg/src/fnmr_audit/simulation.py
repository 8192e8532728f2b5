"""Monte Carlo study of the margin of error over a parameter grid.

Decisions are generated from a beta-binomial subject model: each subject gets
its own error probability p_i ~ Beta(a, b) with a = pi(1-rho)/rho and
b = (1-pi)(1-rho)/rho, then m independent Bernoulli(p_i) decisions. That gives
mean pi and an intra-class correlation of exactly rho (1 / (a + b + 1)).
With rho = 0 decisions are i.i.d. Bernoulli(pi).

Every (cell, run, group) draws from its own SeedSequence stream, so a cell's
result depends only on its parameters and the seed, never on which other
cells share the grid or how many threads are used.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import GroupDataset, StudyDataset
from .ftest import BootstrapConfig
from .moe import margin_from_counts, nearest_rank

log = logging.getLogger(__name__)

PERCENTILES = (50.0, 75.0, 80.0, 90.0, 95.0, 97.5)
PERCENTILE_COLUMNS = ("p50", "p75", "p80", "p90", "p95", "p975")
CSV_COLUMNS = ("pi", "rho", "n", "m", "G", "R", "K", "alpha",
               *PERCENTILE_COLUMNS, "mean_M", "seed")
GRID_PARAMS = ("pi", "rho", "n", "m", "G")

PAPER_GRID = {
    "pi": [0.025, 0.05, 0.10, 0.15, 0.20],
    "rho": [0.05, 0.15, 0.25, 0.35, 0.45],
    "n": [100, 200, 400, 800],
    "m": [2, 3, 4, 6, 10],
    "G": [3, 4, 5, 6, 10, 15, 20, 30],
}
DESK_GRID = {
    "pi": [0.05, 0.10, 0.20],
    "rho": [0.05],
    "n": [100, 200],
    "m": [2, 3],
    "G": [3, 5, 10, 20],
}
PROFILES = {
    "paper": {"grid": PAPER_GRID, "R": 1000, "K": 999},
    "desk": {"grid": DESK_GRID, "R": 200, "K": 499},
}


@dataclass(frozen=True)
class SimConfig:
    pi: float
    rho: float
    n: int
    m: int
    G: int
    R: int = 1000
    K: int = 999
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.pi < 1.0:
            raise ValueError(f"pi must lie in (0, 1), got {self.pi}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        for name in ("n", "m", "G", "R", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    def cell_key(self) -> int:
        """32-bit key from the grid coordinates; identifies the cell's RNG streams."""
        text = json.dumps([float(self.pi), float(self.rho), int(self.n), int(self.m), int(self.G)])
        return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")

    def ledger_key(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SimCellResult:
    config: SimConfig
    percentiles: dict[float, float]
    mean_M: float
    runs: int
    margins: np.ndarray = field(default=None, repr=False, compare=False)

    def row(self) -> dict:
        c = self.config
        out = {"pi": c.pi, "rho": c.rho, "n": c.n, "m": c.m, "G": c.G,
               "R": c.R, "K": c.K, "alpha": c.alpha}
        for level, col in zip(PERCENTILES, PERCENTILE_COLUMNS):
            out[col] = self.percentiles[level]
        out["mean_M"] = self.mean_M
        out["seed"] = c.seed
        return out

    @classmethod
    def from_row(cls, row: dict) -> "SimCellResult":
        cfg = SimConfig(
            pi=float(row["pi"]), rho=float(row["rho"]), n=int(row["n"]), m=int(row["m"]),
            G=int(row["G"]), R=int(row["R"]), K=int(row["K"]), alpha=float(row["alpha"]),
            seed=int(row["seed"]),
        )
        pct = {lvl: float(row[col]) for lvl, col in zip(PERCENTILES, PERCENTILE_COLUMNS)}
        return cls(cfg, pct, float(row["mean_M"]), cfg.R)


def generate_decisions(pi: float, rho: float, n: int, m: int,
                       rng: np.random.Generator) -> np.ndarray:
    """``(n, m)`` int8 matrix of correlated decisions."""
    if rho > 0.0 and 0.0 < pi < 1.0:
        scale = (1.0 - rho) / rho
        p = rng.beta(pi * scale, (1.0 - pi) * scale, size=n)
    else:
        p = np.full(n, pi)
    return (rng.random((n, m)) < p[:, None]).astype(np.int8)


def generate_group(pi: float, rho: float, n: int, m: int, rng: np.random.Generator,
                   group_id: str = "g") -> GroupDataset:
    return GroupDataset.from_matrix(group_id, generate_decisions(pi, rho, n, m, rng))


def group_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def generate_study(pis, rho: float, n: int, m: int, seed: int, key: tuple[int, ...] = ()) -> StudyDataset:
    """One group per entry of ``pis`` (ids g01, g02, ...), streams keyed by ``key + (g,)``."""
    width = max(2, len(str(len(pis))))
    groups = [
        generate_group(p, rho, n, m, group_rng(seed, *key, g + 1), f"g{g + 1:0{width}d}")
        for g, p in enumerate(pis)
    ]
    return StudyDataset(tuple(groups), provenance=f"simulated seed={seed}")


def _run_margin(cfg: SimConfig, run: int) -> float:
    key = cfg.cell_key()
    counts = []
    for g in range(cfg.G):
        dec = generate_decisions(cfg.pi, cfg.rho, cfg.n, cfg.m, group_rng(cfg.seed, key, run, g + 1))
        counts.append((dec.sum(axis=1, dtype=np.int64), np.full(cfg.n, cfg.m, dtype=np.int64)))
    boot_seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(key, run)).generate_state(
        1, dtype=np.uint64)[0])
    return margin_from_counts(counts, BootstrapConfig(cfg.K, cfg.alpha, boot_seed))


def run_cell(cfg: SimConfig, threads: int = 1) -> SimCellResult:
    runs = range(cfg.R)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            margins = np.array(list(pool.map(lambda r: _run_margin(cfg, r), runs)))
    else:
        margins = np.array([_run_margin(cfg, r) for r in runs])
    pct = {lvl: nearest_rank(margins, lvl / 100.0) for lvl in PERCENTILES}
    return SimCellResult(cfg, pct, float(np.mean(margins)), cfg.R, margins)


def grid_configs(grid: dict, fixed: dict | None = None) -> list[SimConfig]:
    fixed = dict(fixed or {})
    values = []
    for name in GRID_PARAMS:
        vals = list(grid.get(name, []))
        if not vals:
            raise ValueError(f"grid parameter {name!r} has no values")
        values.append(vals)
    return [SimConfig(**dict(zip(GRID_PARAMS, combo)), **fixed)
            for combo in itertools.product(*values)]


def _load_ledger(path: Path) -> dict[str, dict]:
    done = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                done[entry["key"]] = entry["row"]
    return done


def write_grid_csv(results: list[SimCellResult], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for res in results:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in res.row().items()})


def read_grid_csv(path) -> list[SimCellResult]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [SimCellResult.from_row(row) for row in csv.DictReader(fh)]


def run_grid(grid: dict, fixed: dict | None = None, out=None, threads: int = 1,
             ledger=None, cell_runner=None) -> list[SimCellResult]:
    """Run every cell of the Cartesian grid and write one CSV row per cell.

    Completed cells are appended to a JSON-lines ledger (default
    ``<out>.ledger.jsonl``) and skipped when the grid is rerun.
    ``cell_runner(cfg, threads)`` replaces :func:`run_cell`, e.g. to farm
    cells out to a remote service.
    """
    cell_runner = cell_runner or run_cell
    configs = grid_configs(grid, fixed)
    ledger_path = Path(ledger) if ledger else (Path(str(out) + ".ledger.jsonl") if out else None)
    done = _load_ledger(ledger_path) if ledger_path else {}
    results = []
    for i, cfg in enumerate(configs, start=1):
        key = cfg.ledger_key()
        if key in done:
            log.info("cell %d/%d already in ledger, skipping", i, len(configs))
            results.append(SimCellResult.from_row(done[key]))
            continue
        log.info("cell %d/%d: %s", i, len(configs), cfg)
        res = cell_runner(cfg, threads)
        results.append(res)
        if ledger_path:
            with ledger_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "row": res.row()}) + "\n")
    if out:
        write_grid_csv(results, out)
    return results


def figure_series(results: list[SimCellResult], series: str = "pi", stat: str = "p50") -> list[dict]:
    """Regroup cells into M-versus-G curves.

    A panel is fixed by every grid parameter other than ``G`` and ``series``;
    within a panel each ``series`` value is one curve.
    """
    if series not in GRID_PARAMS or series == "G":
        raise ValueError(f"series must be one of {[p for p in GRID_PARAMS if p != 'G']}")
    panel_params = [p for p in GRID_PARAMS if p not in ("G", series)]
    rows = []
    for res in results:
        r = res.row()
        rows.append({
            "panel": ",".join(f"{p}={r[p]}" for p in panel_params),
            "series": series,
            "series_value": r[series],
            "G": r["G"],
            "M": r[stat],
            "stat": stat,
        })
    rows.sort(key=lambda d: (d["panel"], d["series_value"], d["G"]))
    return rows


def write_figure_series(results: list[SimCellResult], path, series: str = "pi",
                        stat: str = "p50") -> None:
    rows = figure_series(results, series, stat)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=("panel", "series", "series_value", "G", "M", "stat"),
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
