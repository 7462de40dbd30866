"""Scenario sweeps: grid expansion, parallel execution, CSV results, pivots.

The results file has one row per (scenario, round, metric) with the stable
schema: scenario_id, paradigm, topology, aggregator, attack, pnr, seed,
round, metric, value, sim_transfer_seconds, error. Failed scenarios keep
their grid slot via a single row with the error column set.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .config import ConfigError, ScenarioConfig, validate
from .engine import Simulation

MAX_GRID_SIZE = 500

CSV_COLUMNS = ("scenario_id", "paradigm", "topology", "aggregator", "attack", "pnr",
               "seed", "round", "metric", "value", "sim_transfer_seconds", "error")

# Grid axes understood by expand_grid, mapped to config substitutions.
_AXIS_KEYS = ("pnr", "aggregator", "attack_kind", "topology", "watts_k", "master_seed",
              "paradigm")


@dataclass(frozen=True)
class SweepGrid:
    base: ScenarioConfig
    axes: dict[str, list] = field(default_factory=dict)


def _apply_axis(cfg: ScenarioConfig, key: str, value) -> ScenarioConfig:
    if key == "pnr":
        return replace(cfg, pnr_percent=int(value))
    if key == "aggregator":
        return replace(cfg, aggregator=str(value))
    if key == "attack_kind":
        return replace(cfg, attack=replace(cfg.attack, kind=str(value)))
    if key == "topology":
        return replace(cfg, topology=replace(cfg.topology, name=str(value)))
    if key == "watts_k":
        return replace(cfg, topology=replace(cfg.topology, name="watts_strogatz",
                                             k=int(value)))
    if key == "master_seed":
        return replace(cfg, master_seed=int(value))
    if key == "paradigm":
        return replace(cfg, paradigm=str(value))
    raise ConfigError(f"axes.{key}", f"unknown sweep axis (allowed: {_AXIS_KEYS})")


def expand_grid(grid: SweepGrid) -> list[ScenarioConfig]:
    """Cartesian product of the axes applied to the base config, in axis order."""
    configs = [grid.base]
    for key, values in grid.axes.items():
        if not values:
            raise ConfigError(f"axes.{key}", "axis must list at least one value")
        configs = [_apply_axis(cfg, key, v) for cfg in configs for v in values]
        if len(configs) > MAX_GRID_SIZE:
            raise ConfigError("axes", f"grid exceeds the {MAX_GRID_SIZE}-scenario cap")
    # Voyager-as-aggregator implies the MTD toggle; re-validate each point.
    out = []
    for cfg in configs:
        if cfg.aggregator == "voyager" and not cfg.voyager.enable:
            cfg = replace(cfg, voyager=replace(cfg.voyager, enable=True))
        out.append(validate(cfg))
    return out


def _scenario_tag_fields(cfg: ScenarioConfig) -> dict[str, str]:
    topo = cfg.topology.name if cfg.paradigm == "dfl" else "star_server"
    if cfg.paradigm == "dfl" and cfg.topology.name == "watts_strogatz":
        topo = f"watts_strogatz_k{cfg.topology.k}"
    return {
        "paradigm": cfg.paradigm,
        "topology": topo,
        "aggregator": cfg.aggregator,
        "attack": cfg.attack.kind,
        "pnr": str(cfg.pnr_percent),
        "seed": str(cfg.master_seed),
    }


def run_one(cfg: ScenarioConfig) -> list[dict[str, str]]:
    """Execute one scenario and return its CSV rows (error row on failure)."""
    tags = _scenario_tag_fields(cfg)
    try:
        sim = Simulation(cfg)
        sim.run()
        transfer = {r.round_index: r.sim_transfer_seconds for r in sim.records}
        rows = []
        for mr in sim.metric_rows():
            rows.append({"scenario_id": mr.scenario_id, **tags,
                         "round": str(mr.round_index), "metric": mr.metric,
                         "value": repr(mr.value),
                         "sim_transfer_seconds": repr(transfer[mr.round_index]),
                         "error": ""})
        if not rows:    # rounds == 0: keep the scenario visible in the results
            rows.append({"scenario_id": cfg.scenario_id(), **tags, "round": "0",
                         "metric": "f1_benign_avg", "value": "", "sim_transfer_seconds": "",
                         "error": ""})
        return rows
    except Exception as exc:    # noqa: BLE001 - sweep must survive bad grid points
        return [{"scenario_id": cfg.scenario_id(), **tags, "round": "", "metric": "",
                 "value": "", "sim_transfer_seconds": "", "error": f"{type(exc).__name__}: {exc}"}]


def run_sweep(grid: SweepGrid, out_path: str, parallel_scenarios: int = 1,
              overwrite: bool = False) -> list[ScenarioConfig]:
    """Run every grid point and write one CSV; output order follows the grid
    regardless of execution parallelism."""
    if os.path.exists(out_path) and not overwrite:
        raise FileExistsError(f"{out_path} exists; pass overwrite to replace it")
    configs = expand_grid(grid)
    if parallel_scenarios > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=parallel_scenarios) as pool:
            all_rows = list(pool.map(run_one, configs))
    else:
        all_rows = [run_one(cfg) for cfg in configs]
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rows in all_rows:
            writer.writerows(rows)
    return configs


def _read_rows(results_path: str) -> list[dict[str, str]]:
    with open(results_path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def render_table(results_path: str, metric: str = "f1_benign_avg",
                 row_axis: str = "aggregator", col_axis: str = "pnr") -> str:
    """Pivot of final-round values as percentages with one decimal.

    Cells with several runs (e.g. a seed axis) report the median. Missing
    cells are reported by coordinate.
    """
    rows = _read_rows(results_path)
    rows = [r for r in rows if r["metric"] == metric and not r["error"]]
    if not rows:
        raise ValueError(f"no rows for metric {metric!r} in {results_path}")

    final_round: dict[str, dict] = {}
    for r in rows:
        sid = r["scenario_id"]
        if sid not in final_round or int(r["round"]) > int(final_round[sid]["round"]):
            final_round[sid] = r

    def _axis_values(axis: str) -> list[str]:
        values = {r[axis] for r in final_round.values()}
        try:
            return sorted(values, key=lambda v: float(v))
        except ValueError:
            return sorted(values)

    row_values = _axis_values(row_axis)
    col_values = _axis_values(col_axis)
    cells: dict[tuple[str, str], list[float]] = {}
    for r in final_round.values():
        cells.setdefault((r[row_axis], r[col_axis]), []).append(float(r["value"]))

    missing = [(rv, cv) for rv in row_values for cv in col_values if (rv, cv) not in cells]
    if missing:
        raise ValueError(f"missing cells for ({row_axis}, {col_axis}) = {missing}")

    def _median(vals: list[float]) -> float:
        vals = sorted(vals)
        mid = len(vals) // 2
        return vals[mid] if len(vals) % 2 else (vals[mid - 1] + vals[mid]) / 2

    header = [f"{row_axis}\\{col_axis}"] + col_values
    lines = [",".join(header)]
    for rv in row_values:
        cells_out = [f"{100 * _median(cells[(rv, cv)]):.1f}%" for cv in col_values]
        lines.append(",".join([rv] + cells_out))
    return "\n".join(lines) + "\n"
