"""File formats for universes, parameter vectors, batches and structures.

All on-disk formats use 1-based agent and coalition indices; in-memory
objects are 0-based. Matrices round-trip float64 exactly via %.17g.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import (
    CoalitionStructure,
    CoalitionUniverse,
    EpisodeBatch,
    EstimateResult,
    GroundTruth,
    agents_from_mask,
    mask_from_agents,
)
from .solver import ValueFunction


def save_universe(universe: CoalitionUniverse, path) -> None:
    data = {
        "n_agents": universe.n_agents,
        "coalitions": [list(agents_from_mask(mask)) for mask in universe.coalitions],
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_universe(path) -> CoalitionUniverse:
    data = json.loads(Path(path).read_text())
    return CoalitionUniverse.from_agent_sets(int(data["n_agents"]), data["coalitions"])


def save_theta(theta: np.ndarray, path) -> None:
    """Sparse vector format: header ``m=<m>``, then one 1-based
    ``index,value`` row per nonzero."""
    theta = np.asarray(theta, dtype=float)
    lines = [f"m={theta.size}", "index,value"]
    for j in np.flatnonzero(theta):
        lines.append(f"{j + 1},{float(theta[j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_theta(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("m="):
        raise ConfigError("theta file must start with an m=<m> header")
    m = int(lines[0][2:])
    theta = np.zeros(m)
    for line in lines[1:]:
        if line == "index,value":
            continue
        idx, value = line.split(",")
        j = int(idx) - 1
        if not 0 <= j < m:
            raise ConfigError(f"index {idx} outside 1..{m}")
        theta[j] = float(value)
    return theta


def save_batch(batch: EpisodeBatch, out_dir, meta: Optional[dict] = None) -> None:
    """Persist a batch as design.csv / response.csv / noise.csv + meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "design.csv", batch.design, delimiter=",", fmt="%.17g")
    np.savetxt(out / "response.csv", batch.response, delimiter=",", fmt="%.17g")
    if batch.noise is not None:
        np.savetxt(out / "noise.csv", batch.noise, delimiter=",", fmt="%.17g")
    payload = {
        "episodes": batch.n_episodes,
        "m": batch.m,
        "column_normalised": batch.column_normalised,
        "zero_columns": [j + 1 for j in batch.zero_columns],
        "has_noise": batch.noise is not None,
    }
    if meta:
        payload["meta"] = meta
    (out / "meta.json").write_text(json.dumps(payload, indent=2) + "\n")


def load_batch(batch_dir) -> EpisodeBatch:
    src = Path(batch_dir)
    meta = json.loads((src / "meta.json").read_text())
    design = np.loadtxt(src / "design.csv", delimiter=",", ndmin=2)
    response = np.loadtxt(src / "response.csv", delimiter=",", ndmin=1)
    noise = None
    if meta.get("has_noise") and (src / "noise.csv").exists():
        noise = np.loadtxt(src / "noise.csv", delimiter=",", ndmin=1)
    return EpisodeBatch(
        design=design,
        response=response,
        noise=noise,
        column_normalised=bool(meta.get("column_normalised", False)),
        zero_columns=tuple(int(j) - 1 for j in meta.get("zero_columns", [])),
    )


def save_estimate(result: EstimateResult, path, extra: Optional[dict] = None) -> None:
    theta = result.theta_hat
    data = {
        "estimator": result.estimator,
        "m": int(theta.size),
        "iterations": result.iterations,
        "tuning": _jsonable(result.tuning),
        "nonzeros": [[int(j) + 1, float(theta[j])] for j in np.flatnonzero(theta)],
    }
    if extra:
        data.update(_jsonable(extra))
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_estimate(path) -> EstimateResult:
    data = json.loads(Path(path).read_text())
    theta = np.zeros(int(data["m"]))
    for idx, value in data["nonzeros"]:
        theta[int(idx) - 1] = float(value)
    return EstimateResult(
        theta_hat=theta,
        support_hat=tuple(np.flatnonzero(theta).tolist()),
        estimator=data["estimator"],
        tuning=dict(data.get("tuning", {})),
        iterations=int(data.get("iterations", 0)),
    )


def save_value_function(vf: ValueFunction, path) -> None:
    entries = [
        [list(agents_from_mask(vf.universe.coalitions[j])), float(value)]
        for j, value in sorted(vf.values.items())
    ]
    data = {
        "n_agents": vf.universe.n_agents,
        "default_value": vf.default_value,
        "entries": entries,
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_value_function(path) -> ValueFunction:
    data = json.loads(Path(path).read_text())
    n_agents = int(data["n_agents"])
    entries = data["entries"]
    universe = CoalitionUniverse.from_agent_sets(n_agents, [agents for agents, _ in entries])
    values = {}
    for agents, value in entries:
        values[universe.index_of(mask_from_agents(agents, n_agents))] = float(value)
    return ValueFunction(
        universe=universe,
        values=values,
        default_value=float(data.get("default_value", 0.0)),
    )


def save_structure(
    structure: CoalitionStructure,
    welfare_value: float,
    path,
    unknown_blocks: tuple[int, ...] = (),
) -> None:
    data = {
        "blocks": [list(agents_from_mask(mask)) for mask in structure.blocks],
        "welfare": welfare_value,
        "n_blocks": structure.n_blocks,
        "blocks_outside_universe": [list(agents_from_mask(m)) for m in unknown_blocks],
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def save_truth(truth: GroundTruth, path) -> None:
    save_theta(truth.theta_star, path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
