"""Command-line interface: generate, estimate, diagnose, solve, experiment."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as csg_io
from .diagnostics import correlation_profile, design_report, noise_event_margin
from .errors import SparseCsgError
from .estimators import BgcpConfig, LassoConfig, bgcp, dls, epc, l0_map_oracle, lasso
from .generation import DesignConfig, NoiseConfig, generate_theta, synthesize_batch
from .harness import ExperimentConfig, emit_outputs, preset, regime_report, run_experiment
from .model import CoalitionUniverse, GroundTruth
from .solver import solve_csg_dp

log = logging.getLogger("sparse-csg")


def _universe_from_config(data: dict) -> CoalitionUniverse:
    rule = data.get("rule", "all_up_to_size")
    if rule == "all_up_to_size":
        return CoalitionUniverse.all_up_to_size(int(data["n_agents"]), int(data["max_size"]))
    if rule == "random_library":
        return CoalitionUniverse.random_library(
            int(data["n_agents"]), int(data["library_size"]), int(data.get("seed", 0))
        )
    if rule == "explicit":
        return csg_io.load_universe(data["path"])
    raise SparseCsgError(f"unknown universe rule {rule!r}")


def _cmd_generate(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    universe = _universe_from_config(cfg["universe"])
    truth_cfg = cfg["truth"]
    noise_cfg = NoiseConfig(
        sigma=float(cfg["noise"]["sigma"]),
        distribution=cfg["noise"].get("distribution", "gaussian"),
        seed=int(cfg["noise"].get("seed", 0)),
    )
    truth = generate_theta(
        m=universe.m,
        sparsity=int(truth_cfg["sparsity"]),
        theta_min=float(truth_cfg["theta_min"]),
        magnitude_cap=float(truth_cfg["magnitude_cap"]),
        sign_mode=truth_cfg.get("sign_mode", "all_positive"),
        seed=int(truth_cfg.get("seed", 0)),
        sigma=noise_cfg.sigma,
    )
    design_cfg = DesignConfig(
        m=universe.m,
        episodes=int(cfg["design"]["episodes"]),
        activation_probs=cfg["design"]["activation_prob"],
        row_cap=int(cfg["design"]["row_cap"]),
        normalise_columns=bool(cfg["design"].get("normalise_columns", True)),
        seed=int(cfg["design"].get("seed", 0)),
    )
    batch = synthesize_batch(universe, truth, design_cfg, noise_cfg)
    out = Path(args.out)
    csg_io.save_batch(batch, out, meta={"config": cfg})
    csg_io.save_universe(universe, out / "universe.json")
    csg_io.save_truth(truth, out / "truth.csv")
    if batch.zero_columns:
        log.warning("%d coalitions were never activated: %s",
                    len(batch.zero_columns), [j + 1 for j in batch.zero_columns])
    print(f"wrote batch (T={batch.n_episodes}, m={batch.m}) to {out}")
    return 0


def _load_truth(batch_dir: Path, truth_path) -> GroundTruth | None:
    path = Path(truth_path) if truth_path else batch_dir / "truth.csv"
    if not path.exists():
        return None
    theta = csg_io.load_theta(path)
    support = tuple(np.flatnonzero(theta).tolist())
    theta_min = float(np.min(np.abs(theta[list(support)]))) if support else 1.0
    return GroundTruth(
        theta_star=theta, support=support, sparsity=len(support), theta_min=theta_min
    )


def _cmd_estimate(args) -> int:
    batch = csg_io.load_batch(args.batch)
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    method = args.method.lower()
    extra = None
    if method == "bgcp":
        if not batch.column_normalised:
            log.warning("columns are not normalised; correlation scores are in raw units")
        result, trace = bgcp(batch, BgcpConfig(**cfg) if cfg else BgcpConfig(k_max=min(batch.m, batch.n_episodes)))
        extra = {
            "trace": [
                {"selected": step.selected + 1, "score": step.score,
                 "residual_norm": step.residual_norm}
                for step in trace
            ]
        }
    elif method == "lasso":
        result = lasso(batch, LassoConfig(**cfg))
    elif method == "epc":
        result = epc(batch)
    elif method == "dls":
        result = dls(batch, ridge=float(cfg.get("ridge", 0.0)))
    elif method == "l0":
        result = l0_map_oracle(batch, lambda0=float(cfg.get("lambda0", 1.0)),
                               max_m=int(cfg.get("max_m", 15)))
    else:
        raise SparseCsgError(f"unknown method {args.method!r}")
    csg_io.save_estimate(result, args.out, extra=extra)
    print(f"{result.estimator}: |support|={len(result.support_hat)}, iterations={result.iterations}")
    return 0


def _cmd_diagnose(args) -> int:
    batch_dir = Path(args.batch)
    batch = csg_io.load_batch(batch_dir)
    truth = _load_truth(batch_dir, args.truth)
    support = truth.support if truth is not None else None
    report = design_report(
        batch.design,
        support=support,
        re_samples=args.re_samples,
        seed=args.seed,
    )
    payload = dataclasses.asdict(report)
    payload["zero_columns"] = [j + 1 for j in report.zero_columns]
    if args.lam is not None and batch.noise is not None:
        event = noise_event_margin(batch, args.lam)
        payload["noise_event"] = {
            "lambda": args.lam,
            "max_corr": event.max_corr,
            "margin": event.margin,
            "event_holds": event.event_holds,
        }
    if args.bgcp_kmax and truth is not None:
        _, trace = bgcp(batch, BgcpConfig(k_max=args.bgcp_kmax, record_correlations=True))
        payload["correlation_profile"] = [
            dataclasses.asdict(step) for step in correlation_profile(batch, truth, trace)
        ]
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"coherence={report.coherence:.6f}; report written to {args.out}")
    return 0


def _cmd_solve(args) -> int:
    vf = csg_io.load_value_function(args.values)
    structure = solve_csg_dp(vf)
    unknown = tuple(m for m in structure.blocks if vf.universe.index_of(m) is None)
    if unknown:
        log.warning("%d blocks lie outside the universe and contribute the default value",
                    len(unknown))
    total = vf.total(structure.blocks)
    csg_io.save_structure(structure, total, args.out, unknown_blocks=unknown)
    print(f"optimal welfare {total!r} with {structure.n_blocks} blocks; written to {args.out}")
    return 0


def _cmd_experiment(args) -> int:
    if args.preset:
        cfg = preset(args.preset)
        if args.config:
            overrides = json.loads(Path(args.config).read_text())
            merged = cfg.to_dict()
            merged.update(overrides)
            cfg = ExperimentConfig.from_dict(merged)
    elif args.config:
        cfg = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        raise SparseCsgError("experiment needs --config or --preset")
    env_seed = os.environ.get("SPARSE_CSG_SEED")
    if env_seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "master_seed": int(env_seed)})
    if args.fixed_truth:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "fixed_truth": True})
    records = run_experiment(cfg, workers=args.workers)
    summary = regime_report(records)
    paths = emit_outputs(records, summary, args.out, config=cfg)
    n_ok = sum(1 for r in records if r.ok)
    print(f"{len(records)} runs ({n_ok} ok) -> {paths['runs']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparse-csg",
        description="Sparse episodic value estimation and exact coalition structure generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a seeded episode batch")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("estimate", help="run one estimator on a stored batch")
    p.add_argument("--method", required=True, choices=["bgcp", "lasso", "epc", "dls", "l0"])
    p.add_argument("--batch", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("diagnose", help="design geometry and noise diagnostics")
    p.add_argument("--batch", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--re-samples", type=int, default=0, dest="re_samples")
    p.add_argument("--lambda", type=float, default=None, dest="lam")
    p.add_argument("--bgcp-kmax", type=int, default=0, dest="bgcp_kmax")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("solve", help="exact CSG over a value-function file")
    p.add_argument("--values", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("experiment", help="seeded multi-replication sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None, choices=["sparse", "dense"])
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fixed-truth", action="store_true", dest="fixed_truth",
                   help="share one ground truth across replications")
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SparseCsgError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
