"""Command-line surface: generate, solve, verify, batch.

Every command writes a run manifest whose digest covers the deterministic
inputs (command, tool version, resolved config, instance digest, seeds);
output files embed that digest so any result can be traced to its inputs.
Numeric options can come from a config JSON (--config) with command-line
flags taking precedence.  Exit codes: 0 converged or certified, 2 not
converged or not certified, 3 invalid input, 4 solver failure.
"""

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .encoding import BigMPolicy, kkt_residual
from .errors import EncodingError, InvalidModelError, SolverError
from .extragradient import EgConfig, run_baseline
from .gauss_seidel import PgsConfig, run_escalating, verify_equilibrium
from .instances import (
    blocks_from_dict,
    blocks_to_dict,
    digest,
    game_from_dict,
    load_instance,
    save_instance,
    two_follower_toy,
)
from .ridehail import build_game, params_to_dict, run_batch, sample_params

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3
EXIT_SOLVER = 4

SOLVE_DEFAULTS = {
    "algo": "pgs",
    "tau0": 1.0,
    "omega": 0.1,
    "icrf": "squared-euclidean",
    "tol": 1e-6,
    "max_sweeps": 100,
    "seed": None,
    "big_m": 200.0,
    "step": 0.01,
    "inner_iters": 200,
    "outer_iters": 100,
}

# batches favor throughput: looser stop, hard sweep budget
BATCH_DEFAULTS = dict(SOLVE_DEFAULTS, tol=1e-4, max_sweeps=30)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; route through the invalid-input code
    def error(self, message):
        raise UsageError(message)


def _manifest_core(command: str, config: dict, instance_digest):
    seeds = {k: v for k, v in config.items() if "seed" in k}
    return {
        "kind": "run-manifest",
        "command": command,
        "tool_version": __version__,
        "config": config,
        "config_digest": digest(config),
        "seeds": seeds,
        "instance_digest": instance_digest,
    }


def _write_manifest(path, core: dict) -> str:
    mdig = digest(core)
    doc = dict(core, digest=mdig,
               created_utc=datetime.now(timezone.utc).isoformat())
    _write_json(path, doc)
    return mdig


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")


def _load_json(path, kind: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: {exc}")
    if kind and doc.get("kind") != kind:
        raise UsageError(f"{path}: expected kind {kind!r}, got {doc.get('kind')!r}")
    return doc


def _resolve_config(args, flag_names, defaults=SOLVE_DEFAULTS) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        on_disk = _load_json(args.config, kind="")
        unknown = set(on_disk) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(on_disk)
    for name in flag_names:
        val = getattr(args, name)
        if val is not None:
            cfg[name] = val
    if cfg["algo"] not in ("pgs", "eg"):
        raise UsageError(f"unknown algo {cfg['algo']!r} (use pgs or eg)")
    return cfg


def _pgs_config(cfg: dict) -> PgsConfig:
    return PgsConfig(tau0=cfg["tau0"], omega=cfg["omega"], icrf=cfg["icrf"],
                     stop_eps=cfg["tol"], max_sweeps=cfg["max_sweeps"],
                     seed=cfg["seed"],
                     policy=BigMPolicy(dual_cap=cfg["big_m"]))


def _eg_config(cfg: dict) -> EgConfig:
    return EgConfig(step=cfg["step"], inner_iters=cfg["inner_iters"],
                    outer_iters=cfg["outer_iters"], stop_eps=cfg["tol"])


# ---- generate ------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.family == "toy":
        game = two_follower_toy()
        config = {"family": "toy"}
    else:
        try:
            params = sample_params(args.leaders, args.followers, args.areas,
                                   seed=args.seed)
        except InvalidModelError as exc:
            raise UsageError(str(exc))
        game = build_game(params)
        game.metadata["ridehail_params"] = params_to_dict(params)
        config = {"family": "ridehail", "leaders": args.leaders,
                  "followers": args.followers, "areas": args.areas,
                  "seed": args.seed}
    core = _manifest_core("generate", config, None)
    mdig = _write_manifest(_sibling(args.out, "manifest"), core)
    idig = save_instance(game, args.out, manifest_digest=mdig)
    print(f"wrote {args.out}  digest={idig[:16]}  manifest={mdig[:16]}")
    return EXIT_OK


# ---- solve ---------------------------------------------------------------


def _sibling(out_path: str, suffix: str) -> str:
    stem = out_path[:-5] if out_path.endswith(".json") else out_path
    return f"{stem}.{suffix}.json" if suffix != "trajectory" else f"{stem}.trajectory.csv"


def cmd_solve(args) -> int:
    cfg = _resolve_config(args, ("algo", "tau0", "omega", "icrf", "tol",
                                 "max_sweeps", "seed", "big_m", "step",
                                 "inner_iters", "outer_iters"))
    try:
        game = load_instance(args.instance)
    except (OSError, EncodingError) as exc:
        raise UsageError(f"{args.instance}: {exc}")
    with open(args.instance) as fh:
        idig = digest(json.load(fh))

    core = _manifest_core("solve", cfg, idig)
    mdig = _write_manifest(_sibling(args.out, "manifest"), core)

    extra = {}
    if cfg["algo"] == "pgs":
        res = run_escalating(game, _pgs_config(cfg))
        blocks, traj, status = res.blocks, res.trajectory, res.status
        extra = {"escalations": res.attempts - 1,
                 "audit_flags": list(res.flags),
                 "final_dual_cap": res.policy.dual_cap}
    else:
        blocks, traj, status = run_baseline(game, _eg_config(cfg))

    final_d = traj.records[-1].cost_to_move if traj.records else float("nan")
    doc = {
        "kind": "solution",
        "format_version": 1,
        "algo": cfg["algo"],
        "status": status,
        "sweeps": len(traj.records),
        "final_cost_to_move": None if np.isnan(final_d) else final_d,
        "blocks": blocks_to_dict(blocks),
        "config": cfg,
        "instance_digest": idig,
        "manifest_digest": mdig,
    }
    _write_json(args.out, doc)
    traj.write_csv(_sibling(args.out, "trajectory"), manifest=mdig)

    pot = traj.records[-1].potential if traj.records else float("nan")
    print(f"{cfg['algo']}: {status} after {len(traj.records)} sweeps, "
          f"d={final_d:.3e}, potential={pot:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK if status == "converged" else EXIT_NOT_CONVERGED


# ---- verify --------------------------------------------------------------


def cmd_verify(args) -> int:
    try:
        game = load_instance(args.instance)
    except (OSError, EncodingError) as exc:
        raise UsageError(f"{args.instance}: {exc}")
    with open(args.instance) as fh:
        idig = digest(json.load(fh))
    sol = _load_json(args.solution, kind="solution")
    if sol.get("instance_digest") != idig:
        raise UsageError("solution was produced from a different instance "
                         f"(digest {sol.get('instance_digest', '?')[:16]} vs {idig[:16]})")
    blocks = blocks_from_dict(sol["blocks"])
    if len(blocks) != game.N:
        raise UsageError(f"solution has {len(blocks)} blocks for {game.N} leaders")

    big_m = args.big_m if args.big_m is not None else sol.get("config", {}).get("big_m", 200.0)
    policy = BigMPolicy(dual_cap=float(big_m))
    try:
        rep = verify_equilibrium(game, blocks, tol=args.tol, policy=policy)
    except SolverError as exc:
        print(f"verification solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    # the BR round alone can miss an infeasible supplied point (its cost may
    # undercut every feasible one), so gate on primal feasibility and the
    # followers' KKT residuals as well
    kkt_max, primal_violation = [], []
    for i, b in enumerate(blocks):
        ld = game.leaders[i]
        res = kkt_residual(game, i, b.x, list(b.y), list(b.lam), list(b.delta))
        kkt_max.append(res.max())
        v = max(np.max(ld.x_lb - b.x, initial=0.0), np.max(b.x - ld.x_ub, initial=0.0))
        if ld.G.shape[0]:
            v = max(v, float(np.max(-(ld.G @ b.x + ld.g0), initial=0.0)))
        primal_violation.append(float(v))

    bad = []
    for i, imp in enumerate(rep.improvements):
        notes = []
        if imp > args.tol:
            notes.append(f"IMPROVABLE by {imp:.3e}")
        if primal_violation[i] > args.tol:
            notes.append(f"INFEASIBLE x by {primal_violation[i]:.3e}")
        if kkt_max[i] > args.tol:
            notes.append(f"follower KKT residual {kkt_max[i]:.3e}")
        if notes:
            bad.append(i)
        mark = "; ".join(notes) if notes else "ok"
        print(f"leader {i}: improvement {imp:.3e}, kkt {kkt_max[i]:.3e} ({mark})")
    for flag in rep.flags:
        print(f"flag: {flag}")
    certified = rep.certified and not bad
    print("certified" if certified else
          f"NOT certified (leaders {', '.join(map(str, bad))})" if bad else "NOT certified")

    core = _manifest_core("verify", {"tol": args.tol, "big_m": float(big_m)}, idig)
    doc = {
        "kind": "verification",
        "certified": certified,
        "tol": rep.tol,
        "improvements": list(rep.improvements),
        "kkt_residuals": kkt_max,
        "primal_violations": primal_violation,
        "violating_leaders": bad,
        "flags": list(rep.flags),
        "instance_digest": idig,
        "solution_digest": digest(sol),
        "manifest_digest": digest(core),
    }
    _write_json(args.out, doc)
    return EXIT_OK if certified else EXIT_NOT_CONVERGED


# ---- batch ---------------------------------------------------------------


def cmd_batch(args) -> int:
    cfg = _resolve_config(args, ("tau0", "omega", "icrf", "tol", "max_sweeps",
                                 "seed", "big_m", "step", "inner_iters",
                                 "outer_iters"), defaults=BATCH_DEFAULTS)
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    for a in algos:
        if a not in ("pgs", "eg"):
            raise UsageError(f"unknown algo {a!r} (use pgs, eg, or pgs,eg)")
    if args.instances <= 0:
        raise UsageError("--instances must be positive")
    scale = (args.leaders, args.followers, args.areas)

    batch_cfg = dict(cfg, algos=algos, instances=args.instances,
                     base_seed=args.base_seed, scale=list(scale))
    core = _manifest_core("batch", batch_cfg, None)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(f"{args.out}/batch.manifest.json", core)

    pgs_cfg = _pgs_config(cfg)
    eg_cfg = _eg_config(cfg)

    reports = {}
    for algo in algos:
        rep = run_batch(args.instances, args.base_seed, scale, algo=algo,
                        pgs_cfg=pgs_cfg, eg_cfg=eg_cfg, out_dir=args.out,
                        jobs=args.jobs, verify_tol=args.verify_tol)
        reports[algo] = rep
        agg = rep.aggregate()
        print(f"{algo}: {agg['converged_fraction']:.0%} converged over "
              f"{agg['instances']} instances, "
              f"mean time {agg['time_s']['mean']:.2f}s, "
              f"flagged {agg['flagged_instances']}")

    if len(algos) > 1:
        header = f"{'algo':>5} {'converged':>10} {'mean sweeps':>12} {'mean time':>10}"
        print(header)
        for algo in algos:
            agg = reports[algo].aggregate()
            print(f"{algo:>5} {agg['converged_fraction']:>9.0%} "
                  f"{agg['sweeps']['mean']:>12.1f} {agg['time_s']['mean']:>9.2f}s")

    if all(all(r.error for r in rep.rows) for rep in reports.values()):
        return EXIT_SOLVER
    return EXIT_OK


# ---- wiring ---------------------------------------------------------------


def _build_parser() -> _Parser:
    p = _Parser(prog="lfnash", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lfnash {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample an instance to JSON")
    g.add_argument("--family", choices=("ridehail", "toy"), default="ridehail")
    g.add_argument("--leaders", type=int, default=3)
    g.add_argument("--followers", type=int, default=3)
    g.add_argument("--areas", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="instance.json")
    g.set_defaults(func=cmd_generate)

    def _solver_flags(sp, algo_flag=True):
        if algo_flag:
            sp.add_argument("--algo", default=None)
        sp.add_argument("--config", default=None, help="config JSON; flags override")
        sp.add_argument("--tau0", type=float, default=None)
        sp.add_argument("--omega", type=float, default=None)
        sp.add_argument("--icrf", default=None,
                        choices=("squared-euclidean", "euclidean-approx"))
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--big-m", dest="big_m", type=float, default=None)
        sp.add_argument("--step", type=float, default=None)
        sp.add_argument("--inner-iters", dest="inner_iters", type=int, default=None)
        sp.add_argument("--outer-iters", dest="outer_iters", type=int, default=None)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    s.add_argument("--out", default="solution.json")
    _solver_flags(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="certify a solution file")
    v.add_argument("instance")
    v.add_argument("solution")
    v.add_argument("--tol", type=float, default=1e-5)
    v.add_argument("--big-m", dest="big_m", type=float, default=None)
    v.add_argument("--out", default="verify.json")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("batch", help="sample and solve many instances")
    b.add_argument("--instances", type=int, default=50)
    b.add_argument("--base-seed", dest="base_seed", type=int, default=1000)
    b.add_argument("--leaders", type=int, default=3)
    b.add_argument("--followers", type=int, default=3)
    b.add_argument("--areas", type=int, default=2)
    b.add_argument("--algo", default="pgs")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--verify-tol", dest="verify_tol", type=float, default=1e-5)
    b.add_argument("--out", default="batch_out")
    _solver_flags(b, algo_flag=False)
    b.set_defaults(func=cmd_batch)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EncodingError, InvalidModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
