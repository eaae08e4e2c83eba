"""Command-line pipeline: demos -> training -> calibration -> collection -> evaluation.

Every subcommand writes its artifacts under --out together with a manifest
(config hash, seeds, package version) sufficient to re-derive them exactly.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, worldsim
from .assist_gate import GateConfig, calibrate
from .demo_corpus import (
    generate_branch_corpus, load_corpus, save_corpus, scripted_demo,
)
from .downstream_eval import evaluate_corpus, format_report_table
from .fleet_service import (
    LiveOperator, ModelBundle, ScriptedOperator, SessionConfig, run_session,
)
from .nn import load_checkpoint, save_checkpoint
from .profiles import PROFILES, get_profile
from .reach_ensemble import (
    FlatConfig, ReachConfig, train_ensemble, train_flat_ensemble,
)
from .subgoal_cvae import CvaeConfig, loss_log_csv, train_cvae
from .fleet_service import calibrate_flat_gate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Manifests.


def _config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _write_manifest(path, payload: dict):
    payload = {"version": __version__, **payload}
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def _require(path, producer: str):
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"missing artifact {path}; run the `{producer}` subcommand first")


# ---------------------------------------------------------------------------
# World selection: a named builtin or a JSON world-config file.


def _resolve_world(name: str) -> worldsim.WorldConfig:
    if name == "default":
        return worldsim.default_world()
    if name == "long":
        return worldsim.long_horizon_world()
    _require(name, "a world-config JSON export")
    with open(name) as f:
        return worldsim.WorldConfig.from_dict(json.load(f))


def _parse_seeds(text: str) -> list[int]:
    """Comma list and/or inclusive a..b ranges: "1,3,5..8"."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise UsageError(f"no seeds in {text!r}")
    return seeds


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_gen_demos(args) -> int:
    world = _resolve_world(args.world)
    corpus = generate_branch_corpus(world, args.n, args.seed,
                                    noise_scale=args.noise)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "corpus.ndjson")
    save_corpus(corpus, path)
    _write_manifest(os.path.join(args.out, "gen_demos_manifest.json"), {
        "command": "gen-demos",
        "world_hash": world.hash(),
        "n": args.n, "seed": args.seed, "noise": args.noise,
        "corpus_hash": _file_hash(path),
    })
    print(f"wrote {len(corpus)} demos to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args.corpus, "gen-demos")
    corpus = load_corpus(args.corpus)
    profile = get_profile(args.profile, corpus.state_dim)
    os.makedirs(args.out, exist_ok=True)

    cvae_params, loss_log = train_cvae(corpus, profile.cvae, args.seed)
    save_checkpoint(os.path.join(args.out, "cvae.ckpt"), cvae_params,
                    meta={"seed": args.seed,
                          "config": dataclasses.asdict(profile.cvae)})
    with open(os.path.join(args.out, "cvae_loss.csv"), "w") as f:
        f.write(loss_log_csv(loss_log))
    member_seeds = [args.seed + 100 + k
                    for k in range(profile.reach.ensemble_size)]
    ensemble = train_ensemble(corpus, profile.reach, member_seeds)
    for k, params in enumerate(ensemble):
        save_checkpoint(os.path.join(args.out, f"member{k}.ckpt"), params,
                        meta={"seed": member_seeds[k],
                              "config": dataclasses.asdict(profile.reach)})
    _write_manifest(os.path.join(args.out, "train_manifest.json"), {
        "command": "train",
        "profile": profile.name,
        "seed": args.seed,
        "member_seeds": member_seeds,
        "corpus_hash": _file_hash(args.corpus),
        "world_hash": corpus.world_config.hash(),
        "world_config": corpus.world_config.to_dict(),
        "cvae_config": dataclasses.asdict(profile.cvae),
        "cvae_config_hash": _config_hash(dataclasses.asdict(profile.cvae)),
        "reach_config": dataclasses.asdict(profile.reach),
        "reach_config_hash": _config_hash(dataclasses.asdict(profile.reach)),
    })
    print(f"wrote cvae + {len(ensemble)} reaching members to {args.out}")
    return EXIT_OK


def _load_models(models_dir: str) -> tuple[ModelBundle, worldsim.WorldConfig]:
    manifest_path = os.path.join(models_dir, "train_manifest.json")
    _require(manifest_path, "train")
    with open(manifest_path) as f:
        manifest = json.load(f)
    world = worldsim.WorldConfig.from_dict(manifest["world_config"])
    cvae_config = CvaeConfig(**manifest["cvae_config"])
    reach_config = ReachConfig(**manifest["reach_config"])
    cvae_params, _ = load_checkpoint(os.path.join(models_dir, "cvae.ckpt"))
    ensemble = []
    for k in range(reach_config.ensemble_size):
        params, _ = load_checkpoint(os.path.join(models_dir, f"member{k}.ckpt"))
        ensemble.append(params)
    return ModelBundle(cvae_params=cvae_params, cvae_config=cvae_config,
                       ensemble=ensemble, reach_config=reach_config), world


def _holdout_demos(world, seed: int, n: int, noise: float):
    demos = []
    for i in range(n):
        pad = worldsim.LEFT_PAD if i % 2 == 0 else worldsim.RIGHT_PAD
        task = worldsim.TaskSpec(((0, pad),))
        demos.append(scripted_demo(world, task, seed + i, noise,
                                   traj_id=f"holdout-{i}"))
    return demos


def cmd_calibrate(args) -> int:
    models, world = _load_models(args.models)
    demos = _holdout_demos(world, args.seed * 1000 + 500, args.n_holdout,
                           args.noise)
    report = calibrate(demos, models.cvae_params, models.cvae_config,
                       models.ensemble, models.reach_config, world,
                       seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    gate_path = os.path.join(args.out, "gate.json")
    with open(gate_path, "w") as f:
        json.dump({"gamma": report.gamma, "omega": report.omega,
                   "seed": args.seed, "n_holdout": args.n_holdout,
                   "noise": args.noise, "version": __version__},
                  f, sort_keys=True, indent=2)
        f.write("\n")
    with open(os.path.join(args.out, "calibration.csv"), "w") as f:
        f.write(report.to_csv())
    print(f"gamma {report.gamma:.6g} omega {report.omega:.6g} -> {gate_path}")
    return EXIT_OK


def _load_gate(path) -> GateConfig:
    _require(path, "calibrate")
    with open(path) as f:
        d = json.load(f)
    return GateConfig(gamma=d["gamma"], omega=d["omega"])


def cmd_collect(args) -> int:
    models, world = _load_models(args.models)
    if args.mode in ("full",):
        models.gate = _load_gate(args.gate)
    if args.mode == "no_hierarchy":
        if not args.corpus:
            raise UsageError("--mode no_hierarchy needs --corpus to train "
                             "the flat ensemble")
        _require(args.corpus, "gen-demos")
        corpus = load_corpus(args.corpus)
        flat_config = FlatConfig(state_dim=world.state_dim)
        models.flat_config = flat_config
        models.flat_ensemble = train_flat_ensemble(
            corpus, flat_config, [args.seed + 200 + k for k in range(5)])
        models.flat_gate = calibrate_flat_gate(
            _holdout_demos(world, args.seed * 1000 + 700, 8, 0.002),
            models.flat_ensemble, flat_config, seed=args.seed)
    session_config = SessionConfig(
        robots=args.robots, budget_ticks=args.budget_ticks,
        mode=args.mode, seed=args.seed,
        # pace a human operator at 10 Hz; scripted runs unthrottled
        tick_interval=0.1 if args.operator == "live" else 0.0)
    if args.operator == "scripted":
        operator = ScriptedOperator(world)
    else:
        operator = LiveOperator(port=args.port)
        print(f"waiting for operator console on port {operator.port} ...",
              flush=True)
        operator.accept()
    try:
        log, corpus = run_session(models, world, session_config, operator)
    finally:
        if args.operator == "live":
            operator.close()
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "fleet_log.ndjson")
    corpus_path = os.path.join(args.out, "collected.ndjson")
    log.to_ndjson(log_path)
    save_corpus(corpus, corpus_path)
    _write_manifest(os.path.join(args.out, "collect_manifest.json"), {
        "command": "collect",
        "mode": args.mode, "robots": args.robots, "budget_ticks": args.budget_ticks,
        "seed": args.seed, "operator": args.operator,
        "world_hash": world.hash(),
        "fleet_log_hash": _file_hash(log_path),
        "corpus_hash": _file_hash(corpus_path),
        "counters": log.counters,
    })
    print(f"collected {log.counters['demos_collected']} demos "
          f"({log.counters['episodes_failed']} failed episodes) -> {corpus_path}")
    return EXIT_OK


def cmd_eval_bc(args) -> int:
    _require(args.corpus, "collect")
    corpus = load_corpus(args.corpus)
    task = worldsim.TaskSpec(((0, args.pad),))
    if args.limit:
        corpus.trajectories = corpus.trajectories[:args.limit]
    report = evaluate_corpus(corpus, args.corpus_id or args.corpus, task,
                             train_seeds=_parse_seeds(args.train_seeds),
                             n_rollouts=args.rollouts, eval_seed=args.seed,
                             obs_noise=args.obs_noise)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "eval_report.json"), "w") as f:
        f.write(report.to_json() + "\n")
    print(format_report_table([report]))
    return EXIT_OK


def cmd_ablate(args) -> int:
    models, world = _load_models(args.models)
    models.gate = _load_gate(args.gate)
    _require(args.corpus, "gen-demos")
    corpus = load_corpus(args.corpus)
    flat_config = FlatConfig(state_dim=world.state_dim)
    models.flat_config = flat_config
    models.flat_ensemble = train_flat_ensemble(
        corpus, flat_config, [args.seed + 200 + k for k in range(5)])
    models.flat_gate = calibrate_flat_gate(
        _holdout_demos(world, args.seed * 1000 + 700, 8, 0.002),
        models.flat_ensemble, flat_config, seed=args.seed)

    seeds = _parse_seeds(args.seeds)
    modes = ("full", "no_hierarchy", "no_uncertainty")
    results = {m: {"demos": [], "steps": []} for m in modes}
    for mode in modes:
        for seed in seeds:
            cfg = SessionConfig(robots=args.robots, budget_ticks=args.budget_ticks,
                                mode=mode, seed=seed)
            log, out = run_session(models, world, cfg, ScriptedOperator(world))
            results[mode]["demos"].append(log.counters["demos_collected"])
            steps = [len(t.actions) for t in out.trajectories]
            results[mode]["steps"].append(
                float(np.mean(steps)) if steps else float("nan"))
    header = f"{'mode':<16} {'demos':>8} {'steps/success':>14}"
    lines = [header, "-" * len(header)]
    summary = {}
    for mode in modes:
        demos = float(np.mean(results[mode]["demos"]))
        steps = float(np.nanmean(results[mode]["steps"]))
        summary[mode] = {"demos_mean": demos, "steps_per_success": steps,
                         "per_seed_demos": results[mode]["demos"]}
        lines.append(f"{mode:<16} {demos:>8.1f} {steps:>14.1f}")
    table = "\n".join(lines) + "\n"
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ablation.json"), "w") as f:
        json.dump({"seeds": seeds, "robots": args.robots,
                   "budget_ticks": args.budget_ticks, "results": summary,
                   "version": __version__}, f, sort_keys=True, indent=2)
        f.write("\n")
    print(table)
    return EXIT_OK


def cmd_report(args) -> int:
    """Summarize whatever manifests and reports exist under --out."""
    found = False
    for name in ("gen_demos_manifest.json", "train_manifest.json",
                 "gate.json", "collect_manifest.json", "eval_report.json",
                 "ablation.json"):
        path = os.path.join(args.out, name)
        if not os.path.exists(path):
            continue
        found = True
        with open(path) as f:
            payload = json.load(f)
        print(f"== {name}")
        print(json.dumps(payload, sort_keys=True, indent=2))
    if not found:
        raise FileNotFoundError(
            f"no artifacts under {args.out}; run the pipeline subcommands first")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument wiring.


def build_parser() -> _Parser:
    parser = _Parser(prog="teleassist",
                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--out", default="runs", help="artifact directory")
        p.add_argument("--seed", type=int, default=seed_default)

    p = sub.add_parser("gen-demos", help="generate a scripted demo corpus")
    common(p, 7)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.002)
    p.add_argument("--world", default="default",
                   help="default | long | path to world-config JSON")
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train", help="train subgoal predictor + reaching ensemble")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--profile", default="desk", choices=sorted(PROFILES))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="calibrate gate thresholds")
    common(p)
    p.add_argument("--models", required=True, help="train output directory")
    p.add_argument("--n-holdout", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.002)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("collect", help="run a fleet collection session")
    common(p, 42)
    p.add_argument("--models", required=True)
    p.add_argument("--gate", default=None,
                   help="gate.json from calibrate (required for --mode full)")
    p.add_argument("--robots", type=int, default=4)
    p.add_argument("--budget-ticks", type=int, default=2400)
    p.add_argument("--mode", default="full",
                   choices=("full", "no_hierarchy", "no_uncertainty",
                            "unassisted"))
    p.add_argument("--corpus", default=None,
                   help="training corpus for the flat policy "
                        "(required for --mode no_hierarchy)")
    p.add_argument("--operator", default="scripted",
                   choices=("scripted", "live"))
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("eval-bc", help="behavioral-cloning quality probe")
    common(p, 99)
    p.add_argument("--corpus", required=True)
    p.add_argument("--corpus-id", default=None)
    p.add_argument("--train-seeds", default="0,1,2")
    p.add_argument("--rollouts", type=int, default=100)
    p.add_argument("--limit", type=int, default=0,
                   help="use only the first N trajectories")
    p.add_argument("--pad", type=int, default=worldsim.LEFT_PAD)
    p.add_argument("--obs-noise", type=float, default=0.0,
                   help="observation noise during eval rollouts")
    p.set_defaults(func=cmd_eval_bc)

    p = sub.add_parser("ablate", help="compare full vs ablated assist modes")
    common(p, 42)
    p.add_argument("--models", required=True)
    p.add_argument("--gate", default=None)
    p.add_argument("--corpus", required=True,
                   help="training corpus for the flat-ensemble ablation")
    p.add_argument("--seeds", default="42", help='e.g. "1..5" or "1,3,9"')
    p.add_argument("--robots", type=int, default=4)
    p.add_argument("--budget-ticks", type=int, default=2400)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="print manifests and reports under --out")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "gate", "unset") is None and \
            getattr(args, "mode", "full") == "full":
        # mode full needs calibrated thresholds; name the producing step
        print("error: --mode full requires --gate (gate.json produced by "
              "the `calibrate` subcommand)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
