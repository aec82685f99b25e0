"""Command-line experiment harness.

Every subcommand writes its outputs under ``--out`` together with a
``manifest.json`` listing each file and its SHA-256. Options can also come
from a ``key=value`` spec file passed with ``--spec``; flags given on the
command line win.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

from .baselines import ProfilingSchedule, fixed_policy, profiling_policy
from .cross_camera import correlation_report, load_trajectory_log, save_rules, select_sources, shared_feature_maps
from .domain import DataError, build_config_space, load_profile, load_trace
from .experiment import demo_shifts, demo_train_config, train_on_scenario
from .expert import ExpertInfeasible, LagGrid, plan_for_env
from .gail import AgentPolicy, load_checkpoint, save_demonstrations, write_training_log
from .motion import chunk_maps, load_mv_log, write_pgm
from .scenarios import DEMO_FRAME, DEMO_MV_FPS, Scenario, asset_path
from .simulator import ReplayPolicy, run_session

POLICIES = ("fixed", "profiling", "expert", "agent", "agent+cross")
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
NAMED_TRACES = {"demo": "trace", "generous": "generous_trace"}


class SpecError(Exception):
    pass


def read_spec_file(path: str | Path) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SpecError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------- parser


def _frame(s: str) -> tuple[int, int]:
    w, h = s.lower().split("x")
    return int(w), int(h)


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--profile", help="profile CSV (default: bundled 300-chunk demo profile)")
    g.add_argument("--complexity", help="per-chunk complexity file accompanying --profile")
    g.add_argument("--trace", default="demo", help="trace CSV, or 'demo' / 'generous' for the bundled traces")
    g.add_argument("--mv-log", help="motion-vector log (default: bundled log when the profile is bundled)")
    g.add_argument("--frame-size", type=_frame, default=DEMO_FRAME, help="WxH of the MV log frames")
    g.add_argument("--mv-fps", type=int, default=DEMO_MV_FPS, help="frames per chunk in the MV log")
    g.add_argument("--k", type=int, default=8, help="history length")
    g.add_argument("--chunk-seconds", type=float, default=1.0)
    g.add_argument("--rtt", type=float, default=0.08)
    g.add_argument("--max-lag", type=float, default=1.0)
    g.add_argument("--lag-step", type=float, default=0.1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", help="key=value spec file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vastream", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="stream a scenario with one policy")
    _add_common(p)
    _add_scenario_args(p)
    p.add_argument("--policy", choices=POLICIES, default="fixed")
    p.add_argument("--config-id", type=int, default=0, help="configuration for --policy fixed")
    p.add_argument("--checkpoint", help="policy checkpoint for agent policies")
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--segment", type=int, default=4)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--trajectories", help="trajectory log for agent+cross")
    p.add_argument("--camera", help="target camera id for agent+cross")
    p.add_argument("--source-mv", action="append", default=[], metavar="CAM=PATH",
                   help="MV log of a source camera for agent+cross (repeatable)")

    p = sub.add_parser("expert", help="offline-optimal plan for a scenario")
    _add_common(p)
    _add_scenario_args(p)
    p.add_argument("--rounding", choices=("up", "half_up"), default="up")
    p.add_argument("--lag-blind", action="store_true", help="plan with on-time start delays only")

    p = sub.add_parser("train", help="train an agent by imitation (or the fixed-reward ablation)")
    _add_common(p)
    _add_scenario_args(p)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--ablation", choices=("fixed-reward",), help="train on accuracy/lag reward instead")
    p.add_argument("--alpha", type=float, default=0.5, help="accuracy weight of the fixed reward")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--rollouts", type=int, default=4)
    p.add_argument("--minibatch", type=int, default=128)
    p.add_argument("--ppo-epochs", type=int, default=4)
    p.add_argument("--demos", type=int, default=5, help="number of expert demonstrations")
    p.add_argument("--val-every", type=int, default=10)
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    _add_scenario_args(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("features", help="motion-vector log to PGM feature maps")
    _add_common(p)
    p.add_argument("--mv-log", help="motion-vector log (default: bundled)")
    p.add_argument("--frame-size", type=_frame, default=DEMO_FRAME)
    p.add_argument("--mv-fps", type=int, default=DEMO_MV_FPS)
    p.add_argument("--chunks", type=int, help="number of chunks (default: all frames in the log)")
    p.add_argument("--sigma", type=int, default=20)

    p = sub.add_parser("correlate", help="trajectory log to camera share rules")
    _add_common(p)
    p.add_argument("--trajectories", help="trajectory CSV (default: bundled three-camera fixture)")
    p.add_argument("--camera", action="append", help="target camera (repeatable; default: all)")
    p.add_argument("--s-thresh", type=float, default=0.7)
    p.add_argument("--t-thresh", type=float, default=0.9)
    p.add_argument("--grid", type=_frame, default=(16, 16), metavar="ROWSxCOLS")

    p = sub.add_parser("report", help="merge run summaries into a comparison table")
    _add_common(p)
    p.add_argument("inputs", nargs="+", metavar="NAME=DIR", help="run directories holding summary.json")
    return parser


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--spec")
    known, _ = pre.parse_known_args(argv)
    if known.spec:
        values = read_spec_file(known.spec)
        cmd = next((a for a in argv if not a.startswith("-")), None)
        subparser = parser._subparsers._group_actions[0].choices.get(cmd)  # noqa: SLF001
        if subparser is None:
            raise SpecError("a subcommand must precede --spec")
        dests = {a.dest: a for a in subparser._actions}  # noqa: SLF001
        unknown = sorted(set(values) - set(dests))
        if unknown:
            raise SpecError(f"{known.spec}: unknown keys {unknown}")
        for k, v in values.items():
            action = dests[k]
            if action.nargs == 0:
                values[k] = v.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):  # noqa: SLF001
                values[k] = [s.strip() for s in v.split(",") if s.strip()]
            if action.required and k in values:
                action.required = False
        subparser.set_defaults(**values)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, args: argparse.Namespace, files: dict[str, Path], extra: dict | None = None,
                   elapsed: float | None = None) -> Path:
    clean = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {
        "command": args.command,
        "args": clean,
        "files": {name: {"path": p.name if p.parent == out else str(p.relative_to(out)), "sha256": _sha256(p)}
                  for name, p in sorted(files.items())},
        "elapsed_s": elapsed,  # wall clock; the only field that varies between identical runs
    }
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise SpecError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise SpecError(f"{what} {p} does not exist")
    return p


def load_scenario(args: argparse.Namespace, with_maps: bool = True) -> Scenario:
    bundled = args.profile is None
    if bundled:
        profile = load_profile(asset_path("profile"), asset_path("complexity"))
    else:
        cx = _require(args.complexity, "--complexity") if args.complexity else None
        profile = load_profile(_require(args.profile, "--profile"), cx)
    if args.trace in NAMED_TRACES:
        trace = load_trace(asset_path(NAMED_TRACES[args.trace]))
    else:
        trace = load_trace(_require(args.trace, "--trace"))
    space = build_config_space()
    if profile.n_configs != len(space):
        raise SpecError(f"profile has {profile.n_configs} configurations, expected {len(space)}")
    maps = None
    mv = args.mv_log or (asset_path("mv_log") if bundled else None)
    if with_maps and mv is not None:
        maps = chunk_maps(load_mv_log(_require(str(mv), "--mv-log")), *args.frame_size, args.mv_fps, profile.n_chunks)
    return Scenario("cli", profile, trace, space, maps, args.k, args.chunk_seconds, args.rtt)


def _grid(args, rounding: str = "up") -> LagGrid:
    try:
        return LagGrid(args.lag_step, args.max_lag, rounding)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


# ---------------------------------------------------------------- commands


def cmd_simulate(args, out: Path) -> dict[str, Path]:
    sc = load_scenario(args)
    if args.policy == "agent+cross":
        sc = _with_shared_maps(sc, args)
    env = sc.env()
    if args.policy == "fixed":
        if not 0 <= args.config_id < len(sc.space):
            raise SpecError(f"--config-id must lie in [0, {len(sc.space) - 1}]")
        policy = fixed_policy(sc.space[args.config_id], sc.space)
    elif args.policy == "profiling":
        try:
            schedule = ProfilingSchedule(args.window, args.segment, args.top_k)
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
        policy = profiling_policy(schedule, sc.space, sc.profile, sc.T, sc.rtt)
    elif args.policy == "expert":
        plan = plan_for_env(env, _grid(args))
        policy = ReplayPolicy(sc.space, plan.config_ids)
    else:
        snap = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
        policy = AgentPolicy(snap.policy, sc.space, snap.cfg.L)
    return run_session(policy, env).write(out)


def _with_shared_maps(sc: Scenario, args) -> Scenario:
    if sc.feature_maps is None:
        raise SpecError("agent+cross needs the target camera's --mv-log")
    log = load_trajectory_log(_require(args.trajectories, "--trajectories"))
    if not args.camera:
        raise SpecError("--camera is required for agent+cross")
    shape = sc.feature_maps[0].values.shape
    rules = select_sources(log, args.camera, grid_shape=shape)
    sources = {}
    for item in args.source_mv:
        cam, _, path = item.partition("=")
        mv = load_mv_log(_require(path, f"--source-mv {cam}"))
        sources[cam] = chunk_maps(mv, *args.frame_size, args.mv_fps, sc.profile.n_chunks)
    maps = shared_feature_maps(sc.feature_maps, sources, rules, sc.T)
    return Scenario(sc.name, sc.profile, sc.trace, sc.space, maps, sc.k, sc.T, sc.rtt)


def cmd_expert(args, out: Path) -> dict[str, Path]:
    sc = load_scenario(args, with_maps=False)
    env = sc.env()
    plan = plan_for_env(env, _grid(args, args.rounding), lag_aware=not args.lag_blind)
    files = {"plan": out / "plan.csv"}
    plan.write_csv(files["plan"])
    files.update(run_session(ReplayPolicy(sc.space, plan.config_ids), env).write(out))
    return files


def cmd_train(args, out: Path) -> dict[str, Path]:
    sc = load_scenario(args)
    reward = "fixed" if args.ablation == "fixed-reward" else "gail"
    try:
        cfg = demo_train_config(epochs=args.epochs, seed=args.seed, reward=reward, alpha=args.alpha, lr=args.lr,
                                rollouts_per_epoch=args.rollouts, minibatch_size=args.minibatch,
                                ppo_epochs=args.ppo_epochs, val_every=args.val_every, L=args.max_lag)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    shifts = demo_shifts(sc.trace.duration, args.demos)
    snap, demos = train_on_scenario(sc, cfg, shifts, verbose=args.verbose)
    files = {"checkpoint": out / "checkpoint.json", "training_log": out / "training_log.csv"}
    snap.save(files["checkpoint"])
    write_training_log(snap.history, files["training_log"])
    if demos:
        files["demonstrations"] = out / "demonstrations.jsonl"
        save_demonstrations(demos, files["demonstrations"], cfg.L)
    files.update(run_session(snap.agent(sc.space), sc.env()).write(out))
    return files


def cmd_eval(args, out: Path) -> dict[str, Path]:
    sc = load_scenario(args)
    snap = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    return run_session(snap.agent(sc.space), sc.env()).write(out)


def cmd_features(args, out: Path) -> dict[str, Path]:
    log = load_mv_log(_require(args.mv_log, "--mv-log") if args.mv_log else asset_path("mv_log"))
    n = args.chunks if args.chunks is not None else (int(log[:, 0].max()) // args.mv_fps + 1 if len(log) else 0)
    maps = chunk_maps(log, *args.frame_size, args.mv_fps, n, sigma=args.sigma)
    mdir = out / "maps"
    mdir.mkdir(parents=True, exist_ok=True)
    files = {}
    for i, m in enumerate(maps):
        p = mdir / f"chunk_{i:04d}.pgm"
        p.write_bytes(write_pgm(m))
        files[f"map_{i:04d}"] = p
    return files


def cmd_correlate(args, out: Path) -> dict[str, Path]:
    path = _require(args.trajectories, "--trajectories") if args.trajectories else asset_path("trajectories")
    log = load_trajectory_log(path)
    targets = args.camera or log.cameras
    rules = [r for c in targets for r in select_sources(log, c, args.s_thresh, args.t_thresh, args.grid)]
    windows = {(r.source, r.target): (r.t1, r.t2) for r in rules}
    files = {"rules": out / "rules.json"}
    save_rules(rules, files["rules"], correlation_report(log, windows))
    return files


REPORT_FIELDS = ["name", "n_chunks", "mean_accuracy", "mean_lag", "max_lag", "frac_accuracy_above_0.9",
                 "frac_lag_below_1s", "total_bytes"]


def cmd_report(args, out: Path) -> dict[str, Path]:
    rows = []
    for item in args.inputs:
        name, sep, d = item.partition("=")
        if not sep:
            name, d = Path(item).name, item
        summary = json.loads(_require(str(Path(d) / "summary.json"), "summary").read_text())
        rows.append({"name": name, **summary})
    files = {"comparison": out / "comparison.csv"}
    with open(files["comparison"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in rows:
            w.writerow([r["name"]] + [r[k] if isinstance(r[k], int) else repr(float(r[k])) for k in REPORT_FIELDS[1:]])
    return files


COMMANDS = {
    "simulate": cmd_simulate,
    "expert": cmd_expert,
    "train": cmd_train,
    "eval": cmd_eval,
    "features": cmd_features,
    "correlate": cmd_correlate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        files = COMMANDS[args.command](args, out)
    except ExpertInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        write_manifest(out, args, {}, {"status": "infeasible", "reason": str(exc)})
        return EXIT_INFEASIBLE
    except (SpecError, DataError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    files = {k: Path(v) for k, v in files.items()}
    write_manifest(out, args, files, {"status": "ok"}, time.perf_counter() - t0)
    print(json.dumps({k: str(v) for k, v in sorted(files.items())}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
