"""Command-line interface: ``handxfer {synth,ingest,align,train,eval,rollout}``.

Exit codes are 0 on success, 1 when a command fails at run time (the error
class name is printed to stderr) and 2 for invalid arguments. Every command
with an ``--out`` directory writes ``resolved_config.json`` there.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .errors import HandXferError

log = logging.getLogger("handxfer")

FRAMES = {"world": "WORLD_GRAVITY_ALIGNED", "robot_base": "ROBOT_BASE"}


class UsageError(Exception):
    pass


def _threads(args) -> int:
    env = os.environ.get("AINA_THREADS")
    value = env if env is not None else args.threads
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise UsageError("thread count must be at least 1")
    return n


def _task_spec(value: str):
    from .scene import TASKS, TaskSpec

    if value in TASKS:
        spec = TaskSpec(task=value)
    elif Path(value).is_file():
        spec = TaskSpec.load(value)
    else:
        raise UsageError(f"--task must be one of {TASKS} or a task spec JSON file")
    return spec


def _out_dir(args) -> Path | None:
    if getattr(args, "out", None) is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(out: Path | None, args, **resolved) -> None:
    if out is None:
        return
    cfg = {"command": args.command, "seed": args.seed, "threads": args.resolved_threads,
           "args": {k: v for k, v in sorted(vars(args).items())
                    if k not in ("func", "command", "seed", "threads", "resolved_threads",
                                 "log_level")},
           **resolved}
    (out / "resolved_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True, default=str))


def _emit(report: dict, out: Path | None, name: str) -> None:
    text = json.dumps(report, indent=1, sort_keys=True)
    if out is not None:
        (out / name).write_text(text)
    print(text)


def cmd_synth(args) -> None:
    from .demos.fileio import save_dataset
    from .demos.synth import synth_generate

    if args.count < 1:
        raise UsageError("--count must be at least 1")
    spec = _task_spec(args.task)
    seed = 0 if args.seed is None else args.seed
    dataset = synth_generate(spec, args.count, seed)
    out = _out_dir(args)
    save_dataset(dataset, out)
    _snapshot(out, args, task=spec.to_dict())
    log.info("wrote 1 in-scene and %d in-the-wild demos to %s", len(dataset.in_the_wild), out)


def cmd_ingest(args) -> None:
    from .demos.fileio import save_trajectory
    from .demos.model import FrameOfReference
    from .demos.perception import ingest, load_bundle

    bundle = load_bundle(args.bundle)
    traj = ingest(bundle, args.mode, FrameOfReference[FRAMES[args.frame]])
    out = _out_dir(args)
    save_trajectory(traj, out / "trajectory.aina")
    _snapshot(out, args)


def cmd_align(args) -> None:
    from .align import align_trajectory
    from .demos.fileio import save_dataset, load_trajectory
    from .demos.model import Dataset

    scene = load_trajectory(args.scene)
    wild_dir = Path(args.wild_dir)
    if not wild_dir.is_dir():
        raise FileNotFoundError(f"no such directory: {wild_dir}")
    names = sorted(p for p in wild_dir.iterdir() if p.suffix == ".aina")
    results = [align_trajectory(load_trajectory(p), scene, args.mode) for p in names]
    out = _out_dir(args)
    save_dataset(Dataset(scene, [r.aligned for r in results],
                         {"alignment_mode": args.mode, "sources": [p.name for p in names]}), out)
    with open(out / "alignment.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "delta_x", "delta_y", "delta_z", "theta_z"])
        for p, r in zip(names, results):
            w.writerow([p.name, *(repr(float(v)) for v in r.delta_o), repr(r.theta_z)])
    _snapshot(out, args)


def _policy_config(args):
    from .vnpolicy.config import PolicyConfig, desk_config

    config = PolicyConfig.load(args.config) if args.config else desk_config()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.epochs is not None:
        config = config.replace(epochs=args.epochs)
    return config


def cmd_train(args) -> None:
    from .demos.fileio import load_dataset
    from .vnpolicy.fileio import save_model
    from .vnpolicy.train import train

    config = _policy_config(args)
    dataset = load_dataset(args.data)
    model, tlog = train(dataset, config)
    out = _out_dir(args)
    save_model(model, out / "model.ainm")
    (out / "training_log.json").write_text(json.dumps(tlog.to_dict(), indent=1))
    _snapshot(out, args, policy=config.to_dict())
    print(json.dumps({"final_loss": tlog.epoch_loss[-1], "epochs": len(tlog.epoch_loss)}))


def cmd_eval(args) -> None:
    from .demos.fileio import load_dataset
    from .vnpolicy.fileio import load_model
    from .vnpolicy.train import check_aligned, evaluate_mse

    model = load_model(args.model)
    dataset = load_dataset(args.data)
    check_aligned(dataset.trajectories)
    mse = evaluate_mse(model, dataset.trajectories)
    out = _out_dir(args)
    _snapshot(out, args, policy=model.config.to_dict())
    _emit({"mse": mse, "trajectories": len(dataset.trajectories)}, out, "eval_report.json")


def cmd_rollout(args) -> None:
    from .rollout import ModelPolicy, evaluate
    from .vnpolicy.fileio import load_model

    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    if args.exec_prefix < 1:
        raise UsageError("--exec-prefix must be at least 1")
    spec = _task_spec(args.task)
    model = load_model(args.model)
    if model.config.N != spec.N:
        spec = type(spec).from_dict({**spec.to_dict(), "N": model.config.N})
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    result = evaluate(ModelPolicy(model), spec, args.episodes, seed, args.exec_prefix,
                      trace_dir=None if out is None else out / "traces",
                      threads=args.resolved_threads)
    _snapshot(out, args, task=spec.to_dict())
    if out is not None:
        (out / "rollout_report.json").write_text(result.to_json())
    print(json.dumps({"success_rate": result.success_rate, "episodes": args.episodes}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="handxfer", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="global random seed")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--threads", default=None,
                   help="worker threads for episode evaluation (AINA_THREADS overrides)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate scripted demonstrations")
    s.add_argument("--task", required=True, help="task name or task spec JSON")
    s.add_argument("--count", type=int, required=True, help="demos including the in-scene one")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="lift a perception bundle to a 3D trajectory")
    s.add_argument("--bundle", required=True)
    s.add_argument("--mode", choices=["stereo_disparity", "direct_depth"], default="direct_depth")
    s.add_argument("--frame", choices=sorted(FRAMES), default="robot_base")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("align", help="bring in-the-wild demos into the robot frame")
    s.add_argument("--scene", required=True, help="in-scene trajectory file")
    s.add_argument("--wild-dir", required=True, help="directory of in-the-wild .aina files")
    s.add_argument("--mode", choices=["pivoted", "literal"], default="pivoted")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("train", help="train a policy on an aligned dataset")
    s.add_argument("--data", required=True, help="aligned dataset directory or manifest")
    s.add_argument("--config", default=None, help="policy config JSON (default: desk scale)")
    s.add_argument("--epochs", type=int, default=None, help="override the config's epochs")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="held-out prediction MSE of a trained policy")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="aligned dataset directory or manifest")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("rollout", help="closed-loop evaluation in the simulated scene")
    s.add_argument("--model", required=True)
    s.add_argument("--task", required=True, help="task name or task spec JSON")
    s.add_argument("--episodes", type=int, default=20)
    s.add_argument("--exec-prefix", type=int, default=10)
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_rollout)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.resolved_threads = _threads(args)
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (HandXferError, OSError, ValueError, KeyError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
