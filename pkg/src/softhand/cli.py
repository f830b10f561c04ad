"""Command-line entry point wiring all subsystems.

Subcommands: simulate, dataset-gen, train, infer, eval, replay, serve.
Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Every subcommand except real-time serve is deterministic under a fixed
seed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


class DataError(RuntimeError):
    pass


# --- simulate ----------------------------------------------------------------


def _parse_script(path: Path) -> list[tuple[int, int, str]]:
    events = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) not in (2, 3):
            raise DataError(f"{path}:{lineno}: expected '<tick> <button> [press|release]'")
        tick, button = int(parts[0]), int(parts[1])
        action = parts[2] if len(parts) == 3 else "press"
        events.append((tick, button, action))
    return sorted(events)


def cmd_simulate(args) -> int:
    from . import control
    from .hand import FINGERS

    cfgmod.log_resolved(args, "simulate")
    if args.calibrate:
        configs = control.calibrate_closing_times()
        for group, cfg in sorted(configs.items()):
            report = control.close_finger(group, config=cfg)
            print(
                f"calibrated {group}: velocity_limit={cfg.velocity_limit_steps:.1f} steps/s"
                f" closing_time={report.closing_time_s:.3f} s"
            )

    sim = control.HandSimulator()
    events = _parse_script(Path(args.script)) if args.script else []
    if args.close:
        groups = ["thumb", "index", "coupled"] if args.close == "all" else [args.close]
        for group in groups:
            button = {"thumb": 1, "index": 2, "coupled": 3}[group]
            events.append((0, button, "press"))
    events.sort()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["time_s", "progress"]
        for m in range(3):
            header += [f"m{m}_count", f"m{m}_duty", f"m{m}_velocity"]
        for finger in FINGERS:
            header += [f"{finger}_mcp", f"{finger}_pip"]
        writer.writerow(header)
        ei = 0
        for tick in range(args.ticks):
            while ei < len(events) and events[ei][0] <= tick:
                sim.press_button(events[ei][1], events[ei][2])
                ei += 1
            sim.tick()
            if tick % args.sample_every:
                continue
            state = sim.hand_state()
            row = [f"{sim.sim_time_s:.3f}", f"{sim.progress():.6f}"]
            for channel in sim.channels:
                row += [
                    channel.state.encoder_count,
                    channel.state.pwm_duty,
                    f"{channel.velocity_steps:.3f}",
                ]
            for finger in FINGERS:
                fs = state.fingers[finger]
                row += [f"{fs.mcp_angle:.6f}", f"{fs.pip_angle:.6f}"]
            writer.writerow(row)
    counts = sim.counts()
    print(f"trace written to {out} ({args.ticks} ticks); final counts {counts}")
    return EXIT_OK


# --- dataset-gen -------------------------------------------------------------


def cmd_dataset_gen(args) -> int:
    from .grasp import generate_dataset, save_dataset
    from .grasp.scene import count_subimages

    classes = args.classes.split(",") if args.classes else None
    runs = generate_dataset(
        object_classes=classes,
        runs_per_class=args.runs,
        seed=args.seed,
        distortion=not args.no_distortion,
    )
    save_dataset(
        runs,
        args.out,
        meta={"seed": args.seed, "distortion": not args.no_distortion},
    )
    cfgmod.log_resolved(args, "dataset-gen", out_dir=args.out)
    print(f"wrote {len(runs)} runs, {count_subimages(runs)} sub-images to {args.out}")
    return EXIT_OK


# --- train -------------------------------------------------------------------


def cmd_train(args) -> int:
    from .grasp import load_class_runs
    from .grasp.evaluate import _samples_of
    from .segnet import TrainConfig, train, quantize, save_weights

    cfgmod.log_resolved(args, "train")
    runs = load_class_runs(args.dataset, args.object_class)
    samples = _samples_of(runs)
    result = train(
        samples,
        TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            seed=args.seed,
        ),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(out, quantize(result.weights))
    if args.loss_curve:
        with open(args.loss_curve, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "mean_loss"])
            for i, loss in enumerate(result.loss_curve, start=1):
                writer.writerow([i, f"{loss:.8f}"])
    print(
        f"trained on {len(samples)} sub-images for {args.epochs} epochs; "
        f"final loss {result.loss_curve[-1]:.6f}; weights -> {out}"
    )
    return EXIT_OK


# --- infer -------------------------------------------------------------------


def cmd_infer(args) -> int:
    from . import imageio
    from .segnet import dequantize, forward, load_weights

    cfgmod.log_resolved(args, "infer")
    qweights = load_weights(args.weights)
    weights = dequantize(qweights)
    image = imageio.read_ppm(args.image)
    result = forward(image.astype(np.float32) / 255.0, weights)
    if args.out:
        imageio.write_pgm(args.out, result.mask)
        print(f"mask -> {args.out} ({int(result.mask.sum())} object pixels)")
    if args.ledger:
        ledger = result.ledger
        print("layer        macs")
        for name, macs in ledger.per_layer_macs.items():
            print(f"{name:<10} {macs:>10}")
        print(f"total MACs            {ledger.total_macs}")
        print(f"weight payload bytes  {qweights.payload_bytes()}")
        print(f"peak activation bytes {ledger.peak_activation_bytes}")
    return EXIT_OK


# --- eval --------------------------------------------------------------------


def cmd_eval(args) -> int:
    from .grasp import ExperimentConfig, run_experiment

    classes = tuple(args.classes.split(",")) if args.classes else None
    kwargs = {}
    if classes:
        kwargs["classes"] = classes
    experiment = ExperimentConfig(
        dataset_dir=args.dataset,
        tuning_class=args.tuning_class,
        folds=args.folds,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        workers=args.workers,
        **kwargs,
    )
    report = run_experiment(experiment)
    report.save(args.out)
    cfgmod.log_resolved(args, "eval", out_dir=args.out)
    print(f"evaluated {len(report.records)} sub-images over {len(report.per_fold())} folds")
    for stat in report.quartiles():
        mean = "-" if stat["mean"] is None else f"{stat['mean']:.4f}"
        print(f"quartile {stat['quartile']}: mean accuracy {mean} (n={stat['count']})")
    print(f"report -> {args.out}")
    return EXIT_OK


# --- replay ------------------------------------------------------------------


def cmd_replay(args) -> int:
    from . import framing, imageio

    cfgmod.log_resolved(args, "replay")
    data = Path(args.stream).read_bytes()
    events = framing.decode_stream(data)
    frames = [e for e in events if isinstance(e, framing.Frame)]
    losses = [e for e in events if isinstance(e, framing.SyncLoss)]
    per_camera: dict[int, int] = {}
    for frame in frames:
        per_camera[frame.camera_id] = per_camera.get(frame.camera_id, 0) + 1
    if args.dump_dir:
        dump = Path(args.dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        for frame in frames:
            imageio.write_ppm(
                dump / f"cam{frame.camera_id}_{frame.frame_counter:06d}.ppm",
                frame.to_array(),
            )
    print(f"decoded {len(frames)} frames, {len(losses)} sync losses")
    for camera_id in sorted(per_camera):
        print(f"  camera {camera_id}: {per_camera[camera_id]} frames")
    for loss in losses[:10]:
        print(f"  sync loss at byte {loss.offset}: {loss.reason}")
    if len(losses) > 10:
        print(f"  ... {len(losses) - 10} more")
    return EXIT_OK


# --- serve -------------------------------------------------------------------


def cmd_serve(args) -> int:
    from .server import ServeConfig, serve_forever

    cfgmod.log_resolved(args, "serve")
    serve_config = ServeConfig(
        host=args.host,
        port=args.port,
        object_class=args.object_class,
        seed=args.seed,
        speed_factor=args.speed,
        frame_hz=args.frame_hz,
        weights_path=args.weights,
        fault_period=args.fault_period,
    )
    try:
        serve_forever(serve_config)
    except OSError as exc:
        print(f"serve: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="softhand", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the 1 kHz hand simulation to a CSV trace")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--close", choices=["thumb", "index", "coupled", "all"])
    p.add_argument("--script", help="button script: '<tick> <button> [press|release]' per line")
    p.add_argument("--ticks", type=int, default=2000)
    p.add_argument("--sample-every", type=int, default=1)
    p.add_argument("--calibrate", action="store_true", help="run closing-time calibration first")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dataset-gen", help="generate the synthetic grasp dataset")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--classes", help="comma list; default all five")
    p.add_argument("--runs", type=int, default=11)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-distortion", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dataset_gen)

    p = sub.add_parser("train", help="train the segmentation network on one class")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--dataset")
    p.add_argument("--object-class")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--loss-curve", help="CSV path for the per-epoch loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment one image and report the resource ledger")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--weights")
    p.add_argument("--image")
    p.add_argument("--out", help="P5 mask output path")
    p.add_argument("--ledger", action="store_true", help="print per-layer MACs and byte counts")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="run the cross-validation experiment")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--dataset")
    p.add_argument("--classes", help="comma list; default all five")
    p.add_argument("--tuning-class", default="bowl")
    p.add_argument("--folds", type=int, default=11)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=2.5e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=0, help="0 = one per CPU")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="decode a recorded camera stream file")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--stream")
    p.add_argument("--dump-dir", help="write decoded frames as P6 files")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="live teleoperation session over WebSocket")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--object-class", default="strawberry")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speed", type=float, default=1.0, help="sim seconds per wall second; 0 = flat out")
    p.add_argument("--frame-hz", type=int, default=10)
    p.add_argument("--weights", help="quantized weights for live inference")
    p.add_argument("--fault-period", type=int, default=0, help="corrupt one tile every N frame packets")
    p.set_defaults(func=cmd_serve)
    return parser


# flags that must be present after merging the config file
_REQUIRED = {
    "simulate": ("out",),
    "dataset-gen": ("out",),
    "train": ("dataset", "object_class", "out"),
    "infer": ("weights", "image"),
    "eval": ("dataset", "out"),
    "replay": ("stream",),
    "serve": (),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub_map = {
            a.dest: a for a in parser._subparsers._group_actions
        }
        subparser = sub_map["command"].choices[args.command]
        try:
            values = cfgmod.load_config_file(args.config)
        except (OSError, cfgmod.ConfigError) as exc:
            print(f"softhand: {exc}", file=sys.stderr)
            return EXIT_DATA
        known = {a.dest for a in subparser._actions}
        unknown = set(values) - known
        if unknown:
            print(f"softhand: {args.config}: unknown keys {sorted(unknown)}", file=sys.stderr)
            return EXIT_USAGE
        typed = {}
        for action in subparser._actions:
            if action.dest in values:
                raw = values[action.dest]
                if action.type is not None:
                    typed[action.dest] = action.type(raw)
                elif isinstance(action.default, bool):
                    typed[action.dest] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    typed[action.dest] = raw
        subparser.set_defaults(**typed)
        args = parser.parse_args(argv)

    missing = [
        f"--{name.replace('_', '-')}"
        for name in _REQUIRED[args.command]
        if getattr(args, name) is None
    ]
    if missing:
        print(f"softhand {args.command}: missing required {', '.join(missing)}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"softhand: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"softhand: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # domain validation errors (framing, dataset, weights, config)
        print(f"softhand: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract for CI
        print(f"softhand: unexpected failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
