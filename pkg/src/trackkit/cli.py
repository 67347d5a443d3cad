"""``trackkit`` command line.

Exit codes: 0 success, 2 malformed input, 3 invalid configuration,
4 sequence ids of GT and predictions do not align.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import formats
from .config import PipelineConfig
from .enhance import clahe, hist_equalize
from .errors import ConfigError, SchemaError, TrackkitError, UnknownSequenceId
from .events import denoise_indices, voxelize
from .metrics import evaluate
from .pipeline import run_sequence
from .synth import SynthSpec, env_seed, generate

log = logging.getLogger("trackkit")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_SEQUENCE = 4


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return PipelineConfig.from_dict(data)


# --------------------------------------------------------------------------
# commands


def cmd_track(args, config: PipelineConfig) -> int:
    obj = formats.load_json(args.detections)
    seqs = formats.parse_detections(obj, default_id=Path(args.detections).stem)
    if args.jobs > 1 and len(seqs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            preds = list(ex.map(run_sequence, seqs, [config] * len(seqs)))
    else:
        preds = [run_sequence(s, config) for s in seqs]
    out = formats.sequences_to_json(preds, args.rle_format)
    formats.atomic_write_text(args.output, formats.dumps_json(out))
    log.info("wrote %d sequence(s) to %s", len(preds), args.output)
    return EXIT_OK


def cmd_evaluate(args, config: PipelineConfig) -> int:
    gts = formats.parse_sequences(formats.load_json(args.gt), predictions=False)
    preds = formats.parse_sequences(formats.load_json(args.pred), predictions=True)
    report = evaluate(gts, preds, config.metrics.match_iou, jobs=args.jobs)
    print(report.to_table())
    if args.output:
        formats.atomic_write_text(args.output, formats.dumps_json(report.to_dict()))
    return EXIT_OK


def cmd_denoise(args, config: PipelineConfig) -> int:
    events, shape = formats.read_events(args.events)
    times = formats.read_frame_times(args.frame_times)
    if len(events) == 0:
        raise SchemaError(str(args.events), "event stream is empty")
    keep = denoise_indices(events, times, config.denoise.window_size, config.denoise.tau,
                           seed=env_seed())
    formats.write_events(args.output, events[keep], shape)
    log.info("kept %d of %d events", len(keep), len(events))
    return EXIT_OK


def cmd_voxelize(args, config: PipelineConfig) -> int:
    events, shape = formats.read_events(args.events)
    if args.height is not None and args.width is not None:
        shape = (args.height, args.width)
    if shape is None:
        if len(events) == 0:
            raise SchemaError(str(args.events), "cannot infer sensor size from an empty stream")
        shape = (int(events["y"].max()) + 1, int(events["x"].max()) + 1)
    grid = voxelize(events, shape[0], shape[1], args.bins or config.voxel.bins,
                    args.t_start, args.t_end, config.voxel.polarity_mode)
    formats.write_voxel_grid(args.output, grid)
    return EXIT_OK


def _enhance_one(src: Path, dst: Path, config: PipelineConfig) -> None:
    mode = config.enhance.mode
    if mode == "none":
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dst)
        return
    frame = formats.read_pgm(src)
    if mode == "he":
        out = hist_equalize(frame)
    else:
        out = clahe(frame, config.enhance.clip_limit, tuple(config.enhance.grid))
    formats.write_pgm(dst, out)


def cmd_enhance(args, config: PipelineConfig) -> int:
    src = Path(args.input)
    dst = Path(args.output)
    if src.is_dir():
        frames = sorted(src.glob("*.pgm"))
        for f in frames:
            _enhance_one(f, dst / f.name, config)
    else:
        _enhance_one(src, dst, config)
    return EXIT_OK


def _parse_gap(text: str):
    try:
        obj, start, n = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("gap must look like OBJECT:START:LENGTH") from None
    return obj, start, n


def cmd_synth(args, config: PipelineConfig) -> int:
    spec = SynthSpec(
        num_objects=args.objects, length=args.length, height=args.height, width=args.width,
        shape=args.shape, crossing=args.crossing, occlusion=args.occlusion, jitter=args.jitter,
        score=args.score, gaps=list(args.gap or []),
    )
    seed = args.seed if args.seed is not None else env_seed()
    gts, dets = [], []
    for k in range(args.sequences):
        sid = f"synth{k}"
        gt, d = generate(spec, seed=seed + k, sequence_id=sid)
        gts.append(gt)
        dets.append(formats.DetectionSequence(sid, gt.length, d, (spec.height, spec.width)))
    formats.atomic_write_text(args.gt, formats.dumps_json(formats.sequences_to_json(gts, args.rle_format)))
    formats.atomic_write_text(args.detections,
                              formats.dumps_json(formats.detections_to_json(dets, args.rle_format)))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline configuration")
    common.add_argument("--jobs", type=int, default=1, help="parallel sequences")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    common.add_argument("--rle-format", choices=("string", "array"), default="string")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="trackkit", description="Mask tracking, evaluation and event/frame preprocessing.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("track", parents=[common], help="detections JSON -> predictions JSON")
    s.add_argument("--detections")
    s.add_argument("--output")
    s.set_defaults(func=cmd_track, required=("detections", "output"))

    s = sub.add_parser("evaluate", parents=[common], help="score predictions against GT")
    s.add_argument("--gt")
    s.add_argument("--pred")
    s.add_argument("--output", help="write the report as JSON")
    s.set_defaults(func=cmd_evaluate, required=("gt", "pred"))

    s = sub.add_parser("denoise", parents=[common], help="GMM background-noise filter")
    s.add_argument("--events")
    s.add_argument("--frame-times")
    s.add_argument("--output")
    s.set_defaults(func=cmd_denoise, required=("events", "frame_times", "output"))

    s = sub.add_parser("voxelize", parents=[common], help="events -> voxel grid")
    s.add_argument("--events")
    s.add_argument("--output")
    s.add_argument("--bins", type=int)
    s.add_argument("--t-start", type=int)
    s.add_argument("--t-end", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--width", type=int)
    s.set_defaults(func=cmd_voxelize, required=("events", "output"))

    s = sub.add_parser("enhance", parents=[common], help="PGM contrast enhancement")
    s.add_argument("--input")
    s.add_argument("--output")
    s.set_defaults(func=cmd_enhance, required=("input", "output"))

    s = sub.add_parser("synth", parents=[common], help="write a synthetic GT + detections pair")
    s.add_argument("--gt")
    s.add_argument("--detections")
    s.add_argument("--objects", type=int, default=2)
    s.add_argument("--sequences", type=int, default=1)
    s.add_argument("--length", type=int, default=30)
    s.add_argument("--height", type=int, default=120)
    s.add_argument("--width", type=int, default=160)
    s.add_argument("--shape", choices=("rectangle", "ellipse"), default="rectangle")
    s.add_argument("--crossing", action="store_true")
    s.add_argument("--occlusion", action="store_true")
    s.add_argument("--jitter", type=int, default=0)
    s.add_argument("--score", type=float, default=0.9)
    s.add_argument("--gap", type=_parse_gap, action="append", metavar="OBJ:START:LEN")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth, required=("gt", "detections"))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(f"trackkit: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    missing = [name for name in args.required if getattr(args, name) is None]
    if missing:
        parser.error(f"{args.command}: missing --{', --'.join(m.replace('_', '-') for m in missing)}")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args, config)
    except UnknownSequenceId as e:
        print(f"trackkit: {e}", file=sys.stderr)
        return EXIT_SEQUENCE
    except ConfigError as e:
        print(f"trackkit: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrackkitError, ValueError, OSError) as e:
        print(f"trackkit: malformed input: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
