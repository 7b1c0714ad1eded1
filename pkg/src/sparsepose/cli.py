"""Command-line entry point: synth, trackers, train, eval, infer, bench."""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

from .config import RunConfig
from .data import (
    KINDS,
    MotionClip,
    clip_to_text,
    extract_trackers,
    load_clip,
    load_clips,
    load_stream,
    save_clip,
    save_stream,
    synth_motion,
)
from .errors import ConfigError, SparsePoseError
from .ik import IkConfig
from .model import load_checkpoint
from .pipeline import PipelineConfig, bench, evaluate_clips, infer_stream
from .skeleton import load_skeleton
from .training import train

log = logging.getLogger("sparsepose")


def cmd_synth(args) -> int:
    clip = synth_motion(args.kind, args.duration, args.seed, args.fps)
    out = Path(args.out)
    if args.text:
        out.write_text(clip_to_text(clip))
    else:
        save_clip(clip, out)
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    print(f"{out}: {args.kind} {len(clip)} frames @ {args.fps:g} fps sha256={digest}")
    return 0


def cmd_trackers(args) -> int:
    s = load_skeleton(args.skeleton)
    clip = load_clip(args.clip)
    save_stream(extract_trackers(clip, s), clip.fps, args.out)
    print(f"{args.out}: {len(clip)} frames x 3 devices")
    return 0


def _clip_paths(items: list[str]) -> list[MotionClip]:
    clips: list[MotionClip] = []
    for item in items:
        p = Path(item)
        clips.extend(load_clips(p) if p.is_dir() else [load_clip(p)])
    return clips


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    tc = cfg.train
    if args.max_iters is not None:
        tc.max_iters = args.max_iters
    clips = load_clips(args.data_dir)
    if not clips:
        raise ConfigError(f"no *.spmc clips in {args.data_dir}")
    s = load_skeleton(args.skeleton or cfg.skeleton)
    history = args.history or str(Path(args.out).with_suffix(".loss.txt"))
    res = train(
        clips,
        tc,
        cfg.model,
        s,
        checkpoint=args.out,
        history_path=history,
        resume=args.resume,
    )
    last = res.history[-1][1] if res.history else float("nan")
    print(f"trained to iteration {res.iteration}, last loss {last:.6f}; checkpoint {args.out}, history {history}")
    return 0


def _pipeline(args, ik_default: IkConfig) -> PipelineConfig:
    iters = ik_default.iters if args.ik_iters is None else args.ik_iters
    ik = IkConfig(ik_default.lr if args.ik_lr is None else args.ik_lr, iters, args.ik_optimizer or ik_default.optimizer)
    return PipelineConfig(ik=ik, use_ik=not args.no_ik, no_stabilizer=args.no_stabilizer)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("THREADS", "1"))


def cmd_eval(args) -> int:
    w, _, _ = load_checkpoint(args.checkpoint)
    s = load_skeleton(args.skeleton)
    clips = _clip_paths(args.clips)
    if not clips:
        raise ConfigError("no evaluation clips given")
    report = evaluate_clips(w, clips, s, _pipeline(args, IkConfig()), threads=_threads(args))
    table = report.to_table()
    print(table, end="")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(table)
        (out / "report.kv").write_text(report.to_keyvalue())
    return 0


def cmd_infer(args) -> int:
    w, _, _ = load_checkpoint(args.checkpoint)
    s = load_skeleton(args.skeleton)
    stream, fps = load_stream(args.stream)
    inf = infer_stream(w, stream, s, _pipeline(args, IkConfig()))
    clip = MotionClip.from_pose(inf.pose, fps, s, "inferred")
    save_clip(clip, args.out)
    print(f"{args.out}: {len(clip)} frames (stream frames {inf.frame_index[0]}..{inf.frame_index[-1]})")
    return 0


def cmd_bench(args) -> int:
    w, _, _ = load_checkpoint(args.checkpoint)
    s = load_skeleton(args.skeleton)
    rep = bench(w, s, args.frames, IkConfig(iters=args.ik_iters))
    text = rep.to_text()
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsepose", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic motion clip")
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--duration", type=float, required=True, help="seconds")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fps", type=float, default=60.0)
    sp.add_argument("--text", action="store_true", help="write the text fixture format")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("trackers", help="extract head/hand tracker stream from a clip")
    sp.add_argument("--clip", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--skeleton")
    sp.set_defaults(func=cmd_trackers)

    sp = sub.add_parser("train", help="train on a directory of clips")
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--history", help="loss history path (default: <out>.loss.txt)")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--skeleton")
    sp.set_defaults(func=cmd_train)

    def pipeline_flags(sp):
        sp.add_argument("--skeleton")
        sp.add_argument("--no-ik", action="store_true")
        sp.add_argument("--no-stabilizer", action="store_true")
        sp.add_argument("--ik-iters", type=int)
        sp.add_argument("--ik-lr", type=float)
        sp.add_argument("--ik-optimizer", choices=("adam", "gd"))

    sp = sub.add_parser("eval", help="evaluate a checkpoint on clips")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--clips", nargs="+", required=True, help="clip files or directories")
    sp.add_argument("--out-dir")
    sp.add_argument("--threads", type=int)
    pipeline_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("infer", help="predict a motion clip from a tracker stream")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--stream", required=True)
    sp.add_argument("--out", required=True)
    pipeline_flags(sp)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("bench", help="time network inference and IK iterations")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--frames", type=int, default=1000)
    sp.add_argument("--ik-iters", type=int, default=5)
    sp.add_argument("--skeleton")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (SparsePoseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
