"""Command-line interface: encode, decode, stats, metrics, bdrate, report,
train, init."""

import argparse
import json
import sys

import numpy as np

from . import metrics, report, video_io
from .config import CodecConfig, TrainConfig
from .model import VideoCodecModel
from .pipeline import (FRAME_I, SequenceCodec, load_checkpoint,
                       save_checkpoint, unpack_container)
from .training import train_stage


def _load_input(args):
    return video_io.load_sequence(args.input, args.format, width=args.width,
                                  height=args.height, n_frames=args.frames)


def cmd_encode(args):
    model = load_checkpoint(args.checkpoint)
    if args.gop:
        model.cfg.gop_size = args.gop
    if args.lam:
        model.cfg.lam = args.lam
    seq = _load_input(args)
    result = SequenceCodec(model).encode_sequence(seq)
    with open(args.out, "wb") as f:
        f.write(result["container"])
    print(json.dumps({"frames": len(seq), "bytes": len(result["container"]),
                      "per_frame": result["stats"]}, indent=2, default=float))


def cmd_decode(args):
    model = load_checkpoint(args.checkpoint)
    with open(args.infile, "rb") as f:
        container = f.read()
    seq, _ = SequenceCodec(model).decode_sequence(container)
    video_io.save_png_dir(seq, args.out)
    print("decoded %d frames to %s" % (len(seq), args.out))


def cmd_stats(args):
    with open(args.infile, "rb") as f:
        container = f.read()
    header, records = unpack_container(container)
    npix = header["width"] * header["height"]
    frames = []
    for i, record in enumerate(records):
        bits = sum(len(p) for p in record["payloads"]) * 8
        frames.append({
            "frame": i,
            "frame_type": "I" if record["type"] == FRAME_I else "P",
            "bits": bits,
            "bpp": bits / npix,
            "substream_bits": [len(p) * 8 for p in record["payloads"]],
        })
    print(json.dumps({"header": header, "frames": frames}, indent=2))


def cmd_metrics(args):
    ref = video_io.load_sequence(args.ref, "png_dir", n_frames=args.frames)
    dist = video_io.load_sequence(args.dist, "png_dir", n_frames=args.frames)
    out = []
    for i, (a, b) in enumerate(zip(ref.frames, dist.frames)):
        out.append({"frame": i, "psnr": metrics.psnr(a, b),
                    "ms_ssim": metrics.ms_ssim(a, b)})
    print(json.dumps(out, indent=2))


def cmd_bdrate(args):
    anchor = report.read_rd_csv(args.anchor, quality=args.quality)
    test = report.read_rd_csv(args.test, quality=args.quality)
    value = metrics.bd_rate(anchor, test, method=args.method)
    print(json.dumps({"bd_rate_percent": value}))


def cmd_report(args):
    model = load_checkpoint(args.checkpoint)
    with open(args.container, "rb") as f:
        container = f.read()
    header, _ = unpack_container(container)
    source = video_io.load_sequence(args.source, args.format,
                                    width=header["width"],
                                    height=header["height"],
                                    n_frames=header["n_frames"])
    rep = report.evaluate_sequence(source, container, model)
    with open(args.out, "w") as f:
        json.dump(rep, f, indent=2)
    print("wrote %s" % args.out)


def cmd_train(args):
    if args.resume:
        model = load_checkpoint(args.resume)
    else:
        cfg = CodecConfig.from_json(args.config) if args.config else CodecConfig()
        cfg.lam = args.lam
        model = VideoCodecModel(cfg)
    seq = video_io.load_sequence(args.input, args.format, width=args.width,
                                 height=args.height, n_frames=args.frames)
    clip = np.stack(seq.frames)
    tcfg = TrainConfig(stage=args.stage,
                       T=1 if args.stage == "single_frame" else args.T,
                       learning_rate=args.lr, steps=args.steps, lam=args.lam,
                       crop=args.crop, seed=args.seed)
    curve = train_stage(model, [clip], tcfg, log_path=args.log)
    save_checkpoint(model, args.out)
    print(json.dumps({"steps": len(curve),
                      "final_loss": curve[-1]["loss"] if curve else None}))


def cmd_init(args):
    import torch

    cfg = CodecConfig.from_json(args.config) if args.config else CodecConfig()
    if args.lam:
        cfg.lam = args.lam
    torch.manual_seed(cfg.seed)
    model = VideoCodecModel(cfg)
    save_checkpoint(model, args.out)
    print("wrote random-initialized checkpoint %s" % args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="lvcodec",
                                description="learned video codec toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_input(sp):
        sp.add_argument("--input", required=True)
        sp.add_argument("--format", choices=["png_dir", "yuv420"],
                        default="png_dir")
        sp.add_argument("--width", type=int)
        sp.add_argument("--height", type=int)
        sp.add_argument("--frames", type=int, required=True)

    sp = sub.add_parser("encode")
    add_input(sp)
    sp.add_argument("--gop", type=int)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("stats")
    sp.add_argument("--in", dest="infile", required=True)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("metrics")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--dist", required=True)
    sp.add_argument("--frames", type=int, required=True)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("bdrate")
    sp.add_argument("--anchor", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--quality", choices=["psnr", "msssim"], default="psnr")
    sp.add_argument("--method", choices=["pchip", "cubic"], default="pchip")
    sp.set_defaults(func=cmd_bdrate)

    sp = sub.add_parser("report")
    sp.add_argument("--container", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--format", choices=["png_dir", "yuv420"],
                    default="png_dir")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("train")
    add_input(sp)
    sp.add_argument("--stage", choices=["single_frame", "cascaded",
                                        "msssim_finetune"],
                    default="single_frame")
    sp.add_argument("--T", type=int, default=6)
    sp.add_argument("--steps", type=int, default=20000)
    sp.add_argument("--lr", type=float, default=5e-5)
    sp.add_argument("--lambda", dest="lam", type=float, default=2048.0)
    sp.add_argument("--crop", type=int, default=256)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config")
    sp.add_argument("--resume")
    sp.add_argument("--log")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("init")
    sp.add_argument("--config")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_init)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
