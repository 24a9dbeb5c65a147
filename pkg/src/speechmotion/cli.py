"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format error. FF_LOG selects the
log level (quiet|info|debug). All randomness flows from --seed flags or the
seed configuration key.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import synthetic
from .config import build_configs, with_dataset_shape
from .decoder import autoregress
from .encoder import AudioInput
from .errors import SpeechMotionError, UsageError
from .formats import (
    checkpoint_summary,
    load_checkpoint,
    load_matrix,
    matrix_header,
    parse_config_lines,
    read_lip_indices,
    read_wav,
    save_checkpoint,
    save_matrix,
    atomic_write_text,
)
from .params import init_params
from .training import export_attention, lip_error, train

log = logging.getLogger("speechmotion")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are 1
        raise UsageError(message)


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("FF_LOG", "info").lower()
    if name not in level:
        raise UsageError(f"FF_LOG must be quiet|info|debug, got {name!r}")
    logging.basicConfig(level=level[name], format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> _Parser:
    parser = _Parser(prog="speechmotion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a deterministic synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--identities", type=int, default=2)
    p.add_argument("--sequences", type=int, default=8)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--vertices", type=int, default=10)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--loss-csv", help="loss history CSV (default: <out>.loss.csv)")

    p = sub.add_parser("infer", help="synthesize motion from audio")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--audio", required=True, help=".f32mat features or 16-bit mono .wav")
    p.add_argument("--identity", type=int, required=True)
    p.add_argument("--frames", type=int, help="motion frames (default: from audio length)")
    p.add_argument("--out", required=True, help="motion matrix output path")

    p = sub.add_parser("eval-lip", help="print the lip error between two motion files")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("lips", help="newline-separated 0-based lip vertex indices")

    p = sub.add_parser("export-attn", help="run one inference and dump attention CSVs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--identity", type=int, required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("inspect", help="print matrix/checkpoint header information")
    p.add_argument("path")
    return parser


def _load_audio(path: str, cfg) -> AudioInput:
    path = Path(path)
    if path.suffix.lower() == ".wav":
        samples, rate = read_wav(path)
        return AudioInput.from_waveform(samples, rate)
    return AudioInput.from_features(load_matrix(path), cfg.feature_rate)


def _cmd_gen_synthetic(args) -> int:
    written = synthetic.gen_synthetic(
        args.out, args.identities, args.sequences, args.frames,
        args.vertices, args.feature_dim, args.seed,
    )
    log.info("wrote %d files to %s", len(written), args.out)
    return EXIT_OK


def _cmd_train(args) -> int:
    parsed = build_configs(parse_config_lines(Path(args.config).read_text()))
    for notice in parsed.notices:
        log.info("%s", notice)
    dataset, meta = synthetic.load_dataset(args.data)
    cfg = with_dataset_shape(
        parsed,
        vertices=meta["vertices"],
        identities=meta["identities"],
        feature_dim=meta["feature_dim"],
        feature_rate=meta["feature_rate"],
        motion_rate=meta["motion_rate"],
    )
    tcfg = parsed.train
    params = init_params(cfg, tcfg.seed)
    params, history = train(
        dataset, params, cfg, tcfg.epochs, tcfg.seed,
        lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2, eps=tcfg.eps,
        grad_clip=tcfg.grad_clip, detach_rollout=tcfg.detach_rollout,
        freeze_extractor=tcfg.freeze_extractor,
    )
    save_checkpoint(args.out, params, cfg)
    loss_csv = args.loss_csv or f"{args.out}.loss.csv"
    lines = ["step,epoch,sample,loss,rmse"]
    lines += [
        f"{h.step},{h.epoch},{h.sample},{h.loss:.17g},{h.rmse:.17g}" for h in history
    ]
    atomic_write_text(loss_csv, "\n".join(lines) + "\n")
    if history:
        log.info(
            "trained %d steps; final loss %.6g, rollout rmse %.6g",
            len(history), history[-1].loss, history[-1].rmse,
        )
    log.info("checkpoint written to %s", args.out)
    return EXIT_OK


def _cmd_infer(args) -> int:
    params, cfg = load_checkpoint(args.ckpt)
    audio = _load_audio(args.audio, cfg)
    motion = autoregress(audio, args.identity, args.frames, params, cfg)
    save_matrix(args.out, motion)
    log.info("wrote %dx%d motion to %s", motion.shape[0], motion.shape[1], args.out)
    return EXIT_OK


def _cmd_eval_lip(args) -> int:
    pred = load_matrix(args.pred)
    truth = load_matrix(args.truth)
    lips = read_lip_indices(args.lips)
    print(format(lip_error(pred, truth, lips), ".12g"))
    return EXIT_OK


def _cmd_export_attn(args) -> int:
    params, cfg = load_checkpoint(args.ckpt)
    audio = _load_audio(args.audio, cfg)
    records = []
    autoregress(audio, args.identity, args.frames, params, cfg, capture=records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_module: dict[str, list] = {}
    for rec in records:
        by_module.setdefault(rec.module, []).append(rec)
    for module, recs in by_module.items():
        path = out_dir / f"{module.replace('.', '_')}.csv"
        export_attention(recs, path)
        log.info("wrote %s (%d record(s))", path, len(recs))
    return EXIT_OK


def _cmd_inspect(args) -> int:
    path = Path(args.path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"F32M":
        version, rows, cols = matrix_header(path)
        print(f"matrix file version {version}: {rows}x{cols} float32")
    elif magic == b"FFCK":
        for line in checkpoint_summary(path):
            print(line)
    else:
        print(f"{path}: unrecognized magic {magic!r}")
        return EXIT_DATA
    return EXIT_OK


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval-lip": _cmd_eval_lip,
    "export-attn": _cmd_export_attn,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    try:
        _setup_logging()
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpeechMotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
