"""Command-line interface: simulate, preprocess, train, eval, detect, bench.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are long flag names (``train-ratio`` or ``train_ratio``). Lines starting
with ``#`` are comments. Values given on the command line win over the file,
which wins over built-in defaults.

Exit status is 0 on success, 2 on a usage error and 1 when the pipeline
fails (bad input file, corrupt checkpoint, and so on).
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import deque
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import TextIO

import numpy as np
from threadpoolctl import threadpool_limits

from .caae import CaaeModel, TrainConfig, load_checkpoint, predict, save_checkpoint, train
from .can_core import CanMessage, encode_ids, iter_records, read_log, write_log
from .errors import CaaeIdsError, ConfigError
from .evaluation import measure_latency, run_known_protocol, run_unknown_protocol
from .framing import (
    ATTACK_KINDS,
    FRAME_SIZE,
    DataBundle,
    Frame,
    SplitConfig,
    build_frames,
    group_by_class,
    leave_one_out,
    load_frames,
    save_frames,
    split_dataset,
)
from .traffic_sim import CAPTURE_PRESETS, default_profile, gen_normal, simulate_capture

log = logging.getLogger("caae_ids")

CONFIG_HELP = """\
config file: flat "key = value" lines, keys are long option names
(dashes or underscores), "#" starts a comment. Example:

    train-ratio = 0.1
    label-ratio = 0.1
    epochs = 20
"""


class UsageError(Exception):
    """Bad flags or config keys; maps to exit status 2."""


# --- config file ---------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in config.items():
        action = actions.get(key)
        if action is None or not action.option_strings:
            raise UsageError(f"config key {key!r} is not an option of this command")
        if action.nargs == 0:
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: bad value {value!r}") from exc
        else:
            defaults[key] = value
    parser.set_defaults(**defaults)


# --- helpers -------------------------------------------------------------

def _infer_kind(path: str | Path) -> str:
    stem = Path(path).stem.lower()
    for kind in ("dos", "fuzzy", "gear", "rpm", "spoof_a", "spoof_b"):
        if kind in stem:
            return kind
    return "unknown"


def _load_corpus(paths: Sequence[str]) -> dict[str, list[Frame]]:
    frames: list[Frame] = []
    for p in paths:
        frames.extend(load_frames(p))
    if not frames:
        raise ConfigError("no frames in the given caches")
    return group_by_class(frames)


def _bundle(args) -> DataBundle:
    config = SplitConfig(train_ratio=args.train_ratio, label_ratio=args.label_ratio, seed=args.seed)
    bundle = split_dataset(_load_corpus(args.frames), config)
    if args.hold_out:
        bundle = leave_one_out(bundle, args.hold_out)
    return bundle


def _fmt_ts(ts: float) -> str:
    return f"{ts:.6f}"


# --- streaming detection -------------------------------------------------

def detect_stream(
    model: CaaeModel,
    messages: Iterable[CanMessage],
    out: TextIO,
    stride: int = FRAME_SIZE,
) -> tuple[int, int]:
    """Classify a message stream window by window as it arrives.

    Writes one ``window_index,first_ts,last_ts,verdict,score`` line per
    complete window, with windows starting every ``stride`` messages as in
    :func:`build_frames`. Messages at the end that no complete window covered
    are reported on a final line with the verdict ``partial`` and an empty
    score.

    Returns:
        (complete windows, partial windows) written.
    """
    if stride < 1:
        raise ConfigError("stride must be a positive integer")
    stream = iter(messages)
    window: deque[CanMessage] = deque()
    uncovered = 0
    index = 0
    for msg in stream:
        window.append(msg)
        uncovered += 1
        if len(window) < FRAME_SIZE:
            continue
        ids = np.fromiter((m.can_id for m in window), dtype=np.int64, count=FRAME_SIZE)
        classes, scores = predict(model, encode_ids(ids)[None])
        verdict = "Abnormal" if classes[0] else "Normal"
        out.write(f"{index},{_fmt_ts(window[0].timestamp)},{_fmt_ts(window[-1].timestamp)},"
                  f"{verdict},{scores[0]:.6f}\n")
        index += 1
        uncovered = 0
        for _ in range(min(stride, FRAME_SIZE)):
            window.popleft()
        # strides longer than a window skip the gap messages entirely
        for _ in range(stride - FRAME_SIZE):
            if next(stream, None) is None:
                break
    if uncovered:
        tail = list(window)[-uncovered:]
        out.write(f"{index},{_fmt_ts(tail[0].timestamp)},{_fmt_ts(tail[-1].timestamp)},partial,\n")
        return index, 1
    return index, 0


# --- subcommands ---------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.attack == "none":
        messages = gen_normal(default_profile(args.duration, args.seed))
    else:
        messages = simulate_capture(args.attack, duration=args.duration, seed=args.seed)
    if args.messages is not None:
        messages = messages[: args.messages]
    n = write_log(messages, args.output)
    injected = sum(m.injected for m in messages)
    print(f"wrote {n} messages ({injected} injected) to {args.output}")
    return 0


def cmd_preprocess(args) -> int:
    errors: list = []
    messages = read_log(args.input, strict=not args.lenient, errors=errors)
    kind = args.kind or _infer_kind(args.input)
    frames = build_frames(messages, stride=args.stride, attack_kind=kind, source=Path(args.input).stem)
    save_frames(frames, args.output)
    abnormal = sum(f.label for f in frames)
    print(f"wrote {len(frames)} frames ({abnormal} abnormal, kind {kind}) to {args.output}"
          + (f"; skipped {len(errors)} malformed lines" if errors else ""))
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_reconstruction=args.lr,
        lr_regularization=args.lr,
        lr_supervised=args.lr,
        decay_epoch=args.decay_epoch,
        critic_output=args.critic_output,
        seed=args.seed,
        validate=not args.no_validate,
    )


def cmd_train(args) -> int:
    bundle = _bundle(args)
    print(f"labeled {len(bundle.labeled)}, unlabeled {len(bundle.unlabeled)}, "
          f"val {len(bundle.val)}, test {len(bundle.test)}")
    model, report = train(bundle, _train_config(args))
    save_checkpoint(model, args.output)
    if args.encoder_output:
        save_checkpoint(model, args.encoder_output, encoder_only=True)
    if args.report:
        lines = ["epoch,l_r,l_cat,l_gaus,l_gen,l_sup,val_f1,seconds"]
        for r in report.records:
            f1 = "" if r.val is None or r.val.f1 is None else f"{r.val.f1:.6f}"
            lines.append(f"{r.epoch}," + ",".join(f"{v:.6f}" for v in r.losses())
                         + f",{f1},{r.seconds:.3f}")
        Path(args.report).write_text("\n".join(lines) + "\n")
    last = report.last()
    print(f"trained {last.epoch} epochs in {report.wall_clock:.1f}s; final L_sup {last.l_sup:.4f}")
    if last.val is not None:
        print(last.val.as_table())
    print(f"checkpoint written to {args.output}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    bundle = _bundle(args)
    if args.hold_out:
        reports = run_unknown_protocol(model, bundle)
    else:
        reports = (run_known_protocol(model, bundle),)
    for rep in reports:
        if args.format in ("table", "both"):
            print(rep.as_table())
            if rep.protocol.get("normal_shared"):
                print("note: the normal test frames are shared by the known and unknown reports")
            print()
        if args.format in ("line", "both"):
            print(rep.as_line())
    return 0


def cmd_detect(args) -> int:
    model = load_checkpoint(args.checkpoint)
    source = sys.stdin if args.input == "-" else None
    try:
        fh = source or open(args.input)
    except OSError as exc:
        raise CaaeIdsError(f"cannot read {args.input}: {exc}") from exc
    errors: list = []
    try:
        records = iter_records(fh, strict=args.strict, errors=errors)
        out = open(args.output, "w") if args.output else sys.stdout
        try:
            windows, partial = detect_stream(model, records, out, stride=args.stride)
        finally:
            if out is not sys.stdout:
                out.close()
    finally:
        if fh is not sys.stdin:
            fh.close()
    print(f"{windows} windows, {partial} partial, {len(errors)} malformed lines skipped",
          file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model = CaaeModel(seed=args.seed, encoder_only=True)
    if args.frames:
        frames = [f for p in args.frames for f in load_frames(p)]
    else:
        frames = build_frames(simulate_capture("dos", duration=10.0, seed=args.seed), attack_kind="dos")
    stats = measure_latency(model, frames, repetitions=args.repetitions, warmup=args.warmup)
    print(f"median {stats.median_ms:.4f} ms/frame, p95 {stats.p95_ms:.4f} ms/frame, "
          f"mean {stats.mean_ms:.4f} ms/frame over {stats.repetitions} runs "
          f"({stats.warmup} warm-up discarded)")
    print(stats.as_line())
    return 0


# --- parser --------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS threads; 1 gives bitwise-reproducible output (default 1)")
    common.add_argument("--config", help="flat key = value defaults file")
    common.add_argument("-v", "--verbose", action="count", default=0, help="log progress")
    return common


def _split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", nargs="+", required=True, help="frame cache files")
    p.add_argument("--train-ratio", type=float, default=0.1, help="share of attack frames for training")
    p.add_argument("--label-ratio", type=float, default=0.1, help="share of training frames labeled")
    p.add_argument("--hold-out", choices=[k for k in ATTACK_KINDS if k != "normal"],
                   help="drop this kind's labels (unknown-attack protocol)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="caae-ids",
        description="Semi-supervised CAN-bus intrusion detection.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                              epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)

    p = add("simulate", "generate a synthetic CAN log in HCRL CSV format")
    p.add_argument("--profile", choices=["default"], default="default", help="normal traffic profile")
    p.add_argument("--attack", choices=["none", *CAPTURE_PRESETS], default="none")
    p.add_argument("--duration", type=float, default=60.0, help="seconds of traffic (default 60)")
    p.add_argument("--messages", type=int, help="keep only the first N messages")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = add("preprocess", "turn a CAN log into a frame cache")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stride", type=int, default=FRAME_SIZE, help="window step (default 29)")
    p.add_argument("--kind", choices=list(ATTACK_KINDS[1:]),
                   help="attack kind of abnormal frames (default: guessed from the file name)")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
    p.set_defaults(func=cmd_preprocess)

    p = add("train", "train a model on frame caches")
    _split_args(p)
    p.add_argument("-o", "--output", required=True, help="checkpoint path")
    p.add_argument("--encoder-output", help="also write an encoder-only checkpoint")
    p.add_argument("--report", help="write per-epoch losses as CSV")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4, help="learning rate of every phase")
    p.add_argument("--decay-epoch", type=int, default=50, help="decay learning rates after this epoch")
    p.add_argument("--critic-output", choices=["sigmoid", "linear"], default="sigmoid")
    p.add_argument("--no-validate", action="store_true", help="skip per-epoch validation")
    p.set_defaults(func=cmd_train)

    p = add("eval", "evaluate a checkpoint on the test split of frame caches")
    _split_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--format", choices=["table", "line", "both"], default="both")
    p.set_defaults(func=cmd_eval)

    p = add("detect", "classify a CAN log stream window by window")
    p.add_argument("input", help="HCRL CSV log, or - for stdin")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stride", type=int, default=FRAME_SIZE, help="window step (default 29)")
    p.add_argument("--strict", action="store_true", help="fail on malformed lines")
    p.add_argument("-o", "--output", help="verdict file (default stdout)")
    p.set_defaults(func=cmd_detect)

    p = add("bench", "measure single-frame inference latency")
    p.add_argument("--checkpoint", help="checkpoint (default: freshly initialized encoder)")
    p.add_argument("--frames", nargs="+", help="frame caches (default: a simulated DoS capture)")
    p.add_argument("--repetitions", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=100)
    p.set_defaults(func=cmd_bench)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse ``argv`` honoring ``--config`` defaults; usage errors exit with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        try:
            _apply_config(subparser, read_config(args.config))
        except UsageError as exc:
            subparser.error(str(exc))
        args = parser.parse_args(argv)
    return args


def run(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit status."""
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(args.threads):
            return args.func(args)
    except (CaaeIdsError, OSError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
