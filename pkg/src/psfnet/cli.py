"""Command-line interface.

Exit codes: 0 success, 1 usage or file-system error, 2 numerical failure
(diverged training), 3 contract mismatch (pitch, dimensions, file format).
Every output file gets a ``<output>.manifest`` next to it.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import shlex
import sys
import time
from pathlib import Path

from . import __version__
from .exceptions import (
    BadMagicError,
    BadVersionError,
    DimensionMismatchError,
    NonFiniteLossError,
    PitchMismatchError,
    TruncatedFileError,
)
from .grid import FieldPoint, PsfDataset
from .io import read_dataset, read_pgm, read_pgm_raw, write_dataset, write_pgm
from .metrics import EvalSummary, evaluate
from .network import TrainConfig, forward, load_model, save_model, train
from .render import (
    DefocusMap,
    FieldMapping,
    Image,
    checkerboard,
    convolve_spatially_variant,
    linear_depth_gradient,
)
from .sweep import DEFAULT_HIDDEN_SIZES, sweep
from .synth import PRESETS, SamplingGrid, SynthLensSpec, generate_dataset

log = logging.getLogger("psfnet")

EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_CONTRACT = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_manifest(out: Path, args: argparse.Namespace, inputs, started: float) -> None:
    lines = [f"command={args.command}", f"argv={shlex.join(args.argv)}",
             f"tool_version={__version__}"]
    lines.append(f"seed={getattr(args, 'seed', '')}")
    for key, value in sorted(vars(args).items()):
        if key in ("command", "func", "started", "argv"):
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"flag.{key}={'' if value is None else value}")
    for path in inputs:
        lines.append(f"input.{path}={_sha256(path)}")
    lines.append(f"duration_s={time.monotonic() - started:.3f}")
    _write_text(Path(f"{out}.manifest"), "\n".join(lines) + "\n")


def _load_datasets(paths) -> PsfDataset:
    data = read_dataset(paths[0])
    for p in paths[1:]:
        data = data.concat(read_dataset(p))
    return data


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


# -- commands ------------------------------------------------------------------


def cmd_synth_dataset(args) -> int:
    lens = SynthLensSpec.load(args.lens) if args.lens else SynthLensSpec()
    if args.seed is not None:
        lens = SynthLensSpec(**{**vars(lens), "seed": args.seed})
    explicit = (args.dz, args.r, args.phi)
    if args.preset and any(v is not None for v in explicit):
        raise UsageError("--preset cannot be combined with --dz/--r/--phi")
    if args.preset:
        grid = PRESETS[args.preset]
    elif all(v is not None for v in explicit):
        grid = SamplingGrid(args.dz, args.r, args.phi)
    else:
        raise UsageError("give either --preset or all of --dz, --r and --phi")
    data = generate_dataset(lens, grid, args.grid_size, args.grid_size, args.pitch_um)
    write_dataset(args.out, data)
    write_manifest(args.out, args, [args.lens] if args.lens else [], args.started)
    print(f"wrote {len(data)} samples ({args.grid_size}x{args.grid_size} @ {args.pitch_um} µm) "
          f"to {args.out}")
    return 0


def cmd_train(args) -> int:
    data = _load_datasets(args.datasets)
    cfg = TrainConfig(hidden_size=args.hidden, max_epochs=args.epochs, learning_rate=args.lr,
                      momentum=args.momentum, seed=args.seed, optimizer=args.optimizer)
    model, report = train(data, cfg)
    save_model(args.out, model)
    write_manifest(args.out, args, args.datasets, args.started)
    history = _sibling(args.out, ".history.csv")
    _write_text(history, report.history_csv())
    write_manifest(history, args, args.datasets, args.started)
    print(f"epochs_run={report.epochs_run} best_epoch={report.best_epoch}")
    print(f"final_train_perf={report.final_train_perf:.12g}")
    print(f"final_val_perf={report.final_val_perf:.12g}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    grid = forward(model, FieldPoint(args.dz, args.r, args.phi))
    peak = grid.values.max()
    write_pgm(args.out, grid.values / peak if peak > 0 else grid.values, maxval=65535)
    rows = [",".join(f"{v:.17g}" for v in row) for row in grid.values]
    raw = _sibling(args.out, ".csv")
    _write_text(raw, "\n".join(rows) + "\n")
    write_manifest(args.out, args, [args.model], args.started)
    write_manifest(raw, args, [args.model], args.started)
    print(f"wrote {grid.width}x{grid.height} kernel to {args.out} and {raw}")
    return 0


def _mapping(args, width: int, height: int) -> FieldMapping:
    cx = (width - 1) / 2.0 if args.center_x is None else args.center_x
    cy = (height - 1) / 2.0 if args.center_y is None else args.center_y
    return FieldMapping(cx, cy, args.pitch_um)


def _render(args, model, image: Image, dzmap: DefocusMap) -> int:
    blurred, clamped = convolve_spatially_variant(
        image, model, _mapping(args, image.width, image.height), dzmap, args.tile_px
    )
    write_pgm(args.out, blurred.values, maxval=65535)
    if clamped:
        print(f"warning: {clamped} defocus values clamped to the trained range", file=sys.stderr)
    print(f"wrote {blurred.width}x{blurred.height} image to {args.out}")
    return 0


def cmd_apply(args) -> int:
    model = load_model(args.model)
    image = Image(read_pgm(args.image), args.pitch_um)
    inputs = [args.model, args.image]
    if (args.dz is None) == (args.dzmap is None):
        raise UsageError("give exactly one of --dz or --dzmap")
    if args.dzmap:
        raw, _ = read_pgm_raw(args.dzmap)
        dzmap = DefocusMap.from_raw(raw, args.dzmap_offset, args.dzmap_scale)
        inputs.append(args.dzmap)
    else:
        dzmap = DefocusMap.constant(image.width, image.height, args.dz)
    code = _render(args, model, image, dzmap)
    write_manifest(args.out, args, inputs, args.started)
    return code


def cmd_depth_apply(args) -> int:
    model = load_model(args.model)
    image = checkerboard(args.width, args.height, args.cell_px, 0.0, 1.0, args.pitch_um)
    dzmap = linear_depth_gradient(args.width, args.height, args.dz_left, args.dz_right)
    code = _render(args, model, image, dzmap)
    write_manifest(args.out, args, [args.model], args.started)
    return code


def cmd_sweep(args) -> int:
    if args.restarts < 2:
        raise UsageError("--restarts must be at least 2")
    data = _load_datasets(args.datasets)
    cfg = TrainConfig(max_epochs=args.epochs, learning_rate=args.lr, momentum=args.momentum,
                      seed=args.seed, optimizer=args.optimizer)
    report = sweep(data, args.hidden_list, args.restarts, cfg)
    _write_text(args.out, report.to_csv())
    write_manifest(args.out, args, args.datasets, args.started)
    for row in report.rows:
        if row.failures:
            print(f"H={row.hidden}: {len(row.failures)} restart(s) failed", file=sys.stderr)
    print(report.to_csv(), end="")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    data = _load_datasets(args.datasets)
    summary = evaluate(model, data)
    text = f"{EvalSummary.CSV_HEADER}\n{summary.csv_row()}\n"
    if args.out:
        _write_text(args.out, text)
        write_manifest(args.out, args, [args.model, *args.datasets], args.started)
    print(text, end="")
    return 0


# -- parser --------------------------------------------------------------------


def _training_flags(p, hidden=True):
    if hidden:
        p.add_argument("--hidden", type=int, default=80, help="hidden neurons (default 80)")
    p.add_argument("--epochs", type=int, default=3000, help="maximum epochs / iterations")
    p.add_argument("--lr", type=float, default=0.1, help="learning rate (gradient descent)")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--optimizer", choices=("projected", "momentum", "adam"), default="projected")
    p.add_argument("--seed", type=int, default=0)


def _render_flags(p):
    p.add_argument("--pitch-um", type=float, default=6.5, help="image pixel pitch in µm")
    p.add_argument("--center-x", type=float, help="optical axis column (default: image centre)")
    p.add_argument("--center-y", type=float, help="optical axis row (default: image centre)")
    p.add_argument("--tile-px", type=int, default=16)
    p.add_argument("--out", type=Path, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psfnet", description="Train and apply neural PSF models.")
    parser.add_argument("--version", action="version", version=f"psfnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-dataset", help="render a synthetic PSF dataset (.psfd)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--dz", type=_floats, help="defocus values in µm, comma-separated (write --dz=-50,0 for a leading minus)")
    p.add_argument("--r", type=_floats, help="image heights in mm, comma-separated")
    p.add_argument("--phi", type=_floats, help="azimuths in degrees, comma-separated")
    p.add_argument("--grid-size", type=int, default=13)
    p.add_argument("--pitch-um", type=float, default=6.5)
    p.add_argument("--seed", type=int, help="lens noise seed")
    p.add_argument("--lens", type=Path, help="lens parameters as key=value lines")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth_dataset)

    p = sub.add_parser("train", help="train a PSF network on one or more datasets")
    p.add_argument("datasets", nargs="+", type=Path)
    _training_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write the predicted PSF at one field point")
    p.add_argument("model", type=Path)
    p.add_argument("--dz", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("apply", help="blur a PGM image with the spatially-variant PSF")
    p.add_argument("model", type=Path)
    p.add_argument("image", type=Path)
    p.add_argument("--dz", type=float, help="constant defocus in µm")
    p.add_argument("--dzmap", type=Path, help="16-bit PGM defocus map")
    p.add_argument("--dzmap-offset", type=float, default=0.0)
    p.add_argument("--dzmap-scale", type=float, default=1.0)
    _render_flags(p)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("depth-apply", help="blur a checkerboard under a left-right depth gradient")
    p.add_argument("model", type=Path)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--cell-px", type=int, default=16)
    p.add_argument("--dz-left", type=float, default=50.0)
    p.add_argument("--dz-right", type=float, default=-50.0)
    _render_flags(p)
    p.set_defaults(func=cmd_depth_apply)

    p = sub.add_parser("sweep", help="hidden-size sweep with restarts")
    p.add_argument("datasets", nargs="+", type=Path)
    p.add_argument("--hidden-list", type=_ints, default=list(DEFAULT_HIDDEN_SIZES))
    p.add_argument("--restarts", type=int, default=10)
    _training_flags(p, hidden=False)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score a model against datasets")
    p.add_argument("model", type=Path)
    p.add_argument("datasets", nargs="+", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.started = time.monotonic()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"psfnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"psfnet: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PitchMismatchError as exc:
        print(f"psfnet: pitch mismatch: {exc}. Retrain the model for this sensor pitch "
              "or pass the matching --pitch-um.", file=sys.stderr)
        return EXIT_CONTRACT
    except (DimensionMismatchError, BadMagicError, BadVersionError, TruncatedFileError) as exc:
        print(f"psfnet: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"psfnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"psfnet: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
