"""Command-line entry point: ``dispfuse {fuse,eval,toy-train,convert}``.

Every option can also come from a JSON file given with ``--config``; flags
given on the command line win.  The fully resolved configuration is printed
as one JSON line before any work starts, and that line can be fed back as a
config file to repeat the run.

Exit codes: 0 success, 1 I/O failure (missing or unreadable file), 2 invalid
arguments or inputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import duonet, imgcore, metrics, pyramid
from .exceptions import DispFuseError, FormatError
from .fuse import ExposureStack, fuse
from .quality import QualityConfig

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2


class ConfigError(ValueError):
    pass


class InputFileError(OSError):
    """An input or output file could not be read or written; carries the path."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path


# option name -> (type, default); None as default means required unless noted
OPTIONS = {
    "fuse": {
        "left": (list, None),
        "disp": (list, None),
        "out": (str, None),
        "wc": (float, 1.0),
        "we": (float, 1.0),
        "sigma": (float, 0.2),
        "median": (int, 3),
        "levels": (int, "auto"),
        "naive": (bool, False),
        "dump_pyramids": (str, ""),
    },
    "eval": {
        "pred": (str, None),
        "gt": (str, None),
        "out": (str, None),
        "baseline": (float, "none"),
        "focal": (float, "none"),
        "log_base": (float, 10.0),
    },
    "toy-train": {
        "seed": (int, 0),
        "epochs": (int, 30),
        "lr": (float, "auto"),
        "optimizer": (str, "adam"),
        "batch_size": (int, 8),
        "samples": (int, 200),
        "size": (int, 32),
        "shift": (int, 4),
        "out": (str, None),
        "curve": (str, None),
    },
    "convert": {
        "disp": (str, None),
        "baseline": (float, None),
        "focal": (float, None),
        "out": (str, None),
    },
}

# defaults that mean "decide at run time" and are passed through unconverted
_SENTINELS = ("auto", "none")


def _coerce(name, kind, value):
    if value in _SENTINELS:
        return value
    try:
        if kind is list:
            if isinstance(value, str) or not isinstance(value, (list, tuple)):
                raise TypeError
            return [str(v) for v in value]
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if not math.isfinite(out):
                raise TypeError
            return out
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"option {name!r} expects {kind.__name__}, got {value!r}") from None


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputFileError(path, exc.strerror or str(exc)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFileError(path, f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(command: str, flags: dict, file_values: dict | None = None) -> dict:
    """Merge defaults, config-file values and command-line flags, then validate types."""
    spec = OPTIONS[command]
    file_values = dict(file_values or {})
    file_cmd = file_values.pop("command", command)
    if file_cmd != command:
        raise ConfigError(f"config file is for command {file_cmd!r}, not {command!r}")
    unknown = sorted(set(file_values) - set(spec))
    if unknown:
        raise ConfigError(f"unknown option(s) for {command}: {', '.join(unknown)}")
    cfg = {}
    for name, (kind, default) in spec.items():
        value = flags.get(name)
        if value is None:
            value = file_values.get(name, default)
        if value is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
        cfg[name] = _coerce(name, kind, value)
    return cfg


def _echo(command, cfg):
    print("config: " + json.dumps({"command": command, **cfg}, sort_keys=True), flush=True)


def _require_file(path):
    if not Path(path).is_file():
        raise InputFileError(path, "no such file")


def _read(reader, path):
    _require_file(path)
    try:
        return reader(path)
    except OSError as exc:
        raise InputFileError(path, exc.strerror or str(exc)) from None


def _write(writer, path, *args, **kw):
    try:
        imgcore.ensure_parent(path)
        writer(path, *args, **kw)
    except OSError as exc:
        raise InputFileError(path, exc.strerror or str(exc)) from None


def _sibling(out, suffix):
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


# ----------------------------------------------------------------- commands


def cmd_fuse(cfg: dict) -> int:
    if len(cfg["left"]) != len(cfg["disp"]):
        raise ConfigError(
            f"expected equal counts of images ({len(cfg['left'])}) and disparities ({len(cfg['disp'])})"
        )
    qcfg = QualityConfig(w_c=cfg["wc"], w_e=cfg["we"], sigma=cfg["sigma"], median_window=cfg["median"])
    images = [_read(imgcore.read_image, p) for p in cfg["left"]]
    disps = [_read(imgcore.read_disparity, p) for p in cfg["disp"]]
    labels = tuple(Path(p).stem for p in cfg["left"])
    if len(set(labels)) != len(labels):
        labels = ()
    stack = ExposureStack(images, disps, labels)
    levels = None if cfg["levels"] == "auto" else cfg["levels"]
    res = fuse(stack, qcfg, levels=levels, naive=cfg["naive"])

    out = cfg["out"]
    _write(imgcore.write_pfm, out, res.disparity)
    written = [out]
    prev = _sibling(out, "_preview.png")
    _write(imgcore.write_image, prev, imgcore.preview(res.disparity.data, res.disparity.valid_mask))
    written.append(prev)
    for k, w in enumerate(res.weights.normalized):
        p = _sibling(out, f"_weight{k}.png")
        _write(imgcore.write_image, p, np.clip(w, 0.0, 1.0))
        written.append(p)
    if cfg["dump_pyramids"] and not cfg["naive"]:
        d = cfg["dump_pyramids"]
        try:
            for k, (dp, wp) in enumerate(zip(res.disparity_pyramids, res.weight_pyramids)):
                written += pyramid.dump_pyramid(dp, d, f"disp{k}_laplacian")
                written += pyramid.dump_pyramid(wp, d, f"weight{k}_gaussian")
            written += pyramid.dump_pyramid(res.fused_pyramid, d, "fused_laplacian")
        except OSError as exc:
            raise InputFileError(d, exc.strerror or str(exc)) from None
    lo, hi = res.value_range
    mode = "naive" if cfg["naive"] else f"{res.levels}-level pyramid"
    print(f"fused {stack.n} maps ({mode}); input disparity range [{lo:.4g}, {hi:.4g}]; "
          f"{int(res.disparity.valid_mask.sum())}/{res.disparity.valid_mask.size} pixels valid")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _calib(cfg):
    b, f = cfg["baseline"], cfg["focal"]
    if (b == "none") != (f == "none"):
        raise ConfigError("give both --baseline and --focal, or neither")
    return None if b == "none" else metrics.CameraCalib(b, f)


def cmd_eval(cfg: dict) -> int:
    calib = _calib(cfg)
    if not cfg["log_base"] > 1:
        raise ConfigError(f"log base must be > 1, got {cfg['log_base']}")
    pred = _read(imgcore.read_disparity, cfg["pred"])
    gt = _read(imgcore.read_disparity, cfg["gt"])
    report = metrics.evaluate(pred, gt, calib, log_base=cfg["log_base"])
    try:
        imgcore.ensure_parent(cfg["out"])
        Path(cfg["out"]).write_text(report.to_csv())
    except OSError as exc:
        raise InputFileError(cfg["out"], exc.strerror or str(exc)) from None
    print(report.table())
    print(f"wrote {cfg['out']}")
    return EXIT_OK


def cmd_toy_train(cfg: dict) -> int:
    for key in ("epochs", "samples", "batch_size", "size", "shift"):
        if cfg[key] < (1 if key not in ("epochs", "shift") else 0):
            raise ConfigError(f"{key} out of range: {cfg[key]}")
    lr = None if cfg["lr"] == "auto" else cfg["lr"]
    data = duonet.make_dataset(cfg["samples"], cfg["seed"], (cfg["size"], cfg["size"]), cfg["shift"])
    net = duonet.DualNet.init(cfg["seed"])

    def log(epoch, loss):
        print(f"epoch {epoch + 1:3d}  loss {loss:.6f}", flush=True)

    res = duonet.train_toy(net, data, cfg["epochs"], lr, cfg["batch_size"], cfg["seed"],
                           cfg["optimizer"], log=log)
    shifted, static = duonet.region_means(res.net, data)
    print(f"initial loss {res.initial_loss:.6f}; mean prediction shifted {shifted:.4f}, static {static:.4f}")
    _write(duonet.save_net, cfg["out"], res.net, cfg)
    _write(duonet.write_loss_csv, cfg["curve"], res.losses, res.initial_loss)
    print(f"wrote {cfg['out']}\nwrote {cfg['curve']}")
    return EXIT_OK


def cmd_convert(cfg: dict) -> int:
    calib = metrics.CameraCalib(cfg["baseline"], cfg["focal"])
    disp = _read(imgcore.read_disparity, cfg["disp"])
    depth = metrics.depth_from_disparity(disp, calib)
    _write(imgcore.write_pfm, cfg["out"], depth)
    n_bad = int((~depth.valid_mask).sum())
    print(f"wrote {cfg['out']} ({n_bad} invalid pixels)")
    return EXIT_OK


COMMANDS = {"fuse": cmd_fuse, "eval": cmd_eval, "toy-train": cmd_toy_train, "convert": cmd_convert}


# ----------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dispfuse", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def new(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with option values (flags override it)")
        return p

    p = new("fuse", "fuse the disparity maps of an exposure bracket")
    p.add_argument("--left", nargs="+", help="left-view exposures (PNG/PGM/PPM/PFM)")
    p.add_argument("--disp", nargs="+", help="disparity map per exposure, same order")
    p.add_argument("--out", help="fused disparity PFM")
    p.add_argument("--wc", type=float, help="contrast exponent (default 1)")
    p.add_argument("--we", type=float, help="well-exposedness exponent (default 1)")
    p.add_argument("--sigma", type=float, help="well-exposedness spread (default 0.2)")
    p.add_argument("--median", type=int, help="median window on the contrast map (default 3)")
    p.add_argument("--levels", type=int, help="pyramid levels (default: max levels - 2)")
    p.add_argument("--naive", action="store_const", const=True, help="single-scale weighted average")
    p.add_argument("--dump-pyramids", metavar="DIR", help="write every pyramid level as PFM")

    p = new("eval", "compare a predicted disparity map with ground truth")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--baseline", type=float, help="baseline (depth unit); with --focal evaluates depth")
    p.add_argument("--focal", type=float, help="focal length in pixels")
    p.add_argument("--log-base", type=float, help="base of the log error (default 10)")
    p.add_argument("--out", help="CSV report")

    p = new("toy-train", "train the dual-encoder net on random-dot stereograms")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="learning rate (default depends on the optimizer)")
    p.add_argument("--optimizer", choices=sorted(duonet.OPTIMIZERS))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--samples", type=int, help="number of stereograms (default 200)")
    p.add_argument("--size", type=int, help="side of each stereogram (default 32)")
    p.add_argument("--shift", type=int, help="disparity of the displaced region (default 4)")
    p.add_argument("--out", help="network parameters")
    p.add_argument("--curve", help="loss curve CSV")

    p = new("convert", "disparity PFM to depth PFM")
    p.add_argument("--disp")
    p.add_argument("--baseline", type=float)
    p.add_argument("--focal", type=float)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = load_config_file(args.config) if args.config else None
        cfg = resolve_config(args.command, flags, file_values)
        _echo(args.command, cfg)
        return COMMANDS[args.command](cfg)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DispFuseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
