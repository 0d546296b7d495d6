"""Command-line interface.

One job per process: read containers, run one operation, write containers
plus a JSON telemetry sidecar. Every stochastic subcommand takes --seed and
records it, so any artifact can be reproduced byte-for-byte from its
telemetry. Exit codes: 0 success, 2 usage, 3 data/container error,
4 calibration failure, 5 validation failure.

Parameters may come from a JSON config file (--config); explicit flags win
over config values, and unknown keys in the config are a hard usage error.
Telemetry sidecars are named ``<output>.json`` for file outputs and
``telemetry.json`` inside directory outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .augment import SATURATION_POLICIES, SnaConfig, augment_pair
from .container import read_container, write_container
from .errors import (
    CalibrationError,
    DomainError,
    FormatError,
    InsufficientDataError,
    RawNoiseError,
)
from .frames import PackedImage, RawFrame, pack_bayer, subtract_black, unpack_bayer
from .ptc import estimate_gain_ptc
from .rng import default_threads, make_rng
from .shading import DarkFrameSet, calibrate_dark_profile, correct_frame, load_profile, save_profile
from .suite import run_builtin_suite
from .synth import load_sensor_spec, simulate_dark_frame, simulate_flat_frame, synthesize_pg
from .tolerances import TOLERANCES_VERSION

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CALIBRATION = 4
EXIT_VALIDATION = 5

_SKIP_TELEMETRY_KEYS = {"func", "command", "config", "log_level"}


def _params_of(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in _SKIP_TELEMETRY_KEYS or key.startswith("_") or callable(value):
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _config_hash(args: argparse.Namespace) -> str:
    # Fingerprint of the transformation parameters only: file locations are
    # excluded so the same operation yields identical artifact bytes no
    # matter where its inputs and outputs live.
    params = {
        k: v
        for k, v in vars(args).items()
        if k not in _SKIP_TELEMETRY_KEYS
        and not k.startswith("_")
        and not callable(v)
        and not isinstance(v, Path)
    }
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _telemetry(args: argparse.Namespace, outputs: list[str], extra: dict | None = None) -> dict:
    params = _params_of(args)
    body = {
        "tool": "rawnoise",
        "tool_version": __version__,
        "subcommand": args.command,
        "seed": params.get("seed"),
        "params": params,
        "config_hash": _config_hash(args),
        "outputs": outputs,
    }
    if extra:
        body.update(extra)
    return body


def _emit(args, output: Path, outputs: list[Path], extra: dict | None = None) -> None:
    """Write the telemetry sidecar next to ``output`` (file or directory)."""
    body = _telemetry(args, [str(p) for p in outputs], extra)
    if output.is_dir():
        _write_json(output / "telemetry.json", body)
    else:
        _write_json(output.with_name(output.name + ".json"), body)


def _artifact_meta(args) -> dict[str, str]:
    meta = {"tool_version": __version__, "config_hash": _config_hash(args)}
    seed = getattr(args, "seed", None)
    if seed is not None:
        meta["seed"] = str(seed)
    return meta


def _read_frame(path: Path) -> RawFrame:
    image = read_container(path)
    if not isinstance(image, RawFrame):
        raise FormatError(f"{path}: expected a mosaic frame container")
    return image


def _read_packed(path: Path) -> PackedImage:
    image = read_container(path)
    if isinstance(image, PackedImage):
        return image
    return pack_bayer(image)


# ---------------------------------------------------------------------------
# subcommands


def cmd_pack(args) -> int:
    frame = _read_frame(args.input)
    write_container(pack_bayer(frame), args.output, extra_meta=_artifact_meta(args))
    _emit(args, args.output, [args.output])
    return EXIT_OK


def cmd_unpack(args) -> int:
    image = read_container(args.input)
    if not isinstance(image, PackedImage):
        raise FormatError(f"{args.input}: expected a packed image container")
    write_container(unpack_bayer(image), args.output, extra_meta=_artifact_meta(args))
    _emit(args, args.output, [args.output])
    return EXIT_OK


def cmd_synthesize(args) -> int:
    args.output.mkdir(parents=True, exist_ok=True)
    outputs = []
    if args.mode in ("dark", "flat"):
        if args.spec is None:
            raise FormatError("--spec is required for dark/flat synthesis")
        spec = load_sensor_spec(args.spec)
        for i in range(args.count):
            rng = make_rng(args.seed, i)
            if args.mode == "dark":
                frame = simulate_dark_frame(spec, args.iso, rng, args.exposure, threads=args.threads)
            else:
                frame = simulate_flat_frame(
                    spec, args.iso, args.electron_rate, rng, args.exposure, threads=args.threads
                )
            out = args.output / f"frame_{i:04d}.rawc"
            write_container(frame, out, extra_meta=_artifact_meta(args))
            outputs.append(out)
    else:  # pg
        if args.clean is None:
            raise FormatError("--clean is required for pg synthesis")
        clean = _read_frame(args.clean)
        gain = args.gain if args.gain is not None else clean.meta.system_gain_k
        if gain is None:
            raise DomainError("no system gain: pass --gain or store system_gain_k in the clean frame")
        for i in range(args.count):
            rng = make_rng(args.seed, i)
            frame = synthesize_pg(
                clean, gain, args.read_sigma, rng, quantize=not args.no_quantize, threads=args.threads
            )
            out = args.output / f"frame_{i:04d}.rawc"
            write_container(frame, out, extra_meta=_artifact_meta(args))
            outputs.append(out)
    _emit(args, args.output, outputs)
    return EXIT_OK


def _frames_in(directory: Path) -> list[Path]:
    files = sorted(directory.glob("*.rawc"))
    if not files:
        raise InsufficientDataError(f"no .rawc frames in {directory}")
    return files


def cmd_calibrate_gain(args) -> int:
    levels = sorted(p for p in args.input.iterdir() if p.is_dir())
    if not levels:
        raise InsufficientDataError(f"no exposure-level directories under {args.input}")
    pairs = []
    for level in levels:
        files = _frames_in(level)
        if len(files) < 2:
            raise InsufficientDataError(f"{level}: need at least 2 frames for a pair")
        pairs.append((_read_frame(files[0]), _read_frame(files[1])))
    estimate = estimate_gain_ptc(pairs)
    body = _telemetry(args, [str(args.output)], {"estimate": estimate.to_dict()})
    _write_json(args.output, body)
    print(
        f"system_gain_k={estimate.system_gain_k:.6g} "
        f"read_variance={estimate.read_variance:.6g} r2={estimate.fit_r2:.6f}"
    )
    return EXIT_OK


def cmd_calibrate_dark(args) -> int:
    iso_dirs = sorted(p for p in args.input.iterdir() if p.is_dir() and p.name.startswith("iso_"))
    if not iso_dirs:
        raise InsufficientDataError(f"no iso_<value> directories under {args.input}")
    sets = []
    for iso_dir in iso_dirs:
        try:
            iso = int(iso_dir.name.removeprefix("iso_"))
        except ValueError:
            raise FormatError(f"{iso_dir.name}: directory name must be iso_<integer>") from None
        frames = [_read_frame(p) for p in _frames_in(iso_dir)]
        sets.append(DarkFrameSet(iso=iso, exposure_time=frames[0].meta.exposure_time, frames=frames))
    profile, stats = calibrate_dark_profile(sets, sensor_id=args.sensor_id)
    save_profile(profile, args.output)
    _emit(args, args.output, [args.output], {"per_iso": {str(k): v for k, v in stats.items()}})
    for iso in profile.calibration_isos:
        print(
            f"iso={iso} ble={profile.ble_table[iso]:+.4f} "
            f"residual_rms={profile.residual_rms[iso]:.4f}"
        )
    return EXIT_OK


def cmd_correct(args) -> int:
    noisy = _read_frame(args.input)
    profile = load_profile(args.profile)
    corrected = correct_frame(noisy, profile, extrapolate=args.extrapolate)
    write_container(corrected, args.output, extra_meta=_artifact_meta(args))
    _emit(args, args.output, [args.output])
    return EXIT_OK


def cmd_augment(args) -> int:
    clean = _read_packed(args.clean)
    noisy = _read_packed(args.noisy)
    subtracted = False
    if any(b != 0.0 for b in clean.meta.black_level):
        clean, noisy = subtract_black(clean), subtract_black(noisy)
        subtracted = True
    gain = args.gain if args.gain is not None else clean.meta.system_gain_k
    if gain is None:
        raise DomainError("no system gain: pass --gain or store system_gain_k in the inputs")
    config = SnaConfig(
        mu=args.mu,
        sigma=args.sigma,
        apply_probability=args.probability,
        saturation_policy=args.policy,
    )
    result = augment_pair(clean, noisy, config, gain, make_rng(args.seed), threads=args.threads)
    args.output.mkdir(parents=True, exist_ok=True)
    out_clean = args.output / "clean.rawc"
    out_noisy = args.output / "noisy.rawc"
    write_container(result.clean, out_clean, extra_meta=_artifact_meta(args))
    write_container(result.noisy, out_noisy, extra_meta=_artifact_meta(args))
    _emit(
        args,
        args.output,
        [out_clean, out_noisy],
        {"augment": result.to_telemetry(), "black_subtracted": subtracted},
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    reports = run_builtin_suite(seed=args.seed)
    payload = {
        "tolerances_version": TOLERANCES_VERSION,
        "reports": [json.loads(r.to_json()) for r in reports],
    }
    body = _telemetry(args, [str(args.output)], payload)
    _write_json(args.output, body)
    failed = 0
    for r in reports:
        tag = "PASS" if r.passed else "FAIL"
        failed += 0 if r.passed else 1
        print(f"{tag} {r.test_name:32s} statistic={r.statistic:.6g} threshold={r.threshold:.6g}")
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# parser


def _add_common(sub: argparse.ArgumentParser, seeded: bool = False) -> None:
    sub.add_argument("--config", type=Path, default=None, help="JSON file of parameter defaults")
    sub.add_argument("--log-level", default="warning", help="logging level name")
    if seeded:
        sub.add_argument("--seed", type=int, default=0, help="RNG seed (recorded in telemetry)")
        sub.add_argument(
            "--threads",
            type=int,
            default=default_threads(),
            help="sampling worker threads (RAWNOISE_THREADS); never changes values",
        )


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="rawnoise", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rawnoise {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, func, help_: str, required: tuple[str, ...], seeded: bool = False) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, help=help_)
        # Required parameters are checked after the config merge, not by
        # argparse, so a config file can supply any of them.
        p.set_defaults(func=func, command=name, _required=required)
        _add_common(p, seeded=seeded)
        registry[name] = p
        return p

    p = sub("pack", cmd_pack, "split a mosaic container into RGGB planes", ("input", "output"))
    p.add_argument("--input", "-i", type=Path)
    p.add_argument("--output", "-o", type=Path)

    p = sub("unpack", cmd_unpack, "interleave a packed container back to a mosaic", ("input", "output"))
    p.add_argument("--input", "-i", type=Path)
    p.add_argument("--output", "-o", type=Path)

    p = sub(
        "synthesize",
        cmd_synthesize,
        "simulate frames from a sensor spec or clean frame",
        ("mode", "output"),
        seeded=True,
    )
    p.add_argument("--mode", choices=("dark", "flat", "pg"))
    p.add_argument("--spec", type=Path, default=None, help="sensor-spec container (dark/flat)")
    p.add_argument("--clean", type=Path, default=None, help="clean frame container (pg)")
    p.add_argument("--iso", type=int, default=100)
    p.add_argument("--exposure", type=float, default=1.0 / 30.0)
    p.add_argument("--electron-rate", type=float, default=0.0, help="mean electrons per pixel (flat)")
    p.add_argument("--gain", type=float, default=None, help="system gain K in DN/e- (pg)")
    p.add_argument("--read-sigma", type=float, default=0.0, help="read noise sigma in DN (pg)")
    p.add_argument("--no-quantize", action="store_true", help="keep pg output real-valued")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--output", "-o", type=Path, help="output directory")

    p = sub("calibrate-gain", cmd_calibrate_gain, "photon-transfer gain fit from flat pairs", ("input", "output"))
    p.add_argument("--input", "-i", type=Path, help="root of per-level frame directories")
    p.add_argument("--output", "-o", type=Path, help="estimate JSON path")

    p = sub("calibrate-dark", cmd_calibrate_dark, "fit a dark-shading profile from dark stacks", ("input", "output"))
    p.add_argument("--input", "-i", type=Path, help="root of iso_<value> directories")
    p.add_argument("--output", "-o", type=Path, help="profile container path")
    p.add_argument("--sensor-id", default="", help="free-form sensor tag stored in the profile")

    p = sub("correct", cmd_correct, "subtract black level and dark shading from a frame", ("input", "profile", "output"))
    p.add_argument("--input", "-i", type=Path)
    p.add_argument("--profile", type=Path)
    p.add_argument("--output", "-o", type=Path)
    p.add_argument("--extrapolate", action="store_true", help="allow ISO outside the calibrated range")

    p = sub("augment", cmd_augment, "shot-noise-consistent brightness augmentation", ("clean", "noisy", "output"), seeded=True)
    p.add_argument("--clean", type=Path)
    p.add_argument("--noisy", type=Path)
    p.add_argument("--gain", type=float, default=None, help="system gain K in DN/e-")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--probability", type=float, default=0.75)
    p.add_argument("--policy", choices=SATURATION_POLICIES, default="clip_to_white")
    p.add_argument("--output", "-o", type=Path, help="output directory")

    p = sub("validate", cmd_validate, "run the built-in statistical suite", ("output",), seeded=True)
    p.add_argument("--output", "-o", type=Path, help="report JSON path")

    return parser, registry


def _apply_config(parser, registry, argv: list[str], args: argparse.Namespace) -> argparse.Namespace:
    cfg_path = getattr(args, "config", None)
    if cfg_path is None:
        return args
    try:
        cfg = json.loads(Path(cfg_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"rawnoise: cannot read config {cfg_path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None
    if not isinstance(cfg, dict):
        print(f"rawnoise: config {cfg_path} must be a JSON object", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    sub = registry[args.command]
    allowed = {a.dest for a in sub._actions} - {"help", "config", "command", "func"}
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        print(
            f"rawnoise: unknown config keys for {args.command}: {', '.join(unknown)}",
            file=sys.stderr,
        )
        raise SystemExit(EXIT_USAGE)
    for key in ("input", "output", "spec", "clean", "noisy", "profile"):
        if key in cfg and cfg[key] is not None:
            cfg[key] = Path(cfg[key])
    sub.set_defaults(**cfg)
    # Reparse: explicit flags override config-provided defaults.
    return parser.parse_args(argv)


def _check_required(registry, args: argparse.Namespace) -> None:
    missing = [name for name in getattr(args, "_required", ()) if getattr(args, name, None) is None]
    if missing:
        flags = ", ".join(f"--{m.replace('_', '-')}" for m in missing)
        print(f"rawnoise {args.command}: missing required parameter(s): {flags}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    # Choice constraints must also hold for config-supplied values.
    for action in registry[args.command]._actions:
        value = getattr(args, action.dest, None)
        if action.choices is not None and value is not None and value not in action.choices:
            print(
                f"rawnoise {args.command}: invalid {action.dest} {value!r} "
                f"(choose from {', '.join(map(str, action.choices))})",
                file=sys.stderr,
            )
            raise SystemExit(EXIT_USAGE)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(parser, registry, argv, args)
    _check_required(registry, args)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        return args.func(args)
    except CalibrationError as exc:
        print(f"rawnoise: calibration error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except RawNoiseError as exc:
        print(f"rawnoise: error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"rawnoise: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
