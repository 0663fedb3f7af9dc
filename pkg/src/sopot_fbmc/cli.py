"""Command-line front end.

Subcommands: ``filter``, ``approx``, ``sweep-mse``, ``sweep-interference``,
``psd``, ``ber``. Any flag may also come from ``--config FILE`` (``key=value``
lines, or a manifest JSON written by an earlier run); flags on the command
line win. Each run writes ``manifest-<command>.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from . import experiments as ex
from .fbmc import FbmcConfig, PrototypeFilter, phydyas_prototype, read_filter, write_filter
from .sopot import DEFAULT_MAX_DEPTH, write_trace

DEFAULT_EBN0 = {4: "0:1:12", 64: "0:2:30"}


class UsageError(Exception):
    """Bad configuration detected after argument parsing (exit 1)."""


def parse_range(text: str, cast=float) -> list:
    """``"0:2:12"`` (inclusive start:step:stop) or ``"1,2.5,4"``."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise UsageError(f"range step must be positive, got {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(max(n, 0))]
        values = [round(v, 12) for v in values]
    else:
        values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise UsageError(f"empty range {text!r}")
    if cast is int:
        if any(v != int(v) for v in values):
            raise UsageError(f"expected integers in {text!r}")
        return [int(v) for v in values]
    return values


def _split(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


# -- parser -------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, outdir: bool = True) -> None:
    p.add_argument("--config", help="key=value file or manifest JSON; flags override it")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    if outdir:
        p.add_argument("--outdir", default=".", help="directory for CSV outputs and the manifest")


def _fbmc_opts(p: argparse.ArgumentParser, blocks: bool = False) -> None:
    p.add_argument("--subcarriers", type=int, default=128)
    p.add_argument("--overlap", type=int, default=4)
    if blocks:
        p.add_argument("--blocks", type=int, default=64)


def _quant_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bmax", type=int, default=DEFAULT_MAX_DEPTH, help="deepest bit plane")
    p.add_argument("--gain", type=int, default=None, help="power-of-two PPN gain (default: subcarriers)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sopot-fbmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="write the reference PHYDYAS prototype filter")
    _common(p, outdir=False)
    _fbmc_opts(p)
    p.add_argument("-o", "--output")

    p = sub.add_parser("approx", help="approximate a filter file with signed powers of two")
    _common(p, outdir=False)
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output")
    p.add_argument("--trace", help="also write the SPT trace CSV")
    p.add_argument("--method", choices=["csd", "sdl", "mpgbp"], default="sdl")
    p.add_argument("--wordlength", type=int, help="CSD wordlength B")
    p.add_argument("--spt-per-coeff", type=float, help="SDL/MPGBP budget per coefficient")
    p.add_argument("--max-spts", type=int, help="SDL/MPGBP total budget (overrides --spt-per-coeff)")
    _quant_opts(p)

    for name, what in (("sweep-mse", "approximation MSE"), ("sweep-interference", "residual interference")):
        p = sub.add_parser(name, help=f"{what} versus SPT/coeff for each method")
        _common(p)
        _fbmc_opts(p)
        p.add_argument("-i", "--input", help="filter file (default: PHYDYAS)")
        p.add_argument("--methods", default="csd,sdl,mpgbp")
        p.add_argument("--grid", default="1.0:0.25:3.5", help="SPT/coeff grid, or 'matched' for the CSD densities")
        p.add_argument("--wordlengths", default="3:1:8")
        _quant_opts(p)

    p = sub.add_parser("psd", help="Welch PSD with the central subcarriers active")
    _common(p)
    _fbmc_opts(p, blocks=True)
    p.add_argument("--active", type=int, default=None, help="active central subcarriers (default M/2)")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--curves", default="reference,csd:4,sdl:1.8")
    p.add_argument("--segment", type=int, default=512)
    p.add_argument("--overlap-fraction", type=float, default=0.5)
    _quant_opts(p)

    p = sub.add_parser("ber", help="Monte Carlo BER over AWGN")
    _common(p)
    _fbmc_opts(p, blocks=True)
    p.add_argument("--order", type=int, choices=[4, 64], default=4)
    p.add_argument("--ebn0", help="Eb/N0 list in dB, start:step:stop or comma separated")
    p.add_argument("--curves", default="reference,csd:4,sdl:1.8")
    p.add_argument("--quantize", choices=["both", "tx", "rx"], default="both",
                   help="which side of the link uses the approximated filter")
    p.add_argument("--min-errors", type=int, default=100)
    p.add_argument("--max-bits", type=float, default=1e6)
    p.add_argument("--frames", type=int, default=None,
                   help="fixed frame count per point; disables the error/bit stop rule")
    p.add_argument("--workers", type=int, default=None, help="threads (default: $SOPOT_FBMC_THREADS or CPUs)")
    _quant_opts(p)
    return parser


# -- config files -------------------------------------------------------------

def load_config(path) -> dict[str, str]:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        data = data.get("config", data)
        return {k: v for k, v in data.items() if v is not None}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def _apply_config(sub: argparse.ArgumentParser, mapping: dict) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}  # noqa: SLF001
    defaults = {}
    for key, value in mapping.items():
        dest = key.replace("-", "_")
        if dest == "command":
            continue
        if dest not in actions:
            raise UsageError(f"unknown config key {key!r}")
        action = actions[dest]
        if isinstance(value, str) and action.type is not None:
            try:
                value = action.type(value)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
        defaults[dest] = value
    sub.set_defaults(**defaults)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        _apply_config(_subparser(parser, args.command), load_config(args.config))
        args = parser.parse_args(argv)
    return args


def write_manifest(args: argparse.Namespace, outdir: Path, outputs: list[str]) -> Path:
    config = {k: v for k, v in vars(args).items() if k not in ("config",)}
    manifest = {
        "tool": "sopot-fbmc",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "config": config,
        "outputs": outputs,
    }
    path = outdir / f"manifest-{args.command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- commands -----------------------------------------------------------------

def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.command}")


def _reference(args) -> PrototypeFilter:
    if getattr(args, "input", None):
        return read_filter(args.input)
    return phydyas_prototype(args.subcarriers, args.overlap)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_filter(args) -> list[str]:
    _need(args, "output")
    _outdir(Path(args.output).parent)
    write_filter(phydyas_prototype(args.subcarriers, args.overlap), args.output)
    return [args.output]


def cmd_approx(args) -> list[str]:
    _need(args, "input", "output")
    filt = read_filter(args.input)
    _outdir(Path(args.output).parent)
    method = args.method.upper()
    if method == "CSD":
        _need(args, "wordlength")
        fa = ex.approximate_filter(filt, method, wordlength=args.wordlength, max_depth=args.bmax, gain=args.gain)
    else:
        if args.max_spts is None and args.spt_per_coeff is None:
            raise UsageError("--spt-per-coeff or --max-spts is required for sdl/mpgbp")
        fa = ex.approximate_filter(
            filt, method, spt_per_coeff=args.spt_per_coeff, max_spts=args.max_spts, max_depth=args.bmax, gain=args.gain
        )
    write_filter(fa.filter, args.output)
    outputs = [args.output]
    if args.trace:
        write_trace(fa.approx, args.trace)
        outputs.append(args.trace)
    print(
        f"{fa.label}: {len(fa.approx)} SPTs ({fa.spt_per_coeff_raw:.4f}/coeff raw, "
        f"{fa.spt_per_coeff_merged:.4f} merged), "
        f"MSE {ex.approximation_mse(filt.coefficients, fa.filter.coefficients):.2f} dB"
    )
    return outputs


def _sweep(args, interference: bool) -> list[str]:
    filt = _reference(args)
    grid = None if args.grid.strip().lower() == "matched" else parse_range(args.grid)
    wordlengths = parse_range(args.wordlengths, int)
    methods = [m.upper() for m in _split(args.methods)]
    kw = dict(wordlengths=wordlengths, max_depth=args.bmax, gain=args.gain)
    if interference:
        rows = ex.run_interference_sweep(filt, methods, grid, **kw)
    else:
        rows = ex.run_mse_sweep(filt, methods, grid, **kw)
    path = _outdir(args.outdir) / "sweep.csv"
    ex.write_sweep_csv(rows, path)
    return [str(path)]


def cmd_psd(args) -> list[str]:
    ref = phydyas_prototype(args.subcarriers, args.overlap)
    config = FbmcConfig(args.subcarriers, args.overlap, args.blocks).with_central_band(args.active)
    curves = {}
    for spec in _split(args.curves):
        label, filt = ex.curve_filter(spec, ref, args.bmax, args.gain)
        curves[label] = ex.run_psd_experiment(
            config, filt, args.frames, seed=args.seed, segment_length=args.segment,
            overlap_fraction=args.overlap_fraction,
        )
    path = _outdir(args.outdir) / "psd.csv"
    ex.write_psd_csv(curves, path)
    return [str(path)]


def cmd_ber(args) -> list[str]:
    ref = phydyas_prototype(args.subcarriers, args.overlap)
    config = FbmcConfig(args.subcarriers, args.overlap, args.blocks)
    ebn0 = parse_range(args.ebn0 or DEFAULT_EBN0[args.order])
    if args.frames is not None:
        rule = ex.StopRule(min_errors=None, max_bits=None, max_frames=args.frames)
    else:
        rule = ex.StopRule(min_errors=args.min_errors, max_bits=int(args.max_bits))
    points = []
    for spec in _split(args.curves):
        label, filt = ex.curve_filter(spec, ref, args.bmax, args.gain)
        tx, rx = filt, filt
        if args.quantize == "tx":
            rx = ref
        elif args.quantize == "rx":
            tx = ref
        points += ex.run_ber(config, tx, args.order, ebn0, rule, seed=args.seed, rx_filter=rx,
                             workers=args.workers, label=label)
    path = _outdir(args.outdir) / "ber.csv"
    ex.write_ber_csv(points, path)
    return [str(path)]


COMMANDS = {
    "filter": cmd_filter,
    "approx": cmd_approx,
    "sweep-mse": lambda a: _sweep(a, interference=False),
    "sweep-interference": lambda a: _sweep(a, interference=True),
    "psd": cmd_psd,
    "ber": cmd_ber,
}


def dispatch(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2, --help/--version exit 0
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"sopot-fbmc: error: {exc}", file=sys.stderr)
        return 1
    try:
        outputs = COMMANDS[args.command](args)
        outdir = Path(args.outdir) if hasattr(args, "outdir") else Path(outputs[0]).parent
        write_manifest(args, outdir, outputs)
    except (UsageError, ValueError, OSError) as exc:
        print(f"sopot-fbmc: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())
