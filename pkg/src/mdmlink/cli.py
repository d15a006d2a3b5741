"""Command line: ``mdmlink <subcommand> [options]``.

Exit codes: 0 success, 1 configuration / input error, 2 runtime error
(synchronisation, divergence, ...).
"""

import argparse
import sys
from pathlib import Path

from .config import ExperimentConfig, config_schema
from .errors import MdmError, PipelineError
from .pipeline import (
    characterization_table,
    characterize,
    run_simulation,
    sweep,
    sweep_table,
    write_result,
)
from .plots import emit_plots

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


def _load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _parse_values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None


def _print_run(result):
    cap = result.capacity
    print(f"net capacity {cap.net_bps / 1e12:.4f} Tb/s, "
          f"spectral efficiency {cap.spectral_efficiency_bps_hz:.2f} b/s/Hz")
    for w in result.wavelengths:
        b = w.bers
        print(f"{w.wavelength_nm:8.2f} nm  mean BER {w.mean_ber:.3e}  "
              f"best {b.min():.3e}  worst {b.max():.3e}  converged {w.converged}")


def cmd_simulate(args):
    result = run_simulation(_load_config(args))
    write_result(result, args.out)
    _print_run(result)
    print(f"results written to {args.out}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    points = sweep(cfg, args.axis, args.values, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, p in enumerate(points):
        if p.ok:
            write_result(p.result, out / f"point_{k:03d}")
    table = sweep_table(points)
    (out / "sweep.csv").write_text(table)
    sys.stdout.write(table)
    failed = [p for p in points if not p.ok]
    for p in failed:
        print(f"point {p.axis}={p.value:g} failed: {p.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed and len(failed) == len(points) else EXIT_OK


def cmd_characterize(args):
    reports = characterize(args.files, seed=args.seed or 0)
    table = characterization_table(reports)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "characterization.csv").write_text(table)
    sys.stdout.write(table)
    for r in reports:
        print(f"{r.wavelength_nm:g} nm: worst mode {r.worst_mode} "
              f"({max(r.worst_crosstalk_db):.2f} dB), MDL {r.mdl_db:.2f} dB")
    return EXIT_OK


def cmd_plot(args):
    if not Path(args.result).is_dir():
        print(f"error: no result directory at {args.result}", file=sys.stderr)
        return EXIT_INPUT
    written, missing = emit_plots(args.result, args.out)
    for path in written:
        print(path)
    for name in missing:
        print(f"missing section: {name}", file=sys.stderr)
    return EXIT_OK if written else EXIT_INPUT


def cmd_schema(args):
    sys.stdout.write(config_schema())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mdmlink", description="Mode-multiplexed coherent link simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="results"):
        sp.add_argument("--config", metavar="PATH", help="INI configuration (defaults if omitted)")
        sp.add_argument("--seed", type=int, metavar="N", help="override the master seed")
        sp.add_argument("--out", metavar="DIR", default=out_default, help="output directory")

    sp = sub.add_parser("simulate", help="run every configured wavelength")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="independent runs over wavelength or SNR")
    common(sp, "sweep")
    sp.add_argument("--axis", choices=["wavelength", "snr"], required=True)
    sp.add_argument("--values", type=_parse_values, required=True, help="comma-separated values")
    sp.add_argument("--workers", type=int, default=1, help="parallel processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("characterize", help="crosstalk / insertion loss / MDL of matrix files")
    sp.add_argument("files", nargs="+", metavar="MATRIX_CSV")
    sp.add_argument("--seed", type=int, metavar="N", help="seed for the synthesized field phases")
    sp.add_argument("--out", metavar="DIR", help="also write characterization.csv here")
    sp.set_defaults(func=cmd_characterize)

    sp = sub.add_parser("plot", help="SVG figures from a result directory")
    sp.add_argument("result", metavar="RESULT_DIR")
    sp.add_argument("--out", metavar="DIR", help="figure directory (default: RESULT_DIR)")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("print-config-schema", help="print every config key with its default")
    sp.set_defaults(func=cmd_schema)
    return p


def _exit_code(exc):
    cause = exc.cause if isinstance(exc, PipelineError) else exc
    return EXIT_INPUT if isinstance(cause, ValueError) else EXIT_RUNTIME


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are input errors here
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except MdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
