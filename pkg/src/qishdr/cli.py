"""Command-line entry point.

Exit status: 0 on success, 1 for usage errors, 2 for runtime failures
(missing or malformed files, mismatched inputs).
"""

import argparse
import sys

import numpy as np

from . import io as qio
from .errors import DomainError, FormatError
from .hdr import ExposureStack, FusionConfig, fuse, tone_map
from .metrics import (
    DEFAULT_BRACKET,
    SnrCurve,
    bracket,
    combined_snr_curve,
    default_theta_axis,
    psnr,
    sensor_label,
    snr_curve,
)
from .sensor import ExposureConfig, capture

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


class _SensorAction(argparse.Action):
    """Group ``--capacity/--bits``, ``--frames`` and ``--oversample`` by position.

    ``--capacity`` (or ``--bits``) opens a new sensor; the other two flags
    apply to the most recently opened one.
    """

    def __call__(self, parser, namespace, values, option_string=None):
        sensors = getattr(namespace, "sensors", None)
        if sensors is None:
            sensors = []
            namespace.sensors = sensors
        try:
            value = int(values)
        except ValueError:
            parser.error(f"{option_string} expects an integer, got {values!r}")
        if value < 1:
            parser.error(f"{option_string} must be >= 1")
        if self.dest in ("capacity", "bits"):
            capacity = value if self.dest == "capacity" else 2**value - 1
            sensors.append({"capacity": capacity, "frames": None, "oversample": None})
            return
        if not sensors:
            parser.error(f"{option_string} must follow --capacity or --bits")
        if sensors[-1][self.dest] is not None:
            parser.error(f"{option_string} given twice for one sensor")
        sensors[-1][self.dest] = value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _nonneg_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _scales(text):
    if text == "default":
        return DEFAULT_BRACKET
    try:
        scales = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bracket {text!r}") from None
    if not scales or any(not np.isfinite(s) or s <= 0 for s in scales):
        raise argparse.ArgumentTypeError("bracket scales must be positive")
    return scales


def _build_parser():
    parser = _Parser(prog="qishdr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("snr-curve", help="SNR_H over illumination as CSV")
    p.add_argument("--capacity", action=_SensorAction, metavar="L",
                   help="start a sensor row with counter capacity L (repeatable)")
    p.add_argument("--bits", action=_SensorAction, metavar="B",
                   help="start a sensor row with capacity 2**B - 1")
    p.add_argument("--frames", action=_SensorAction, metavar="T",
                   help="frames summed by the current sensor (default 1)")
    p.add_argument("--oversample", action=_SensorAction, metavar="K",
                   help="K x K jots per pixel for the current sensor (default 1)")
    p.add_argument("--combine", type=_scales, metavar="SCALES",
                   help="also emit each sensor's combined curve over a tau "
                        "bracket: comma-separated scales or 'default' (1, 1/4, ..., 1/256)")
    p.add_argument("--theta", type=_positive_float, action="append",
                   help="explicit axis point (repeatable); overrides the default axis")
    p.add_argument("--theta-min", type=_positive_float, default=1e-2)
    p.add_argument("--theta-max", type=_positive_float, default=1e6)
    p.add_argument("--points", type=_positive_int, default=200)
    p.add_argument("--out", help="CSV path (default: standard output)")
    p.set_defaults(func=_cmd_snr_curve)

    p = sub.add_parser("simulate", help="capture one exposure of a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--cmax", type=_positive_float, default=qio.DEFAULT_CMAX)
    p.add_argument("--tau", type=_positive_float, required=True)
    cap = p.add_mutually_exclusive_group(required=True)
    cap.add_argument("--capacity", type=_positive_int)
    cap.add_argument("--bits", type=_positive_int)
    p.add_argument("--frames", type=_positive_int, default=1)
    p.add_argument("--oversample", type=_positive_int, default=1)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct", help="fuse simulated exposures into HDR flux")
    p.add_argument("--inputs", required=True, help="comma-separated QISF sum images")
    p.add_argument("--denoise-sigma", type=_nonneg_float, default=0.0)
    p.add_argument("--weight", choices=("snr2", "snr"), default="snr2")
    p.add_argument("--max-iters", type=_positive_int, default=10)
    p.add_argument("--rel-tol", type=_positive_float, default=1e-4)
    p.add_argument("--saturation-margin", type=_positive_float, default=0.995)
    p.add_argument("--out", required=True, help="QISF flux output")
    p.add_argument("--display", help="8-bit PGM tone-mapped output")
    p.add_argument("--cmax", type=_positive_float, default=qio.DEFAULT_CMAX)
    p.add_argument("--gamma", type=_positive_float, default=2.2)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("tonemap", help="tone-map a ground-truth scene for reference")
    p.add_argument("--scene", required=True)
    p.add_argument("--cmax", type=_positive_float, default=qio.DEFAULT_CMAX)
    p.add_argument("--gamma", type=_positive_float, default=2.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tonemap)

    p = sub.add_parser("compare", help="PSNR between two 8-bit PGM images")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("run", help="simulate and reconstruct from a key=value run file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)
    return parser


def _cmd_snr_curve(args, out):
    sensors = getattr(args, "sensors", None) or []
    if not sensors:
        raise UsageError("snr-curve: at least one --capacity (or --bits) is required")
    if args.theta:
        theta = np.array(sorted(set(args.theta)))
    else:
        if args.theta_min >= args.theta_max:
            raise UsageError("snr-curve: --theta-min must be below --theta-max")
        theta = default_theta_axis(args.points, args.theta_min, args.theta_max)
    rows = [(s["capacity"], s["frames"] or 1, None, s["oversample"] or 1) for s in sensors]
    curve = snr_curve(rows, theta)
    if args.combine:
        labels = list(curve.labels)
        values = [curve.values]
        for capacity, frames, _, k in rows:
            comb = combined_snr_curve(bracket(capacity, frames, k, args.combine), theta,
                                      label=f"{sensor_label(capacity, frames, k)}-combined")
            labels.extend(comb.labels)
            values.append(comb.values)
        curve = SnrCurve(theta, tuple(labels), np.vstack(values))
    if args.out:
        qio.write_csv(args.out, curve)
    else:
        out.write(qio.format_csv(curve))


def _exposure_from_args(args):
    capacity = args.capacity if args.capacity is not None else 2**args.bits - 1
    return ExposureConfig(args.tau, capacity, args.frames, args.oversample, args.seed)


def _cmd_simulate(args, out):
    try:
        cfg = _exposure_from_args(args)
    except DomainError as exc:
        raise UsageError(f"simulate: {exc}") from None
    scene = qio.read_scene(args.scene, args.cmax)
    qio.write_sum_image(args.out, capture(scene, cfg))


def _reconstruct(paths, fusion, flux_out, display_out, c_max, gamma):
    images = [qio.read_sum_image(p) for p in paths]
    try:
        stack = ExposureStack(tuple(images))
    except DomainError as exc:
        raise RuntimeFailure(str(exc)) from None
    estimate = fuse(stack, fusion)
    qio.write_flux(flux_out, estimate)
    if display_out:
        qio.write_display(display_out, tone_map(estimate, c_max, gamma))
    return estimate


def _cmd_reconstruct(args, out):
    paths = [p for p in (s.strip() for s in args.inputs.split(",")) if p]
    if not paths:
        raise UsageError("reconstruct: --inputs names no files")
    try:
        fusion = FusionConfig(
            max_iters=args.max_iters,
            rel_tol=args.rel_tol,
            denoise_sigma=args.denoise_sigma,
            saturation_margin=args.saturation_margin,
            weighting=args.weight,
        )
    except DomainError as exc:
        raise UsageError(f"reconstruct: {exc}") from None
    _reconstruct(paths, fusion, args.out, args.display, args.cmax, args.gamma)


def _cmd_tonemap(args, out):
    scene = qio.read_scene(args.scene, args.cmax)
    qio.write_display(args.out, tone_map(scene.flux, args.cmax, args.gamma))


def _cmd_compare(args, out):
    ref, _ = qio.read_pgm(args.reference)
    test, _ = qio.read_pgm(args.test)
    if ref.shape != test.shape:
        raise RuntimeFailure(f"image sizes differ: {ref.shape} vs {test.shape}")
    value = psnr(ref, test)
    out.write("inf\n" if np.isinf(value) else f"{value:.2f}\n")


def _cmd_run(args, out):
    run = qio.read_run_config(args.config)
    scene = qio.read_scene(run.scene, run.c_max)
    images = [capture(scene, cfg) for cfg in run.exposures]
    estimate = fuse(ExposureStack(tuple(images)), run.fusion)
    qio.write_flux(run.flux_out, estimate)
    qio.write_display(run.display_out, tone_map(estimate, run.c_max, run.gamma))


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    try:
        args.func(args, stdout)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except (RuntimeFailure, FormatError, OSError, DomainError) as exc:
        stderr.write(f"qishdr {args.command}: {exc}\n")
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
