"""Command line entry point: ``ionlab <subcommand> ...``.

Exit codes: 0 success, 1 user error (bad input, config or program),
2 internal error.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks

from . import atp, micromotion, motion, paulvm, pulsec, universe
from .bloch import TwoLevelParams
from .constants import BD_LINEWIDTH, TWO_PI
from .config import ConfigError, LabConfig, load_config
from .cooling import sideband_cool


class UsageError(Exception):
    pass


USER_ERRORS = (UsageError, ConfigError, pulsec.CompileError, pulsec.FormatError,
               paulvm.MappingError, paulvm.InvalidScheduleError, paulvm.VMFault,
               atp.AtpError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d, help="lab configuration file")
    p.add_argument("--seed", type=int, default=d, help="RNG seed")
    p.add_argument("--out", default=d, help="output CSV path")
    p.add_argument("--jobs", type=int, default=d if suppress else 1,
                   help="worker processes for scan grid points")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ionlab", description="Virtual trapped-ion laboratory.",
                     parents=[_common(False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_common(True)]

    p = sub.add_parser("scan", parents=common, help="Raman frequency or duration scan")
    p.add_argument("kind", choices=["frequency", "duration"])
    p.add_argument("--geometry", choices=["co", "ortho"], default=None,
                   help="default: co for duration scans, ortho for frequency scans")
    p.add_argument("--start", type=float, help="grid start (s, or Hz detuning)")
    p.add_argument("--stop", type=float, help="grid stop")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--mean-n", type=float, help="thermal state with this mean n")
    p.add_argument("--cooled", action="store_true", help="sideband-cool the thermal state first")
    p.add_argument("--pulse", type=float, help="pulse length for frequency scans (s)")
    p.add_argument("--order", type=int, default=0, help="sideband order for duration scans")
    p.add_argument("--reps", type=int, default=0, help="simulated repetitions per point (0: exact)")

    p = sub.add_parser("universe", parents=common, help="squeezing by a trap-frequency ramp")
    p.add_argument("--ramp", choices=["squeeze", "linear", "sudden", "adiabatic"], default="squeeze")
    p.add_argument("--low-hz", type=float, default=100e3)
    p.add_argument("--high-hz", type=float, default=2e6)
    p.add_argument("--rise", type=float, default=1e-6, help="rise time of the fast ramp (s)")
    p.add_argument("--reps", type=int, default=0, help="simulated readout repetitions (0: exact)")

    p = sub.add_parser("micromotion", parents=common, help="photon-RF correlation histogram")
    p.add_argument("--beta", type=float, default=0.7)
    p.add_argument("--photons", type=int, default=100_000)

    p = sub.add_parser("compile", parents=common, help="compile a pulse program")
    p.add_argument("source")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--disasm", action="store_true", help="print an instruction listing")

    p = sub.add_parser("run", parents=common, help="run a compiled program on the virtual box")
    p.add_argument("program")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--timeout", type=float, default=1e10, help="cycle limit")

    p = sub.add_parser("serve-atp", parents=common, help="serve simulated ROI counts over ATP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=atp.DEFAULT_PORT)
    p.add_argument("--rois", type=int, default=2)
    return parser


# ---------------------------------------------------------------- scan

def _scan_chunk(args):
    kind, dist, config, order, x, pulse, axial, spread = args
    if kind == "duration":
        return motion.flopping_curve(dist, config, order, 0.0, x, spread)
    return motion.frequency_scan(dist, config, pulse, x, axial)


def _evaluate(kind, dist, config, order, grid, pulse, axial, spread, jobs):
    if jobs <= 1 or len(grid) < 2 * jobs:
        return _scan_chunk((kind, dist, config, order, grid, pulse, axial, spread))
    chunks = np.array_split(grid, jobs)
    with ProcessPoolExecutor(jobs) as pool:
        parts = pool.map(_scan_chunk, [(kind, dist, config, order, c, pulse, axial, spread)
                                       for c in chunks])
        return np.concatenate(list(parts))


def _fit_envelope(t, p_down, rabi, spread):
    def model(tt, om, eps):
        return motion.dephased_envelope(om, abs(eps), tt)
    (om, eps), _ = curve_fit(model, t, p_down, p0=[rabi, max(spread, 1.0)])
    return om, abs(eps)


def cmd_scan(args, cfg: LabConfig) -> int:
    if args.points < 1:
        raise UsageError("scan grid is empty")
    geometry = args.geometry or ("co" if args.kind == "duration" else "ortho")
    config = motion.RamanConfig(
        cfg.raman.base_rabi, cfg.raman.eta,
        geometry=motion.COPROPAGATING if geometry == "co" else motion.ORTHOGONAL)
    axial = cfg.trap_frequency
    if args.mean_n is not None:
        dist = motion.thermal_from_mean(args.mean_n)
    else:
        dist = motion.thermal_distribution(cfg.temperature, axial)
    if args.cooled:
        dist = sideband_cool(dist, cfg.cooling, cfg.raman.eta, cfg.raman.base_rabi).final
    spread = cfg.raman.spread if geometry == "co" else 0.0

    if args.kind == "duration":
        start = 0.0 if args.start is None else args.start
        stop = 150e-6 if args.stop is None else args.stop
        grid = np.linspace(start, stop, args.points)
        pulse = None
    else:
        start = -5e6 if args.start is None else args.start
        stop = 5e6 if args.stop is None else args.stop
        grid = np.linspace(start, stop, args.points) * TWO_PI
        pulse = args.pulse or math.pi / abs(motion.raman_rabi(0, 0, config.eta, config.base_rabi))
    if not np.all(np.isfinite(grid)):
        raise UsageError("grid bounds must be finite")

    p_down = _evaluate(args.kind, dist, config, args.order, grid, pulse, axial, spread, args.jobs)
    if args.reps > 0:
        rng = np.random.default_rng(args.seed)
        p_down = rng.binomial(args.reps, np.clip(p_down, 0, 1)) / args.reps

    x = grid if args.kind == "duration" else grid / TWO_PI
    if args.out:
        motion.write_scan_csv(args.out, args.kind, x, p_down)

    print(f"scan={args.kind} geometry={geometry} points={len(grid)} mean_n={dist.mean_n:.4f}")
    if args.kind == "duration":
        exact = _scan_chunk(("duration", dist, config, args.order, grid, None, axial, spread))
        minima, _ = find_peaks(-exact)
        if len(minima):
            print(f"pi_time_s={grid[minima[0]]:.6e}")
        if spread > 0 and args.order == 0 and len(grid) > 3:
            try:
                om, eps = _fit_envelope(grid, p_down, config.base_rabi, spread)
                print(f"fitted_rabi_hz={om / TWO_PI:.6e} fitted_spread_hz={eps / TWO_PI:.6e}")
                print(f"envelope_node_s={math.pi / eps:.6e}")
            except RuntimeError:
                print("envelope fit did not converge")
    else:
        depth = 1.0 - p_down
        peaks, _ = find_peaks(depth, prominence=0.05)
        print("dips_hz=" + ",".join(f"{x[k]:.6e}" for k in peaks))
        red = depth[np.argmin(abs(grid + axial))]
        blue = depth[np.argmin(abs(grid - axial))]
        print(f"red_depth={red:.6f} blue_depth={blue:.6f}")
        if 0 <= red < blue:
            print(f"mean_n_from_sidebands={motion.mean_n_from_sidebands(red, blue):.6f}")
    return 0


# ---------------------------------------------------------------- universe

def cmd_universe(args, cfg: LabConfig) -> int:
    low, high = TWO_PI * args.low_hz, TWO_PI * args.high_hz
    if not (low > 0 and high > 0):
        raise UsageError("ramp frequencies must be > 0")
    if args.ramp == "squeeze":
        ramp = universe.squeeze_protocol(low, high, args.rise)
    elif args.ramp == "sudden":
        ramp = universe.RampProfile(low, high, 1e-9 / max(args.high_hz * 1e-6, 1.0), "sudden")
    elif args.ramp == "linear":
        ramp = universe.RampProfile(low, high, args.rise, "linear")
    else:
        ramp = universe.RampProfile(low, high, 100.0 / low, "smooth-step")
    res = universe.mode_squeezing(ramp)
    if args.out:
        universe.write_report_csv(args.out, res)

    thermal = motion.thermal_from_mean(res.mean_n) if res.mean_n > 0 else motion.MotionalDistribution.point(0)
    eta, rabi = cfg.raman.eta, cfg.raman.base_rabi
    rng = np.random.default_rng(args.seed)
    print(f"ramp={args.ramp} r={res.squeeze_parameter:.6f} sudden_r={universe.sudden_squeeze(low, high):.6f}")
    print(f"mean_n={res.mean_n:.6f} P0={res.occupations.probs[0]:.6f} P2={res.occupations.probs[2]:.6f}")
    signal = {}
    for label, dist in (("squeezed", res.occupations), ("thermal", thermal)):
        for variant in ("second-red", "first-red"):
            p = universe.readout_protocol(dist, eta, rabi, variant)
            if args.reps > 0:
                p = rng.binomial(args.reps, p) / args.reps
            signal[label, variant] = p
            print(f"bright[{label},{variant}]={p:.6f}")
    d = {k: signal[k, "second-red"] - signal[k, "first-red"] for k in ("squeezed", "thermal")}
    print(f"discrimination={d['squeezed'] - d['thermal']:.6f}")
    return 0


# ---------------------------------------------------------------- micromotion

def cmd_micromotion(args, cfg: LabConfig) -> int:
    if args.photons <= 0:
        raise UsageError("photons must be > 0")
    if args.beta < 0:
        raise UsageError("beta must be >= 0")
    gamma = BD_LINEWIDTH
    params = TwoLevelParams(gamma / math.sqrt(3.0), gamma / 2.0, gamma)
    drive = cfg.trap.drive
    times, trace = micromotion.steady_trace(params, micromotion.MicromotionParams(args.beta), drive)
    hist = micromotion.synthesize_correlation_histogram(
        times, trace, args.photons, args.seed, period=TWO_PI / drive)
    if args.out:
        hist.to_csv(args.out)
    p = hist.flatness_pvalue()
    verdict = "flat" if p > 0.05 else ("peaked" if p < 0.01 else "inconclusive")
    print(f"beta={args.beta} photons={args.photons} period_ns={hist.period * 1e9:.3f}")
    print(f"p_value={p:.6g} verdict={verdict}")
    return 0


# ---------------------------------------------------------------- compile / run / serve

def cmd_compile(args, cfg) -> int:
    with open(args.source, newline="") as fh:
        source = fh.read()
    binary = pulsec.compile_source(source)
    with open(args.output, "wb") as fh:
        fh.write(binary)
    if args.disasm:
        sys.stdout.write(pulsec.listing(binary))
    return 0


def cmd_run(args, cfg: LabConfig) -> int:
    if args.reps <= 0:
        raise UsageError("reps must be > 0")
    with open(args.program, "rb") as fh:
        binary = fh.read()
    timeline = paulvm.execute(binary, timeout_cycles=args.timeout)
    schedule = paulvm.timeline_to_pulses(timeline, cfg.beams)
    result = paulvm.run_experiment(schedule, cfg.physics(), args.reps, args.seed)
    if args.out:
        paulvm.write_results_csv(args.out, result)
    print(f"cycles={timeline.total_cycles} reps={args.reps}")
    print(f"p_bright={result.p_bright:.6f} stderr={result.stderr:.6f} model={result.p_bright_model:.6f}")
    print(f"mean_counts={float(np.mean(result.counts)):.4f}")
    return 0


def cmd_serve_atp(args, cfg: LabConfig) -> int:
    if args.rois < 1 or args.rois > 128:
        raise UsageError("rois must be in 1..128")
    d = cfg.detection
    source = atp.SimulatedCountSource(args.rois, rate=d.bright_rate, background=d.background_rate,
                                      exposure=d.window, seed=args.seed)
    camera = atp.CameraModel(exposure=d.window)
    server = atp.AtpServer((args.host, args.port), source, camera)
    print(f"serving ATP on {args.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


COMMANDS = {
    "scan": cmd_scan, "universe": cmd_universe, "micromotion": cmd_micromotion,
    "compile": cmd_compile, "run": cmd_run, "serve-atp": cmd_serve_atp,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else LabConfig()
        if args.seed is None:
            args.seed = cfg.seed
        return COMMANDS[args.command](args, cfg)
    except pulsec.CompileError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
