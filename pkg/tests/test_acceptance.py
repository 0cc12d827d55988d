"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict in VERDICTS; conftest.py prints them
after the run.  ``python3 tests/test_acceptance.py`` runs the same checks
outside pytest.
"""

import math
import random
import socket
import time
import warnings
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from ionlab import atp, bloch, cooling, micromotion as mm, motion, paulvm, trap, universe
from ionlab.bloch import TwoLevelParams
from ionlab.constants import BD_LINEWIDTH, MG25_MASS, TWO_PI
from ionlab.pulsec import compile_source, disassemble, parse_duration
from ionlab.pulsec.lexer import CompileError, PulseWarning

G = BD_LINEWIDTH
DRIVE = TWO_PI * 56e6
RABI = TWO_PI * 202e3
CORPUS = Path(__file__).parent / "data" / "corpus"

VERDICTS: dict[int, str] = {}


class Check:
    """Collects named comparisons for one criterion."""

    def __init__(self, number: int, limit: float):
        self.number = number
        self.limit = limit
        self.items: list[tuple[str, bool]] = []
        self.start = time.perf_counter()

    def __call__(self, label: str, ok) -> None:
        self.items.append((label, bool(ok)))

    def close(self) -> None:
        elapsed = time.perf_counter() - self.start
        self(f"runtime {elapsed:.2f}s<{self.limit:g}s", elapsed < self.limit)
        ok = all(k for _, k in self.items)
        failed = [lbl for lbl, k in self.items if not k]
        detail = "; ".join(lbl for lbl, _ in self.items)
        line = f"criterion {self.number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        VERDICTS[self.number] = line
        print(line)
        assert ok, line


def near(x, target, tol):
    return abs(x - target) <= tol


def test_criterion_01_steady_state_fluorescence():
    c = Check(1, 1.0)
    p = TwoLevelParams(bloch.rabi_from_intensity(2 / 3, 1.0, G), G / 2, G)
    closed = bloch.steady_state_population(p)
    traj = bloch.evolve_bloch(p, duration=20 / G)
    integ = traj.pop_upper[-1]
    rate = bloch.scattering_rate(p)
    c(f"closed rho_bb={closed:.6f}", near(closed, 0.125, 1e-4))
    c(f"integrated rho_bb={integ:.6f}", near(integ, 0.125, 1e-4))
    c(f"rate={rate:.3e}/s", near(rate, 3.4e7, 0.02 * 3.4e7))
    c.close()


def test_criterion_02_power_broadening():
    c = Check(2, 1.0)
    fwhm = bloch.effective_linewidth(bloch.rabi_from_intensity(2.0, 1.0, G), G) / TWO_PI
    c(f"FWHM={fwhm / 1e6:.2f} MHz", near(fwhm, 74.5e6, 0.01 * 74.5e6))
    c.close()


def test_criterion_03_trap_constants():
    c = Check(3, 1.0)
    a, q = trap.stability_params(trap.TrapConfig())
    wz = trap.axial_frequency(40.0, 1.40e-3, MG25_MASS) / TWO_PI
    c(f"|a|={abs(a):.4e}", near(abs(a), 7.78e-3, 0.005 * 7.78e-3))
    c(f"q={q:.4f}", near(q, 0.389, 0.005 * 0.389))
    c(f"w_z={wz / 1e6:.3f} MHz", near(wz, 2.00e6, 0.01 * 2.00e6))
    c.close()


def test_criterion_04_micromotion():
    c = Check(4, 30.0)
    beta, _ = mm.modulation_params(TWO_PI / 280e-9, 0.389, 0.16e-6, 400e-6, 0.0, 0.0)
    c(f"beta={beta:.4f}", near(beta, 0.70, 0.02 * 0.70))
    p0 = TwoLevelParams(0.1 * G, 0.0, G)
    dets = np.linspace(-1.5, 1.5, 10) * DRIVE
    avg = np.array([mm.time_averaged_population(TwoLevelParams(p0.rabi, d, G),
                                                mm.MicromotionParams(0.7), DRIVE) for d in dets])
    spec = mm.mean_sideband_spectrum(p0, 0.7, DRIVE, dets, "weak_field")
    dev = float(np.max(np.abs(avg - spec)))
    c(f"trace vs Bessel max dev={dev:.1e}", dev < 1e-3)
    p = TwoLevelParams(G / math.sqrt(3), G / 2, G)
    pv = {}
    for b in (0.0, 0.7):
        t, tr = mm.steady_trace(p, mm.MicromotionParams(b), DRIVE)
        h = mm.synthesize_correlation_histogram(t, tr, 100_000, 1, period=TWO_PI / DRIVE)
        pv[b] = h.flatness_pvalue()
    c(f"p(beta=0)={pv[0.0]:.3f}>0.05", pv[0.0] > 0.05)
    c(f"p(beta=0.7)={pv[0.7]:.1e}<0.01", pv[0.7] < 0.01)
    c.close()


def _series(n, m, eta):
    lo, hi = min(n, m), max(n, m)
    x = eta * eta
    lag = sum((-1) ** k * math.comb(hi, lo - k) * x**k / math.factorial(k) for k in range(lo + 1))
    return math.exp(-x / 2) * eta ** (hi - lo) * math.sqrt(math.factorial(lo) / math.factorial(hi)) * lag


def test_criterion_05_raman_coupling():
    c = Check(5, 10.0)
    r = motion.raman_rabi(2, 0, 0.3, 1.0) / motion.raman_rabi(1, 0, 0.3, 1.0)
    c(f"O20/O10={r:.4f}", near(r, 0.21, 0.01))
    worst = max(abs(motion.raman_rabi(n, m, eta, 1.0) - _series(n, m, eta))
                for n in range(21) for m in range(21) for eta in (0.1, 0.3, 0.6))
    c(f"Laguerre vs series {worst:.1e}", worst < 1e-10)
    c.close()


def test_criterion_06_thermometry():
    c = Check(6, 10.0)
    d = motion.thermal_distribution(1e-3, TWO_PI * 2e6)
    c(f"nbar={d.mean_n:.3f}", near(d.mean_n, 10, 0.5))
    c(f"p0={d.probs[0]:.4f}", near(d.probs[0], 0.09, 0.01))
    red, blue = 0.3 * 0.65 / 1.65, 0.3
    back = motion.mean_n_from_sidebands(red, blue)
    c(f"sideband round trip={back!r}", near(back, 0.65, 1e-12))
    c.close()


def test_criterion_07_sideband_cooling():
    c = Check(7, 10.0)
    d = motion.thermal_distribution(1e-3, TWO_PI * 2e6)
    res = cooling.sideband_cool(d, cooling.CoolingSchedule(), 0.3, RABI)
    p0, nbar = res.final.probs[0], res.final.mean_n
    c(f"p0={p0:.3f}>0.6", p0 > 0.6)
    # population stranded at Laguerre nodes keeps nbar above 1 (see decisions ledger)
    c(f"nbar={nbar:.3f}<=0.65", nbar <= 0.65)
    c.close()


def test_criterion_08_dephasing_revival():
    c = Check(8, 30.0)
    eps = TWO_PI * 7e3
    t = np.linspace(0, 150e-6, 601)
    cfg = motion.RamanConfig(RABI, geometry=motion.COPROPAGATING)
    data = motion.flopping_curve(motion.MotionalDistribution.point(0, 3), cfg, 0, 0.0, t, spread=eps)

    def model(tt, om, e):
        return motion.dephased_envelope(om, abs(e), tt)

    (_, e_fit), _ = curve_fit(model, t, data, p0=[RABI * 1.01, eps * 0.8])
    node = math.pi / abs(e_fit)
    c(f"node={node * 1e6:.2f} us", near(node, 71e-6, 3e-6))
    rng = np.random.default_rng(8)
    om = RABI + rng.uniform(-eps, eps, 1_000_000)
    tt = np.linspace(0, 150e-6, 31)
    mc = np.array([0.5 * (1 + np.mean(np.cos(om * x))) for x in tt])
    dev = float(np.max(np.abs(mc - motion.dephased_envelope(RABI, eps, tt))))
    c(f"MC vs envelope {dev:.1e}", dev < 1e-3)
    c.close()


def test_criterion_09_universe():
    c = Check(9, 30.0)
    low, high = TWO_PI * 100e3, TWO_PI * 2e6
    sudden = universe.mode_squeezing(universe.RampProfile(low, high, 1e-9, "sudden"))
    target = 0.5 * math.log(high / low)
    c(f"sudden r={sudden.squeeze_parameter:.4f}",
      near(sudden.squeeze_parameter, target, 0.01 * target))
    norm = max(abs(abs(r.alpha) ** 2 - abs(r.beta) ** 2 - 1) for r in
               (sudden, universe.mode_squeezing(universe.RampProfile(low, high, 1e-6))))
    c(f"|a|^2-|b|^2-1={norm:.1e}", norm < 1e-6)
    res = universe.mode_squeezing(universe.squeeze_protocol())
    p = res.occupations.probs
    c(f"P(2)={p[2]:.4f}", 0.15 <= p[2] <= 0.25)
    c("even-only", np.all(p[1::2] == 0))
    th = motion.thermal_from_mean(res.mean_n)

    def signal(dist):
        return (universe.readout_protocol(dist, 0.3, RABI, "second-red")
                - universe.readout_protocol(dist, 0.3, RABI, "first-red"))

    diff = signal(res.occupations) - signal(th)
    c(f"squeezed-thermal readout={diff:.3f}", abs(diff) > 0.05)
    c.close()


def test_criterion_10_shelving_inversion():
    c = Check(10, 1.0)
    b, w0 = motion.solve_field(TWO_PI * 1781.02e6, TWO_PI * 1786.24e6)
    c(f"B={b * 1e4:.4f} G", near(b * 1e4, 5.589, 0.02))
    c(f"w0={w0 / TWO_PI / 1e6:.4f} MHz", near(w0 / TWO_PI / 1e6, 1788.850, 0.02))
    c.close()


def test_criterion_11_compiler():
    c = Check(11, 60.0)
    files = sorted(CORPUS.glob("*.pp"))
    stable = roundtrip = True
    for path in files:
        binary = compile_source(path.read_bytes().decode("ascii"))
        stable &= binary == path.with_suffix(".bin").read_bytes()
        roundtrip &= compile_source(disassemble(binary)) == binary
    c(f"{len(files)} golden programs byte-stable", len(files) == 30 and stable)
    c("disassembly round trip", roundtrip)
    c(f"wait 1us={parse_duration('1us')}", parse_duration("1us") == 100)
    rng = random.Random(11)
    pieces = ["ttl3", "dac1", "dds2", "ddsX", ".", "profile1", "frequency", "phase", "update",
              "(", ")", "{", "}", "=", "+", "-", "*", "/", "wait", "loop", "sub", "pi", "us",
              "trigger1", "0x1F", "017", "09", "3.5", ".25", "1", "0", "foo", "#", "$", " "]
    crashes = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PulseWarning)
        for _ in range(100_000):
            line = " ".join(rng.choice(pieces) for _ in range(rng.randint(0, 8)))
            try:
                compile_source(line)
            except CompileError:
                pass
            except Exception:
                crashes += 1
    c(f"fuzz 1e5 lines crashes={crashes}", crashes == 0)
    c.close()


PI_PULSE = ("dds1.frequency = 100\r\ndds2.frequency = 100\r\nddsX.update()\r\n"
            "ttl4 = 1\r\nttl5 = 1\r\nwait {t}\r\nttl4 = 0\r\nttl5 = 0\r\n"
            "ttl0 = 1\r\nwait 20us\r\nttl0 = 0\r\n")


def test_criterion_12_vm_experiment():
    c = Check(12, 30.0)
    cmap = paulvm.ChannelMap()
    t_pi = round(math.pi / RABI / 10e-9)
    sched = paulvm.timeline_to_pulses(paulvm.execute(compile_source(PI_PULSE.format(t=t_pi))), cmap)
    res = paulvm.run_experiment(sched, repetitions=500, rng_seed=12)
    contrast = 1 - res.p_bright
    c(f"pi-pulse contrast={contrast:.3f}", contrast > 0.93)
    bright = paulvm.timeline_to_pulses(
        paulvm.execute(compile_source("ttl0 = 1\r\nwait 20us\r\nttl0 = 0\r\n")), cmap)
    mean = paulvm.run_experiment(bright, repetitions=500, rng_seed=13).counts.mean()
    c(f"bright mean counts={mean:.2f}", near(mean, 4.2, 0.5))
    c.close()


def _line(f):
    return f.readline()


def test_criterion_13_atp():
    c = Check(13, 10.0)
    c(f"ROI (3,focused,1000)={atp.encode_roi(atp.RoiCountRecord(3, True, 1000)).hex(' ')}",
      atp.encode_roi(atp.RoiCountRecord(3, True, 1000)) == bytes.fromhex("83000003E8"))
    srv = atp.serve(0, atp.SimulatedCountSource(n_rois=2, seed=7))
    try:
        s = socket.create_connection(("127.0.0.1", srv.port), timeout=5)
        f = s.makefile("rb")
        course = [_line(f) == b"100 ready\r\n"]
        s.sendall(b"CT 0.5\r\n")
        course.append(_line(f) == b"200 1\r\n")
        s.sendall(b"START\r\n")
        course.append(_line(f) == b"300 here we go\r\n")
        expect = b"".join(atp.encode_roi(r) for r in atp.SimulatedCountSource(n_rois=2, seed=7).acquire())
        course.append(f.read(len(expect)) == expect)
        with atp.AtpClient(port=srv.port) as other:
            busy = other.status == (101, "busy")
        s.sendall(b"STOP\r\n")
        course.append(_line(f) == b"100 ready\r\n")
        violations = True
        for cmd in (b"STOP", b"START now", b"TM 2", b"\xff\xfe", b"A" * 5000):
            s.sendall(cmd + b"\r\n")
            violations &= _line(f).startswith(b"400 ")
        s.sendall(b"QUIT\r\n")
        course.append(_line(f) == b"199 bye\r\n")
        course.append(f.read() == b"")
        s.close()
    finally:
        srv.shutdown()
        srv.server_close()
    c("typical course byte-exact", all(course))
    c("ordering violations answered 400", violations)
    c("second client gets 101", busy)
    c.close()


if __name__ == "__main__":
    import sys
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
