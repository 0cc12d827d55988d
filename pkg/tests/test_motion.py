import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionlab import motion
from ionlab.constants import MG25_MASS, TWO_PI

RABI = TWO_PI * 202e3


def brute_rabi(n, m, eta):
    """Series form of the Laguerre matrix element, summed term by term."""
    lo, hi = min(n, m), max(n, m)
    d = hi - lo
    x = eta * eta
    lag = sum((-1) ** k * math.comb(hi, lo - k) * x**k / math.factorial(k) for k in range(lo + 1))
    ratio = math.sqrt(math.factorial(lo) / math.factorial(hi))
    return math.exp(-x / 2) * eta**d * ratio * lag


def test_second_to_first_sideband_ratio():
    r = motion.raman_rabi(2, 0, 0.3, 1.0) / motion.raman_rabi(1, 0, 0.3, 1.0)
    assert r == pytest.approx(0.21, abs=0.01)
    # closed form eta/sqrt(2) for the n = 0 ladder
    assert r == pytest.approx(0.3 / math.sqrt(2), rel=1e-12)


def test_laguerre_against_series():
    worst = 0.0
    for n in range(21):
        for m in range(max(0, n - 2), n + 3):
            for eta in (0.05, 0.3, 0.7):
                got = motion.raman_rabi(n, m, eta, 1.0)
                worst = max(worst, abs(got - brute_rabi(n, m, eta)))
    assert worst < 1e-10


@given(st.integers(0, 60), st.integers(0, 60), st.floats(0.0, 1.0))
def test_rabi_symmetric_and_bounded(n, m, eta):
    a = motion.raman_rabi(n, m, eta, 1.0)
    assert a == pytest.approx(motion.raman_rabi(m, n, eta, 1.0), abs=1e-12)
    assert abs(a) <= 1.0 + 1e-12


def test_zero_eta_only_carrier():
    assert motion.raman_rabi(3, 3, 0.0, 2.0) == 2.0
    assert motion.raman_rabi(3, 4, 0.0, 2.0) == 0.0


def test_thermal_state_at_one_millikelvin():
    d = motion.thermal_distribution(1e-3, TWO_PI * 2e6)
    assert d.mean_n == pytest.approx(10, rel=0.05)
    assert d.probs[0] == pytest.approx(0.09, abs=0.01)
    assert d.n_max >= 100
    assert motion.thermal_mean_n(1e-3, TWO_PI * 2e6) == pytest.approx(d.mean_n, rel=1e-3)


@given(st.floats(0.01, 30))
def test_thermal_from_mean(nbar):
    assert motion.thermal_from_mean(nbar).mean_n == pytest.approx(nbar, rel=1e-6)


def test_sideband_ratio_roundtrip():
    nbar = 0.65
    blue = 0.3
    red = blue * nbar / (1 + nbar)
    assert motion.mean_n_from_sidebands(red, blue) == pytest.approx(nbar, rel=1e-12)
    with pytest.raises(ValueError):
        motion.mean_n_from_sidebands(0.3, 0.3)


def test_weak_sideband_thermometry_of_thermal_state():
    # short, weak pulses: red/blue depth ratio = nbar/(nbar+1)
    d = motion.thermal_from_mean(0.65, 200)
    cfg = motion.RamanConfig(RABI, 0.01)
    t = [1e-6]
    red = 1 - motion.flopping_curve(d, cfg, -1, 0.0, t)[0]
    blue = 1 - motion.flopping_curve(d, cfg, 1, 0.0, t)[0]
    assert motion.mean_n_from_sidebands(red, blue) == pytest.approx(0.65, rel=1e-3)


def test_distribution_validation():
    with pytest.raises(ValueError):
        motion.MotionalDistribution(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        motion.MotionalDistribution(np.array([1.2, -0.2]))
    d = motion.MotionalDistribution.point(3, 10)
    assert d.mean_n == 3 and d.padded(20).n_max == 20


def test_carrier_pi_pulse_on_ground_state():
    d = motion.MotionalDistribution.point(0, 5)
    cfg = motion.RamanConfig(RABI, 0.3, geometry=motion.COPROPAGATING)
    t_pi = math.pi / RABI
    assert motion.flopping_curve(d, cfg, 0, 0.0, [t_pi])[0] == pytest.approx(0.0, abs=1e-12)


def test_red_sideband_dark_for_ground_state():
    d = motion.MotionalDistribution.point(0, 5)
    cfg = motion.RamanConfig(RABI, 0.3)
    p = motion.flopping_curve(d, cfg, -1, 0.0, np.linspace(0, 50e-6, 20))
    assert np.allclose(p, 1.0)


def test_frequency_scan_dips():
    d = motion.thermal_from_mean(15)
    cfg = motion.RamanConfig(RABI, 0.3)
    axial = TWO_PI * 2e6
    det = np.linspace(-3e6, 3e6, 601) * TWO_PI
    p = motion.frequency_scan(d, cfg, math.pi / RABI, det, axial)
    depth = 1 - p
    from scipy.signal import find_peaks
    peaks, _ = find_peaks(depth, prominence=0.05)
    pos = det[peaks] / TWO_PI
    assert np.allclose(pos, [-2e6, 0, 2e6], atol=2e4)
    assert np.all((p >= 0) & (p <= 1))


def test_dephasing_node_and_monte_carlo():
    eps = TWO_PI * 7e3
    t = np.linspace(0, 150e-6, 61)
    rng = np.random.default_rng(0)
    om = RABI + rng.uniform(-eps, eps, 400_000)
    mc = np.array([0.5 * (1 + np.mean(np.cos(om * tt))) for tt in t])
    assert np.max(np.abs(mc - motion.dephased_envelope(RABI, eps, t))) < 1e-3
    assert math.pi / eps == pytest.approx(71e-6, abs=3e-6)


def test_spread_quadrature_matches_envelope():
    eps = TWO_PI * 7e3
    d = motion.MotionalDistribution.point(0, 3)
    cfg = motion.RamanConfig(RABI, geometry=motion.COPROPAGATING)
    t = np.linspace(0, 150e-6, 301)
    p = motion.flopping_curve(d, cfg, 0, 0.0, t, spread=eps)
    assert np.max(np.abs(p - motion.dephased_envelope(RABI, eps, t))) < 1e-6


def test_shelving_inversion():
    b, w0 = motion.solve_field(TWO_PI * 1781.02e6, TWO_PI * 1786.24e6)
    assert b * 1e4 == pytest.approx(5.589, abs=0.02)
    assert w0 / TWO_PI / 1e6 == pytest.approx(1788.850, abs=0.02)
    cfg = motion.ZeemanConfig(b, w0)
    assert motion.shelving_frequencies(cfg, 1) / TWO_PI / 1e6 == pytest.approx(1781.02, abs=1e-6)
    with pytest.raises(motion.SingularSystemError):
        motion.solve_field(1.0, 1.0)


@settings(deadline=None)
@given(st.floats(1e-5, 1e-2), st.floats(1e9, 1e10))
def test_shelving_roundtrip(field, w0):
    cfg = motion.ZeemanConfig(field, w0)
    b, w = motion.solve_field(motion.shelving_frequencies(cfg, 1), motion.shelving_frequencies(cfg, 2))
    assert b == pytest.approx(field, rel=1e-6)
    assert w == pytest.approx(w0, rel=1e-9)


def test_lamb_dicke_orthogonal_beams():
    k = math.sqrt(2) * TWO_PI / 280e-9
    eta = motion.lamb_dicke(k, MG25_MASS, TWO_PI * 2e6)
    assert 0.2 < eta < 0.4


def test_copropagating_ignores_eta():
    assert motion.RamanConfig(RABI, 0.3, geometry=motion.COPROPAGATING).eta == 0.0


def test_scan_csv_roundtrip(tmp_path):
    x = np.linspace(0, 1, 11)
    y = np.sin(x) ** 2 / 3
    motion.write_scan_csv(tmp_path / "s.csv", "duration", x, y)
    kind, x2, y2 = motion.read_scan_csv(tmp_path / "s.csv")
    assert kind == "duration" and np.array_equal(x, x2) and np.array_equal(y, y2)
