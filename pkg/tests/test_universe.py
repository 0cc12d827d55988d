import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionlab import motion, universe
from ionlab.constants import TWO_PI

LOW, HIGH = TWO_PI * 100e3, TWO_PI * 2e6


def test_sudden_limit_matches_closed_form():
    res = universe.mode_squeezing(universe.RampProfile(LOW, HIGH, 1e-9, "sudden"))
    assert res.squeeze_parameter == pytest.approx(0.5 * math.log(20), rel=0.01)
    assert universe.sudden_squeeze(LOW, HIGH) == pytest.approx(0.5 * math.log(20))


def test_bogoliubov_normalisation():
    for ramp in (universe.RampProfile(LOW, HIGH, 1e-6), universe.RampProfile(HIGH, LOW, 3e-6)):
        res = universe.mode_squeezing(ramp)
        assert abs(res.alpha) ** 2 - abs(res.beta) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_adiabatic_ramp_stays_in_ground_state():
    res = universe.mode_squeezing(universe.RampProfile(LOW, HIGH, 100 / LOW, "smooth-step"))
    assert res.occupations.probs[0] > 0.99


def test_protocol_populates_n2():
    res = universe.mode_squeezing(universe.squeeze_protocol())
    p = res.occupations.probs
    assert 0.15 <= p[2] <= 0.25
    assert np.all(p[1::2] == 0)
    assert p.sum() == pytest.approx(1.0)


def test_squeezed_probabilities():
    r = 0.8
    p = universe.squeezed_probabilities(r, 200)
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    n = np.arange(201)
    assert (n * p).sum() == pytest.approx(math.sinh(r) ** 2, rel=1e-9)
    assert p[2] == pytest.approx(0.5 * math.tanh(r) ** 2 / math.cosh(r))


@given(st.floats(0.0, 5.0))
def test_squeezed_occupations_mean(nbar):
    d = universe.squeezed_occupations(nbar)
    assert d.mean_n == pytest.approx(nbar, rel=1e-6, abs=1e-12)
    assert np.all(d.probs[1::2] == 0)


def test_readout_discriminates_squeezed_from_thermal():
    sq = universe.squeezed_occupations(2.0)
    th = motion.thermal_from_mean(2.0)
    rabi = TWO_PI * 202e3

    def signal(d):
        return (universe.readout_protocol(d, 0.3, rabi, "second-red")
                - universe.readout_protocol(d, 0.3, rabi, "first-red"))

    assert abs(signal(sq) - signal(th)) > 0.05


def test_readout_on_fock_states():
    rabi = TWO_PI * 202e3
    n2 = motion.MotionalDistribution.point(2, 10)
    n0 = motion.MotionalDistribution.point(0, 10)
    assert universe.readout_protocol(n2, 0.3, rabi, "second-red") == pytest.approx(1.0)
    assert universe.readout_protocol(n0, 0.3, rabi, "second-red") == pytest.approx(0.0)
    with pytest.raises(ValueError):
        universe.readout_protocol(n0, 0.3, rabi, "third-red")


def test_scale_factor_adiabatic_limit():
    ramp = universe.RampProfile(HIGH, HIGH / 2, 20e-6, "smooth-step")
    _, b = universe.scale_factor(ramp, 20e-6, 5e-9)
    # equilibrium of w^2 b = w0^2 / b^2
    assert b[-1] == pytest.approx(2 ** (2 / 3), rel=1e-3)


def test_scale_factor_flags_coarse_steps():
    ramp = universe.RampProfile(LOW, HIGH, 1e-6)
    with pytest.raises(universe.AccuracyError):
        universe.scale_factor(ramp, 1e-6, 1e-9)


def test_mode_coupling_changes_result():
    ramp = universe.RampProfile(LOW, HIGH, 1e-6)
    a = universe.mode_squeezing(ramp).squeeze_parameter
    b = universe.mode_squeezing(ramp, mode_coupling=LOW).squeeze_parameter
    assert a != b


def test_invalid_ramps():
    with pytest.raises(ValueError):
        universe.RampProfile(0.0, HIGH)
    with pytest.raises(ValueError):
        universe.RampProfile(LOW, HIGH, -1.0)
    with pytest.raises(ValueError):
        universe.RampProfile(LOW, HIGH, 1e-6, "cubic")


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-7, 1e-5))
def test_linear_ramps_never_exceed_sudden(rise):
    r = universe.mode_squeezing(universe.RampProfile(LOW, HIGH, rise)).squeeze_parameter
    assert r <= universe.sudden_squeeze(LOW, HIGH) + 1e-3


def test_report_csv_roundtrip(tmp_path):
    res = universe.mode_squeezing(universe.RampProfile(LOW, HIGH, 1e-6))
    universe.write_report_csv(tmp_path / "u.csv", res)
    r, nbar, probs = universe.read_report_csv(tmp_path / "u.csv")
    assert r == res.squeeze_parameter and nbar == res.mean_n
    assert np.array_equal(probs, res.occupations.probs)
