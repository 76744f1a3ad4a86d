import math

import numpy as np
import pytest

from rescross.ephemeris import (DEG, J2000_MJD, FrozenEphemeris, default_model, load_table, planet_elements,
                                write_table)
from rescross.errors import EphemerisParseError, OutOfRange
from rescross.kepler import DAYS_PER_YEAR, GAUSS_K

HEADER = "mjd,planet,a,e,i_deg,Omega_deg,omega_deg,ell_deg\n"


def _write(tmp_path, body, name="eph.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def test_two_row_table(tmp_path):
    p = _write(tmp_path, "57600,Earth,1.0,0.0167,0.0,0.0,102.9,10.0\n"
                         "57610,Earth,1.0,0.0167,0.0,0.0,102.9,19.856\n")
    tab = load_table(p)
    assert tab.planets == ("Earth",)
    assert tab.span[1] - tab.span[0] == 10.0


def test_long_table_epoch_count(tmp_path):
    model = default_model(("Earth", "Jupiter"))
    epochs = 57600.0 + 0.5 * DAYS_PER_YEAR * np.arange(4001)
    p = tmp_path / "long.csv"
    write_table(p, model, epochs)
    tab = load_table(p)
    assert tab.epochs.size == 4001
    assert tab.span[1] - tab.span[0] == pytest.approx(2000 * DAYS_PER_YEAR)
    # the mean motion recovered from the unwrapped anomalies
    assert tab.mean_motion(1) == pytest.approx(model.mean_motion(1), rel=1e-9)


def test_decreasing_epochs_rejected(tmp_path):
    p = _write(tmp_path, "57610,Earth,1,0.01,0,0,0,0\n57600,Earth,1,0.01,0,0,0,10\n")
    with pytest.raises(EphemerisParseError, match="line 3"):
        load_table(p)


def test_malformed_row_reports_line(tmp_path):
    p = _write(tmp_path, "57600,Earth,1,0.01,0,0,0,0\n57610,Earth,1,0.01,0,0\n")
    with pytest.raises(EphemerisParseError, match="line 3"):
        load_table(p)


def test_unknown_planet(tmp_path):
    p = _write(tmp_path, "57600,Vulcan,1,0.01,0,0,0,0\n")
    with pytest.raises(EphemerisParseError, match="unknown planet"):
        load_table(p)


def test_incomplete_epoch(tmp_path):
    p = _write(tmp_path, "57600,Earth,1,0.01,0,0,0,0\n57600,Mars,1.5,0.09,1.8,49,286,10\n"
                         "57610,Earth,1,0.01,0,0,0,10\n")
    with pytest.raises(EphemerisParseError, match="lacks"):
        load_table(p)


@pytest.fixture
def table(tmp_path):
    model = default_model(("Earth", "Mars"))
    epochs = J2000_MJD + 30.0 * np.arange(50)
    p = tmp_path / "t.csv"
    write_table(p, model, epochs)
    return load_table(p), model


def test_interpolation_exact_at_nodes(table):
    tab, _ = table
    for i in (0, 7, 49):
        E = planet_elements(tab, 1, tab.epochs[i])
        assert np.array_equal(np.array(E.as_tuple())[:2], tab.values[i, 1, :2])
        assert tab.unwrapped_anomaly(1, tab.epochs[i]) == tab.values[i, 1, 5]


def test_interpolation_midpoint_is_mean(table):
    tab, _ = table
    t = 0.5 * (tab.epochs[3] + tab.epochs[4])
    mid = 0.5 * (tab.values[3, 0] + tab.values[4, 0])
    assert tab.unwrapped_anomaly(0, t) == pytest.approx(mid[5], rel=1e-15)
    assert tab.elements(0, t).a == pytest.approx(mid[0], rel=1e-15)


def test_unwrapped_anomaly_continuous(table):
    tab, model = table
    t = np.linspace(tab.epochs[0], tab.epochs[-1], 4000)
    ell = np.array([tab.unwrapped_anomaly(0, x) for x in t])
    assert np.max(np.abs(np.diff(ell))) < 2 * model.mean_motion(0) * (t[1] - t[0])
    # table values follow the model up to one constant 2pi multiple
    ref = np.array([model.unwrapped_anomaly(0, x) for x in tab.epochs])
    shift = tab.values[:, 0, 5] - ref
    assert np.allclose(shift, shift[0], atol=1e-10)
    assert abs(math.remainder(shift[0], 2 * math.pi)) < 1e-10


def test_out_of_range(table):
    tab, _ = table
    with pytest.raises(OutOfRange):
        tab.elements(0, tab.epochs[-1] + 1.0)
    with pytest.raises(OutOfRange):
        tab.elements(0, tab.epochs[0] - 1e-6)


def test_model_phases_at_epoch():
    m = default_model(("Mars",))
    line = m.lines[0]
    E = m.elements(0, m.t0)
    assert E.ell == pytest.approx(line.ell0 % (2 * math.pi), abs=1e-15)
    assert E.omega == pytest.approx(line.omega0 % (2 * math.pi), abs=1e-15)
    assert E.Omega == pytest.approx(line.Omega0 % (2 * math.pi), abs=1e-15)


def test_model_mean_motion_consistency():
    m = default_model()
    for j, line in enumerate(m.lines):
        n = m.mean_motion(j)
        assert n == pytest.approx(GAUSS_K / line.a**1.5, rel=1e-10)
        dt = 1234.5
        rate = (m.unwrapped_anomaly(j, m.t0 + dt) - m.unwrapped_anomaly(j, m.t0)) / dt
        assert rate == pytest.approx(n, rel=1e-12)


def test_default_model_is_plausible():
    m = default_model()
    assert m.planets == ("Venus", "Earth", "Mars", "Jupiter", "Saturn")
    periods = [2 * math.pi / m.mean_motion(j) / DAYS_PER_YEAR for j in range(5)]
    assert periods[1] == pytest.approx(1.0, rel=1e-4)
    assert periods[3] == pytest.approx(11.86, rel=1e-3)
    assert m.elements(3, m.t0).I == pytest.approx(1.3044 * DEG, rel=1e-3)


def test_frozen_ephemeris():
    m = default_model(("Jupiter",))
    f = FrozenEphemeris(m, J2000_MJD + 100.0)
    a, b = f.elements(0, J2000_MJD + 100.0), f.elements(0, J2000_MJD + 50000.0)
    assert (a.Omega, a.omega) == (b.Omega, b.omega)
    assert f.unwrapped_anomaly(0, J2000_MJD + 100.0) == m.unwrapped_anomaly(0, J2000_MJD + 100.0)
    rate = (f.unwrapped_anomaly(0, J2000_MJD + 5000) - f.unwrapped_anomaly(0, J2000_MJD)) / 5000
    assert rate == pytest.approx(m.mean_motion(0), rel=1e-12)


def test_model_selection_and_mu():
    m = default_model().select(["earth", "Jupiter"]).with_mu(Earth=0.0)
    assert m.planets == ("Earth", "Jupiter")
    assert m.mu[0] == 0.0 and m.mu[1] > 9e-4
    with pytest.raises(KeyError):
        m.index("Pluto")
