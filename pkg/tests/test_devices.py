import numpy as np
import pytest
from hypothesis import given, strategies as st

from dwmmc import devices as dv
from dwmmc.errors import NonMonotoneCalibration

NS = 1e-9


def lin(v=0.1, D=0.01, **kw):
    # slopes given per ns
    return dv.CalibrationTable.linear(v / NS, D / NS, **kw)


def test_sigma_min_values():
    assert dv.sigma_min_for_bits(3) == pytest.approx(0.25 / 6)
    assert dv.sigma_min_for_bits(4) == pytest.approx(0.125 / 6)
    assert dv.sigma_min_for_bits(60) < 1e-17
    with pytest.raises(ValueError):
        dv.sigma_min_for_bits(0)


@given(st.integers(1, 40))
def test_sigma_min_halves_per_bit(b):
    assert dv.sigma_min_for_bits(b + 1) == pytest.approx(dv.sigma_min_for_bits(b) / 2, rel=1e-12)


def test_linear_inverse_examples():
    t = lin()
    assert t.mean_to_width(0.0) == 0.0
    assert t.mean_to_width(0.2) == pytest.approx(2 * NS, rel=1e-12)
    t2 = lin(D=0.01, T_min=0.5 * NS)
    assert t2.var_to_width(0.04) == pytest.approx(4 * NS, rel=1e-12)
    assert t2.var_to_width(0.0) == 0.5 * NS


@given(st.floats(0.0, 10.0))
def test_round_trips_linear(y):
    t = lin()
    assert t.mean(t.mean_to_width(y)) == pytest.approx(y, rel=1e-12, abs=1e-15)
    assert t.var(t.var_to_width_unclamped(y)) == pytest.approx(y, rel=1e-12, abs=1e-15)


def table_piecewise():
    T = np.array([5, 10, 20, 40]) * NS
    return dv.CalibrationTable(T, np.array([0.05, 0.09, 0.2, 0.35]),
                               np.array([1e-3, 1.5e-3, 3e-3, 7e-3]))


@given(st.floats(0.0, 0.5))
def test_round_trips_table(y):
    t = table_piecewise()
    assert t.mean(t.mean_to_width(y)) == pytest.approx(y, rel=1e-9, abs=1e-14)


def test_table_interpolates_and_extrapolates():
    t = table_piecewise()
    assert t.mean(7.5 * NS) == pytest.approx(0.07)
    assert t.mean(0.0) == 0.0
    # linear continuation of the last segment
    assert t.mean(60 * NS) == pytest.approx(0.35 + 0.15 / 20 * 20)
    assert t.mean_to_width(0.5) == pytest.approx(60 * NS)


@pytest.mark.parametrize("T,mu,var", [
    ([1, 2], [0.2, 0.1], [1, 2]),
    ([2, 1], [0.1, 0.2], [1, 2]),
    ([1, 2], [0.1, 0.2], [2, 1]),
    ([1], [0.1], [1]),
])
def test_non_monotone_rejected(T, mu, var):
    with pytest.raises(NonMonotoneCalibration):
        dv.CalibrationTable(np.array(T) * NS, np.array(mu), np.array(var) * 1e-3)


def test_noiseless_table_allowed():
    t = lin(D=0.0)
    assert t.noiseless and t.var(3 * NS) == 0.0


def test_with_precision_sets_tmin():
    t = lin()
    b = 4
    t4 = t.with_precision(b)
    assert t4.var(t4.T_min) == pytest.approx(dv.sigma_min_for_bits(b) ** 2, rel=1e-12)
    assert t.with_precision(32).T_min == 0.0
    tm = [t.with_precision(k).T_min for k in range(3, 12)]
    assert all(a > b for a, b in zip(tm, tm[1:]))


def test_save_load_round_trip(tmp_path):
    t = table_piecewise().with_T_min(2 * NS)
    p = tmp_path / "cal.csv"
    t.save(p)
    assert p.read_text().splitlines()[0] == "T_ns,dmu,dvar"
    u = dv.CalibrationTable.load(p)
    np.testing.assert_allclose(u.T, t.T, rtol=1e-15)
    np.testing.assert_array_equal(u.dmu, t.dmu)
    assert u.T_min == pytest.approx(t.T_min) and u.fit_mode == t.fit_mode


def test_build_calibration_merges_polarities():
    rows = [(5 * NS, 100e-9, 20e-9), (5 * NS, -120e-9, 30e-9),
            (10 * NS, 210e-9, 30e-9), (10 * NS, -190e-9, 40e-9)]
    t = dv.build_calibration(rows, scale=1e6)
    assert t.dmu[0] == pytest.approx(0.11)
    assert t.dvar[1] == pytest.approx((0.03 ** 2 + 0.04 ** 2) / 2)
    tl = dv.build_calibration(rows, scale=1e6, fit_mode=dv.LINEAR)
    assert tl.is_linear
    # least squares through the origin
    T = np.array([5, 10]) * NS
    mu = np.array([0.11, 0.2])
    assert tl.v == pytest.approx(T @ mu / (T @ T))


def test_filamentary_monotone_and_coupled():
    m = dv.FilamentaryModel()
    I = np.linspace(*m.I_range, 50)
    assert np.all(np.diff(m.mu_of_I(I)) > 0)
    assert np.all(np.diff(m.sigma_of_I(I)) < 0)
    assert m.coupled
    # 3 sigma at the low end exceeds a fifth of the range
    assert 3 * m.sigma_of_I(m.I_range[0]) > m.span / 5


def test_filamentary_program_examples():
    m = dv.FilamentaryModel()
    rng = np.random.default_rng(0)
    hi = dv.filamentary_program(np.full(1000, m.I_range[1]), m, rng)
    assert np.all(hi > m.g_range[1] - 0.2)
    z = dv.FilamentaryModel(sigma_low=0.0, sigma_high=0.0)
    assert dv.filamentary_program(110.0, z, rng) == pytest.approx(z.mu_of_I(110.0))
    draws = dv.filamentary_program(np.full(10_000, 110.0), m, rng)
    assert np.std(draws) == pytest.approx(m.sigma_of_I(110.0), rel=0.05)
    with pytest.raises(ValueError):
        dv.filamentary_program(500.0, m, rng)


def test_current_for_inverse():
    m = dv.FilamentaryModel()
    g = np.linspace(*m.g_range, 11)
    np.testing.assert_allclose(m.mu_of_I(m.current_for(g)), g, rtol=1e-12)
