"""Spectral calculus against closed-form oracles."""

import numpy as np
import pytest

from singular_drift.spectral import (
    GridSpec,
    SobolevIndex,
    SpectralField,
    TimeField,
    bessel_power,
    cutoff_profile,
    dyadic_cutoff,
    evaluate,
    gradient,
    heat_semigroup,
    load_field,
    load_time_field,
    lp_grid_norm,
    mollify,
    save_field,
    save_time_field,
    sobolev_norm,
)

from conftest import single_mode


# --- grid and field construction -------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(3, 64)
    with pytest.raises(ValueError):
        GridSpec(1, 48)          # not a power of two
    with pytest.raises(ValueError):
        GridSpec(1, 4)           # too small
    with pytest.raises(ValueError):
        GridSpec(1, 64, -1.0)


def test_known_coefficients_of_sine(grid64):
    x = grid64.axis_points()
    f = SpectralField.from_grid(grid64, np.sin(x)[None])
    expected = np.zeros(64, dtype=complex)
    expected[1] = -0.5j
    expected[-1] = 0.5j
    assert np.allclose(f.coeffs[0], expected, atol=1e-15)


def test_from_grid_values_roundtrip(grid64):
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((1, 64))
    f = SpectralField.from_grid(grid64, vals)
    assert np.max(np.abs(f.values() - vals)) < 1e-13


def test_constant_field(grid64):
    f = SpectralField.constant(grid64, 2.5)
    assert np.max(np.abs(f.values() - 2.5)) < 1e-14


def test_real_flag_rejects_asymmetric_coeffs(grid64):
    coeffs = np.zeros((1, 64), dtype=complex)
    coeffs[0, 1] = 1.0           # no Hermitian partner
    f = SpectralField(grid64, coeffs, real_flag=True)
    with pytest.raises(ValueError, match="imaginary residue"):
        f.values()


def test_field_arithmetic_is_linear(grid64, sine_field):
    g = 2.0 * sine_field
    h = g - sine_field
    assert np.allclose(h.coeffs, sine_field.coeffs)
    s = sine_field + sine_field
    assert np.allclose(s.coeffs, g.coeffs)


# --- multiplier operators ---------------------------------------------------------


def test_heat_semigroup_single_mode(grid64):
    # P(t) e^{ikx} = e^{-t(1+k^2/2)} e^{ikx}
    f = single_mode(grid64, 3)
    out = heat_semigroup(f, 0.7)
    assert abs(out.coeffs[0, 3] - np.exp(-0.7 * (1 + 4.5))) < 1e-15


def test_heat_semigroup_law(grid64, sine_field):
    a = heat_semigroup(heat_semigroup(sine_field, 0.3), 0.4)
    b = heat_semigroup(sine_field, 0.7)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-14
    ident = heat_semigroup(sine_field, 0.0)
    assert np.array_equal(ident.coeffs, sine_field.coeffs)
    with pytest.raises(ValueError):
        heat_semigroup(sine_field, -0.1)


def test_heat_semigroup_matches_kernel_convolution(grid64):
    # P(t) = e^{-t} * convolution with the wrapped Gaussian of variance t
    rng = np.random.default_rng(1)
    f = SpectralField.from_grid(grid64, rng.standard_normal((1, 64)))
    t = 0.25
    x = grid64.axis_points()
    kern = np.zeros(64)
    for shift in range(-40, 41):
        kern += np.exp(-((x - np.pi) + 2 * np.pi * shift) ** 2 / (2 * t))
    kern = np.roll(kern, -32) / np.sqrt(2 * np.pi * t)
    conv = grid64.spacing * np.real(
        np.fft.ifft(np.fft.fft(kern) * np.fft.fft(f.values()[0])))
    direct = heat_semigroup(f, t).values()[0]
    assert np.max(np.abs(np.exp(-t) * conv - direct)) < 1e-12


def test_bessel_power_single_mode(grid64):
    f = single_mode(grid64, 5)
    out = bessel_power(f, -0.5)
    assert abs(out.coeffs[0, 5] - (1 + 12.5) ** (-0.25)) < 1e-15


def test_bessel_power_inverse_pair(grid64, sine_field):
    back = bessel_power(bessel_power(sine_field, 0.8), -0.8)
    assert np.max(np.abs(back.coeffs - sine_field.coeffs)) < 1e-14


def test_mollify_limits(grid64, sine_field):
    near_id = mollify(sine_field, 1e6)
    assert np.max(np.abs(near_id.coeffs - sine_field.coeffs)) < 1e-9
    # heavier smoothing shrinks every nonzero mode strictly
    soft = mollify(sine_field, 1.0)
    hard = mollify(sine_field, 0.5)
    assert abs(hard.coeffs[0, 1]) < abs(soft.coeffs[0, 1]) < 0.5
    with pytest.raises(ValueError):
        mollify(sine_field, 0.0)


def test_cutoff_profile_shape():
    assert cutoff_profile(0.0) == 1.0
    assert cutoff_profile(1.0) == 1.0
    assert cutoff_profile(1.5) == 0.0
    assert cutoff_profile(2.0) == 0.0
    r = np.linspace(1.0, 1.5, 50)
    vals = cutoff_profile(r)
    assert np.all(np.diff(vals) <= 1e-15)          # monotone down
    assert 0.0 < cutoff_profile(1.25) < 1.0


def test_dyadic_cutoff_passband(grid64):
    f = single_mode(grid64, 4)
    assert np.array_equal(dyadic_cutoff(f, 2).coeffs, f.coeffs)   # 4 <= 2^2
    assert np.max(np.abs(dyadic_cutoff(f, 1).coeffs)) < 1e-15     # 4 >= 3/2*2^1


def test_gradient_closed_form(grid64):
    x = grid64.axis_points()
    f = SpectralField.from_grid(grid64, np.sin(3 * x)[None])
    g = gradient(f)
    assert np.max(np.abs(g.values()[0] - 3 * np.cos(3 * x))) < 1e-12


def test_gradient_zeroes_nyquist(grid64):
    f = single_mode(grid64, 32)           # k = -N/2 slot
    g = gradient(f)
    assert np.max(np.abs(g.coeffs)) == 0.0


def test_gradient_2d_component_order(grid64_2d):
    x = grid64_2d.axis_points()
    xx, yy = np.meshgrid(x, x, indexing="ij")
    f = SpectralField.from_grid(grid64_2d, np.sin(xx + 2 * yy)[None])
    g = gradient(f)
    assert g.components == 2
    vals = g.values()
    assert np.max(np.abs(vals[0] - np.cos(xx + 2 * yy))) < 1e-11
    assert np.max(np.abs(vals[1] - 2 * np.cos(xx + 2 * yy))) < 1e-11


# --- norms ------------------------------------------------------------------------


def test_parseval_exact(grid64):
    rng = np.random.default_rng(2)
    f = SpectralField.from_grid(grid64, rng.standard_normal((1, 64)))
    quad = np.sqrt(grid64.spacing * np.sum(f.values() ** 2))
    spec = sobolev_norm(f, SobolevIndex(0.0, 2.0))
    assert abs(quad - spec) < 1e-12 * max(quad, 1.0)


def test_sobolev_norm_analytic_sine(grid64, sine_field):
    # ||sin||_{H^s_2}^2 = 2pi * 2 * (1.5)^s * |1/2|^2 = pi (1.5)^s
    for s in (-0.25, 0.0, 1.5):
        want = np.sqrt(np.pi * 1.5 ** s)
        got = sobolev_norm(sine_field, SobolevIndex(s, 2.0))
        assert abs(got - want) < 1e-12


def test_lp_grid_norm_constant(grid64):
    f = SpectralField.constant(grid64, -3.0)
    assert abs(lp_grid_norm(f, 4.0) - 3.0 * (2 * np.pi) ** 0.25) < 1e-12
    assert abs(lp_grid_norm(f, np.inf) - 3.0) < 1e-14


def test_sobolev_norm_p2_agrees_with_quadrature(grid64):
    # the Parseval shortcut and the grid quadrature are two routes to one norm
    rng = np.random.default_rng(3)
    f = SpectralField.from_grid(grid64, rng.standard_normal((1, 64)))
    idx = SobolevIndex(-0.25, 2.0)
    direct = lp_grid_norm(bessel_power(f, -0.25), 2.0)
    assert abs(sobolev_norm(f, idx) - direct) < 1e-12


def test_sobolev_index_validation():
    with pytest.raises(ValueError):
        SobolevIndex(0.5, 1.0)


# --- pointwise evaluation ----------------------------------------------------------


def test_evaluate_closed_form_offgrid(grid64):
    x = grid64.axis_points()
    f = SpectralField.from_grid(grid64, (np.sin(x) + 0.3 * np.cos(5 * x))[None])
    pts = np.array([[0.123], [2.71], [5.5], [0.0]])
    want = np.sin(pts[:, 0]) + 0.3 * np.cos(5 * pts[:, 0])
    got = evaluate(f, pts)[:, 0]
    assert np.max(np.abs(got - want)) < 1e-12


def test_evaluate_single_point_shape(grid64, sine_field):
    out = evaluate(sine_field, np.array([1.0]))
    assert out.shape == (1,)
    assert abs(out[0] - np.sin(1.0)) < 1e-12


def test_evaluate_matches_grid_values(grid64):
    rng = np.random.default_rng(4)
    f = SpectralField.from_grid(grid64, rng.standard_normal((1, 64)))
    pts = grid64.grid_points()
    got = evaluate(f, pts)[:, 0]
    assert np.max(np.abs(got - f.values()[0])) < 1e-12


def test_evaluate_multicomponent(grid64):
    x = grid64.axis_points()
    f = SpectralField.from_grid(grid64, np.stack([np.sin(x), np.cos(2 * x)]))
    pts = np.array([[0.3], [4.0]])
    got = evaluate(f, pts)
    want = np.stack([np.sin(pts[:, 0]), np.cos(2 * pts[:, 0])], axis=1)
    assert np.max(np.abs(got - want)) < 1e-12


def test_evaluate_2d(grid64_2d):
    x = grid64_2d.axis_points()
    xx, yy = np.meshgrid(x, x, indexing="ij")
    f = SpectralField.from_grid(grid64_2d, (np.sin(xx) * np.cos(yy))[None])
    pts = np.array([[0.4, 1.1], [3.0, 0.2]])
    want = np.sin(pts[:, 0]) * np.cos(pts[:, 1])
    assert np.max(np.abs(evaluate(f, pts)[:, 0] - want)) < 1e-11


def test_evaluate_periodicity(grid64, sine_field):
    a = evaluate(sine_field, np.array([[0.7]]))
    b = evaluate(sine_field, np.array([[0.7 + 2 * np.pi]]))
    assert abs(a - b).max() < 1e-11


# --- time fields -------------------------------------------------------------------


def test_time_field_interpolation(grid64):
    f0 = SpectralField.constant(grid64, 0.0)
    f1 = SpectralField.constant(grid64, 1.0)
    tf = TimeField.from_nodes([f0, f1], 1.0)
    mid = tf.at_time(0.25, rule="linear")
    assert abs(mid.coeffs[0, 0] - 0.25) < 1e-15
    left = tf.at_time(0.25, rule="left")
    assert abs(left.coeffs[0, 0]) == 0.0
    assert abs(tf.at_time(1.0).coeffs[0, 0] - 1.0) == 0.0
    with pytest.raises(ValueError):
        tf.at_time(1.5)
    with pytest.raises(ValueError):
        tf.at_time(0.5, rule="cubic")


def test_time_field_reversal(grid64):
    nodes = [SpectralField.constant(grid64, float(m)) for m in range(4)]
    tf = TimeField.from_nodes(nodes, 1.0)
    rev = tf.reversed_time()
    for m in range(4):
        assert rev.node(m).coeffs[0, 0] == tf.node(3 - m).coeffs[0, 0]


def test_time_field_validation(grid64):
    with pytest.raises(ValueError):
        TimeField(grid64, 0.0, np.zeros((2, 1, 64), dtype=complex))
    with pytest.raises(ValueError):
        TimeField(grid64, 1.0, np.zeros((1, 1, 64), dtype=complex))


# --- snapshots ---------------------------------------------------------------------


def test_field_snapshot_roundtrip(tmp_path, grid64, sine_field):
    p = save_field(sine_field, tmp_path / "f.bin", description="test")
    back = load_field(p)
    assert back.grid == grid64
    assert np.array_equal(back.coeffs, sine_field.coeffs)
    assert back.real_flag == sine_field.real_flag


def test_time_field_snapshot_roundtrip(tmp_path, rough_drift64):
    p = save_time_field(rough_drift64, tmp_path / "b.bin",
                        extra={"tag": 7})
    back = load_time_field(p)
    assert np.array_equal(back.coeffs, rough_drift64.coeffs)
    assert back.horizon == rough_drift64.horizon
    meta = (tmp_path / "b.bin.json").read_text()
    assert '"tag": 7' in meta
