"""Trap solver checks against on-axis closed forms for frame electrodes.

A rectangular frame (outer rectangle with a concentric rectangular hole)
has an exact on-axis potential: the solid angle of a rectangle with
half-sides a, b seen from height z above its center is
4*atan(a*b / (z*sqrt(a^2 + b^2 + z^2))).  Everything the solver reports
for such a layout (null height, secular frequencies, depth) can therefore
be checked against one-dimensional closed-form calculus, fully
independent of the polygon field kernel.
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from fibertrap import trap
from fibertrap.errors import (
    ConfigError,
    ConvergenceError,
    SaddleSearchError,
    UnstableConfigurationError,
)
from fibertrap.layout import ElectrodeLayout, ElectrodePatch, Polygon, Role
from fibertrap.trap import MG24, RfDrive

DRIVE = RfDrive(omega_rf=2 * np.pi * 45e6, v_inner=50.0)


def rect(hx, hy, hole=False):
    pts = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    if hole:
        return Polygon.make(reversed(pts), hole=True)
    return Polygon.make(pts)


def frame_patch(pid, role, hx_in, hy_in, hx_out, hy_out):
    return ElectrodePatch(pid, role, (rect(hx_out, hy_out), rect(hx_in, hy_in, hole=True)))


def square_frame_layout(a=50.0, c=100.0):
    rf = frame_patch("rf_inner", Role.RF_INNER, a, a, c, c)
    dc = ElectrodePatch("dc_center", Role.DC_CENTER, (rect(a - 2.0, a - 2.0),))
    return ElectrodeLayout(patches=(rf, dc), name="square-frame")


def rect_frame_layout(ax=60.0, ay=40.0, cx=120.0, cy=80.0):
    rf = frame_patch("rf_inner", Role.RF_INNER, ax, ay, cx, cy)
    return ElectrodeLayout(patches=(rf,), name="rect-frame")


def rect_solid_angle(hx, hy, z):
    # concentric rectangle, half-sides in metres
    return 4.0 * math.atan(hx * hy / (z * math.sqrt(hx * hx + hy * hy + z * z)))


def frame_phi(hx_in, hy_in, hx_out, hy_out):
    um = 1e-6

    def phi(z):
        return (
            rect_solid_angle(hx_out * um, hy_out * um, z)
            - rect_solid_angle(hx_in * um, hy_in * um, z)
        ) / (2.0 * math.pi)

    return phi


def d1(f, z, h=1e-10):
    return (f(z + h) - f(z - h)) / (2 * h)


def d2(f, z, h=1e-8):
    return (f(z + h) - 2 * f(z) + f(z - h)) / (h * h)


class TestNull:
    def test_on_axis_null_matches_closed_form(self):
        lay = square_frame_layout()
        phi = frame_phi(50, 50, 100, 100)
        h_ref = brentq(lambda z: d1(phi, z), 20e-6, 200e-6)
        null = trap.find_rf_null(lay, DRIVE)
        assert abs(null[0]) < 1e-9
        assert abs(null[1]) < 1e-9
        assert null[2] == pytest.approx(h_ref, rel=1e-7)

    def test_residual_below_threshold(self):
        lay = square_frame_layout()
        null = trap.find_rf_null(lay, DRIVE)
        res = np.linalg.norm(trap.rf_field(lay, DRIVE, null))
        assert res < trap.NULL_RESIDUAL_MAX

    def test_guess_speeds_same_answer(self):
        lay = square_frame_layout()
        cold = trap.find_rf_null(lay, DRIVE)
        warm = trap.find_rf_null(lay, DRIVE, guess=cold + 1e-6)
        np.testing.assert_allclose(warm, cold, atol=1e-9)

    def test_no_null_above_solid_patch(self):
        lay = ElectrodeLayout(
            patches=(ElectrodePatch("rf_inner", Role.RF_INNER, (rect(100.0, 100.0),)),)
        )
        with pytest.raises(ConvergenceError) as err:
            trap.find_rf_null(lay, DRIVE)
        assert err.value.residual > 0.0


class TestModes:
    def test_frequencies_match_closed_form(self):
        lay = square_frame_layout()
        phi = frame_phi(50, 50, 100, 100)
        h_ref = brentq(lambda z: d1(phi, z), 20e-6, 200e-6)
        curv = d2(phi, h_ref)
        # Phi(z) = s * (V phi')^2, s = q^2/(4 m O^2); at the null
        # Phi'' = 2 s V^2 phi''^2, and square symmetry puts half the axial
        # curvature magnitude in each transverse direction.
        s = MG24.charge**2 / (4 * MG24.mass * DRIVE.omega_rf**2)
        fz_ref = math.sqrt(2 * s * (DRIVE.v_inner * curv) ** 2 / MG24.mass) / (2 * math.pi)
        null = trap.find_rf_null(lay, DRIVE)
        modes = trap.secular_modes(lay, DRIVE, MG24, null)
        freqs = [m.frequency for m in modes]
        assert freqs[2] == pytest.approx(fz_ref, rel=2e-4)
        assert freqs[0] == pytest.approx(fz_ref / 2, rel=2e-4)
        assert freqs[1] == pytest.approx(fz_ref / 2, rel=2e-4)

    def test_axes_orthonormal_and_sorted(self):
        lay = rect_frame_layout()
        null = trap.find_rf_null(lay, DRIVE)
        modes = trap.secular_modes(lay, DRIVE, MG24, null)
        freqs = [m.frequency for m in modes]
        assert freqs == sorted(freqs)
        mat = np.array([m.axis for m in modes])
        np.testing.assert_allclose(mat @ mat.T, np.eye(3), atol=1e-9)

    def test_sum_rule_and_axis_alignment(self):
        # traceless rf jacobian: the two transverse frequencies add up to
        # the axial one when all curvatures share the transverse sign
        lay = rect_frame_layout()
        null = trap.find_rf_null(lay, DRIVE)
        fy, fx, fz = [m.frequency for m in trap.secular_modes(lay, DRIVE, MG24, null)]
        assert fz == pytest.approx(fx + fy, rel=1e-4)
        modes = trap.secular_modes(lay, DRIVE, MG24, null)
        assert abs(modes[2].axis[2]) > 0.9999  # stiffest mode is vertical
        for m in modes[:2]:
            assert abs(m.axis[2]) < 1e-2

    def test_unstable_point_raises_with_axis(self):
        lay = square_frame_layout()
        null = trap.find_rf_null(lay, DRIVE)
        _, saddle = trap.trap_depth(lay, DRIVE, MG24, null)
        above = saddle + np.array([0.0, 0.0, 5e-6])
        with pytest.raises(UnstableConfigurationError) as err:
            trap.secular_modes(lay, DRIVE, MG24, above)
        assert err.value.axis == "z"


class TestDepth:
    def test_depth_matches_closed_form(self):
        lay = square_frame_layout()
        phi = frame_phi(50, 50, 100, 100)
        s = MG24.charge**2 / (4 * MG24.mass * DRIVE.omega_rf**2)

        def pseudo(z):
            return s * (DRIVE.v_inner * d1(phi, z)) ** 2

        h_ref = brentq(lambda z: d1(phi, z), 20e-6, 200e-6)
        res = minimize_scalar(
            lambda z: -pseudo(z), bounds=(h_ref, 1e-3), method="bounded",
            options={"xatol": 1e-12},
        )
        depth_ref = -res.fun
        null = trap.find_rf_null(lay, DRIVE)
        depth, saddle = trap.trap_depth(lay, DRIVE, MG24, null)
        assert depth == pytest.approx(depth_ref, rel=1e-5)
        assert saddle[2] == pytest.approx(res.x, rel=1e-4)
        assert abs(saddle[0]) < 1e-8
        assert abs(saddle[1]) < 1e-8

    def test_saddle_above_null(self):
        lay = square_frame_layout()
        sol = trap.solve_trap(lay, DRIVE, MG24)
        assert sol.saddle[2] > sol.null[2]
        assert sol.depth > 0.0

    def test_no_turnover_raises(self):
        # a bare frame with a huge outer edge keeps the field falling
        # so slowly that no saddle shows up below the march ceiling
        lay = ElectrodeLayout(
            patches=(ElectrodePatch("rf_inner", Role.RF_INNER, (rect(120.0, 120.0),)),)
        )
        with pytest.raises((SaddleSearchError, ConvergenceError)):
            null = trap.find_rf_null(lay, DRIVE)
            trap.trap_depth(lay, DRIVE, MG24, null)


class TestScaling:
    def test_amplitude_and_frequency_scaling(self):
        lay = square_frame_layout()
        base = trap.solve_trap(lay, DRIVE, MG24)
        doubled_v = trap.solve_trap(lay, RfDrive(DRIVE.omega_rf, 2 * DRIVE.v_inner), MG24)
        np.testing.assert_allclose(doubled_v.null, base.null, atol=1e-9)
        for m0, m1 in zip(base.modes, doubled_v.modes):
            assert m1.frequency == pytest.approx(2 * m0.frequency, rel=1e-3)
        assert doubled_v.depth == pytest.approx(4 * base.depth, rel=1e-3)

        doubled_o = trap.solve_trap(lay, RfDrive(2 * DRIVE.omega_rf, DRIVE.v_inner), MG24)
        np.testing.assert_allclose(doubled_o.null, base.null, atol=1e-9)
        for m0, m1 in zip(base.modes, doubled_o.modes):
            assert m1.frequency == pytest.approx(m0.frequency / 2, rel=1e-3)
        assert doubled_o.depth == pytest.approx(base.depth / 4, rel=1e-3)

    def test_pseudopotential_zero_at_null(self):
        lay = square_frame_layout()
        null = trap.find_rf_null(lay, DRIVE)
        val = trap.pseudopotential(lay, DRIVE, MG24, null)
        scale = trap.pseudopotential(lay, DRIVE, MG24, null + np.array([0, 0, 20e-6]))
        assert val < 1e-12 * scale


class TestCurve:
    def two_ring_layout(self):
        rf_in = frame_patch("rf_inner", Role.RF_INNER, 40.0, 40.0, 70.0, 70.0)
        rf_out = frame_patch("rf_outer", Role.RF_OUTER, 90.0, 90.0, 200.0, 200.0)
        return ElectrodeLayout(patches=(rf_in, rf_out), name="two-ring")

    def test_height_monotone_in_alpha(self):
        lay = self.two_ring_layout()
        curve = trap.null_height_curve(lay, DRIVE, np.linspace(0, 1, 5))
        heights = [h for _, h in curve]
        assert all(b > a for a, b in zip(heights, heights[1:]))

    def test_curve_endpoints_match_direct_solves(self):
        lay = self.two_ring_layout()
        curve = trap.null_height_curve(lay, DRIVE, [0.0, 1.0])
        lo = trap.find_rf_null(lay, DRIVE.replace_alpha(0.0))
        hi = trap.find_rf_null(lay, DRIVE.replace_alpha(1.0))
        assert curve[0][1] == pytest.approx(lo[2], abs=1e-9)
        assert curve[1][1] == pytest.approx(hi[2], abs=1e-9)

    def test_outer_only_sits_highest(self):
        lay = self.two_ring_layout()
        both = trap.find_rf_null(lay, DRIVE.replace_alpha(1.0))
        outer = trap.find_rf_null(
            lay, RfDrive(DRIVE.omega_rf, DRIVE.v_inner, inner_grounded=True), guess=both
        )
        assert outer[2] > both[2]


class TestConfig:
    def test_drive_validation(self):
        with pytest.raises(ConfigError):
            RfDrive(omega_rf=0.0, v_inner=50.0)
        with pytest.raises(ConfigError):
            RfDrive(omega_rf=1e8, v_inner=-1.0)
        with pytest.raises(ConfigError):
            RfDrive(omega_rf=1e8, v_inner=50.0, alpha=1.5)

    def test_amplitude_maps(self):
        lay = TestCurve().two_ring_layout()
        assert DRIVE.amplitudes(lay) == {"rf_inner": 50.0}
        assert DRIVE.replace_alpha(0.5).amplitudes(lay) == {
            "rf_inner": 50.0,
            "rf_outer": 25.0,
        }
        grounded = RfDrive(DRIVE.omega_rf, 50.0, inner_grounded=True)
        assert grounded.amplitudes(lay) == {"rf_outer": 50.0}

    def test_alpha_without_outer_ring(self):
        lay = square_frame_layout()
        with pytest.raises(ConfigError):
            DRIVE.replace_alpha(0.5).amplitudes(lay)

    def test_species_validation(self):
        with pytest.raises(ConfigError):
            trap.IonSpecies("x", mass=-1.0, charge=1.6e-19, wavelength=3e-7, linewidth=1e8)
        with pytest.raises(ConfigError):
            trap.IonSpecies("x", mass=4e-26, charge=0.0, wavelength=3e-7, linewidth=1e8)

    def test_solution_views(self):
        lay = square_frame_layout()
        sol = trap.solve_trap(lay, DRIVE, MG24)
        assert sol.depth_kelvin == pytest.approx(sol.depth / 1.380649e-23, rel=1e-12)
        assert sol.depth_ev == pytest.approx(sol.depth / 1.602176634e-19, rel=1e-12)
        assert sol.height == sol.null[2]
        assert sol.residual < trap.NULL_RESIDUAL_MAX


class TestPrincipalTilt:
    @staticmethod
    def synth(freqs, axes):
        return tuple(
            trap.SecularMode(frequency=f, axis=np.asarray(a, dtype=float))
            for f, a in zip(freqs, axes)
        )

    def test_axis_aligned_modes_have_zero_tilt(self):
        modes = self.synth(
            [1e6, 2e6, 3e6], [[0, 1, 0], [1, 0, 0], [0, 0, 1]]
        )
        assert trap.principal_axis_tilt(modes) == 0.0

    def test_rotated_soft_axis_reads_back_exactly(self):
        ang = math.radians(17.0)
        soft = [0.0, math.cos(ang), math.sin(ang)]
        modes = self.synth([1.1e6, 4e6, 9e6], [soft, [1, 0, 0], [0, 0, 1]])
        assert trap.principal_axis_tilt(modes) == pytest.approx(17.0, abs=1e-12)
        flipped = self.synth(
            [1.1e6, 4e6, 9e6], [[-v for v in soft], [1, 0, 0], [0, 0, 1]]
        )
        assert trap.principal_axis_tilt(flipped) == pytest.approx(17.0, abs=1e-12)

    def test_negative_rotation_keeps_sign(self):
        ang = math.radians(-31.0)
        modes = self.synth(
            [5e5, 2e6, 3e6],
            [[0.0, math.cos(ang), math.sin(ang)], [1, 0, 0], [0, 0, 1]],
        )
        assert trap.principal_axis_tilt(modes) == pytest.approx(-31.0, abs=1e-12)

    def test_soft_axis_along_x_is_degenerate(self):
        modes = self.synth(
            [1e6, 2e6, 3e6], [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
        )
        assert trap.principal_axis_tilt(modes) == 0.0

    def test_rect_frame_soft_axis_stays_in_plane(self):
        # mirror symmetries of the rectangular frame force principal axes
        # onto the coordinate directions, so any tilt is numerical noise
        sol = trap.solve_trap(rect_frame_layout(), DRIVE, MG24)
        assert abs(trap.principal_axis_tilt(sol.modes)) < 1e-3
