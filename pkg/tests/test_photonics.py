"""Lineshape and collection checks against closed forms.

With the ion on the stack axis every aperture is a concentric circle,
so the collected directions form a polar cap whose half-angle is the
tightest of the four limits (hole rim, taper rim, fiber core, fiber
NA).  The Monte Carlo can therefore be validated against
(1 - cos(theta_cap))/2 exactly, for any on-axis configuration, leaving
the sampler itself as the only thing under test.
"""

import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import jv

from fibertrap.errors import ConfigError
from fibertrap.photonics import (
    LineshapeParams,
    LossElement,
    OpticalStack,
    collection_mc,
    cone_fraction,
    doppler_limit,
    fiber_lens_ratio,
    loss_chain,
    net_efficiency,
    scattering_rate,
    sideband_order,
)

GAMMA = 2 * math.pi * 40e6
OMEGA_RF = 2 * math.pi * 45e6

# closed-form references, frozen from the defining expressions
RATE_RESONANT_S02 = 20943951.023931954  # (gamma/2) * 0.2/1.2 at gamma = 2pi*40MHz
DOPPLER_MG = 0.0009598486146732442  # hbar*gamma/(2 kB)
CONE_037 = 0.035484122983939326
CONE_050 = 0.0669872981077807
FRACTION_90UM = 0.01824104518502967  # top rim atan(25/90) narrower than the NA cone
DIPOLE_NA_CAP = 0.003688011202189978  # vertical-axis dipole within the NA cone
LOSS_CHAIN_DEFAULT = 0.573308928


def params(delta=0.0, s=0.2, beta=0.0):
    return LineshapeParams(
        gamma=GAMMA, s=s, delta=delta, beta=beta, omega_rf=OMEGA_RF
    )


def cap_fraction(stack, height):
    taper = stack.hole_radius + stack.recess_depth * math.tan(
        math.radians(stack.hole_taper_half_angle)
    )
    theta = min(
        math.atan(stack.hole_radius / height),
        math.atan(taper / (height + stack.recess_depth)),
        math.atan(stack.core_radius / (height + stack.recess_depth)),
        math.asin(stack.fiber_na),
    )
    return (1 - math.cos(theta)) / 2


class TestScatteringRate:
    def test_resonant_rate_at_s_point_two(self):
        assert scattering_rate(params()) == pytest.approx(RATE_RESONANT_S02, rel=1e-12)

    def test_lorentzian_fwhm_with_power_broadening(self):
        for s in (0.2, 1.0, 4.0):
            peak = scattering_rate(params(s=s))
            half = lambda d: scattering_rate(params(delta=d, s=s)) - peak / 2
            hwhm = brentq(half, 0.0, 40 * GAMMA, xtol=1e-3)
            assert 2 * hwhm == pytest.approx(GAMMA * math.sqrt(1 + s), rel=1e-6)

    def test_symmetric_in_detuning(self):
        for beta in (0.0, 0.7, 2.0):
            for d in (0.3 * GAMMA, 1.7 * GAMMA, OMEGA_RF):
                assert scattering_rate(params(delta=d, beta=beta)) == pytest.approx(
                    scattering_rate(params(delta=-d, beta=beta)), rel=1e-12
                )

    def test_micromotion_flattens_the_peak_and_grows_sidebands(self):
        flat = scattering_rate(params(beta=2.0))
        assert flat < scattering_rate(params(beta=0.0))
        on_sideband = scattering_rate(params(delta=OMEGA_RF, beta=2.0))
        off_sideband = scattering_rate(params(delta=0.5 * OMEGA_RF, beta=2.0))
        assert on_sideband > off_sideband

    def test_sideband_weight_cutoff(self):
        for beta in (0.0, 0.5, 2.0, 5.0, 10.0):
            n = sideband_order(beta)
            orders = np.arange(-n, n + 1)
            weight = float(np.sum(jv(orders, beta) ** 2))
            assert weight >= 1 - 1e-6
            if n:  # smallest such order: dropping the outermost pair breaks it
                inner = float(np.sum(jv(np.arange(-n + 1, n), beta) ** 2))
                assert inner < 1 - 1e-6

    def test_integrated_scattering_is_beta_independent(self):
        def integral(beta):
            total = 0.0
            # piecewise between sideband centers keeps quad honest
            edges = np.linspace(-40 * GAMMA, 40 * GAMMA, 81)
            for lo, hi in zip(edges[:-1], edges[1:]):
                part, _ = quad(
                    lambda d: scattering_rate(params(delta=d, beta=beta)),
                    lo,
                    hi,
                    limit=200,
                )
                total += part
            return total

        base = integral(0.0)
        for beta in (1.0, 2.0):
            assert integral(beta) == pytest.approx(base, rel=1e-3)

    def test_invalid_params_rejected(self):
        with pytest.raises(ConfigError):
            LineshapeParams(gamma=0.0, s=0.2, delta=0.0, beta=0.0, omega_rf=OMEGA_RF)
        with pytest.raises(ConfigError):
            LineshapeParams(gamma=GAMMA, s=-0.1, delta=0.0, beta=0.0, omega_rf=OMEGA_RF)
        with pytest.raises(ConfigError):
            LineshapeParams(gamma=GAMMA, s=0.2, delta=0.0, beta=-1.0, omega_rf=OMEGA_RF)


class TestDopplerLimit:
    def test_reference_species(self):
        assert doppler_limit(GAMMA) == pytest.approx(DOPPLER_MG, rel=1e-12)
        assert doppler_limit(GAMMA) == pytest.approx(0.96e-3, abs=0.01e-3)

    def test_linear_in_gamma(self):
        assert doppler_limit(2 * GAMMA) == pytest.approx(2 * doppler_limit(GAMMA))

    def test_unit_check(self):
        from scipy import constants

        gamma_one_kelvin = 2 * constants.Boltzmann / constants.hbar
        assert doppler_limit(gamma_one_kelvin) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            doppler_limit(0.0)


class TestConeFraction:
    def test_fiber_na(self):
        assert cone_fraction(0.37) == pytest.approx(CONE_037, rel=1e-12)
        assert cone_fraction(0.37) == pytest.approx(0.0355, abs=5e-4)

    def test_lens_na(self):
        assert cone_fraction(0.5) == pytest.approx(CONE_050, rel=1e-12)

    def test_limits(self):
        assert cone_fraction(1.0) == 0.5
        assert cone_fraction(0.0) == 0.0

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            cone_fraction(1.2)
        with pytest.raises(ConfigError):
            cone_fraction(-0.1)


class TestCollectionMc:
    def test_na_limited_at_operating_heights(self):
        stack = OpticalStack()
        for height in (30e-6, 50e-6):
            got = collection_mc(stack, height, n_samples=400_000, seed=3)
            assert abs(got.fraction - CONE_037) <= 3 * got.std_error

    def test_rim_limited_above_the_na_regime(self):
        got = collection_mc(OpticalStack(), 90e-6, n_samples=400_000, seed=3)
        assert abs(got.fraction - FRACTION_90UM) <= 3 * got.std_error
        assert got.fraction < 0.6 * CONE_037  # clearly not NA-limited any more

    def test_matches_cap_closed_form_for_random_on_axis_stacks(self):
        rng = np.random.default_rng(99)
        for trial in range(8):
            stack = OpticalStack(
                hole_radius=float(rng.uniform(10e-6, 60e-6)),
                hole_taper_half_angle=float(rng.uniform(0.0, 45.0)),
                recess_depth=float(rng.uniform(20e-6, 120e-6)),
                core_radius=float(rng.uniform(30e-6, 200e-6)),
                fiber_na=float(rng.uniform(0.2, 0.9)),
            )
            height = float(rng.uniform(20e-6, 150e-6))
            got = collection_mc(stack, height, n_samples=150_000, seed=trial)
            want = cap_fraction(stack, height)
            assert abs(got.fraction - want) <= 4 * max(got.std_error, 1e-4)

    def test_hemisphere_when_everything_is_open(self):
        stack = OpticalStack(
            hole_radius=1.0, core_radius=1.0, fiber_na=1.0
        )
        got = collection_mc(stack, 50e-6, n_samples=200_000, seed=5)
        assert abs(got.fraction - 0.5) <= 3 * got.std_error

    def test_small_offset_invisible_in_na_limited_regime(self):
        # NA cone footprint at the hole plane: 50 um * tan(21.7 deg) ~ 19.9 um,
        # so a 3 um offset still clears the 25 um rim and nothing changes
        stack = OpticalStack()
        centered = collection_mc(stack, 50e-6, n_samples=300_000, seed=11)
        shifted = collection_mc(
            stack, 50e-6, lateral_offset=(3e-6, -2e-6), n_samples=300_000, seed=12
        )
        assert abs(shifted.fraction - centered.fraction) <= 3 * math.hypot(
            centered.std_error, shifted.std_error
        )

    def test_large_offset_clips(self):
        stack = OpticalStack()
        centered = collection_mc(stack, 50e-6, n_samples=200_000, seed=13)
        shifted = collection_mc(
            stack, 50e-6, lateral_offset=(30e-6, 0.0), n_samples=200_000, seed=13
        )
        assert shifted.fraction < 0.8 * centered.fraction

    def test_dipole_pattern_weighted_cap(self):
        stack = OpticalStack(emission_pattern="dipole")
        got = collection_mc(stack, 50e-6, n_samples=400_000, seed=21)
        assert abs(got.fraction - DIPOLE_NA_CAP) <= 3 * max(got.std_error, 1e-5)

    def test_fixed_seed_reproduces_bitwise(self):
        stack = OpticalStack()
        a = collection_mc(stack, 50e-6, n_samples=50_000, seed=42)
        b = collection_mc(stack, 50e-6, n_samples=50_000, seed=42)
        assert a.fraction == b.fraction
        assert a.std_error == b.std_error
        c = collection_mc(stack, 50e-6, n_samples=50_000, seed=43)
        assert c.fraction != a.fraction

    def test_std_error_formula_and_scaling(self):
        stack = OpticalStack()
        small = collection_mc(stack, 50e-6, n_samples=20_000, seed=7)
        big = collection_mc(stack, 50e-6, n_samples=80_000, seed=7)
        p = small.fraction
        assert small.std_error == pytest.approx(
            math.sqrt(p * (1 - p) / 20_000), rel=1e-12
        )
        assert small.std_error / big.std_error == pytest.approx(2.0, abs=0.2)

    def test_monotone_in_apertures(self):
        base = OpticalStack()
        ref = collection_mc(base, 50e-6, n_samples=100_000, seed=17).fraction
        for change in (
            {"hole_radius": 15e-6},
            {"core_radius": 8e-6},
            {"fiber_na": 0.2},
        ):
            smaller = dataclasses.replace(base, **change)
            got = collection_mc(smaller, 50e-6, n_samples=100_000, seed=17).fraction
            assert got <= ref  # same draws, strictly fewer accepted rays

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            collection_mc(OpticalStack(), -1e-6, n_samples=100, seed=0)
        with pytest.raises(ConfigError):
            collection_mc(OpticalStack(), 50e-6, n_samples=0, seed=0)
        with pytest.raises(ConfigError):
            OpticalStack(fiber_na=1.5)
        with pytest.raises(ConfigError):
            OpticalStack(hole_radius=0.0)
        with pytest.raises(ConfigError):
            OpticalStack(loss_elements=(LossElement("bad", 1.2),))
        with pytest.raises(ConfigError):
            OpticalStack(emission_pattern="laser")

    def test_subtended_na_reporting(self):
        stack = OpticalStack()
        assert stack.subtended_na(30e-6) == pytest.approx(0.6402, abs=1e-4)
        assert stack.subtended_na(50e-6) == pytest.approx(0.4472, abs=1e-4)


class TestLossChain:
    def test_default_chain(self):
        assert loss_chain(OpticalStack()) == pytest.approx(LOSS_CHAIN_DEFAULT, rel=1e-12)
        assert loss_chain(OpticalStack()) == pytest.approx(0.58, abs=0.01)

    def test_empty_chain_unity_coupling(self):
        stack = OpticalStack(loss_elements=(), pmt_coupling=1.0)
        assert loss_chain(stack) == 1.0

    def test_dead_element_kills_everything(self):
        stack = OpticalStack(
            loss_elements=(LossElement("shutter", 0.0),), pmt_coupling=0.75
        )
        assert loss_chain(stack) == 0.0


class TestNetEfficiency:
    def test_headline_number(self):
        got = net_efficiency(OpticalStack(), 50e-6, n_samples=400_000, seed=29)
        assert got == pytest.approx(0.021, abs=0.002)

    def test_lossless_chain_equals_fraction(self):
        stack = OpticalStack(loss_elements=(), pmt_coupling=1.0)
        frac = collection_mc(stack, 50e-6, n_samples=100_000, seed=31).fraction
        assert net_efficiency(stack, 50e-6, n_samples=100_000, seed=31) == frac

    def test_closed_fiber_collects_nothing(self):
        stack = OpticalStack(fiber_na=1e-6)
        assert net_efficiency(stack, 50e-6, n_samples=50_000, seed=1) == pytest.approx(
            0.0, abs=1e-9
        )


class TestFiberLensRatio:
    def test_headline_ratio(self):
        got = fiber_lens_ratio(OpticalStack(), 50e-6, n_samples=400_000, seed=37)
        assert got == pytest.approx(0.31, abs=0.03)

    def test_equal_na_lossless_ratio_is_unity(self):
        stack = OpticalStack(
            fiber_na=0.5,
            hole_radius=1.0,
            core_radius=1.0,
            loss_elements=(),
            pmt_coupling=1.0,
            lens_na=0.5,
        )
        got = fiber_lens_ratio(stack, 50e-6, n_samples=300_000, seed=41)
        assert got == pytest.approx(1.0, abs=0.02)

    def test_hemisphere_lens_reference(self):
        stack = OpticalStack(lens_na=1.0)
        net = net_efficiency(stack, 50e-6, n_samples=100_000, seed=43)
        got = fiber_lens_ratio(stack, 50e-6, n_samples=100_000, seed=43)
        assert got == pytest.approx(net / 0.5, rel=1e-12)
