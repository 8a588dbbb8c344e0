"""Fluorescence lineshape and fiber light-collection model.

The scattering side is a saturated two-level atom whose drive is phase
modulated by micromotion: the carrier splits into sidebands at
multiples of the rf frequency with Bessel weights J_n(beta)^2.  The
collection side is ray optics through a tapered hole onto a recessed
fiber face: a photon is counted if it clears the hole rim, the widened
taper rim at the recess plane, lands on the core, and arrives within
the fiber's acceptance cone.  Losses after the fiber are a flat
multiplicative chain.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import constants
from scipy.special import jv

from .errors import ConfigError

SIDEBAND_WEIGHT_TOL = 1e-6
MC_CHUNK = 1 << 19

EMISSION_PATTERNS = ("isotropic", "dipole")


@dataclasses.dataclass(frozen=True)
class LineshapeParams:
    """Inputs of the sideband-broadened scattering rate."""

    gamma: float  # natural linewidth, rad/s
    s: float  # saturation parameter
    delta: float  # detuning from resonance, rad/s
    beta: float = 0.0  # micromotion modulation index
    omega_rf: float = 0.0  # sideband spacing, rad/s
    background_rate: float = 0.0  # counts/s, consumed by scan protocols

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("linewidth gamma must be positive")
        if self.s < 0:
            raise ConfigError("saturation parameter must be non-negative")
        if self.beta < 0:
            raise ConfigError("modulation index must be non-negative")
        if self.beta > 0 and self.omega_rf <= 0:
            raise ConfigError("sidebands need a positive rf frequency")
        if self.background_rate < 0:
            raise ConfigError("background rate must be non-negative")


def sideband_order(beta: float) -> int:
    """Smallest N with total weight of orders |n| <= N above 1 - 1e-6."""
    if beta < 0:
        raise ConfigError("modulation index must be non-negative")
    n = 0
    target = 1.0 - SIDEBAND_WEIGHT_TOL
    cap = int(10 * beta) + 60
    while n < cap:
        orders = np.arange(-n, n + 1)
        if float(np.sum(jv(orders, beta) ** 2)) >= target:
            return n
        n += 1
    return cap


def scattering_rate(params: LineshapeParams) -> float:
    """Photons scattered per second, summed over micromotion sidebands."""
    g, s = params.gamma, params.s
    n = sideband_order(params.beta)
    orders = np.arange(-n, n + 1)
    weights = jv(orders, params.beta) ** 2
    detunings = params.delta - orders * params.omega_rf
    lorentz = s / (1.0 + s + (2.0 * detunings / g) ** 2)
    return float(0.5 * g * np.sum(weights * lorentz))


def doppler_limit(gamma: float) -> float:
    """Doppler cooling temperature hbar*gamma/(2 kB), in kelvin."""
    if not gamma > 0:
        raise ConfigError("linewidth gamma must be positive")
    return constants.hbar * gamma / (2.0 * constants.Boltzmann)


def cone_fraction(na: float) -> float:
    """Fraction of the full sphere inside a cone of the given NA."""
    if not 0.0 <= na <= 1.0:
        raise ConfigError("numerical aperture must lie in [0, 1]")
    return (1.0 - math.sqrt(1.0 - na * na)) / 2.0


@dataclasses.dataclass(frozen=True)
class LossElement:
    name: str
    transmission: float


# filter and detector coupling are stated figures; the remaining bulk
# loss is modeled as four uncoated silica surfaces
DEFAULT_LOSSES = (
    LossElement("uv_filter", 0.90),
    LossElement("surface_1", 0.96),
    LossElement("surface_2", 0.96),
    LossElement("surface_3", 0.96),
    LossElement("surface_4", 0.96),
)


@dataclasses.dataclass(frozen=True)
class OpticalStack:
    """Geometry and losses of the through-substrate collection path.

    z = 0 is the electrode surface; the ion sits at positive z over the
    hole, the fiber face at z = -recess_depth.  The taper widens the
    hole going down, so its limiting rim at the recess plane has radius
    hole_radius + recess_depth * tan(taper half-angle).
    """

    hole_radius: float = 25e-6
    hole_taper_half_angle: float = 30.0  # degrees
    recess_depth: float = 50e-6
    core_radius: float = 110e-6
    fiber_na: float = 0.37
    loss_elements: tuple[LossElement, ...] = DEFAULT_LOSSES
    pmt_coupling: float = 0.75
    lens_na: float = 0.5
    emission_pattern: str = "isotropic"

    def __post_init__(self):
        if not self.hole_radius > 0 or not self.core_radius > 0:
            raise ConfigError("aperture radii must be positive")
        if self.recess_depth < 0:
            raise ConfigError("recess depth must be non-negative")
        if not 0.0 <= self.hole_taper_half_angle < 90.0:
            raise ConfigError("taper half-angle must lie in [0, 90) degrees")
        for na in (self.fiber_na, self.lens_na):
            if not 0.0 < na <= 1.0:
                raise ConfigError("numerical aperture must lie in (0, 1]")
        if not 0.0 <= self.pmt_coupling <= 1.0:
            raise ConfigError("detector coupling must lie in [0, 1]")
        for el in self.loss_elements:
            if not 0.0 <= el.transmission <= 1.0:
                raise ConfigError(f"transmission of {el.name!r} must lie in [0, 1]")
        if self.emission_pattern not in EMISSION_PATTERNS:
            raise ConfigError(
                f"emission pattern must be one of {EMISSION_PATTERNS}"
            )

    @property
    def taper_rim_radius(self) -> float:
        return self.hole_radius + self.recess_depth * math.tan(
            math.radians(self.hole_taper_half_angle)
        )

    def subtended_na(self, ion_height: float) -> float:
        """NA of the top rim as seen from the ion; diagnostic only."""
        if not ion_height > 0:
            raise ConfigError("ion height must be positive")
        return math.sin(math.atan(self.hole_radius / ion_height))


@dataclasses.dataclass(frozen=True)
class CollectionResult:
    fraction: float
    std_error: float
    n_samples: int
    collected: int


def _emission_cosines(rng: np.random.Generator, n: int, pattern: str):
    """Direction cosines for n rays; two uniforms per sample, in order."""
    u = rng.random((n, 2))
    if pattern == "dipole":
        # inverse CDF of the sin^2 pattern about the vertical axis
        c = 2.0 * np.cos(np.arccos(1.0 - 2.0 * u[:, 0]) / 3.0 - 2.0 * np.pi / 3.0)
        c = np.clip(c, -1.0, 1.0)
    else:
        c = 1.0 - 2.0 * u[:, 0]
    phi = 2.0 * np.pi * u[:, 1]
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    return np.cos(phi) * sin_t, np.sin(phi) * sin_t, c


def collection_mc(
    stack: OpticalStack,
    ion_height: float,
    lateral_offset=(0.0, 0.0),
    n_samples: int = 100_000,
    seed: int = 0,
) -> CollectionResult:
    """Fraction of total emission reaching the fiber within its NA.

    Rays are traced from the ion through the hole rim (z = 0), the
    taper rim and the core edge (both at z = -recess_depth), then
    filtered by the acceptance angle.  Counter-based streams keyed by
    the seed make the result a pure function of (inputs, seed), and
    shared draws across stacks mean shrinking any aperture can only
    remove accepted rays.
    """
    if not ion_height > 0:
        raise ConfigError("ion height must be positive")
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    off_x, off_y = (float(lateral_offset[0]), float(lateral_offset[1]))

    rng = np.random.Generator(np.random.Philox(key=seed))
    cos_cap = math.sqrt(1.0 - stack.fiber_na**2)
    taper_r = stack.taper_rim_radius
    z_face = ion_height + stack.recess_depth

    collected = 0
    remaining = n_samples
    while remaining:
        m = min(remaining, MC_CHUNK)
        dx, dy, dz = _emission_cosines(rng, m, stack.emission_pattern)
        down = dz < 0.0
        # slopes toward the surface; rays going up never reach it
        sx = np.where(down, dx / np.where(down, -dz, 1.0), np.inf)
        sy = np.where(down, dy / np.where(down, -dz, 1.0), np.inf)
        r_hole = np.hypot(off_x + ion_height * sx, off_y + ion_height * sy)
        r_face = np.hypot(off_x + z_face * sx, off_y + z_face * sy)
        ok = (
            down
            & (r_hole <= stack.hole_radius)
            & (r_face <= taper_r)
            & (r_face <= stack.core_radius)
            & (-dz >= cos_cap)
        )
        collected += int(np.count_nonzero(ok))
        remaining -= m

    frac = collected / n_samples
    err = math.sqrt(frac * (1.0 - frac) / n_samples)
    return CollectionResult(frac, err, n_samples, collected)


def loss_chain(stack: OpticalStack) -> float:
    """Transmission of everything after the collection geometry."""
    total = stack.pmt_coupling
    for el in stack.loss_elements:
        total *= el.transmission
    return total


def net_efficiency(
    stack: OpticalStack,
    ion_height: float,
    lateral_offset=(0.0, 0.0),
    n_samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Detected fraction of total emission: geometry times loss chain."""
    got = collection_mc(stack, ion_height, lateral_offset, n_samples, seed)
    return got.fraction * loss_chain(stack)


def fiber_lens_ratio(
    stack: OpticalStack,
    ion_height: float,
    lateral_offset=(0.0, 0.0),
    n_samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Net fiber efficiency relative to a lossless lens of lens_na."""
    return net_efficiency(
        stack, ion_height, lateral_offset, n_samples, seed
    ) / cone_fraction(stack.lens_na)
