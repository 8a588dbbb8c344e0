"""Scan protocols: spectrum, displacement and height sweeps.

Each detection point models one measurement cycle repeated many times:
cool, probe for a fixed window, count photons.  Expected rates come
from the lineshape and the per-channel collection efficiency; sampled
counts add shot noise through per-point Poisson streams keyed by
(seed, stream index), so scans are reproducible bit for bit and
setpoints could be evaluated in any order or in parallel.

Both detection channels see the same scattering physics and differ
only by a constant efficiency and background, which keeps the
fiber-to-lens ratio of background-free expected rates exactly equal to
the stack's fiber_lens_ratio at every setpoint.
"""

from __future__ import annotations

import dataclasses
import io
import math

import numpy as np

from . import control, photonics, trap
from .errors import ConfigError
from .layout import ElectrodeLayout
from .photonics import LineshapeParams, OpticalStack
from .trap import IonSpecies, RfDrive

Z_FLOOR = 1e-9  # meters; displaced ion must stay above the plane

SCAN_KINDS = ("spectrum", "displacement", "height")
CSV_HEADER = "setpoint,expected_rate_hz,expected_counts,sampled_counts,beta,channel"


@dataclasses.dataclass(frozen=True)
class ProbeBeam:
    """Gaussian probe: saturation s0 on axis, 1/e^2 intensity waist."""

    s0: float = 0.2
    waist: float = 30e-6
    direction: tuple[float, float, float] = (
        1.0 / math.sqrt(2.0),
        1.0 / math.sqrt(2.0),
        0.0,
    )
    detuning: float = 0.0  # rad/s, used by displacement scans

    def __post_init__(self):
        if self.s0 < 0:
            raise ConfigError("probe saturation must be non-negative")
        if not self.waist > 0:
            raise ConfigError("probe waist must be positive")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not math.isclose(
            float(np.linalg.norm(d)), 1.0, rel_tol=1e-6
        ):
            raise ConfigError("probe direction must be a unit 3-vector")

    @property
    def unit(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=float)
        return d / np.linalg.norm(d)


@dataclasses.dataclass(frozen=True)
class ScanSpec:
    """One scan request: what to sweep and how long to look."""

    kind: str
    setpoints: tuple
    detect_time: float = 400e-6
    cycles: int = 4000
    cool_time: float = 4e-3  # per-cycle bookkeeping, no physics attached
    probe: ProbeBeam = ProbeBeam()
    fiber_background: float = 0.0  # counts/s
    lens_background: float = 0.0
    mc_samples: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCAN_KINDS:
            raise ConfigError(f"scan kind must be one of {SCAN_KINDS}")
        if not self.setpoints:
            raise ConfigError("scan needs at least one setpoint")
        object.__setattr__(self, "setpoints", tuple(self.setpoints))
        if not self.detect_time > 0:
            raise ConfigError("detection time must be positive")
        if self.cycles < 1:
            raise ConfigError("cycle count must be at least 1")
        if self.cool_time < 0:
            raise ConfigError("cool time must be non-negative")
        if self.fiber_background < 0 or self.lens_background < 0:
            raise ConfigError("background rates must be non-negative")
        if self.mc_samples < 1:
            raise ConfigError("need at least one collection sample")

    @property
    def exposure(self) -> float:
        return self.detect_time * self.cycles


@dataclasses.dataclass(frozen=True)
class ScanPoint:
    setpoint: object  # float, or (x, y, z) for vector displacements
    expected_rate: float  # counts/s at the detector
    expected_counts: float
    sampled_counts: int
    beta: float
    saturation: float


@dataclasses.dataclass(frozen=True)
class ScanResult:
    channel: str
    efficiency: float
    background_rate: float
    points: tuple[ScanPoint, ...]
    spec: ScanSpec


def sample_counts(expected: float, seed: int, index: int) -> int:
    """Deterministic Poisson draw from the (seed, index) stream."""
    if expected < 0:
        raise ConfigError("expected counts must be non-negative")
    rng = np.random.Generator(np.random.Philox(key=[seed, index]))
    return int(rng.poisson(expected))


def _channel_efficiencies(stack: OpticalStack, height: float, spec: ScanSpec):
    got = photonics.collection_mc(
        stack, height, (0.0, 0.0), spec.mc_samples, spec.seed
    )
    fiber = got.fraction * photonics.loss_chain(stack)
    lens = photonics.cone_fraction(stack.lens_na)
    return fiber, lens


def _build_results(spec, entries, fiber_eff, lens_eff) -> dict[str, ScanResult]:
    """entries: (setpoint, scattering rate, beta, saturation) per point."""
    channels = (
        ("fiber", fiber_eff, spec.fiber_background),
        ("lens", lens_eff, spec.lens_background),
    )
    out = {}
    for chan_idx, (name, eff, bg) in enumerate(channels):
        points = []
        for i, (setpoint, rate, beta, sat) in enumerate(entries):
            detected = rate * eff + bg
            expected = detected * spec.exposure
            sampled = sample_counts(expected, spec.seed, 2 * i + chan_idx)
            points.append(
                ScanPoint(setpoint, detected, expected, sampled, beta, sat)
            )
        out[name] = ScanResult(name, eff, bg, tuple(points), spec)
    return out


def spectrum_scan(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    stack: OpticalStack,
    spec: ScanSpec,
) -> dict[str, ScanResult]:
    """Sweep the probe detuning with the ion parked on the rf null."""
    if spec.kind != "spectrum":
        raise ConfigError("spectrum_scan needs a spec of kind 'spectrum'")
    null = trap.find_rf_null(layout, drive)
    fiber_eff, lens_eff = _channel_efficiencies(stack, float(null[2]), spec)
    mm = control.micromotion_amplitude(
        layout, drive, species, null, probe_direction=spec.probe.unit
    )
    entries = []
    for delta in spec.setpoints:
        params = LineshapeParams(
            gamma=species.linewidth,
            s=spec.probe.s0,
            delta=float(delta),
            beta=mm.modulation_index,
            omega_rf=drive.omega_rf,
        )
        rate = photonics.scattering_rate(params)
        entries.append((float(delta), rate, mm.modulation_index, spec.probe.s0))
    return _build_results(spec, entries, fiber_eff, lens_eff)


def displacement_scan(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    stack: OpticalStack,
    spec: ScanSpec,
    shim_direction=None,
) -> dict[str, ScanResult]:
    """Push the ion off the null and watch fluorescence respond.

    Scalar setpoints are displacements (meters) along shim_direction;
    3-vector setpoints are used as given.  Two effects act at once: the
    ion samples the probe's Gaussian intensity profile, and the rf
    field away from the null phase-modulates the scattered light.
    """
    if spec.kind != "displacement":
        raise ConfigError("displacement_scan needs a spec of kind 'displacement'")
    axis = None
    if shim_direction is not None:
        axis = np.asarray(shim_direction, dtype=float)
        norm = float(np.linalg.norm(axis))
        if axis.shape != (3,) or not math.isclose(norm, 1.0, rel_tol=1e-6):
            raise ConfigError("shim direction must be a unit 3-vector")
        axis /= norm

    null = trap.find_rf_null(layout, drive)
    fiber_eff, lens_eff = _channel_efficiencies(stack, float(null[2]), spec)
    beam = spec.probe.unit

    entries = []
    for raw in spec.setpoints:
        if np.isscalar(raw):
            if axis is None:
                raise ConfigError(
                    "scalar displacement setpoints need a shim direction"
                )
            disp = float(raw) * axis
            setpoint = float(raw)
        else:
            disp = np.asarray(raw, dtype=float)
            if disp.shape != (3,):
                raise ConfigError("displacement setpoints must be scalars or 3-vectors")
            setpoint = tuple(float(x) for x in disp)
        pos = null + disp
        if pos[2] < Z_FLOOR:
            raise ConfigError("displacement puts the ion at or below the surface")
        # beam axis runs through the null; only the transverse offset matters
        transverse = disp - beam * float(disp @ beam)
        rho2 = float(transverse @ transverse)
        sat = spec.probe.s0 * math.exp(-2.0 * rho2 / spec.probe.waist**2)
        mm = control.micromotion_amplitude(
            layout, drive, species, pos, probe_direction=beam
        )
        params = LineshapeParams(
            gamma=species.linewidth,
            s=sat,
            delta=spec.probe.detuning,
            beta=mm.modulation_index,
            omega_rf=drive.omega_rf,
        )
        entries.append(
            (setpoint, photonics.scattering_rate(params), mm.modulation_index, sat)
        )
    return _build_results(spec, entries, fiber_eff, lens_eff)


@dataclasses.dataclass(frozen=True)
class HeightPoint:
    alpha: float
    height: float
    fraction: float
    std_error: float
    net_efficiency: float


def height_scan(
    layout: ElectrodeLayout,
    drive_template: RfDrive,
    species: IonSpecies,
    stack: OpticalStack,
    alphas,
    mc_samples: int = 200_000,
    seed: int = 0,
) -> tuple[HeightPoint, ...]:
    """Collection efficiency along the ring-balance height curve."""
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ConfigError("height scan needs at least one ring balance value")
    if any(a < 0 or a > 1 for a in alphas):
        raise ConfigError("ring balance values must lie in [0, 1]")
    points = []
    guess = None
    for alpha in alphas:
        drive = drive_template.replace_alpha(alpha)
        null = trap.find_rf_null(layout, drive, guess=guess)
        guess = null
        height = float(null[2])
        got = photonics.collection_mc(stack, height, (0.0, 0.0), mc_samples, seed)
        points.append(
            HeightPoint(
                alpha,
                height,
                got.fraction,
                got.std_error,
                got.fraction * photonics.loss_chain(stack),
            )
        )
    return tuple(points)


# ---------------------------------------------------------------------------
# serialization


def _format_setpoint(setpoint) -> str:
    if isinstance(setpoint, tuple):
        return ";".join(repr(float(x)) for x in setpoint)
    return repr(float(setpoint))


def write_scan_csv(results: dict[str, ScanResult]) -> str:
    """Fixed-order CSV of both channels; stable bytes for a given scan."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for name in ("fiber", "lens"):
        if name not in results:
            continue
        for p in results[name].points:
            buf.write(
                f"{_format_setpoint(p.setpoint)},{p.expected_rate!r},"
                f"{p.expected_counts!r},{p.sampled_counts},{p.beta!r},{name}\n"
            )
    return buf.getvalue()


def scan_document(results: dict[str, ScanResult]) -> dict:
    """JSON-ready mirror of the scan results, metadata included."""
    any_result = next(iter(results.values()))
    spec = any_result.spec
    return {
        "kind": spec.kind,
        "detect_time_s": spec.detect_time,
        "cycles": spec.cycles,
        "cool_time_s": spec.cool_time,
        "exposure_s": spec.exposure,
        "seed": spec.seed,
        "probe": {
            "s0": spec.probe.s0,
            "waist_m": spec.probe.waist,
            "direction": list(spec.probe.unit),
            "detuning_rad_s": spec.probe.detuning,
        },
        "channels": {
            name: {
                "efficiency": res.efficiency,
                "background_rate_hz": res.background_rate,
                "points": [
                    {
                        "setpoint": list(p.setpoint)
                        if isinstance(p.setpoint, tuple)
                        else p.setpoint,
                        "expected_rate_hz": p.expected_rate,
                        "expected_counts": p.expected_counts,
                        "sampled_counts": p.sampled_counts,
                        "beta": p.beta,
                        "saturation": p.saturation,
                    }
                    for p in res.points
                ],
            }
            for name, res in results.items()
        },
    }
