"""Rf trapping: pseudopotential, null search, secular modes, trap depth.

The rf drive is characterised by its angular frequency, the voltage
amplitude on the inner ring, and the outer/inner amplitude ratio alpha.
Setting inner_grounded drives only the outer ring.  Static electrodes
enter through a voltage assignment; with none given they are grounded and
the confinement is purely ponderomotive.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy import constants

from . import fields
from .errors import ConfigError, ConvergenceError, SaddleSearchError, UnstableConfigurationError
from .layout import ElectrodeLayout

NULL_RESIDUAL_MAX = 1e-3  # V/m
PSEUDO_HESSIAN_STEP = 1e-8  # m
ESCAPE_RANGE = 2e-3  # m
_RESTART_HEIGHTS_UM = (10, 20, 30, 40, 50, 60, 70, 80)

AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class IonSpecies:
    """Trapped-ion identity: charge, mass, and cycling-transition data."""

    name: str
    mass: float  # kg
    charge: float  # C
    wavelength: float  # m, fluorescence transition
    linewidth: float  # rad/s, natural linewidth (gamma)

    def __post_init__(self):
        if self.mass <= 0 or self.charge == 0:
            raise ConfigError("ion species needs positive mass and non-zero charge")
        if self.wavelength <= 0 or self.linewidth <= 0:
            raise ConfigError("ion species needs positive wavelength and linewidth")

    @property
    def wavevector(self) -> float:
        return 2.0 * np.pi / self.wavelength


#: 24Mg+ with its 280 nm cycling transition (linewidth 2*pi x 40 MHz).
MG24 = IonSpecies(
    name="24Mg+",
    mass=23.985041697 * constants.atomic_mass,
    charge=constants.elementary_charge,
    wavelength=280e-9,
    linewidth=2.0 * np.pi * 40e6,
)


@dataclass(frozen=True)
class RfDrive:
    """Rf drive configuration.

    alpha scales the outer-ring amplitude relative to the inner ring;
    inner_grounded moves the full amplitude to the outer ring alone.
    """

    omega_rf: float  # rad/s
    v_inner: float  # V
    alpha: float = 0.0
    inner_grounded: bool = False

    def __post_init__(self):
        if self.omega_rf <= 0:
            raise ConfigError("rf drive frequency must be positive")
        if self.v_inner <= 0:
            raise ConfigError("rf amplitude must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")

    def amplitudes(self, layout: ElectrodeLayout) -> dict[str, float]:
        """Voltage amplitude per rf electrode id."""
        inner = layout.rf_inner()
        outer = layout.rf_outer()
        if self.inner_grounded:
            if outer is None:
                raise ConfigError("inner_grounded drive needs an rf_outer patch")
            return {outer.id: self.v_inner}
        amps = {inner.id: self.v_inner}
        if self.alpha > 0.0:
            if outer is None:
                raise ConfigError("alpha > 0 needs an rf_outer patch")
            amps[outer.id] = self.alpha * self.v_inner
        return amps

    def replace_alpha(self, alpha: float) -> "RfDrive":
        return RfDrive(self.omega_rf, self.v_inner, alpha, self.inner_grounded)


@dataclass(frozen=True)
class SecularMode:
    frequency: float  # Hz
    axis: np.ndarray  # unit vector


@dataclass(frozen=True)
class TrapSolution:
    """Solved operating point: null, modes, and well depth."""

    null: np.ndarray  # m
    residual: float  # V/m at the null
    modes: tuple[SecularMode, ...]
    depth: float  # J
    saddle: np.ndarray  # m

    @property
    def height(self) -> float:
        return float(self.null[2])

    @property
    def depth_ev(self) -> float:
        return self.depth / constants.elementary_charge

    @property
    def depth_kelvin(self) -> float:
        return self.depth / constants.Boltzmann


# ---------------------------------------------------------------------------
# rf field and pseudopotential


def rf_field(layout: ElectrodeLayout, drive: RfDrive, r) -> np.ndarray:
    """Rf field amplitude vector (V/m) at r."""
    return fields.field(layout, drive.amplitudes(layout), r)


def _rf_jacobian(layout: ElectrodeLayout, drive: RfDrive, r) -> np.ndarray:
    """d(E_rf)_i / d(x_j); symmetric since E is a gradient field."""
    return -fields.hessian(layout, drive.amplitudes(layout), r)


def pseudopotential(
    layout: ElectrodeLayout, drive: RfDrive, species: IonSpecies, r
) -> float | np.ndarray:
    """Ponderomotive energy q^2 |E_rf|^2 / (4 m omega_rf^2) in joules."""
    e = rf_field(layout, drive, r)
    mag2 = np.sum(np.atleast_2d(e) ** 2, axis=-1)
    scale = species.charge**2 / (4.0 * species.mass * drive.omega_rf**2)
    out = scale * mag2
    return float(out[0]) if np.asarray(r).ndim == 1 else out


def _pseudo_scale(drive: RfDrive, species: IonSpecies) -> float:
    return species.charge**2 / (4.0 * species.mass * drive.omega_rf**2)


# ---------------------------------------------------------------------------
# rf null search


def _centroid_si(layout: ElectrodeLayout) -> np.ndarray:
    """Area centroid of the rf_inner electrode in metres (z = 0)."""
    patch = layout.rf_inner()
    total_area = 0.0
    acc = np.zeros(2)
    for ring in patch.rings:
        v = np.asarray(ring.vertices)
        x, y = v[:, 0], v[:, 1]
        xr, yr = np.roll(x, -1), np.roll(y, -1)
        cross = x * yr - xr * y
        area = 0.5 * np.sum(cross)
        cx = np.sum((x + xr) * cross) / 6.0
        cy = np.sum((y + yr) * cross) / 6.0
        total_area += area
        acc += (cx, cy)
    centroid = acc / total_area
    return np.array([centroid[0] * fields.UM, centroid[1] * fields.UM, 0.0])


def find_rf_null(
    layout: ElectrodeLayout, drive: RfDrive, guess=None
) -> np.ndarray:
    """Locate the point where the rf field amplitude vanishes.

    Damped Newton iteration on E_rf(r) = 0 with the field Jacobian from
    differenced hessians; restarts walk up the vertical line through the
    rf_inner centroid if a start fails to converge.
    """
    centroid = _centroid_si(layout)
    starts = []
    if guess is not None:
        starts.append(np.asarray(guess, dtype=float))
    starts.extend(centroid + np.array([0.0, 0.0, h * 1e-6]) for h in _RESTART_HEIGHTS_UM)

    best_residual = np.inf
    for start in starts:
        r, res = _newton_null(layout, drive, start)
        if r is not None:
            return r
        best_residual = min(best_residual, res)
    raise ConvergenceError(
        f"rf null search did not reach |E| < {NULL_RESIDUAL_MAX:g} V/m "
        f"from any start (best residual {best_residual:.3g} V/m)",
        residual=best_residual,
    )


def _newton_null(layout, drive, start, max_iter=60, step_cap=2e-5):
    r = start.copy()
    if r[2] <= fields.Z_MIN:
        return None, np.inf
    e = rf_field(layout, drive, r)
    res = np.linalg.norm(e)
    for _ in range(max_iter):
        if res < NULL_RESIDUAL_MAX:
            return r, res
        jac = _rf_jacobian(layout, drive, r)
        try:
            step = np.linalg.solve(jac, -e)
        except np.linalg.LinAlgError:
            return None, res
        norm = np.linalg.norm(step)
        if norm > step_cap:
            step *= step_cap / norm
        scale = 1.0
        while scale > 1e-6:
            cand = r + scale * step
            if cand[2] > fields.Z_MIN:
                e_cand = rf_field(layout, drive, cand)
                res_cand = np.linalg.norm(e_cand)
                if res_cand < res:
                    r, e, res = cand, e_cand, res_cand
                    break
            scale *= 0.5
        else:
            return None, res
    return (r, res) if res < NULL_RESIDUAL_MAX else (None, res)


# ---------------------------------------------------------------------------
# secular modes


def _pseudo_hessian(layout, drive, species, r0, step=PSEUDO_HESSIAN_STEP) -> np.ndarray:
    """Hessian of the pseudopotential by central differences (J/m^2)."""
    offsets = [np.zeros(3)]
    for i in range(3):
        for s in (+1, -1):
            d = np.zeros(3)
            d[i] = s * step
            offsets.append(d)
    for i in range(3):
        for j in range(i + 1, 3):
            for si in (+1, -1):
                for sj in (+1, -1):
                    d = np.zeros(3)
                    d[i], d[j] = si * step, sj * step
                    offsets.append(d)
    pts = r0[None, :] + np.array(offsets)
    phi = pseudopotential(layout, drive, species, pts)

    hess = np.empty((3, 3))
    for i in range(3):
        hess[i, i] = (phi[1 + 2 * i] - 2.0 * phi[0] + phi[2 + 2 * i]) / step**2
    k = 7
    for i in range(3):
        for j in range(i + 1, 3):
            pp, pm, mp, mm = phi[k : k + 4]
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4.0 * step**2)
            k += 4
    return hess


def total_hessian(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    r0,
    dc_voltages: dict[str, float] | None = None,
) -> np.ndarray:
    """Energy hessian (J/m^2): pseudopotential plus static contribution."""
    r0 = np.asarray(r0, dtype=float)
    hess = _pseudo_hessian(layout, drive, species, r0)
    if dc_voltages:
        hess = hess + species.charge * fields.hessian(layout, dc_voltages, r0)
    return hess


def secular_modes(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    r0,
    dc_voltages: dict[str, float] | None = None,
) -> tuple[SecularMode, SecularMode, SecularMode]:
    """Normal modes about r0, sorted by increasing frequency.

    Raises UnstableConfigurationError when any curvature is non-positive,
    naming the axis whose mode would be unstable.
    """
    hess = total_hessian(layout, drive, species, r0, dc_voltages)
    evals, evecs = np.linalg.eigh(hess)
    if evals[0] <= 0.0:
        axis_vec = np.abs(evecs[:, 0])
        axis = AXIS_NAMES[int(np.argmax(axis_vec))]
        raise UnstableConfigurationError(
            f"potential is anti-confining along the {axis} axis "
            f"(curvature {evals[0]:.3e} J/m^2)",
            axis=axis,
        )
    modes = []
    for lam, vec in zip(evals, evecs.T):
        omega = np.sqrt(lam / species.mass)
        axis = vec if vec[np.argmax(np.abs(vec))] >= 0 else -vec
        modes.append(SecularMode(frequency=omega / (2.0 * np.pi), axis=axis))
    return tuple(modes)


def principal_axis_tilt(modes) -> float:
    """Rotation (degrees) of the softest mode axis about x, from +y toward +z.

    Signed angle of the lowest-frequency principal axis projected onto
    the y-z plane, folded to (-90, 90]; eigenvector sign does not matter.
    Returns 0.0 when that axis is parallel to x and the angle is moot.
    """
    low = min(modes, key=lambda m: m.frequency)
    vy, vz = float(low.axis[1]), float(low.axis[2])
    if np.hypot(vy, vz) < 1e-9:
        return 0.0
    if vy < 0.0 or (vy == 0.0 and vz < 0.0):
        vy, vz = -vy, -vz
    return float(np.degrees(np.arctan2(vz, vy)))


# ---------------------------------------------------------------------------
# trap depth


def _pseudo_gradient(layout, drive, species, r) -> np.ndarray:
    e = rf_field(layout, drive, r)
    jac = _rf_jacobian(layout, drive, r)
    return 2.0 * _pseudo_scale(drive, species) * jac.T @ e


def trap_depth(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    null: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Well depth (J) and escape saddle position for the pure rf well.

    Marches up +z from the null until the pseudopotential turns over,
    then polishes the saddle with Newton iterations on the gradient and
    checks its signature (two confining directions, one escape direction).
    """
    null = np.asarray(null, dtype=float)
    zs = null[2] + np.arange(1.0, ESCAPE_RANGE / 1e-6) * 1e-6
    line = np.tile(null, (len(zs), 1))
    line[:, 2] = zs
    phi = pseudopotential(layout, drive, species, line)
    idx = None
    for k in range(1, len(zs) - 1):
        if phi[k] >= phi[k - 1] and phi[k] >= phi[k + 1]:
            idx = k
            break
    if idx is None:
        raise SaddleSearchError(
            f"no pseudopotential turnover within {ESCAPE_RANGE:g} m above the null"
        )

    r = line[idx].copy()
    for _ in range(60):
        grad = _pseudo_gradient(layout, drive, species, r)
        hess = _pseudo_hessian(layout, drive, species, r)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            raise SaddleSearchError("singular hessian during saddle refinement")
        norm = np.linalg.norm(step)
        if norm > 5e-6:
            step *= 5e-6 / norm
        r = r + step
        if norm < 1e-12:
            break
    evals = np.linalg.eigvalsh(_pseudo_hessian(layout, drive, species, r))
    if not (evals[0] < 0.0 < evals[1]):
        raise SaddleSearchError(
            f"stationary point near z = {r[2]:.3e} m is not an escape saddle "
            f"(curvatures {evals})"
        )
    depth = float(
        pseudopotential(layout, drive, species, r)
        - pseudopotential(layout, drive, species, null)
    )
    return depth, r


# ---------------------------------------------------------------------------
# aggregate solve and height curve


def solve_trap(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    dc_voltages: dict[str, float] | None = None,
    guess=None,
) -> TrapSolution:
    """Find the null and characterise the well around it."""
    null = find_rf_null(layout, drive, guess)
    residual = float(np.linalg.norm(rf_field(layout, drive, null)))
    modes = secular_modes(layout, drive, species, null, dc_voltages)
    depth, saddle = trap_depth(layout, drive, species, null)
    return TrapSolution(null=null, residual=residual, modes=modes, depth=depth, saddle=saddle)


def null_height_curve(
    layout: ElectrodeLayout, drive: RfDrive, alphas
) -> list[tuple[float, float]]:
    """Null height as a function of the outer/inner amplitude ratio.

    Warm-starts each solve from the previous null; heights increase with
    alpha for ring traps whose outer electrode sits beyond the inner one.
    """
    out = []
    guess = None
    for alpha in alphas:
        null = find_rf_null(layout, drive.replace_alpha(float(alpha)), guess)
        out.append((float(alpha), float(null[2])))
        guess = null
    return out
