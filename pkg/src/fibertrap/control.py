"""Bounded-voltage dc control at the ion position.

Three field components at one point, set by however many dc electrodes
the layout provides, make an under- or over-determined linear system.
The two solvers here pin the freedom down deterministically:

* ``max_displacing_set`` pushes the field as hard as possible along one
  axis with zero components along the other two, voltages boxed to
  ``|V| <= bound``.  Among equally good optima it returns the
  lexicographically smallest voltage vector, so results are repeatable.
* ``stray_compensation`` cancels a given ambient field with the smallest
  possible worst-case electrode voltage, ties broken by Euclidean norm.

``micromotion_amplitude`` converts the residual rf field at a displaced
ion into a driven-motion amplitude and the phase-modulation index seen
by the probe beam.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.optimize import linprog

from . import fields, trap
from .errors import ConfigError, ConvergenceError, InfeasibleError
from .layout import ElectrodeLayout
from .trap import IonSpecies, RfDrive

DEFAULT_BOUND = 10.0  # volts

# probe beam runs diagonally in the electrode plane
PROBE_DIRECTION = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)


def _vec3(r, what: str) -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what} must be a finite 3-vector")
    return arr


@dataclasses.dataclass(frozen=True)
class ShimBasis:
    """Per-volt field response of each dc electrode at one point.

    ``matrix[:, i]`` is the field produced at the evaluation point by
    one volt on ``electrode_ids[i]``; units 1/m (V/m per volt).
    """

    electrode_ids: tuple[str, ...]
    matrix: np.ndarray  # 3 x n
    point: np.ndarray

    @property
    def n_electrodes(self) -> int:
        return len(self.electrode_ids)


@dataclasses.dataclass(frozen=True)
class VoltageSet:
    """Solved electrode voltages and the field they produce.

    ``objective`` is the value of whichever program produced the set:
    the achieved field component for a displacing set, the minimized
    worst-case |V| for a compensation set.  ``degenerate`` marks a
    displacing request along a direction the electrodes cannot reach;
    the voltages are then all zero.
    """

    voltages: dict[str, float]
    achieved_field: np.ndarray
    objective: float
    degenerate: bool = False

    def vector(self, ids: tuple[str, ...]) -> np.ndarray:
        return np.array([self.voltages[i] for i in ids])


def shim_basis(layout: ElectrodeLayout, r0) -> ShimBasis:
    """Field per volt of every dc electrode, evaluated at r0 (meters)."""
    r0 = _vec3(r0, "evaluation point")
    if r0[2] <= 0.0:
        raise ConfigError("evaluation point must lie above the electrode plane")
    dc = layout.dc_patches()
    if not dc:
        raise ConfigError("layout has no dc electrodes")
    cols = [fields.basis_field(layout, p.id, r0) for p in dc]
    mat = np.column_stack(cols)
    if not np.all(np.isfinite(mat)):
        raise ConvergenceError("field evaluation returned non-finite entries")
    return ShimBasis(tuple(p.id for p in dc), mat, r0)


def _unit(v, what: str) -> np.ndarray:
    arr = _vec3(v, what)
    norm = float(np.linalg.norm(arr))
    if not math.isclose(norm, 1.0, rel_tol=1e-6):
        raise ConfigError(f"{what} must be a unit vector")
    return arr / norm


def _complement(direction: np.ndarray) -> np.ndarray:
    # two orthonormal rows spanning the plane normal to `direction`
    k = int(np.argmin(np.abs(direction)))
    u = np.zeros(3)
    u[k] = 1.0
    u -= direction * float(direction @ u)
    u /= np.linalg.norm(u)
    return np.vstack([u, np.cross(direction, u)])


def max_displacing_set(
    basis: ShimBasis, direction, bound: float = DEFAULT_BOUND
) -> VoltageSet:
    """Largest field along ``direction`` with zero orthogonal components.

    Solves the linear program max d.(B V) subject to the two transverse
    components of B V vanishing and |V_i| <= bound, and returns an
    optimal vertex.  Ties are broken toward the lexicographically
    smallest voltage vector.  V = 0 is always feasible, so a direction
    outside the electrode span comes back with zero objective and the
    ``degenerate`` flag instead of an error.
    """
    if bound <= 0.0:
        raise ConfigError("voltage bound must be positive")
    d = _unit(direction, "direction")
    mat = basis.matrix
    n = basis.n_electrodes

    objective = mat.T @ d  # maximize objective . V
    transverse = _complement(d) @ mat  # 2 x n, rows must annihilate V
    box = [(-bound, bound)] * n

    first = linprog(
        -objective,
        A_eq=transverse,
        b_eq=np.zeros(2),
        bounds=box,
        method="highs",
    )
    if not first.success:
        raise ConvergenceError(f"displacing-set solve failed: {first.message}")
    best = -first.fun

    scale = bound * max(float(np.abs(mat).max()), 1e-300)
    if best <= 1e-9 * scale:
        return VoltageSet(
            voltages={i: 0.0 for i in basis.electrode_ids},
            achieved_field=np.zeros(3),
            objective=0.0,
            degenerate=True,
        )

    v = _lexicographic_min(objective, best, transverse, box, fallback=first.x)
    v = np.clip(v, -bound, bound)
    achieved = mat @ v
    return VoltageSet(
        voltages=dict(zip(basis.electrode_ids, (float(x) for x in v))),
        achieved_field=achieved,
        objective=float(d @ achieved),
    )


def _lexicographic_min(objective, best, transverse, box, fallback):
    """Lexicographically smallest point of the optimal face.

    Fixes the objective at its optimum, then minimizes the coordinates
    one at a time, freezing each at its minimum before moving on.  Every
    sub-problem keeps the original equalities and box, so the result is
    a vertex of the feasible region.
    """
    n = len(box)
    rows = [objective]
    rhs = [best]
    out = np.array(fallback, dtype=float)
    for j in range(n):
        pick = np.zeros(n)
        pick[j] = 1.0
        step = linprog(
            pick,
            A_eq=np.vstack([transverse, rows]),
            b_eq=np.concatenate([np.zeros(2), rhs]),
            bounds=box,
            method="highs",
        )
        if not step.success:
            return out  # keep the plain optimum if refinement stalls
        out = step.x
        rows.append(pick)
        rhs.append(step.fun)
    return out


def stray_compensation(
    basis: ShimBasis, e_stray, bound: float = DEFAULT_BOUND
) -> VoltageSet:
    """Voltages cancelling an ambient field at the basis point.

    Requires B V = -e_stray with every |V_i| <= bound.  Among feasible
    sets the worst-case voltage max|V_i| is minimized first (that value
    is the ``objective``), then the Euclidean norm.  If the field cannot
    be cancelled within the bound the error carries the smallest bound
    that would work.
    """
    if bound <= 0.0:
        raise ConfigError("voltage bound must be positive")
    e = _vec3(e_stray, "stray field")
    mat = basis.matrix
    n = basis.n_electrodes
    target = -e

    if float(np.linalg.norm(e)) == 0.0:
        return VoltageSet(
            voltages={i: 0.0 for i in basis.electrode_ids},
            achieved_field=np.zeros(3),
            objective=0.0,
        )

    # Chebyshev stage: variables (V, t), minimize t with |V_i| <= t.
    cost = np.zeros(n + 1)
    cost[n] = 1.0
    a_ub = np.zeros((2 * n, n + 1))
    for j in range(n):
        a_ub[2 * j, j] = 1.0
        a_ub[2 * j, n] = -1.0
        a_ub[2 * j + 1, j] = -1.0
        a_ub[2 * j + 1, n] = -1.0
    a_eq = np.hstack([mat, np.zeros((3, 1))])
    res = linprog(
        cost,
        A_ub=a_ub,
        b_ub=np.zeros(2 * n),
        A_eq=a_eq,
        b_eq=target,
        bounds=[(None, None)] * n + [(0.0, None)],
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleError(
            "stray field lies outside the span of the dc electrodes",
            minimal_bound=math.inf,
        )
    if not res.success:
        raise ConvergenceError(f"compensation solve failed: {res.message}")
    t_min = float(res.fun)
    if t_min > bound * (1.0 + 1e-9):
        raise InfeasibleError(
            f"compensation needs electrode voltages up to {t_min:.6g} V, "
            f"bound is {bound:g} V",
            minimal_bound=t_min,
        )
    cap = min(t_min, bound)

    v = _min_norm_capped(mat, target, cap)
    if np.linalg.norm(mat @ v - target) > 1e-6 * np.linalg.norm(e):
        v = _repin(mat, target, cap, res.x[:n])  # fall back to the lp vertex
    v = np.clip(v, -cap, cap)
    achieved = mat @ v
    return VoltageSet(
        voltages=dict(zip(basis.electrode_ids, (float(x) for x in v))),
        achieved_field=achieved,
        objective=float(np.max(np.abs(v))),
    )


def _min_norm_capped(mat, target, cap) -> np.ndarray:
    """Min-norm solution of mat v = target with |v_i| <= cap.

    Active-set iteration: solve unconstrained on the free coordinates,
    pin the worst violator at the cap, repeat.  The cap comes from the
    Chebyshev stage, so a feasible point exists by construction.
    """
    n = mat.shape[1]
    pinned: dict[int, float] = {}
    v = np.zeros(n)
    for _ in range(n + 1):
        free = [j for j in range(n) if j not in pinned]
        rhs = target.astype(float).copy()
        for j, val in pinned.items():
            rhs -= val * mat[:, j]
        v = np.zeros(n)
        if free:
            sol, *_ = np.linalg.lstsq(mat[:, free], rhs, rcond=None)
            v[free] = sol
        for j, val in pinned.items():
            v[j] = val
        excess = [(abs(v[j]) - cap, j) for j in free]
        if not excess:
            break
        worst, j_worst = max(excess)
        if worst <= cap * 1e-12:
            break
        pinned[j_worst] = math.copysign(cap, v[j_worst])
    return v


def _repin(mat, target, cap, v0) -> np.ndarray:
    """Re-solve the free coordinates of an almost-feasible vertex."""
    n = mat.shape[1]
    pinned = {
        j: math.copysign(cap, v0[j])
        for j in range(n)
        if abs(v0[j]) >= cap * (1.0 - 1e-9)
    }
    free = [j for j in range(n) if j not in pinned]
    rhs = target.astype(float).copy()
    for j, val in pinned.items():
        rhs -= val * mat[:, j]
    v = np.array(v0, dtype=float)
    for j, val in pinned.items():
        v[j] = val
    if free:
        sol, *_ = np.linalg.lstsq(mat[:, free], rhs, rcond=None)
        v[free] = sol
    return v


@dataclasses.dataclass(frozen=True)
class Micromotion:
    """Driven-motion amplitude and probe-beam modulation index."""

    amplitude: np.ndarray  # meters, vector
    modulation_index: float  # beta = |k_probe . u|

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.amplitude))


def micromotion_amplitude(
    layout: ElectrodeLayout,
    drive: RfDrive,
    species: IonSpecies,
    r,
    probe_direction=None,
) -> Micromotion:
    """Micromotion of an ion held at r, off the rf null or on it.

    The driven excursion is u = q E_rf(r) / (m omega_rf^2); the
    modulation index is its projection on the probe wavevector.  Phase
    conventions drop out: only the field amplitude enters.
    """
    r = _vec3(r, "ion position")
    if r[2] <= 0.0:
        raise ConfigError("ion position must lie above the electrode plane")
    e = trap.rf_field(layout, drive, r)
    u = species.charge * e / (species.mass * drive.omega_rf**2)
    k_dir = (
        PROBE_DIRECTION
        if probe_direction is None
        else _unit(probe_direction, "probe direction")
    )
    beta = abs(species.wavevector * float(k_dir @ u))
    return Micromotion(amplitude=u, modulation_index=beta)


def micromotion_scan_axes(
    layout: ElectrodeLayout,
    drive: RfDrive,
    r=None,
    probe_direction=None,
) -> tuple[np.ndarray, np.ndarray]:
    """In-plane displacement directions of maximal and vanishing response.

    Linearizing the rf field about r (the null when omitted), the probe
    projection of the driven motion grows fastest along the first
    returned unit vector and is flat to first order along the second.
    Both lie in the electrode plane and are orthogonal; a ring trap has
    no displacement axis that is free of response at all orders, so the
    second vector is where a linear trap's rf axis would be used.
    """
    if r is None:
        r = trap.find_rf_null(layout, drive)
    else:
        r = _vec3(r, "expansion point")
        if r[2] <= 0.0:
            raise ConfigError("expansion point must lie above the electrode plane")
    k_dir = (
        PROBE_DIRECTION
        if probe_direction is None
        else _unit(probe_direction, "probe direction")
    )
    grad = trap._rf_jacobian(layout, drive, r) @ k_dir
    v = np.array([grad[0], grad[1], 0.0])
    norm = float(np.linalg.norm(v))
    if norm <= 1e-12 * max(float(np.linalg.norm(grad)), 1.0):
        raise ConvergenceError(
            "probe response has no in-plane gradient at this point"
        )
    sensitive = v / norm
    insensitive = np.array([v[1], -v[0], 0.0]) / norm
    return sensitive, insensitive


def axis_displacing_sets(
    basis: ShimBasis, bound: float = DEFAULT_BOUND
) -> dict[str, VoltageSet]:
    """Maximal displacing sets along x, y and z; combine by addition."""
    axes = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}
    return {name: max_displacing_set(basis, d, bound) for name, d in axes.items()}
