"""Basis potentials and fields of planar electrode layouts.

Model: the electrode plane z = 0 is a perfect conductor; holding one patch
at 1 V with everything else grounded gives a potential above the plane
equal to the solid angle the patch subtends at the observation point,
divided by 2*pi.  This ignores inter-electrode gaps, which is accurate to
order (gap width / ion height).

Conventions
-----------
* Observation points are SI metres, shape (3,) or (n, 3), z > 0 required.
* Layout coordinates are micrometres and converted here.
* Basis potentials are dimensionless (per volt of electrode drive),
  fields are 1/m, hessians 1/m^2.
* Solid angles are computed per boundary ring by a fan of signed triangle
  solid angles (two-argument arctangent form), so counter-clockwise outer
  rings contribute positively and clockwise holes subtract on their own.
* The field is the closed-form boundary line integral of the same rings
  (finite-segment form), evaluated edge by edge; no differencing.
* Hessians are symmetrized central differences of the closed-form field
  with step max(1 nm, 1e-4 * z).
"""

from __future__ import annotations

import weakref

import numpy as np

from .errors import FieldEvaluationError
from .layout import ElectrodeLayout, Polygon

Z_MIN = 1e-9  # m; below this the gapless model is not meaningful
EDGE_CLEARANCE = 1e-9  # m; field diverges on electrode edges
UM = 1e-6

_compiled_cache: "weakref.WeakKeyDictionary[ElectrodeLayout, dict]" = (
    weakref.WeakKeyDictionary()
)


def _as_points(r) -> tuple[np.ndarray, bool]:
    pts = np.asarray(r, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError("positions must have three components")
    if not np.all(np.isfinite(pts)):
        raise FieldEvaluationError("non-finite evaluation point")
    if np.any(pts[:, 2] <= Z_MIN):
        raise FieldEvaluationError(
            f"evaluation requires z > {Z_MIN:g} m above the electrode plane"
        )
    return pts, single


def _ring_vertices_si(ring: Polygon) -> np.ndarray:
    v = np.asarray(ring.vertices, dtype=float) * UM
    return np.column_stack([v, np.zeros(len(v))])


def _compiled(layout: ElectrodeLayout) -> dict[str, list[np.ndarray]]:
    rings = _compiled_cache.get(layout)
    if rings is None:
        rings = {p.id: [_ring_vertices_si(r) for r in p.rings] for p in layout.patches}
        _compiled_cache[layout] = rings
    return rings


# ---------------------------------------------------------------------------
# ring kernels


def _ring_solid_angle(verts: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Signed solid angle of one ring, (n_pts,).

    Positive when the ring winds counter-clockwise seen from +z.  Fan
    decomposition from the first vertex; each triangle uses the signed
    two-argument arctangent form, so the sum is exact for any simple
    polygon regardless of convexity.
    """
    rel = verts[None, :, :] - pts[:, None, :]  # (m, n, 3)
    norms = np.linalg.norm(rel, axis=-1)
    r1, n1 = rel[:, :1, :], norms[:, :1]
    r2, n2 = rel[:, 1:-1, :], norms[:, 1:-1]
    r3, n3 = rel[:, 2:, :], norms[:, 2:]
    numer = np.sum(r1 * np.cross(r2, r3), axis=-1)
    denom = (
        n1 * n2 * n3
        + np.sum(r1 * r2, axis=-1) * n3
        + np.sum(r2 * r3, axis=-1) * n1
        + np.sum(r3 * r1, axis=-1) * n2
    )
    return -2.0 * np.sum(np.arctan2(numer, denom), axis=-1)


def _ring_field(verts: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Field contribution -grad(solid angle)/(2*pi) of one ring, (n_pts, 3).

    Per edge the closed form (a x b)(|a| + |b|) / (|a||b|(|a||b| + a.b))
    with a, b the vectors from the observation point to the edge ends,
    traversed in ring order.
    """
    a = verts[None, :, :] - pts[:, None, :]  # (m, n, 3)
    b = np.roll(a, -1, axis=1)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    prod = na * nb
    denom = prod * (prod + np.sum(a * b, axis=-1))
    if np.any(denom <= 0.0):
        raise FieldEvaluationError("evaluation point lies on an electrode edge")
    w = (na + nb) / denom
    contrib = np.sum(np.cross(a, b) * w[..., None], axis=1)
    return contrib / (2.0 * np.pi)


def _min_edge_distance(verts: np.ndarray, pts: np.ndarray) -> np.ndarray:
    a = verts[None, :, :] - pts[:, None, :]
    edge = np.roll(verts, -1, axis=0) - verts  # (n, 3)
    ee = np.sum(edge * edge, axis=-1)  # (n,)
    t = -np.sum(a * edge[None, :, :], axis=-1) / ee[None, :]
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * edge[None, :, :]
    return np.min(np.linalg.norm(closest, axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# public single-polygon operation


def solid_angle(polygon: Polygon, r) -> float | np.ndarray:
    """Unsigned solid angle (steradians) a planar polygon subtends at r.

    The polygon lies in z = 0 with vertices in micrometres; r is metres
    with z > 0.  Result is in [0, 2*pi).
    """
    pts, single = _as_points(r)
    if len(polygon.vertices) < 3:
        raise ValueError("polygon needs at least three vertices")
    if polygon.signed_area() == 0.0:
        raise ValueError("degenerate polygon: zero area")
    omega = np.abs(_ring_solid_angle(_ring_vertices_si(polygon), pts))
    return float(omega[0]) if single else omega


# ---------------------------------------------------------------------------
# basis quantities per electrode


def basis_potential(layout: ElectrodeLayout, electrode_id: str, r) -> float | np.ndarray:
    """Potential per volt on one electrode, everything else grounded."""
    pts, single = _as_points(r)
    rings = _compiled(layout)[_checked_id(layout, electrode_id)]
    phi = np.zeros(len(pts))
    for verts in rings:
        phi += _ring_solid_angle(verts, pts)
    phi /= 2.0 * np.pi
    return float(phi[0]) if single else phi


def basis_field(layout: ElectrodeLayout, electrode_id: str, r) -> np.ndarray:
    """Electric field (1/m times electrode voltage), closed form."""
    pts, single = _as_points(r)
    rings = _compiled(layout)[_checked_id(layout, electrode_id)]
    out = np.zeros((len(pts), 3))
    for verts in rings:
        if np.any(_min_edge_distance(verts, pts) < EDGE_CLEARANCE):
            raise FieldEvaluationError(
                f"point within {EDGE_CLEARANCE:g} m of an edge of {electrode_id!r}"
            )
        out += _ring_field(verts, pts)
    return out[0] if single else out


def basis_hessian(layout: ElectrodeLayout, electrode_id: str, r) -> np.ndarray:
    """Hessian of the basis potential (1/m^2), symmetrized differences."""
    return _fd_hessian(lambda p: basis_field(layout, electrode_id, p), r)


def _fd_hessian(field_fn, r) -> np.ndarray:
    pts, single = _as_points(r)
    m = len(pts)
    h = np.maximum(Z_MIN, 1e-4 * pts[:, 2])  # (m,)
    shifted = np.empty((6, m, 3))
    for axis in range(3):
        plus = pts.copy()
        plus[:, axis] += h
        minus = pts.copy()
        minus[:, axis] -= h
        shifted[2 * axis] = plus
        shifted[2 * axis + 1] = minus
    fields = field_fn(shifted.reshape(-1, 3)).reshape(6, m, 3)
    jac = np.empty((m, 3, 3))
    for axis in range(3):
        jac[:, :, axis] = (fields[2 * axis] - fields[2 * axis + 1]) / (2.0 * h[:, None])
    hess = -0.5 * (jac + np.transpose(jac, (0, 2, 1)))
    return hess[0] if single else hess


def _checked_id(layout: ElectrodeLayout, electrode_id: str) -> str:
    if electrode_id not in _compiled(layout):
        raise KeyError(f"no patch with id {electrode_id!r}")
    return electrode_id


# ---------------------------------------------------------------------------
# superposition over a voltage assignment


def potential(layout: ElectrodeLayout, voltages: dict[str, float], r):
    """Total potential in volts for the given electrode voltages."""
    pts, single = _as_points(r)
    total = np.zeros(len(pts))
    for eid, v in voltages.items():
        if v != 0.0:
            total += v * basis_potential(layout, eid, pts)
        else:
            _checked_id(layout, eid)
    return float(total[0]) if single else total


def field(layout: ElectrodeLayout, voltages: dict[str, float], r) -> np.ndarray:
    """Total electric field in V/m."""
    pts, single = _as_points(r)
    total = np.zeros((len(pts), 3))
    for eid, v in voltages.items():
        if v != 0.0:
            total += v * basis_field(layout, eid, pts)
        else:
            _checked_id(layout, eid)
    return total[0] if single else total


def hessian(layout: ElectrodeLayout, voltages: dict[str, float], r) -> np.ndarray:
    """Hessian of the total potential in V/m^2."""
    return _fd_hessian(lambda p: field(layout, voltages, p), r)
