"""Electrode layout model: planar patches, JSON round trip, validation.

A layout is a set of named electrode patches in the z = 0 plane.  Every
patch is one outer ring plus optional hole rings; coordinates are
micrometres.  Outer rings wind counter-clockwise, holes clockwise.  The
region not covered by any patch is treated as grounded plane.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources

from shapely.geometry import Polygon as _ShapelyPolygon

from .errors import LayoutParseError, LayoutValidationError

CIRCLE_SEGMENTS = 64


class Role(str, enum.Enum):
    RF_INNER = "rf_inner"
    RF_OUTER = "rf_outer"
    DC_CENTER = "dc_center"
    DC_PAD = "dc_pad"
    GROUND = "ground"


DC_ROLES = (Role.DC_CENTER, Role.DC_PAD)


@dataclass(frozen=True)
class Polygon:
    """Closed planar ring given by its vertex list (um, implicit closure)."""

    vertices: tuple[tuple[float, float], ...]
    hole: bool = False

    @staticmethod
    def make(points, hole: bool = False) -> "Polygon":
        return Polygon(tuple((float(x), float(y)) for x, y in points), hole)

    def signed_area(self) -> float:
        """Shoelace area in um^2, positive for counter-clockwise winding."""
        v = self.vertices
        total = 0.0
        for i in range(len(v)):
            x0, y0 = v[i]
            x1, y1 = v[(i + 1) % len(v)]
            total += x0 * y1 - x1 * y0
        return 0.5 * total

    def is_ccw(self) -> bool:
        return self.signed_area() > 0.0

    def reversed(self) -> "Polygon":
        return Polygon(tuple(reversed(self.vertices)), self.hole)


@dataclass(frozen=True)
class ElectrodePatch:
    """One electrode: an id, a role, and its boundary rings.

    rings[0] is the outer boundary; any further rings are holes cut out
    of the electrode (the plane inside a hole is grounded).
    """

    id: str
    role: Role
    rings: tuple[Polygon, ...]

    @property
    def outer(self) -> Polygon:
        return self.rings[0]

    @property
    def holes(self) -> tuple[Polygon, ...]:
        return self.rings[1:]

    def area(self) -> float:
        """Net electrode area in um^2 (holes subtract)."""
        return self.outer.signed_area() + sum(h.signed_area() for h in self.holes)


@dataclass(frozen=True, eq=False)
class ElectrodeLayout:
    """Immutable collection of patches; hashable by identity for caching."""

    patches: tuple[ElectrodePatch, ...]
    name: str = ""
    description: str = ""

    def ids(self) -> list[str]:
        return [p.id for p in self.patches]

    def patch(self, patch_id: str) -> ElectrodePatch:
        for p in self.patches:
            if p.id == patch_id:
                return p
        raise KeyError(f"no patch with id {patch_id!r}")

    def by_role(self, role: Role) -> list[ElectrodePatch]:
        return [p for p in self.patches if p.role == role]

    def dc_patches(self) -> list[ElectrodePatch]:
        return [p for p in self.patches if p.role in DC_ROLES]

    def rf_inner(self) -> ElectrodePatch:
        inner = self.by_role(Role.RF_INNER)
        if len(inner) != 1:
            raise LayoutParseError("layout must contain exactly one rf_inner patch")
        return inner[0]

    def rf_outer(self) -> ElectrodePatch | None:
        outer = self.by_role(Role.RF_OUTER)
        return outer[0] if outer else None

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "unit": "um",
            "patches": [
                {
                    "id": p.id,
                    "role": p.role.value,
                    "outer": [[x, y] for x, y in p.outer.vertices],
                    "holes": [[[x, y] for x, y in h.vertices] for h in p.holes],
                }
                for p in self.patches
            ],
        }
        if self.description:
            doc["description"] = self.description
        return doc


# ---------------------------------------------------------------------------
# parsing / serialization


def layout_from_dict(doc: dict) -> ElectrodeLayout:
    """Build a layout from a schema document.  Raises LayoutParseError."""
    if not isinstance(doc, dict):
        raise LayoutParseError("layout document must be a JSON object")
    unit = doc.get("unit", "um")
    if unit != "um":
        raise LayoutParseError(f"unsupported length unit {unit!r} (expected 'um')")
    raw_patches = doc.get("patches")
    if not isinstance(raw_patches, list) or not raw_patches:
        raise LayoutParseError("layout document needs a non-empty 'patches' list")
    patches = []
    for entry in raw_patches:
        if not isinstance(entry, dict):
            raise LayoutParseError("each patch must be an object")
        try:
            pid = entry["id"]
            role_text = entry["role"]
            outer = entry["outer"]
        except KeyError as exc:
            raise LayoutParseError(f"patch missing required key {exc}") from exc
        if not isinstance(pid, str) or not pid:
            raise LayoutParseError("patch id must be a non-empty string")
        try:
            role = Role(role_text)
        except ValueError as exc:
            raise LayoutParseError(
                f"patch {pid!r} has unknown role {role_text!r}"
            ) from exc
        rings = [_ring_from_list(pid, outer, hole=False)]
        for hole in entry.get("holes", []):
            rings.append(_ring_from_list(pid, hole, hole=True))
        patches.append(ElectrodePatch(pid, role, tuple(rings)))
    return ElectrodeLayout(
        patches=tuple(patches),
        name=str(doc.get("name", "")),
        description=str(doc.get("description", "")),
    )


def _ring_from_list(pid: str, points, hole: bool) -> Polygon:
    if not isinstance(points, list):
        raise LayoutParseError(f"patch {pid!r}: ring must be a list of [x, y] pairs")
    cleaned = []
    for pt in points:
        if (
            not isinstance(pt, (list, tuple))
            or len(pt) != 2
            or not all(isinstance(c, (int, float)) for c in pt)
        ):
            raise LayoutParseError(f"patch {pid!r}: ring vertex {pt!r} is not [x, y]")
        if not all(math.isfinite(float(c)) for c in pt):
            raise LayoutParseError(f"patch {pid!r}: non-finite vertex {pt!r}")
        cleaned.append((float(pt[0]), float(pt[1])))
    return Polygon(tuple(cleaned), hole)


def parse_layout(text: str) -> ElectrodeLayout:
    """Parse and validate layout JSON text.

    Raises LayoutParseError for malformed text or schema violations and
    LayoutValidationError when the geometry breaks an invariant.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutParseError(f"layout text is not valid JSON: {exc}") from exc
    layout = layout_from_dict(doc)
    diagnostics = validate_layout(layout)
    if diagnostics:
        raise LayoutValidationError(diagnostics)
    return layout


def serialize_layout(layout: ElectrodeLayout) -> str:
    """Serialize to schema JSON.  parse_layout inverts this exactly."""
    return json.dumps(layout.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    """One violated invariant; patch_ids names every offender."""

    rule: str
    patch_ids: tuple[str, ...]
    message: str


def _shapely_ring(poly: Polygon) -> _ShapelyPolygon:
    return _ShapelyPolygon(poly.vertices)


def validate_layout(layout: ElectrodeLayout) -> list[Diagnostic]:
    """Check every layout invariant and return a list of diagnostics.

    An empty list means the layout is valid.  Checks: duplicate ids, ring
    vertex counts, simplicity, winding direction, holes inside their outer
    ring, pairwise patch overlap, and role bookkeeping (exactly one
    rf_inner, at most one rf_outer, at least one dc electrode).
    """
    out: list[Diagnostic] = []

    seen: dict[str, int] = {}
    for p in layout.patches:
        seen[p.id] = seen.get(p.id, 0) + 1
    for pid, count in seen.items():
        if count > 1:
            out.append(
                Diagnostic("duplicate-id", (pid,), f"patch id {pid!r} appears {count} times")
            )

    shapes: dict[str, _ShapelyPolygon] = {}
    for p in layout.patches:
        ok = True
        for k, ring in enumerate(p.rings):
            kind = "outer ring" if k == 0 else f"hole ring {k}"
            if len(ring.vertices) < 3:
                out.append(
                    Diagnostic(
                        "min-vertices",
                        (p.id,),
                        f"patch {p.id!r} {kind} has {len(ring.vertices)} vertices (need >= 3)",
                    )
                )
                ok = False
                continue
            if abs(ring.signed_area()) == 0.0:
                out.append(
                    Diagnostic(
                        "degenerate", (p.id,), f"patch {p.id!r} {kind} has zero area"
                    )
                )
                ok = False
                continue
            if not _shapely_ring(ring).is_valid:
                out.append(
                    Diagnostic(
                        "not-simple",
                        (p.id,),
                        f"patch {p.id!r} {kind} is self-intersecting",
                    )
                )
                ok = False
            want_ccw = k == 0
            if ring.is_ccw() != want_ccw:
                expected = "counter-clockwise" if want_ccw else "clockwise"
                out.append(
                    Diagnostic(
                        "winding",
                        (p.id,),
                        f"patch {p.id!r} {kind} must wind {expected}",
                    )
                )
                ok = False
        if not ok:
            continue
        outer_shape = _shapely_ring(p.outer)
        for k, hole in enumerate(p.holes, start=1):
            hole_shape = _shapely_ring(hole)
            if not outer_shape.contains(hole_shape):
                out.append(
                    Diagnostic(
                        "hole-outside",
                        (p.id,),
                        f"patch {p.id!r} hole ring {k} is not strictly inside its outer ring",
                    )
                )
                ok = False
        if ok:
            shell = p.outer.vertices
            holes = [h.vertices for h in p.holes]
            shapes[p.id] = _ShapelyPolygon(shell, holes)

    ids = [p.id for p in layout.patches if p.id in shapes]
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            inter = shapes[a].intersection(shapes[b])
            if inter.area > 1e-9 * min(shapes[a].area, shapes[b].area):
                out.append(
                    Diagnostic(
                        "overlap",
                        (a, b),
                        f"patches {a!r} and {b!r} overlap (shared area {inter.area:.3g} um^2)",
                    )
                )

    n_inner = len(layout.by_role(Role.RF_INNER))
    if n_inner != 1:
        out.append(
            Diagnostic(
                "role-count", (), f"layout needs exactly one rf_inner patch (found {n_inner})"
            )
        )
    n_outer = len(layout.by_role(Role.RF_OUTER))
    if n_outer > 1:
        out.append(
            Diagnostic(
                "role-count", (), f"layout allows at most one rf_outer patch (found {n_outer})"
            )
        )
    if not layout.dc_patches():
        out.append(Diagnostic("role-count", (), "layout needs at least one dc electrode"))
    return out


# ---------------------------------------------------------------------------
# bundled example geometry


def _ring_points(
    half_x: float,
    half_y: float,
    shift_y: float = 0.0,
    exponent: float = 2.0,
    skew: float = 0.0,
) -> list[tuple[float, float]]:
    """64 counter-clockwise vertices on an axis-aligned superellipse.

    exponent 2 is an ellipse; larger exponents bulge toward the bounding
    rectangle (more electrode metal at the corners).  skew stretches the
    top half-height by (1+skew) and shrinks the bottom by (1-skew).
    """
    pts = []
    power = 2.0 / exponent
    for k in range(CIRCLE_SEGMENTS):
        phi = 2.0 * math.pi * k / CIRCLE_SEGMENTS
        c, s = math.cos(phi), math.sin(phi)
        hy = half_y * (1.0 + skew) if s >= 0.0 else half_y * (1.0 - skew)
        x = half_x * math.copysign(abs(c) ** power, c)
        y = hy * math.copysign(abs(s) ** power, s)
        pts.append((x, y + shift_y))
    return pts


def _ellipse_ring(
    half_x: float,
    half_y: float,
    shift_y: float = 0.0,
    hole: bool = False,
    exponent: float = 2.0,
    skew: float = 0.0,
) -> Polygon:
    pts = _ring_points(half_x, half_y, shift_y, exponent, skew)
    if hole:
        return Polygon.make(reversed(pts), hole=True)
    return Polygon.make(pts)


def _quadrant_pad(
    pid: str, quadrant: int, frame: float, ring_pts: list[tuple[float, float]]
) -> ElectrodePatch:
    """Square-frame quadrant with the rf boundary ring cut away.

    The inner boundary follows the shared 64-gon arc so neighbouring
    patches tile exactly.  quadrant 0..3 counts counter-clockwise from +x/+y.
    """
    n = CIRCLE_SEGMENTS
    q = n // 4
    corners = {
        0: ((frame, 0.0), (frame, frame), (0.0, frame)),
        1: ((0.0, frame), (-frame, frame), (-frame, 0.0)),
        2: ((-frame, 0.0), (-frame, -frame), (0.0, -frame)),
        3: ((0.0, -frame), (frame, -frame), (frame, 0.0)),
    }[quadrant]
    # arc from the (quadrant+1)*90 deg vertex down to the quadrant*90 deg vertex
    arc = [ring_pts[k % n] for k in range((quadrant + 1) * q, quadrant * q - 1, -1)]
    ring = Polygon.make(list(corners) + arc)
    if not ring.is_ccw():
        ring = ring.reversed()
    return ElectrodePatch(pid, Role.DC_PAD, (ring,))


def build_ring_trap_layout(
    center_half_x: float,
    center_half_y: float,
    inner_half_x: float,
    inner_half_y: float,
    inner_shift_y: float,
    outer_half_x: float,
    outer_half_y: float,
    outer_shift_y: float,
    hole_radius: float = 25.0,
    pad_frame: float = 600.0,
    gap_half_x: float | None = None,
    gap_half_y: float | None = None,
    gap_shift_y: float | None = None,
    center_exponent: float = 2.0,
    inner_exponent: float = 2.0,
    outer_exponent: float = 2.0,
    center_skew: float = 0.0,
    inner_skew: float = 0.0,
    name: str = "ring-trap",
    description: str = "",
) -> ElectrodeLayout:
    """Concentric ring trap with a center light-collection hole.

    Seven patches: dc_center (with the hole ring), rf_inner and rf_outer
    annuli, and four dc pads filling a square frame around them.  When the
    gap ring is given, the strip between the rf_inner boundary and the gap
    ring is left bare (grounded plane) and rf_outer starts at the gap ring.
    All dimensions in micrometres; ring boundaries are superellipse 64-gons
    (see _ring_points for the exponent and skew conventions).
    """
    p_center = _ring_points(
        center_half_x, center_half_y, exponent=center_exponent, skew=center_skew
    )
    p_inner = _ring_points(
        inner_half_x, inner_half_y, inner_shift_y, exponent=inner_exponent, skew=inner_skew
    )
    p_outer = _ring_points(outer_half_x, outer_half_y, outer_shift_y, exponent=outer_exponent)
    if gap_half_x is None:
        p_gap = p_inner
    else:
        p_gap = _ring_points(
            gap_half_x,
            inner_half_y if gap_half_y is None else gap_half_y,
            inner_shift_y if gap_shift_y is None else gap_shift_y,
        )
    hole = _ellipse_ring(hole_radius, hole_radius, hole=True)

    def as_hole(pts):
        return Polygon.make(reversed(pts), hole=True)

    dc_center = ElectrodePatch("dc_center", Role.DC_CENTER, (Polygon.make(p_center), hole))
    rf_inner = ElectrodePatch(
        "rf_inner", Role.RF_INNER, (Polygon.make(p_inner), as_hole(p_center))
    )
    rf_outer = ElectrodePatch(
        "rf_outer", Role.RF_OUTER, (Polygon.make(p_outer), as_hole(p_gap))
    )
    pads = [
        _quadrant_pad(f"dc_pad_{tag}", k, pad_frame, p_outer)
        for k, tag in enumerate(("ne", "nw", "sw", "se"))
    ]
    return ElectrodeLayout(
        patches=(dc_center, rf_inner, rf_outer, *pads),
        name=name,
        description=description,
    )


# Frozen dimensions of the bundled example trap (um).  Chosen so that the
# solved operating points land on the documented targets: null heights near
# 30 um (inner rf only), 50 um (both rings), 90 um (outer ring only), secular
# modes near 2.3 / 6.1 / 8.4 MHz at 45 MHz drive and 50 V, principal axes
# tilted about x by ~15 deg, and wells of a few thousand kelvin.
EXAMPLE_DIMENSIONS = {
    "center_half_x": 26.0,
    "center_half_y": 40.0,
    "inner_half_x": 36.1,
    "inner_half_y": 106.4,
    "inner_shift_y": 3.5,
    "gap_half_x": 44.7,
    "gap_half_y": 131.5,
    "outer_half_x": 336.8,
    "outer_half_y": 167.5,
    "outer_shift_y": 0.0,
    "center_skew": -0.089,
    "inner_skew": 0.216,
    "hole_radius": 25.0,
    "pad_frame": 600.0,
}


def _build_example() -> ElectrodeLayout:
    return build_ring_trap_layout(
        name="example",
        description="bundled elliptical ring trap with fiber hole",
        **EXAMPLE_DIMENSIONS,
    )


_EXAMPLE_CACHE: list[ElectrodeLayout] = []


def example_layout() -> ElectrodeLayout:
    """The bundled seven-patch example trap, loaded from package data."""
    if not _EXAMPLE_CACHE:
        text = resources.files("fibertrap.data").joinpath("example_layout.json").read_text()
        _EXAMPLE_CACHE.append(parse_layout(text))
    return _EXAMPLE_CACHE[0]
