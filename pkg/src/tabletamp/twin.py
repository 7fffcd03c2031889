"""Quasi-static tabletop rigid-body world.

The same scene type serves two roles: a rehearsal twin (role ``"twin"``)
used to settle-check candidate object poses, and the execution environment
(role ``"execution"``) in which controllers act. The execution role applies
a dynamics perturbation (reduced push gain, scaled friction) so rehearsed
motions never match execution exactly; controllers must close the loop.

Physics model, declared rather than simulated:

- Objects are oriented boxes resting face-down on flat surfaces, or tilted
  to the incline when supported by a slope.
- Static stability is the support-polygon test: an object is stable iff the
  ground projection of its center of mass lies inside the convex hull of
  its contact region (boundary inclusive).
- A push step translates by ``step * gain`` along the push direction and
  rotates in plane by ``kappa * arm * step`` where ``arm`` is the signed
  moment arm of the contact about the center of mass. Motion is clipped so
  objects never interpenetrate terrain or each other.
- Pivoting rotates rigidly about a bottom edge; crossing the balance point
  (center of mass passing the vertical plane through the edge) completes
  the flip onto the adjacent face, otherwise the object relaxes back.

All scene values are immutable; operations return new scenes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .geometry import (
    Obb,
    Polygon2,
    Pose6D,
    Quat,
    Vec2,
    Vec3,
    clip_convex,
    convex_hull,
    geodesic_angle,
    obbs_overlap,
    point_in_polygon,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_mul,
    quat_rotate,
    ring_area,
    signed_interior_margin,
    wrap_angle,
    yaw_of,
)

TERRAIN_KINDS = ("table_surface", "ground", "wall", "slope", "slot", "shelf")

_CONTACT_TOL = 1e-6
_AREA_TOL = 1e-8
_WALL_THICKNESS = 0.012
_CEILING_SLAB = 0.02


class PlacementCollision(Exception):
    """Placing an object here would interpenetrate another body or terrain."""


class SweptCollision(Exception):
    """A rigid motion sweep intersects terrain or another object."""


# ---------------------------------------------------------------------------
# scene data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TerrainFeature:
    kind: str
    footprint: Polygon2
    height: float
    extra: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in TERRAIN_KINDS:
            raise ValueError(f"unknown terrain kind {self.kind!r}")
        if self.height < 0.0:
            raise ValueError("terrain height must be >= 0")
        if self.kind == "wall" and self.extra.get("height", 0.0) <= 0.0:
            raise ValueError("wall needs extra['height'] > 0")
        if self.kind == "slope":
            angle = self.extra.get("angle_deg", 0.0)
            if not 0.0 < angle < 60.0:
                raise ValueError("slope angle must be in (0, 60) degrees")
            d = self.extra.get("downhill", (0.0, -1.0))
            n = math.hypot(d[0], d[1])
            if n < 1e-9:
                raise ValueError("slope downhill direction must be non-zero")
            ex = dict(self.extra)
            ex["downhill"] = (d[0] / n, d[1] / n)
            object.__setattr__(self, "extra", ex)
        if self.kind == "slot":
            if self.extra.get("depth", 0.0) <= 0.0 or self.extra.get("width", 0.0) <= 0.0:
                raise ValueError("slot needs positive depth and width")
        if self.kind == "shelf":
            if self.extra.get("clearance", 0.0) <= 0.0:
                raise ValueError("shelf needs extra['clearance'] > 0")

    def top_height_at(self, p: Vec2) -> float:
        """Top surface height at a contained point."""
        if self.kind == "slot":
            return self.height - self.extra["depth"]
        if self.kind == "wall":
            return self.height + self.extra["height"]
        if self.kind == "slope":
            d = self.extra["downhill"]
            s_min = min(v[0] * d[0] + v[1] * d[1] for v in self.footprint.vertices)
            s = p[0] * d[0] + p[1] * d[1]
            return self.height - math.tan(math.radians(self.extra["angle_deg"])) * (s - s_min)
        return self.height


@dataclass(frozen=True)
class ToolSpec:
    kind: str  # "hook" | "pusher"
    effective_length: float
    tip_offset: Vec3

    def __post_init__(self):
        if self.kind not in ("hook", "pusher"):
            raise ValueError(f"unknown tool kind {self.kind!r}")
        if self.effective_length <= 0.0:
            raise ValueError("tool effective_length must be > 0")


@dataclass(frozen=True)
class RigidObject:
    id: str
    shape: Obb  # local frame; center_pose is the shape offset, usually identity
    pose: Pose6D
    mass: float = 0.2
    friction: float = 0.5
    tool_spec: ToolSpec | None = None

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be > 0")
        if not 0.05 <= self.friction <= 2.0:
            raise ValueError("friction must lie in [0.05, 2.0]")

    @property
    def half_extents(self) -> Vec3:
        return self.shape.half_extents

    def world_obb(self) -> Obb:
        local = self.shape.center_pose
        pos = self.pose.transform_point(local.position)
        quat = quat_mul(self.pose.orientation, local.orientation)
        return Obb(Pose6D(pos, quat), self.shape.half_extents)

    def at_pose(self, pose: Pose6D) -> "RigidObject":
        return replace(self, pose=pose)


@dataclass(frozen=True)
class RobotModel:
    """Kinematic reach-annulus stand-in for an arm plus gripper."""

    base_position: Vec2 = (0.0, -0.65)
    reach_min: float = 0.15
    reach_max: float = 0.95
    gripper_aperture: float = 0.08
    finger_clearance: float = 0.015

    def __post_init__(self):
        if not 0.0 <= self.reach_min < self.reach_max:
            raise ValueError("need 0 <= reach_min < reach_max")
        if self.gripper_aperture <= 0.0:
            raise ValueError("gripper aperture must be > 0")


@dataclass(frozen=True)
class DynamicsPerturbation:
    friction_scale: float = 1.0
    push_gain_scale: float = 0.85


@dataclass(frozen=True)
class PushModel:
    gain: float = 1.0
    kappa: float = 50.0  # rad per (m arm * m step)
    step_cap: float = 0.02
    climb_tol: float = 0.012  # max per-step surface rise an object can ride over


@dataclass(frozen=True)
class SettleOutcome:
    status: str  # "stable" | "toppled" | "fell_off"
    final_pose: Pose6D


@dataclass(frozen=True)
class PushDelta:
    dx: float
    dy: float
    dyaw: float
    blocked: bool  # translation was clipped by terrain/objects: pivot candidate
    settle_status: str


@dataclass(frozen=True)
class TwinScene:
    terrain: tuple[TerrainFeature, ...]
    objects: tuple[RigidObject, ...]
    robot: RobotModel
    role: str = "twin"
    dynamics_perturbation: DynamicsPerturbation = DynamicsPerturbation()
    push_model: PushModel = PushModel()
    held_id: str | None = None

    def __post_init__(self):
        if self.role not in ("twin", "execution"):
            raise ValueError("role must be 'twin' or 'execution'")
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("object ids must be unique")
        if self.held_id is not None and self.held_id not in ids:
            raise ValueError(f"held_id {self.held_id!r} not in scene")

    def object(self, object_id: str) -> RigidObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(f"no object {object_id!r} in scene")

    def replace_object(self, obj: RigidObject) -> "TwinScene":
        new = tuple(obj if o.id == obj.id else o for o in self.objects)
        if all(o is not obj for o in new):
            raise KeyError(f"no object {obj.id!r} in scene")
        return replace(self, objects=new)

    def with_held(self, object_id: str | None) -> "TwinScene":
        return replace(self, held_id=object_id)

    def as_twin(self) -> "TwinScene":
        return replace(self, role="twin")

    def as_execution(self) -> "TwinScene":
        return replace(self, role="execution")

    def push_gain(self) -> float:
        g = self.push_model.gain
        if self.role == "execution":
            g *= self.dynamics_perturbation.push_gain_scale
        return g

    def effective_friction(self, obj: RigidObject) -> float:
        f = obj.friction
        if self.role == "execution":
            f *= self.dynamics_perturbation.friction_scale
        return f


# ---------------------------------------------------------------------------
# support cells and solids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupportCell:
    ring: tuple[Vec2, ...]  # convex CCW
    kind: str
    height: float  # flat cells; slope cells use the feature's plane
    feature: TerrainFeature | None = None
    object_id: str | None = None

    def height_at(self, p: Vec2) -> float:
        if self.feature is not None and self.feature.kind == "slope":
            return self.feature.top_height_at(p)
        return self.height


def _axis_rect_bounds(poly: Polygon2):
    xs = [v[0] for v in poly.vertices]
    ys = [v[1] for v in poly.vertices]
    if len(poly.vertices) != 4:
        return None
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    for vx, vy in poly.vertices:
        if (abs(vx - x0) > 1e-12 and abs(vx - x1) > 1e-12) or (
            abs(vy - y0) > 1e-12 and abs(vy - y1) > 1e-12
        ):
            return None
    return x0, x1, y0, y1


def _punch_slots(surface: TerrainFeature, slots: list[TerrainFeature]):
    """Split a flat surface footprint into convex rects around interior slots.

    Only axis-aligned rectangular cuts are supported, which covers every
    scene this package builds; anything else is rejected loudly.
    """
    rings = [surface.footprint.vertices]
    for slot in slots:
        sb = _axis_rect_bounds(slot.footprint)
        if sb is None:
            raise ValueError("slot footprints must be axis-aligned rectangles")
        sx0, sx1, sy0, sy1 = sb
        new_rings = []
        for ring in rings:
            rb = _axis_rect_bounds(Polygon2(ring))
            if rb is None:
                raise ValueError("slotted surfaces must be axis-aligned rectangles")
            rx0, rx1, ry0, ry1 = rb
            ix0, ix1 = max(rx0, sx0), min(rx1, sx1)
            iy0, iy1 = max(ry0, sy0), min(ry1, sy1)
            if ix0 >= ix1 or iy0 >= iy1:
                new_rings.append(ring)
                continue
            # frame decomposition: left / right strips, then top / bottom
            pieces = [
                (rx0, ix0, ry0, ry1),
                (ix1, rx1, ry0, ry1),
                (ix0, ix1, ry0, iy0),
                (ix0, ix1, iy1, ry1),
            ]
            for px0, px1, py0, py1 in pieces:
                if px1 - px0 > 1e-9 and py1 - py0 > 1e-9:
                    new_rings.append(
                        ((px0, py0), (px1, py0), (px1, py1), (px0, py1))
                    )
        rings = new_rings
    return rings


def support_cells(scene: TwinScene, exclude_id: str | None = None,
                  include_objects: bool = True) -> list[SupportCell]:
    cells: list[SupportCell] = []
    slots = [t for t in scene.terrain if t.kind == "slot"]
    for t in scene.terrain:
        if t.kind in ("table_surface", "ground", "shelf"):
            overlapping = [
                s for s in slots
                if ring_area(clip_convex(list(t.footprint.vertices), list(s.footprint.vertices))) > _AREA_TOL
            ]
            for ring in _punch_slots(t, overlapping):
                cells.append(SupportCell(tuple(ring), t.kind, t.height, feature=t))
        elif t.kind == "slot":
            cells.append(
                SupportCell(tuple(t.footprint.vertices), "slot", t.height - t.extra["depth"], feature=t)
            )
        elif t.kind == "wall":
            cells.append(
                SupportCell(tuple(t.footprint.vertices), "wall", t.height + t.extra["height"], feature=t)
            )
        elif t.kind == "slope":
            cells.append(SupportCell(tuple(t.footprint.vertices), "slope", t.height, feature=t))
    if include_objects:
        for o in scene.objects:
            if o.id == exclude_id or o.id == scene.held_id:
                continue
            box = o.world_obb()
            hull = convex_hull([(c[0], c[1]) for c in box.corners()])
            if len(hull) >= 3:
                cells.append(SupportCell(tuple(hull), "object", box.top_z(), object_id=o.id))
    return cells


def surface_under(scene: TwinScene, point: Vec2):
    """Highest terrain feature containing the point, with its top height.

    Slots cut into a surface take precedence over the surface they cut.
    Returns None over the void.
    """
    containing = [
        t for t in scene.terrain if point_in_polygon(point, t.footprint)
    ]
    if not containing:
        return None
    slots = [t for t in containing if t.kind == "slot"]
    if slots:
        t = slots[0]
        return t, t.top_height_at(point)
    best = max(containing, key=lambda t: t.top_height_at(point))
    return best, best.top_height_at(point)


@dataclass(frozen=True)
class Solid:
    """An axis-extruded blocked volume (walls, shelf sides, raised slabs)."""

    ring: tuple[Vec2, ...]
    z0: float
    z1: float
    label: str = ""


def terrain_solids(scene: TwinScene) -> list[Solid]:
    solids: list[Solid] = []
    slots = [t for t in scene.terrain if t.kind == "slot"]
    for t in scene.terrain:
        if t.kind == "table_surface":
            overlapping = [
                s for s in slots
                if ring_area(clip_convex(list(t.footprint.vertices), list(s.footprint.vertices))) > _AREA_TOL
            ]
            for ring in _punch_slots(t, overlapping):
                solids.append(Solid(tuple(ring), 0.0, t.height, label=t.name or "table"))
        elif t.kind == "wall":
            solids.append(
                Solid(tuple(t.footprint.vertices), t.height, t.height + t.extra["height"],
                      label=t.name or "wall")
            )
        elif t.kind == "shelf":
            # an open-sided cubby: a back wall opposite the open face plus a
            # ceiling slab; the sides stay open so objects can swing out
            bounds = _axis_rect_bounds(t.footprint)
            if bounds is None:
                raise ValueError("shelf footprints must be axis-aligned rectangles")
            x0, x1, y0, y1 = bounds
            open_face = t.extra.get("open_face", (0.0, -1.0))
            clearance = t.extra["clearance"]
            top = t.height + clearance + _CEILING_SLAB
            w = _WALL_THICKNESS
            dirs = {"+x": (1, 0), "-x": (-1, 0), "+y": (0, 1), "-y": (0, -1)}
            sides = {
                "+x": ((x1, y0), (x1 + w, y0), (x1 + w, y1), (x1, y1)),
                "-x": ((x0 - w, y0), (x0, y0), (x0, y1), (x0 - w, y1)),
                "+y": ((x0, y1), (x1, y1), (x1, y1 + w), (x0, y1 + w)),
                "-y": ((x0, y0 - w), (x1, y0 - w), (x1, y0), (x0, y0)),
            }
            open_key = max(
                dirs, key=lambda k: dirs[k][0] * open_face[0] + dirs[k][1] * open_face[1]
            )
            back_key = {"+x": "-x", "-x": "+x", "+y": "-y", "-y": "+y"}[open_key]
            solids.append(Solid(sides[back_key], t.height, top,
                                label=f"{t.name or 'shelf'} wall"))
            ceiling = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
            solids.append(
                Solid(ceiling, t.height + clearance, top,
                      label=f"{t.name or 'shelf'} ceiling")
            )
    return solids


def _slope_penetration(scene: TwinScene, box: Obb, tol: float,
                       climb_tol: float) -> bool:
    # Pointwise at the corners: correct for plane-aligned tilted boxes, which
    # a single bottom-z scalar would misclassify. Objects spanning a whole
    # slope feature are not modeled.
    slopes = [t for t in scene.terrain if t.kind == "slope"]
    if not slopes:
        return False
    for t in slopes:
        for c in box.corners():
            p = (c[0], c[1])
            if point_in_polygon(p, t.footprint) and c[2] + climb_tol < t.top_height_at(p) - tol:
                return True
    return False


def _box_hits_solids(scene: TwinScene, box: Obb, tol: float = 1e-6,
                     climb_tol: float = 0.0, include_slopes: bool = True) -> Solid | None:
    bottom, top = box.bottom_z(), box.top_z()
    hull = convex_hull([(c[0], c[1]) for c in box.corners()])
    if len(hull) < 3:
        return None
    for solid in terrain_solids(scene):
        if bottom + climb_tol >= solid.z1 - tol or top <= solid.z0 + tol:
            continue
        if ring_area(clip_convex(hull, list(solid.ring))) > _AREA_TOL:
            return solid
    if include_slopes and _slope_penetration(scene, box, tol, climb_tol):
        return Solid(tuple(hull), 0.0, 0.0, label="slope")
    return None


# ---------------------------------------------------------------------------
# orientation helpers
# ---------------------------------------------------------------------------

def _snap_face_down(q: Quat) -> Quat:
    """Minimal world rotation making the current down face exactly horizontal."""
    box = Obb(Pose6D((0.0, 0.0, 0.0), q), (1.0, 1.0, 1.0))
    axis, sign = box.down_face()
    local = [0.0, 0.0, 0.0]
    local[axis] = sign
    n = quat_rotate(q, tuple(local))
    target = (0.0, 0.0, -1.0)
    dot = max(-1.0, min(1.0, n[0] * target[0] + n[1] * target[1] + n[2] * target[2]))
    angle = math.acos(dot)
    if angle < 1e-12:
        return q
    ax = (n[1] * target[2] - n[2] * target[1],
          n[2] * target[0] - n[0] * target[2],
          n[0] * target[1] - n[1] * target[0])
    norm = math.sqrt(ax[0] ** 2 + ax[1] ** 2 + ax[2] ** 2)
    if norm < 1e-12:
        ax = (1.0, 0.0, 0.0)
        norm = 1.0
    correction = quat_from_axis_angle((ax[0] / norm, ax[1] / norm, ax[2] / norm), angle)
    return quat_mul(correction, q)


def _face_down_orientation(q: Quat, axis: int, sign: float) -> Quat:
    """Rotate q so the given local face points straight down (minimal rotation)."""
    local = [0.0, 0.0, 0.0]
    local[axis] = sign
    n = quat_rotate(q, tuple(local))
    dot = max(-1.0, min(1.0, -n[2]))
    angle = math.acos(dot)
    if angle < 1e-12:
        return q
    ax = (-n[1], n[0], 0.0)  # cross(n, (0, 0, -1))
    norm = math.hypot(ax[0], ax[1])
    if norm < 1e-12:
        ax, norm = (1.0, 0.0, 0.0), 1.0
    correction = quat_from_axis_angle((ax[0] / norm, ax[1] / norm, 0.0), angle)
    return quat_mul(correction, q)


def slope_orientation(yaw_flat_quat: Quat, feature: TerrainFeature) -> Quat:
    """Tilt a face-flat orientation onto a slope's incline plane."""
    d = feature.extra["downhill"]
    theta = math.radians(feature.extra["angle_deg"])
    tilt_axis = (-d[1], d[0], 0.0)
    return quat_mul(quat_from_axis_angle(tilt_axis, theta), yaw_flat_quat)


def flat_pose_on_support(scene: TwinScene, obj: RigidObject, x: float, y: float,
                         yaw: float, base_orientation: Quat | None = None,
                         objects_as_support: bool = True) -> Pose6D:
    """Construct the supported-flat pose at (x, y, yaw) for this object.

    Orientation roll/pitch are pinned exactly: flat surfaces give a pure-yaw
    composition with the object's flattened base orientation; slopes tilt it
    onto the incline plane.
    """
    base = base_orientation if base_orientation is not None else obj.pose.orientation
    flat = _snap_face_down(base)
    delta = wrap_angle(yaw - yaw_of(flat))
    q = quat_mul(quat_from_yaw(delta), flat)
    probe = replace(obj, pose=Pose6D((x, y, 1.0), q))
    cells = support_cells(scene, exclude_id=obj.id,
                          include_objects=objects_as_support)
    hull = [(c[0], c[1]) for c in probe.world_obb().corners()]
    hull = convex_hull(hull)
    best_cell = None
    best_h = -math.inf
    for cell in cells:
        piece = clip_convex(hull, list(cell.ring))
        if ring_area(piece) <= _AREA_TOL:
            continue
        h = max(cell.height_at(p) for p in piece)
        if h > best_h + 1e-9:
            best_h = h
            best_cell = cell
    if best_cell is None:
        return Pose6D((x, y, _half_height(obj, q)), q)
    if best_cell.kind == "slope":
        feature = best_cell.feature
        assert feature is not None
        q = slope_orientation(q, feature)
        return Pose6D((x, y, _rest_z(scene, obj, x, y, q)), q)
    return Pose6D((x, y, best_h + _half_height(obj, q)), q)


def _half_height(obj: RigidObject, q: Quat) -> float:
    box = Obb(Pose6D((0.0, 0.0, 0.0), q), obj.half_extents)
    return -box.bottom_z()


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def place_at(scene: TwinScene, object_id: str, pose: Pose6D) -> TwinScene:
    """Teleport an object to a pose without settling.

    Raises PlacementCollision when the new placement interpenetrates another
    object or a terrain solid (walls, raised slabs, shelf structure).
    """
    obj = scene.object(object_id)
    moved = obj.at_pose(pose)
    box = moved.world_obb()
    for other in scene.objects:
        if other.id == object_id or other.id == scene.held_id:
            continue
        if obbs_overlap(box, other.world_obb(), tol=1e-7):
            raise PlacementCollision(
                f"{object_id} at {pose.position} interpenetrates {other.id}"
            )
    solid = _box_hits_solids(scene, box, tol=1e-3)
    if solid is not None:
        raise PlacementCollision(
            f"{object_id} at {pose.position} interpenetrates terrain ({solid.label})"
        )
    return scene.replace_object(moved)


def _support_pieces(scene: TwinScene, obj: RigidObject, pose: Pose6D):
    """Contact pieces of the resting face against the highest support."""
    probe = obj.at_pose(pose)
    box = probe.world_obb()
    face = box.resting_face_polygon()
    hull = list(face.vertices)
    cells = support_cells(scene, exclude_id=obj.id)
    scored: list[tuple[float, SupportCell, list[Vec2]]] = []
    for cell in cells:
        piece = clip_convex(hull, list(cell.ring))
        if ring_area(piece) <= _AREA_TOL:
            continue
        h = max(cell.height_at(p) for p in piece)
        scored.append((h, cell, piece))
    return scored


def settle(scene: TwinScene, object_id: str) -> SettleOutcome:
    """Drop an object to rest and classify the outcome.

    The object falls along -z onto the highest support under its footprint.
    Orientation snaps to the nearest face-down orientation (or the incline
    orientation when a slope carries it). If the center of mass projects
    outside the support polygon the object topples over the nearest support
    edge, largest face down; with no raised support at all it lands on the
    ground and reports fell_off.
    """
    obj = scene.object(object_id)
    pose = obj.pose
    status = "stable"
    outward: Vec2 = (0.0, 0.0)
    for hop in range(3):
        flat_q = _snap_face_down(pose.orientation)
        pose = Pose6D(pose.position, flat_q)
        scored = _support_pieces(scene, obj, pose)
        raised = [(h, c, p) for h, c, p in scored if c.kind != "ground"]
        if not raised:
            ground_h = 0.0
            grounds = [c for c in support_cells(scene, exclude_id=obj.id) if c.kind == "ground"]
            if grounds:
                ground_h = grounds[0].height
            z = ground_h + _half_height(obj, flat_q)
            final = Pose6D((pose.x, pose.y, z), flat_q)
            # fell_off marks the transition; an object already at rest on the
            # ground is simply stable (keeps settle idempotent)
            already_resting = (
                status == "stable"
                and abs(obj.pose.z - z) <= 1e-6
                and geodesic_angle(obj.pose.orientation, flat_q) < 1e-7
            )
            return SettleOutcome("stable" if already_resting else "fell_off", final)

        com = (pose.x, pose.y)
        slope_cells = [c for _, c, _ in raised if c.kind == "slope"]

        # the tilted branch starts only once the COM is clearly on the
        # incline; around the foot line the flat contacts carry the object
        # (it leans on the rising sliver) so the transition cannot flicker
        for cell in slope_cells:
            if signed_interior_margin(com, Polygon2(tuple(cell.ring))) > 0.01:
                return _settle_on_slope(scene, obj, pose, cell, status)

        flat = [(h, c, p) for h, c, p in raised if c.kind != "slope"]
        if not flat and slope_cells:
            return _settle_on_slope(scene, obj, pose, slope_cells[0], status)

        h_star = max(h for h, _, _ in flat)
        top = [(h, c, p) for h, c, p in flat if h >= h_star - 0.002]

        contact_pts: list[Vec2] = []
        for _, _, piece in top:
            contact_pts.extend(piece)
        hull = convex_hull(contact_pts)
        if len(hull) >= 3:
            support_poly = Polygon2(tuple(hull))
            inside = point_in_polygon(com, support_poly)
        else:
            inside = False
            support_poly = None

        if inside:
            z = h_star + _half_height(obj, flat_q)
            final = Pose6D((pose.x, pose.y, z), flat_q)
            return SettleOutcome(status, final)

        if hop == 0:
            # topple over the nearest support edge, largest face ends down
            status = "toppled"
            pose, outward = _topple_once(obj, pose, hull, h_star)
        else:
            # a second unstable state means it tumbles clear: slide outward
            # until no raised support remains, then rest on the ground
            pose = _slide_clear(scene, obj, pose, outward)
    return _ground_rest(scene, obj, pose, "fell_off")


def _support_at_point(cells: list[SupportCell], p: Vec2) -> float | None:
    best = None
    for cell in cells:
        if len(cell.ring) < 3:
            continue
        if point_in_polygon(p, Polygon2(tuple(cell.ring))):
            h = cell.height_at(p)
            if best is None or h > best:
                best = h
    return best


def _rest_z(scene: TwinScene, obj: RigidObject, x: float, y: float,
            q: Quat) -> float:
    """Center height at which no corner penetrates its local support."""
    probe = obj.at_pose(Pose6D((x, y, 1.0), q))
    cells = support_cells(scene, exclude_id=obj.id)
    offsets = [
        h - (c[2] - 1.0)
        for c in probe.world_obb().corners()
        for h in [_support_at_point(cells, (c[0], c[1]))]
        if h is not None
    ]
    if not offsets:
        return _half_height(obj, q)
    return max(offsets)


def _settle_on_slope(scene: TwinScene, obj: RigidObject, pose: Pose6D,
                     cell: SupportCell, status: str) -> SettleOutcome:
    feature = cell.feature
    assert feature is not None
    mu = scene.effective_friction(obj)
    theta = math.radians(feature.extra["angle_deg"])
    if mu < math.tan(theta):
        # insufficient friction: slide down until the footprint leaves the slope
        d = feature.extra["downhill"]
        x, y = pose.x, pose.y
        for _ in range(200):
            x += d[0] * 0.01
            y += d[1] * 0.01
            if not point_in_polygon((x, y), feature.footprint):
                break
        slid = obj.at_pose(Pose6D((x, y, pose.z), pose.orientation))
        return settle(scene.replace_object(slid), obj.id)

    q = slope_orientation(pose.orientation, feature)
    probe = obj.at_pose(Pose6D((pose.x, pose.y, 1.0), q))
    box = probe.world_obb()
    face = box.resting_face_polygon()
    piece = clip_convex(list(face.vertices), list(cell.ring))
    hull = convex_hull(piece) if ring_area(piece) > _AREA_TOL else []
    if len(hull) < 3 or signed_interior_margin(
        (pose.x, pose.y), Polygon2(tuple(hull))
    ) < -1e-6:
        # carried past the crest or off the side: resolve as a topple to flat
        flat_q = _snap_face_down(pose.orientation)
        toppled, _ = _topple_once(obj, Pose6D(pose.position, flat_q), hull,
                                  feature.height)
        after = settle(scene.replace_object(obj.at_pose(toppled)), obj.id)
        stat = "toppled" if after.status == "stable" else after.status
        return SettleOutcome(stat, after.final_pose)

    z = _rest_z(scene, obj, pose.x, pose.y, q)
    final = Pose6D((pose.x, pose.y, z), q)
    return SettleOutcome(status, final)


def _slide_clear(scene: TwinScene, obj: RigidObject, pose: Pose6D,
                 outward: Vec2) -> Pose6D:
    dx, dy = outward
    if math.hypot(dx, dy) < 1e-9:
        dx, dy = 1.0, 0.0
    x, y = pose.x, pose.y
    for _ in range(80):
        probe = Pose6D((x, y, pose.z), pose.orientation)
        scored = _support_pieces(scene, obj, probe)
        if not any(c.kind != "ground" for _, c, _ in scored):
            break
        x += dx * 0.01
        y += dy * 0.01
    return Pose6D((x, y, pose.z), pose.orientation)


def _ground_rest(scene: TwinScene, obj: RigidObject, pose: Pose6D,
                 status: str) -> SettleOutcome:
    flat_q = _snap_face_down(pose.orientation)
    grounds = [c for c in support_cells(scene, exclude_id=obj.id) if c.kind == "ground"]
    ground_h = grounds[0].height if grounds else 0.0
    z = ground_h + _half_height(obj, flat_q)
    return SettleOutcome(status, Pose6D((pose.x, pose.y, z), flat_q))


def _topple_once(obj: RigidObject, pose: Pose6D, support_hull: list[Vec2],
                 h_star: float) -> tuple[Pose6D, Vec2]:
    com = (pose.x, pose.y)
    if len(support_hull) >= 2:
        best_a, best_b, best_d = support_hull[0], support_hull[-1], math.inf
        n = len(support_hull)
        for i in range(n if n > 2 else 1):
            a = support_hull[i]
            b = support_hull[(i + 1) % n]
            d = _edge_distance(com, a, b)
            if d < best_d:
                best_d = d
                best_a, best_b = a, b
        edge_a, edge_b = best_a, best_b
    else:
        p = support_hull[0] if support_hull else com
        edge_a, edge_b = (p[0], p[1] - 0.05), (p[0], p[1] + 0.05)

    ex, ey = edge_b[0] - edge_a[0], edge_b[1] - edge_a[1]
    L = math.hypot(ex, ey) or 1.0
    ex, ey = ex / L, ey / L
    # outward horizontal direction: from the edge toward the COM side
    ox, oy = com[0] - edge_a[0], com[1] - edge_a[1]
    t = ox * ex + oy * ey
    px, py = edge_a[0] + t * ex, edge_a[1] + t * ey
    dx, dy = com[0] - px, com[1] - py
    dn = math.hypot(dx, dy)
    if dn < 1e-9:
        dx, dy = -ey, ex
        dn = 1.0
    dx, dy = dx / dn, dy / dn

    box = Obb(Pose6D((0.0, 0.0, 0.0), pose.orientation), obj.half_extents)
    largest_axis, _ = box.largest_face()
    q1 = quat_from_axis_angle((ex, ey, 0.0), _flip_sign(pose, (ex, ey), (dx, dy)))
    q_flipped = quat_mul(q1, pose.orientation)
    q_final = _face_down_orientation(q_flipped, largest_axis,
                                     _down_sign(q_flipped, largest_axis))
    # support function of the flipped box along the outward direction, so the
    # resolved pose clears the support edge instead of straddling it
    flipped_box = Obb(Pose6D((0.0, 0.0, 0.0), q_final), obj.half_extents)
    e_out = max(abs(c[0] * dx + c[1] * dy) for c in flipped_box.corners())
    new_center = (px + dx * (e_out + 1e-4), py + dy * (e_out + 1e-4))
    z = h_star + _half_height(obj, q_final)
    return Pose6D((new_center[0], new_center[1], z), q_final), (dx, dy)


def _down_sign(q: Quat, axis: int) -> float:
    local = [0.0, 0.0, 0.0]
    local[axis] = 1.0
    n = quat_rotate(q, tuple(local))
    return 1.0 if n[2] < 0 else -1.0


def _flip_sign(pose: Pose6D, edge_dir: Vec2, outward: Vec2) -> float:
    # rotating +90 deg about the edge axis should carry the top toward outward
    cx = edge_dir[0] * outward[1] - edge_dir[1] * outward[0]
    return math.pi / 2 if cx < 0 else -math.pi / 2


def _edge_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 < 1e-30:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def stability_margin(scene: TwinScene, object_id: str) -> float:
    """Signed COM-inside-support-polygon margin at the object's current pose."""
    obj = scene.object(object_id)
    scored = _support_pieces(scene, obj, obj.pose)
    raised = [(h, c, p) for h, c, p in scored if c.kind != "ground"]
    if not raised:
        raised = scored  # resting on bare ground
    if not raised:
        return -math.inf
    h_star = max(h for h, _, _ in raised)
    pts: list[Vec2] = []
    for h, _, piece in raised:
        if h >= h_star - 1e-6:
            pts.extend(piece)
    hull = convex_hull(pts)
    if len(hull) < 3:
        return -math.inf
    return signed_interior_margin((obj.pose.x, obj.pose.y), Polygon2(tuple(hull)))


def raised_support(scene: TwinScene, object_id: str) -> bool:
    """True when the object rests on something other than the bare ground."""
    obj = scene.object(object_id)
    scored = _support_pieces(scene, obj, obj.pose)
    return any(c.kind != "ground" for _, c, _ in scored)


# ---------------------------------------------------------------------------
# pushing
# ---------------------------------------------------------------------------

def _surface_distance_to_obb(box: Obb, point: Vec3) -> float:
    pose = box.center_pose
    rel = (point[0] - pose.x, point[1] - pose.y, point[2] - pose.z)
    inv = quat_rotate((pose.orientation[0], -pose.orientation[1],
                       -pose.orientation[2], -pose.orientation[3]), rel)
    h = box.half_extents
    dx = max(abs(inv[0]) - h[0], 0.0)
    dy = max(abs(inv[1]) - h[1], 0.0)
    dz = max(abs(inv[2]) - h[2], 0.0)
    outside = math.sqrt(dx * dx + dy * dy + dz * dz)
    if outside > 0.0:
        return outside
    return -min(h[0] - abs(inv[0]), h[1] - abs(inv[1]), h[2] - abs(inv[2]))


def _pose_after_planar_motion(pose: Pose6D, dx: float, dy: float, dyaw: float) -> Pose6D:
    q = quat_mul(quat_from_yaw(dyaw), pose.orientation)
    return Pose6D((pose.x + dx, pose.y + dy, pose.z), q)


def _motion_blocked(scene: TwinScene, obj: RigidObject, pose: Pose6D,
                    climb_tol: float) -> bool:
    # inclines never block planar motion: objects ride up and settle re-tilts
    # them; steps taller than the climb tolerance (pads, rails, walls) do
    box = obj.at_pose(pose).world_obb()
    if _box_hits_solids(scene, box, tol=1e-6, climb_tol=climb_tol,
                        include_slopes=False) is not None:
        return True
    for other in scene.objects:
        if other.id == obj.id or other.id == scene.held_id:
            continue
        if obbs_overlap(box, other.world_obb(), tol=1e-7):
            return True
    return False


def apply_push(scene: TwinScene, object_id: str, contact: Vec3,
               direction: Vec2, step: float) -> tuple[TwinScene, PushDelta]:
    """One quasi-static push step at a surface contact point.

    Translation is ``step * gain`` along the horizontal unit direction; the
    in-plane rotation is ``kappa * arm * step`` with ``arm`` the signed
    moment arm of the contact about the COM. Motion is clipped against
    terrain and other objects, then the object is settled.
    """
    obj = scene.object(object_id)
    model = scene.push_model
    if not 0.0 < step <= model.step_cap + 1e-12:
        raise ValueError(f"step must be in (0, {model.step_cap}], got {step}")
    n = math.hypot(direction[0], direction[1])
    if abs(n - 1.0) > 1e-6:
        raise ValueError("push direction must be a horizontal unit vector")
    box = obj.world_obb()
    if _surface_distance_to_obb(box, contact) > 5e-3:
        raise ValueError(f"contact point {contact} is not on the object surface")

    gain = scene.push_gain()
    tx = direction[0] * step * gain
    ty = direction[1] * step * gain
    rx = contact[0] - obj.pose.x
    ry = contact[1] - obj.pose.y
    arm = rx * direction[1] - ry * direction[0]
    dyaw = model.kappa * arm * step

    lo, hi = 0.0, 1.0
    if _motion_blocked(scene, obj, _pose_after_planar_motion(obj.pose, tx, ty, dyaw),
                       model.climb_tol):
        for _ in range(14):
            mid = 0.5 * (lo + hi)
            pose_mid = _pose_after_planar_motion(obj.pose, tx * mid, ty * mid, dyaw * mid)
            if _motion_blocked(scene, obj, pose_mid, model.climb_tol):
                hi = mid
            else:
                lo = mid
        frac = lo
        blocked = True
    else:
        frac = 1.0
        blocked = False

    new_pose = _pose_after_planar_motion(obj.pose, tx * frac, ty * frac, dyaw * frac)
    moved = scene.replace_object(obj.at_pose(new_pose))
    outcome = settle(moved, object_id)
    settled = moved.replace_object(moved.object(object_id).at_pose(outcome.final_pose))
    delta = PushDelta(tx * frac, ty * frac, dyaw * frac, blocked, outcome.status)
    return settled, delta


# ---------------------------------------------------------------------------
# pivoting
# ---------------------------------------------------------------------------

def _rotate_pose_about_line(pose: Pose6D, p0: Vec3, axis: Vec3, angle: float) -> Pose6D:
    q = quat_from_axis_angle(axis, angle)
    rel = (pose.x - p0[0], pose.y - p0[1], pose.z - p0[2])
    rot = quat_rotate(q, rel)
    return Pose6D(
        (p0[0] + rot[0], p0[1] + rot[1], p0[2] + rot[2]),
        quat_mul(q, pose.orientation),
    )


def _balance_angle(obj: RigidObject, p0: Vec3, axis: Vec3) -> float:
    """Pivot angle at which the COM crosses the vertical plane through the edge."""
    pose = obj.pose
    rel = (pose.x - p0[0], pose.y - p0[1], pose.z - p0[2])
    ax, ay, az = axis
    dot = rel[0] * ax + rel[1] * ay + rel[2] * az
    perp = (rel[0] - dot * ax, rel[1] - dot * ay, rel[2] - dot * az)
    horiz = math.hypot(perp[0], perp[1])
    vert = perp[2]
    return math.atan2(horiz, max(vert, 1e-9))


def pivot_rotate(scene: TwinScene, object_id: str, pivot_edge: tuple[Vec3, Vec3],
                 angle: float) -> tuple[TwinScene, SettleOutcome]:
    """Rotate an object rigidly about a bottom edge, then settle.

    Below the balance point the object relaxes back to its original rest;
    past it the flip completes onto the adjacent face. The swept volume is
    collision-checked against terrain solids and other objects in 5-degree
    increments; a hit raises SweptCollision.
    """
    obj = scene.object(object_id)
    if abs(angle) > math.pi / 2 + 1e-9:
        raise ValueError("pivot angle magnitude must be <= pi/2")
    p0, p1 = pivot_edge
    box = obj.world_obb()
    edge_ok = False
    for a, b in box.bottom_edges():
        if (_dist3(p0, a) < 5e-3 and _dist3(p1, b) < 5e-3) or (
            _dist3(p0, b) < 5e-3 and _dist3(p1, a) < 5e-3
        ):
            edge_ok = True
            break
    if not edge_ok:
        raise ValueError("pivot_edge is not a bottom edge of the object's box")
    support = surface_under(scene, (0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])))
    edge_z = 0.5 * (p0[2] + p1[2])
    if support is None or abs(edge_z - support[1]) > 5e-3:
        near_cells = [
            c for c in support_cells(scene, exclude_id=object_id)
            if abs(edge_z - c.height_at((p0[0], p0[1]))) <= 5e-3
        ]
        if not near_cells:
            raise ValueError("pivot edge is not in contact with a surface or lip")

    if abs(angle) < 1e-12:
        return scene, SettleOutcome("stable", obj.pose)

    axis = (p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2])
    L = math.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
    if L < 1e-9:
        raise ValueError("degenerate pivot edge")
    axis = (axis[0] / L, axis[1] / L, axis[2] / L)

    # choose the rotation sign that lifts the COM side over the edge
    probe = _rotate_pose_about_line(obj.pose, p0, axis, math.copysign(0.01, angle))
    if probe.z < obj.pose.z - 1e-9:
        angle = -angle  # requested direction would drive the object into the support

    steps = max(1, int(math.ceil(abs(angle) / math.radians(5.0))))
    for i in range(1, steps + 1):
        a = angle * i / steps
        pose_i = _rotate_pose_about_line(obj.pose, p0, axis, a)
        box_i = obj.at_pose(pose_i).world_obb()
        solid = _box_hits_solids(scene, box_i, tol=2e-3)
        if solid is not None:
            raise SweptCollision(
                f"pivot sweep of {object_id} hits {solid.label or 'terrain'} at "
                f"{math.degrees(a):.0f} deg"
            )
        for other in scene.objects:
            if other.id == object_id or other.id == scene.held_id:
                continue
            if obbs_overlap(box_i, other.world_obb(), tol=1e-7):
                raise SweptCollision(f"pivot sweep of {object_id} hits {other.id}")

    balance = _balance_angle(obj, p0, axis)
    if abs(angle) + 1e-9 < balance:
        outcome = settle(scene, object_id)
        settled = scene.replace_object(obj.at_pose(outcome.final_pose))
        return settled, outcome

    flipped = _rotate_pose_about_line(obj.pose, p0, axis, math.copysign(math.pi / 2, angle))
    moved = scene.replace_object(obj.at_pose(flipped))
    outcome = settle(moved, object_id)
    settled = moved.replace_object(moved.object(object_id).at_pose(outcome.final_pose))
    return settled, outcome


def _dist3(a: Vec3, b: Vec3) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


# ---------------------------------------------------------------------------
# serialization (versioned JSON; lengths in meters, angles in degrees)
# ---------------------------------------------------------------------------

SCENE_SCHEMA_VERSION = 1


def scene_to_dict(scene: TwinScene) -> dict:
    return {
        "version": SCENE_SCHEMA_VERSION,
        "role": scene.role,
        "terrain": [
            {
                "kind": t.kind,
                "name": t.name,
                "footprint": [list(v) for v in t.footprint.vertices],
                "height": t.height,
                "extra": dict(t.extra),
            }
            for t in scene.terrain
        ],
        "objects": [
            {
                "id": o.id,
                "shape": {
                    "half_extents": list(o.shape.half_extents),
                    "offset_xyz": list(o.shape.center_pose.position),
                    "offset_quat_wxyz": list(o.shape.center_pose.orientation),
                },
                "pose": {
                    "xyz": list(o.pose.position),
                    "quat_wxyz": list(o.pose.orientation),
                },
                "mass": o.mass,
                "friction": o.friction,
                "tool_spec": None
                if o.tool_spec is None
                else {
                    "kind": o.tool_spec.kind,
                    "effective_length": o.tool_spec.effective_length,
                    "tip_offset": list(o.tool_spec.tip_offset),
                },
            }
            for o in scene.objects
        ],
        "robot": {
            "base_position": list(scene.robot.base_position),
            "reach_min": scene.robot.reach_min,
            "reach_max": scene.robot.reach_max,
            "gripper_aperture": scene.robot.gripper_aperture,
            "finger_clearance": scene.robot.finger_clearance,
        },
        "dynamics_perturbation": {
            "friction_scale": scene.dynamics_perturbation.friction_scale,
            "push_gain_scale": scene.dynamics_perturbation.push_gain_scale,
        },
        "push_model": {
            "gain": scene.push_model.gain,
            "kappa": scene.push_model.kappa,
            "step_cap": scene.push_model.step_cap,
            "climb_tol": scene.push_model.climb_tol,
        },
        "held_id": scene.held_id,
    }


def scene_from_dict(data: dict) -> TwinScene:
    if data.get("version") != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema version {data.get('version')!r}")
    terrain = tuple(
        TerrainFeature(
            kind=t["kind"],
            footprint=Polygon2(tuple((v[0], v[1]) for v in t["footprint"])),
            height=t["height"],
            extra=dict(t.get("extra", {})),
            name=t.get("name", ""),
        )
        for t in data["terrain"]
    )
    objects = []
    for o in data["objects"]:
        shape = Obb(
            Pose6D(tuple(o["shape"].get("offset_xyz", (0, 0, 0))),
                   tuple(o["shape"].get("offset_quat_wxyz", (1, 0, 0, 0)))),
            tuple(o["shape"]["half_extents"]),
        )
        ts = o.get("tool_spec")
        objects.append(
            RigidObject(
                id=o["id"],
                shape=shape,
                pose=Pose6D(tuple(o["pose"]["xyz"]), tuple(o["pose"]["quat_wxyz"])),
                mass=o.get("mass", 0.2),
                friction=o.get("friction", 0.5),
                tool_spec=None
                if ts is None
                else ToolSpec(ts["kind"], ts["effective_length"], tuple(ts["tip_offset"])),
            )
        )
    r = data["robot"]
    robot = RobotModel(
        base_position=tuple(r["base_position"]),
        reach_min=r["reach_min"],
        reach_max=r["reach_max"],
        gripper_aperture=r["gripper_aperture"],
        finger_clearance=r["finger_clearance"],
    )
    dp = data.get("dynamics_perturbation", {})
    pm = data.get("push_model", {})
    return TwinScene(
        terrain=terrain,
        objects=tuple(objects),
        robot=robot,
        role=data.get("role", "twin"),
        dynamics_perturbation=DynamicsPerturbation(
            friction_scale=dp.get("friction_scale", 1.0),
            push_gain_scale=dp.get("push_gain_scale", 0.85),
        ),
        push_model=PushModel(
            gain=pm.get("gain", 1.0),
            kappa=pm.get("kappa", 50.0),
            step_cap=pm.get("step_cap", 0.02),
            climb_tol=pm.get("climb_tol", 0.012),
        ),
        held_id=data.get("held_id"),
    )


def scene_to_json(scene: TwinScene, indent: int | None = None) -> str:
    return json.dumps(scene_to_dict(scene), indent=indent, sort_keys=True)


def scene_from_json(text: str) -> TwinScene:
    return scene_from_dict(json.loads(text))
