"""Heuristic low-level controllers: push, rotate, grasp, moveto, release.

Controllers consume object-centric sub-goal poses and act in the execution
scene through the twin's quasi-static primitives. They are deterministic
single-threaded loops; each owns one scene chain. Failures come back as
typed ExecError values inside the trace, never as exceptions (exceptions
are reserved for programmer errors such as violated preconditions).

Success is always re-derived from the final scene snapshot, so a controller
cannot report success that the scene does not support.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

from .domain import PrimitiveInstance
from .geometry import (
    Polygon2,
    Pose6D,
    Vec2,
    Vec3,
    clip_convex,
    contact_normals,
    convex_hull,
    farthest_point_sample,
    geodesic_angle,
    point_in_polygon,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    ring_area,
    se2_error,
    wrap_angle,
)
from .twin import (
    PlacementCollision,
    RigidObject,
    RobotModel,
    SweptCollision,
    ToolSpec,
    TwinScene,
    apply_push,
    obbs_overlap,
    pivot_rotate,
    place_at,
    settle,
    support_cells,
    terrain_solids,
)

__all__ = [
    "ErrorKind",
    "ExecError",
    "ExecTrace",
    "PushConfig",
    "GraspConfig",
    "RobotModel",
    "assess_grasp",
    "GraspAssessment",
    "effective_reach",
    "current_tool",
    "exec_push",
    "exec_rotate",
    "exec_grasp",
    "exec_moveto",
    "exec_release",
]

IK_FAILURE_MESSAGE = "Unable to solve an IK solution"


class ErrorKind(enum.Enum):
    IK_FAILURE = "IkFailure"
    OUT_OF_REACH = "OutOfReach"
    COLLISION = "Collision"
    NO_GRASP_FOUND = "NoGraspFound"
    CONVERGENCE_TIMEOUT = "ConvergenceTimeout"
    OBJECT_LOST = "ObjectLost"


@dataclass(frozen=True)
class ExecError:
    kind: ErrorKind
    message: str
    step: PrimitiveInstance | None = None

    def __post_init__(self):
        if not self.message:
            raise ValueError("ExecError message must be non-empty")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "message": self.message,
            "step": None if self.step is None else self.step.describe(),
        }


@dataclass
class ExecTrace:
    entries: list[tuple[int, str, tuple[float, float]]] = field(default_factory=list)
    result: ExecError | None = None  # None means success
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.result is None

    def log(self, snapshot_id: int, phase: str, err: tuple[float, float]):
        self.entries.append((snapshot_id, phase, (round(err[0], 6), round(err[1], 6))))


@dataclass(frozen=True)
class PushConfig:
    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.2
    pos_tol: float = 0.01
    yaw_tol_deg: float = 5.0
    fps_k: int = 8
    max_iters: int = 300
    stall_iters: int = 25
    boundary_spacing: float = 0.01
    approach_len: float = 0.06
    # yaw pushes drift the object; keep them small and let position float
    # inside a hysteresis band so the phases do not thrash
    pos_band: float = 0.04
    yaw_step_cap: float = 0.012
    # align yaw while still far from the target (safe open ground) so the
    # remaining approach is a straight shove that preserves heading
    yaw_early_dist: float = 0.08


@dataclass(frozen=True)
class GraspConfig:
    min_top_height: float = 0.03
    min_overhang: float = 0.02
    lift: float = 0.06
    hover: float = 0.06


@dataclass(frozen=True)
class RotateConfig:
    increment_deg: float = 5.0
    orient_tol_deg: float = 10.0
    max_increments: int = 18


def current_tool(scene: TwinScene) -> ToolSpec | None:
    if scene.held_id is None:
        return None
    return scene.object(scene.held_id).tool_spec


def effective_reach(robot: RobotModel, tool: ToolSpec | None = None) -> float:
    """Maximum contact distance: bare reach plus a held tool's length."""
    return robot.reach_max + (tool.effective_length if tool is not None else 0.0)


def _reach_ok(robot: RobotModel, point: Vec2, tool: ToolSpec | None = None) -> bool:
    d = math.hypot(point[0] - robot.base_position[0], point[1] - robot.base_position[1])
    return robot.reach_min <= d <= effective_reach(robot, tool)


def _grip_point_for(obj_pose: Pose6D, tool: ToolSpec | None) -> Vec2:
    """Where the gripper must be for the held object at this pose."""
    if tool is None:
        return (obj_pose.x, obj_pose.y)
    grip_local = tuple(-c for c in tool.tip_offset)
    g = obj_pose.transform_point(grip_local)
    return (g[0], g[1])


# ---------------------------------------------------------------------------
# grasp rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraspAssessment:
    ok: bool
    rule: str | None  # "top" | "side"
    point: Vec3 | None
    overhang: float
    clearance: float
    failures: tuple[str, ...]


def _min_footprint_width(footprint: Polygon2) -> float:
    verts = footprint.vertices
    best = math.inf
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        L = math.hypot(ex, ey)
        if L < 1e-12:
            continue
        nx, ny = -ey / L, ex / L
        ds = [nx * (vx - ax) + ny * (vy - ay) for vx, vy in verts]
        best = min(best, max(ds) - min(ds))
    return best


def _support_height_below(scene: TwinScene, obj_id: str, p: Vec2) -> float | None:
    best = None
    for cell in support_cells(scene, exclude_id=obj_id):
        if len(cell.ring) < 3:
            continue
        if point_in_polygon(p, Polygon2(tuple(cell.ring))):
            h = cell.height_at(p)
            if best is None or h > best:
                best = h
    return best


def _overhang_edges(scene: TwinScene, obj: RigidObject, cfg: GraspConfig,
                    robot: RobotModel):
    """Overhanging face edges with finger clearance below them.

    Returns (depth, clearance, grasp_point, edge_normal) candidates sorted by
    depth descending.
    """
    box = obj.world_obb()
    axis, sign = box.down_face()
    face = box.face_corners(axis, sign)
    results = []
    for i in range(4):
        a, b = face[i], face[(i + 1) % 4]
        mx, my = 0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])
        edge_z = 0.5 * (a[2] + b[2])
        nx, ny = mx - obj.pose.x, my - obj.pose.y
        L = math.hypot(nx, ny)
        if L < 1e-9:
            continue
        nx, ny = nx / L, ny / L
        # probe just beyond the edge: need a drop big enough for a finger
        fractions = (0.3, 0.5, 0.7)
        depths = []
        clearances = []
        for f in fractions:
            px = a[0] + f * (b[0] - a[0]) + nx * 0.004
            py = a[1] + f * (b[1] - a[1]) + ny * 0.004
            below = _support_height_below(scene, obj.id, (px, py))
            drop = edge_z if below is None else edge_z - below
            if drop < robot.finger_clearance:
                depths.append(0.0)
                clearances.append(drop)
                continue
            # march inward until support rises back near the contact height;
            # the crossing lies within the last 2 mm step, so take its midpoint
            depth = 0.0
            for k in range(1, 41):
                qx = a[0] + f * (b[0] - a[0]) - nx * (0.002 * k)
                qy = a[1] + f * (b[1] - a[1]) - ny * (0.002 * k)
                below_q = _support_height_below(scene, obj.id, (qx, qy))
                if below_q is not None and edge_z - below_q < robot.finger_clearance:
                    depth = 0.002 * k - 0.001
                    break
                depth = 0.002 * k
            depths.append(depth)
            clearances.append(drop)
        depth = min(depths)
        clearance = min(clearances)
        if depth <= 0.0:
            continue
        gp = (mx, my, 0.5 * (box.bottom_z() + box.top_z()))
        results.append((depth, clearance, gp, (nx, ny)))
    results.sort(key=lambda r: -r[0])
    return results


def assess_grasp(scene: TwinScene, object_id: str,
                 cfg: GraspConfig | None = None) -> GraspAssessment:
    """Rule-based graspability check at the object's current pose."""
    cfg = cfg or GraspConfig()
    obj = scene.object(object_id)
    robot = scene.robot
    box = obj.world_obb()
    failures = []

    height = box.top_z() - box.bottom_z()
    footprint = box.footprint()
    min_width = _min_footprint_width(footprint)
    down_axis, down_sign = box.down_face()
    local = [0.0, 0.0, 0.0]
    local[down_axis] = down_sign
    n_world = quat_rotate(obj.world_obb().center_pose.orientation, tuple(local))
    top_is_flat = n_world[2] < -math.cos(math.radians(8.0))

    if not top_is_flat:
        failures.append("top grasp needs a level top face")
    if height < cfg.min_top_height:
        failures.append(
            f"top grasp needs height >= {cfg.min_top_height:.3f} m (got {height:.3f})"
        )
    if min_width > robot.gripper_aperture:
        failures.append(
            f"top grasp needs min width <= {robot.gripper_aperture:.3f} m "
            f"(got {min_width:.3f})"
        )
    if top_is_flat and height >= cfg.min_top_height and min_width <= robot.gripper_aperture:
        gp = (obj.pose.x, obj.pose.y, box.top_z())
        return GraspAssessment(True, "top", gp, 0.0, math.inf, ())

    thickness = height  # side grasps pinch vertically across the slab
    overhangs = _overhang_edges(scene, obj, cfg, robot)
    viable = [o for o in overhangs if o[0] >= cfg.min_overhang]
    if thickness > robot.gripper_aperture:
        failures.append(
            f"side grasp needs thickness <= {robot.gripper_aperture:.3f} m "
            f"(got {thickness:.3f})"
        )
        viable = []
    if not viable:
        if not overhangs:
            failures.append(
                f"side grasp needs an edge overhang >= {cfg.min_overhang:.3f} m "
                f"with finger clearance"
            )
        else:
            failures.append(
                f"side grasp overhang too small (best {overhangs[0][0]:.3f} m "
                f"< {cfg.min_overhang:.3f} m)"
            )
        return GraspAssessment(False, None, None,
                               overhangs[0][0] if overhangs else 0.0,
                               overhangs[0][1] if overhangs else 0.0,
                               tuple(failures))
    depth, clearance, gp, _normal = viable[0]
    return GraspAssessment(True, "side", gp, depth, clearance, ())


def _vertical_approach_blocked(scene: TwinScene, obj: RigidObject) -> str | None:
    """A top-grasp approach descends a column above the object's footprint."""
    box = obj.world_obb()
    hull = box.footprint()
    top = box.top_z()
    for solid in terrain_solids(scene):
        if solid.z1 <= top + 1e-6:
            continue
        if ring_area(clip_convex(list(hull.vertices), list(solid.ring))) > 1e-8:
            return solid.label or "terrain"
    return None


# ---------------------------------------------------------------------------
# push controller
# ---------------------------------------------------------------------------

def _surface_contact(obj: RigidObject, direction: Vec2) -> Vec3:
    """Boundary point antipodal to the push direction, exactly on the box."""
    q = obj.pose.orientation
    inv_q = (q[0], -q[1], -q[2], -q[3])
    d_local = quat_rotate(inv_q, (-direction[0], -direction[1], 0.0))
    dx, dy = d_local[0], d_local[1]
    n = math.hypot(dx, dy)
    if n < 1e-9:
        dx, dy = 1.0, 0.0
    else:
        dx, dy = dx / n, dy / n
    hx, hy, _hz = obj.half_extents
    tx = abs(hx / dx) if abs(dx) > 1e-12 else math.inf
    ty = abs(hy / dy) if abs(dy) > 1e-12 else math.inf
    t = min(tx, ty)
    local = (dx * t, dy * t, 0.0)
    return obj.pose.transform_point(local)


def _approach_blocked(scene: TwinScene, obj_id: str, contact: Vec3,
                      direction: Vec2, cfg: PushConfig) -> str | None:
    """Check the short straight hand approach onto the contact point."""
    sx = contact[0] - direction[0] * cfg.approach_len
    sy = contact[1] - direction[1] * cfg.approach_len
    seg_samples = [(sx + (contact[0] - sx) * t, sy + (contact[1] - sy) * t)
                   for t in (0.0, 0.5, 1.0)]
    for other in scene.objects:
        if other.id == obj_id or other.id == scene.held_id:
            continue
        fp = other.world_obb().footprint()
        ztop = other.world_obb().top_z()
        if ztop < contact[2] - 0.02:
            continue
        for p in seg_samples:
            if point_in_polygon(p, fp):
                return other.id
    for solid in terrain_solids(scene):
        if solid.z1 < contact[2] - 0.01 or solid.z0 > contact[2] + 0.05:
            continue
        ring = Polygon2(tuple(solid.ring))
        for p in seg_samples:
            if point_in_polygon(p, ring):
                return solid.label or "terrain"
    return None


def exec_push(scene: TwinScene, object_id: str, subgoal: Pose6D,
              cfg: PushConfig | None = None,
              step: PrimitiveInstance | None = None,
              snapshots: "itertools.count | None" = None) -> tuple[TwinScene, ExecTrace]:
    """Two-phase planar push: translate toward the sub-goal, then align yaw.

    The translate phase pushes through the COM from the antipodal boundary
    point, which leaves heading untouched. The yaw phase picks spread
    boundary contacts (farthest point sampling) and pushes along their
    inward normals, preferring contacts whose incidental translation points
    back toward the position target so drift self-corrects. Yaw work happens
    while the object is still far from the target or once it is within the
    position band, never during the final approach.
    """
    cfg = cfg or PushConfig()
    snaps = snapshots if snapshots is not None else itertools.count()
    trace = ExecTrace()
    obj = scene.object(object_id)
    if scene.held_id == object_id:
        raise ValueError("cannot push a held object")
    robot = scene.robot
    tool = current_tool(scene)

    def fail(kind: ErrorKind, message: str) -> tuple[TwinScene, ExecTrace]:
        trace.result = ExecError(kind, message, step)
        return scene, trace

    # annulus precheck before any motion
    radius = max(obj.half_extents[0], obj.half_extents[1])
    goal_d = math.hypot(subgoal.x - robot.base_position[0],
                        subgoal.y - robot.base_position[1])
    if goal_d > effective_reach(robot, tool) + radius:
        return fail(
            ErrorKind.OUT_OF_REACH,
            f"push target at {goal_d:.2f} m exceeds reach "
            f"{effective_reach(robot, tool):.2f} m + object radius {radius:.2f} m",
        )

    target_yaw = subgoal.yaw
    prev_pos_err: float | None = None
    stall = 0

    for it in range(cfg.max_iters):
        obj = scene.object(object_id)
        pos_err, yaw_err = se2_error(obj.pose, subgoal)
        trace.iterations = it
        if pos_err <= cfg.pos_tol and yaw_err <= cfg.yaw_tol_deg:
            break

        yaw_phase = yaw_err > cfg.yaw_tol_deg and (
            pos_err <= cfg.pos_band or pos_err >= cfg.yaw_early_dist
        )
        if not yaw_phase:
            phase = "translate"
            vx = subgoal.x - obj.pose.x
            vy = subgoal.y - obj.pose.y
            direction = (vx / pos_err, vy / pos_err)
            contact = _surface_contact(obj, direction)
            derr = 0.0 if prev_pos_err is None else pos_err - prev_pos_err
            raw = cfg.kp * pos_err + cfg.kd * derr
            push_step = max(1e-4, min(scene.push_model.step_cap, raw))
            prev_pos_err = pos_err
        else:
            phase = "align_yaw"
            remaining = wrap_angle(target_yaw - obj.pose.yaw)
            to_goal = (subgoal.x - obj.pose.x, subgoal.y - obj.pose.y)
            direction, contact, arm = _yaw_contact(obj, remaining, cfg, to_goal)
            if arm is None:
                return fail(ErrorKind.CONVERGENCE_TIMEOUT,
                            "no rotating contact available for yaw alignment")
            push_step = max(1e-4, min(
                scene.push_model.step_cap,
                cfg.yaw_step_cap,
                cfg.kp * abs(remaining) / (scene.push_model.kappa * max(abs(arm), 1e-4)),
            ))

        if not _reach_ok(robot, (contact[0], contact[1]), tool):
            return fail(
                ErrorKind.OUT_OF_REACH,
                f"push contact at ({contact[0]:.2f}, {contact[1]:.2f}) is outside "
                f"the reach annulus",
            )
        blocker = _approach_blocked(scene, object_id, contact, direction, cfg)
        if blocker is not None and blocker not in ("table", "ground"):
            return fail(ErrorKind.COLLISION,
                        f"push approach sweeps through {blocker}")

        scene, delta = apply_push(scene, object_id, contact, direction, push_step)
        trace.log(next(snaps), phase, (pos_err, yaw_err))
        if delta.settle_status != "stable":
            return fail(
                ErrorKind.OBJECT_LOST,
                f"object {object_id} {delta.settle_status} during pushing",
            )
        moved = math.hypot(delta.dx, delta.dy) + abs(delta.dyaw) * 0.1
        if moved < 0.1 * push_step:
            stall += 1
            if stall >= cfg.stall_iters:
                return fail(
                    ErrorKind.CONVERGENCE_TIMEOUT,
                    f"pushing made no progress for {stall} consecutive steps",
                )
        else:
            stall = 0
    else:
        obj = scene.object(object_id)
        pos_err, yaw_err = se2_error(obj.pose, subgoal)
        if pos_err > cfg.pos_tol or yaw_err > cfg.yaw_tol_deg:
            return fail(
                ErrorKind.CONVERGENCE_TIMEOUT,
                f"push did not converge in {cfg.max_iters} iterations "
                f"(err {pos_err:.3f} m, {yaw_err:.1f} deg)",
            )

    # success is re-derived from the final scene, never trusted from the loop
    obj = scene.object(object_id)
    pos_err, yaw_err = se2_error(obj.pose, subgoal)
    if pos_err > cfg.pos_tol or yaw_err > cfg.yaw_tol_deg:
        return fail(
            ErrorKind.CONVERGENCE_TIMEOUT,
            f"final alignment error ({pos_err:.3f} m, {yaw_err:.1f} deg) "
            f"exceeds tolerance",
        )
    trace.log(next(snaps), "done", (pos_err, yaw_err))
    return scene, trace


def _yaw_contact(obj: RigidObject, remaining: float, cfg: PushConfig,
                 to_goal: Vec2):
    """Pick a boundary contact whose inward-normal push rotates toward the goal.

    Among contacts with the right rotation sense, prefer one whose incidental
    translation also points toward the position target, so the drift from yaw
    alignment self-corrects instead of accumulating.
    """
    footprint = obj.world_obb().footprint()
    pts = footprint.sample_boundary(cfg.boundary_spacing)
    k = min(cfg.fps_k, len(pts))
    idx = farthest_point_sample(pts, k, 0)
    need = 1.0 if remaining > 0 else -1.0

    def score(points):
        normals = contact_normals(footprint, points)
        out = []
        for p, n in zip(points, normals):
            rx, ry = p[0] - obj.pose.x, p[1] - obj.pose.y
            arm = rx * n[1] - ry * n[0]
            out.append((need * arm, arm, p, n))
        out.sort(key=lambda s: -s[0])
        return out

    scored = score([pts[i] for i in idx])
    # symmetric footprints put the spread contacts on or near zero-moment
    # symmetry lines; when the best FPS arm is weak for an object this size,
    # fall back to scanning the whole boundary
    min_useful = 0.3 * max(obj.half_extents[0], obj.half_extents[1])
    if scored[0][0] <= min_useful:
        scored = score(pts)
    positive = [s for s in scored if s[0] > 1e-6]
    if not positive:
        return (1.0, 0.0), (obj.pose.x, obj.pose.y, obj.pose.z), None
    # among near-maximal moment arms, prefer drift toward the position target
    strong = [s for s in positive if s[0] >= 0.6 * positive[0][0]]
    helpful = [
        s for s in strong
        if s[3][0] * to_goal[0] + s[3][1] * to_goal[1] >= -1e-9
    ]
    pick = helpful[0] if helpful else positive[0]
    _, arm, p, n = pick
    contact = _clamp_to_surface(obj, (p[0], p[1], obj.pose.z))
    return (n[0], n[1]), contact, arm


def _clamp_to_surface(obj: RigidObject, point: Vec3) -> Vec3:
    q = obj.pose.orientation
    inv_q = (q[0], -q[1], -q[2], -q[3])
    rel = (point[0] - obj.pose.x, point[1] - obj.pose.y, point[2] - obj.pose.z)
    local = quat_rotate(inv_q, rel)
    h = obj.half_extents
    clamped = tuple(max(-h[i], min(h[i], local[i])) for i in range(3))
    return obj.pose.transform_point(clamped)


# ---------------------------------------------------------------------------
# rotate controller
# ---------------------------------------------------------------------------

def flip_orientation_about(pose: Pose6D, edge: tuple[Vec3, Vec3]):
    """Orientation and sign of a completed 90-degree flip over a bottom edge."""
    p0, p1 = edge
    axis = (p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2])
    L = math.sqrt(sum(c * c for c in axis))
    axis = (axis[0] / L, axis[1] / L, axis[2] / L)
    for sign in (1.0, -1.0):
        q = quat_from_axis_angle(axis, sign * math.pi / 2)
        rel = (pose.x - p0[0], pose.y - p0[1], pose.z - p0[2])
        rot = quat_rotate(q, rel)
        if p0[2] + rot[2] >= pose.z - 1e-9:
            return quat_mul(q, pose.orientation), sign
    return quat_mul(quat_from_axis_angle(axis, math.pi / 2), pose.orientation), 1.0


def exec_rotate(scene: TwinScene, object_id: str, subgoal: Pose6D,
                cfg: RotateConfig | None = None,
                step: PrimitiveInstance | None = None,
                snapshots: "itertools.count | None" = None) -> tuple[TwinScene, ExecTrace]:
    """Out-of-plane reorientation by pivoting about a bottom box edge.

    Chooses the bottom edge whose completed flip lands closest to the target
    orientation, then rehearses growing tilt angles in 5-degree increments
    until the balance point is crossed and the flip completes.
    """
    cfg = cfg or RotateConfig()
    snaps = snapshots if snapshots is not None else itertools.count()
    trace = ExecTrace()
    obj = scene.object(object_id)
    if scene.held_id == object_id:
        raise ValueError("cannot rotate a held object")

    def fail(kind: ErrorKind, message: str) -> tuple[TwinScene, ExecTrace]:
        trace.result = ExecError(kind, message, step)
        return scene, trace

    start_gap = geodesic_angle(obj.pose.orientation, subgoal.orientation)
    if start_gap <= cfg.orient_tol_deg:
        trace.log(next(snaps), "done", (0.0, start_gap))
        return scene, trace

    box = obj.world_obb()
    edges = box.bottom_edges()
    best_edge = None
    best_gap = math.inf
    for edge in edges:
        q_flip, _ = flip_orientation_about(obj.pose, edge)
        gap = _yaw_free_gap(q_flip, subgoal.orientation)
        if gap < best_gap - 1e-9:
            best_gap = gap
            best_edge = edge
    assert best_edge is not None

    # contact on the face opposite the pivot edge
    p0, p1 = best_edge
    mid = ((p0[0] + p1[0]) / 2, (p0[1] + p1[1]) / 2)
    away = (obj.pose.x - mid[0], obj.pose.y - mid[1])
    L = math.hypot(away[0], away[1])
    if L > 1e-9:
        away = (away[0] / L, away[1] / L)
        contact_xy = (obj.pose.x + away[0] * L, obj.pose.y + away[1] * L)
    else:
        contact_xy = (obj.pose.x, obj.pose.y)
    contact = (contact_xy[0], contact_xy[1], box.top_z() - 0.01)
    if not _reach_ok(scene.robot, contact_xy):
        return fail(
            ErrorKind.OUT_OF_REACH,
            f"pivot contact at ({contact_xy[0]:.2f}, {contact_xy[1]:.2f}) is "
            f"outside the reach annulus",
        )

    inc = math.radians(cfg.increment_deg)
    for i in range(1, cfg.max_increments + 1):
        angle = min(i * inc, math.pi / 2)
        try:
            new_scene, outcome = pivot_rotate(scene, object_id, best_edge, angle)
        except SweptCollision as exc:
            return fail(ErrorKind.COLLISION, str(exc))
        except ValueError as exc:
            return fail(ErrorKind.CONVERGENCE_TIMEOUT, f"pivot rejected: {exc}")
        trace.log(next(snaps), "pivot", (math.degrees(angle), 0.0))
        flipped = geodesic_angle(outcome.final_pose.orientation,
                                 obj.pose.orientation) > 45.0
        if flipped:
            final_gap = geodesic_angle(outcome.final_pose.orientation,
                                       subgoal.orientation)
            if final_gap > cfg.orient_tol_deg:
                return fail(
                    ErrorKind.CONVERGENCE_TIMEOUT,
                    f"flip landed {final_gap:.1f} deg from the sub-goal orientation",
                )
            trace.log(next(snaps), "done", (0.0, final_gap))
            return new_scene, trace
        if angle >= math.pi / 2 - 1e-9:
            break
    return fail(
        ErrorKind.CONVERGENCE_TIMEOUT,
        "balance point was never crossed within the increment budget",
    )


def _yaw_free_gap(q, target) -> float:
    """Minimal geodesic angle to the target over all in-plane yaw corrections."""
    best = math.inf
    for yaw_deg in range(0, 360, 3):
        qz = quat_from_axis_angle((0.0, 0.0, 1.0), math.radians(yaw_deg))
        best = min(best, geodesic_angle(quat_mul(qz, q), target))
    return best


# ---------------------------------------------------------------------------
# prehensile controllers
# ---------------------------------------------------------------------------

def exec_grasp(scene: TwinScene, object_id: str,
               cfg: GraspConfig | None = None,
               step: PrimitiveInstance | None = None,
               snapshots: "itertools.count | None" = None) -> tuple[TwinScene, ExecTrace]:
    """Rule-based grasp: top pinch on a graspable prism, or a side pinch on an
    overhanging edge with finger clearance below it."""
    cfg = cfg or GraspConfig()
    snaps = snapshots if snapshots is not None else itertools.count()
    trace = ExecTrace()
    if scene.held_id is not None:
        raise ValueError("gripper is not free")
    obj = scene.object(object_id)

    def fail(kind: ErrorKind, message: str) -> tuple[TwinScene, ExecTrace]:
        trace.result = ExecError(kind, message, step)
        return scene, trace

    assessment = assess_grasp(scene, object_id, cfg)
    if not assessment.ok:
        return fail(ErrorKind.NO_GRASP_FOUND,
                    "no grasp pose found: " + "; ".join(assessment.failures))
    gp = assessment.point
    assert gp is not None
    if not _reach_ok(scene.robot, (gp[0], gp[1])):
        return fail(
            ErrorKind.OUT_OF_REACH,
            f"grasp point at ({gp[0]:.2f}, {gp[1]:.2f}) is outside the reach annulus",
        )
    if assessment.rule == "top":
        blocker = _vertical_approach_blocked(scene, obj)
        if blocker is not None:
            return fail(ErrorKind.COLLISION,
                        f"grasp approach from above sweeps through {blocker}")

    lifted_pose = Pose6D(
        (obj.pose.x, obj.pose.y, obj.pose.z + cfg.lift), obj.pose.orientation
    )
    held_scene = scene.with_held(object_id)
    try:
        held_scene = place_at(held_scene, object_id, lifted_pose)
    except PlacementCollision as exc:
        return fail(ErrorKind.COLLISION, f"lift after grasp collides: {exc}")
    trace.log(next(snaps), "grasp", (0.0, 0.0))
    return held_scene, trace


def exec_moveto(scene: TwinScene, subgoal: Pose6D,
                cfg: GraspConfig | None = None,
                step: PrimitiveInstance | None = None,
                snapshots: "itertools.count | None" = None) -> tuple[TwinScene, ExecTrace]:
    """Transport the held object on a straight line at hover height, then
    lower it onto the sub-goal pose (still held)."""
    cfg = cfg or GraspConfig()
    snaps = snapshots if snapshots is not None else itertools.count()
    trace = ExecTrace()
    if scene.held_id is None:
        raise ValueError("no object is held")
    object_id = scene.held_id
    obj = scene.object(object_id)
    tool = current_tool(scene)

    def fail(kind: ErrorKind, message: str) -> tuple[TwinScene, ExecTrace]:
        trace.result = ExecError(kind, message, step)
        return scene, trace

    grip = _grip_point_for(subgoal, tool)
    if not _reach_ok(scene.robot, grip):
        return fail(ErrorKind.IK_FAILURE, IK_FAILURE_MESSAGE)

    # hover sweep along the straight line against walls and other objects
    start = obj.pose
    hover_z = max(start.z, subgoal.z) + cfg.hover
    dist = math.hypot(subgoal.x - start.x, subgoal.y - start.y)
    steps = max(2, int(dist / 0.02))
    for i in range(steps + 1):
        t = i / steps
        x = start.x + (subgoal.x - start.x) * t
        y = start.y + (subgoal.y - start.y) * t
        hover_pose = Pose6D((x, y, hover_z), subgoal.orientation)
        hover_box = obj.at_pose(hover_pose).world_obb()
        hull = convex_hull([(c[0], c[1]) for c in hover_box.corners()])
        for solid in terrain_solids(scene):
            if solid.z1 <= hover_box.bottom_z() + 1e-6:
                continue  # solid entirely below the carried object
            if hover_box.top_z() <= solid.z0 + 1e-6:
                continue  # solid entirely above (ceilings cleared underneath)
            if ring_area(clip_convex(hull, list(solid.ring))) > 1e-8:
                return fail(
                    ErrorKind.COLLISION,
                    f"transport path crosses {solid.label or 'terrain'}",
                )
        for other in scene.objects:
            if other.id == object_id:
                continue
            if obbs_overlap(hover_box, other.world_obb(), tol=1e-7):
                return fail(ErrorKind.COLLISION,
                            f"transport path crosses {other.id}")
        trace.log(next(snaps), "transport", (dist * (1 - t), 0.0))

    try:
        lowered = place_at(scene, object_id, subgoal)
    except PlacementCollision as exc:
        return fail(ErrorKind.COLLISION, f"lowering onto the sub-goal collides: {exc}")
    trace.log(next(snaps), "done", (0.0, 0.0))
    return lowered, trace


def exec_release(scene: TwinScene,
                 step: PrimitiveInstance | None = None,
                 snapshots: "itertools.count | None" = None) -> tuple[TwinScene, ExecTrace]:
    """Open the gripper and settle the released object where it is."""
    snaps = snapshots if snapshots is not None else itertools.count()
    trace = ExecTrace()
    if scene.held_id is None:
        raise ValueError("no object is held")
    object_id = scene.held_id
    released = scene.with_held(None)
    outcome = settle(released, object_id)
    released = released.replace_object(
        released.object(object_id).at_pose(outcome.final_pose)
    )
    trace.log(next(snaps), f"release:{outcome.status}", (0.0, 0.0))
    return released, trace
