"""Mental-rehearsal pipeline: anchors, pose sampling, settle-filtering, and
sub-goal selection.

A primitive's region is resolved to a 3D anchor point, candidate 6D object
poses are sampled around it under the primitive's allowed degrees of
freedom, every candidate is placed and settled in a twin snapshot, the
unstable ones are discarded, and survivors are ranked by reachability. The
top four are rendered and one becomes the primitive's sub-goal pose.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import _support_height_below, assess_grasp
from .domain import PrimitiveInstance, PrimitiveKind, RegionDescriptor
from .geometry import (
    Pose6D,
    Vec3,
    geodesic_angle,
    quat_mul,
    wrap_angle,
    yaw_of,
)
from .render import render_scene
from .twin import (
    PlacementCollision,
    SettleOutcome,
    SweptCollision,
    TwinScene,
    flat_pose_on_support,
    pivot_rotate,
    place_at,
    raised_support,
    settle,
    stability_margin,
)

RegionResolver = Callable[[TwinScene, str], Vec3]
RegionRegistry = dict[str, RegionResolver]


class NoFeasiblePose(Exception):
    """Every sampled candidate toppled, fell, or collided."""


class DegenerateRay(ValueError):
    """A back-projection ray runs parallel to the support plane."""


class SelectionError(Exception):
    """The selector's reply could not be mapped to a candidate index."""


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 16
    disc_radius: float = 0.06  # candidate position spread around the anchor
    yaw_spread_deg: float = 45.0
    max_keep: int = 4
    # steps that carry an exact target pose have ~zero region uncertainty;
    # sample tightly so every retained candidate still serves the goal
    hint_disc_radius: float = 0.015
    hint_yaw_spread_deg: float = 4.0


# ---------------------------------------------------------------------------
# camera model and grounding math
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    intrinsics: tuple[tuple[float, float, float], ...]  # 3x3 row-major
    extrinsics: Pose6D  # world-from-camera
    image_size: tuple[int, int]  # (width, height) pixels

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=float)
        if k.shape != (3, 3) or abs(np.linalg.det(k)) < 1e-12:
            raise ValueError("intrinsics must be an invertible 3x3 matrix")

    def _rotation(self) -> np.ndarray:
        from .geometry import quat_to_matrix

        return np.asarray(quat_to_matrix(self.extrinsics.orientation), dtype=float)

    def project(self, world: Vec3) -> tuple[float, float]:
        """World point to pixel coordinates."""
        r = self._rotation()
        t = np.asarray(self.extrinsics.position, dtype=float)
        cam = r.T @ (np.asarray(world, dtype=float) - t)
        if cam[2] <= 1e-9:
            raise ValueError("point is behind the camera")
        k = np.asarray(self.intrinsics, dtype=float)
        uvw = k @ cam
        return (uvw[0] / uvw[2], uvw[1] / uvw[2])

    def backproject(self, pixel: tuple[float, float], plane_z: float) -> Vec3:
        """Pixel ray intersected with the horizontal plane z = plane_z."""
        w, h = self.image_size
        if not (0 <= pixel[0] <= w and 0 <= pixel[1] <= h):
            raise ValueError(f"pixel {pixel} outside the {w}x{h} image")
        k_inv = np.linalg.inv(np.asarray(self.intrinsics, dtype=float))
        ray_cam = k_inv @ np.array([pixel[0], pixel[1], 1.0])
        r = self._rotation()
        ray_world = r @ ray_cam
        origin = np.asarray(self.extrinsics.position, dtype=float)
        if abs(ray_world[2]) < 1e-9:
            raise DegenerateRay("view ray is parallel to the support plane")
        t = (plane_z - origin[2]) / ray_world[2]
        if t <= 0:
            raise DegenerateRay("support plane lies behind the camera")
        hit = origin + t * ray_world
        return (float(hit[0]), float(hit[1]), float(hit[2]))


def resolve_anchor(
    region: RegionDescriptor,
    scene: TwinScene,
    registry: RegionRegistry,
    mode: str = "scripted",
    object_id: str | None = None,
    pixel: tuple[float, float] | None = None,
    camera: CameraModel | None = None,
) -> Vec3:
    """Resolve a region description to a 3D world anchor point.

    Scripted mode computes the point geometrically via the scenario's
    registry. Grounded mode back-projects a pixel through the camera onto
    the plane of the highest table surface.
    """
    if mode == "grounded":
        if pixel is None or camera is None:
            raise ValueError("grounded mode needs a pixel and a camera")
        tables = [t for t in scene.terrain if t.kind == "table_surface"]
        plane_z = max((t.height for t in tables), default=0.0)
        return camera.backproject(pixel, plane_z)
    resolver = registry.get(region.name)
    if resolver is None:
        raise KeyError(f"unknown region {region.name!r}")
    return resolver(scene, object_id or "")


# ---------------------------------------------------------------------------
# candidate sampling
# ---------------------------------------------------------------------------

def sample_candidates(
    primitive: PrimitiveInstance,
    anchor: Vec3,
    scene: TwinScene,
    n: int | None = None,
    rng_seed: int = 0,
    cfg: SamplerConfig | None = None,
) -> list[Pose6D]:
    """Sample candidate 6D poses under the primitive's allowed DOF.

    Pushes vary (x, y, yaw) with z/roll/pitch pinned to supported-flat
    values; rotations enumerate face flips about the current bottom edges
    (plus the no-op orientation); moveto samples full placements over the
    anchor's surface. When the primitive carries a target pose hint, the
    hint itself is always included so rehearsal can validate the requested
    pose directly. Deterministic in rng_seed.
    """
    cfg = cfg or SamplerConfig()
    n = cfg.n_samples if n is None else n
    if n < 4:
        raise ValueError("need at least 4 samples")
    rng = np.random.default_rng(rng_seed)
    obj = scene.object(primitive.object_id)
    hint = primitive.target_pose_hint

    if primitive.kind is PrimitiveKind.ROTATE:
        return _rotate_candidates(scene, primitive.object_id)

    disc = cfg.hint_disc_radius if hint is not None else cfg.disc_radius
    yaw_spread = cfg.hint_yaw_spread_deg if hint is not None else cfg.yaw_spread_deg

    out: list[Pose6D] = []
    if primitive.kind is PrimitiveKind.PUSH:
        base_yaw = yaw_of(hint.orientation) if hint is not None else obj.pose.yaw
        if hint is not None:
            out.append(flat_pose_on_support(scene, obj, hint.x, hint.y, base_yaw))
        else:
            out.append(flat_pose_on_support(scene, obj, anchor[0], anchor[1], base_yaw))
            out.extend(_overhang_probes(scene, obj, anchor))
        while len(out) < n:
            r = disc * math.sqrt(rng.uniform())
            th = rng.uniform(0.0, 2.0 * math.pi)
            yaw = base_yaw + math.radians(rng.uniform(-yaw_spread, yaw_spread))
            out.append(
                flat_pose_on_support(
                    scene, obj, anchor[0] + r * math.cos(th),
                    anchor[1] + r * math.sin(th), yaw,
                )
            )
        return out[:max(n, len(out))]

    if primitive.kind is PrimitiveKind.MOVETO:
        base_q = hint.orientation if hint is not None else obj.pose.orientation
        base_yaw = yaw_of(base_q)
        if hint is not None:
            out.append(hint)
        else:
            out.append(
                flat_pose_on_support(scene, obj, anchor[0], anchor[1], base_yaw,
                                     base_orientation=base_q)
            )
        while len(out) < n:
            r = disc * math.sqrt(rng.uniform())
            th = rng.uniform(0.0, 2.0 * math.pi)
            if hint is not None:
                yaw = base_yaw + math.radians(rng.uniform(-yaw_spread, yaw_spread))
            else:
                yaw = rng.uniform(-math.pi, math.pi)
            out.append(
                flat_pose_on_support(
                    scene, obj, anchor[0] + r * math.cos(th),
                    anchor[1] + r * math.sin(th), yaw, base_orientation=base_q,
                )
            )
        return out

    raise ValueError(f"{primitive.kind.value} does not take a sub-goal pose")


def _support_drop_direction(scene: TwinScene, object_id: str, anchor: Vec3):
    """Unit direction from the anchor toward falling support, if any.

    Ties among equally-low probe directions (a void arc past a straight
    edge) average out to the boundary's outward normal.
    """
    ref = _support_height_below(scene, object_id, (anchor[0], anchor[1]))
    if ref is None:
        return None
    heights = []
    for k in range(16):
        a = 2.0 * math.pi * k / 16.0
        d = (math.cos(a), math.sin(a))
        h = _support_height_below(
            scene, object_id, (anchor[0] + 0.02 * d[0], anchor[1] + 0.02 * d[1])
        )
        heights.append((-1e9 if h is None else h, d))
    low = min(h for h, _ in heights)
    if low > ref - 0.01:
        return None  # support is effectively flat around the anchor
    tied = [d for h, d in heights if h <= low + 1e-6]
    sx = sum(d[0] for d in tied)
    sy = sum(d[1] for d in tied)
    norm = math.hypot(sx, sy)
    if norm < 1e-9:
        return tied[0]
    return (sx / norm, sy / norm)


def _overhang_probes(scene: TwinScene, obj, anchor: Vec3) -> list[Pose6D]:
    """Deterministic poses whose long side juts over the falling support.

    Uniform sampling almost never lands in the narrow band where an edge
    overhang is deep enough to grasp yet the COM keeps a safe margin, so
    these probes place the object there directly (both long-axis headings,
    two overhang depths).
    """
    drop = _support_drop_direction(scene, obj.id, anchor)
    if drop is None:
        return []
    hx, hy, _hz = obj.half_extents
    long_axis_yaw = math.atan2(drop[1], drop[0]) + (math.pi / 2.0 if hy > hx else 0.0)
    # (leading half-extent, yaw aligning that axis with the drop direction);
    # the short axis needs no in-place rotation when it is deep enough
    options = [(max(hx, hy), long_axis_yaw)]
    if min(hx, hy) >= 0.034 + 0.012:
        options.append((min(hx, hy), long_axis_yaw + math.pi / 2.0))
    probes = []
    for h_lead, axis_yaw in options:
        for yaw in (axis_yaw, axis_yaw + math.pi):
            for overhang in (0.034, 0.026):
                cx = anchor[0] - drop[0] * (h_lead - overhang)
                cy = anchor[1] - drop[1] * (h_lead - overhang)
                probes.append(flat_pose_on_support(scene, obj, cx, cy, yaw))
    return probes


def _rotate_candidates(scene: TwinScene, object_id: str) -> list[Pose6D]:
    """Face flips about each bottom edge, plus keeping the current face."""
    twin = scene.as_twin()
    obj = twin.object(object_id)
    candidates = [obj.pose]
    for edge in obj.world_obb().bottom_edges():
        try:
            _, outcome = pivot_rotate(twin, object_id, edge, math.pi / 2)
        except (SweptCollision, ValueError):
            continue
        if outcome.status == "stable":
            candidates.append(outcome.final_pose)
    return candidates


# ---------------------------------------------------------------------------
# feasibility filter and ranking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    pose: Pose6D
    settle: SettleOutcome
    reachability_score: float
    rendering: str
    stability_margin: float = 0.0
    source_index: int = 0


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        if not 1 <= len(self.candidates) <= 4:
            raise ValueError("candidate set must hold 1..4 candidates")
        scores = [c.reachability_score for c in self.candidates]
        if any(scores[i] < scores[i + 1] - 1e-12 for i in range(len(scores) - 1)):
            raise ValueError("candidates must be sorted by reachability descending")
        if any(c.settle.status != "stable" for c in self.candidates):
            raise ValueError("only stable candidates may be retained")


def filter_and_rank(
    candidates: list[Pose6D],
    object_id: str,
    scene: TwinScene,
    cfg: SamplerConfig | None = None,
    render: bool = True,
) -> CandidateSet:
    """Place, settle, and rank candidates; keep the stable top four.

    Candidates that interpenetrate terrain or other objects are discarded,
    as are those that topple, fall off, or end up resting on the bare
    ground. Survivors score ``clamp(1 - d/R, 0, 1)`` with d the horizontal
    distance from the robot base and R its maximum reach.
    """
    if not candidates:
        raise ValueError("candidate list must be non-empty")
    cfg = cfg or SamplerConfig()
    twin = scene.as_twin()
    robot = twin.robot
    survivors: list[Candidate] = []
    for i, pose in enumerate(candidates):
        try:
            placed = place_at(twin, object_id, pose)
        except PlacementCollision:
            continue
        outcome = settle(placed, object_id)
        if outcome.status != "stable":
            continue
        rested = placed.replace_object(
            placed.object(object_id).at_pose(outcome.final_pose)
        )
        if not raised_support(rested, object_id):
            continue  # resting on the bare ground counts as off the table
        d = math.hypot(
            outcome.final_pose.x - robot.base_position[0],
            outcome.final_pose.y - robot.base_position[1],
        )
        score = max(0.0, min(1.0, 1.0 - d / robot.reach_max))
        svg = render_scene(
            rested, highlight={object_id: outcome.final_pose}
        ) if render else ""
        survivors.append(
            Candidate(
                pose=outcome.final_pose,
                settle=outcome,
                reachability_score=score,
                rendering=svg,
                stability_margin=stability_margin(rested, object_id),
                source_index=i,
            )
        )
    if not survivors:
        raise NoFeasiblePose(
            f"no feasible sub-goal pose for {object_id}: all {len(candidates)} "
            f"candidates toppled, fell off, or collided"
        )
    # scores within 0.05 of the best are reachability noise: they collapse
    # into one tie so sampling order (anchor and probes first) decides there
    best = max(c.reachability_score for c in survivors)
    survivors = [
        c if c.reachability_score < best - 0.05
        else Candidate(c.pose, c.settle, best, c.rendering, c.stability_margin,
                       c.source_index)
        for c in survivors
    ]
    survivors.sort(key=lambda c: (-c.reachability_score, c.source_index))
    return CandidateSet(tuple(survivors[: cfg.max_keep]))


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

def _pose_gap(pose: Pose6D, target: Pose6D) -> float:
    d = math.hypot(target.x - pose.x, target.y - pose.y)
    return d + 0.005 * geodesic_angle(pose.orientation, target.orientation)


_EXEC_SLOP = 0.012  # push-controller position tolerance plus a little


def _grasp_score(scene: TwinScene, object_id: str, candidate: Candidate):
    """Prefer candidates whose grasp survives controller slop, then stability
    margin, then overhang, then the least yaw work to get there."""
    probe = scene.as_twin().replace_object(
        scene.object(object_id).at_pose(candidate.pose)
    )
    a = assess_grasp(probe, object_id)
    robust = a.ok and (a.rule == "top" or a.overhang >= 0.02 + _EXEC_SLOP)
    margin = min(candidate.stability_margin, 0.02)
    current = scene.object(object_id).pose
    yaw_cost = abs(math.degrees(wrap_angle(candidate.pose.yaw - current.yaw)))
    return (
        1 if robust else 0,
        1 if a.ok else 0,
        round(margin, 4),
        round(min(a.overhang, 0.045), 4),
        -round(yaw_cost, 1),
        candidate.reachability_score,
    )


def select_subgoal(
    cset: CandidateSet,
    context: dict,
    selector: str = "scripted",
    scene: TwinScene | None = None,
    object_id: str = "",
    llm: Callable[[list[str], dict], str] | None = None,
    trace: list | None = None,
) -> Candidate:
    """Choose the sub-goal pose from the retained candidates.

    Scripted rules, by primitive context:
      1. the step carries a target pose hint: closest candidate to the hint
         (position plus orientation gap, yaw-agnostic for rotations);
      2. next step is a grasp: prefer candidates the grasp rules accept,
         then larger stability margin, then larger overhang;
      3. next step is a rotation: least yaw work (the flip ignores yaw and
         extra in-place rotation near obstacles is pure risk);
      4. otherwise: highest reachability.

    The llm selector sends the rendered prompts and expects a candidate
    index in the reply; malformed or out-of-range replies fall back to the
    scripted rule and are recorded in the trace.
    """
    if selector == "llm":
        if llm is None:
            raise ValueError("llm selector requires a callable")
        try:
            reply = llm([c.rendering for c in cset.candidates], context)
            match = re.search(r"-?\d+", reply)
            if match is None:
                raise SelectionError(f"no index in selector reply: {reply!r}")
            k = int(match.group())
            if not 0 <= k < len(cset.candidates):
                raise SelectionError(f"selector index {k} out of range")
            return cset.candidates[k]
        except SelectionError as exc:
            if trace is not None:
                trace.append({"event": "selector_fallback", "reason": str(exc)})

    current: PrimitiveInstance | None = context.get("current")
    nxt: PrimitiveInstance | None = context.get("next")

    if current is not None and current.target_pose_hint is not None:
        hint = current.target_pose_hint
        if current.kind is PrimitiveKind.ROTATE:
            return min(
                cset.candidates,
                key=lambda c: (round(_yaw_free_orientation_gap(
                    c.pose.orientation, hint.orientation), 1), c.source_index),
            )
        return min(
            cset.candidates,
            key=lambda c: (_pose_gap(c.pose, hint), c.source_index),
        )
    if nxt is not None and nxt.kind is PrimitiveKind.GRASP and scene is not None:
        return max(
            cset.candidates,
            key=lambda c: _grasp_score(scene, object_id or nxt.object_id, c),
        )
    if nxt is not None and nxt.kind is PrimitiveKind.ROTATE and scene is not None:
        cur_yaw = scene.object(object_id or nxt.object_id).pose.yaw
        return min(
            cset.candidates,
            key=lambda c: (
                round(abs(math.degrees(wrap_angle(c.pose.yaw - cur_yaw))), 0),
                -c.reachability_score,
                c.source_index,
            ),
        )
    return cset.candidates[0]


def _yaw_free_orientation_gap(q, target) -> float:
    """Minimal geodesic to the target over in-plane yaw corrections (deg)."""
    best = math.inf
    for yaw_deg in range(0, 360, 3):
        h = math.radians(yaw_deg) / 2.0
        qz = (math.cos(h), 0.0, 0.0, math.sin(h))
        best = min(best, geodesic_angle(quat_mul(qz, q), target))
    return best
