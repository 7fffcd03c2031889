"""SE(2)/SE(3) math, oriented boxes, polygons, and sampling primitives.

Conventions
-----------
- Quaternions are (w, x, y, z), Hamilton product, right-handed frames.
- Angles are radians internally; degree-valued results say so in their name
  or docstring.
- Yaw is the rotation of the body x-axis about world +z, wrapped to (-pi, pi].
- 2D polygons are counter-clockwise and simple; the interior lies to the
  left of each directed edge.

Everything in this module is pure and allocation-light: poses and polygons
are frozen dataclasses over plain float tuples so they can be shared freely
across threads and used inside controller loops without numpy call overhead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

_BOUNDARY_TOL = 1e-9
_UNIT_TOL = 1e-6


# ---------------------------------------------------------------------------
# quaternions
# ---------------------------------------------------------------------------

def quat_identity() -> Quat:
    return (1.0, 0.0, 0.0, 0.0)


def quat_norm(q: Quat) -> float:
    return math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def quat_normalize(q: Quat) -> Quat:
    n = quat_norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero quaternion")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_conjugate(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by + ay * bw + az * bx - ax * bz,
        aw * bz + az * bw + ax * by - ay * bx,
    )


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quat:
    n = math.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
    if n < 1e-12:
        raise ValueError("rotation axis must be non-zero")
    h = 0.5 * angle
    s = math.sin(h) / n
    return (math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s)


def quat_from_yaw(yaw: float) -> Quat:
    h = 0.5 * yaw
    return (math.cos(h), 0.0, 0.0, math.sin(h))


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    # q * (0, v) * q^-1 expanded; cheaper than building matrices per call.
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_to_matrix(q: Quat) -> tuple[Vec3, Vec3, Vec3]:
    """Rows of the rotation matrix for a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return (
        (1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)),
        (2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)),
        (2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)),
    )


def yaw_of(q: Quat) -> float:
    """Heading of the body x-axis projected into the world xy-plane."""
    r = quat_rotate(q, (1.0, 0.0, 0.0))
    return math.atan2(r[1], r[0])


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def geodesic_angle(a: Quat, b: Quat) -> float:
    """Rotation angle between two unit quaternions, in degrees.

    Returns theta in [0, 180] with theta = 2*acos(|<a, b>|); symmetric in its
    arguments and invariant under a global sign flip of either input.
    Raises ValueError when an input deviates from unit norm by more than 1e-6.
    """
    for q in (a, b):
        if abs(quat_norm(q) - 1.0) > _UNIT_TOL:
            raise ValueError(f"quaternion is not unit norm: {q}")
    d = abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3])
    d = min(1.0, d)
    return math.degrees(2.0 * math.acos(d))


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose6D:
    """Rigid transform in SE(3): position in meters + unit quaternion (wxyz)."""

    position: Vec3
    orientation: Quat = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        p = tuple(float(c) for c in self.position)
        if len(p) != 3 or not all(math.isfinite(c) for c in p):
            raise ValueError(f"position must be 3 finite floats, got {self.position}")
        q = tuple(float(c) for c in self.orientation)
        if len(q) != 4:
            raise ValueError("orientation must have 4 components (w, x, y, z)")
        n = quat_norm(q)  # type: ignore[arg-type]
        if abs(n - 1.0) > _UNIT_TOL:
            raise ValueError(f"orientation is not unit norm ({n:.2e} off): {q}")
        q = (q[0] / n, q[1] / n, q[2] / n, q[3] / n)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]

    @property
    def z(self) -> float:
        return self.position[2]

    @property
    def yaw(self) -> float:
        return yaw_of(self.orientation)

    def transform_point(self, local: Vec3) -> Vec3:
        r = quat_rotate(self.orientation, local)
        return (r[0] + self.x, r[1] + self.y, r[2] + self.z)

    def with_position(self, position: Vec3) -> "Pose6D":
        return Pose6D(position, self.orientation)

    def with_orientation(self, orientation: Quat) -> "Pose6D":
        return Pose6D(self.position, orientation)


@dataclass(frozen=True)
class PoseSE2:
    """Planar pose: x, y in meters, yaw in radians wrapped to (-pi, pi]."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))


def se2_error(current: Pose6D, target: Pose6D) -> tuple[float, float]:
    """Planar distance (m) and wrapped absolute heading difference (deg)."""
    dx = target.x - current.x
    dy = target.y - current.y
    dyaw = wrap_angle(target.yaw - current.yaw)
    return (math.hypot(dx, dy), abs(math.degrees(dyaw)))


# ---------------------------------------------------------------------------
# polygons
# ---------------------------------------------------------------------------

def _signed_area(vertices) -> float:
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _segments_properly_intersect(p0, p1, q0, q1) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 < 1e-30:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = max(0.0, min(1.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


@dataclass(frozen=True)
class Polygon2:
    """Simple counter-clockwise polygon in the world xy-plane (meters)."""

    vertices: tuple[Vec2, ...]

    def __post_init__(self):
        verts = tuple((float(v[0]), float(v[1])) for v in self.vertices)
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if _signed_area(verts) <= 0.0:
            raise ValueError("polygon must be counter-clockwise with positive area")
        n = len(verts)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(i - j) in (1, n - 1):
                    continue
                if _segments_properly_intersect(
                    verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]
                ):
                    raise ValueError("polygon must be simple (non-self-intersecting)")
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def centroid(self) -> Vec2:
        a = 0.0
        cx = 0.0
        cy = 0.0
        n = len(self.vertices)
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            cross = x0 * y1 - x1 * y0
            a += cross
            cx += (x0 + x1) * cross
            cy += (y0 + y1) * cross
        a *= 0.5
        return (cx / (6.0 * a), cy / (6.0 * a))

    def edges(self):
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    def is_convex(self, tol: float = 1e-12) -> bool:
        n = len(self.vertices)
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            cx, cy = self.vertices[(i + 2) % n]
            if (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) < -tol:
                return False
        return True

    def boundary_distance(self, p: Vec2) -> float:
        return min(_point_segment_distance(p, a, b) for a, b in self.edges())

    def closest_boundary_point(self, p: Vec2) -> Vec2:
        best = None
        best_d = math.inf
        px, py = p
        for a, b in self.edges():
            ax, ay = a
            bx, by = b
            dx, dy = bx - ax, by - ay
            L2 = dx * dx + dy * dy
            t = 0.0 if L2 < 1e-30 else max(
                0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2)
            )
            qx, qy = ax + t * dx, ay + t * dy
            d = math.hypot(px - qx, py - qy)
            if d < best_d:
                best_d = d
                best = (qx, qy)
        return best  # type: ignore[return-value]

    def sample_boundary(self, spacing: float) -> list[Vec2]:
        """Points along the boundary at roughly `spacing`, vertices included."""
        pts: list[Vec2] = []
        for a, b in self.edges():
            length = math.hypot(b[0] - a[0], b[1] - a[1])
            steps = max(1, int(math.ceil(length / spacing)))
            for k in range(steps):
                t = k / steps
                pts.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
        return pts

    def translated(self, dx: float, dy: float) -> "Polygon2":
        return Polygon2(tuple((x + dx, y + dy) for x, y in self.vertices))


def point_in_polygon(p: Vec2, poly: Polygon2, tol: float = _BOUNDARY_TOL) -> bool:
    """True iff p is strictly inside or on the boundary (within tol)."""
    if poly.boundary_distance(p) <= tol:
        return True
    # crossing number; boundary grazing already handled above
    x, y = p
    inside = False
    for (x0, y0), (x1, y1) in poly.edges():
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xi > x:
                inside = not inside
    return inside


def signed_interior_margin(p: Vec2, poly: Polygon2) -> float:
    """Distance to the boundary, positive inside and negative outside."""
    d = poly.boundary_distance(p)
    return d if point_in_polygon(p, poly, tol=0.0) or d <= _BOUNDARY_TOL else -d


def rect_polygon(cx: float, cy: float, half_x: float, half_y: float,
                 yaw: float = 0.0) -> Polygon2:
    c, s = math.cos(yaw), math.sin(yaw)
    corners = []
    for lx, ly in ((-half_x, -half_y), (half_x, -half_y), (half_x, half_y), (-half_x, half_y)):
        corners.append((cx + c * lx - s * ly, cy + s * lx + c * ly))
    return Polygon2(tuple(corners))


def convex_hull(points: list[Vec2]) -> list[Vec2]:
    """Andrew monotone chain; returns CCW hull without the repeated endpoint."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[Vec2] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    upper: list[Vec2] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def triangulate(poly: Polygon2) -> list[tuple[Vec2, Vec2, Vec2]]:
    """Ear-clipping triangulation; handles simple non-convex polygons."""
    verts = list(poly.vertices)
    tris: list[tuple[Vec2, Vec2, Vec2]] = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def in_triangle(p, a, b, c):
        d0 = cross(a, b, p)
        d1 = cross(b, c, p)
        d2 = cross(c, a, p)
        return d0 >= -1e-15 and d1 >= -1e-15 and d2 >= -1e-15

    guard = 0
    while len(verts) > 3 and guard < 10000:
        guard += 1
        n = len(verts)
        clipped = False
        for i in range(n):
            a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
            if cross(a, b, c) <= 1e-15:
                continue  # reflex or degenerate corner
            if any(
                in_triangle(p, a, b, c)
                for j, p in enumerate(verts)
                if p not in (a, b, c)
            ):
                continue
            tris.append((a, b, c))
            verts.pop(i)
            clipped = True
            break
        if not clipped:
            break
    if len(verts) == 3:
        tris.append((verts[0], verts[1], verts[2]))
    return tris


def _convex_sat(va, vb) -> bool:
    eps = 1e-12
    for verts_a, verts_b in ((va, vb), (vb, va)):
        n = len(verts_a)
        for i in range(n):
            x0, y0 = verts_a[i]
            x1, y1 = verts_a[(i + 1) % n]
            ax, ay = y0 - y1, x1 - x0  # outward-ish normal; direction irrelevant
            amin = amax = ax * verts_a[0][0] + ay * verts_a[0][1]
            for vx, vy in verts_a[1:]:
                d = ax * vx + ay * vy
                amin = min(amin, d)
                amax = max(amax, d)
            bmin = bmax = ax * verts_b[0][0] + ay * verts_b[0][1]
            for vx, vy in verts_b[1:]:
                d = ax * vx + ay * vy
                bmin = min(bmin, d)
                bmax = max(bmax, d)
            if amax < bmin - eps or bmax < amin - eps:
                return False
    return True


def polygons_intersect(a: Polygon2, b: Polygon2) -> bool:
    """True iff areas overlap or boundaries touch.

    Convex inputs use a separating-axis test; non-convex inputs are
    ear-clipped into triangles first.
    """
    parts_a = [a.vertices] if a.is_convex() else [t for t in triangulate(a)]
    parts_b = [b.vertices] if b.is_convex() else [t for t in triangulate(b)]
    for pa in parts_a:
        for pb in parts_b:
            if _convex_sat(pa, pb):
                return True
    return False


def clip_convex(subject: list[Vec2], clip: list[Vec2]) -> list[Vec2]:
    """Sutherland-Hodgman intersection of two convex CCW vertex rings."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        cx0, cy0 = clip[i]
        cx1, cy1 = clip[(i + 1) % n]
        ex, ey = cx1 - cx0, cy1 - cy0

        def inside(p):
            return ex * (p[1] - cy0) - ey * (p[0] - cx0) >= -1e-12

        def intersect(p, q):
            dx, dy = q[0] - p[0], q[1] - p[1]
            denom = ex * dy - ey * dx
            if abs(denom) < 1e-18:
                return q
            t = (ex * (cy0 - p[1]) - ey * (cx0 - p[0])) / denom
            t = max(0.0, min(1.0, t))
            return (p[0] + t * dx, p[1] + t * dy)

        new_output: list[Vec2] = []
        prev = output[-1]
        for cur in output:
            if inside(cur):
                if not inside(prev):
                    new_output.append(intersect(prev, cur))
                new_output.append(cur)
            elif inside(prev):
                new_output.append(intersect(prev, cur))
            prev = cur
        output = new_output
    return output


def ring_area(ring: list[Vec2]) -> float:
    if len(ring) < 3:
        return 0.0
    return abs(_signed_area(ring))


def segment_intersects_polygon(p0: Vec2, p1: Vec2, poly: Polygon2) -> bool:
    """True iff the closed segment touches or crosses the polygon."""
    if point_in_polygon(p0, poly) or point_in_polygon(p1, poly):
        return True
    for a, b in poly.edges():
        if _segments_properly_intersect(p0, p1, a, b):
            return True
        if _point_segment_distance(a, p0, p1) <= _BOUNDARY_TOL:
            return True
    return False


# ---------------------------------------------------------------------------
# oriented bounding boxes
# ---------------------------------------------------------------------------

_LOCAL_FACES: tuple[tuple[int, float], ...] = (
    (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0),
)


@dataclass(frozen=True)
class Obb:
    """Oriented box: center pose plus strictly positive half extents."""

    center_pose: Pose6D
    half_extents: Vec3

    def __post_init__(self):
        h = tuple(float(c) for c in self.half_extents)
        if len(h) != 3 or any(c <= 0.0 for c in h):
            raise ValueError(f"half extents must be strictly positive, got {h}")
        object.__setattr__(self, "half_extents", h)

    def corners(self) -> list[Vec3]:
        hx, hy, hz = self.half_extents
        out = []
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                for sz in (-1.0, 1.0):
                    out.append(self.center_pose.transform_point((sx * hx, sy * hy, sz * hz)))
        return out

    def bottom_z(self) -> float:
        return min(c[2] for c in self.corners())

    def top_z(self) -> float:
        return max(c[2] for c in self.corners())

    def down_face(self) -> tuple[int, float]:
        """Local face (axis index, sign) whose outward normal points most downward."""
        best = None
        best_dz = math.inf
        for axis, sign in _LOCAL_FACES:
            local = [0.0, 0.0, 0.0]
            local[axis] = sign
            world = quat_rotate(self.center_pose.orientation, tuple(local))
            if world[2] < best_dz:
                best_dz = world[2]
                best = (axis, sign)
        return best  # type: ignore[return-value]

    def face_corners(self, axis: int, sign: float) -> list[Vec3]:
        """World corners of one local face, ordered CCW seen from outside."""
        h = self.half_extents
        a, b = [i for i in range(3) if i != axis]
        pts_local = []
        for sa, sb in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            c = [0.0, 0.0, 0.0]
            c[axis] = sign * h[axis]
            c[a] = sa * h[a]
            c[b] = sb * h[b]
            pts_local.append(tuple(c))
        return [self.center_pose.transform_point(p) for p in pts_local]

    def footprint(self) -> Polygon2:
        """Convex hull of all corners projected to the xy-plane."""
        hull = convex_hull([(c[0], c[1]) for c in self.corners()])
        return Polygon2(tuple(hull))

    def resting_face_polygon(self) -> Polygon2:
        """Footprint of the face currently pointing down (contact patch)."""
        axis, sign = self.down_face()
        pts = [(c[0], c[1]) for c in self.face_corners(axis, sign)]
        return Polygon2(tuple(convex_hull(pts)))

    def bottom_edges(self) -> list[tuple[Vec3, Vec3]]:
        """The four edges of the down face, as world point pairs."""
        axis, sign = self.down_face()
        cs = self.face_corners(axis, sign)
        return [(cs[i], cs[(i + 1) % 4]) for i in range(4)]

    def largest_face(self) -> tuple[int, float]:
        """Local face with the largest area (positive-sign representative)."""
        h = self.half_extents
        areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]]
        axis = areas.index(max(areas))
        return (axis, 1.0)


def obbs_overlap(a: Obb, b: Obb, tol: float = 1e-9) -> bool:
    """Volume-overlap test via footprint SAT plus z-interval intersection."""
    if a.bottom_z() >= b.top_z() - tol or b.bottom_z() >= a.top_z() - tol:
        return False
    fa = [(c[0], c[1]) for c in a.corners()]
    fb = [(c[0], c[1]) for c in b.corners()]
    ha = convex_hull(fa)
    hb = convex_hull(fb)
    if len(ha) < 3 or len(hb) < 3:
        return False
    inter = clip_convex(ha, hb)
    return ring_area(inter) > tol


# ---------------------------------------------------------------------------
# sampling and contact utilities
# ---------------------------------------------------------------------------

def farthest_point_sample(points: list[Vec2], k: int, start: int = 0) -> list[int]:
    """Greedy farthest-point sampling over 2D points.

    The first index is `start`; each subsequent index maximizes its minimum
    distance to all points already selected. Ties break toward the lowest
    index, making the result deterministic.
    """
    n = len(points)
    if n == 0:
        raise ValueError("points must be non-empty")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    if not 0 <= start < n:
        raise ValueError(f"start index {start} out of range")

    chosen = [start]
    sx, sy = points[start]
    min_d2 = [
        (p[0] - sx) ** 2 + (p[1] - sy) ** 2 for p in points
    ]
    for _ in range(k - 1):
        best_i = 0
        best_d = -1.0
        for i, d in enumerate(min_d2):
            if d > best_d + 1e-15:
                best_d = d
                best_i = i
        chosen.append(best_i)
        bx, by = points[best_i]
        for i, p in enumerate(points):
            d2 = (p[0] - bx) ** 2 + (p[1] - by) ** 2
            if d2 < min_d2[i]:
                min_d2[i] = d2
    return chosen


def contact_normals(footprint: Polygon2, samples: list[Vec2]) -> list[Vec2]:
    """Inward unit normals at boundary sample points.

    Samples lying on an edge get that edge's inward normal; samples within
    1e-9 of a vertex get the normalized bisector of the two adjacent edge
    normals. Samples farther than 1e-6 from the boundary are rejected.
    """
    verts = footprint.vertices
    n = len(verts)
    edge_normals = []
    for a, b in footprint.edges():
        dx, dy = b[0] - a[0], b[1] - a[1]
        L = math.hypot(dx, dy)
        edge_normals.append((-dy / L, dx / L))  # interior is to the left (CCW)

    out: list[Vec2] = []
    for p in samples:
        if footprint.boundary_distance(p) > 1e-6:
            raise ValueError(f"sample {p} is not on the polygon boundary")
        vertex_idx = None
        for i, v in enumerate(verts):
            if math.hypot(p[0] - v[0], p[1] - v[1]) <= 1e-9:
                vertex_idx = i
                break
        if vertex_idx is not None:
            na = edge_normals[(vertex_idx - 1) % n]
            nb = edge_normals[vertex_idx]
            bx, by = na[0] + nb[0], na[1] + nb[1]
            L = math.hypot(bx, by)
            out.append((bx / L, by / L))
            continue
        best_edge = 0
        best_d = math.inf
        for i in range(n):
            d = _point_segment_distance(p, verts[i], verts[(i + 1) % n])
            if d < best_d:
                best_d = d
                best_edge = i
        out.append(edge_normals[best_edge])
    return out
