"""Planar 3-joint arm environment: kinematics, scene rendering, object
motion, context construction and contact geometry.

The workspace square [-1.1, 1.1]^2 maps affinely onto a 48x48 image, so the
fully extended arm (total reach 1.0) stays in frame.  The arm is drawn as
three anti-aliased 2 px wide strokes and the object as a filled disk of
radius 2 px; coverage-based intensities keep the reward smooth under
sub-pixel motion.
"""

import numpy as np

from .errors import DomainError
from .saliency import IMAGE_SIZE

SEGMENT_LENGTH = 1.0 / 3.0
NUM_JOINTS = 3
JOINT_LIMIT = np.pi
WORKSPACE_HALF = 1.1
UNITS_PER_PIXEL = 2.0 * WORKSPACE_HALF / IMAGE_SIZE
LINE_HALF_WIDTH_PX = 1.0
OBJECT_RADIUS_PX = 2.0
OBJECT_RADIUS = OBJECT_RADIUS_PX * UNITS_PER_PIXEL
HAND_RADIUS = 2.0 * UNITS_PER_PIXEL
INNER_RADIUS = 0.2
OUTER_RADIUS = 1.0

CONTACT_NONE = "none"
CONTACT_ARM = "arm"
CONTACT_HAND = "hand"

# pixel centers in workspace units, row 0 at the top (+y)
_COLS = -WORKSPACE_HALF + (np.arange(IMAGE_SIZE) + 0.5) * UNITS_PER_PIXEL
_ROWS = WORKSPACE_HALF - (np.arange(IMAGE_SIZE) + 0.5) * UNITS_PER_PIXEL


def joint_positions(angles):
    """Base plus the three joint/effector positions of the kinematic chain."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (NUM_JOINTS,):
        raise DomainError(f"expected {NUM_JOINTS} joint angles")
    if not np.all(np.isfinite(angles)):
        raise DomainError("joint angles must be finite")
    pts = np.zeros((NUM_JOINTS + 1, 2))
    theta = 0.0
    for i in range(NUM_JOINTS):
        theta += angles[i]
        pts[i + 1] = pts[i] + SEGMENT_LENGTH * np.array([np.cos(theta), np.sin(theta)])
    return pts


def forward_kinematics(angles):
    """Effector position; the zero pose points along +x with reach 1.0."""
    return joint_positions(angles)[-1]


def _to_pixel(point):
    """Workspace point -> (row, col) in pixel units (fractional)."""
    col = (point[0] + WORKSPACE_HALF) / UNITS_PER_PIXEL - 0.5
    row = (WORKSPACE_HALF - point[1]) / UNITS_PER_PIXEL - 0.5
    return row, col


def _paint_capsule(img, p0, p1, half_width):
    """Max-composite an anti-aliased thick segment (coverage ramp of 1 px)."""
    r0, c0 = _to_pixel(p0)
    r1, c1 = _to_pixel(p1)
    pad = half_width + 1.5
    rmin = max(int(np.floor(min(r0, r1) - pad)), 0)
    rmax = min(int(np.ceil(max(r0, r1) + pad)), IMAGE_SIZE - 1)
    cmin = max(int(np.floor(min(c0, c1) - pad)), 0)
    cmax = min(int(np.ceil(max(c0, c1) + pad)), IMAGE_SIZE - 1)
    if rmin > rmax or cmin > cmax:
        return
    rows = np.arange(rmin, rmax + 1)[:, None]
    cols = np.arange(cmin, cmax + 1)[None, :]
    dr = r1 - r0
    dc = c1 - c0
    seg2 = dr * dr + dc * dc
    if seg2 == 0.0:
        t = np.zeros((rows.shape[0], cols.shape[1]))
    else:
        t = np.clip(((rows - r0) * dr + (cols - c0) * dc) / seg2, 0.0, 1.0)
    dist = np.hypot(rows - (r0 + t * dr), cols - (c0 + t * dc))
    cover = np.clip(half_width + 0.5 - dist, 0.0, 1.0)
    region = img[rmin:rmax + 1, cmin:cmax + 1]
    np.maximum(region, cover, out=region)


def render_scene(angles, obj=None):
    """Deterministic 48x48 grayscale rendering of arm and object."""
    img = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
    pts = joint_positions(angles)
    for i in range(NUM_JOINTS):
        _paint_capsule(img, pts[i], pts[i + 1], LINE_HALF_WIDTH_PX)
    if obj is not None:
        obj = np.asarray(obj, dtype=float)
        if np.max(np.abs(obj)) > WORKSPACE_HALF:
            raise DomainError("object lies outside the rendered workspace")
        _paint_capsule(img, obj, obj, OBJECT_RADIUS_PX)
    return img


class ObjectWalk:
    """Smooth random walk of the object, reflected at the reachable annulus."""

    ACCEL_SIGMA = 0.05
    BLEND = 0.05
    MAX_SPEED = 0.05

    def __init__(self, position=None, velocity=(0.0, 0.0)):
        if position is None:
            position = np.array([0.6, 0.0])
        self.position = np.asarray(position, dtype=float).copy()
        self.velocity = np.asarray(velocity, dtype=float).copy()

    @classmethod
    def random(cls, rng):
        radius = np.sqrt(rng.uniform(INNER_RADIUS ** 2, OUTER_RADIUS ** 2))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        return cls(position=radius * np.array([np.cos(angle), np.sin(angle)]))

    def step(self, rng):
        g = rng.normal(0.0, self.ACCEL_SIGMA, size=2)
        v = (1.0 - self.BLEND) * self.velocity + self.BLEND * g
        speed = float(np.hypot(*v))
        if speed > self.MAX_SPEED:
            v *= self.MAX_SPEED / speed
        pos = self.position + v
        r = float(np.hypot(*pos))
        if r > OUTER_RADIUS:
            n = pos / r
            pos = n * (2.0 * OUTER_RADIUS - r)
            v = v - 2.0 * float(v @ n) * n
        elif r < INNER_RADIUS:
            n = pos / max(r, 1e-12)
            pos = n * (2.0 * INNER_RADIUS - r)
            v = v - 2.0 * float(v @ n) * n
        r = float(np.hypot(*pos))
        if not INNER_RADIUS <= r <= OUTER_RADIUS:
            pos = pos / max(r, 1e-12) * np.clip(r, INNER_RADIUS, OUTER_RADIUS)
        self.position = pos
        self.velocity = v
        return self.position.copy()


def step_object(walk, rng):
    return walk.step(rng)


def build_context(obj, effector_prev, rng, noise_std=0.1):
    """Context vector (object; previous effector; two noise entries around 0.5)."""
    obj = np.asarray(obj, dtype=float)
    effector_prev = np.asarray(effector_prev, dtype=float)
    if obj.shape != (2,) or effector_prev.shape != (2,):
        raise DomainError("object and effector must be 2-d points")
    if noise_std > 0.0:
        noise = 0.5 + noise_std * rng.standard_normal(2)
    else:
        noise = np.full(2, 0.5)
    return np.concatenate([obj, effector_prev, noise])


def _point_segment_distance(point, p0, p1):
    d = p1 - p0
    seg2 = float(d @ d)
    if seg2 == 0.0:
        return float(np.hypot(*(point - p0)))
    t = np.clip(float((point - p0) @ d) / seg2, 0.0, 1.0)
    return float(np.hypot(*(point - (p0 + t * d))))


def contact_test(angles, obj):
    """'hand' if the effector disk overlaps the object disk, else 'arm' if any
    segment stroke does, else 'none'."""
    obj = np.asarray(obj, dtype=float)
    pts = joint_positions(angles)
    if float(np.hypot(*(pts[-1] - obj))) <= HAND_RADIUS + OBJECT_RADIUS:
        return CONTACT_HAND
    line_radius = LINE_HALF_WIDTH_PX * UNITS_PER_PIXEL
    for i in range(NUM_JOINTS):
        if _point_segment_distance(obj, pts[i], pts[i + 1]) <= line_radius + OBJECT_RADIUS:
            return CONTACT_ARM
    return CONTACT_NONE


def write_trajectory(path, rows):
    """Delimited text log: t, a1..a3, x1, x2, o1, o2, r per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t\ta1\ta2\ta3\tx1\tx2\to1\to2\tr\n")
        for t, a, x, o, r in rows:
            vals = [repr(float(v)) for v in (*a, *x, *o, r)]
            fh.write(str(int(t)) + "\t" + "\t".join(vals) + "\n")
