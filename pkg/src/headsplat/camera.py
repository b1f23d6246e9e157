"""Pinhole cameras, Plücker ray maps and multi-view camera rigs.

World convention: the head sits at the origin, +Y is up and the front
camera lies on the +Z axis looking toward -Z. Camera frames are x-right,
y-down, z-forward. Rays are sampled through pixel centers (offset 0.5).

Azimuth is measured from +Z toward -X, so azimuth 90 ("left") sits on the
viewer's left when looking at the face from the front camera (-X).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONVENTION = (
    "world: right-handed, Y-up, head centered at origin, front camera on +Z; "
    "camera: x-right, y-down, z-forward (toward look_at); pinhole, square pixels, "
    "principal point at image center; rays through pixel centers (+0.5); "
    "azimuth from +Z toward -X, canonical left camera on -X (viewer's left)"
)

DEFAULT_RADIUS = 4.0
DEFAULT_FOV_DEG = 40.0
CANONICAL_VIEWS = ("front", "left", "right", "back")
CANONICAL_AZIMUTHS = (0.0, 90.0, 270.0, 180.0)


class CameraError(ValueError):
    pass


def look_at_rotation(position, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world rotation whose columns are the camera x, y, z axes."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    n = np.linalg.norm(forward)
    if n < 1e-12:
        raise CameraError("look_at target coincides with the camera position")
    forward /= n
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        raise CameraError("up vector is parallel to the viewing direction")
    right /= rn
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


def quaternion_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = (float(c) for c in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Camera:
    """A pinhole camera.

    ``look_at`` and ``up`` are kept verbatim so the camera JSON round-trips
    bit-exactly; the rotation is derived from them. Cameras built from a
    quaternion store a derived look-at point one unit ahead.
    """

    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float]
    fov_y_deg: float
    height: int
    width: int
    rotation: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise CameraError(f"image extents must be positive, got {self.height}x{self.width}")
        if not 0.0 < self.fov_y_deg < 180.0:
            raise CameraError(f"vertical field of view must lie in (0, 180) degrees, got {self.fov_y_deg}")
        if self.rotation is None:
            object.__setattr__(self, "rotation", look_at_rotation(self.position, self.look_at, self.up))

    @classmethod
    def from_quaternion(cls, position, q, fov_y_deg: float, height: int, width: int) -> "Camera":
        q = np.asarray(q, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise CameraError(f"orientation quaternion must be unit length, |q| = {np.linalg.norm(q):.8f}")
        rot = quaternion_to_matrix(q)
        pos = np.asarray(position, dtype=np.float64)
        target = pos + rot[:, 2]
        return cls(tuple(pos.tolist()), tuple(target.tolist()), tuple((-rot[:, 1]).tolist()),
                   fov_y_deg, height, width, rotation=rot)

    @property
    def fov_y(self) -> float:
        return math.radians(self.fov_y_deg)

    @property
    def focal(self) -> float:
        return 0.5 * self.height / math.tan(0.5 * self.fov_y)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.position, dtype=np.float64)

    def world_to_camera(self) -> tuple[np.ndarray, np.ndarray]:
        """(R, t) with x_cam = R @ x_world + t."""
        r = self.rotation.T
        return r, -r @ self.center

    def pixel_directions(self) -> np.ndarray:
        """Unit world-space ray directions through every pixel center, (H, W, 3)."""
        f = self.focal
        ys = (np.arange(self.height) + 0.5 - 0.5 * self.height) / f
        xs = (np.arange(self.width) + 0.5 - 0.5 * self.width) / f
        gx, gy = np.meshgrid(xs, ys)
        d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
        d = d_cam @ self.rotation.T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def to_dict(self, view_id: str) -> dict:
        return {"id": view_id, "position": list(self.position), "look_at": list(self.look_at), "up": list(self.up)}


def plucker_embed(cam: Camera) -> np.ndarray:
    """Per-pixel Plücker coordinates (d, o x d) as a (6, H, W) array."""
    d = cam.pixel_directions()
    m = np.cross(np.broadcast_to(cam.center, d.shape), d)
    return np.concatenate([d, m], axis=-1).transpose(2, 0, 1)


def ray_from_plucker(pl: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest point to the origin and direction of each ray in a (6, ...) map."""
    d = np.moveaxis(pl[:3], 0, -1)
    m = np.moveaxis(pl[3:6], 0, -1)
    return np.cross(d, m), d


def point_to_ray_distance(points: np.ndarray, origin: np.ndarray, direction: np.ndarray) -> np.ndarray:
    rel = points - origin
    d = direction / np.linalg.norm(direction, axis=-1, keepdims=True)
    return np.linalg.norm(rel - (rel * d).sum(-1, keepdims=True) * d, axis=-1)


def orbit_position(radius: float, azimuth_deg: float, elevation_deg: float) -> tuple[float, float, float]:
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    return (-radius * math.sin(az) * math.cos(el), radius * math.sin(el), radius * math.cos(az) * math.cos(el))


@dataclass
class CameraRig:
    """An ordered set of cameras sharing one resolution and field of view."""

    cameras: list[Camera]
    kind: str
    view_ids: list[str] = None

    def __post_init__(self):
        if self.view_ids is None:
            self.view_ids = [f"{i:03d}" for i in range(len(self.cameras))]
        if len(set(self.view_ids)) != len(self.view_ids):
            raise CameraError("view ids must be unique within a rig")
        if len(self.view_ids) != len(self.cameras):
            raise CameraError("one view id per camera is required")

    def __len__(self) -> int:
        return len(self.cameras)

    def __getitem__(self, i) -> Camera:
        return self.cameras[i]

    def __iter__(self):
        return iter(self.cameras)

    @property
    def resolution(self) -> tuple[int, int]:
        c = self.cameras[0]
        return c.height, c.width

    def subset(self, indices) -> "CameraRig":
        return CameraRig([self.cameras[i] for i in indices], self.kind, [self.view_ids[i] for i in indices])

    def plucker_maps(self) -> np.ndarray:
        """Stacked per-view Plücker maps, (V, H, W, 6)."""
        return np.stack([plucker_embed(c).transpose(1, 2, 0) for c in self.cameras])

    def to_json(self) -> str:
        if not self.cameras:
            raise CameraError("cannot serialize an empty rig")
        c0 = self.cameras[0]
        doc = {
            "convention": CONVENTION,
            "rig_kind": self.kind,
            "fov_y_deg": c0.fov_y_deg,
            "resolution": [c0.height, c0.width],
            "views": [c.to_dict(v) for c, v in zip(self.cameras, self.view_ids)],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CameraRig":
        doc = json.loads(text)
        h, w = doc["resolution"]
        cams = [Camera(tuple(v["position"]), tuple(v["look_at"]), tuple(v["up"]), doc["fov_y_deg"], h, w)
                for v in doc["views"]]
        return cls(cams, doc.get("rig_kind", "unknown"), [v["id"] for v in doc["views"]])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CameraRig":
        return cls.from_json(Path(path).read_text())


def _orbit_camera(radius, az, el, fov_deg, h, w, target=(0.0, 0.0, 0.0)) -> Camera:
    return Camera(orbit_position(radius, az, el), tuple(float(t) for t in target), (0.0, 1.0, 0.0), fov_deg, h, w)


def canonical_four(radius: float = DEFAULT_RADIUS, height: int = 64, width: int = 64,
                   fov_deg: float = DEFAULT_FOV_DEG) -> CameraRig:
    """Front, left, right and back cameras at zero elevation looking at the origin."""
    if radius <= 0:
        raise CameraError(f"radius must be positive, got {radius}")
    cams = [_orbit_camera(radius, az, 0.0, fov_deg, height, width) for az in CANONICAL_AZIMUTHS]
    return CameraRig(cams, "canonical-four", list(CANONICAL_VIEWS))


def ring_sizes(n: int, elevations) -> list[int]:
    """Split n cameras across rings as evenly as possible.

    Leftover cameras go to the rings closest to zero elevation first.
    """
    k = len(elevations)
    sizes = [n // k] * k
    for i in sorted(range(k), key=lambda i: (abs(elevations[i]), i))[: n % k]:
        sizes[i] += 1
    return sizes


def circular_rig(n: int = 40, radius: float = DEFAULT_RADIUS, elevations=(-20.0, 0.0, 20.0),
                 height: int = 64, width: int = 64, fov_deg: float = DEFAULT_FOV_DEG,
                 counts=None) -> CameraRig:
    """Cameras on elevation rings at equal azimuth spacing, all targeting the origin.

    ``counts`` fixes the number of cameras per ring; otherwise ``n`` is split
    by :func:`ring_sizes`. Azimuths start at 0 (frontal) on every ring.
    """
    elevations = list(elevations)
    if not elevations:
        raise CameraError("at least one elevation ring is required")
    if n < 1:
        raise CameraError(f"camera count must be at least 1, got {n}")
    if counts is None:
        counts = ring_sizes(n, elevations)
    elif len(counts) != len(elevations) or sum(counts) != n:
        raise CameraError(f"ring counts {list(counts)} do not match {len(elevations)} rings / {n} cameras")
    cams = []
    for el, m in zip(elevations, counts):
        for j in range(m):
            cams.append(_orbit_camera(radius, 360.0 * j / m, el, fov_deg, height, width))
    return CameraRig(cams, "fixed-circular")


def accessory_rig(radius: float = DEFAULT_RADIUS, height: int = 64, width: int = 64,
                  fov_deg: float = DEFAULT_FOV_DEG) -> CameraRig:
    """The 16-view pattern: 8 views at 0 degrees, 4 at -10, 4 at +10."""
    return circular_rig(16, radius, (0.0, -10.0, 10.0), height, width, fov_deg, counts=(8, 4, 4))


@dataclass(frozen=True)
class RandomBounds:
    r_min: float = 3.2
    r_max: float = 4.8
    elev_min: float = -30.0
    elev_max: float = 30.0
    target_jitter: float = 0.15

    def validate(self) -> None:
        if not 0 < self.r_min <= self.r_max:
            raise CameraError(f"shell radii must satisfy 0 < r_min <= r_max, got [{self.r_min}, {self.r_max}]")
        if not -90 < self.elev_min <= self.elev_max < 90:
            raise CameraError(f"elevation range must satisfy -90 < min <= max < 90, got [{self.elev_min}, {self.elev_max}]")
        if self.target_jitter < 0:
            raise CameraError("target jitter must be non-negative")


def random_rig(n: int = 40, seed: int = 0, bounds: RandomBounds = RandomBounds(), height: int = 64,
               width: int = 64, fov_deg: float = DEFAULT_FOV_DEG) -> CameraRig:
    """Seeded cameras inside a spherical shell aimed at jittered points near the origin."""
    bounds.validate()
    rng = np.random.default_rng(seed)
    cams = []
    for _ in range(n):
        r = rng.uniform(bounds.r_min, bounds.r_max)
        az = rng.uniform(0.0, 360.0)
        el = rng.uniform(bounds.elev_min, bounds.elev_max)
        target = rng.uniform(-bounds.target_jitter, bounds.target_jitter, size=3)
        cams.append(_orbit_camera(float(r), float(az), float(el), fov_deg, height, width, target))
    return CameraRig(cams, "random")
