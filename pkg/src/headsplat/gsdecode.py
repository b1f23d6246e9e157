"""Gaussian decoder: denoised tokens -> one 3D Gaussian per canonical-view pixel.

Each token is expanded to p*p point features by a linear layer and a pixel
shuffle, then a per-point MLP emits 14 raw channels::

    [depth, offset_u, offset_v | scale x3 | quaternion x4 | opacity | rgb x3]

Positions are tied to the generating pixel's ray: the camera center plus
softplus(depth) along the ray direction, plus a tanh-bounded offset in the
camera's image-plane axes (bounded by 10% of the scene radius).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .camera import CameraRig
from .layers import init_linear, init_mlp, linear, mlp
from .tensor import ParamStore, Tensor
from .tokenize import unpatchify_views

RAW_CHANNELS = 14
SCALE_MIN = 1e-4
OFFSET_FRACTION = 0.1


class DecodeError(ValueError):
    pass


@dataclass
class GaussianCloud:
    """Per-point attributes; arrays or Tensors with a leading point axis."""

    position: Tensor
    scale: Tensor
    rotation: Tensor
    opacity: Tensor
    color: Tensor

    def __len__(self) -> int:
        return self.position.shape[0]

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(v, "data", v)) for k, v in self.__dict__.items()}

    def params14(self) -> np.ndarray:
        """(P, 14) matrix in position, scale, rotation, opacity, color order."""
        a = self.numpy()
        return np.concatenate([a["position"], a["scale"], a["rotation"], a["opacity"][:, None], a["color"]], axis=1)

    @classmethod
    def from_params14(cls, m: np.ndarray) -> "GaussianCloud":
        m = np.asarray(m)
        return cls(Tensor(m[:, 0:3]), Tensor(m[:, 3:6]), Tensor(m[:, 6:10]), Tensor(m[:, 10]), Tensor(m[:, 11:14]))

    def detach(self) -> "GaussianCloud":
        return GaussianCloud(**{k: Tensor(np.asarray(getattr(v, "data", v)))
                                for k, v in self.__dict__.items()})


@dataclass(frozen=True)
class DecoderConfig:
    point_features: int = 16
    hidden: int = 32
    scene_radius: float = 1.5


def _inv_softplus(y: float) -> float:
    return y + math.log(-math.expm1(-y))


def init_gs_decoder(store: ParamStore, width: int, patch: int, cfg: DecoderConfig, rig: CameraRig,
                    rng: np.random.Generator) -> None:
    """Create ``gs.*`` parameters; head biases start at a plausible cloud.

    Initial points sit at the rig radius along their rays with roughly
    pixel-sized isotropic scale, identity rotation, opacity 0.1 and grey color.
    """
    cam = rig[0]
    radius = float(np.linalg.norm(cam.center))
    pixel = radius * 2.0 * math.tan(0.5 * cam.fov_y) / cam.height
    bias = np.zeros(RAW_CHANNELS)
    bias[0] = _inv_softplus(radius)
    bias[3:6] = math.log(pixel)
    bias[6] = 1.0
    bias[10] = math.log(0.1 / 0.9)
    init_linear(store, "gs.up", width, patch * patch * cfg.point_features, rng)
    init_mlp(store, "gs.head", [cfg.point_features, cfg.hidden, RAW_CHANNELS], rng, bias_value=bias, gain=0.1)


def ray_geometry(rig: CameraRig) -> dict[str, np.ndarray]:
    """Per-point ray origins, directions and image-plane axes, view-major (P, 3)."""
    origins, dirs, right, down = [], [], [], []
    for cam in rig:
        d = cam.pixel_directions().reshape(-1, 3)
        n = d.shape[0]
        dirs.append(d)
        origins.append(np.broadcast_to(cam.center, (n, 3)))
        right.append(np.broadcast_to(cam.rotation[:, 0], (n, 3)))
        down.append(np.broadcast_to(cam.rotation[:, 1], (n, 3)))
    return {k: np.concatenate(v) for k, v in
            (("origin", origins), ("direction", dirs), ("right", right), ("down", down))}


def decode_raw(z: Tensor, store: ParamStore, views: int, height: int, width: int, patch: int) -> Tensor:
    """Token features -> (V * H * W, 14) raw channels."""
    nh, nw = height // patch, width // patch
    if z.shape[0] != views * nh * nw:
        raise DecodeError(f"expected {views * nh * nw} Gaussian tokens ({views} views of {nh}x{nw}), got {z.shape[0]}")
    up = linear(store, "gs.up", z)
    feats = unpatchify_views(up, views, height, width, patch)
    feats = feats.reshape(views * height * width, feats.shape[-1])
    return mlp(store, "gs.head", T.gelu(feats), depth=2)


def activate(raw: Tensor, geom: dict[str, np.ndarray], cfg: DecoderConfig) -> GaussianCloud:
    dt = raw.dtype
    depth = T.softplus(raw[:, 0:1])
    off = T.tanh(raw[:, 1:3]) * (OFFSET_FRACTION * cfg.scene_radius)
    position = (Tensor(geom["origin"], dtype=dt) + depth * Tensor(geom["direction"], dtype=dt)
                + off[:, 0:1] * Tensor(geom["right"], dtype=dt) + off[:, 1:2] * Tensor(geom["down"], dtype=dt))
    scale = T.clip(T.exp(raw[:, 3:6]), SCALE_MIN, cfg.scene_radius)
    rotation = T.normalize(raw[:, 6:10], axis=-1)
    opacity = T.sigmoid(raw[:, 10])
    color = T.sigmoid(raw[:, 11:14])
    return GaussianCloud(position, scale, rotation, opacity, color)


def decode_gaussians(z: Tensor, rig: CameraRig, store: ParamStore, patch: int,
                     cfg: DecoderConfig = DecoderConfig(), geom: dict | None = None) -> GaussianCloud:
    """Decode (V * N_h * N_w, d) tokens to a cloud of V * H * W Gaussians."""
    h, w = rig.resolution
    raw = decode_raw(z, store, len(rig), h, w, patch)
    return activate(raw, geom if geom is not None else ray_geometry(rig), cfg)


# -- PLY ------------------------------------------------------------------

SH_C0 = 0.28209479177387814
_PLY_FIELDS = (["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity"]
               + [f"scale_{i}" for i in range(3)] + [f"rot_{i}" for i in range(4)])


def export_cloud(cloud: GaussianCloud, path) -> None:
    """Binary little-endian PLY using the usual splatting property names.

    Scales are stored as logs, opacity as a logit and color as the degree-0
    SH coefficient, as splat viewers expect.
    """
    a = {k: v.astype(np.float64) for k, v in cloud.numpy().items()}
    n = len(a["position"])
    op = np.clip(a["opacity"], 1e-7, 1 - 1e-7)
    cols = [a["position"], np.zeros((n, 3)), (a["color"] - 0.5) / SH_C0, np.log(op / (1 - op))[:, None],
            np.log(a["scale"]), a["rotation"]]
    data = np.concatenate(cols, axis=1).astype("<f4") if n else np.zeros((0, len(_PLY_FIELDS)), "<f4")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {f}" for f in _PLY_FIELDS]
    header.append("end_header")
    try:
        Path(path).write_bytes(("\n".join(header) + "\n").encode("ascii") + data.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write PLY to {path}: {exc}") from exc


def read_ply_header(path) -> tuple[int, list[str], int]:
    """(vertex count, property names, byte offset of the payload)."""
    blob = Path(path).read_bytes()
    end = blob.index(b"end_header\n") + len(b"end_header\n")
    count, props = 0, []
    for line in blob[:end].decode("ascii").splitlines():
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts and parts[0] == "property":
            props.append(parts[-1])
    return count, props, end


def import_cloud(path) -> GaussianCloud:
    count, props, start = read_ply_header(path)
    if props != _PLY_FIELDS:
        raise ValueError(f"{path}: unexpected PLY properties {props}")
    raw = np.frombuffer(Path(path).read_bytes()[start:], dtype="<f4").reshape(count, len(props)).astype(np.float64)
    color = raw[:, 6:9] * SH_C0 + 0.5
    opacity = 1.0 / (1.0 + np.exp(-raw[:, 9]))
    return GaussianCloud(Tensor(raw[:, 0:3]), Tensor(np.exp(raw[:, 10:13])), Tensor(raw[:, 13:17]),
                         Tensor(opacity), Tensor(color))
