"""The image-to-Gaussians model: conditioning, f_theta, both decoders and the samplers.

Inference path: portrait + input-camera rays -> f_theta at t = 0 on a noise
state -> Gaussian decoder -> cloud. The image head (``vae.*``) is only used
by the training loss and never touched here.

For multi-step sampling the model's clean-state prediction is the decoded
cloud rendered from the four canonical views, so each Euler step stays in
the same (V, H, W, 9) state space as the noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import flow
from . import tensor as T
from .camera import DEFAULT_FOV_DEG, DEFAULT_RADIUS, Camera, CameraRig, canonical_four, plucker_embed
from .denoiser import DiTConfig, f_theta, init_dit
from .gsdecode import DecoderConfig, GaussianCloud, decode_gaussians, init_gs_decoder, ray_geometry
from .imgdecode import PREFIX as VAE_PREFIX
from .imgdecode import decode_views, init_image_decoder
from .splat import render_cloud
from .tensor import ParamStore, Tensor
from .tensor import checkpoint as ckpt
from .tokenize import grid_size, init_tokenizers

_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    height: int = 64
    width: int = 64
    patch: int = 8
    dit: DiTConfig = field(default_factory=DiTConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    avas: bool = True
    avas_hidden: int = 64
    positional: bool = False
    radius: float = DEFAULT_RADIUS
    fov_deg: float = DEFAULT_FOV_DEG
    precision: str = "float32"
    tile: int = 4

    def __post_init__(self):
        grid_size(self.height, self.width, self.patch)
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    @property
    def sequence_length(self) -> int:
        nh, nw = grid_size(self.height, self.width, self.patch)
        return 5 * nh * nw

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown model config keys: {unknown}")
        doc = dict(doc)
        if "dit" in doc:
            doc["dit"] = DiTConfig(**doc["dit"])
        if "decoder" in doc:
            doc["decoder"] = DecoderConfig(**doc["decoder"])
        return cls(**doc)


class HeadModel:
    """Parameters plus the fixed canonical rig for one model configuration."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, store: ParamStore | None = None):
        self.cfg = cfg
        self.rig = canonical_four(cfg.radius, cfg.height, cfg.width, cfg.fov_deg)
        self.plucker = self.rig.plucker_maps().astype(cfg.dtype)
        self.geom = {k: v.astype(cfg.dtype) for k, v in ray_geometry(self.rig).items()}
        self.f_calls = 0
        if store is None:
            store = ParamStore(cfg.dtype)
            rng = np.random.default_rng(seed)
            grid = grid_size(cfg.height, cfg.width, cfg.patch) if cfg.positional else None
            init_tokenizers(store, cfg.patch, cfg.dit.width, rng, grid)
            init_dit(store, cfg.dit, rng)
            init_gs_decoder(store, cfg.dit.width, cfg.patch, cfg.decoder, self.rig, rng)
            if cfg.avas:
                init_image_decoder(store, cfg.dit.width, cfg.patch, cfg.avas_hidden, rng)
        self.store = store

    @property
    def input_camera(self) -> Camera:
        """The portrait is taken from the front canonical camera."""
        return self.rig[0]

    def strip_image_head(self) -> None:
        self.store.remove(VAE_PREFIX)

    # -- network pieces ---------------------------------------------------

    def condition(self, image: np.ndarray, cam: Camera | None = None) -> np.ndarray:
        """(9, H, W) conditioned input: RGB then the input camera's Plücker map."""
        cam = cam or self.input_camera
        image = np.asarray(image, dtype=self.cfg.dtype)
        if image.shape != (self.cfg.height, self.cfg.width, 3):
            raise ValueError(f"portrait must be ({self.cfg.height}, {self.cfg.width}, 3), got {image.shape}")
        if (cam.height, cam.width) != image.shape[:2]:
            raise ValueError(f"camera resolution {(cam.height, cam.width)} differs from the portrait")
        return np.concatenate([image.transpose(2, 0, 1), plucker_embed(cam).astype(self.cfg.dtype)], axis=0)

    def tokens(self, g_t, t: float, x_cond) -> Tensor:
        self.f_calls += 1
        return f_theta(g_t, t, x_cond, self.store, self.cfg.dit, self.cfg.patch)

    def decode(self, z: Tensor) -> GaussianCloud:
        return decode_gaussians(z, self.rig, self.store, self.cfg.patch, self.cfg.decoder, self.geom)

    def decode_images(self, z: Tensor) -> Tensor:
        return decode_views(z, self.store, len(self.rig), self.cfg.height, self.cfg.width, self.cfg.patch)

    def render(self, cloud: GaussianCloud, cam: Camera) -> Tensor:
        img, _ = render_cloud(cloud, cam, tile=self.cfg.tile)
        return img

    def canonical_signal(self, cloud: GaussianCloud) -> np.ndarray:
        """(4, H, W, 3) canonical-view renders used as the state's signal channels."""
        with T.no_grad():
            return np.stack([self.render(cloud, cam).data for cam in self.rig]).astype(self.cfg.dtype)

    def noise(self, seed) -> np.ndarray:
        return flow.noise_state(self.plucker, seed, self.cfg.dtype)

    # -- inference ----------------------------------------------------------

    def infer(self, image: np.ndarray, seed: int = 0, cam: Camera | None = None) -> GaussianCloud:
        """One-step reconstruction: a single f_theta evaluation at t = 0."""
        x_cond = self.condition(image, cam)
        with T.no_grad():
            return self.decode(self.tokens(self.noise(seed), 0.0, x_cond)).detach()

    def denoise(self, image: np.ndarray, steps: int, seed: int = 0, cam: Camera | None = None,
                trajectory: list | None = None) -> GaussianCloud:
        """Euler sampling in ``steps`` steps; returns the cloud decoded at the last step.

        With ``steps = 1`` this performs exactly the computation of :meth:`infer`.
        """
        x_cond = self.condition(image, cam)
        last: list[GaussianCloud] = []

        def model(g_t, t, xc):
            with T.no_grad():
                cloud = self.decode(self.tokens(g_t, t, xc)).detach()
            last[:] = [cloud]
            return self.canonical_signal(cloud)

        flow.sample_multistep(self.noise(seed), x_cond, steps, model, trajectory)
        return last[0]

    # -- persistence --------------------------------------------------------

    def config_text(self, extra: dict | None = None) -> str:
        doc = {"model": self.cfg.to_dict()}
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path, extra: dict | None = None) -> None:
        ckpt.save(self.store, path, self.config_text(extra))

    @classmethod
    def load(cls, path, drop_image_head: bool = False) -> "HeadModel":
        arrays, text = ckpt.read(path)
        cfg = ModelConfig.from_dict(json.loads(text)["model"])
        model = cls(cfg)
        ckpt.load_into(model.store, arrays, optional_prefixes=(VAE_PREFIX,))
        if drop_image_head:
            model.strip_image_head()
        return model


def config_from_checkpoint(path) -> dict:
    _, text = ckpt.read(path)
    return json.loads(text)


def supervision_rig(rig: CameraRig, indices) -> CameraRig:
    return rig.subset(list(indices))
