"""Head-corpus layouts on disk and a procedural synthetic head generator.

Three layouts are supported::

    AI-generated     {HEAD_ID}/{VIEW_ID}.png                        (no cameras)
    digital-human    {HEAD_ID}/{EXPRESSION_ID}/{VIEW_ID}.png
                     {HEAD_ID}/CAMERA_PARAMETERS.json
    accessory-rich   {HEAD_ID}/{ACCESSORY_ID}/{VIEW_ID}.png
                     {HEAD_ID}/CAMERA_PARAMETERS.json

plus a README.md at the root. View ids are zero-padded three-digit integers.
A head's camera file is shared by all of its expression / accessory groups.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .camera import CameraRig
from .gsdecode import GaussianCloud
from .splat import read_png, render_cloud, write_png

CAMERA_FILE = "CAMERA_PARAMETERS.json"
KINDS = {
    "ai-generated": "AI_Generated_Heads_Dataset",
    "digital-human": "Digital_Human_Heads_Dataset",
    "accessory-rich": "Accessory_Rich_Heads_Dataset",
}
GROUP_LEVEL = {"digital-human": "EXPRESSION_ID", "accessory-rich": "ACCESSORY_ID"}


class CorpusError(RuntimeError):
    pass


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise CorpusError(f"unknown corpus kind {kind!r}; expected one of {sorted(KINDS)}")


@dataclass
class Record:
    head_id: str
    group_id: str | None
    views: list[Path]
    camera_file: Path | None
    valid: bool = True
    reason: str = ""

    @property
    def key(self) -> str:
        return self.head_id if self.group_id is None else f"{self.head_id}/{self.group_id}"

    @property
    def view_ids(self) -> list[str]:
        return [p.stem for p in self.views]


@dataclass
class CorpusIndex:
    kind: str
    root: Path
    records: list[Record] = field(default_factory=list)

    @property
    def valid_records(self) -> list[Record]:
        return [r for r in self.records if r.valid]

    @property
    def problems(self) -> list[str]:
        return [f"{r.key}: {r.reason}" for r in self.records if not r.valid]

    def summary(self) -> list[tuple]:
        """Layout-level description, independent of the root path."""
        return [(r.head_id, r.group_id, tuple(r.view_ids), r.camera_file is not None, r.valid)
                for r in self.records]


def _pngs(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.is_file() and p.suffix == ".png")


def _camera_view_count(path: Path) -> int:
    return len(CameraRig.load(path))


def scan_corpus(root, kind: str) -> CorpusIndex:
    """Index every record under ``root``; malformed records are kept and flagged."""
    _check_kind(kind)
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} does not exist")
    index = CorpusIndex(kind, root)
    for head in sorted(p for p in root.iterdir() if p.is_dir()):
        if kind == "ai-generated":
            views = _pngs(head)
            rec = Record(head.name, None, views, None)
            if not views:
                rec.valid, rec.reason = False, "no view images"
            index.records.append(rec)
            continue
        cam = head / CAMERA_FILE
        groups = sorted(p for p in head.iterdir() if p.is_dir())
        if not groups:
            index.records.append(Record(head.name, None, [], None, False,
                                        f"no {GROUP_LEVEL[kind]} folders"))
        for group in groups:
            views = _pngs(group)
            rec = Record(head.name, group.name, views, cam if cam.is_file() else None)
            if rec.camera_file is None:
                rec.valid, rec.reason = False, f"missing {CAMERA_FILE}"
            elif not views:
                rec.valid, rec.reason = False, "no view images"
            else:
                n_cam = _camera_view_count(cam)
                if n_cam != len(views):
                    rec.valid, rec.reason = False, f"{len(views)} images but {n_cam} cameras"
            index.records.append(rec)
    return index


@dataclass
class CorpusEntry:
    """In-memory content of one record: images in view order plus the head's rig."""

    head_id: str
    group_id: str | None
    images: list[np.ndarray]
    rig: CameraRig | None = None
    view_ids: list[str] | None = None

    def ids(self) -> list[str]:
        if self.view_ids is not None:
            return list(self.view_ids)
        if self.rig is not None:
            return list(self.rig.view_ids)
        return [f"{i:03d}" for i in range(len(self.images))]


def readme_text(kind: str) -> str:
    name = KINDS[kind]
    lines = [f"# {name}", "", "Layout:", "", "```", f"{name}/", "  {HEAD_ID}/"]
    if kind == "ai-generated":
        lines += ["    {VIEW_ID}.png", "    ..."]
    else:
        lines += [f"    {{{GROUP_LEVEL[kind]}}}/", "      {VIEW_ID}.png", "      ...", f"    {CAMERA_FILE}"]
    lines += ["  README.md", "```", "",
              "VIEW_ID is a zero-padded three-digit integer matching the `id` of a view in the camera file.",
              "Images are 8-bit RGB PNG on a white background."]
    if kind != "ai-generated":
        lines += ["", f"{CAMERA_FILE} schema: `convention` (string), `rig_kind` (string), `fov_y_deg` (number),",
                  "`resolution` [H, W], `views`: list of {`id`, `position` [x,y,z], `look_at` [x,y,z], `up` [x,y,z]}."]
    return "\n".join(lines) + "\n"


def write_corpus(entries: list[CorpusEntry], root, kind: str, overwrite: bool = False) -> CorpusIndex:
    """Write records in the layout for ``kind`` and return the scanned index."""
    _check_kind(kind)
    root = Path(root)
    if root.exists() and any(root.iterdir()):
        if not overwrite:
            raise CorpusError(f"corpus root {root} is not empty (pass overwrite to replace it)")
        shutil.rmtree(root)
    root.mkdir(parents=True, exist_ok=True)

    rigs: dict[str, str] = {}
    for e in entries:
        ids = e.ids()
        if len(ids) != len(e.images):
            raise CorpusError(f"{e.head_id}: {len(e.images)} images but {len(ids)} view ids")
        if kind == "ai-generated":
            folder = root / e.head_id
        else:
            if e.group_id is None or e.rig is None:
                raise CorpusError(f"{e.head_id}: {kind} records need a group id and a camera rig")
            if len(e.rig) != len(e.images):
                raise CorpusError(f"{e.head_id}/{e.group_id}: {len(e.images)} images but {len(e.rig)} cameras")
            text = e.rig.to_json()
            if rigs.setdefault(e.head_id, text) != text:
                raise CorpusError(f"{e.head_id}: groups disagree on the camera rig")
            folder = root / e.head_id / e.group_id
        folder.mkdir(parents=True, exist_ok=True)
        for vid, img in zip(ids, e.images):
            write_png(img, folder / f"{vid}.png")
    for head_id, text in rigs.items():
        (root / head_id / CAMERA_FILE).write_text(text)
    (root / "README.md").write_text(readme_text(kind))
    return scan_corpus(root, kind)


def load_entries(index: CorpusIndex) -> list[CorpusEntry]:
    """Read valid records back into memory (inverse of :func:`write_corpus`)."""
    out = []
    for r in index.valid_records:
        rig = CameraRig.load(r.camera_file) if r.camera_file else None
        out.append(CorpusEntry(r.head_id, r.group_id, [read_png(p) for p in r.views], rig, r.view_ids))
    return out


# -- synthetic heads ---------------------------------------------------------

HEAD_RADII = np.array([0.75, 0.95, 0.85])


@dataclass
class SyntheticScene:
    seed: int
    complexity: int
    cloud: GaussianCloud

    def render(self, cam, tile: int = 16) -> np.ndarray:
        with T.no_grad():
            img, _ = render_cloud(self.cloud, cam, tile=tile)
        return np.asarray(img.data, dtype=np.float64)

    def render_rig(self, rig: CameraRig, tile: int = 16) -> np.ndarray:
        return np.stack([self.render(cam, tile) for cam in rig])


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.cos(phi), np.sin(theta) * np.sin(phi)], -1)


def synth_scene(seed: int = 0, complexity: int = 3) -> SyntheticScene:
    """A seeded head-like arrangement of colored anisotropic Gaussians.

    Complexity 1 is a single ellipsoid. Higher values add a shell of skin
    and hair Gaussians (denser with complexity) and facial feature blobs.
    """
    if complexity < 1:
        raise ValueError(f"complexity must be at least 1, got {complexity}")
    rng = np.random.default_rng(seed)
    skin = np.clip(np.array([0.85, 0.65, 0.52]) + rng.uniform(-0.12, 0.08, 3), 0, 1)
    hair = np.clip(np.array([0.25, 0.16, 0.10]) + rng.uniform(-0.1, 0.35, 3), 0, 1)
    radii = HEAD_RADII * rng.uniform(0.92, 1.05, 3)

    pos, scl, rot, opa, col = [np.zeros((1, 3))], [radii[None] * 0.42], [np.array([[1.0, 0, 0, 0]])], [[0.97]], [skin[None]]
    if complexity >= 2:
        n = 96 * complexity
        dirs = _fibonacci_sphere(n)
        p = dirs * radii
        is_hair = (dirs[:, 1] > 0.35 - 0.1 * rng.uniform()) | ((dirs[:, 2] < -0.25) & (dirs[:, 1] > -0.45))
        shade = 0.9 + 0.1 * dirs[:, 1:2]
        c = np.where(is_hair[:, None], hair[None], skin[None] * shade)
        s = np.full((n, 3), 0.55 * float(radii.mean()) * np.sqrt(4.0 / n) * 1.6)
        s[:, 1] *= 1.0 + 0.3 * is_hair
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        pos.append(p)
        scl.append(s)
        rot.append(q)
        opa.append(np.full(n, 0.9))
        col.append(c)

        features = [
            ((-0.28, 0.12, 0.80), (0.11, 0.07, 0.05), (0.12, 0.10, 0.12)),   # eyes
            ((0.28, 0.12, 0.80), (0.11, 0.07, 0.05), (0.12, 0.10, 0.12)),
            ((0.0, -0.12, 0.88), (0.08, 0.16, 0.10), tuple(skin * 0.85)),    # nose
            ((0.0, -0.45, 0.74), (0.20, 0.06, 0.06), (0.70, 0.25, 0.25)),    # mouth
            ((-0.76, 0.0, 0.0), (0.06, 0.18, 0.12), tuple(skin * 0.9)),      # ears
            ((0.76, 0.0, 0.0), (0.06, 0.18, 0.12), tuple(skin * 0.9)),
        ]
        k = min(len(features), 2 * (complexity - 1))
        for center, size, color in features[:k]:
            jitter = rng.uniform(-0.02, 0.02, 3)
            pos.append((np.array(center) * radii / HEAD_RADII + jitter)[None])
            scl.append(np.array(size)[None])
            rot.append(np.array([[1.0, 0, 0, 0]]))
            opa.append([0.95])
            col.append(np.clip(np.array(color), 0, 1)[None])

    cloud = GaussianCloud(
        T.Tensor(np.concatenate(pos), dtype=np.float64), T.Tensor(np.concatenate(scl), dtype=np.float64),
        T.Tensor(np.concatenate(rot), dtype=np.float64), T.Tensor(np.concatenate(opa).astype(np.float64)),
        T.Tensor(np.concatenate(col), dtype=np.float64))
    return SyntheticScene(seed, complexity, cloud)


def make_dataset(seeds, rig: CameraRig, root, kind: str = "digital-human", complexity: int = 3,
                 overwrite: bool = False) -> CorpusIndex:
    """Render one synthetic head per seed from every camera of ``rig`` and write a corpus."""
    _check_kind(kind)
    group = {"digital-human": "E000", "accessory-rich": "A000"}.get(kind)
    entries = []
    for seed in seeds:
        scene = synth_scene(seed, complexity)
        images = list(scene.render_rig(rig))
        entries.append(CorpusEntry(f"H{seed:04d}", group, images, None if kind == "ai-generated" else rig,
                                   list(rig.view_ids)))
    return write_corpus(entries, root, kind, overwrite)
