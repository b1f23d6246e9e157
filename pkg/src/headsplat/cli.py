"""Command-line entry point: ``headsplat <subcommand> [flags]``.

Every subcommand writes its files under ``--out`` together with a
``manifest.json`` listing each file's size and SHA-256. Exit status is 0 on
success, 1 on a domain error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .camera import (DEFAULT_FOV_DEG, DEFAULT_RADIUS, CameraRig, RandomBounds, accessory_rig, canonical_four,
                     circular_rig, random_rig)
from .dataset import KINDS, load_entries, make_dataset, scan_corpus, synth_scene
from .gsdecode import export_cloud, import_cloud
from .losses import metric_report
from .splat import read_png, render_cloud, write_png
from .trainer import (TrainConfig, default_train_rig, evaluate, load_checkpoint, save_checkpoint, subject_from_scene,
                      subjects_from_corpus, train)
from .pipeline import HeadModel

MANIFEST = "manifest.json"
VOLATILE = {"timing.json"}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {text!r}")
    return text == "on"


def write_manifest(out: Path, command: str, args: dict) -> Path:
    files = []
    for path in sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST):
        rel = path.relative_to(out).as_posix()
        entry = {"path": rel, "bytes": path.stat().st_size}
        if path.name in VOLATILE:
            entry["volatile"] = True
        else:
            entry["sha256"] = hashlib.sha256(path.read_bytes()).hexdigest()
        files.append(entry)
    doc = {"command": command, "args": args, "version": __version__, "files": files}
    target = out / MANIFEST
    target.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return target


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands -----------------------------------------------------------------

def cmd_rig(a) -> Path:
    res = a.res
    if a.kind == "circular":
        rig = circular_rig(a.n, a.radius, a.elev, res, res, a.fov)
    elif a.kind == "accessory":
        rig = accessory_rig(a.radius, res, res, a.fov)
    elif a.kind == "canonical":
        rig = canonical_four(a.radius, res, res, a.fov)
    else:
        rig = random_rig(a.n, a.seed, RandomBounds(), res, res, a.fov)
    if a.out.suffix == ".json":
        a.out.parent.mkdir(parents=True, exist_ok=True)
        rig.save(a.out)
        return a.out.parent
    a.out.mkdir(parents=True, exist_ok=True)
    rig.save(a.out / "rig.json")
    return a.out


def cmd_synth(a) -> Path:
    rig = CameraRig.load(a.rig) if a.rig else circular_rig(40, height=a.res, width=a.res)
    seeds = a.seeds if a.seeds is not None else list(range(a.seed, a.seed + a.count))
    a.out.mkdir(parents=True, exist_ok=True)
    index = make_dataset(seeds, rig, a.out / KINDS[a.kind], a.kind, a.complexity, overwrite=a.overwrite)
    if index.problems:
        raise RuntimeError(f"written corpus failed validation: {index.problems}")
    return a.out


def _train_config(a) -> TrainConfig:
    cfg = TrainConfig.load(a.config) if a.config else TrainConfig()
    doc = cfg.to_dict()
    doc["seed"] = a.seed
    if a.steps is not None:
        doc["steps"] = a.steps
    if a.avas is not None:
        doc["avas"] = a.avas
    return TrainConfig.from_dict(doc)


def cmd_train(a) -> Path:
    cfg = _train_config(a)
    model = HeadModel(cfg.model, seed=cfg.seed)
    if a.corpus:
        subjects = subjects_from_corpus(scan_corpus(a.corpus, a.kind), model)
        if not subjects:
            raise RuntimeError(f"no usable records in {a.corpus}")
    else:
        scene = synth_scene(a.scene_seed, a.complexity)
        subjects = [subject_from_scene(scene, model, default_train_rig(cfg.model))]
    a.out.mkdir(parents=True, exist_ok=True)
    (a.out / "config.json").write_text(cfg.to_json())
    history = train(model, subjects, cfg, log_path=a.out / "train_log.jsonl")
    save_checkpoint(model, cfg, a.out / "model.ckpt")
    print(f"trained {cfg.steps} steps; final loss {history[-1]['loss']:.6f}")
    return a.out


def _portrait(path, model: HeadModel) -> np.ndarray:
    img = read_png(path)
    if img.shape[:2] != (model.cfg.height, model.cfg.width):
        raise ValueError(f"portrait {path} is {img.shape[1]}x{img.shape[0]}; the model expects "
                         f"{model.cfg.width}x{model.cfg.height}")
    return img


def _reconstruct(a, steps: int | None) -> Path:
    model, _ = load_checkpoint(a.checkpoint, drop_image_head=True)
    portrait = _portrait(a.image, model)
    start = time.perf_counter()
    cloud = model.infer(portrait, a.seed) if steps is None else model.denoise(portrait, steps, a.seed)
    wall = time.perf_counter() - start
    a.out.mkdir(parents=True, exist_ok=True)
    export_cloud(cloud, a.out / "cloud.ply")
    for cam, name in zip(model.rig, model.rig.view_ids):
        img, _ = render_cloud(cloud, cam, tile=model.cfg.tile)
        write_png(img.data, a.out / f"{name}.png")
    _dump(a.out / "timing.json", {"wall_time_s": wall, "f_theta_calls": model.f_calls,
                                  "steps": 1 if steps is None else steps, "gaussians": len(cloud)})
    print(f"{len(cloud)} Gaussians in {wall:.3f} s ({model.f_calls} f_theta call(s))")
    return a.out


def cmd_infer(a) -> Path:
    return _reconstruct(a, None)


def cmd_denoise(a) -> Path:
    if a.steps < 1:
        raise ValueError(f"--steps must be at least 1, got {a.steps}")
    return _reconstruct(a, a.steps)


def cmd_render(a) -> Path:
    cloud = import_cloud(a.ply)
    rig = CameraRig.load(a.rig)
    a.out.mkdir(parents=True, exist_ok=True)
    for cam, name in zip(rig, rig.view_ids):
        img, _ = render_cloud(cloud, cam, tile=a.tile)
        write_png(img.data, a.out / f"{name}.png")
    return a.out


def cmd_eval(a) -> Path:
    index = scan_corpus(a.corpus, a.kind)
    if a.reference:
        ref = {(e.head_id, e.group_id): e for e in load_entries(scan_corpus(a.reference, a.kind))}
        pairs = []
        for e in load_entries(index):
            r = ref.get((e.head_id, e.group_id))
            if r is None:
                raise ValueError(f"reference corpus has no record {e.head_id}/{e.group_id}")
            for vid, p, g in zip(e.ids(), e.images, r.images):
                pairs.append((f"{e.head_id}/{e.group_id}/{vid}" if e.group_id else f"{e.head_id}/{vid}", p, g))
        report = metric_report(pairs)
    else:
        if not a.checkpoint:
            raise UsageError("eval needs --checkpoint or --reference")
        model, _ = load_checkpoint(a.checkpoint, drop_image_head=True)
        report = evaluate(model, subjects_from_corpus(index, model), steps=a.steps, seed=a.seed)
    a.out.mkdir(parents=True, exist_ok=True)
    _dump(a.out / "report.json", report)
    print(f"PSNR {report['psnr']['mean']:.2f} ± {report['psnr']['stderr']:.2f} dB over {report['count']} views")
    return a.out


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="headsplat", description="Single-image head reconstruction as 3D Gaussians.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="{rig,synth,train,infer,render,denoise,eval}")
    sub.required = True

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("rig", cmd_rig, "write a camera rig JSON")
    sp.add_argument("--kind", choices=["circular", "accessory", "canonical", "random"], default="circular")
    sp.add_argument("--n", type=int, default=40)
    sp.add_argument("--elev", type=_floats, default=[-20.0, 0.0, 20.0])
    sp.add_argument("--radius", type=float, default=DEFAULT_RADIUS)
    sp.add_argument("--fov", type=float, default=DEFAULT_FOV_DEG)
    sp.add_argument("--res", type=int, default=64)

    sp = add("synth", cmd_synth, "render synthetic heads into a corpus")
    sp.add_argument("--kind", choices=sorted(KINDS), default="digital-human")
    sp.add_argument("--rig", type=Path)
    sp.add_argument("--seeds", type=_ints)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--complexity", type=int, default=3)
    sp.add_argument("--res", type=int, default=64)
    sp.add_argument("--overwrite", action="store_true")

    sp = add("train", cmd_train, "train on a corpus or a synthetic scene")
    sp.add_argument("--config", type=Path)
    sp.add_argument("--corpus", type=Path)
    sp.add_argument("--kind", choices=sorted(KINDS), default="digital-human")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--avas", type=_on_off)
    sp.add_argument("--scene-seed", type=int, default=0)
    sp.add_argument("--complexity", type=int, default=3)

    for name, fn, text in (("infer", cmd_infer, "one-step reconstruction from a portrait"),
                           ("denoise", cmd_denoise, "multi-step reconstruction from a portrait")):
        sp = add(name, fn, text)
        sp.add_argument("--checkpoint", type=Path, required=True)
        sp.add_argument("--image", type=Path, required=True)
        if name == "denoise":
            sp.add_argument("--steps", type=int, required=True)

    sp = add("render", cmd_render, "render a PLY cloud from a rig")
    sp.add_argument("--ply", type=Path, required=True)
    sp.add_argument("--rig", type=Path, required=True)
    sp.add_argument("--tile", type=int, default=16)

    sp = add("eval", cmd_eval, "PSNR/SSIM report for a checkpoint or a reference corpus")
    sp.add_argument("--corpus", type=Path, required=True)
    sp.add_argument("--kind", choices=sorted(KINDS), default="digital-human")
    sp.add_argument("--checkpoint", type=Path)
    sp.add_argument("--reference", type=Path)
    sp.add_argument("--steps", type=int, default=1)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        out = a.fn(a)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"headsplat {a.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"headsplat {a.command}: error: {exc}", file=sys.stderr)
        return 1
    args = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(a).items() if k != "fn"}
    write_manifest(out, a.command, args)
    return 0


def main() -> None:
    sys.exit(run())
