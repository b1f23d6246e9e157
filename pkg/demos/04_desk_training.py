"""Overfit one synthetic head at 32x32 and reconstruct it from the front portrait.

Usage: python 04_desk_training.py [steps] [out_dir]
"""

import sys
import time
from pathlib import Path

from headsplat.dataset import synth_scene
from headsplat.denoiser import DiTConfig
from headsplat.gsdecode import export_cloud
from headsplat.pipeline import HeadModel, ModelConfig
from headsplat.splat import write_png
from headsplat.trainer import (TrainConfig, default_heldout_rig, evaluate_subject, save_checkpoint,
                               subject_from_scene, train)

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out/desk")
out.mkdir(parents=True, exist_ok=True)

model_cfg = ModelConfig(height=32, width=32, patch=4, dit=DiTConfig(depth=2, width=64, time_dim=32))
cfg = TrainConfig(model=model_cfg, steps=steps, lr=3e-3)
model = HeadModel(model_cfg, seed=0)
scene = synth_scene(seed=0, complexity=3)
subject = subject_from_scene(scene, model)
held = default_heldout_rig(model_cfg)
truth = scene.render_rig(held, model_cfg.tile)


def heldout_psnr():
    return evaluate_subject(model, subject, held, truth)["psnr"]["mean"]


print(f"step 0: held-out PSNR {heldout_psnr():.2f} dB")
start = time.perf_counter()


def progress(rec):
    if (rec["step"] + 1) % max(1, steps // 5) == 0:
        print(f"step {rec['step'] + 1}: loss {rec['loss']:.4f}, held-out PSNR {heldout_psnr():.2f} dB, "
              f"{time.perf_counter() - start:.0f} s")


train(model, [subject], cfg, callback=progress)
save_checkpoint(model, cfg, out / "model.ckpt")

cloud = model.infer(subject.portrait)
export_cloud(cloud, out / "cloud.ply")
for name, cam in zip(model.rig.view_ids, model.rig):
    write_png(model.render(cloud, cam).data, out / f"{name}.png")
print(f"{len(cloud)} Gaussians written to {out}")
