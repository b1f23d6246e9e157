"""Render a procedural head from the canonical views and from a full orbit.

Usage: python 02_render_synthetic_head.py [out_dir]
"""

import sys
import time
from pathlib import Path

from headsplat.camera import canonical_four, circular_rig
from headsplat.dataset import synth_scene
from headsplat.splat import write_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/head")
out.mkdir(parents=True, exist_ok=True)

for complexity in (1, 2, 3):
    scene = synth_scene(seed=0, complexity=complexity)
    print(f"complexity {complexity}: {len(scene.cloud)} Gaussians")

scene = synth_scene(seed=0, complexity=3)
for name, img in zip(canonical_four().view_ids, scene.render_rig(canonical_four())):
    write_png(img, out / f"{name}.png")

orbit = circular_rig(12, elevations=(0.0,))
start = time.perf_counter()
views = scene.render_rig(orbit)
print(f"12-view orbit at 64x64 in {time.perf_counter() - start:.2f} s")
for vid, img in zip(orbit.view_ids, views):
    write_png(img, out / f"orbit_{vid}.png")
print("wrote", len(list(out.glob("*.png"))), "images to", out)
