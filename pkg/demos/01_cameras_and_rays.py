"""Cameras, rigs and per-pixel Plücker rays.

Builds the four canonical views, a 40-view capture rig and a random rig,
then checks the two ray constraints on every pixel.
"""

import numpy as np

from headsplat.camera import canonical_four, circular_rig, plucker_embed, random_rig

rig = canonical_four(height=32, width=32)
for name, cam in zip(rig.view_ids, rig):
    print(f"{name:>5}: center {np.round(cam.center, 3)}")

# a Plücker map stacks unit directions d and moments m = o x d
pl = plucker_embed(rig[0])
print("map shape", pl.shape)

worst_norm = worst_orth = 0.0
for cam in list(circular_rig(40, height=32, width=32)) + list(random_rig(200, seed=0, height=32, width=32)):
    pl = plucker_embed(cam)
    d, m = pl[:3], pl[3:]
    worst_norm = max(worst_norm, np.abs(np.linalg.norm(d, axis=0) - 1).max())
    worst_orth = max(worst_orth, np.abs((d * m).sum(0)).max())
print(f"240 cameras: max | |d| - 1 | = {worst_norm:.1e}, max |d . m| = {worst_orth:.1e}")

# the rig file format is plain JSON and round-trips exactly
text = rig.to_json()
print(text[:200], "...")
