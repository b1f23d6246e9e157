"""EWA projection of 3D Gaussians into a pinhole camera, with analytic gradients.

Projected geometry is packed per Gaussian as ``(u, v, cov_xx, cov_xy, cov_yy)``
in pixel units. A 0.3 px^2 low-pass term is added to the 2D covariance.
Gaussians closer than ``NEAR`` to the camera plane are culled: their geometry
is a placeholder and they receive zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..camera import Camera
from ..tensor import Tensor

NEAR = 0.05
LOW_PASS = 0.3
SUPPORT_SIGMA = 3.0


@dataclass
class ProjectedGaussians:
    geom: Tensor        # (P, 5) u, v, cov_xx, cov_xy, cov_yy
    opacity: Tensor     # (P,)
    color: Tensor       # (P, 3)
    depth: np.ndarray   # (P,) camera-space z
    valid: np.ndarray   # (P,) bool

    def __len__(self) -> int:
        return self.depth.shape[0]

    @property
    def cov2d(self) -> np.ndarray:
        g = self.geom.data
        return np.stack([np.stack([g[:, 2], g[:, 3]], -1), np.stack([g[:, 3], g[:, 4]], -1)], -2)

    def extents(self) -> tuple[np.ndarray, np.ndarray]:
        """Half-widths in x and y of the boxes containing each 3-sigma ellipse."""
        g = self.geom.data
        return SUPPORT_SIGMA * np.sqrt(g[:, 2]), SUPPORT_SIGMA * np.sqrt(g[:, 4])


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """(P, 4) quaternions (w, x, y, z) -> (P, 3, 3); exact polynomial, no renormalisation."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def _rotmat_vjp(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pull a (P, 3, 3) rotation-matrix gradient back to the quaternion."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    gw = 2 * (-z * g[:, 0, 1] + y * g[:, 0, 2] + z * g[:, 1, 0] - x * g[:, 1, 2] - y * g[:, 2, 0] + x * g[:, 2, 1])
    gx = 2 * (y * g[:, 0, 1] + z * g[:, 0, 2] + y * g[:, 1, 0] - w * g[:, 1, 2] + z * g[:, 2, 0] + w * g[:, 2, 1]
              - 2 * x * g[:, 1, 1] - 2 * x * g[:, 2, 2])
    gy = 2 * (-2 * y * g[:, 0, 0] + x * g[:, 0, 1] + w * g[:, 0, 2] + x * g[:, 1, 0] + z * g[:, 1, 2]
              - w * g[:, 2, 0] + z * g[:, 2, 1] - 2 * y * g[:, 2, 2])
    gz = 2 * (-2 * z * g[:, 0, 0] - w * g[:, 0, 1] + x * g[:, 0, 2] + w * g[:, 1, 0] - 2 * z * g[:, 1, 1]
              + y * g[:, 1, 2] + x * g[:, 2, 0] + y * g[:, 2, 1])
    return np.stack([gw, gx, gy, gz], -1)


def _project_geometry(pos, scale, quat, cam: Camera):
    rot_wc, t_wc = cam.world_to_camera()
    f = cam.focal
    tc = pos @ rot_wc.T + t_wc
    x, y, z = tc[:, 0], tc[:, 1], tc[:, 2]
    valid = z > NEAR
    zs = np.where(valid, z, 1.0)
    u = f * x / zs + 0.5 * cam.width
    v = f * y / zs + 0.5 * cam.height

    rq = quat_to_rotmat(quat)
    m = rq * scale[:, None, :]
    sigma = m @ np.swapaxes(m, 1, 2)
    jac = np.zeros((len(pos), 2, 3))
    jac[:, 0, 0] = f / zs
    jac[:, 0, 2] = -f * x / zs ** 2
    jac[:, 1, 1] = f / zs
    jac[:, 1, 2] = -f * y / zs ** 2
    tm = jac @ rot_wc
    cov = tm @ sigma @ np.swapaxes(tm, 1, 2)
    geom = np.stack([u, v, cov[:, 0, 0] + LOW_PASS, cov[:, 0, 1], cov[:, 1, 1] + LOW_PASS], -1)
    geom[~valid] = (0.0, 0.0, 1.0, 0.0, 1.0)
    saved = dict(rot_wc=rot_wc, f=f, x=x, y=y, z=zs, rq=rq, m=m, sigma=sigma, tm=tm, valid=valid)
    return geom, z, valid, saved


def _project_backward(g: np.ndarray, quat, scale, s: dict):
    f, x, y, z = s["f"], s["x"], s["y"], s["z"]
    gu, gv, gxx, gxy, gyy = (g[:, i] for i in range(5))
    gcov = np.empty((len(g), 2, 2))
    gcov[:, 0, 0] = gxx
    gcov[:, 0, 1] = gcov[:, 1, 0] = 0.5 * gxy
    gcov[:, 1, 1] = gyy

    tm, sigma = s["tm"], s["sigma"]
    g_sigma = np.swapaxes(tm, 1, 2) @ gcov @ tm
    g_tm = 2.0 * gcov @ tm @ sigma
    g_jac = g_tm @ s["rot_wc"].T

    f_z2 = f / z ** 2
    gx = gu * f / z - g_jac[:, 0, 2] * f_z2
    gy = gv * f / z - g_jac[:, 1, 2] * f_z2
    gz = (-gu * f * x / z ** 2 - gv * f * y / z ** 2
          - (g_jac[:, 0, 0] + g_jac[:, 1, 1]) * f_z2
          + g_jac[:, 0, 2] * 2 * f * x / z ** 3 + g_jac[:, 1, 2] * 2 * f * y / z ** 3)
    g_pos = np.stack([gx, gy, gz], -1) @ s["rot_wc"]

    g_m = 2.0 * g_sigma @ s["m"]
    g_scale = (g_m * s["rq"]).sum(axis=1)
    g_quat = _rotmat_vjp(quat, g_m * scale[:, None, :])

    inv = ~s["valid"]
    for arr in (g_pos, g_scale, g_quat):
        arr[inv] = 0.0
    return g_pos, g_scale, g_quat


def project(position, scale, rotation, opacity, color, cam: Camera) -> ProjectedGaussians:
    """Project a cloud (Tensors or arrays) into ``cam``; differentiable in all inputs."""
    position, scale, rotation = T.as_tensor(position), T.as_tensor(scale), T.as_tensor(rotation)
    dtype = position.dtype
    pos64 = position.data.astype(np.float64)
    scale64 = scale.data.astype(np.float64)
    quat64 = rotation.data.astype(np.float64)
    geom, depth, valid, saved = _project_geometry(pos64, scale64, quat64, cam)

    def backward(g):
        gp, gs, gq = _project_backward(g.astype(np.float64), quat64, scale64, saved)
        return gp.astype(dtype), gs.astype(dtype), gq.astype(dtype)

    geom_t = T.apply("project", (position, scale, rotation), geom.astype(dtype), backward)
    return ProjectedGaussians(geom_t, T.as_tensor(opacity), T.as_tensor(color), depth, valid)
