"""
Программный растеризатор с z-буфером и ламбертовым освещением.

Глубина пикселя вычисляется пересечением луча через центр пикселя с
плоскостью треугольника, поэтому обратная проекция (пиксель, глубина)
лежит на поверхности сцены.
"""

from typing import Tuple

import numpy as np

from ..geometry.camera import CameraView, Viewpoint, backproject_pixels
from .models import Scene, TextureKind

NEAR_PLANE = 1e-3


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def rasterize(vertices: np.ndarray, view: Viewpoint) -> Tuple[np.ndarray, np.ndarray]:
    """
    Z-буферная растеризация треугольников.

    Args:
        vertices: Вершины (T, 3, 3) в мировой системе
        view: Ракурс

    Returns:
        Глубина (H, W) float64 (0 там, где нет геометрии) и индекс треугольника (-1 — пусто)
    """
    intr = view.intrinsics
    height, width = intr.height, intr.width
    zbuffer = np.full((height, width), np.inf)
    tri_ids = np.full((height, width), -1, dtype=np.int64)

    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3, 3)
    cam = vertices @ view.pose.rotation.T + view.pose.translation

    for t, (c0, c1, c2) in enumerate(cam):
        if min(c0[2], c1[2], c2[2]) <= NEAR_PLANE:
            continue
        us = intr.fx * np.array([c0[0], c1[0], c2[0]]) / np.array([c0[2], c1[2], c2[2]]) + intr.cx
        vs = intr.fy * np.array([c0[1], c1[1], c2[1]]) / np.array([c0[2], c1[2], c2[2]]) + intr.cy

        u_lo = max(int(np.ceil(us.min())), 0)
        u_hi = min(int(np.floor(us.max())), width - 1)
        v_lo = max(int(np.ceil(vs.min())), 0)
        v_hi = min(int(np.floor(vs.max())), height - 1)
        if u_lo > u_hi or v_lo > v_hi:
            continue

        area = _edge(us[0], vs[0], us[1], vs[1], us[2], vs[2])
        if abs(area) < 1e-12:
            continue

        uu, vv = np.meshgrid(np.arange(u_lo, u_hi + 1, dtype=np.float64),
                             np.arange(v_lo, v_hi + 1, dtype=np.float64))
        w0 = _edge(us[1], vs[1], us[2], vs[2], uu, vv) / area
        w1 = _edge(us[2], vs[2], us[0], vs[0], uu, vv) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue

        # z пересечения луча d = ((u-cx)/fx, (v-cy)/fy, 1) с плоскостью n·X = n·c0
        normal = np.cross(c1 - c0, c2 - c0)
        dx = (uu - intr.cx) / intr.fx
        dy = (vv - intr.cy) / intr.fy
        denom = normal[0] * dx + normal[1] * dy + normal[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.dot(normal, c0) / denom

        window = (slice(v_lo, v_hi + 1), slice(u_lo, u_hi + 1))
        closer = inside & np.isfinite(z) & (z > NEAR_PLANE) & (z < zbuffer[window])
        zbuffer[window] = np.where(closer, z, zbuffer[window])
        tri_ids[window] = np.where(closer, t, tri_ids[window])

    depth = np.where(np.isfinite(zbuffer), zbuffer, 0.0)
    return depth, tri_ids


def albedo(kind: TextureKind, params: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Альбедо процедурной текстуры в локальных координатах (s, t) в метрах."""
    if kind == TextureKind.CHECKER:
        period, a0, a1 = params[0], params[1], params[2]
        parity = (np.floor(s / period) + np.floor(t / period)) % 2
        return np.where(parity == 0, a0, a1)

    if kind == TextureKind.POLYGON:
        cs, ct, radius, n_sides, rotation, a_in, a_out = params[:7]
        n_sides = max(int(round(n_sides)), 3)
        ds = s - cs
        dt = t - ct
        rho = np.hypot(ds, dt)
        sector = 2.0 * np.pi / n_sides
        phi = np.mod(np.arctan2(dt, ds) - rotation, sector) - sector / 2.0
        inside = rho * np.cos(phi) <= radius * np.cos(np.pi / n_sides)
        return np.where(inside, a_in, a_out)

    if kind == TextureKind.GRADIENT:
        angle, period, a0, a1 = params[:4]
        w = s * np.cos(angle) + t * np.sin(angle)
        frac = np.mod(w / period, 1.0)
        return a0 + (a1 - a0) * frac

    raise ValueError(f"Unknown texture kind {kind}")


def render(scene: Scene, view: Viewpoint, lighting: int = 0) -> CameraView:
    """
    Рендеринг ракурса: изображение в оттенках серого и плотная глубина.

    Значение пикселя = clamp(ambient + Σ I·max(0, n̂·l̂), 0, 1)·albedo,
    нормаль ориентируется к камере.

    Args:
        scene: Сцена
        view: Ракурс (внутренние параметры и поза)
        lighting: Индекс конфигурации освещения

    Returns:
        CameraView с глубиной float32 (≤ 0 там, где нет геометрии)
    """
    intensities = scene.light_intensities(lighting)
    depth, tri_ids = rasterize(scene.vertex_array, view)
    depth32 = depth.astype(np.float32)

    image = np.zeros(depth.shape)
    rows, cols = np.nonzero(tri_ids >= 0)
    if len(rows):
        pixels = np.stack([cols, rows], axis=1).astype(np.float64)
        points = backproject_pixels(pixels, depth[rows, cols], view)
        ids = tri_ids[rows, cols]
        center = view.pose.camera_center

        normals = np.stack([tri.normal for tri in scene.triangles])[ids]
        facing = np.einsum("ij,ij->i", normals, center - points)
        normals[facing < 0] *= -1.0

        shade = np.full(len(rows), scene.ambient)
        for light, intensity in zip(scene.lights, intensities):
            shade += intensity * np.maximum(0.0, normals @ light.direction)
        shade = np.clip(shade, 0.0, 1.0)

        values = np.zeros(len(rows))
        for t in np.unique(ids):
            tri = scene.triangles[t]
            sel = ids == t
            offset = points[sel] - tri.frame[0]
            s = offset @ tri.frame[1]
            tt = offset @ tri.frame[2]
            values[sel] = albedo(tri.texture, tri.params, s, tt)
        image[rows, cols] = np.clip(shade * values, 0.0, 1.0)

    return CameraView(intrinsics=view.intrinsics, pose=view.pose, image=image, depth=depth32)
