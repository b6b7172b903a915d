"""HSV visualization of a belief grid.

Hue encodes mean velocity direction, saturation encodes speed (saturating
at v_max), and value encodes occupancy, so free space renders black and
confident static cells render white-gray.
"""

from __future__ import annotations

import numpy as np

from .grid import DynamicOccupancyGrid

__all__ = ["hsv_to_rgb", "render_grid", "write_ppm", "read_ppm"]


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all channels in [0, 1]; h wraps modulo 1."""
    h = np.asarray(h, dtype=np.float64) % 1.0
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    h6 = h * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def render_grid(grid: DynamicOccupancyGrid, v_max: float = 2.0, scale: int = 1) -> np.ndarray:
    """Render the belief to an RGB image, row 0 at the top of the grid.

    Returns a (height*scale, width*scale, 3) uint8 array.
    """
    if v_max <= 0.0:
        raise ValueError("v_max must be positive")
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    g = grid.geom
    vbar = grid.mean_velocity()
    speed = np.hypot(vbar[:, 0], vbar[:, 1])
    hue = np.arctan2(vbar[:, 1], vbar[:, 0]) / (2.0 * np.pi) % 1.0
    sat = np.minimum(speed / v_max, 1.0)
    val = np.clip(grid.occupancy, 0.0, 1.0)
    rgb = hsv_to_rgb(hue, sat, val).reshape(g.height, g.width, 3)
    img = np.flipud(rgb)  # row-major grid has y upward; images have y downward
    out = (img * 255.0 + 0.5).astype(np.uint8)
    if scale > 1:
        out = np.repeat(np.repeat(out, scale, axis=0), scale, axis=1)
    return np.ascontiguousarray(out)


def write_ppm(img: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 image as binary PPM (P6)."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("image must be (H, W, 3) uint8")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) written by write_ppm."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError("not a binary PPM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError("only 8-bit PPM supported")
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return raw.reshape(h, w, 3).copy()
