"""Reference numpy implementation of the grid motion-update kernel.

This is the pure-Python twin of the compiled kernel. Both consume identical
pre-drawn noise arrays and must produce bit-identical outputs: per-destination
mass accumulation runs in stable source order, per-cell cumulative sums are
sequential (np.cumsum), and systematic-resampling positions use the exact
expression (u0 + k) * (total / M). Keep any change mirrored in _ckernels.pyx.
"""

from __future__ import annotations

import numpy as np


def motion_scatter(
    omega: np.ndarray,
    vel: np.ndarray,
    wts: np.ndarray,
    centers: np.ndarray,
    dt: float,
    inv_cell: float,
    ox: float,
    oy: float,
    width: int,
    height: int,
    torus: bool,
    delta: np.ndarray,
    eps: np.ndarray,
    u0: np.ndarray,
    birth_prob: float,
    omega_min: float,
    omega_max: float,
    out_omega: np.ndarray,
    out_vel: np.ndarray,
    out_wts: np.ndarray,
    needs_birth: np.ndarray,
) -> tuple[int, int]:
    """Scatter particle mass to destination cells and resample to M per cell.

    Each source particle (i, m) carries mass omega[i] * wts[i, m] to the cell
    containing centers[i] + vel[i, m] * dt + delta[i, m]; its stored velocity
    becomes vel[i, m] + eps[i, m]. Destination occupancy is raw incoming mass
    mixed with birth_prob and clamped to [omega_min, omega_max]. Cells whose
    incoming mass is zero (or that receive nothing) are flagged in needs_birth
    and left for the caller to fill with birth particles; their weights are
    already uniform. Returns (truncation_count, cells_with_incoming).
    """
    n, m = wts.shape
    px = (centers[:, 0:1] + vel[:, :, 0] * dt) + delta[:, :, 0]
    py = (centers[:, 1:2] + vel[:, :, 1] * dt) + delta[:, :, 1]
    gx = (px - ox) * inv_cell
    gy = (py - oy) * inv_cell
    if torus:
        gx = gx - np.floor(gx / width) * width
        gy = gy - np.floor(gy / height) * height
        valid = np.isfinite(gx) & np.isfinite(gy)
    else:
        valid = (gx >= 0.0) & (gx < width) & (gy >= 0.0) & (gy < height)
    gx = np.where(valid, gx, 0.0)
    gy = np.where(valid, gy, 0.0)
    ix = np.minimum(np.floor(gx).astype(np.int64), width - 1)
    iy = np.minimum(np.floor(gy).astype(np.int64), height - 1)
    dest = (iy * width + ix).ravel()

    mass = (omega[:, None] * wts).ravel()
    nvx = (vel[:, :, 0] + eps[:, :, 0]).ravel()
    nvy = (vel[:, :, 1] + eps[:, :, 1]).ravel()

    keep = np.flatnonzero(valid.ravel())
    order = keep[np.argsort(dest[keep], kind="stable")]
    sdest = dest[order]
    smass = mass[order]
    svx = nvx[order]
    svy = nvy[order]

    if len(sdest):
        starts = np.flatnonzero(np.r_[True, sdest[1:] != sdest[:-1]])
        ends = np.r_[starts[1:], len(sdest)]
    else:
        starts = ends = np.empty(0, dtype=np.int64)

    raw = np.zeros(n, dtype=np.float64)
    needs_birth[:] = 1
    out_wts[:] = 1.0 / m
    truncations = 0
    ks = np.arange(m, dtype=np.float64)
    for s, e in zip(starts, ends):
        j = int(sdest[s])
        c = np.cumsum(smass[s:e])
        total = c[-1]
        raw[j] = total
        if total > 1.0:
            truncations += 1
        if total <= 0.0:
            continue
        needs_birth[j] = 0
        u = (u0[j] + ks) * (total / m)
        sel = np.searchsorted(c, u, side="right")
        np.minimum(sel, e - s - 1, out=sel)
        out_vel[j, :, 0] = svx[s:e][sel]
        out_vel[j, :, 1] = svy[s:e][sel]

    ob = raw + birth_prob * (1.0 - raw)
    np.minimum(ob, omega_max, out=ob)
    np.maximum(ob, omega_min, out=ob)
    out_omega[:] = ob
    return truncations, int(len(starts))
