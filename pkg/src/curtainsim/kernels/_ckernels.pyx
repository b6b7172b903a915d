# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of _pykernels.motion_scatter.

Same contract, same arithmetic, same accumulation order; built with
-ffp-contract=off so results stay bit-identical to the numpy reference.
"""

from libc.math cimport floor, isfinite

import numpy as np

cimport numpy as cnp

cnp.import_array()


def motion_scatter(
    double[::1] omega,
    double[:, :, ::1] vel,
    double[:, ::1] wts,
    double[:, ::1] centers,
    double dt,
    double inv_cell,
    double ox,
    double oy,
    int width,
    int height,
    bint torus,
    double[:, :, ::1] delta,
    double[:, :, ::1] eps,
    double[::1] u0,
    double birth_prob,
    double omega_min,
    double omega_max,
    double[::1] out_omega,
    double[:, :, ::1] out_vel,
    double[:, ::1] out_wts,
    cnp.uint8_t[::1] needs_birth,
):
    cdef Py_ssize_t n = wts.shape[0]
    cdef Py_ssize_t m = wts.shape[1]
    cdef Py_ssize_t nm = n * m
    cdef Py_ssize_t i, k, j, s, e, pos, seg_len, w_i
    cdef double px, py, gx, gy, cx, cy
    cdef double fw = <double> width
    cdef double fh = <double> height
    cdef long long ixi, iyi, d

    dest_np = np.empty(nm, dtype=np.int64)
    cnt_np = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] dest = dest_np
    cdef long long[::1] cnt = cnt_np

    # Pass 1: destination cell per particle (-1 = dropped), counts per cell.
    for i in range(n):
        cx = centers[i, 0]
        cy = centers[i, 1]
        for k in range(m):
            px = (cx + vel[i, k, 0] * dt) + delta[i, k, 0]
            py = (cy + vel[i, k, 1] * dt) + delta[i, k, 1]
            gx = (px - ox) * inv_cell
            gy = (py - oy) * inv_cell
            if torus:
                gx = gx - floor(gx / fw) * fw
                gy = gy - floor(gy / fh) * fh
                if not (isfinite(gx) and isfinite(gy)):
                    dest[i * m + k] = -1
                    continue
            else:
                if not (gx >= 0.0 and gx < fw and gy >= 0.0 and gy < fh):
                    dest[i * m + k] = -1
                    continue
            ixi = <long long> floor(gx)
            if ixi > width - 1:
                ixi = width - 1
            iyi = <long long> floor(gy)
            if iyi > height - 1:
                iyi = height - 1
            d = iyi * width + ixi
            dest[i * m + k] = d
            cnt[d + 1] += 1

    # Exclusive prefix sum: cnt[j] becomes the segment start of cell j.
    for j in range(n):
        cnt[j + 1] += cnt[j]
    cdef Py_ssize_t kept = cnt[n]

    smass_np = np.empty(kept, dtype=np.float64)
    svx_np = np.empty(kept, dtype=np.float64)
    svy_np = np.empty(kept, dtype=np.float64)
    cbuf_np = np.empty(kept, dtype=np.float64)
    fill_np = np.zeros(n, dtype=np.int64)
    cdef double[::1] smass = smass_np
    cdef double[::1] svx = svx_np
    cdef double[::1] svy = svy_np
    cdef double[::1] cbuf = cbuf_np
    cdef long long[::1] fill = fill_np

    # Pass 2: stable fill grouped by destination (source order preserved).
    cdef double om_i
    for i in range(n):
        om_i = omega[i]
        for k in range(m):
            d = dest[i * m + k]
            if d < 0:
                continue
            pos = cnt[d] + fill[d]
            fill[d] += 1
            smass[pos] = om_i * wts[i, k]
            svx[pos] = vel[i, k, 0] + eps[i, k, 0]
            svy[pos] = vel[i, k, 1] + eps[i, k, 1]

    # Pass 3: per-cell mass accumulation, occupancy, systematic resampling.
    cdef long long truncations = 0
    cdef long long cells_in = 0
    cdef double total, raw, ob, u, step, u0j
    cdef double inv_m = 1.0 / <double> m
    for j in range(n):
        for k in range(m):
            out_wts[j, k] = inv_m
        s = cnt[j]
        e = cnt[j] + fill[j]
        raw = 0.0
        if e > s:
            cells_in += 1
            total = 0.0
            for pos in range(s, e):
                total = total + smass[pos]
                cbuf[pos] = total
            raw = total
            if raw > 1.0:
                truncations += 1
        ob = raw + birth_prob * (1.0 - raw)
        if ob > omega_max:
            ob = omega_max
        if ob < omega_min:
            ob = omega_min
        out_omega[j] = ob
        if e > s and raw > 0.0:
            needs_birth[j] = 0
            step = raw / <double> m
            seg_len = e - s
            u0j = u0[j]
            w_i = 0
            for k in range(m):
                u = (u0j + <double> k) * step
                while w_i < seg_len - 1 and u >= cbuf[s + w_i]:
                    w_i += 1
                out_vel[j, k, 0] = svx[s + w_i]
                out_vel[j, k, 1] = svy[s + w_i]
        else:
            needs_birth[j] = 1
    return int(truncations), int(cells_in)
