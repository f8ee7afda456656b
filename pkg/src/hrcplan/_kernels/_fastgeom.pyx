# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels.

Line-for-line mirror of `_ref.py`; keep both in sync so the backends agree
bit for bit.
"""

from libc.math cimport cos, sin, sqrt, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double _EPS_SQ = 1e-18


cdef void _fk_chain(const double* q, const double* dh, const double* base,
                    double* org) noexcept nogil:
    cdef double T[16]
    cdef double A[16]
    cdef double R[16]
    cdef int i, r, c, k
    cdef double a, alpha, d, theta, ct, st, ca, sa, s
    for i in range(16):
        T[i] = base[i]
    org[0] = T[3]
    org[1] = T[7]
    org[2] = T[11]
    for i in range(6):
        a = dh[4 * i + 0]
        alpha = dh[4 * i + 1]
        d = dh[4 * i + 2]
        theta = q[i] + dh[4 * i + 3]
        ct = cos(theta)
        st = sin(theta)
        ca = cos(alpha)
        sa = sin(alpha)
        A[0] = ct; A[1] = -st * ca; A[2] = st * sa; A[3] = a * ct
        A[4] = st; A[5] = ct * ca; A[6] = -ct * sa; A[7] = a * st
        A[8] = 0.0; A[9] = sa; A[10] = ca; A[11] = d
        A[12] = 0.0; A[13] = 0.0; A[14] = 0.0; A[15] = 1.0
        for r in range(4):
            for c in range(4):
                s = 0.0
                for k in range(4):
                    s += T[4 * r + k] * A[4 * k + c]
                R[4 * r + c] = s
        for r in range(16):
            T[r] = R[r]
        org[3 * (i + 1) + 0] = T[3]
        org[3 * (i + 1) + 1] = T[7]
        org[3 * (i + 1) + 2] = T[11]


cdef double _seg_seg_sq(double ax0, double ay0, double az0,
                        double ax1, double ay1, double az1,
                        double bx0, double by0, double bz0,
                        double bx1, double by1, double bz1) noexcept nogil:
    cdef double d1x = ax1 - ax0
    cdef double d1y = ay1 - ay0
    cdef double d1z = az1 - az0
    cdef double d2x = bx1 - bx0
    cdef double d2y = by1 - by0
    cdef double d2z = bz1 - bz0
    cdef double rx = ax0 - bx0
    cdef double ry = ay0 - by0
    cdef double rz = az0 - bz0
    cdef double a = d1x * d1x + d1y * d1y + d1z * d1z
    cdef double e = d2x * d2x + d2y * d2y + d2z * d2z
    cdef double f = d2x * rx + d2y * ry + d2z * rz
    cdef double s, t, c, b, denom, px, py, pz
    if a <= _EPS_SQ and e <= _EPS_SQ:
        return rx * rx + ry * ry + rz * rz
    if a <= _EPS_SQ:
        s = 0.0
        t = f / e
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= _EPS_SQ:
            t = 0.0
            s = -c / a
            s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > 0.0:
                s = (b * f - c * e) / denom
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = -c / a
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
            elif t > 1.0:
                t = 1.0
                s = (b - c) / a
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
    px = ax0 + d1x * s - (bx0 + d2x * t)
    py = ay0 + d1y * s - (by0 + d2y * t)
    pz = az0 + d1z * s - (bz0 + d2z * t)
    return px * px + py * py + pz * pz


cdef double _seg_box_sq(double px0, double py0, double pz0,
                        double px1, double py1, double pz1,
                        double bx0, double by0, double bz0,
                        double bx1, double by1, double bz1) noexcept nogil:
    cdef double dx = px1 - px0
    cdef double dy = py1 - py0
    cdef double dz = pz1 - pz0
    cdef double dd = dx * dx + dy * dy + dz * dz
    cdef double t = 0.5
    cdef double sx, sy, sz, qx, qy, qz, tn, ex, ey, ez
    cdef int it
    if dd <= _EPS_SQ:
        t = 0.0
        dd = 0.0
    for it in range(128):
        sx = px0 + dx * t
        sy = py0 + dy * t
        sz = pz0 + dz * t
        qx = bx0 if sx < bx0 else (bx1 if sx > bx1 else sx)
        qy = by0 if sy < by0 else (by1 if sy > by1 else sy)
        qz = bz0 if sz < bz0 else (bz1 if sz > bz1 else sz)
        if dd <= _EPS_SQ:
            break
        tn = ((qx - px0) * dx + (qy - py0) * dy + (qz - pz0) * dz) / dd
        tn = 0.0 if tn < 0.0 else (1.0 if tn > 1.0 else tn)
        if fabs(tn - t) < 1e-14:
            t = tn
            break
        t = tn
    sx = px0 + dx * t
    sy = py0 + dy * t
    sz = pz0 + dz * t
    qx = bx0 if sx < bx0 else (bx1 if sx > bx1 else sx)
    qy = by0 if sy < by0 else (by1 if sy > by1 else sy)
    qz = bz0 if sz < bz0 else (bz1 if sz > bz1 else sz)
    ex = sx - qx
    ey = sy - qy
    ez = sz - qz
    return ex * ex + ey * ey + ez * ez


cdef bint _config_collision_c(const double* q,
                              const double* dh, const double* base,
                              const double* radii,
                              const double* boxes, Py_ssize_t nb,
                              const double* caps, Py_ssize_t nc,
                              const long long* pairs, Py_ssize_t npair) noexcept nogil:
    cdef double org[21]
    cdef int i
    cdef Py_ssize_t b, c, p
    cdef long long li, lj
    cdef double ri, rr, dsq
    _fk_chain(q, dh, base, org)
    for i in range(6):
        ri = radii[i]
        for b in range(nb):
            dsq = _seg_box_sq(org[3 * i], org[3 * i + 1], org[3 * i + 2],
                              org[3 * i + 3], org[3 * i + 4], org[3 * i + 5],
                              boxes[6 * b], boxes[6 * b + 1], boxes[6 * b + 2],
                              boxes[6 * b + 3], boxes[6 * b + 4], boxes[6 * b + 5])
            if dsq < ri * ri:
                return True
        for c in range(nc):
            rr = ri + caps[7 * c + 6]
            dsq = _seg_seg_sq(org[3 * i], org[3 * i + 1], org[3 * i + 2],
                              org[3 * i + 3], org[3 * i + 4], org[3 * i + 5],
                              caps[7 * c], caps[7 * c + 1], caps[7 * c + 2],
                              caps[7 * c + 3], caps[7 * c + 4], caps[7 * c + 5])
            if dsq < rr * rr:
                return True
    for p in range(npair):
        li = pairs[2 * p]
        lj = pairs[2 * p + 1]
        rr = radii[li] + radii[lj]
        dsq = _seg_seg_sq(org[3 * li], org[3 * li + 1], org[3 * li + 2],
                          org[3 * li + 3], org[3 * li + 4], org[3 * li + 5],
                          org[3 * lj], org[3 * lj + 1], org[3 * lj + 2],
                          org[3 * lj + 3], org[3 * lj + 4], org[3 * lj + 5])
        if dsq < rr * rr:
            return True
    return False


def fk_origins(double[::1] q, double[:, ::1] dh, double[:, ::1] base):
    """Joint-frame origins of the serial chain; see `_ref.fk_origins`."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((7, 3), dtype=np.float64)
    cdef double basef[16]
    cdef int r, c
    for r in range(4):
        for c in range(4):
            basef[4 * r + c] = base[r, c]
    _fk_chain(&q[0], &dh[0, 0], basef, &out[0, 0])
    return out


def seg_seg_distance(a0, a1, b0, b1):
    """Minimum Euclidean distance between segments a0-a1 and b0-b1."""
    return sqrt(_seg_seg_sq(
        float(a0[0]), float(a0[1]), float(a0[2]),
        float(a1[0]), float(a1[1]), float(a1[2]),
        float(b0[0]), float(b0[1]), float(b0[2]),
        float(b1[0]), float(b1[1]), float(b1[2])))


def seg_box_distance(p0, p1, bmin, bmax):
    """Minimum distance from segment p0-p1 to the box [bmin, bmax]."""
    return sqrt(_seg_box_sq(
        float(p0[0]), float(p0[1]), float(p0[2]),
        float(p1[0]), float(p1[1]), float(p1[2]),
        float(bmin[0]), float(bmin[1]), float(bmin[2]),
        float(bmax[0]), float(bmax[1]), float(bmax[2])))


def config_collision(double[::1] q, double[:, ::1] dh, double[:, ::1] base,
                     double[::1] radii, double[:, ::1] boxes,
                     double[:, ::1] caps, long long[:, ::1] pairs):
    """True iff any robot link capsule hits an obstacle; see `_ref`."""
    cdef Py_ssize_t nb = boxes.shape[0]
    cdef Py_ssize_t nc = caps.shape[0]
    cdef Py_ssize_t npair = pairs.shape[0]
    if nb == 0 and nc == 0 and npair == 0:
        return False
    cdef double basef[16]
    cdef int r, c
    for r in range(4):
        for c in range(4):
            basef[4 * r + c] = base[r, c]
    return bool(_config_collision_c(
        &q[0], &dh[0, 0], basef, &radii[0],
        <const double*> (&boxes[0, 0] if nb > 0 else NULL), nb,
        <const double*> (&caps[0, 0] if nc > 0 else NULL), nc,
        <const long long*> (&pairs[0, 0] if npair > 0 else NULL), npair))


def edge_collision(double[::1] qa, double[::1] qb, double step,
                   double[:, ::1] dh, double[:, ::1] base,
                   double[::1] radii, double[:, ::1] boxes,
                   double[:, ::1] caps, long long[:, ::1] pairs):
    """Interpolated-edge collision test; see `_ref.edge_collision`."""
    cdef Py_ssize_t nb = boxes.shape[0]
    cdef Py_ssize_t nc = caps.shape[0]
    cdef Py_ssize_t npair = pairs.shape[0]
    if nb == 0 and nc == 0 and npair == 0:
        return False
    cdef double basef[16]
    cdef int r, c, i
    for r in range(4):
        for c in range(4):
            basef[4 * r + c] = base[r, c]
    cdef const double* pb = <const double*> (&boxes[0, 0] if nb > 0 else NULL)
    cdef const double* pc = <const double*> (&caps[0, 0] if nc > 0 else NULL)
    cdef const long long* pp = <const long long*> (&pairs[0, 0] if npair > 0 else NULL)
    cdef double span = 0.0
    cdef double d
    for i in range(6):
        d = fabs(qb[i] - qa[i])
        if d > span:
            span = d
    if _config_collision_c(&qa[0], &dh[0, 0], basef, &radii[0], pb, nb, pc, nc, pp, npair):
        return True
    if span == 0.0:
        return False
    if _config_collision_c(&qb[0], &dh[0, 0], basef, &radii[0], pb, nb, pc, nc, pp, npair):
        return True
    cdef long long n = 1
    while n * step < span:
        n *= 2
    cdef double qm[6]
    cdef long long level = 2
    cdef long long k
    cdef double t
    while level <= n:
        k = 1
        while k < level:
            t = (<double> k) / (<double> level)
            for i in range(6):
                qm[i] = qa[i] + t * (qb[i] - qa[i])
            if _config_collision_c(qm, &dh[0, 0], basef, &radii[0], pb, nb, pc, nc, pp, npair):
                return True
            k += 2
        level *= 2
    return False
