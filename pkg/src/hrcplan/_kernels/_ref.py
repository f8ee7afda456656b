"""Pure-Python geometry kernels.

Fallback implementation of the hot collision/kinematics routines. The
compiled module `_fastgeom` mirrors these functions line for line; both
backends must produce identical results (same formulas, same evaluation
order), so keep any change synchronized with `_fastgeom.pyx`.
"""

import math

import numpy as np

BACKEND = "python"

_EPS_SQ = 1e-18


def fk_origins(q, dh, base):
    """Joint-frame origins of the serial chain.

    q: (6,) joint angles; dh: (6,4) rows of (a, alpha, d, theta_offset);
    base: (4,4) homogeneous base transform. Returns (7,3): base origin
    followed by the origin after each joint transform.
    """
    T = [float(base[i, j]) for i in range(4) for j in range(4)]
    out = np.empty((7, 3), dtype=np.float64)
    out[0, 0] = T[3]
    out[0, 1] = T[7]
    out[0, 2] = T[11]
    for i in range(6):
        a = float(dh[i, 0])
        alpha = float(dh[i, 1])
        d = float(dh[i, 2])
        theta = float(q[i]) + float(dh[i, 3])
        ct = math.cos(theta)
        st = math.sin(theta)
        ca = math.cos(alpha)
        sa = math.sin(alpha)
        A = [
            ct, -st * ca, st * sa, a * ct,
            st, ct * ca, -ct * sa, a * st,
            0.0, sa, ca, d,
            0.0, 0.0, 0.0, 1.0,
        ]
        R = [0.0] * 16
        for r in range(4):
            for c in range(4):
                s = 0.0
                for k in range(4):
                    s += T[4 * r + k] * A[4 * k + c]
                R[4 * r + c] = s
        T = R
        out[i + 1, 0] = T[3]
        out[i + 1, 1] = T[7]
        out[i + 1, 2] = T[11]
    return out


def _seg_seg_sq(ax0, ay0, az0, ax1, ay1, az1, bx0, by0, bz0, bx1, by1, bz1):
    """Squared minimum distance between two closed segments."""
    d1x = ax1 - ax0
    d1y = ay1 - ay0
    d1z = az1 - az0
    d2x = bx1 - bx0
    d2y = by1 - by0
    d2z = bz1 - bz0
    rx = ax0 - bx0
    ry = ay0 - by0
    rz = az0 - bz0
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
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


def seg_seg_distance(a0, a1, b0, b1):
    """Minimum Euclidean distance between segments a0-a1 and b0-b1."""
    return math.sqrt(_seg_seg_sq(
        float(a0[0]), float(a0[1]), float(a0[2]),
        float(a1[0]), float(a1[1]), float(a1[2]),
        float(b0[0]), float(b0[1]), float(b0[2]),
        float(b1[0]), float(b1[1]), float(b1[2]),
    ))


def _seg_box_sq(px0, py0, pz0, px1, py1, pz1, bx0, by0, bz0, bx1, by1, bz1):
    """Squared distance from a segment to an axis-aligned box.

    Alternates between clamping the segment point into the box and
    re-projecting onto the segment; the objective is jointly convex, so the
    alternation converges to the global minimum.
    """
    dx = px1 - px0
    dy = py1 - py0
    dz = pz1 - pz0
    dd = dx * dx + dy * dy + dz * dz
    t = 0.5
    if dd <= _EPS_SQ:
        t = 0.0
        dd = 0.0
    for _ in range(128):
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
        if abs(tn - t) < 1e-14:
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


def seg_box_distance(p0, p1, bmin, bmax):
    """Minimum distance from segment p0-p1 to the box [bmin, bmax]."""
    return math.sqrt(_seg_box_sq(
        float(p0[0]), float(p0[1]), float(p0[2]),
        float(p1[0]), float(p1[1]), float(p1[2]),
        float(bmin[0]), float(bmin[1]), float(bmin[2]),
        float(bmax[0]), float(bmax[1]), float(bmax[2]),
    ))


def _config_collision_origins(org, radii, boxes, caps, pairs):
    for i in range(6):
        ri = float(radii[i])
        x0, y0, z0 = org[i]
        x1, y1, z1 = org[i + 1]
        for b in range(boxes.shape[0]):
            dsq = _seg_box_sq(x0, y0, z0, x1, y1, z1,
                              boxes[b, 0], boxes[b, 1], boxes[b, 2],
                              boxes[b, 3], boxes[b, 4], boxes[b, 5])
            if dsq < ri * ri:
                return True
        for c in range(caps.shape[0]):
            rr = ri + float(caps[c, 6])
            dsq = _seg_seg_sq(x0, y0, z0, x1, y1, z1,
                              caps[c, 0], caps[c, 1], caps[c, 2],
                              caps[c, 3], caps[c, 4], caps[c, 5])
            if dsq < rr * rr:
                return True
    for p in range(pairs.shape[0]):
        i = int(pairs[p, 0])
        j = int(pairs[p, 1])
        rr = float(radii[i]) + float(radii[j])
        dsq = _seg_seg_sq(org[i][0], org[i][1], org[i][2],
                          org[i + 1][0], org[i + 1][1], org[i + 1][2],
                          org[j][0], org[j][1], org[j][2],
                          org[j + 1][0], org[j + 1][1], org[j + 1][2])
        if dsq < rr * rr:
            return True
    return False


def config_collision(q, dh, base, radii, boxes, caps, pairs):
    """True iff any robot link capsule hits a box, a human capsule, or a
    declared self-collision partner link."""
    if boxes.shape[0] == 0 and caps.shape[0] == 0 and pairs.shape[0] == 0:
        return False
    org = fk_origins(q, dh, base)
    return _config_collision_origins(
        [(org[i, 0], org[i, 1], org[i, 2]) for i in range(7)],
        radii, boxes, caps, pairs)


def edge_collision(qa, qb, step, dh, base, radii, boxes, caps, pairs):
    """True iff any interpolated config along qa->qb collides.

    Interpolation is linear in joint space with spacing <= step in max-norm.
    The subdivision count is the smallest power of two satisfying the
    spacing bound, so halving `step` always re-checks a superset of points.
    Points are visited endpoints first, then dyadic levels coarse to fine.
    """
    if boxes.shape[0] == 0 and caps.shape[0] == 0 and pairs.shape[0] == 0:
        return False
    span = 0.0
    for i in range(6):
        d = abs(float(qb[i]) - float(qa[i]))
        if d > span:
            span = d
    if config_collision(qa, dh, base, radii, boxes, caps, pairs):
        return True
    if span == 0.0:
        return False
    if config_collision(qb, dh, base, radii, boxes, caps, pairs):
        return True
    n = 1
    while n * step < span:
        n *= 2
    qm = np.empty(6, dtype=np.float64)
    level = 2
    while level <= n:
        for k in range(1, level, 2):
            t = k / level
            for i in range(6):
                qm[i] = float(qa[i]) + t * (float(qb[i]) - float(qa[i]))
            if config_collision(qm, dh, base, radii, boxes, caps, pairs):
                return True
        level *= 2
    return False
