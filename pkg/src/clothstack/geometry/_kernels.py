"""Numba kernels for BVH queries.

All kernels operate on the flat arrays produced by bvh.build_index and are
serial per call; batching across queries happens inside the kernel loop so
results do not depend on caller-side threading.
"""

import numba as nb
import numpy as np

# discard ray hits at or below this parameter to avoid self-intersection
RAY_EPS_T = 1e-7

_STACK_DEPTH = 128


@nb.njit(cache=True, inline="always")
def _closest_on_triangle(ax, ay, az, bx, by, bz, cx, cy, cz, qx, qy, qz):
    """Closest point to q on triangle abc (region-based, exact arithmetic)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = qx - ax, qy - ay, qz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az

    bpx, bpy, bpz = qx - bx, qy - by, qz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        v = d1 / denom if denom != 0.0 else 0.0
        return ax + v * abx, ay + v * aby, az + v * abz

    cpx, cpy, cpz = qx - cx, qy - cy, qz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = d2 / denom if denom != 0.0 else 0.0
        return ax + w * acx, ay + w * acy, az + w * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / denom if denom != 0.0 else 0.0
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)

    denom = va + vb + vc
    if denom == 0.0:
        return ax, ay, az
    v = vb / denom
    w = vc / denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@nb.njit(cache=True, inline="always")
def _aabb_dist2(bmin, bmax, node, qx, qy, qz):
    d = 0.0
    for a in range(3):
        q = qx if a == 0 else (qy if a == 1 else qz)
        lo = bmin[node, a] - q
        hi = q - bmax[node, a]
        if lo > 0.0:
            d += lo * lo
        if hi > 0.0:
            d += hi * hi
    return d


@nb.njit(cache=True)
def closest_points(bmin, bmax, left, right, start, count, perm, tri,
                   queries, out_point, out_face, out_dist):
    """Nearest surface point per query; ties break by lowest face index."""
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    for qi in range(queries.shape[0]):
        qx, qy, qz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        best_d2 = np.inf
        best_face = -1
        best_x = best_y = best_z = 0.0
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            if _aabb_dist2(bmin, bmax, node, qx, qy, qz) > best_d2:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    f = perm[k]
                    px, py, pz = _closest_on_triangle(
                        tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2],
                        tri[f, 1, 0], tri[f, 1, 1], tri[f, 1, 2],
                        tri[f, 2, 0], tri[f, 2, 1], tri[f, 2, 2],
                        qx, qy, qz)
                    dx, dy, dz = qx - px, qy - py, qz - pz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2 or (d2 == best_d2 and f < best_face):
                        best_d2 = d2
                        best_face = f
                        best_x, best_y, best_z = px, py, pz
            else:
                l, r = left[node], right[node]
                dl = _aabb_dist2(bmin, bmax, l, qx, qy, qz)
                dr = _aabb_dist2(bmin, bmax, r, qx, qy, qz)
                # push the farther child first so the nearer is expanded next
                if dl <= dr:
                    if dr <= best_d2:
                        top += 1
                        stack[top] = r
                    if dl <= best_d2:
                        top += 1
                        stack[top] = l
                else:
                    if dl <= best_d2:
                        top += 1
                        stack[top] = l
                    if dr <= best_d2:
                        top += 1
                        stack[top] = r
        out_point[qi, 0] = best_x
        out_point[qi, 1] = best_y
        out_point[qi, 2] = best_z
        out_face[qi] = best_face
        out_dist[qi] = np.sqrt(best_d2)


@nb.njit(cache=True, inline="always")
def _ray_triangle(ox, oy, oz, dx, dy, dz, v0x, v0y, v0z, v1x, v1y, v1z,
                  v2x, v2y, v2z):
    """Moller-Trumbore; returns (hit, t). Parallel rays miss."""
    e1x, e1y, e1z = v1x - v0x, v1y - v0y, v1z - v0z
    e2x, e2y, e2z = v2x - v0x, v2y - v0y, v2z - v0z
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return False, 0.0
    inv = 1.0 / det
    tx, ty, tz = ox - v0x, oy - v0y, oz - v0z
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return False, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return False, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return True, t


@nb.njit(cache=True, inline="always")
def _ray_hits_aabb(bmin, bmax, node, ox, oy, oz, ix, iy, iz, t_lo):
    tmin = t_lo
    tmax = np.inf
    for a in range(3):
        o = ox if a == 0 else (oy if a == 1 else oz)
        inv = ix if a == 0 else (iy if a == 1 else iz)
        if np.isinf(inv):
            if o < bmin[node, a] or o > bmax[node, a]:
                return False
        else:
            t1 = (bmin[node, a] - o) * inv
            t2 = (bmax[node, a] - o) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@nb.njit(cache=True)
def ray_all_hits(bmin, bmax, left, right, start, count, perm, tri,
                 origins, dirs, eps_t, out_t, out_face, out_n):
    """All crossings with t > eps_t per ray, unsorted, capped at capacity.

    out_t/out_face are (Q, cap); out_n receives the true hit count, which may
    exceed cap (caller re-runs those rays with more room).
    """
    cap = out_t.shape[1]
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    for qi in range(origins.shape[0]):
        ox, oy, oz = origins[qi, 0], origins[qi, 1], origins[qi, 2]
        dx, dy, dz = dirs[qi, 0], dirs[qi, 1], dirs[qi, 2]
        ix = 1.0 / dx if dx != 0.0 else np.inf
        iy = 1.0 / dy if dy != 0.0 else np.inf
        iz = 1.0 / dz if dz != 0.0 else np.inf
        n = 0
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            if not _ray_hits_aabb(bmin, bmax, node, ox, oy, oz, ix, iy, iz, eps_t):
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    f = perm[k]
                    hit, t = _ray_triangle(
                        ox, oy, oz, dx, dy, dz,
                        tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2],
                        tri[f, 1, 0], tri[f, 1, 1], tri[f, 1, 2],
                        tri[f, 2, 0], tri[f, 2, 1], tri[f, 2, 2])
                    if hit and t > eps_t:
                        if n < cap:
                            out_t[qi, n] = t
                            out_face[qi, n] = f
                        n += 1
            else:
                top += 1
                stack[top] = left[node]
                top += 1
                stack[top] = right[node]
        out_n[qi] = n


@nb.njit(cache=True, inline="always")
def _solid_angle(v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z, qx, qy, qz):
    """Signed solid angle of a triangle as seen from q (van Oosterom-Strackee)."""
    ax, ay, az = v0x - qx, v0y - qy, v0z - qz
    bx, by, bz = v1x - qx, v1y - qy, v1z - qz
    cx, cy, cz = v2x - qx, v2y - qy, v2z - qz
    la = np.sqrt(ax * ax + ay * ay + az * az)
    lb = np.sqrt(bx * bx + by * by + bz * bz)
    lc = np.sqrt(cx * cx + cy * cy + cz * cz)
    numer = (ax * (by * cz - bz * cy)
             + ay * (bz * cx - bx * cz)
             + az * (bx * cy - by * cx))
    denom = (la * lb * lc
             + (ax * bx + ay * by + az * bz) * lc
             + (bx * cx + by * cy + bz * cz) * la
             + (cx * ax + cy * ay + cz * az) * lb)
    return 2.0 * np.arctan2(numer, denom)


@nb.njit(cache=True)
def winding_numbers(bmin, bmax, left, right, start, count, perm, tri,
                    centroid, anormal, radius, queries, beta, out_w):
    """Generalized winding number per query.

    Nodes farther than beta * radius are approximated by their area-weighted
    normal dipole; everything nearer is summed exactly per triangle, so the
    approximation error vanishes where the decision is delicate.
    """
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    inv4pi = 1.0 / (4.0 * np.pi)
    for qi in range(queries.shape[0]):
        qx, qy, qz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        acc = 0.0
        top = 0
        stack[0] = 0
        while top >= 0:
            node = stack[top]
            top -= 1
            cx = centroid[node, 0] - qx
            cy = centroid[node, 1] - qy
            cz = centroid[node, 2] - qz
            dist = np.sqrt(cx * cx + cy * cy + cz * cz)
            if dist > beta * radius[node]:
                d3 = dist * dist * dist
                acc += (anormal[node, 0] * cx
                        + anormal[node, 1] * cy
                        + anormal[node, 2] * cz) / d3
            elif left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    f = perm[k]
                    acc += _solid_angle(
                        tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2],
                        tri[f, 1, 0], tri[f, 1, 1], tri[f, 1, 2],
                        tri[f, 2, 0], tri[f, 2, 1], tri[f, 2, 2],
                        qx, qy, qz)
            else:
                top += 1
                stack[top] = left[node]
                top += 1
                stack[top] = right[node]
        out_w[qi] = acc * inv4pi


@nb.njit(cache=True)
def winding_numbers_exact(tri, queries, out_w):
    """Full solid-angle sum over every face; no approximation."""
    inv4pi = 1.0 / (4.0 * np.pi)
    for qi in range(queries.shape[0]):
        qx, qy, qz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        acc = 0.0
        for f in range(tri.shape[0]):
            acc += _solid_angle(
                tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2],
                tri[f, 1, 0], tri[f, 1, 1], tri[f, 1, 2],
                tri[f, 2, 0], tri[f, 2, 1], tri[f, 2, 2],
                qx, qy, qz)
        out_w[qi] = acc * inv4pi
