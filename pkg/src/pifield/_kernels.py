"""Compiled inner loops: BVH closest-point and ray-parity queries, triangle rasterization.

All kernels take flat numpy arrays so the Python-side types stay plain dataclasses.
"""
import numpy as np
from numba import njit

STACK_SIZE = 128

# ray-parity status codes
DEGENERATE = -1


@njit(cache=True)
def _closest_on_triangle(p, a, b, c):
    # Ericson, Real-Time Collision Detection, 5.1.5
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return a[0], a[1], a[2]
    bpx, bpy, bpz = p[0] - b[0], p[1] - b[1], p[2] - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return b[0], b[1], b[2]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a[0] + v * abx, a[1] + v * aby, a[2] + v * abz
    cpx, cpy, cpz = p[0] - c[0], p[1] - c[1], p[2] - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return c[0], c[1], c[2]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a[0] + w * acx, a[1] + w * acy, a[2] + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2])
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (a[0] + abx * v + acx * w,
            a[1] + aby * v + acy * w,
            a[2] + abz * v + acz * w)


@njit(cache=True)
def _box_dist2(p, lo, hi):
    d = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            t = lo[k] - p[k]
            d += t * t
        elif p[k] > hi[k]:
            t = p[k] - hi[k]
            d += t * t
    return d


@njit(cache=True)
def closest_points(queries, verts, tris, node_lo, node_hi, node_left, node_start,
                   node_count, order):
    n = queries.shape[0]
    out_pt = np.empty((n, 3))
    out_d2 = np.empty(n)
    out_tri = np.empty(n, dtype=np.int64)
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    for qi in range(n):
        p = queries[qi]
        best = np.inf
        bx = by = bz = 0.0
        btri = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_dist2(p, node_lo[node], node_hi[node]) >= best:
                continue
            cnt = node_count[node]
            if cnt > 0:
                s = node_start[node]
                for j in range(s, s + cnt):
                    t = order[j]
                    cx, cy, cz = _closest_on_triangle(
                        p, verts[tris[t, 0]], verts[tris[t, 1]], verts[tris[t, 2]])
                    dx, dy, dz = cx - p[0], cy - p[1], cz - p[2]
                    d2 = dx * dx + dy * dy + dz * dz
                    # ties go to the lower triangle index for determinism
                    if d2 < best or (d2 == best and t < btri):
                        best = d2
                        bx, by, bz = cx, cy, cz
                        btri = t
            else:
                left = node_left[node]
                right = left + 1
                dl = _box_dist2(p, node_lo[left], node_hi[left])
                dr = _box_dist2(p, node_lo[right], node_hi[right])
                # push the farther child first so the nearer one is visited first
                if dl <= dr:
                    stack[sp] = right
                    stack[sp + 1] = left
                else:
                    stack[sp] = left
                    stack[sp + 1] = right
                sp += 2
        out_pt[qi, 0] = bx
        out_pt[qi, 1] = by
        out_pt[qi, 2] = bz
        out_d2[qi] = best
        out_tri[qi] = btri
    return out_pt, out_d2, out_tri


@njit(cache=True)
def _ray_hits_box(o, inv, lo, hi):
    tmin = 0.0
    tmax = np.inf
    for k in range(3):
        t1 = (lo[k] - o[k]) * inv[k]
        t2 = (hi[k] - o[k]) * inv[k]
        if t1 > t2:
            t1, t2 = t2, t1
        # NaN from 0*inf falls through both comparisons and keeps the slab open
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
        if tmin > tmax:
            return False
    return True


@njit(cache=True)
def ray_parity(origins, dirs, verts, tris, tri_valid, node_lo, node_hi, node_left,
               node_start, node_count, order, edge_tol, parallel_tol, t_tol):
    """Crossing count along each ray, or DEGENERATE when the hit test is unreliable."""
    n = origins.shape[0]
    out = np.empty(n, dtype=np.int64)
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    inv = np.empty(3)
    for qi in range(n):
        o = origins[qi]
        d = dirs[qi]
        for k in range(3):
            inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
        count = 0
        degenerate = False
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0 and not degenerate:
            sp -= 1
            node = stack[sp]
            if not _ray_hits_box(o, inv, node_lo[node], node_hi[node]):
                continue
            cnt = node_count[node]
            if cnt == 0:
                left = node_left[node]
                stack[sp] = left
                stack[sp + 1] = left + 1
                sp += 2
                continue
            s = node_start[node]
            for j in range(s, s + cnt):
                t = order[j]
                if not tri_valid[t]:
                    continue
                a = verts[tris[t, 0]]
                b = verts[tris[t, 1]]
                c = verts[tris[t, 2]]
                e1x, e1y, e1z = b[0] - a[0], b[1] - a[1], b[2] - a[2]
                e2x, e2y, e2z = c[0] - a[0], c[1] - a[1], c[2] - a[2]
                px = d[1] * e2z - d[2] * e2y
                py = d[2] * e2x - d[0] * e2z
                pz = d[0] * e2y - d[1] * e2x
                det = e1x * px + e1y * py + e1z * pz
                nx = e1y * e2z - e1z * e2y
                ny = e1z * e2x - e1x * e2z
                nz = e1x * e2y - e1y * e2x
                nlen = np.sqrt(nx * nx + ny * ny + nz * nz)
                sx, sy, sz = o[0] - a[0], o[1] - a[1], o[2] - a[2]
                if abs(det) < parallel_tol * nlen:
                    # ray parallel to the plane: only a problem if it runs inside the plane
                    if abs(sx * nx + sy * ny + sz * nz) <= t_tol * nlen:
                        degenerate = True
                        break
                    continue
                inv_det = 1.0 / det
                u = (sx * px + sy * py + sz * pz) * inv_det
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv_det
                w = 1.0 - u - v
                if u < -edge_tol or v < -edge_tol or w < -edge_tol:
                    continue
                tt = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if tt < -t_tol:
                    continue
                if tt <= t_tol or u <= edge_tol or v <= edge_tol or w <= edge_tol:
                    degenerate = True
                    break
                count += 1
        out[qi] = DEGENERATE if degenerate else count
    return out


@njit(cache=True)
def rasterize_ids(px, py, depth, tris, width, height):
    """Z-buffer pass: nearest triangle id and its barycentrics per pixel.

    Pixel (i, j) is sampled at its center (i, j). Smaller depth wins; equal depth keeps
    the earlier triangle. Shared edges follow the top-left rule.
    """
    zbuf = np.full((height, width), np.inf)
    tri_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        x0, y0, x1, y1, x2, y2 = px[i0], py[i0], px[i1], py[i1], px[i2], py[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        if area < 0.0:
            # swap so edge functions are positive inside
            i1, i2 = i2, i1
            x1, y1, x2, y2 = x2, y2, x1, y1
            area = -area
        xmin = max(int(np.ceil(min(x0, x1, x2))), 0)
        xmax = min(int(np.floor(max(x0, x1, x2))), width - 1)
        ymin = max(int(np.ceil(min(y0, y1, y2))), 0)
        ymax = min(int(np.floor(max(y0, y1, y2))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        # edge k runs from vertex k+1 to k+2; it owns its pixels when top or left
        own0 = _owns(x1, y1, x2, y2)
        own1 = _owns(x2, y2, x0, y0)
        own2 = _owns(x0, y0, x1, y1)
        d0, d1, d2 = depth[i0], depth[i1], depth[i2]
        for j in range(ymin, ymax + 1):
            fy = float(j)
            for i in range(xmin, xmax + 1):
                fx = float(i)
                w0 = (x2 - x1) * (fy - y1) - (y2 - y1) * (fx - x1)
                w1 = (x0 - x2) * (fy - y2) - (y0 - y2) * (fx - x2)
                w2 = (x1 - x0) * (fy - y0) - (y1 - y0) * (fx - x0)
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if (w0 == 0.0 and not own0) or (w1 == 0.0 and not own1) or (w2 == 0.0 and not own2):
                    continue
                b0 = w0 / area
                b1 = w1 / area
                b2 = w2 / area
                z = b0 * d0 + b1 * d1 + b2 * d2
                if z < zbuf[j, i]:
                    zbuf[j, i] = z
                    tri_id[j, i] = t
                    # barycentrics in the triangle's original vertex order
                    bary[j, i, 0] = b0
                    if tris[t, 1] == i1:
                        bary[j, i, 1] = b1
                        bary[j, i, 2] = b2
                    else:
                        bary[j, i, 1] = b2
                        bary[j, i, 2] = b1
    return zbuf, tri_id, bary


@njit(cache=True)
def _owns(ax, ay, bx, by):
    # inward normal of edge a->b is (-(by-ay), bx-ax) for positive-area winding
    dy = by - ay
    dx = bx - ax
    return (dy == 0.0 and dx > 0.0) or dy < 0.0


@njit(cache=True)
def winding_numbers(points, verts, tris):
    # Van Oosterom-Strackee solid angle per triangle
    n = points.shape[0]
    out = np.empty(n)
    for qi in range(n):
        p = points[qi]
        total = 0.0
        for t in range(tris.shape[0]):
            a = verts[tris[t, 0]]
            b = verts[tris[t, 1]]
            c = verts[tris[t, 2]]
            ax, ay, az = a[0] - p[0], a[1] - p[1], a[2] - p[2]
            bx, by, bz = b[0] - p[0], b[1] - p[1], b[2] - p[2]
            cx, cy, cz = c[0] - p[0], c[1] - p[1], c[2] - p[2]
            la = np.sqrt(ax * ax + ay * ay + az * az)
            lb = np.sqrt(bx * bx + by * by + bz * bz)
            lc = np.sqrt(cx * cx + cy * cy + cz * cz)
            det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
            den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
                   + (ax * cx + ay * cy + az * cz) * lb + (bx * cx + by * cy + bz * cz) * la)
            total += np.arctan2(det, den)
        out[qi] = total / (2.0 * np.pi)
    return out
