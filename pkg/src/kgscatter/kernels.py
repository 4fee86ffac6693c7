"""Hot numerical kernels, each with a compiled loop and a numpy twin.

* ``linking_number`` -- Gauss linking number of two closed polylines, summed
  exactly segment pair by segment pair through signed triangle solid angles.
* ``biot_savart_polyline`` -- field of a unit current on a closed polyline,
  normalised so that its circulation around a loop equals the linking number.
* ``backproject`` -- parallel-beam backprojection with linear interpolation.

The public functions dispatch on :func:`kgscatter._jit.backend`; the
``*_numba`` / ``*_numpy`` variants are importable for benchmarking and for
cross-checking the two implementations against each other.
"""
import numpy as np

from ._jit import backend, njit


def _closed(poly):
    poly = np.ascontiguousarray(poly, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 3:
        raise ValueError("polyline must have shape (N, 3)")
    if not np.array_equal(poly[0], poly[-1]):
        poly = np.vstack([poly, poly[:1]])
    return poly


# --------------------------------------------------------------------------
# linking number
# --------------------------------------------------------------------------
@njit(cache=True)
def _linking_numba(ls, ks):
    acc = 0.0
    nl = ls.shape[0]
    nk = ks.shape[0]
    for i in range(nk - 1):
        for j in range(nl - 1):
            a0 = ls[j, 0] - ks[i, 0]
            a1 = ls[j, 1] - ks[i, 1]
            a2 = ls[j, 2] - ks[i, 2]
            b0 = ls[j, 0] - ks[i + 1, 0]
            b1 = ls[j, 1] - ks[i + 1, 1]
            b2 = ls[j, 2] - ks[i + 1, 2]
            c0 = ls[j + 1, 0] - ks[i + 1, 0]
            c1 = ls[j + 1, 1] - ks[i + 1, 1]
            c2 = ls[j + 1, 2] - ks[i + 1, 2]
            d0 = ls[j + 1, 0] - ks[i, 0]
            d1 = ls[j + 1, 1] - ks[i, 1]
            d2 = ls[j + 1, 2] - ks[i, 2]
            # triple product a . (b x c); a, b, c, d are coplanar-quad corners
            p = a0 * (b1 * c2 - b2 * c1) + a1 * (b2 * c0 - b0 * c2) + a2 * (b0 * c1 - b1 * c0)
            an = np.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
            bn = np.sqrt(b0 * b0 + b1 * b1 + b2 * b2)
            cn = np.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
            dn = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            ab = a0 * b0 + a1 * b1 + a2 * b2
            bc = b0 * c0 + b1 * c1 + b2 * c2
            ca = c0 * a0 + c1 * a1 + c2 * a2
            ad = a0 * d0 + a1 * d1 + a2 * d2
            dc = d0 * c0 + d1 * c1 + d2 * c2
            q1 = an * bn * cn + ab * cn + bc * an + ca * bn
            q2 = an * dn * cn + ad * cn + dc * an + ca * dn
            acc += np.arctan2(p, q1) + np.arctan2(p, q2)
    return acc / (2.0 * np.pi)


def _linking_numpy(ls, ks, chunk=256):
    acc = 0.0
    L0, L1 = ls[:-1], ls[1:]
    for start in range(0, ks.shape[0] - 1, chunk):
        K0 = ks[start:min(start + chunk, ks.shape[0] - 1)][:, None, :]
        K1 = ks[start + 1:min(start + chunk, ks.shape[0] - 1) + 1][:, None, :]
        a = L0[None] - K0
        b = L0[None] - K1
        c = L1[None] - K1
        d = L1[None] - K0
        p = np.einsum("ijk,ijk->ij", a, np.cross(b, c))
        an = np.linalg.norm(a, axis=-1)
        bn = np.linalg.norm(b, axis=-1)
        cn = np.linalg.norm(c, axis=-1)
        dn = np.linalg.norm(d, axis=-1)
        dot = lambda u, w: np.einsum("ijk,ijk->ij", u, w)
        ca = dot(c, a)
        q1 = an * bn * cn + dot(a, b) * cn + dot(b, c) * an + ca * bn
        q2 = an * dn * cn + dot(a, d) * cn + dot(d, c) * an + ca * dn
        acc += float(np.sum(np.arctan2(p, q1) + np.arctan2(p, q2)))
    return acc / (2.0 * np.pi)


def linking_number_numba(curve_a, curve_b):
    return float(_linking_numba(_closed(curve_a), _closed(curve_b)))


def linking_number_numpy(curve_a, curve_b):
    return _linking_numpy(_closed(curve_a), _closed(curve_b))


def linking_number(curve_a, curve_b):
    """Linking number of two closed polylines (first point repeated or not).

    Exact for the polygons themselves, so the result is an integer up to
    rounding whenever the polygons are disjoint.
    """
    if backend() == "numba":
        return linking_number_numba(curve_a, curve_b)
    return linking_number_numpy(curve_a, curve_b)


# --------------------------------------------------------------------------
# Biot-Savart field of a closed polyline
# --------------------------------------------------------------------------
@njit(cache=True)
def _biot_savart_numba(points, loop):
    m = points.shape[0]
    n = loop.shape[0]
    out = np.zeros((m, 3))
    for k in range(m):
        x0 = points[k, 0]
        x1 = points[k, 1]
        x2 = points[k, 2]
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for j in range(n - 1):
            r0 = x0 - loop[j, 0]
            r1 = x1 - loop[j, 1]
            r2 = x2 - loop[j, 2]
            f0 = x0 - loop[j + 1, 0]
            f1 = x1 - loop[j + 1, 1]
            f2 = x2 - loop[j + 1, 2]
            rn = np.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
            fn = np.sqrt(f0 * f0 + f1 * f1 + f2 * f2)
            den = rn * fn * (rn * fn + r0 * f0 + r1 * f1 + r2 * f2)
            if den <= 0.0:
                continue
            w = (rn + fn) / den
            s0 += w * (r1 * f2 - r2 * f1)
            s1 += w * (r2 * f0 - r0 * f2)
            s2 += w * (r0 * f1 - r1 * f0)
        out[k, 0] = s0 / (4.0 * np.pi)
        out[k, 1] = s1 / (4.0 * np.pi)
        out[k, 2] = s2 / (4.0 * np.pi)
    return out


def _biot_savart_numpy(points, loop, chunk=2048):
    out = np.empty((points.shape[0], 3))
    for start in range(0, points.shape[0], chunk):
        x = points[start:start + chunk][:, None, :]
        r = x - loop[None, :-1]
        f = x - loop[None, 1:]
        rn = np.linalg.norm(r, axis=-1)
        fn = np.linalg.norm(f, axis=-1)
        den = rn * fn * (rn * fn + np.einsum("ijk,ijk->ij", r, f))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(den > 0.0, (rn + fn) / den, 0.0)
        out[start:start + chunk] = np.einsum("ij,ijk->ik", w, np.cross(r, f)) / (4.0 * np.pi)
    return out


def _prep_points(points):
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    return pts


def biot_savart_polyline_numba(points, loop):
    pts = _prep_points(points)
    return _biot_savart_numba(pts, _closed(loop)).reshape(np.shape(points))


def biot_savart_polyline_numpy(points, loop):
    pts = _prep_points(points)
    return _biot_savart_numpy(pts, _closed(loop)).reshape(np.shape(points))


def biot_savart_polyline(points, loop):
    """Field at ``points`` of a unit current running along the closed ``loop``.

    Normalised so that ``circulation(field, gamma) == linking(gamma, loop)``.
    """
    if backend() == "numba":
        return biot_savart_polyline_numba(points, loop)
    return biot_savart_polyline_numpy(points, loop)


# --------------------------------------------------------------------------
# parallel-beam backprojection
# --------------------------------------------------------------------------
@njit(cache=True)
def _backproject_numba(filtered, cos_a, sin_a, s0, ds, xs, ys):
    n_ang, n_off = filtered.shape
    ny = ys.shape[0]
    nx = xs.shape[0]
    img = np.zeros((ny, nx))
    for k in range(n_ang):
        c = cos_a[k]
        s = sin_a[k]
        for iy in range(ny):
            for ix in range(nx):
                t = (-xs[ix] * s + ys[iy] * c - s0) / ds
                i0 = int(np.floor(t))
                if i0 < 0 or i0 >= n_off - 1:
                    continue
                w = t - i0
                img[iy, ix] += (1.0 - w) * filtered[k, i0] + w * filtered[k, i0 + 1]
    return img


def _backproject_numpy(filtered, cos_a, sin_a, s0, ds, xs, ys):
    n_ang, n_off = filtered.shape
    X, Y = np.meshgrid(xs, ys)
    img = np.zeros_like(X)
    for k in range(n_ang):
        t = (-X * sin_a[k] + Y * cos_a[k] - s0) / ds
        i0 = np.floor(t).astype(np.int64)
        ok = (i0 >= 0) & (i0 < n_off - 1)
        i0c = np.clip(i0, 0, n_off - 2)
        w = t - i0c
        val = (1.0 - w) * filtered[k, i0c] + w * filtered[k, i0c + 1]
        img += np.where(ok, val, 0.0)
    return img


def _bp_args(filtered, angles, s0, ds, xs, ys):
    angles = np.asarray(angles, dtype=np.float64)
    return (
        np.ascontiguousarray(filtered, dtype=np.float64),
        np.cos(angles),
        np.sin(angles),
        float(s0),
        float(ds),
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
    )


def backproject_numba(filtered, angles, s0, ds, xs, ys):
    return _backproject_numba(*_bp_args(filtered, angles, s0, ds, xs, ys))


def backproject_numpy(filtered, angles, s0, ds, xs, ys):
    return _backproject_numpy(*_bp_args(filtered, angles, s0, ds, xs, ys))


def backproject(filtered, angles, s0, ds, xs, ys):
    """Sum over angles of filtered projections, sampled on the (ys, xs) grid.

    Line ``k`` has direction (cos a_k, sin a_k); its offset coordinate is
    ``s = -x sin a_k + y cos a_k`` sampled at ``s0 + i*ds``.  Points whose
    offset falls outside the sampled range receive no contribution.
    """
    if backend() == "numba":
        return backproject_numba(filtered, angles, s0, ds, xs, ys)
    return backproject_numpy(filtered, angles, s0, ds, xs, ys)
