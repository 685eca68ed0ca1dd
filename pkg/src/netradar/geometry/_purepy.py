"""Pure numpy geometry kernels (fallback when the compiled core is absent).

Semantics match netradar.geometry._core: ellipse boundaries are sampled on
the same angular grid and clipping uses the same inclusive inside predicate,
so both backends agree to floating-point noise.
"""

import numpy as np

BACKEND_NAME = "pure"

_EMPTY = np.empty((0, 2), dtype=np.float64)


def ellipse_polygon(center, transform, n_vertices):
    """Inscribed polygon of an ellipse, counterclockwise.

    transform maps the unit circle onto the ellipse boundary (confidence
    multiplier already folded in); its determinant must be positive so the
    orientation is preserved.
    """
    theta = np.arange(n_vertices) * (2.0 * np.pi / n_vertices)
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return np.asarray(center)[None, :] + unit @ np.asarray(transform).T


def polygon_area(poly):
    """Shoelace area, positive for counterclockwise vertex order."""
    poly = np.asarray(poly, dtype=np.float64)
    if poly.shape[0] < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def clip_convex(subject, clip):
    """Sutherland-Hodgman clip of one convex CCW polygon by another."""
    out = np.asarray(subject, dtype=np.float64)
    clip = np.asarray(clip, dtype=np.float64)
    m = clip.shape[0]
    for e in range(m):
        n = out.shape[0]
        if n == 0:
            return _EMPTY
        ax, ay = clip[e]
        bx, by = clip[(e + 1) % m]
        ex, ey = bx - ax, by - ay
        # signed distance proxy; >= 0 keeps boundary points
        d = ex * (out[:, 1] - ay) - ey * (out[:, 0] - ax)
        inside = d >= 0.0
        if inside.all():
            continue
        if not inside.any():
            return _EMPTY
        verts = []
        for i in range(n):
            j = (i + 1) % n
            if inside[i]:
                verts.append(out[i])
                if not inside[j]:
                    t = d[i] / (d[i] - d[j])
                    verts.append(out[i] + t * (out[j] - out[i]))
            elif inside[j]:
                t = d[i] / (d[i] - d[j])
                verts.append(out[i] + t * (out[j] - out[i]))
        out = np.asarray(verts)
    return out


def intersection_area_kernel(centers, transforms, n_vertices):
    """Area of the common intersection of ellipses given as (center, transform)."""
    centers = np.asarray(centers, dtype=np.float64)
    transforms = np.asarray(transforms, dtype=np.float64)
    poly = ellipse_polygon(centers[0], transforms[0], n_vertices)
    for i in range(1, centers.shape[0]):
        poly = clip_convex(poly, ellipse_polygon(centers[i], transforms[i], n_vertices))
        if poly.shape[0] < 3:
            return 0.0
    return max(polygon_area(poly), 0.0)


def intersection_areas_batch(centers, transforms, n_vertices):
    """Intersection areas for a batch of ellipse groups, shapes (B,E,2)/(B,E,2,2)."""
    centers = np.asarray(centers, dtype=np.float64)
    transforms = np.asarray(transforms, dtype=np.float64)
    out = np.empty(centers.shape[0], dtype=np.float64)
    for b in range(centers.shape[0]):
        out[b] = intersection_area_kernel(centers[b], transforms[b], n_vertices)
    return out
