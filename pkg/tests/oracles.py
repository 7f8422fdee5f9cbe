"""Independent reference implementations used as test oracles."""

import math

import numpy as np


def dbscan_reference(x, eps, min_pts):
    """Textbook O(n^2) DBSCAN with explicit distance matrix and recursive-free expansion."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))
    neighbours = [[j for j in range(n) if d[i, j] <= eps] for i in range(n)]
    labels = [None] * n
    cluster = -1
    for i in range(n):
        if labels[i] is not None:
            continue
        if len(neighbours[i]) < min_pts:
            labels[i] = -1
            continue
        cluster += 1
        labels[i] = cluster
        seeds = [j for j in neighbours[i] if j != i]
        k = 0
        while k < len(seeds):
            j = seeds[k]
            k += 1
            if labels[j] == -1:
                labels[j] = cluster
            if labels[j] is not None:
                continue
            labels[j] = cluster
            if len(neighbours[j]) >= min_pts:
                seeds.extend(neighbours[j])
    return np.array(labels)


def irls_logistic(x, y, iters=50):
    """Newton-Raphson (IRLS) maximum likelihood logistic regression."""
    w = np.zeros(x.shape[1])
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-x @ w))
        hess = (x * (p * (1 - p))[:, None]).T @ x
        w = w - np.linalg.solve(hess, x.T @ (p - y))
    return w


def rect_raster(width, height, centre, size, angle):
    """Pixel-centre rasterisation of a rotated rectangle."""
    vv, uu = np.mgrid[0:height, 0:width] + 0.5
    c, s = math.cos(angle), math.sin(angle)
    du, dv = uu - centre[0], vv - centre[1]
    return (np.abs(du * c + dv * s) <= size[0] / 2) & (np.abs(-du * s + dv * c) <= size[1] / 2)


def rect_vertices(centre, size, angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array(
        [(centre[0] + a * size[0] / 2 * c - b * size[1] / 2 * s, centre[1] + a * size[0] / 2 * s + b * size[1] / 2 * c) for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    )


def corner_error(found, truth):
    """Largest distance from a found corner to its nearest true corner."""
    f = np.array([[c.u, c.v] for c in found])
    return max(float(np.min(np.linalg.norm(truth - p, axis=1))) for p in f)


def _skew(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def fd_jacobian(x, y, Z, h=1e-7):
    """Finite-difference d(x, y)/d(twist) for a static point seen by a moving camera.

    A camera twist (v, w) moves a camera-frame point as P' = exp(-[w]h) P - v h.
    """
    P = np.array([x * Z, y * Z, Z])
    J = np.zeros((2, 6))
    for k in range(6):
        tw = np.zeros(6)
        tw[k] = 1.0
        cols = []
        for s in (+h, -h):
            v, w = tw[:3] * s, tw[3:] * s
            th = np.linalg.norm(w)
            if th > 0:
                K = _skew(w / th)
                R = np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * K @ K
            else:
                R = np.eye(3)
            Q = R.T @ P - v
            cols.append(Q[:2] / Q[2])
        J[:, k] = (cols[0] - cols[1]) / (2 * h)
    return J
