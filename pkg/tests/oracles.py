"""Independent brute-force reference implementations used as test oracles.

Everything here is deliberately written as plain double loops over Python
scalars, sharing no code path with the package internals it checks.
"""

from __future__ import annotations

import math

import numpy as np


def vertex_loss_brute(pred_left, pred_right, tgt_left, tgt_right):
    n_v = len(pred_left)
    total = 0.0
    for pred, tgt in ((pred_left, tgt_left), (pred_right, tgt_right)):
        for i in range(n_v):
            for c in range(3):
                total += abs(float(pred[i][c]) - float(tgt[i][c]))
    return total / n_v


def edge_loss_brute(pred_left, pred_right, tgt_left, tgt_right, triangles_left, triangles_right):
    def edge_len(v, a, b):
        dx = float(v[a][0]) - float(v[b][0])
        dy = float(v[a][1]) - float(v[b][1])
        dz = float(v[a][2]) - float(v[b][2])
        return math.sqrt(dx * dx + dy * dy + dz * dz)

    n_e = 3 * len(triangles_left)
    total = 0.0
    for pred, tgt, triangles in (
        (pred_left, tgt_left, triangles_left),
        (pred_right, tgt_right, triangles_right),
    ):
        for tri in triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                total += abs(edge_len(pred, a, b) - edge_len(tgt, a, b))
    return total / n_e


def mv_vertex_loss_brute(p1_left, p1_right, p2_left, p2_right, matrix):
    n_v = len(p1_left)
    total = 0.0
    for v1, v2 in ((p1_left, p2_left), (p1_right, p2_right)):
        for i in range(n_v):
            for r in range(3):
                mapped = (
                    float(matrix[r][0]) * float(v1[i][0])
                    + float(matrix[r][1]) * float(v1[i][1])
                    + float(matrix[r][2]) * float(v1[i][2])
                    + float(matrix[r][3])
                )
                total += abs(mapped - float(v2[i][r]))
    return total / n_v


def nearest_xy_brute(points_2d, vertices, center):
    """Exhaustive anterior-restricted nearest-vertex search in x/y."""
    picks = []
    for px, py in points_2d:
        best = None
        best_d = None
        for i in range(len(vertices)):
            if float(vertices[i][2]) - float(center[2]) >= 0.0:
                continue
            d = (float(vertices[i][0]) - float(px)) ** 2 + (
                float(vertices[i][1]) - float(py)
            ) ** 2
            if best_d is None or d < best_d:
                best_d = d
                best = i
        picks.append(best)
    return picks


def angle_deg_brute(a, b):
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    dot = max(-1.0, min(1.0, dot))
    return math.degrees(math.acos(dot))


def pseudo_gaze_brute(anchors, template_vertices, optical_axis, forward):
    """Independent re-implementation of the single-eye pseudo-label gaze.

    Align (center, scale from corners, minimal rotation from the optical
    axis to the face forward), lift the 2D iris centroid to the nearest
    anterior vertex by exhaustive search, return the unit direction from
    the eyeball center through that vertex.
    """
    corners = anchors.corners
    gap = math.dist(tuple(corners[0]), tuple(corners[1]))
    scale = 0.5 * gap
    center = np.asarray(anchors.centroid, dtype=float)

    # Minimal rotation via Rodrigues, written out longhand.
    a = np.asarray(optical_axis, dtype=float)
    b = np.asarray(forward, dtype=float)
    k = np.cross(a, b)
    c = float(np.dot(a, b))
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    R = np.eye(3) + K + K @ K / (1.0 + c)

    posed = center + scale * (np.asarray(template_vertices, dtype=float) @ R.T)
    cx, cy = float(np.mean(anchors.iris_2d[:, 0])), float(np.mean(anchors.iris_2d[:, 1]))
    idx = nearest_xy_brute([(cx, cy)], posed, center)[0]
    d = posed[idx] - center
    return d / np.linalg.norm(d)


def mean_binned_brute(pairs, threshold):
    selected = [e for y, e in pairs if abs(y) < threshold]
    if not selected:
        return None, 0
    return sum(selected) / len(selected), len(selected)
