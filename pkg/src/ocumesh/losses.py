"""Supervised and multi-view consistency losses with analytic gradients.

Value conventions:

* Vertex losses average the per-coordinate L1 distance over the vertex
  count of one eye, with both eyes summed into the same normalizer.
* Edge losses do the same over the 3 * N_t per-triangle edge slots
  (shared edges count once per incident triangle).
* Gaze losses are angles in degrees.  The arccos argument is clipped to
  [-1, 1] so identical directions give exactly zero; the gradient is
  defined as zero within 1e-12 of the clip boundary, which keeps training
  finite at 0 and 180 degrees.

Gradients are exact subgradients (L1 kinks map to zero) with respect to
predicted vertices and the raw, pre-normalization gaze vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError
from .geometry import SimilarityTransform, decompose
from .labeling import SIDES, EyeMeshPair

GAZE_CLAMP_EPS = 1e-12
DEG = 180.0 / np.pi


@dataclass
class LossWeights:
    """Scalar weights of the loss terms; defaults follow the training recipe
    (0.1 vertex, 0.1 edge, 1 gaze; 0.1 / 1 for the multi-view pair; unit
    weights on the three top-level terms)."""

    vertex: float = 0.1
    edge: float = 0.1
    gaze: float = 1.0
    mv_vertex: float = 0.1
    mv_gaze: float = 1.0
    gt: float = 1.0
    pgt: float = 1.0
    mv: float = 1.0

    def __post_init__(self):
        for name in ("vertex", "edge", "gaze", "mv_vertex", "mv_gaze", "gt", "pgt", "mv"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ParameterError(f"weight {name} must be finite and >= 0, got {v}")
            setattr(self, name, v)


@dataclass
class LossValueGrad:
    """Loss value with gradients shaped like the inputs.

    ``grad_vertices`` maps eye side to an (N_v, 3) array for the first
    (or only) prediction; multi-view losses also populate the ``_2``
    fields for the second view.
    """

    value: float
    grad_vertices: Optional[dict[str, np.ndarray]] = None
    grad_gaze: Optional[np.ndarray] = None
    grad_vertices_2: Optional[dict[str, np.ndarray]] = None
    grad_gaze_2: Optional[np.ndarray] = None


def _check_topology(a: EyeMeshPair, b: EyeMeshPair) -> None:
    for side in SIDES:
        ta, tb = a.eye(side).template, b.eye(side).template
        if ta is not tb and ta.topology_key != tb.topology_key:
            raise ParameterError(f"{side} meshes have different template topology")


def vertex_loss(pred: EyeMeshPair, target: EyeMeshPair) -> LossValueGrad:
    """Mean per-vertex L1 distance, both eyes summed (Eq.-style 1/N_v)."""
    _check_topology(pred, target)
    n_v = pred.left.template.n_vertices
    value = 0.0
    grads = {}
    for side in SIDES:
        diff = pred.eye(side).vertices - target.eye(side).vertices
        value += float(np.sum(np.abs(diff)))
        grads[side] = np.sign(diff) / n_v
    return LossValueGrad(value=value / n_v, grad_vertices=grads)


def edge_loss(pred: EyeMeshPair, target: EyeMeshPair) -> LossValueGrad:
    """Mean absolute edge-length difference over the 3 N_t edge slots.

    Target lengths come from the mesh's ``edge_lengths`` accessor (exact
    and O(1) for rigid poses); prediction lengths are always derived from
    the vertices so the gradient is exact.
    """
    _check_topology(pred, target)
    n_e = pred.left.template.edge_vertex_pairs.shape[0]  # 3 * N_t
    value = 0.0
    grads = {}
    for side in SIDES:
        # Each eye enumerates edges with its own winding (mirrored sides
        # order the per-triangle edge slots differently).
        template = pred.eye(side).template
        ia = template.edge_vertex_pairs[:, 0]
        ib = template.edge_vertex_pairs[:, 1]
        n_v = template.n_vertices
        vp = pred.eye(side).vertices
        d = vp[ia] - vp[ib]
        lp = np.sqrt(np.einsum("ij,ij->i", d, d))
        lt = target.eye(side).edge_lengths
        err = lp - lt
        value += float(np.sum(np.abs(err)))
        coef = np.sign(err) / n_e
        safe = np.where(lp > 1e-12, lp, 1.0)
        contrib = (coef / safe)[:, None] * d
        contrib[lp <= 1e-12] = 0.0
        grad = np.empty_like(vp)
        for c in range(3):
            grad[:, c] = np.bincount(
                ia, weights=contrib[:, c], minlength=n_v
            ) - np.bincount(ib, weights=contrib[:, c], minlength=n_v)
        grads[side] = grad
    return LossValueGrad(value=value / n_e, grad_vertices=grads)


def _angle_and_grads(u1: np.ndarray, u2: np.ndarray, R: Optional[np.ndarray] = None):
    """Angle (degrees) between R @ u1 and u2 with gradients w.r.t. the raw
    (pre-normalization) vectors; R defaults to the identity."""
    n1 = float(np.linalg.norm(u1))
    n2 = float(np.linalg.norm(u2))
    if n1 < 1e-9 or n2 < 1e-9:
        raise ParameterError("gaze vectors must be non-zero")
    g1 = u1 / n1
    g2 = u2 / n2
    r1 = g1 if R is None else R @ g1
    dot = float(np.dot(r1, g2))
    value = DEG * np.arccos(np.clip(dot, -1.0, 1.0))
    if abs(dot) >= 1.0 - GAZE_CLAMP_EPS:
        return float(value), np.zeros(3), np.zeros(3)
    k = -DEG / np.sqrt(1.0 - dot * dot)
    d_r1 = k * g2
    d_g1 = d_r1 if R is None else R.T @ d_r1
    d_g2 = k * r1
    grad1 = (d_g1 - g1 * float(np.dot(g1, d_g1))) / n1
    grad2 = (d_g2 - g2 * float(np.dot(g2, d_g2))) / n2
    return float(value), grad1, grad2


def _unitish(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        raise ParameterError(f"{name} must be non-zero")
    if abs(n - 1.0) > 1e-3:
        raise ParameterError(f"{name} must be approximately unit length, got |v| = {n:.6g}")
    return v


def gaze_loss(g, g_star) -> LossValueGrad:
    """Angular distance in degrees between prediction and reference."""
    g = _unitish(g, "g")
    g_star = _unitish(g_star, "g_star")
    value, grad, _ = _angle_and_grads(g, g_star)
    return LossValueGrad(value=value, grad_gaze=grad)


def combined_supervised_loss(
    pred: EyeMeshPair,
    g,
    target: EyeMeshPair,
    g_star,
    w: LossWeights,
) -> LossValueGrad:
    """Weighted sum of vertex, edge, and gaze terms for one labeled sample."""
    lv = vertex_loss(pred, target)
    le = edge_loss(pred, target)
    lg = gaze_loss(g, g_star)
    grads = {
        side: w.vertex * lv.grad_vertices[side] + w.edge * le.grad_vertices[side]
        for side in SIDES
    }
    return LossValueGrad(
        value=w.vertex * lv.value + w.edge * le.value + w.gaze * lg.value,
        grad_vertices=grads,
        grad_gaze=w.gaze * lg.grad_gaze,
    )


def mv_vertex_loss(
    pred1: EyeMeshPair, pred2: EyeMeshPair, p: SimilarityTransform
) -> LossValueGrad:
    """Pair vertex loss: view-1 vertices mapped through the inter-view
    transform and compared to view 2 under the same L1/N_v convention."""
    _check_topology(pred1, pred2)
    n_v = pred1.left.template.n_vertices
    linear = p.matrix[:, :3]
    t = p.matrix[:, 3]
    value = 0.0
    g1 = {}
    g2 = {}
    for side in SIDES:
        v1 = pred1.eye(side).vertices
        v2 = pred2.eye(side).vertices
        diff = v1 @ linear.T + t - v2
        value += float(np.sum(np.abs(diff)))
        sgn = np.sign(diff)
        g1[side] = (sgn @ linear) / n_v
        g2[side] = -sgn / n_v
    return LossValueGrad(
        value=value / n_v, grad_vertices=g1, grad_vertices_2=g2
    )


def mv_gaze_loss(g1, g2, R) -> LossValueGrad:
    """Angle between the rotated view-1 gaze and the view-2 gaze."""
    g1 = _unitish(g1, "g1")
    g2 = _unitish(g2, "g2")
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ParameterError(f"R must be 3x3, got {R.shape}")
    value, grad1, grad2 = _angle_and_grads(g1, g2, R=R)
    return LossValueGrad(value=value, grad_gaze=grad1, grad_gaze_2=grad2)


def mv_loss(
    pred1: EyeMeshPair,
    g1,
    pred2: EyeMeshPair,
    g2,
    p: SimilarityTransform,
    w: LossWeights,
) -> LossValueGrad:
    """Weighted multi-view consistency loss; the gaze term uses the rotation
    part of the decomposed inter-view transform."""
    lv = mv_vertex_loss(pred1, pred2, p)
    _, R, _ = decompose(p)
    lg = mv_gaze_loss(g1, g2, R)
    return LossValueGrad(
        value=w.mv_vertex * lv.value + w.mv_gaze * lg.value,
        grad_vertices={s: w.mv_vertex * lv.grad_vertices[s] for s in SIDES},
        grad_gaze=w.mv_gaze * lg.grad_gaze,
        grad_vertices_2={s: w.mv_vertex * lv.grad_vertices_2[s] for s in SIDES},
        grad_gaze_2=w.mv_gaze * lg.grad_gaze_2,
    )


def total_loss(
    gt_term: Optional[float],
    pgt_term: Optional[float],
    mv_term: Optional[float],
    w: LossWeights,
) -> float:
    """Top-level objective; absent terms contribute zero."""
    total = 0.0
    for term, weight in ((gt_term, w.gt), (pgt_term, w.pgt), (mv_term, w.mv)):
        if term is not None:
            total += weight * float(term)
    return total
