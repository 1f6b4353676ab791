"""Reconstruction losses.

* chamfer: bidirectional mean of squared nearest-neighbor distances. The
  nearest indices are picked outside the graph, so the gradient flows through
  the selected pairs only (the subgradient of the min).
* deform_loss: penalizes change of squared distances between each source
  point and its fixed k nearest neighbors, normalized by the number of
  ordered neighbor pairs. Zero exactly when all neighbor distances are
  preserved, e.g. under any rigid motion of the deformed cloud.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeMismatchError
from .geometry import NeighborhoodMap, PointCloud, pairwise_sq_dists


@dataclass(frozen=True)
class LossWeights:
    w_chamfer: float = 1.0
    w_deform: float = 0.1
    w_backward: float = 1.0

    def __post_init__(self):
        for name in ("w_chamfer", "w_deform", "w_backward"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def _shared_graph(*xs):
    graph = None
    for x in xs:
        if isinstance(x, ad.Tensor) and x.graph is not None:
            if graph is None:
                graph = x.graph
            elif x.graph is not graph:
                raise ValueError("operands belong to different graphs")
    return graph if graph is not None else ad.Graph()


def _as_tensor(x, graph):
    if isinstance(x, ad.Tensor):
        return x
    if isinstance(x, PointCloud):
        x = x.points
    return graph.leaf(np.asarray(x, dtype=np.float64))


def _check_points(t, name):
    if t.data.ndim != 2 or t.data.shape[1] != 3:
        raise ShapeMismatchError(f"{name} must have shape (n, 3), got {t.shape}")
    if t.data.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one point")


def chamfer(x, y):
    """mean_i min_j |x_i - y_j|^2 + mean_j min_i |y_j - x_i|^2, as a scalar Tensor."""
    graph = _shared_graph(x, y)
    x = _as_tensor(x, graph)
    y = _as_tensor(y, graph)
    _check_points(x, "x")
    _check_points(y, "y")
    dists = pairwise_sq_dists(x.data, y.data)
    nearest_y = dists.argmin(axis=1)
    nearest_x = dists.argmin(axis=0)
    x_to_y = ad.reduce_mean(ad.reduce_sum(ad.square(ad.subtract(x, ad.gather_rows(y, nearest_y))), axis=1))
    y_to_x = ad.reduce_mean(ad.reduce_sum(ad.square(ad.subtract(y, ad.gather_rows(x, nearest_x))), axis=1))
    return ad.add(x_to_y, y_to_x)


def deform_loss(source, deformed, nbrs, form="squared"):
    """Mean penalty over ordered neighbor pairs for changing squared
    pairwise distances between the source and the deformed cloud."""
    if form not in ("squared", "absolute"):
        raise ValueError(f"unknown deform loss form: {form!r}")
    deformed = _as_tensor(deformed, _shared_graph(deformed))
    _check_points(deformed, "deformed")
    if not isinstance(nbrs, NeighborhoodMap):
        raise TypeError("nbrs must be a NeighborhoodMap")
    src = source.points if isinstance(source, PointCloud) else np.asarray(source, dtype=np.float64)
    n, k = nbrs.indices.shape
    if src.shape != (n, 3):
        raise ShapeMismatchError(f"source shape {src.shape} does not match neighborhoods ({n}, 3)")
    if deformed.data.shape[0] != n:
        raise ShapeMismatchError(
            f"deformed has {deformed.data.shape[0]} points, neighborhoods expect {n}"
        )
    center = np.repeat(np.arange(n), k)
    neighbor = nbrs.indices.ravel()
    src_sq = ((src[center] - src[neighbor]) ** 2).sum(axis=1)
    pair_diff = ad.subtract(ad.gather_rows(deformed, center), ad.gather_rows(deformed, neighbor))
    out_sq = ad.reduce_sum(ad.square(pair_diff), axis=1)
    gap = ad.subtract(deformed.graph.leaf(src_sq), out_sq)
    if form == "squared":
        penalty = ad.square(gap)
    else:
        penalty = ad.add(ad.relu(gap), ad.relu(ad.multiply(gap, -1.0)))
    return ad.reduce_mean(penalty)


def loss_terms(target, sphere, forward_out, backward_out, sphere_nbrs, target_nbrs, form="squared"):
    """The four raw loss terms, before weighting, on one shared graph."""
    graph = _shared_graph(target, sphere, forward_out, backward_out)
    forward_out = _as_tensor(forward_out, graph)
    backward_out = _as_tensor(backward_out, graph)
    target = _as_tensor(target, graph)
    sphere = _as_tensor(sphere, graph)
    return {
        "chamfer_fwd": chamfer(forward_out, target),
        "deform_fwd": deform_loss(sphere.data, forward_out, sphere_nbrs, form),
        "chamfer_bwd": chamfer(backward_out, sphere),
        "deform_bwd": deform_loss(target.data, backward_out, target_nbrs, form),
    }


def combine_terms(terms, weights):
    forward_part = ad.add(
        ad.multiply(terms["chamfer_fwd"], weights.w_chamfer),
        ad.multiply(terms["deform_fwd"], weights.w_deform),
    )
    backward_part = ad.add(
        terms["chamfer_bwd"],
        ad.multiply(terms["deform_bwd"], weights.w_deform),
    )
    return ad.add(forward_part, ad.multiply(backward_part, weights.w_backward))


def total_loss(target, sphere, forward_out, backward_out, sphere_nbrs, target_nbrs,
               weights=LossWeights(), form="squared"):
    """Weighted sum: forward chamfer + forward deformation penalty, plus the
    backward network's own chamfer and penalty scaled by w_backward."""
    terms = loss_terms(target, sphere, forward_out, backward_out, sphere_nbrs, target_nbrs, form)
    return combine_terms(terms, weights)
