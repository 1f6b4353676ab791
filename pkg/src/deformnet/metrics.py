"""Reconstruction quality metrics and a mesh self-intersection counter.

d2f is the mean over points of the exact distance to the nearest mesh
triangle; coverage is the fraction of triangles that are the nearest
triangle for at least one point (argmin ties go to the lower face index).
"""

from dataclasses import dataclass, field

import numpy as np

from . import loss as loss_mod
from .geometry import (
    PointCloud,
    TriangleMesh,
    points_triangle_sq_dists,
    sample_sphere,
    segment_triangle_distance,
)

INTERSECTION_TOLERANCE = 1e-10


def _points_of(points):
    return points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)


def _nearest_face_sq_dists(points, mesh):
    """Per point: (squared distance to nearest face, nearest face index)."""
    pts = _points_of(points)
    best = np.full(pts.shape[0], np.inf)
    best_face = np.zeros(pts.shape[0], dtype=np.int64)
    verts = mesh.vertices
    for j, (ia, ib, ic) in enumerate(mesh.faces):
        sq = points_triangle_sq_dists(pts, verts[ia], verts[ib], verts[ic])
        closer = sq < best  # strict: the lowest face index wins exact ties
        best[closer] = sq[closer]
        best_face[closer] = j
    return best, best_face


def _check_eval_inputs(points, mesh):
    if not isinstance(mesh, TriangleMesh):
        raise TypeError("mesh must be a TriangleMesh")
    if mesh.num_faces < 1:
        raise ValueError("mesh must have at least one face")
    pts = _points_of(points)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError(f"points must have shape (n >= 1, 3), got {pts.shape}")


def d2f(points, mesh):
    """Mean distance from each point to its nearest mesh triangle."""
    _check_eval_inputs(points, mesh)
    best, _ = _nearest_face_sq_dists(points, mesh)
    return float(np.sqrt(np.maximum(best, 0.0)).mean())


def coverage(points, mesh):
    """Fraction of faces that are the nearest face of at least one point."""
    _check_eval_inputs(points, mesh)
    _, best_face = _nearest_face_sq_dists(points, mesh)
    return float(np.unique(best_face).size / mesh.num_faces)


def count_self_intersections(mesh):
    """Number of face pairs that share no vertex yet intersect.

    Pairs touching within INTERSECTION_TOLERANCE count as intersecting; faces
    with a shared vertex are adjacent by construction and are skipped.
    """
    tris = mesh.vertices[mesh.faces]
    m = mesh.num_faces
    if m < 2:
        return 0
    # broad phase: overlapping axis-aligned bounding boxes
    lo = tris.min(axis=1) - INTERSECTION_TOLERANCE
    hi = tris.max(axis=1) + INTERSECTION_TOLERANCE
    overlap = np.ones((m, m), dtype=bool)
    for axis in range(3):
        overlap &= lo[:, None, axis] <= hi[None, :, axis]
        overlap &= lo[None, :, axis] <= hi[:, None, axis]
    cand_i, cand_j = np.nonzero(np.triu(overlap, k=1))

    faces = mesh.faces
    count = 0
    for i, j in zip(cand_i, cand_j):
        if set(faces[i]) & set(faces[j]):
            continue
        if _triangles_intersect(tris[i], tris[j]):
            count += 1
    return count


def _triangles_intersect(t1, t2):
    # closed triangles intersect iff some edge of one comes within tolerance
    # of the closed other (covers piercing, touching, and coplanar overlap)
    for tri, other in ((t1, t2), (t2, t1)):
        for e in range(3):
            d = segment_triangle_distance(tri[e], tri[(e + 1) % 3], other)
            if d <= INTERSECTION_TOLERANCE:
                return True
    return False


@dataclass
class ShapeReport:
    shape_id: str
    d2f: float
    coverage: float
    chamfer: float

    def as_dict(self):
        return {
            "id": self.shape_id,
            "d2f": self.d2f,
            "coverage": self.coverage,
            "chamfer": self.chamfer,
        }


@dataclass
class EvalReport:
    d2f: float
    coverage: float
    chamfer: float
    shapes: list = field(default_factory=list)
    self_intersections: int | None = None

    def as_dict(self):
        out = {
            "summary": {
                "shapes": len(self.shapes),
                "d2f_mean": self.d2f,
                "coverage_mean": self.coverage,
                "chamfer_mean": self.chamfer,
            },
            "shapes": [s.as_dict() for s in self.shapes],
        }
        if self.self_intersections is not None:
            out["summary"]["self_intersections"] = self.self_intersections
        return out

    def to_text(self):
        lines = [
            f"shapes = {len(self.shapes)}",
            f"d2f_mean = {self.d2f!r}",
            f"coverage_mean = {self.coverage!r}",
            f"chamfer_mean = {self.chamfer!r}",
        ]
        if self.self_intersections is not None:
            lines.append(f"self_intersections = {self.self_intersections}")
        for i, s in enumerate(self.shapes):
            lines.append(f"shape.{i}.id = {s.shape_id}")
            lines.append(f"shape.{i}.d2f = {s.d2f!r}")
            lines.append(f"shape.{i}.coverage = {s.coverage!r}")
            lines.append(f"shape.{i}.chamfer = {s.chamfer!r}")
        return "\n".join(lines) + "\n"


def evaluate(params, dataset, config, mesh_subdivisions=None):
    """Reconstruct every dataset entry and score it against the ground truth.

    `dataset` holds (shape_id, TriangleMesh, PointCloud) triples. Each cloud
    is reconstructed from a seeded sphere sample; d2f and coverage compare
    the reconstruction against the mesh, chamfer against the sampled cloud.
    With `mesh_subdivisions` set, an icosphere is pushed through the trained
    deformation per shape and its self-intersections are totalled.
    """
    from .geometry import icosphere
    from .model import deform, encode

    if len(dataset) == 0:
        raise ValueError("dataset must not be empty")
    shape_reports = []
    total_intersections = 0
    for index, (shape_id, mesh, cloud) in enumerate(dataset):
        n_sphere = config.sphere_points or len(cloud)
        sphere = sample_sphere(n_sphere, _eval_sphere_seed(config.seed, index))
        code = encode(cloud, params)
        recon = deform(sphere, code, params.blocks("forward"))
        shape_reports.append(
            ShapeReport(
                shape_id=shape_id,
                d2f=d2f(recon, mesh),
                coverage=coverage(recon, mesh),
                chamfer=float(loss_mod.chamfer(recon.points, cloud.points).data),
            )
        )
        if mesh_subdivisions is not None:
            template = icosphere(mesh_subdivisions)
            deformed = deform(template.vertices, code, params.blocks("forward"))
            out_mesh = TriangleMesh(deformed.points, template.faces)
            total_intersections += count_self_intersections(out_mesh)
    return EvalReport(
        d2f=float(np.mean([s.d2f for s in shape_reports])),
        coverage=float(np.mean([s.coverage for s in shape_reports])),
        chamfer=float(np.mean([s.chamfer for s in shape_reports])),
        shapes=shape_reports,
        self_intersections=total_intersections if mesh_subdivisions is not None else None,
    )


def _eval_sphere_seed(seed, index):
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x5E11, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
