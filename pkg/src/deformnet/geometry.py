"""Deterministic geometric kernels: sampling, icospheres, neighborhoods, distances.

All randomness is per-call: a 64-bit seed goes in, points come out. The
generator is numpy's PCG64, so identical (n, seed) pairs reproduce bit-exactly.
"""

import numpy as np

from .errors import DegenerateMeshError, SizeLimitError

MAX_ICOSPHERE_SUBDIVISIONS = 7


def _as_points(points, name="points"):
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one point")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


class PointCloud:
    """An (n, 3) array of surface samples; row order carries no meaning."""

    def __init__(self, points):
        self.points = _as_points(points)

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"PointCloud(n={len(self)})"


class TriangleMesh:
    """Vertices plus triangle connectivity (0-based vertex indices)."""

    def __init__(self, vertices, faces):
        self.vertices = _as_points(vertices, "vertices")
        faces = np.asarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must have shape (m, 3), got {faces.shape}")
        if faces.min(initial=0) < 0 or faces.max(initial=-1) >= len(self.vertices):
            raise ValueError("face index out of range")
        if (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        ).any():
            raise ValueError("face repeats a vertex index")
        self.faces = faces

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_faces(self):
        return self.faces.shape[0]

    def __repr__(self):
        return f"TriangleMesh(v={self.num_vertices}, f={self.num_faces})"


class NeighborhoodMap:
    """For each source point i, the indices of its k nearest neighbors."""

    def __init__(self, indices, k=None):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 2:
            raise ValueError(f"neighbor indices must be (n, k), got {indices.shape}")
        n, got_k = indices.shape
        if k is not None and got_k != k:
            raise ValueError(f"expected k={k} neighbors per point, got {got_k}")
        if indices.min(initial=0) < 0 or indices.max(initial=-1) >= n:
            raise ValueError("neighbor index out of range")
        if (indices == np.arange(n)[:, None]).any():
            raise ValueError("a point may not be its own neighbor")
        self.indices = indices

    @property
    def k(self):
        return self.indices.shape[1]

    def __len__(self):
        return self.indices.shape[0]


def sample_sphere(n, seed):
    """n points i.i.d. uniform on the unit sphere (normalized Gaussians)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = rng.standard_normal((n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return PointCloud(pts)


# Icosahedron with outward-oriented faces; golden-ratio coordinates.
_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
        [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
        [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def icosphere(subdivisions):
    """Unit-radius icosphere: each level splits every triangle into four."""
    if subdivisions < 0:
        raise ValueError(f"subdivisions must be >= 0, got {subdivisions}")
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS:
        raise SizeLimitError(
            f"subdivisions {subdivisions} exceeds limit {MAX_ICOSPHERE_SUBDIVISIONS}"
        )
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    return TriangleMesh(verts, faces)


def _subdivide(verts, faces):
    vert_list = list(verts)
    midpoint = {}

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in midpoint:
            v = verts[i] + verts[j]
            vert_list.append(v / np.linalg.norm(v))
            midpoint[key] = len(vert_list) - 1
        return midpoint[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(vert_list), np.array(new_faces, dtype=np.int64)


def pairwise_sq_dists(x, y, chunk=2048):
    """Squared Euclidean distance matrix, computed in row chunks.

    Differences are formed explicitly (no norm expansion), so the result is
    exactly transpose-symmetric: pairwise_sq_dists(y, x) == result.T bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.empty((x.shape[0], y.shape[0]))
    for start in range(0, x.shape[0], chunk):
        rows = slice(start, min(start + chunk, x.shape[0]))
        block = np.square(x[rows, 0][:, None] - y[None, :, 0])
        block += np.square(x[rows, 1][:, None] - y[None, :, 1])
        block += np.square(x[rows, 2][:, None] - y[None, :, 2])
        out[rows] = block
    return out


def knn(cloud, k, chunk=1024):
    """k nearest neighbors of every point, sorted by distance, ties broken by
    lower index."""
    pts = cloud.points if isinstance(cloud, PointCloud) else _as_points(cloud)
    n = pts.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= n-1 (k={k}, n={n})")
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        dists = pairwise_sq_dists(pts[rows], pts)
        dists[np.arange(rows.stop - rows.start), np.arange(rows.start, rows.stop)] = np.inf
        # everything not greater than the k-th smallest value is a candidate,
        # so boundary ties survive into the stable (value, index) sort below
        kth = np.partition(dists, k - 1, axis=1)[:, k - 1]
        row_idx, col_idx = np.nonzero(dists <= kth[:, None])
        values = dists[row_idx, col_idx]
        order = np.lexsort((col_idx, values, row_idx))
        counts = np.bincount(row_idx, minlength=rows.stop - rows.start)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        out[rows] = col_idx[order][starts[:, None] + np.arange(k)]
    return NeighborhoodMap(out, k)


def sample_mesh_surface(mesh, n, seed):
    """n points from the mesh surface: area-weighted face choice, then
    uniform barycentric placement inside the chosen face."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    areas = face_areas(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise DegenerateMeshError("mesh has zero total surface area")
    rng = np.random.Generator(np.random.PCG64(seed))
    face_idx = rng.choice(mesh.num_faces, size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tri = mesh.vertices[mesh.faces[face_idx]]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    return PointCloud(pts)


def face_areas(mesh):
    tri = mesh.vertices[mesh.faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def unique_edges(faces):
    """Undirected edge set of a triangle list, as a sorted (e, 2) array."""
    faces = np.asarray(faces)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    return np.unique(edges, axis=0)


def edge_face_counts(faces):
    """How many faces border each undirected edge."""
    faces = np.asarray(faces)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts


def is_edge_manifold(mesh):
    """True when every edge is shared by exactly two faces (watertight)."""
    return bool((edge_face_counts(mesh.faces) == 2).all())


def euler_characteristic(mesh):
    return mesh.num_vertices - len(unique_edges(mesh.faces)) + mesh.num_faces


def _row_dot(u, v):
    # per-row dot product with batch-size-independent rounding: BLAS matvec
    # picks different kernels by row count, which flips argmin ties
    return u[:, 0] * v[0] + u[:, 1] * v[1] + u[:, 2] * v[2]


def _row_sq_norm(u):
    return u[:, 0] * u[:, 0] + u[:, 1] * u[:, 1] + u[:, 2] * u[:, 2]


def points_triangle_sq_dists(points, a, b, c):
    """Squared distance from each point to the closed triangle (a, b, c).

    The closest point is either the in-plane projection (when its barycentric
    coordinates are all non-negative) or lies on one of the three edges, so the
    edge distances serve as the fallback. A degenerate triangle has no usable
    plane and degrades to pure edge (segment/point) distances.
    """
    points = np.asarray(points, dtype=np.float64)
    ab = b - a
    ac = c - a
    normal = np.cross(ab, ac)
    nn = float(normal @ normal)

    d_edges = np.minimum(
        points_segment_sq_dists(points, a, b),
        np.minimum(points_segment_sq_dists(points, b, c), points_segment_sq_dists(points, c, a)),
    )
    if nn == 0.0:
        return d_edges

    ap = points - a
    dist_plane = _row_dot(ap, normal)  # scaled by |normal|
    # barycentric coordinates of the in-plane projection
    d00 = float(ab @ ab)
    d01 = float(ab @ ac)
    d11 = float(ac @ ac)
    d20 = _row_dot(ap, ab)
    d21 = _row_dot(ap, ac)
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0)
    d_face = dist_plane * dist_plane / nn
    return np.where(inside, np.minimum(d_face, d_edges), d_edges)


def points_segment_sq_dists(points, a, b):
    """Squared distance from each point to the closed segment [a, b]."""
    points = np.asarray(points, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return _row_sq_norm(points - a)
    t = np.clip(_row_dot(points - a, ab) / denom, 0.0, 1.0)
    diff = points - (a + t[:, None] * ab)
    return _row_sq_norm(diff)


def point_triangle_distance(p, tri):
    """Exact Euclidean distance from a point to a closed triangle."""
    tri = np.asarray(tri, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    sq = points_triangle_sq_dists(p[None, :], tri[0], tri[1], tri[2])[0]
    return float(np.sqrt(max(sq, 0.0)))


def segment_segment_distance(p0, p1, q0, q1):
    """Minimum distance between two closed segments."""
    # Ericson's clamped closest-point computation.
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a == 0.0 and e == 0.0:
        return float(np.linalg.norm(r))
    if a == 0.0:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e == 0.0:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom != 0.0 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    closest = (p0 + s * d1) - (q0 + t * d2)
    return float(np.linalg.norm(closest))


def segment_triangle_distance(p0, p1, tri):
    """Minimum distance between a closed segment and a closed triangle."""
    tri = np.asarray(tri, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    a, b, c = tri
    normal = np.cross(b - a, c - a)
    if normal @ normal > 0.0:
        # zero distance when the segment pierces the triangle's interior
        s0 = (p0 - a) @ normal
        s1 = (p1 - a) @ normal
        if (s0 <= 0.0 <= s1 or s1 <= 0.0 <= s0) and s0 != s1:
            hit = p0 + (s0 / (s0 - s1)) * (p1 - p0)
            if _in_triangle(hit, a, b, c):
                return 0.0
        # a segment lying in the plane is settled by the edge distances below
    return min(
        point_triangle_distance(p0, tri),
        point_triangle_distance(p1, tri),
        segment_segment_distance(p0, p1, a, b),
        segment_segment_distance(p0, p1, b, c),
        segment_segment_distance(p0, p1, c, a),
    )


def _in_triangle(p, a, b, c):
    ab = b - a
    ac = c - a
    ap = p - a
    d00 = ab @ ab
    d01 = ab @ ac
    d11 = ac @ ac
    d20 = ap @ ab
    d21 = ap @ ac
    denom = d00 * d11 - d01 * d01
    if denom == 0.0:
        return False
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return v >= 0.0 and w >= 0.0 and v + w <= 1.0
