"""File formats and procedural data.

* OBJ: `v x y z` and `f i j k ...` records; polygons fan-triangulated,
  negative (relative) indices resolved, everything else ignored.
* XYZ: one point per line, three whitespace-separated decimal floats,
  `#` comments allowed. Writers emit 9 significant digits.
* Manifest: one dataset entry per line, `id<TAB>source<TAB>count<TAB>seed`,
  where source is a mesh path or `procedural:<name>`.
* Checkpoint: a self-describing text file, header `DEFORMNET-CKPT 1`, then
  the config snapshot, the step counter, and every array (parameters and
  Adam moments) as decimal values. Serialization is canonical, so equal
  states produce byte-identical files.
"""

import os
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ParseError,
)
from .geometry import PointCloud, TriangleMesh, icosphere, sample_mesh_surface
from .model import ModelParams, parameter_shapes

CHECKPOINT_MAGIC = "DEFORMNET-CKPT"
CHECKPOINT_VERSION = 1


def load_obj(path):
    """Parse a Wavefront OBJ into a TriangleMesh."""
    verts = []
    faces = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            kind = tokens[0]
            if kind == "v":
                if len(tokens) < 4:
                    raise ParseError(path, line_no, "vertex needs three coordinates")
                try:
                    verts.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ParseError(path, line_no, f"bad vertex coordinate in {line!r}") from None
            elif kind == "f":
                if len(tokens) < 4:
                    raise ParseError(path, line_no, "face needs at least three vertices")
                idx = [_face_index(t, len(verts), path, line_no) for t in tokens[1:]]
                for a, b in zip(idx[1:], idx[2:]):
                    faces.append([idx[0], a, b])
            # all other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    if not verts:
        raise ParseError(path, 0, "no vertices in file")
    try:
        return TriangleMesh(verts, faces if faces else np.empty((0, 3), dtype=np.int64))
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from None


def _face_index(token, n_verts, path, line_no):
    head = token.split("/", 1)[0]
    try:
        raw = int(head)
    except ValueError:
        raise ParseError(path, line_no, f"bad face index {token!r}") from None
    if raw == 0:
        raise ParseError(path, line_no, "face index 0 is invalid (OBJ is 1-based)")
    idx = raw - 1 if raw > 0 else n_verts + raw
    if not 0 <= idx < n_verts:
        raise ParseError(path, line_no, f"face index {raw} out of range (have {n_verts} vertices)")
    return idx


def write_obj(mesh, path):
    # 12 significant digits keep the round trip well inside 1e-9 per coordinate
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_xyz(path):
    points = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 3:
                raise ParseError(path, line_no, f"expected three coordinates, got {len(fields)}")
            try:
                points.append([float(v) for v in fields])
            except ValueError:
                raise ParseError(path, line_no, f"bad coordinate in {stripped!r}") from None
    if not points:
        raise ParseError(path, 0, "no points in file")
    return PointCloud(points)


def write_xyz(cloud, path):
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    with open(path, "w", encoding="utf-8") as fh:
        for p in pts:
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")


def procedural_shape(name, **params):
    """Watertight toy meshes: cube, ellipsoid, cylinder, torus."""
    try:
        builder = _SHAPES[name]
    except KeyError:
        raise ValueError(f"unknown procedural shape {name!r}; valid: {sorted(_SHAPES)}") from None
    return builder(**params)


def _cube(edge=2.0):
    if edge <= 0:
        raise ValueError("edge must be positive")
    h = edge / 2.0
    verts = [
        [-h, -h, -h], [h, -h, -h], [h, h, -h], [-h, h, -h],
        [-h, -h, h], [h, -h, h], [h, h, h], [-h, h, h],
    ]
    faces = [
        [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
    ]
    return TriangleMesh(verts, faces)


def _ellipsoid(a=1.0, b=1.0, c=1.0, subdivisions=3):
    if min(a, b, c) <= 0:
        raise ValueError("semi-axes must be positive")
    sphere = icosphere(subdivisions)
    return TriangleMesh(sphere.vertices * np.array([a, b, c]), sphere.faces)


def _cylinder(radius=0.6, height=1.8, segments=32):
    if radius <= 0 or height <= 0:
        raise ValueError("radius and height must be positive")
    if segments < 3:
        raise ValueError("segments must be >= 3")
    s = segments
    theta = 2.0 * np.pi * np.arange(s) / s
    ring = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    bottom = np.column_stack([ring, np.full(s, -height / 2.0)])
    top = np.column_stack([ring, np.full(s, height / 2.0)])
    verts = np.concatenate([bottom, top, [[0, 0, -height / 2.0]], [[0, 0, height / 2.0]]])
    cb, ct = 2 * s, 2 * s + 1
    faces = []
    for i in range(s):
        j = (i + 1) % s
        faces.append([i, j, s + j])
        faces.append([i, s + j, s + i])
        faces.append([cb, j, i])
        faces.append([ct, s + i, s + j])
    return TriangleMesh(verts, faces)


def _torus(major=1.0, minor=0.4, seg_major=32, seg_minor=16):
    if minor <= 0 or major <= minor:
        raise ValueError("need major > minor > 0")
    if seg_major < 3 or seg_minor < 3:
        raise ValueError("segment counts must be >= 3")
    u = 2.0 * np.pi * np.arange(seg_major) / seg_major
    v = 2.0 * np.pi * np.arange(seg_minor) / seg_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    radial = major + minor * np.cos(vv)
    verts = np.stack(
        [radial * np.cos(uu), radial * np.sin(uu), minor * np.sin(vv)], axis=-1
    ).reshape(-1, 3)

    def vid(i, j):
        return (i % seg_major) * seg_minor + (j % seg_minor)

    faces = []
    for i in range(seg_major):
        for j in range(seg_minor):
            faces.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
            faces.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return TriangleMesh(verts, faces)


_SHAPES = {"cube": _cube, "ellipsoid": _ellipsoid, "cylinder": _cylinder, "torus": _torus}


@dataclass(frozen=True)
class ManifestEntry:
    shape_id: str
    source: str
    count: int
    seed: int


def load_manifest(path):
    entries = []
    seen = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip() or stripped.lstrip().startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != 4:
                raise ParseError(path, line_no, f"expected 4 tab-separated fields, got {len(fields)}")
            shape_id, source, count_s, seed_s = (f.strip() for f in fields)
            if shape_id in seen:
                raise ParseError(path, line_no, f"duplicate shape id {shape_id!r}")
            seen.add(shape_id)
            try:
                entries.append(ManifestEntry(shape_id, source, int(count_s), int(seed_s)))
            except ValueError:
                raise ParseError(path, line_no, "count and seed must be integers") from None
    if not entries:
        raise ParseError(path, 0, "manifest has no entries")
    return entries


def resolve_mesh(entry, base_dir):
    """Entry source -> TriangleMesh (procedural or loaded relative to base_dir)."""
    if entry.source.startswith("procedural:"):
        return procedural_shape(entry.source.split(":", 1)[1])
    path = entry.source
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return load_obj(path)


def build_dataset(entries, base_dir):
    """(shape_id, mesh, sampled cloud) triples for every manifest entry."""
    dataset = []
    for entry in entries:
        mesh = resolve_mesh(entry, base_dir)
        cloud = sample_mesh_surface(mesh, entry.count, entry.seed)
        dataset.append((entry.shape_id, mesh, cloud))
    return dataset


@dataclass
class Checkpoint:
    config: TrainConfig
    params: ModelParams
    adam_m: dict
    adam_v: dict
    step: int


def save_checkpoint(path, ckpt):
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    config_lines = ckpt.config.to_text().splitlines()
    lines.append(f"config {len(config_lines)}")
    lines.extend(config_lines)
    lines.append(f"step {ckpt.step}")
    names = sorted(ckpt.params.names())
    records = [("param", n, ckpt.params[n]) for n in names]
    records += [("adam_m", n, ckpt.adam_m[n]) for n in names]
    records += [("adam_v", n, ckpt.adam_v[n]) for n in names]
    lines.append(f"arrays {len(records)}")
    for kind, name, arr in records:
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"array {kind} {name} {arr.ndim} {dims}".rstrip())
        for row in arr.reshape(arr.shape[0] if arr.ndim == 2 else 1, -1):
            lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    reader = _Reader(lines)

    header = reader.next("header").split()
    if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"not a checkpoint file: {path}")
    if header[1] != str(CHECKPOINT_VERSION):
        raise CheckpointVersionError(f"unsupported checkpoint version {header[1]!r}")

    n_config = reader.count("config")
    config_text = "\n".join(reader.next("config line") for _ in range(n_config))
    config = TrainConfig.from_text(config_text, source=str(path))

    step_fields = reader.next("step").split()
    if len(step_fields) != 2 or step_fields[0] != "step":
        raise CheckpointTruncatedError("missing step record")
    try:
        step = int(step_fields[1])
    except ValueError:
        raise CheckpointShapeError(f"bad step counter {step_fields[1]!r}") from None

    n_arrays = reader.count("arrays")
    arrays = {"param": {}, "adam_m": {}, "adam_v": {}}
    for _ in range(n_arrays):
        fields = reader.next("array header").split()
        if len(fields) < 4 or fields[0] != "array" or fields[1] not in arrays:
            raise CheckpointShapeError(f"bad array header: {' '.join(fields)!r}")
        try:
            kind, name, ndim = fields[1], fields[2], int(fields[3])
            dims = tuple(int(d) for d in fields[4:])
        except ValueError:
            raise CheckpointShapeError(f"bad array header: {' '.join(fields)!r}") from None
        if len(dims) != ndim or ndim not in (1, 2):
            raise CheckpointShapeError(f"array {name}: bad dimensions {fields[4:]}")
        n_rows = dims[0] if ndim == 2 else 1
        row_len = dims[1] if ndim == 2 else dims[0]
        rows = []
        for _ in range(n_rows):
            values = reader.next(f"values of {name}").split()
            if len(values) != row_len:
                raise CheckpointShapeError(
                    f"array {name}: expected {row_len} values per row, got {len(values)}"
                )
            try:
                rows.append([float(v) for v in values])
            except ValueError:
                raise CheckpointShapeError(f"array {name}: non-numeric value") from None
        arrays[kind][name] = np.asarray(rows).reshape(dims)
    if reader.remaining():
        raise CheckpointShapeError("trailing data after final array")

    model_config = config.model_config()
    expected = parameter_shapes(model_config)
    for kind, named in arrays.items():
        if named.keys() != expected.keys():
            raise CheckpointShapeError(f"{kind} arrays do not match the configured architecture")
        for name, arr in named.items():
            if arr.shape != expected[name]:
                raise CheckpointShapeError(
                    f"{kind} {name}: shape {arr.shape} != expected {expected[name]}"
                )
    params = ModelParams(model_config, arrays["param"])
    return Checkpoint(config, params, arrays["adam_m"], arrays["adam_v"], step)


class _Reader:
    def __init__(self, lines):
        self.lines = lines
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.lines):
            raise CheckpointTruncatedError(f"file ended while reading {what}")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def count(self, keyword):
        fields = self.next(f"{keyword} count").split()
        if len(fields) != 2 or fields[0] != keyword:
            raise CheckpointTruncatedError(f"missing '{keyword} <n>' record")
        try:
            return int(fields[1])
        except ValueError:
            raise CheckpointShapeError(f"bad {keyword} count {fields[1]!r}") from None

    def remaining(self):
        return any(line.strip() for line in self.lines[self.pos :])
