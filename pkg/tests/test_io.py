import filecmp

import numpy as np
import pytest

from deformnet.config import TrainConfig
from deformnet.errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ParseError,
)
from deformnet.geometry import euler_characteristic, face_areas, is_edge_manifold
from deformnet.io import (
    Checkpoint,
    build_dataset,
    load_checkpoint,
    load_manifest,
    load_obj,
    load_xyz,
    procedural_shape,
    save_checkpoint,
    write_obj,
    write_xyz,
)
from deformnet.model import init_params
from deformnet.training import OptimizerState

CUBE_OBJ = """\
# unit cube, quad faces
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


class TestObj:
    def test_quad_cube_fan_triangulated(self, tmp_path):
        path = tmp_path / "cube.obj"
        path.write_text(CUBE_OBJ)
        mesh = load_obj(str(path))
        assert mesh.num_vertices == 8
        assert mesh.num_faces == 12

    def test_round_trip(self, tmp_path):
        mesh = procedural_shape("torus")
        path = str(tmp_path / "t.obj")
        write_obj(mesh, path)
        back = load_obj(path)
        assert np.abs(back.vertices - mesh.vertices).max() < 1e-9
        assert (back.faces == mesh.faces).all()

    def test_out_of_range_index_names_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 99\n")
        with pytest.raises(ParseError, match="4"):
            load_obj(str(path))

    def test_negative_relative_indices(self, tmp_path):
        path = tmp_path / "rel.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        mesh = load_obj(str(path))
        assert (mesh.faces == [[0, 1, 2]]).all()

    def test_slash_records_and_unknown_lines_ignored(self, tmp_path):
        path = tmp_path / "full.obj"
        path.write_text(
            "mtllib x.mtl\no thing\nvn 0 0 1\nvt 0 0\n"
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/1 3/3/1\n"
        )
        mesh = load_obj(str(path))
        assert mesh.num_faces == 1

    def test_missing_file(self):
        with pytest.raises(IOError):
            load_obj("/nonexistent/path.obj")


class TestXyz:
    def test_round_trip_9_digits(self, tmp_path):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((40, 3)) * 2.0
        path = str(tmp_path / "c.xyz")
        write_xyz(pts, path)
        back = load_xyz(path)
        assert np.abs(back.points - pts).max() < 1e-8

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# header\n\n1 2 3\n4 5 6  # trailing\n")
        assert len(load_xyz(str(path))) == 2

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "e.xyz"
        path.write_text("")
        with pytest.raises(ParseError):
            load_xyz(str(path))

    def test_two_field_line_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "b.xyz"
        path.write_text("1 2 3\n0 0\n")
        with pytest.raises(ParseError, match="2"):
            load_xyz(str(path))


class TestProceduralShapes:
    def test_cube_counts_and_area(self):
        cube = procedural_shape("cube", edge=2.0)
        assert cube.num_vertices == 8
        assert cube.num_faces == 12
        assert face_areas(cube).sum() == pytest.approx(24.0)

    def test_torus_genus_one(self):
        torus = procedural_shape("torus", major=2.0, minor=0.5, seg_major=32, seg_minor=16)
        assert euler_characteristic(torus) == 0
        assert is_edge_manifold(torus)

    def test_unit_ellipsoid_is_sphere(self):
        ell = procedural_shape("ellipsoid", a=1.0, b=1.0, c=1.0)
        assert np.abs(np.linalg.norm(ell.vertices, axis=1) - 1.0).max() < 1e-9

    @pytest.mark.parametrize("name", ["cube", "ellipsoid", "cylinder", "torus"])
    def test_all_shapes_watertight_and_oriented(self, name):
        mesh = procedural_shape(name)
        assert is_edge_manifold(mesh)
        tri = mesh.vertices[mesh.faces]
        signed_volume = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0
        assert signed_volume > 0.0

    def test_unknown_shape_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            procedural_shape("dodecahedron")

    def test_bad_parameters_rejected(self):
        with pytest.raises(ValueError):
            procedural_shape("cube", edge=-1.0)
        with pytest.raises(ValueError):
            procedural_shape("torus", major=0.1, minor=0.4)


class TestManifest:
    def test_parse_and_build(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text(
            "# dataset\n"
            "cube0\tprocedural:cube\t64\t1\n"
            "ell0\tprocedural:ellipsoid\t32\t2\n"
        )
        entries = load_manifest(str(path))
        assert [e.shape_id for e in entries] == ["cube0", "ell0"]
        dataset = build_dataset(entries, str(tmp_path))
        assert len(dataset) == 2
        assert len(dataset[0][2]) == 64

    def test_mesh_path_resolved_relative_to_base(self, tmp_path):
        write_obj(procedural_shape("cube"), str(tmp_path / "c.obj"))
        path = tmp_path / "m.tsv"
        path.write_text("c0\tc.obj\t16\t3\n")
        dataset = build_dataset(load_manifest(str(path)), str(tmp_path))
        assert dataset[0][1].num_faces == 12

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\tprocedural:cube\t8\t1\na\tprocedural:cube\t8\t2\n")
        with pytest.raises(ParseError, match="duplicate"):
            load_manifest(str(path))

    def test_wrong_arity_rejected(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\tprocedural:cube\t8\n")
        with pytest.raises(ParseError):
            load_manifest(str(path))

    def test_deterministic_sampling(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("a\tprocedural:cylinder\t32\t9\n")
        d1 = build_dataset(load_manifest(str(path)), str(tmp_path))
        d2 = build_dataset(load_manifest(str(path)), str(tmp_path))
        assert (d1[0][2].points == d2[0][2].points).all()


def make_checkpoint(seed=0, step=17):
    config = TrainConfig(latent_dim=8, num_blocks=1, encoder_widths=(8, 12),
                         head_widths=(12,), block_widths=(8,))
    params = init_params(seed, config.model_config())
    state = OptimizerState.zeros(params)
    rng = np.random.default_rng(seed + 1)
    state.m = {k: rng.standard_normal(v.shape) for k, v in params.items()}
    state.v = {k: rng.random(v.shape) for k, v in params.items()}
    return Checkpoint(config, params, state.m, state.v, step)


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        save_checkpoint(a, make_checkpoint())
        ck = load_checkpoint(a)
        save_checkpoint(b, ck)
        assert filecmp.cmp(a, b, shallow=False)

    def test_values_round_trip_exactly(self, tmp_path):
        path = str(tmp_path / "a.ckpt")
        original = make_checkpoint()
        save_checkpoint(path, original)
        back = load_checkpoint(path)
        assert back.step == original.step
        for name in original.params.names():
            assert (back.params[name] == original.params[name]).all()
            assert (back.adam_m[name] == original.adam_m[name]).all()
            assert (back.adam_v[name] == original.adam_v[name]).all()

    def test_unsupported_version(self, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, make_checkpoint())
        text = open(path).read().replace("DEFORMNET-CKPT 1", "DEFORMNET-CKPT 2", 1)
        open(path, "w").write(text)
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello world\n")
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(str(path))

    def test_truncated_body(self, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, make_checkpoint())
        lines = open(path).read().splitlines()
        open(path, "w").write("\n".join(lines[: len(lines) // 2]))
        with pytest.raises(CheckpointTruncatedError):
            load_checkpoint(path)

    def test_wrong_row_width_is_shape_error(self, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, make_checkpoint())
        lines = open(path).read().splitlines()
        for i, line in enumerate(lines):
            if line.startswith("array "):
                lines[i + 1] = lines[i + 1] + " 0.0"
                break
        open(path, "w").write("\n".join(lines) + "\n")
        with pytest.raises(CheckpointShapeError):
            load_checkpoint(path)

    def test_architecture_mismatch_is_shape_error(self, tmp_path):
        path = str(tmp_path / "a.ckpt")
        save_checkpoint(path, make_checkpoint())
        text = open(path).read().replace("latent_dim = 8", "latent_dim = 16", 1)
        open(path, "w").write(text)
        with pytest.raises(CheckpointShapeError):
            load_checkpoint(path)
