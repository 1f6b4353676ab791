"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them live).

The heavyweight criteria (toy overfit, small-category training) execute full
training runs and dominate the suite's runtime.
"""

import filecmp
import os
import time

import numpy as np
import pytest

from deformnet.cli import main as cli_main
from deformnet.config import TrainConfig
from deformnet.geometry import (
    PointCloud,
    TriangleMesh,
    euler_characteristic,
    icosphere,
    knn,
    point_triangle_distance,
    points_triangle_sq_dists,
    sample_mesh_surface,
    sample_sphere,
)
from deformnet.gradcheck import TOLERANCE, run_all
from deformnet.io import load_obj, procedural_shape, write_xyz
from deformnet.loss import chamfer, deform_loss, total_loss
from deformnet.metrics import count_self_intersections, coverage, d2f, evaluate
from deformnet.model import deform, encode, init_params, reconstruct
from deformnet.training import train


def check(name, condition, detail=""):
    status = "PASS" if condition else "FAIL"
    print(f"\nACCEPTANCE {name}: {status}" + (f" ({detail})" if detail else ""))
    assert condition, f"{name} failed: {detail}"


# --- gradient suite -------------------------------------------------------

def test_gradient_suite():
    start = time.perf_counter()
    results = run_all(instances=10, seed=0)
    elapsed = time.perf_counter() - start
    worst_name, worst = max(results, key=lambda r: r[1])
    check(
        "gradient-suite",
        worst < TOLERANCE and elapsed < 60.0,
        f"{len(results)} checks, max err {worst:.2e} ({worst_name}), {elapsed:.1f}s",
    )


# --- oracle suite ---------------------------------------------------------

def _oracle_knn(points, k):
    n = len(points)
    out = []
    for i in range(n):
        order = sorted(
            (sum((points[i][c] - points[j][c]) ** 2 for c in range(3)), j)
            for j in range(n) if j != i
        )
        out.append([j for _, j in order[:k]])
    return np.array(out)


def _oracle_chamfer(x, y):
    fwd = sum(min(sum((p[c] - q[c]) ** 2 for c in range(3)) for q in y) for p in x) / len(x)
    bwd = sum(min(sum((p[c] - q[c]) ** 2 for c in range(3)) for q in x) for p in y) / len(y)
    return fwd + bwd


def _oracle_dense_triangle(p, tri, steps=100, rounds=18):
    a, b, c = (np.asarray(v, float) for v in tri)
    p = np.asarray(p, float)

    def probe(us, vs):
        keep = us + vs <= 1.0 + 1e-15
        us, vs = us[keep], np.minimum(vs[keep], 1.0 - us[keep])
        q = a + us[:, None] * (b - a) + vs[:, None] * (c - a)
        d = np.linalg.norm(p - q, axis=1)
        i = int(d.argmin())
        return float(d[i]), float(us[i]), float(vs[i])

    grid = np.linspace(0.0, 1.0, steps + 1)
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    best = probe(uu.ravel(), vv.ravel())
    half = 1.0 / steps
    for _ in range(rounds):
        _, bu, bv = best
        du = np.linspace(-half, half, 9)
        uu, vv = np.meshgrid(np.clip(bu + du, 0, 1), np.clip(bv + du, 0, 1), indexing="ij")
        best = min(best, probe(uu.ravel(), vv.ravel()))
        half *= 0.5
    return best[0]


def _oracle_nearest_faces(points, mesh):
    dists = np.empty((len(points), mesh.num_faces))
    for j, face in enumerate(mesh.faces):
        a, b, c = mesh.vertices[face]
        for i, p in enumerate(points):
            dists[i, j] = points_triangle_sq_dists(p[None, :], a, b, c)[0]
    return dists


def _random_submesh(rng):
    base = icosphere(1)
    m = int(rng.integers(4, 20))
    faces = rng.choice(base.num_faces, size=m, replace=False)
    return TriangleMesh(base.vertices, base.faces[np.sort(faces)])


def test_oracle_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(1234)

    for trial in range(100):
        n = int(rng.integers(8, 40))
        k = int(rng.integers(1, min(9, n)))
        pts = rng.standard_normal((n, 3))
        if trial % 3 == 0:
            pts[int(rng.integers(n))] = pts[int(rng.integers(n))]  # force ties
        assert (knn(PointCloud(pts), k).indices == _oracle_knn(pts, k)).all()

    for _ in range(100):
        x = rng.standard_normal((int(rng.integers(4, 32)), 3))
        y = rng.standard_normal((int(rng.integers(4, 32)), 3))
        assert abs(float(chamfer(x, y).data) - _oracle_chamfer(x, y)) < 1e-9

    for _ in range(100):
        tri = rng.standard_normal((3, 3))
        p = rng.standard_normal(3) * 1.5
        exact = point_triangle_distance(p, tri)
        dense = _oracle_dense_triangle(p, tri)
        assert exact <= dense + 1e-12
        assert exact >= dense - 1e-6

    for _ in range(100):
        mesh = _random_submesh(rng)
        pts = rng.standard_normal((int(rng.integers(4, 25)), 3)) * 1.5
        sq = _oracle_nearest_faces(pts, mesh)
        assert d2f(pts, mesh) == pytest.approx(np.sqrt(sq.min(axis=1)).mean(), abs=1e-12)
        expected_cov = len(set(sq.argmin(axis=1))) / mesh.num_faces
        assert coverage(pts, mesh) == pytest.approx(expected_cov, abs=0)

    elapsed = time.perf_counter() - start
    check("oracle-suite", elapsed < 120.0, f"500 oracle comparisons, {elapsed:.1f}s")


# --- identity at init -----------------------------------------------------

def test_identity_at_init():
    params = init_params(5)  # default architecture, zeroed block outputs
    target = sample_sphere(48, 2)
    sphere = sample_sphere(48, 3)
    fwd, bwd = reconstruct(target, sphere, params)
    bit_exact = (fwd.points == sphere.points).all() and (bwd.points == target.points).all()

    nbrs = knn(target, 8)
    loss = total_loss(target.points, target.points, target.points, target.points, nbrs, nbrs)
    check(
        "identity-at-init",
        bit_exact and abs(float(loss.data)) < 1e-12,
        f"loss at identity {float(loss.data):.2e}",
    )


# --- invariance suite -----------------------------------------------------

def test_invariance_suite():
    rng = np.random.default_rng(7)
    params = init_params(1)
    for name in params.names():  # random weights exercise real paths
        if ".block" in name:
            params.arrays[name] = rng.normal(0.0, 0.1, size=params[name].shape)
    cloud = sample_sphere(40, 4)
    perm = rng.permutation(40)

    z = encode(cloud, params)
    z_perm = encode(PointCloud(cloud.points[perm]), params)
    encoder_ok = (z.values == z_perm.values).all()

    out = deform(cloud, z, params.blocks("forward"))
    out_perm = deform(PointCloud(cloud.points[perm]), z, params.blocks("forward"))
    deform_ok = (out.points[perm] == out_perm.points).all()

    src = rng.standard_normal((30, 3))
    moved = rng.standard_normal((30, 3))
    nbrs = knn(src, 6)
    base = float(deform_loss(src, moved, nbrs).data)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rigid = float(deform_loss(src, moved @ q.T + rng.standard_normal(3), nbrs).data)
    deform_loss_ok = abs(base - rigid) < 1e-9

    x = rng.standard_normal((21, 3))
    y = rng.standard_normal((13, 3))
    chamfer_ok = float(chamfer(x, y).data) == float(chamfer(y, x).data)

    check(
        "invariance-suite",
        encoder_ok and deform_ok and deform_loss_ok and chamfer_ok,
        f"encoder={encoder_ok} deform={deform_ok} "
        f"deform_loss(|d|={abs(base - rigid):.1e}) chamfer={chamfer_ok}",
    )


# --- toy overfit ----------------------------------------------------------

def test_toy_overfit():
    # Thresholds frozen from the reference run on this exact setup.
    #
    # Default config resamples the sphere every step, so forward Chamfer is
    # floored by the noise of two independent 256-point surface samples,
    # about area/(pi*n) ~ 3e-2 for the edge-2 cube; the reference run
    # plateaus at 4.3e-2 from a 2.0e-1 start. With fixed_sphere the floor
    # disappears and the same budget memorizes the cloud to 7.5e-3.
    cloud = sample_mesh_surface(procedural_shape("cube"), 256, seed=42)
    start = time.perf_counter()
    result = train([cloud], TrainConfig(checkpoint_interval=0))
    default_final = result.history[-1][2]
    default_start = result.history[0][2]

    fixed = train([cloud], TrainConfig(checkpoint_interval=0, fixed_sphere=True))
    fixed_final = fixed.history[-1][2]
    elapsed = time.perf_counter() - start

    check(
        "toy-overfit",
        default_final < 0.05
        and default_final * 4.0 < default_start
        and fixed_final < 0.01
        and len(result.history) == 3000
        and elapsed < 600.0,
        f"default chamfer {default_start:.3g} -> {default_final:.3g}, "
        f"fixed-sphere final {fixed_final:.3g}, {elapsed / 60:.1f} min",
    )


# --- small-category sanity ------------------------------------------------

def _category_dataset():
    shapes = [
        ("cube_a", procedural_shape("cube", edge=1.6)),
        ("cube_b", procedural_shape("cube", edge=2.2)),
        ("ell_a", procedural_shape("ellipsoid", a=1.0, b=0.7, c=1.3)),
        ("ell_b", procedural_shape("ellipsoid", a=0.8, b=1.2, c=0.9)),
        ("ell_c", procedural_shape("ellipsoid", a=1.3, b=1.0, c=0.6)),
        ("cyl_a", procedural_shape("cylinder", radius=0.5, height=1.8)),
        ("cyl_b", procedural_shape("cylinder", radius=0.8, height=1.2)),
        ("cyl_c", procedural_shape("cylinder", radius=0.6, height=2.2)),
    ]
    return [
        (name, mesh, sample_mesh_surface(mesh, 512, seed=100 + i))
        for i, (name, mesh) in enumerate(shapes)
    ]


def test_small_category_sanity():
    dataset = _category_dataset()
    # moderate architecture: plenty for three convex families, and it keeps
    # the 10k-step budget tractable on one core
    config = TrainConfig(
        steps=10000,
        latent_dim=64,
        encoder_widths=(32, 64, 128),
        head_widths=(128,),
        block_widths=(64, 64),
        num_blocks=2,
        seed=3,
        checkpoint_interval=0,
    )
    baseline = evaluate(init_params(0, config.model_config()), dataset, config)
    start = time.perf_counter()
    result = train(dataset, config)
    elapsed = time.perf_counter() - start
    trained = evaluate(result.params, dataset, config)
    check(
        "small-category-sanity",
        trained.d2f * 5.0 < baseline.d2f and trained.coverage > baseline.coverage,
        f"d2f {baseline.d2f:.4f} -> {trained.d2f:.4f} "
        f"(x{baseline.d2f / trained.d2f:.1f}), coverage {baseline.coverage:.3f} -> "
        f"{trained.coverage:.3f}, {elapsed / 60:.1f} min",
    )


# --- mesh-export topology -------------------------------------------------

def _train_sphere_overfit(tmp_path, w_deform, tag):
    cloud = sample_sphere(256, 21)
    config = TrainConfig(steps=300, w_deform=w_deform, seed=13, checkpoint_interval=0)
    ckpt = str(tmp_path / f"sphere_{tag}.ckpt")
    train([cloud], config, checkpoint_path=ckpt)
    xyz = str(tmp_path / f"sphere_{tag}.xyz")
    write_xyz(cloud, xyz)
    return ckpt, xyz


def test_mesh_export_topology(tmp_path):
    ckpt, xyz = _train_sphere_overfit(tmp_path, w_deform=0.1, tag="reg")
    out = str(tmp_path / "sphere.obj")
    assert cli_main(["mesh", "--checkpoint", ckpt, "--input", xyz,
                     "--subdivisions", "3", "--out", out]) == 0
    mesh = load_obj(out)
    template = icosphere(3)
    connectivity_ok = (mesh.faces == template.faces).all()
    euler_ok = euler_characteristic(mesh) == 2
    crossings = count_self_intersections(mesh)

    # ablation probe: reported, not asserted
    ckpt0, xyz0 = _train_sphere_overfit(tmp_path, w_deform=0.0, tag="ablate")
    out0 = str(tmp_path / "sphere0.obj")
    assert cli_main(["mesh", "--checkpoint", ckpt0, "--input", xyz0,
                     "--subdivisions", "3", "--out", out0]) == 0
    crossings_ablated = count_self_intersections(load_obj(out0))
    print(f"\n[probe] self-intersections with w_deform=0: {crossings_ablated} "
          f"(vs {crossings} with default weight)")

    check(
        "mesh-export-topology",
        connectivity_ok and euler_ok and crossings == 0,
        f"faces match={connectivity_ok}, euler=2:{euler_ok}, intersections={crossings}",
    )


# --- pipeline determinism -------------------------------------------------

PIPELINE_CONFIG = """\
steps = 500
latent_dim = 16
num_blocks = 1
encoder_widths = 16,32
head_widths = 32
block_widths = 32
k = 6
seed = 77
checkpoint_interval = 250
"""

PIPELINE_MANIFEST = (
    "cube0\tprocedural:cube\t96\t11\n"
    "ell0\tprocedural:ellipsoid\t96\t12\n"
    "cyl0\tprocedural:cylinder\t96\t13\n"
)


def _run_pipeline(root):
    os.makedirs(root)
    manifest = os.path.join(root, "manifest.tsv")
    with open(manifest, "w") as fh:
        fh.write(PIPELINE_MANIFEST)
    cfg = os.path.join(root, "config.txt")
    with open(cfg, "w") as fh:
        fh.write(PIPELINE_CONFIG)
    data = os.path.join(root, "data")
    assert cli_main(["gen-data", "--manifest", manifest, "--out-dir", data]) == 0
    ckpt = os.path.join(root, "model.ckpt")
    hist = os.path.join(root, "history.csv")
    assert cli_main(["train", "--config", cfg, "--data-dir", data,
                     "--out", ckpt, "--history", hist]) == 0
    report = os.path.join(root, "report.txt")
    assert cli_main(["eval", "--checkpoint", ckpt, "--manifest", manifest,
                     "--report", report]) == 0
    return ckpt, hist, report


def test_pipeline_determinism(tmp_path):
    a = _run_pipeline(str(tmp_path / "run_a"))
    b = _run_pipeline(str(tmp_path / "run_b"))
    same = [filecmp.cmp(pa, pb, shallow=False) for pa, pb in zip(a, b)]
    same.append(filecmp.cmp(a[2] + ".json", b[2] + ".json", shallow=False))
    check(
        "pipeline-determinism",
        all(same),
        f"checkpoint/history/report/json identical: {same}",
    )
