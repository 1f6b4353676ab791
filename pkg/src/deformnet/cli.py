"""Command-line pipeline: data generation, training, reconstruction, meshing,
evaluation, gradient checking, and plotting.

Every subcommand is deterministic given its flags and input files. On
failure the process exits nonzero with a one-line diagnostic on stderr and
removes any partially written outputs.
"""

import argparse
import json
import os
import sys

from .config import TrainConfig
from .geometry import TriangleMesh, icosphere, sample_mesh_surface, sample_sphere
from .gradcheck import TOLERANCE, run_all
from .io import (
    build_dataset,
    load_checkpoint,
    load_manifest,
    load_xyz,
    resolve_mesh,
    write_obj,
    write_xyz,
)
from .metrics import evaluate
from .model import deform, encode
from .training import train
from .viz import write_svg_scatter


class _Outputs:
    """Paths written by the running subcommand; removed if it fails."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        self.paths.append(path)
        return path

    def cleanup(self):
        for path in self.paths:
            try:
                os.remove(path)
            except OSError:
                pass


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def cmd_gen_data(args, outputs):
    entries = load_manifest(args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    os.makedirs(args.out_dir, exist_ok=True)
    for entry in entries:
        try:
            mesh = resolve_mesh(entry, base_dir)
            cloud = sample_mesh_surface(mesh, entry.count, entry.seed)
        except Exception as exc:
            raise RuntimeError(f"entry {entry.shape_id!r}: {exc}") from exc
        write_obj(mesh, outputs.add(os.path.join(args.out_dir, f"{entry.shape_id}.obj")))
        write_xyz(cloud, outputs.add(os.path.join(args.out_dir, f"{entry.shape_id}.xyz")))
    print(f"wrote {2 * len(entries)} files to {args.out_dir}")


def cmd_train(args, outputs):
    resume = load_checkpoint(args.resume) if args.resume else None
    overrides = _parse_overrides(args.set)
    if args.fixed_sphere:
        overrides["fixed_sphere"] = "true"
    if args.backward_conditioned is not None:
        overrides["backward_conditioned"] = args.backward_conditioned
    if resume is not None:
        config = resume.config.with_overrides(overrides)
    else:
        config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
        config = config.with_overrides(overrides)
    names = sorted(f for f in os.listdir(args.data_dir) if f.endswith(".xyz"))
    if not names:
        raise FileNotFoundError(f"no .xyz files in {args.data_dir}")
    dataset = [load_xyz(os.path.join(args.data_dir, f)) for f in names]
    outputs.add(args.out)
    if args.history:
        outputs.add(args.history)
    result = train(dataset, config, resume=resume,
                   checkpoint_path=args.out, history_path=args.history)
    last = result.history[-1] if result.history else None
    if last:
        print(f"step {last[0]}: total={last[1]:.6g} chamfer_fwd={last[2]:.6g}")
    print(f"checkpoint written to {args.out}")


def cmd_reconstruct(args, outputs):
    ckpt = load_checkpoint(args.checkpoint)
    cloud = load_xyz(args.input)
    n = ckpt.config.sphere_points or len(cloud)
    sphere = sample_sphere(n, args.seed)
    code = encode(cloud, ckpt.params)
    recon = deform(sphere, code, ckpt.params.blocks("forward"))
    write_xyz(recon, outputs.add(args.out))
    print(f"wrote {len(recon)} points to {args.out}")


def cmd_mesh(args, outputs):
    ckpt = load_checkpoint(args.checkpoint)
    cloud = load_xyz(args.input)
    template = icosphere(args.subdivisions)
    code = encode(cloud, ckpt.params)
    deformed = deform(template.vertices, code, ckpt.params.blocks("forward"))
    write_obj(TriangleMesh(deformed.points, template.faces), outputs.add(args.out))
    print(f"wrote mesh with {template.num_faces} faces to {args.out}")


def cmd_eval(args, outputs):
    ckpt = load_checkpoint(args.checkpoint)
    entries = load_manifest(args.manifest)
    dataset = build_dataset(entries, os.path.dirname(os.path.abspath(args.manifest)))
    report = evaluate(ckpt.params, dataset, ckpt.config,
                      mesh_subdivisions=args.mesh_subdivisions)
    with open(outputs.add(args.report), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    with open(outputs.add(args.report + ".json"), "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"d2f={report.d2f:.6g} coverage={report.coverage:.6g} chamfer={report.chamfer:.6g}")


def cmd_gradcheck(args, outputs):
    results = run_all(instances=args.instances, seed=args.seed)
    worst_name, worst = max(results, key=lambda item: item[1])
    failed = [(name, err) for name, err in results if not err < TOLERANCE]
    for name, err in failed:
        print(f"FAIL {name}: {err:.3e}", file=sys.stderr)
    print(f"{len(results)} checks, max relative error {worst:.3e} ({worst_name})")
    if failed:
        raise RuntimeError(f"{len(failed)} gradient checks exceeded {TOLERANCE}")


def cmd_plot(args, outputs):
    clouds = [load_xyz(p) for p in args.input]
    labels = [os.path.splitext(os.path.basename(p))[0] for p in args.input]
    write_svg_scatter(clouds, outputs.add(args.out), labels=labels)
    print(f"wrote {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="deformnet",
        description="Point-cloud autoencoder that deforms a unit sphere into target shapes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample training data from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a directory of .xyz clouds")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--history", help="write per-step loss history CSV here")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (repeatable)")
    p.add_argument("--fixed-sphere", action="store_true",
                   help="reuse one sphere sample per shape instead of resampling")
    p.add_argument("--backward-conditioned", choices=["true", "false"], default=None,
                   help="whether the backward network receives the latent code")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct a cloud through the model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="target .xyz cloud")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="sphere sample seed")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("mesh", help="export a mesh by deforming icosphere vertices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="target .xyz cloud")
    p.add_argument("--subdivisions", type=int, default=3)
    p.add_argument("--out", required=True, help="output .obj path")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="text report path (JSON written alongside)")
    p.add_argument("--mesh-subdivisions", type=int, default=None,
                   help="also export meshes and count self-intersections")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="SVG scatter of up to three clouds")
    p.add_argument("--input", required=True, nargs="+", help="one to three .xyz files")
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    outputs = _Outputs()
    try:
        args.func(args, outputs)
    except Exception as exc:
        outputs.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
