"""Set encoder and residual deformation networks.

The encoder runs a shared per-point MLP, max-pools over points (exactly
permutation invariant), and maps the pooled feature to a latent code. Each
deformation block is a per-point residual update x <- x + MLP(x, code), so a
stack of blocks moves the input cloud gradually and is permutation
equivariant by construction. Block output layers start at zero, which makes
the untrained model the identity map.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .geometry import PointCloud


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 256
    num_blocks: int = 3
    encoder_widths: tuple = (64, 128, 256)
    head_widths: tuple = (256,)
    block_widths: tuple = (128, 128)
    backward_conditioned: bool = True

    def __post_init__(self):
        if self.latent_dim < 1 or self.num_blocks < 1:
            raise ValueError("latent_dim and num_blocks must be positive")
        if not self.encoder_widths or not self.block_widths:
            raise ValueError("encoder_widths and block_widths must be nonempty")


@dataclass
class LatentCode:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError(f"latent code must be a vector, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("latent code contains non-finite values")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _mlp_shapes(prefix, in_dim, hidden, out_dim):
    shapes = {}
    dims = [in_dim, *hidden, out_dim]
    for layer, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        shapes[f"{prefix}.layer{layer}.w"] = (a, b)
        shapes[f"{prefix}.layer{layer}.b"] = (b,)
    return shapes


def parameter_shapes(config):
    """Name -> shape for every parameter, in a fixed order."""
    enc_in, *enc_hidden, enc_out = 3, *config.encoder_widths
    shapes = _mlp_shapes("encoder.point", enc_in, enc_hidden, enc_out)
    shapes.update(
        _mlp_shapes("encoder.head", enc_out, config.head_widths, config.latent_dim)
    )
    fwd_in = 3 + config.latent_dim
    bwd_in = 3 + config.latent_dim if config.backward_conditioned else 3
    for t in range(config.num_blocks):
        shapes.update(_mlp_shapes(f"forward.block{t}", fwd_in, config.block_widths, 3))
    for t in range(config.num_blocks):
        shapes.update(_mlp_shapes(f"backward.block{t}", bwd_in, config.block_widths, 3))
    return shapes


class ModelParams:
    """Named parameter arrays, shape-checked against a ModelConfig."""

    def __init__(self, config, arrays):
        expected = parameter_shapes(config)
        missing = expected.keys() - arrays.keys()
        extra = arrays.keys() - expected.keys()
        if missing or extra:
            raise ValueError(f"parameter names mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        self.config = config
        self.arrays = {}
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {name}: expected shape {shape}, got {arr.shape}")
            self.arrays[name] = arr

    def __getitem__(self, name):
        return self.arrays[name]

    def names(self):
        return list(self.arrays)

    def items(self):
        return self.arrays.items()

    def count(self):
        return sum(a.size for a in self.arrays.values())

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def block_names(self, direction):
        last = len(self.config.block_widths)
        out = []
        for t in range(self.config.num_blocks):
            out.append(
                [
                    (f"{direction}.block{t}.layer{layer}.w", f"{direction}.block{t}.layer{layer}.b")
                    for layer in range(last + 1)
                ]
            )
        return out

    def blocks(self, direction):
        """Per-block [(w, b), ...] arrays for 'forward' or 'backward'."""
        return [
            [(self.arrays[wn], self.arrays[bn]) for wn, bn in layers]
            for layers in self.block_names(direction)
        ]


def init_params(seed, config=ModelConfig()):
    """Fresh parameters: weights ~ N(0, 1/fan_in), biases zero, and every
    deformation block's output layer zeroed (identity deformation)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    arrays = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".b"):
            arrays[name] = np.zeros(shape)
        elif ".block" in name and f"layer{len(config.block_widths)}" in name:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
    return ModelParams(config, arrays)


def lift_params(graph, params):
    """Insert every parameter as a leaf of `graph`; name -> Tensor."""
    return {name: graph.leaf(arr) for name, arr in params.items()}


def _encode_tensors(points, lifted, config):
    h = points
    for layer in range(len(config.encoder_widths)):
        h = ad.add(ad.matmul(h, lifted[f"encoder.point.layer{layer}.w"]),
                   lifted[f"encoder.point.layer{layer}.b"])
        h = ad.relu(h)
    pooled = ad.reduce_max(h, axis=0, keepdims=True)
    z = pooled
    n_head = len(config.head_widths) + 1
    for layer in range(n_head):
        z = ad.add(ad.matmul(z, lifted[f"encoder.head.layer{layer}.w"]),
                   lifted[f"encoder.head.layer{layer}.b"])
        if layer < n_head - 1:
            z = ad.relu(z)
    return z  # (1, latent_dim)


def _deform_tensors(points, code, block_tensors):
    x = points
    n = x.shape[0]
    tile = np.zeros(n, dtype=np.int64)
    for layers in block_tensors:
        w0 = layers[0][0]
        conditioned = w0.shape[0] > 3
        if conditioned:
            h = ad.concat([x, ad.gather_rows(code, tile)])
        else:
            h = x
        last = len(layers) - 1
        for layer, (w, b) in enumerate(layers):
            h = ad.add(ad.matmul(h, w), b)
            if layer < last:
                h = ad.tanh(h)
        x = ad.add(x, h)
    return x


def _lift_blocks(graph, blocks):
    return [[(graph.leaf(w), graph.leaf(b)) for w, b in layers] for layers in blocks]


def _points_of(cloud):
    if isinstance(cloud, PointCloud):
        return cloud.points
    return PointCloud(cloud).points


def encode(cloud, params):
    """Latent code of a cloud; exactly invariant to point order."""
    graph = ad.Graph()
    lifted = lift_params(graph, params)
    z = _encode_tensors(graph.leaf(_points_of(cloud)), lifted, params.config)
    return LatentCode(z.data[0])


def deform(cloud, code, blocks):
    """Push a cloud through a stack of residual blocks under a fixed code."""
    graph = ad.Graph()
    pts = graph.leaf(_points_of(cloud))
    code_t = graph.leaf(np.asarray(code.values if isinstance(code, LatentCode) else code)[None, :])
    out = _deform_tensors(pts, code_t, _lift_blocks(graph, blocks))
    return PointCloud(out.data)


def build_reconstruction(graph, target_pts, sphere_pts, lifted, config):
    """Graph-building core shared by reconstruct() and the training loop.

    Returns (code, forward_out, backward_out) tensors.
    """
    target = graph.leaf(target_pts)
    sphere = graph.leaf(sphere_pts)
    z = _encode_tensors(target, lifted, config)

    def lifted_blocks(direction, last):
        return [
            [(lifted[f"{direction}.block{t}.layer{l}.w"], lifted[f"{direction}.block{t}.layer{l}.b"])
             for l in range(last + 1)]
            for t in range(config.num_blocks)
        ]

    last = len(config.block_widths)
    fwd = _deform_tensors(sphere, z, lifted_blocks("forward", last))
    bwd = _deform_tensors(target, z, lifted_blocks("backward", last))
    return z, fwd, bwd


def reconstruct(target, sphere, params):
    """Encode the target, deform the sphere toward it and the target back."""
    graph = ad.Graph()
    lifted = lift_params(graph, params)
    _, fwd, bwd = build_reconstruction(
        graph, _points_of(target), _points_of(sphere), lifted, params.config
    )
    return PointCloud(fwd.data), PointCloud(bwd.data)
