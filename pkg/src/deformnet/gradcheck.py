"""Finite-difference validation of every differentiable op and the full loss.

Each check compares the engine's gradient against central differences on
small random instances. ReLU inputs are kept away from the kink, where a
finite difference is meaningless.
"""

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .geometry import knn, sample_sphere
from .loss import chamfer, combine_terms, deform_loss, loss_terms
from .model import build_reconstruction, init_params

TOLERANCE = 1e-4

_TINY = TrainConfig(
    latent_dim=6,
    num_blocks=2,
    encoder_widths=(8, 12),
    head_widths=(12,),
    block_widths=(8,),
    k=3,
)


def _away_from_zero(rng, shape, low=0.1, high=1.0):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _projector(rng, shape):
    # fixed random linear functional: the scalar is sensitive to every entry
    w = rng.standard_normal(shape)
    return lambda x: ad.reduce_sum(ad.multiply(x, w))


def _op_checks(rng):
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((4, 3))
    row = rng.standard_normal(3)
    m = rng.standard_normal((3, 5))
    idx = rng.integers(0, 4, size=6)
    p43 = _projector(rng, (4, 3))
    p45 = _projector(rng, (4, 5))
    p46 = _projector(rng, (4, 6))
    p63 = _projector(rng, (6, 3))
    p3 = _projector(rng, (3,))
    p4 = _projector(rng, (4,))
    return {
        "add": (a, lambda x: p43(ad.add(x, b))),
        "add_broadcast": (a, lambda x: p43(ad.add(x, row))),
        "subtract": (a, lambda x: p43(ad.subtract(b, x))),
        "multiply": (a, lambda x: p43(ad.multiply(x, b))),
        "multiply_broadcast": (a, lambda x: p43(ad.multiply(x, row))),
        "matmul": (a, lambda x: p45(ad.matmul(x, m))),
        "concat": (a, lambda x: p46(ad.concat([x, x.graph.leaf(b)]))),
        "relu": (_away_from_zero(rng, (4, 3)), lambda x: p43(ad.relu(x))),
        "tanh": (a, lambda x: p43(ad.tanh(x))),
        "square": (a, lambda x: p43(ad.square(x))),
        "reduce_sum": (a, lambda x: ad.reduce_sum(ad.square(x))),
        "reduce_sum_axis": (a, lambda x: p3(ad.reduce_sum(x, axis=0))),
        "reduce_mean": (a, lambda x: p4(ad.reduce_mean(x, axis=1))),
        "reduce_max": (a, lambda x: p3(ad.reduce_max(x, axis=0))),
        "reduce_max_flat": (a, lambda x: ad.reduce_max(x)),
        "gather_rows": (a, lambda x: p63(ad.gather_rows(x, idx))),
    }


def _loss_checks(rng):
    n = int(rng.integers(8, 17))
    x = rng.standard_normal((n, 3))
    y = rng.standard_normal((n, 3))
    src = rng.standard_normal((n, 3))
    nbrs = knn(src, 3)

    def chamfer_fn(t):
        return chamfer(t, t.graph.leaf(y))

    def deform_squared(t):
        return deform_loss(src, t, nbrs, form="squared")

    def deform_absolute(t):
        return deform_loss(src, t, nbrs, form="absolute")

    return {
        "chamfer": (x, chamfer_fn),
        "deform_loss_squared": (x * 1.1 + 0.05, deform_squared),
        "deform_loss_absolute": (x * 1.1 + 0.05, deform_absolute),
    }


def total_loss_check(seed, n_points=16, config=_TINY):
    """Max FD error of the full training loss, parameter by parameter."""
    rng = np.random.Generator(np.random.PCG64(seed))
    model_config = config.model_config()
    params = init_params(seed, model_config)
    # random output layers: the identity point is too flat to exercise paths
    for name in params.names():
        if ".block" in name:
            params.arrays[name] = rng.normal(0.0, 0.2, size=params[name].shape)

    target = rng.standard_normal((n_points, 3))
    sphere = sample_sphere(n_points, seed + 1).points
    sphere_nbrs = knn(sphere, config.k)
    target_nbrs = knn(target, config.k)
    weights = config.loss_weights()

    def loss_wrt(checked_name):
        def f(t):
            graph = t.graph
            lifted = {
                name: (t if name == checked_name else graph.leaf(arr))
                for name, arr in params.items()
            }
            _, fwd, bwd = build_reconstruction(graph, target, sphere, lifted, model_config)
            terms = loss_terms(
                target, sphere, fwd, bwd, sphere_nbrs, target_nbrs, form=config.deform_loss_form
            )
            return combine_terms(terms, weights)

        return f

    return max(ad.grad_check(loss_wrt(name), params[name]) for name in params.names())


def run_all(instances=10, seed=0):
    """[(check name, max relative error)] across `instances` random draws."""
    results = []
    for trial in range(instances):
        rng = np.random.Generator(np.random.PCG64([seed, trial]))
        for name, (x, fn) in {**_op_checks(rng), **_loss_checks(rng)}.items():
            results.append((f"{name}[{trial}]", ad.grad_check(fn, x)))
        results.append((f"total_loss[{trial}]", total_loss_check(seed=1000 + trial)))
    return results
