"""Training loop: Adam over the combined reconstruction loss.

Every source of randomness is derived from (config.seed, step, shape index)
through numpy's SeedSequence, so a run is a pure function of its inputs and
resuming from a checkpoint at step s reproduces the uninterrupted run bit for
bit. Batches accumulate gradients cloud by cloud in dataset order; clouds may
have unequal sizes.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteError, TrainingDivergedError
from .geometry import PointCloud, knn, sample_sphere
from .loss import combine_terms, loss_terms
from .model import ModelParams, build_reconstruction, init_params, lift_params

HISTORY_COLUMNS = ("step", "total", "chamfer_fwd", "deform_fwd", "chamfer_bwd", "deform_bwd")

_MASK = 0xFFFFFFFFFFFFFFFF


def derive_seed(*parts):
    """Deterministic child seed from integer parts."""
    ss = np.random.SeedSequence([int(p) & _MASK for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.items()},
            v={name: np.zeros_like(arr) for name, arr in params.items()},
            t=0,
        )


def adam_step(params, grads, state, config):
    """Bias-corrected adaptive-moment update, applied in place."""
    arrays = params.arrays if isinstance(params, ModelParams) else params
    missing = arrays.keys() - grads.keys()
    if missing:
        raise ValueError(f"gradients missing for parameters: {sorted(missing)}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    scale1 = 1.0 - b1 ** state.t
    scale2 = 1.0 - b2 ** state.t
    for name in sorted(arrays):
        g = grads[name]
        if g.shape != arrays[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {arrays[name].shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        arrays[name] -= config.learning_rate * (m / scale1) / (np.sqrt(v / scale2) + config.adam_epsilon)
    return params, state


@dataclass
class TrainResult:
    params: ModelParams
    state: OptimizerState
    history: list = field(default_factory=list)


def _target_clouds(dataset):
    clouds = []
    for item in dataset:
        if isinstance(item, PointCloud):
            clouds.append(item)
        elif isinstance(item, np.ndarray):
            clouds.append(PointCloud(item))
        elif isinstance(item, (tuple, list)) and len(item) >= 2:
            clouds.append(item[-1])  # (mesh, cloud) or (id, mesh, cloud)
        else:
            raise TypeError(f"unsupported dataset item: {item!r}")
    if not clouds:
        raise ValueError("dataset must not be empty")
    return clouds


def _cloud_gradients(params, target, sphere, sphere_nbrs, target_nbrs, config):
    """One forward/backward pass; returns (per-term floats, name -> gradient)."""
    graph = ad.Graph()
    lifted = lift_params(graph, params)
    _, fwd, bwd = build_reconstruction(
        graph, target.points, sphere.points, lifted, params.config
    )
    terms = loss_terms(
        target.points, sphere.points, fwd, bwd, sphere_nbrs, target_nbrs,
        form=config.deform_loss_form,
    )
    total = combine_terms(terms, config.loss_weights())
    grads = ad.backward(graph, total)
    named = {name: grads[t.node_id].data for name, t in lifted.items()}
    values = {name: float(t.data) for name, t in terms.items()}
    values["total"] = float(total.data)
    return values, named


def train(dataset, config, resume=None, checkpoint_path=None, history_path=None):
    """Train on a dataset of point clouds (or (mesh, cloud) pairs).

    `resume` is a Checkpoint to continue from; training then covers steps
    resume.step+1 .. config.steps. Checkpoints are written to
    `checkpoint_path` every config.checkpoint_interval steps and at the end.
    """
    targets = _target_clouds(dataset)
    if resume is not None:
        params = resume.params.copy()
        state = OptimizerState(
            m={k: v.copy() for k, v in resume.adam_m.items()},
            v={k: v.copy() for k, v in resume.adam_v.items()},
            t=resume.step,
        )
    else:
        params = init_params(derive_seed(config.seed, 1), config.model_config())
        state = OptimizerState.zeros(params)

    target_nbr_cache = {}
    fixed_sphere_cache = {}
    history = []

    for step in range(state.t + 1, config.steps + 1):
        rng = np.random.Generator(np.random.PCG64(derive_seed(config.seed, 2, step)))
        batch = sorted(rng.choice(len(targets), size=min(config.batch_size, len(targets)), replace=False))

        grad_sum = None
        term_sums = dict.fromkeys(("total", *HISTORY_COLUMNS[2:]), 0.0)
        try:
            for idx in batch:
                target = targets[idx]
                if idx not in target_nbr_cache:
                    target_nbr_cache[idx] = knn(target, config.k)
                n_sphere = config.sphere_points or len(target)
                if config.fixed_sphere:
                    if idx not in fixed_sphere_cache:
                        sphere = sample_sphere(n_sphere, derive_seed(config.seed, 3, idx))
                        fixed_sphere_cache[idx] = (sphere, knn(sphere, config.k))
                    sphere, sphere_nbrs = fixed_sphere_cache[idx]
                else:
                    sphere = sample_sphere(n_sphere, derive_seed(config.seed, 3, idx, step))
                    sphere_nbrs = knn(sphere, config.k)
                values, named = _cloud_gradients(
                    params, target, sphere, sphere_nbrs, target_nbr_cache[idx], config
                )
                for key in term_sums:
                    term_sums[key] += values[key]
                if grad_sum is None:
                    grad_sum = named
                else:
                    for name, g in named.items():
                        grad_sum[name] = grad_sum[name] + g
        except NonFiniteError as exc:
            raise TrainingDivergedError(step, str(exc)) from exc

        scale = 1.0 / len(batch)
        grads = {name: g * scale for name, g in grad_sum.items()}
        row = (step, *(term_sums[c] * scale for c in HISTORY_COLUMNS[1:]))
        if not all(np.isfinite(row[1:])):
            raise TrainingDivergedError(step, "loss is not finite")
        history.append(row)
        adam_step(params, grads, state, config)

        if checkpoint_path and config.checkpoint_interval and step % config.checkpoint_interval == 0:
            _save(checkpoint_path, config, params, state)

    if checkpoint_path:
        _save(checkpoint_path, config, params, state)
    if history_path:
        write_history(history_path, history)
    return TrainResult(params, state, history)


def _save(path, config, params, state):
    from .io import Checkpoint, save_checkpoint

    save_checkpoint(path, Checkpoint(config, params, state.m, state.v, state.t))


def write_history(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            writer.writerow([row[0], *(repr(float(v)) for v in row[1:])])
