"""scikit-learn style front end.

DeformationAutoencoder follows the estimator contract (get_params /
set_params / clone-compatible constructor), so it drops into sklearn
pipelines and model selection. fit() trains the autoencoder on a list of
point clouds; transform() reconstructs clouds by deforming seeded sphere
samples toward them; inverse_transform() runs the backward network, mapping
clouds toward the sphere.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import TrainConfig
from .geometry import PointCloud, sample_sphere
from .model import deform, encode
from .training import derive_seed, train


def check_point_set(X, name="X"):
    """Validate one cloud: finite (n >= 1, 3) float array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one point")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_point_set_list(X, name="X"):
    """Accept a single (n, 3) array or a sequence of clouds; return a list."""
    if isinstance(X, PointCloud):
        return [X.points]
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [check_point_set(X, name)]
    clouds = []
    for i, item in enumerate(X):
        pts = item.points if isinstance(item, PointCloud) else item
        clouds.append(check_point_set(pts, f"{name}[{i}]"))
    if not clouds:
        raise ValueError(f"{name} must contain at least one cloud")
    return clouds


class DeformationAutoencoder(TransformerMixin, BaseEstimator):
    """Sphere-deformation autoencoder for 3D point clouds.

    Parameters mirror the training configuration; see TrainConfig for the
    full set of architecture knobs. `sphere_points=0` sizes each sphere
    sample to match its target cloud.

    Attributes (after fit): `params_` trained weights, `optimizer_state_`,
    `loss_history_` one row per training step.
    """

    def __init__(self, steps=3000, batch_size=1, learning_rate=1e-3, latent_dim=256,
                 num_blocks=3, k=8, sphere_points=0, w_chamfer=1.0, w_deform=0.1,
                 w_backward=1.0, deform_loss_form="squared", backward_conditioned=True,
                 fixed_sphere=False, seed=0):
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.latent_dim = latent_dim
        self.num_blocks = num_blocks
        self.k = k
        self.sphere_points = sphere_points
        self.w_chamfer = w_chamfer
        self.w_deform = w_deform
        self.w_backward = w_backward
        self.deform_loss_form = deform_loss_form
        self.backward_conditioned = backward_conditioned
        self.fixed_sphere = fixed_sphere
        self.seed = seed

    def _train_config(self):
        return TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            latent_dim=self.latent_dim,
            num_blocks=self.num_blocks,
            k=self.k,
            sphere_points=self.sphere_points,
            w_chamfer=self.w_chamfer,
            w_deform=self.w_deform,
            w_backward=self.w_backward,
            deform_loss_form=self.deform_loss_form,
            backward_conditioned=self.backward_conditioned,
            fixed_sphere=self.fixed_sphere,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        clouds = [PointCloud(c) for c in check_point_set_list(X)]
        config = self._train_config()
        result = train(clouds, config)
        self.config_ = config
        self.params_ = result.params
        self.optimizer_state_ = result.state
        self.loss_history_ = result.history
        return self

    def encode(self, X):
        """Latent codes, one row per input cloud."""
        check_is_fitted(self, "params_")
        clouds = check_point_set_list(X)
        return np.stack([encode(PointCloud(c), self.params_).values for c in clouds])

    def transform(self, X):
        """Reconstruct each cloud: encode it, then deform a sphere sample."""
        check_is_fitted(self, "params_")
        out = []
        for i, pts in enumerate(check_point_set_list(X)):
            cloud = PointCloud(pts)
            n = self.sphere_points or len(cloud)
            sphere = sample_sphere(n, derive_seed(self.seed, 4, i))
            code = encode(cloud, self.params_)
            out.append(deform(sphere, code, self.params_.blocks("forward")).points)
        return out

    def inverse_transform(self, X):
        """Push clouds through the backward network (toward the sphere)."""
        check_is_fitted(self, "params_")
        out = []
        for pts in check_point_set_list(X):
            cloud = PointCloud(pts)
            code = encode(cloud, self.params_)
            out.append(deform(cloud, code, self.params_.blocks("backward")).points)
        return out
