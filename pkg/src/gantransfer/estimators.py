"""scikit-learn style wrappers around the functional API.

Images are passed as arrays of shape ``[N, C, S, S]`` with values in
[-1, 1] (or as :class:`DatasetHandle` objects).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conditional import AcGanConfig, FromCheckpoint, train_acgan
from .data import DatasetHandle
from .exceptions import ValidationError
from .metrics.critic import iw, train_iw_critic
from .metrics.embedding import EmbeddingNet, train_classifier
from .model_zoo import ArchitectureSpec
from .training import TrainConfig, generate, train_gan
from .transfer import Pretrained, Scratch, TransferConfig, apply_transfer
from .validation import check_images


def _as_dataset(X, y=None, name="X") -> DatasetHandle:
    if isinstance(X, DatasetHandle):
        if y is not None:
            raise ValidationError("pass labels through the DatasetHandle, not y")
        return X
    x = check_images(X, name=name).numpy()
    if x.min() < -1 or x.max() > 1:
        raise ValidationError(f"{name} must be scaled to [-1, 1]")
    labels, n_classes = None, 0
    if y is not None:
        labels = np.asarray(y)
        if labels.shape != (len(x),) or not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError("y must be a 1-D integer array with one label per image")
        if labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        labels = labels.astype(np.int64)
        n_classes = int(labels.max()) + 1
    return DatasetHandle(dataset_id="array", kind="synthetic", images=np.ascontiguousarray(x, dtype=np.float32),
                         labels=labels, n_classes=n_classes)


def _layout(ds: DatasetHandle, base_width: int, noise_dim: int) -> ArchitectureSpec:
    n_blocks = int(round(np.log2(ds.image_size / 4)))
    return ArchitectureSpec(image_size=ds.image_size, channels=ds.channels, n_res_blocks=n_blocks,
                            base_width=base_width, noise_dim=noise_dim)


class _GanBase(BaseEstimator):
    def _train_cfg(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, lr=self.lr, iterations=self.iterations,
                           n_critic=self.n_critic, gp_lambda=self.gp_lambda, seed=self.random_state)

    def sample(self, n_samples: int, random_state: int = 0, labels=None) -> np.ndarray:
        check_is_fitted(self, "generator_")
        return generate(self.generator_, n_samples, random_state, labels=labels)


class WGANGP(_GanBase):
    """WGAN-GP with optional initialization from pre-trained networks.

    ``init_generator`` / ``init_discriminator`` take checkpoint paths or
    parameter stores; ``None`` means random initialization.
    """

    def __init__(self, base_width: int = 32, noise_dim: int = 128, iterations: int = 1000, batch_size: int = 64,
                 lr: float = 1e-4, n_critic: int = 5, gp_lambda: float = 10.0, random_state: int = 0,
                 init_generator=None, init_discriminator=None):
        self.base_width = base_width
        self.noise_dim = noise_dim
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.n_critic = n_critic
        self.gp_lambda = gp_lambda
        self.random_state = random_state
        self.init_generator = init_generator
        self.init_discriminator = init_discriminator

    def fit(self, X, y=None, hooks=()):
        ds = _as_dataset(X)
        cfg = self._train_cfg()
        tc = TransferConfig(Scratch() if self.init_generator is None else Pretrained(self.init_generator),
                            Scratch() if self.init_discriminator is None else Pretrained(self.init_discriminator),
                            cfg)
        spec = _layout(ds, self.base_width, self.noise_dim)
        if self.init_generator is not None:
            spec = Pretrained(self.init_generator).load().spec
        g, d, self.provenance_ = apply_transfer(spec, tc, self.random_state)
        self.generator_, self.discriminator_, self.log_ = train_gan(g, d, ds, cfg, hooks=hooks)
        return self


class ACGAN(_GanBase):
    """AC-GAN with ``concat`` or ``cond_bnorm`` conditioning.

    With ``init_generator`` set, training starts from that unconditional
    generator (and ``init_discriminator``, if given).
    """

    def __init__(self, conditioning: str = "cond_bnorm", alpha_g: float = 1.0, alpha_d: float = 1.0,
                 base_width: int = 32, noise_dim: int = 128, iterations: int = 1000, batch_size: int = 64,
                 lr: float = 1e-4, n_critic: int = 5, gp_lambda: float = 10.0, random_state: int = 0,
                 init_generator=None, init_discriminator=None):
        self.conditioning = conditioning
        self.alpha_g = alpha_g
        self.alpha_d = alpha_d
        self.base_width = base_width
        self.noise_dim = noise_dim
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.n_critic = n_critic
        self.gp_lambda = gp_lambda
        self.random_state = random_state
        self.init_generator = init_generator
        self.init_discriminator = init_discriminator

    def fit(self, X, y=None, hooks=()):
        ds = _as_dataset(X, y)
        if not ds.labeled:
            raise ValidationError("ACGAN.fit needs class labels")
        cfg = AcGanConfig(conditioning=self.conditioning, n_classes=ds.n_classes, alpha_g=self.alpha_g,
                          alpha_d=self.alpha_d, base=self._train_cfg())
        if self.init_generator is None:
            init, layout = "scratch", _layout(ds, self.base_width, self.noise_dim)
        else:
            init, layout = FromCheckpoint(self.init_generator, self.init_discriminator), None
        self.generator_, self.discriminator_, self.log_ = train_acgan(cfg, init, ds, hooks=hooks, layout=layout)
        self.classes_ = np.arange(ds.n_classes)
        return self


class Embedder(TransformerMixin, BaseEstimator):
    """Small convolutional classifier whose penultimate layer is the embedding."""

    def __init__(self, embed_dim: int = 64, base_width: int = 16, iterations: int = 600, batch_size: int = 64,
                 lr: float = 1e-3, random_state: int = 0):
        self.embed_dim = embed_dim
        self.base_width = base_width
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.random_state = random_state

    def fit(self, X, y=None):
        ds = _as_dataset(X, y)
        store = train_classifier(ds, self.random_state, role="embedder", base_width=self.base_width,
                                 embed_dim=self.embed_dim, iterations=self.iterations,
                                 batch_size=self.batch_size, lr=self.lr)
        self.net_ = EmbeddingNet(store)
        self.classes_ = np.arange(store.spec.n_classes)
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        return self.net_.embed(X.images if isinstance(X, DatasetHandle) else X)

    def predict(self, X):
        check_is_fitted(self, "net_")
        return self.net_.predict(X.images if isinstance(X, DatasetHandle) else X)

    @property
    def checksum_(self) -> str:
        check_is_fitted(self, "net_")
        return self.net_.checksum


class IndependentCritic(BaseEstimator):
    """Evaluation-only WGAN-GP critic; ``score(X1, X2)`` is the signed IW value."""

    def __init__(self, base_width: int = 32, iterations: int = 2000, batch_size: int = 64, lr: float = 1e-4,
                 gp_lambda: float = 10.0, random_state: int = 0):
        self.base_width = base_width
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.gp_lambda = gp_lambda
        self.random_state = random_state

    def fit(self, X_val, X_other):
        x_val, x_other = _as_dataset(X_val, name="X_val"), _as_dataset(X_other, name="X_other")
        spec = _layout(x_val, self.base_width, 128).replace(role="critic")
        cfg = TrainConfig(batch_size=self.batch_size, lr=self.lr, iterations=self.iterations,
                          gp_lambda=self.gp_lambda, seed=self.random_state)
        self.critic_ = train_iw_critic(x_val.images, x_other.images, cfg, spec)
        return self

    def score(self, X1, X2) -> float:
        check_is_fitted(self, "critic_")
        return iw(self.critic_, X1, X2)
