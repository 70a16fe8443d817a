"""Frozen convolutional embedding used in place of an Inception network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..data import DatasetHandle
from ..exceptions import ValidationError
from ..model_zoo import ArchitectureSpec, ParamStore, build_network
from ..validation import check_images


@dataclass(frozen=True, eq=False)
class EmbeddingNet:
    """A trained classifier whose penultimate layer defines the embedding space.

    FID values are only comparable when computed with the same ``checksum``.
    """

    params: ParamStore

    def __post_init__(self):
        if self.params.spec.role not in ("embedder", "classifier"):
            raise ValidationError("embedding networks must have role 'embedder' or 'classifier'")
        object.__setattr__(self, "_module", self.params.to_module(train=False))
        object.__setattr__(self, "_checksum", self.params.checksum)

    @property
    def embed_dim(self) -> int:
        return self.params.spec.embed_dim

    @property
    def checksum(self) -> str:
        return self._checksum

    @property
    def spec(self) -> ArchitectureSpec:
        return self.params.spec

    def embed(self, images, batch_size: int = 1000) -> np.ndarray:
        x = check_images(images, self.spec.channels, self.spec.image_size, name="images")
        out = []
        with torch.no_grad():
            for lo in range(0, x.shape[0], batch_size):
                out.append(self._module.embed(x[lo:lo + batch_size]).double())
        return torch.cat(out).numpy()

    def predict(self, images, batch_size: int = 1000) -> np.ndarray:
        x = check_images(images, self.spec.channels, self.spec.image_size, name="images")
        out = []
        with torch.no_grad():
            for lo in range(0, x.shape[0], batch_size):
                out.append(self._module(x[lo:lo + batch_size]).argmax(1))
        return torch.cat(out).numpy()


def train_classifier(data: DatasetHandle, seed: int, role: str = "classifier", base_width: int = 16,
                     embed_dim: int = 64, iterations: int = 600, batch_size: int = 64,
                     lr: float = 1e-3) -> ParamStore:
    """Fit a small conv classifier with cross-entropy; deterministic given ``seed``."""
    if not data.labeled:
        raise ValidationError(f"{data.dataset_id} is unlabeled")
    present = np.unique(data.labels)
    if len(present) < 2:
        raise ValidationError("need labeled data with at least 2 classes")
    size = data.image_size
    n_blocks = int(round(np.log2(size / 4)))
    spec = ArchitectureSpec(role=role, image_size=size, channels=data.channels, n_res_blocks=n_blocks,
                            base_width=base_width, n_classes=max(int(data.n_classes), int(present.max()) + 1),
                            embed_dim=embed_dim)
    module = build_network(spec, seed).to_module(train=True)
    opt = torch.optim.Adam(module.parameters(), lr=lr)
    batches = data.batches(batch_size, seed)
    for _ in range(iterations):
        xb, yb = next(batches)
        loss = F.cross_entropy(module(torch.from_numpy(xb)), torch.from_numpy(yb))
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    return ParamStore.from_module(module.eval(), spec)


def fit_embedding(data: DatasetHandle, seed: int, embed_dim: int = 64, **kwargs) -> EmbeddingNet:
    """Train a classifier on labeled data, freeze it and expose its penultimate layer."""
    return EmbeddingNet(train_classifier(data, seed, role="embedder", embed_dim=embed_dim, **kwargs))


def classifier_accuracy(classifier: ParamStore | EmbeddingNet, images, labels) -> dict:
    net = classifier if isinstance(classifier, EmbeddingNet) else EmbeddingNet(classifier)
    pred = net.predict(images)
    labels = np.asarray(labels)
    per_class = {int(c): float(np.mean(pred[labels == c] == c)) for c in np.unique(labels)}
    return {"per_class": per_class, "avg": float(np.mean(list(per_class.values()))),
            "overall": float(np.mean(pred == labels))}
