"""Input validation helpers used by the estimators and functional API."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.utils.validation import check_array

from .exceptions import ValidationError


def as_tensor(x, dtype=torch.float32) -> torch.Tensor:
    """Convert arrays to ``dtype``; floating tensors keep their own precision."""
    if isinstance(x, torch.Tensor):
        return x if x.is_floating_point() else x.to(dtype)
    arr = check_array(np.asarray(x), allow_nd=True, ensure_2d=False, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)


def check_images(x, channels: int | None = None, image_size: int | None = None,
                 name: str = "x") -> torch.Tensor:
    """Return ``x`` as a ``[B, C, S, S]`` tensor, checking the expected layout."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValidationError(f"{name} must have shape [B, C, S, S], got {tuple(x.shape)}")
    if x.shape[0] == 0:
        raise ValidationError(f"{name} is empty")
    if channels is not None and x.shape[1] != channels:
        raise ValidationError(f"{name} has {x.shape[1]} channels, expected {channels}")
    if image_size is not None and tuple(x.shape[2:]) != (image_size, image_size):
        raise ValidationError(
            f"{name} has spatial size {tuple(x.shape[2:])}, expected {image_size}x{image_size}")
    return x


def check_noise(z, noise_dim: int) -> torch.Tensor:
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[1] != noise_dim:
        raise ValidationError(f"z must have shape [B, {noise_dim}], got {tuple(z.shape)}")
    return z


def check_labels(y, n_classes: int, batch_size: int | None = None, name: str = "y") -> torch.Tensor:
    """Return integer labels as a long tensor, validating range and length."""
    if isinstance(y, torch.Tensor):
        if y.is_floating_point():
            raise ValidationError(f"{name} must hold integer class indices")
        y = y.long()
    else:
        arr = np.asarray(y)
        if arr.dtype.kind not in "iu":
            raise ValidationError(f"{name} must hold integer class indices")
        y = torch.from_numpy(arr.astype(np.int64))
    if y.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {tuple(y.shape)}")
    if batch_size is not None and y.shape[0] != batch_size:
        raise ValidationError(f"batch size mismatch: {name} has {y.shape[0]} entries, expected {batch_size}")
    if y.numel() and (int(y.min()) < 0 or int(y.max()) >= n_classes):
        raise ValidationError(f"{name} contains labels outside [0, {n_classes})")
    return y


def check_samples(x, name: str = "samples", min_rows: int = 1) -> np.ndarray:
    """Validate a 2-D float64 sample matrix ``[N, d]``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D array [N, d], got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ValidationError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr
