"""Gaussian statistics of embeddings and the Frechet distance between them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..exceptions import NumericDomainError, ValidationError
from ..validation import check_samples


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mu: np.ndarray
    sigma: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])


def gaussian_stats(samples) -> GaussianStats:
    """Sample mean and unbiased (N-1) covariance, symmetrized."""
    x = check_samples(samples, min_rows=2)
    n, d = x.shape
    if n < d + 1:
        warnings.warn(f"only {n} samples for a {d}-dimensional covariance; estimate is rank-deficient",
                      RuntimeWarning, stacklevel=2)
    mu = x.mean(axis=0)
    xc = x - mu
    sigma = xc.T @ xc / (n - 1)
    return GaussianStats(mu, (sigma + sigma.T) / 2, n)


def merge_stats(a: GaussianStats, b: GaussianStats) -> GaussianStats:
    """Exact pooled statistics of two disjoint sample sets."""
    if a.dim != b.dim:
        raise ValidationError("cannot merge statistics of different dimension")
    n = a.n + b.n
    delta = b.mu - a.mu
    mu = a.mu + delta * (b.n / n)
    # Scatter matrices add, plus the between-group term.
    scatter = a.sigma * (a.n - 1) + b.sigma * (b.n - 1) + np.outer(delta, delta) * (a.n * b.n / n)
    sigma = scatter / (n - 1)
    return GaussianStats(mu, (sigma + sigma.T) / 2, n)


def sqrtm_psd(m, sym_tol: float = 1e-6) -> np.ndarray:
    """Symmetric square root of a symmetric positive semi-definite matrix.

    Eigenvalues in ``[-tau, 0)`` with ``tau = 1e-6 * trace`` are clamped to 0;
    anything more negative is rejected.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericDomainError("matrix contains non-finite entries")
    if np.max(np.abs(m - m.T), initial=0.0) > sym_tol * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise NumericDomainError("matrix is not symmetric")
    m = (m + m.T) / 2
    w, v = np.linalg.eigh(m)
    tau = 1e-6 * max(float(np.trace(m)), 0.0)
    if w.size and w.min() < -tau:
        raise NumericDomainError(f"matrix is indefinite (min eigenvalue {w.min():.3e} < -{tau:.3e})")
    r = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return (r + r.T) / 2


def fid(s1: GaussianStats, s2: GaussianStats) -> float:
    """Frechet distance ``|mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))``.

    The cross term ``Tr (S1 S2)^(1/2)`` equals the sum of singular values of
    ``S1^(1/2) S2^(1/2)``, which is symmetric in the two arguments and needs
    only symmetric square roots.
    """
    if s1.dim != s2.dim:
        raise ValidationError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    diff = s1.mu - s2.mu
    cross = np.linalg.svd(sqrtm_psd(s1.sigma) @ sqrtm_psd(s2.sigma), compute_uv=False).sum()
    value = float(diff @ diff + np.trace(s1.sigma) + np.trace(s2.sigma) - 2 * cross)
    if value < -1e-6 * max(1.0, float(np.trace(s1.sigma) + np.trace(s2.sigma))):
        raise NumericDomainError(f"FID evaluated to {value}")
    return max(value, 0.0)


def fid_from_samples(x1, x2) -> float:
    return fid(gaussian_stats(x1), gaussian_stats(x2))


def fid_per_class(real, real_labels, gen, gen_labels, n_classes: int | None = None) -> dict:
    """Class-wise FID, their unweighted mean and the pooled (class-agnostic) FID.

    Returns ``{"per_class": {c: value}, "avg": float, "all": float, "errors": {c: msg}}``.
    A class missing (or with fewer than two samples) on either side is recorded in
    ``errors`` and left out of the average.
    """
    real, gen = check_samples(real, "real", 2), check_samples(gen, "gen", 2)
    real_labels, gen_labels = np.asarray(real_labels), np.asarray(gen_labels)
    if real.shape[1] != gen.shape[1]:
        raise ValidationError("real and generated embeddings differ in dimension")
    if len(real_labels) != len(real) or len(gen_labels) != len(gen):
        raise ValidationError("labels and embeddings differ in length")
    classes = sorted(set(range(n_classes)) if n_classes else set(real_labels) | set(gen_labels))
    per_class, errors = {}, {}
    for c in classes:
        r, g = real[real_labels == c], gen[gen_labels == c]
        if len(r) < 2 or len(g) < 2:
            errors[int(c)] = f"class {c}: {len(r)} real / {len(g)} generated samples"
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            per_class[int(c)] = fid(gaussian_stats(r), gaussian_stats(g))
    avg = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return {"per_class": per_class, "avg": avg, "all": fid_from_samples(real, gen), "errors": errors}
