"""Clean-category feature statistics: subspace basis and neighborhood graph.

The attack needs a picture of where benign features live. Two structures
capture it: the top-k principal directions of the clean features (departure
from that subspace is the primary objective) and a pairwise Gaussian
affinity distribution over the clean set (whose disruption is the topology
objective). The affinity kernel scale is frozen at build time from the
clean set's 5th-nearest-neighbor distances and reused for adversarial
graphs, so the two distributions stay comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ReferenceError_

KNN_FOR_SCALE = 5
Q_FLOOR = 1e-12


@dataclass(frozen=True)
class CleanReference:
    """Frozen statistics of the clean feature set."""

    mean: np.ndarray  # (d,)
    basis: np.ndarray  # (d, k), orthonormal columns
    k: int
    kernel_scale: float
    features: np.ndarray  # (n, d), the clean set the graph was built on
    p_matrix: np.ndarray = field(repr=False, default=None)  # (n, n)

    def __post_init__(self):
        if self.p_matrix is None:
            object.__setattr__(
                self, "p_matrix", neighborhood_distribution(self.features, self.kernel_scale)
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def build_reference(features: np.ndarray, k: int = 8) -> CleanReference:
    """Fit mean, top-k right-singular basis, and affinity graph.

    Needs at least k + 1 unit-norm feature vectors with nonzero variance.
    Basis column signs are fixed (largest-magnitude entry positive) so
    rebuilds are bit-stable.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ReferenceError_(f"features must be (n, d), got shape {x.shape}")
    n, d = x.shape
    if k < 1:
        raise ReferenceError_(f"k must be >= 1, got {k}")
    if n < k + 1:
        raise ReferenceError_(f"need at least k + 1 = {k + 1} features, got {n}")
    if k > d:
        raise ReferenceError_(f"k = {k} exceeds feature dim {d}")
    norms = np.linalg.norm(x, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-5):
        raise ReferenceError_("features must be unit-norm")

    mean = x.mean(axis=0)
    centered = x - mean
    if float(np.abs(centered).max()) < 1e-12:
        raise ReferenceError_("zero variance in features: degenerate basis")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:k].T.copy()
    for j in range(k):
        col = basis[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            basis[:, j] = -col

    dists = np.linalg.norm(x[:, None, :] - x[None], axis=2)
    nn = np.sort(dists, axis=1)[:, 1:]  # drop self-distance
    idx = min(KNN_FOR_SCALE, nn.shape[1]) - 1
    kernel_scale = float(np.median(nn[:, idx]))
    if kernel_scale <= 0.0:
        raise ReferenceError_("degenerate kernel scale: too many duplicate features")

    return CleanReference(
        mean=mean, basis=basis, k=k, kernel_scale=kernel_scale, features=x
    )


def neighborhood_distribution(features: np.ndarray, scale: float) -> np.ndarray:
    """Symmetric normalized Gaussian affinities with a zero diagonal.

    P_ij = exp(-|z_i - z_j|^2 / (2 scale^2)) off-diagonal, normalized to sum
    to one. Identical points give the uniform off-diagonal distribution.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need at least 2 feature vectors, got shape {x.shape}")
    if scale <= 0.0:
        raise ValueError(f"kernel scale must be > 0, got {scale}")
    d2 = ((x[:, None, :] - x[None]) ** 2).sum(axis=2)
    aff = np.exp(-d2 / (2.0 * scale * scale))
    np.fill_diagonal(aff, 0.0)
    aff = 0.5 * (aff + aff.T)
    total = aff.sum()
    if total <= 0.0:
        raise ValueError("all affinities underflowed to zero; kernel scale too small")
    return aff / total


def subspace_residual(ref: CleanReference, z: np.ndarray) -> float:
    """Squared norm of the feature's component outside the clean subspace."""
    v = np.asarray(z, dtype=np.float64) - ref.mean
    r = float(v @ v) - float((ref.basis.T @ v) @ (ref.basis.T @ v))
    return max(r, 0.0)


def save_reference(ref: CleanReference, path: str) -> None:
    doc = {
        "mean": ref.mean.tolist(),
        "basis": ref.basis.tolist(),  # row-major: d rows of k entries
        "k": ref.k,
        "kernel_scale": ref.kernel_scale,
        "features": ref.features.tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_reference(path: str) -> CleanReference:
    """Read a reference written by save_reference; the graph is recomputed."""
    with open(path) as f:
        doc = json.load(f)
    try:
        ref = CleanReference(
            mean=np.array(doc["mean"], dtype=np.float64),
            basis=np.array(doc["basis"], dtype=np.float64),
            k=int(doc["k"]),
            kernel_scale=float(doc["kernel_scale"]),
            features=np.array(doc["features"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ReferenceError_(f"malformed reference file {path}: {e}") from e
    if ref.basis.shape != (ref.dim, ref.k):
        raise ReferenceError_(f"reference basis shape {ref.basis.shape} inconsistent in {path}")
    return ref
