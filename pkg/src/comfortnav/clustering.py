"""Unsupervised grouping of vehicle-state spectra.

The pipeline: a small autoencoder maps each concatenated amplitude
spectrum to a 32-dim embedding, trained with a reconstruction loss plus a
triplet hinge whose positives/negatives come from the *visual* feature
space (nearest visual neighbor as positive, nearest sample from a
different visual k-means cluster as negative). Embeddings are then
PCA-projected and k-means clustered into coarse terrain-state classes.

Also holds the clustering agreement metrics (NMI and per-cluster-purity
accuracy), which are invariant under relabeling of either argument.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nn import Adam, affine, affine_backward, init_affine, tanh_backward, zero_grads

EMBEDDING_DIM = 32


@dataclass
class EncoderConfig:
    hidden: int = 64
    embedding_dim: int = EMBEDDING_DIM
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 120
    batch_size: int = 64
    margin: float = 0.4
    triplet_weight: float = 20.0
    visual_clusters: int = 3
    seed: int = 0


class SpectrumEncoder:
    """Two-layer encoder (spectrum -> embedding) with a mirror decoder."""

    def __init__(self, params: dict[str, dict[str, np.ndarray]], input_dim: int,
                 hidden: int, embedding_dim: int):
        self.params = params
        self.input_dim = input_dim
        self.hidden = hidden
        self.embedding_dim = embedding_dim

    @classmethod
    def init(cls, input_dim: int, config: EncoderConfig) -> "SpectrumEncoder":
        rng = np.random.default_rng(config.seed)
        params = {
            "enc1": init_affine(rng, input_dim, config.hidden),
            "enc2": init_affine(rng, config.hidden, config.embedding_dim),
            "dec1": init_affine(rng, config.embedding_dim, config.hidden),
            "dec2": init_affine(rng, config.hidden, input_dim),
        }
        return cls(params, input_dim, config.hidden, config.embedding_dim)

    def _forward(self, x: np.ndarray) -> dict[str, np.ndarray]:
        h1 = np.tanh(affine(x, self.params["enc1"]))
        z = np.tanh(affine(h1, self.params["enc2"]))
        h2 = np.tanh(affine(z, self.params["dec1"]))
        recon = affine(h2, self.params["dec2"])
        return {"x": x, "h1": h1, "z": z, "h2": h2, "recon": recon}

    def embed(self, spectra: np.ndarray) -> np.ndarray:
        """Map (N, D) spectra (or one (D,) spectrum) to 32-dim embeddings."""
        x = np.atleast_2d(np.asarray(spectra, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected spectra of length {self.input_dim}, got {x.shape[1]}")
        out = self._forward(x)["z"]
        return out[0] if np.asarray(spectra).ndim == 1 else out

    def reconstruct(self, spectra: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(spectra, dtype=float))
        out = self._forward(x)["recon"]
        return out[0] if np.asarray(spectra).ndim == 1 else out


def _nearest_indices(features: np.ndarray, exclude_self: bool,
                     allowed: np.ndarray | None = None,
                     block: int = 256) -> np.ndarray:
    """Index of the nearest row (Euclidean) for every row, computed in
    blocks to bound memory. `allowed[j]` masks candidate columns; -1 where
    no candidate exists."""
    n = features.shape[0]
    sq = np.einsum("ij,ij->i", features, features)
    out = np.full(n, -1, dtype=int)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * features[start:stop] @ features.T
        if exclude_self:
            d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        if allowed is not None:
            d2[:, ~allowed] = np.inf
        idx = np.argmin(d2, axis=1)
        hit = np.isfinite(d2[np.arange(stop - start), idx])
        out[start:stop] = np.where(hit, idx, -1)
    return out


def mine_triplets(visual_features: np.ndarray, n_clusters: int,
                  seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive/negative partner per anchor, from the visual feature space.

    The positive is the nearest visual neighbor; the negative is the
    nearest sample belonging to a different visual k-means cluster. When
    the features collapse to fewer distinct points than requested clusters
    the cluster count is reduced, and anchors with no out-of-cluster
    candidate get negative index -1 (their triplet term is skipped).
    """
    n = visual_features.shape[0]
    distinct = np.unique(visual_features, axis=0).shape[0]
    k = max(1, min(n_clusters, distinct))
    if k == 1:
        labels = np.zeros(n, dtype=int)
    else:
        _, labels, _ = kmeans(visual_features, k, seed=seed)
    positives = _nearest_indices(visual_features, exclude_self=True)
    negatives = np.full(n, -1, dtype=int)
    for cid in range(k):
        in_cluster = labels == cid
        if not in_cluster.any() or in_cluster.all():
            continue
        nearest = _nearest_indices(visual_features, exclude_self=False, allowed=~in_cluster)
        negatives[in_cluster] = nearest[in_cluster]
    return positives, negatives


def train_spectrum_encoder(spectra: np.ndarray, visual_features: np.ndarray,
                           config: EncoderConfig | None = None) -> SpectrumEncoder:
    """Fit the spectrum autoencoder with visually-guided triplets.

    Loss per batch: mean squared-reconstruction error plus
    `triplet_weight` times the mean hinge max(0, d(a,p) - d(a,n) + margin)
    over anchors that have a valid negative. Adam with decoupled weight
    decay; deterministic under config.seed.
    """
    config = config or EncoderConfig()
    spectra = np.asarray(spectra, dtype=float)
    visual_features = np.asarray(visual_features, dtype=float)
    if spectra.ndim != 2 or visual_features.ndim != 2:
        raise ValueError("spectra and visual_features must be 2-D arrays")
    n = spectra.shape[0]
    if visual_features.shape[0] != n:
        raise ValueError("spectra and visual_features must be aligned")
    if n < 3:
        raise ValueError("need at least 3 samples to form triplets")
    if not (np.all(np.isfinite(spectra)) and np.all(np.isfinite(visual_features))):
        raise ValueError("inputs contain non-finite values")

    positives, negatives = mine_triplets(visual_features, config.visual_clusters, config.seed)
    model = SpectrumEncoder.init(spectra.shape[1], config)
    opt = Adam(model.params, lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed + 1)

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = _encoder_batch_grads(model, spectra, batch, positives, negatives,
                                         config.margin, config.triplet_weight)
            opt.step(grads)
    return model


def _encoder_batch_grads(model: SpectrumEncoder, spectra: np.ndarray, batch: np.ndarray,
                         positives: np.ndarray, negatives: np.ndarray,
                         margin: float, triplet_weight: float):
    b = batch.shape[0]
    neg_ok = negatives[batch] >= 0
    rows = np.concatenate([batch, positives[batch], np.where(neg_ok, negatives[batch], 0)])
    fwd = model._forward(spectra[rows])
    z = fwd["z"]
    za, zp, zn = z[:b], z[b:2 * b], z[2 * b:]

    # reconstruction: mean over the batch of ||recon - x||^2, anchors only
    resid = fwd["recon"][:b] - spectra[batch]
    d_recon = np.zeros_like(fwd["recon"])
    d_recon[:b] = 2.0 * resid / b

    # triplet hinge on embedding distances, averaged over valid anchors
    d_z = np.zeros_like(z)
    n_valid = int(neg_ok.sum())
    if n_valid > 0:
        diff_p = za - zp
        diff_n = za - zn
        dp = np.sqrt(np.einsum("ij,ij->i", diff_p, diff_p) + 1e-24)
        dn = np.sqrt(np.einsum("ij,ij->i", diff_n, diff_n) + 1e-24)
        active = neg_ok & (dp - dn + margin > 0)
        if active.any():
            scale = triplet_weight / n_valid
            gp = scale * (diff_p / dp[:, None])
            gn = scale * (diff_n / dn[:, None])
            gp[~active] = 0.0
            gn[~active] = 0.0
            d_z[:b] += gp - gn
            d_z[b:2 * b] -= gp
            d_z[2 * b:] += gn

    grads = zero_grads(model.params)
    p = model.params
    d_h2 = affine_backward(fwd["h2"], p["dec2"], d_recon, grads["dec2"])
    d_z_total = affine_backward(fwd["z"], p["dec1"], tanh_backward(fwd["h2"], d_h2),
                                grads["dec1"]) + d_z
    d_h1 = affine_backward(fwd["h1"], p["enc2"], tanh_backward(fwd["z"], d_z_total),
                           grads["enc2"])
    affine_backward(fwd["x"], p["enc1"], tanh_backward(fwd["h1"], d_h1), grads["enc1"])
    return grads


# ---------------------------------------------------------------------------
# PCA + k-means


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray  # (dims, D) rows are principal directions

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.components.T


def fit_pca(x: np.ndarray, dims: int) -> PcaBasis:
    """PCA by SVD of the centered data; sign-fixed (largest-magnitude
    entry of each component positive) so refits are reproducible."""
    x = np.asarray(x, dtype=float)
    dims = min(dims, x.shape[1], x.shape[0])
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    comps = vt[:dims].copy()
    for row in comps:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaBasis(mean, comps)


def kmeans(x: np.ndarray, k: int, seed: int = 0, restarts: int = 5,
           max_iter: int = 100, tol: float = 1e-8):
    """Lloyd's algorithm with k-means++ seeding.

    Runs `restarts` seeded attempts and keeps the lowest inertia.
    Nearest-centroid ties break toward the lowest cluster index;
    convergence when the largest centroid shift drops below `tol`.
    Raises when there are fewer than k distinct points.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} samples, got {n}")
    if np.unique(x, axis=0).shape[0] < k:
        raise ValueError(f"fewer than {k} distinct points; cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centroids = _kmeans_pp_init(x, k, rng)
        for _ in range(max_iter):
            d2 = _sq_dists(x, centroids)
            labels = np.argmin(d2, axis=1)  # argmin returns the lowest index on ties
            new_centroids = centroids.copy()
            for cid in range(k):
                members = labels == cid
                if members.any():
                    new_centroids[cid] = x[members].mean(axis=0)
            shift = np.max(np.linalg.norm(new_centroids - centroids, axis=1))
            centroids = new_centroids
            if shift < tol:
                break
        d2 = _sq_dists(x, centroids)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia)
    return best


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = _sq_dists(x, centroids[:1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining mass collapsed onto chosen centroids; pick any distinct row
            remaining = np.where(d2 > 0)[0]
            pick = remaining[0] if remaining.size else int(rng.integers(n))
        else:
            pick = int(np.searchsorted(np.cumsum(d2 / total), rng.random()))
            pick = min(pick, n - 1)
        centroids[i] = x[pick]
        d2 = np.minimum(d2, _sq_dists(x, centroids[i:i + 1])[:, 0])
    return centroids


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (np.einsum("ij,ij->i", x, x)[:, None]
          + np.einsum("ij,ij->i", centroids, centroids)[None, :]
          - 2.0 * x @ centroids.T)
    return np.maximum(d2, 0.0)


@dataclass
class ClusterModel:
    """PCA basis + k-means centroids, with the training assignment."""

    k: int
    centroids: np.ndarray
    pca: PcaBasis
    labels: np.ndarray = field(repr=False)
    seed: int = 0

    def predict(self, embeddings: np.ndarray) -> np.ndarray:
        proj = self.pca.transform(np.atleast_2d(embeddings))
        return np.argmin(_sq_dists(proj, self.centroids), axis=1)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed,
                "centroids": self.centroids.tolist(),
                "pca_mean": self.pca.mean.tolist(),
                "pca_components": self.pca.components.tolist(),
                "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterModel":
        return cls(k=int(doc["k"]),
                   centroids=np.array(doc["centroids"], dtype=float),
                   pca=PcaBasis(np.array(doc["pca_mean"], dtype=float),
                                np.array(doc["pca_components"], dtype=float)),
                   labels=np.array(doc["labels"], dtype=int),
                   seed=int(doc["seed"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def cluster_states(embeddings: np.ndarray, k: int = 3, pca_dims: int = 8,
                   seed: int = 0, restarts: int = 5) -> ClusterModel:
    """PCA-project state embeddings and k-means them into coarse classes."""
    embeddings = np.asarray(embeddings, dtype=float)
    if embeddings.ndim != 2:
        raise ValueError("embeddings must be (N, dim)")
    if k < 2:
        raise ValueError("k must be >= 2")
    if embeddings.shape[0] < k:
        raise ValueError(f"need at least {k} samples, got {embeddings.shape[0]}")
    pca = fit_pca(embeddings, pca_dims)
    proj = pca.transform(embeddings)
    centroids, labels, _ = kmeans(proj, k, seed=seed, restarts=restarts)
    return ClusterModel(k=k, centroids=centroids, pca=pca, labels=labels, seed=seed)


# ---------------------------------------------------------------------------
# Agreement metrics


def _contingency(labels_y, labels_c) -> np.ndarray:
    ys = np.asarray(labels_y)
    cs = np.asarray(labels_c)
    if ys.shape != cs.shape or ys.ndim != 1:
        raise ValueError("label lists must be 1-D and the same length")
    if ys.size == 0:
        raise ValueError("label lists must be non-empty")
    _, yi = np.unique(ys, return_inverse=True)
    _, ci = np.unique(cs, return_inverse=True)
    table = np.zeros((yi.max() + 1, ci.max() + 1), dtype=float)
    np.add.at(table, (yi, ci), 1.0)
    return table


def nmi(labels_y, labels_c) -> float:
    """Normalized mutual information 2*I(Y,C)/(H(Y)+H(C)), natural logs.

    Both-constant partitions (0/0 in the formula) score 1; when exactly
    one side is constant the mutual information is zero and so is the
    score.
    """
    table = _contingency(labels_y, labels_c)
    n = table.sum()
    p = table / n
    py = p.sum(axis=1)
    pc = p.sum(axis=0)
    h_y = -np.sum(py[py > 0] * np.log(py[py > 0]))
    h_c = -np.sum(pc[pc > 0] * np.log(pc[pc > 0]))
    if h_y + h_c == 0.0:
        return 1.0
    nz = p > 0
    mi = np.sum(p[nz] * (np.log(p[nz]) - np.log(np.outer(py, pc)[nz])))
    return float(np.clip(2.0 * max(mi, 0.0) / (h_y + h_c), 0.0, 1.0))


def cluster_accuracy(labels_y, labels_c) -> float:
    """Per-cluster purity: every predicted cluster counts its overlap with
    its best-matching ground-truth cluster; the overlaps are summed and
    divided by N. Greedy per-cluster maxima, not a one-to-one assignment."""
    table = _contingency(labels_y, labels_c)
    return float(table.max(axis=0).sum() / table.sum())
