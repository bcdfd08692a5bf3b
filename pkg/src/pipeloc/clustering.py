"""Grouping of frequently-confused transmitters and clustering metrics.

Two similarity graphs are supported: the empirical confusion matrix from
repeated noisy localization trials (directed), and the analytic cosine
similarity of the channel response shapes (undirected).  Louvain community
detection turns either binarized graph into a partition; silhouette score and
adjusted Rand index quantify cluster quality and agreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import networkx as nx
import numpy as np
from scipy import signal as sp_signal
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, silhouette_score

CM_BINARIZE_THRESHOLD = 0.05
CSM_BINARIZE_THRESHOLD = 0.95


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row i: fraction of trials with true transmitter i classified as each j.

    Missed detections are excluded from every cell, so rows sum to at most 1.
    """

    matrix: np.ndarray
    n_sim: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise ValueError("confusion rates must lie in [0, 1]")
        if np.any(m.sum(axis=1) > 1.0 + 1e-9):
            raise ValueError("row sums must not exceed 1")


@dataclass(frozen=True)
class Partition:
    """Cluster label per transmitter index."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels",
                           np.asarray(self.labels, dtype=int))

    @property
    def n_clusters(self) -> int:
        return int(np.unique(self.labels).size)

    def same_cluster(self, i: int, j: int) -> bool:
        return bool(self.labels[i] == self.labels[j])


def build_confusion_matrix(simulate: Callable[[int, np.random.Generator],
                                              Optional[int]],
                           n_tx: int, n_sim: int, seed: int) -> ConfusionMatrix:
    """Run ``n_sim`` localization trials per transmitter.

    ``simulate(true_index, rng)`` must return the estimated transmitter
    index, or None for a missed detection.  Trial RNG streams derive from
    ``(seed, true_index, trial)`` so the matrix is reproducible and
    independent of execution order.
    """
    if n_sim < 1:
        raise ValueError("n_sim must be >= 1")
    counts = np.zeros((n_tx, n_tx), dtype=float)
    for i in range(n_tx):
        for trial in range(n_sim):
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, i, trial]))
            j = simulate(i, rng)
            if j is not None:
                counts[i, j] += 1.0
    return ConfusionMatrix(counts / n_sim, n_sim)


def binarize_cm(cm: ConfusionMatrix,
                threshold: float = CM_BINARIZE_THRESHOLD) -> np.ndarray:
    """1 where the confusion rate reaches the threshold, else 0."""
    return (cm.matrix >= threshold).astype(float)


def align_peak(values: np.ndarray, width: int) -> np.ndarray:
    """Place ``values`` into a length-``2*width`` buffer with its peak centered."""
    out = np.zeros(2 * width)
    k = int(np.argmax(values))
    src = np.arange(values.size)
    dst = src + (width - k)
    keep = (dst >= 0) & (dst < out.size)
    out[dst[keep]] = values[src[keep]]
    return out


def build_csm(templates: Sequence[np.ndarray], align: bool = True) -> np.ndarray:
    """Pairwise cosine similarities of the response shapes.

    With ``align=True`` (default) each pair's similarity is maximized over
    integer time lags, matching the shift-invariant decision rule whose
    confusions the matrix is meant to predict.  ``align=False`` evaluates the
    literal zero-lag inner products.
    """
    n = len(templates)
    arrs = [np.asarray(t, dtype=float) for t in templates]
    norms = [float(np.linalg.norm(a)) for a in arrs]
    if any(nm == 0.0 for nm in norms):
        raise ValueError("zero-energy response in bank")
    csm = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            if align:
                xc = sp_signal.fftconvolve(arrs[i], arrs[j][::-1], mode="full")
                num = float(xc.max())
            else:
                k = min(arrs[i].size, arrs[j].size)
                num = float(arrs[i][:k] @ arrs[j][:k])
            csm[i, j] = csm[j, i] = num / (norms[i] * norms[j])
    return csm


def binarize_csm(csm: np.ndarray,
                 threshold: float = CSM_BINARIZE_THRESHOLD) -> np.ndarray:
    """1 where the cosine similarity reaches the threshold, else 0."""
    return (np.asarray(csm) >= threshold).astype(float)


def louvain_partition(adjacency: np.ndarray, directed: bool,
                      seed: int = 0) -> Partition:
    """Modularity-maximizing communities of the (binary) similarity graph.

    Deterministic for a fixed seed; isolated transmitters come out as
    singleton clusters.
    """
    a = np.asarray(adjacency, dtype=float)
    n = a.shape[0]
    graph = nx.DiGraph() if directed else nx.Graph()
    graph.add_nodes_from(range(n))
    for i in range(n):
        for j in range(n):
            if i == j or a[i, j] == 0.0:
                continue
            if directed or j > i or a[j, i] == 0.0:
                graph.add_edge(i, j, weight=a[i, j])
    communities = nx.community.louvain_communities(graph, seed=seed)
    labels = np.empty(n, dtype=int)
    for label, members in enumerate(sorted(communities, key=min)):
        for node in members:
            labels[node] = label
    return Partition(labels)


def shape_distance_matrix(templates: Sequence[np.ndarray]) -> np.ndarray:
    """Squared Euclidean distances between peak-aligned, max-normalized shapes."""
    width = max(np.asarray(t).size for t in templates)
    aligned = []
    for t in templates:
        t = np.asarray(t, dtype=float)
        peak = float(t.max())
        if peak <= 0.0:
            raise ValueError("response with non-positive peak")
        aligned.append(align_peak(t / peak, width))
    n = len(aligned)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.sum((aligned[i] - aligned[j]) ** 2))
            dist[i, j] = dist[j, i] = d
    return dist


def silhouette(partition: Partition, templates: Sequence[np.ndarray]) -> float:
    """Silhouette score of the partition under the shape distance.

    Returns 0.0 for the degenerate cases where the score is undefined:
    fewer than two clusters, every point its own cluster, or zero spread.
    """
    dist = shape_distance_matrix(templates)
    labels = partition.labels
    n = labels.size
    k = partition.n_clusters
    if k < 2 or k >= n or float(dist.max()) == 0.0:
        return 0.0
    return float(silhouette_score(dist, labels, metric="precomputed"))


def adjusted_rand_index(p1: Partition, p2: Partition) -> float:
    """Chance-corrected partition agreement, in [-0.5, 1]."""
    return float(adjusted_rand_score(p1.labels, p2.labels))


def kmeans_baseline(mean_arrival_times: Sequence[float], k: int,
                    seed: int = 0) -> Partition:
    """K-means on the scalar per-transmitter mean arrival times."""
    means = np.asarray(mean_arrival_times, dtype=float).reshape(-1, 1)
    if not 1 <= k <= means.shape[0]:
        raise ValueError("cluster count must be in [1, number of transmitters]")
    km = KMeans(n_clusters=k, init="k-means++", n_init=100, random_state=seed)
    return Partition(km.fit_predict(means))
