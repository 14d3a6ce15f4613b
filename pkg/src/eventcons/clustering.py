"""Temporal clustering of annotation onsets.

Two methods are offered over the one-dimensional onset axis of each
recording: DBSCAN (implemented directly on the sorted onsets) and Ward
agglomerative clustering with an absolute merge-distance threshold. Both are
followed by the same post-processing: at most one annotation per annotator in
a cluster, and a minimum number of distinct annotators per cluster.
"""

from __future__ import annotations

import enum
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .core import Annotation, AnnotationSet, ValidationError, natural_key

log = logging.getLogger(__name__)

DBSCAN_MIN_PTS = 2


class Method(str, enum.Enum):
    DBSCAN = "dbscan"
    AGGLOMERATIVE = "agglomerative"


@dataclass(frozen=True)
class ClusterConfig:
    method: Method = Method.DBSCAN
    epsilon_ms: int = 9664
    min_cluster_annotators: int = 2
    kneedle_sensitivities: tuple[float, ...] = tuple(float(s) for s in range(1, 11))

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "kneedle_sensitivities",
                           tuple(float(s) for s in self.kneedle_sensitivities))
        if self.epsilon_ms <= 0:
            raise ValidationError("epsilon_ms must be positive")
        if self.min_cluster_annotators < 1:
            raise ValidationError("min_cluster_annotators must be >= 1")
        if any(s <= 0 for s in self.kneedle_sensitivities):
            raise ValidationError("kneedle sensitivities must be positive")

    def to_dict(self) -> dict:
        return {"method": self.method.value, "epsilon_ms": self.epsilon_ms,
                "min_cluster_annotators": self.min_cluster_annotators,
                "kneedle_sensitivities": list(self.kneedle_sensitivities)}


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    recording_id: str
    members: tuple[Annotation, ...]

    @property
    def centroid_ms(self) -> float:
        return float(np.mean([a.onset_ms for a in self.members]))

    @property
    def annotator_count(self) -> int:
        return len({a.annotator_id for a in self.members})

    @property
    def annotator_ids(self) -> set[str]:
        return {a.annotator_id for a in self.members}

    @property
    def length_ms(self) -> int:
        onsets = [a.onset_ms for a in self.members]
        return max(onsets) - min(onsets)

    def to_dict(self) -> dict:
        return {"id": self.cluster_id, "recording_id": self.recording_id,
                "centroid_ms": self.centroid_ms,
                "members": [a.to_dict() for a in self.members]}


@dataclass(frozen=True)
class Clustering:
    clusters: tuple[Cluster, ...]
    noise: tuple[Annotation, ...]
    config: ClusterConfig
    annotators: tuple[str, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def n_annotations(self) -> int:
        return sum(len(c.members) for c in self.clusters) + len(self.noise)

    def universe(self) -> list[Annotation]:
        out = [a for c in self.clusters for a in c.members] + list(self.noise)
        return sorted(out, key=Annotation.sort_key)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "annotators": list(self.annotators),
            "clusters": [c.to_dict() for c in self.clusters],
            "noise": [a.to_dict() for a in sorted(self.noise, key=Annotation.sort_key)],
            "metadata": self.metadata,
        }


# --- knee detection ----------------------------------------------------------

def _normalize(v: np.ndarray) -> np.ndarray:
    span = v.max() - v.min()
    return (v - v.min()) / span if span > 0 else np.zeros_like(v)


def find_knee(x: Sequence[float], y: Sequence[float], sensitivity: float = 1.0,
              curve: str = "convex", direction: str = "increasing") -> int | None:
    """Index of the Kneedle knee of ``y(x)``, or ``None`` when there is none.

    The first knee encountered while scanning the difference curve is
    returned (offline mode). Larger ``sensitivity`` demands a larger drop
    after a local maximum of the difference curve before declaring a knee.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3 or len(y) != n:
        return None
    xn, yn = _normalize(x), _normalize(y)
    flipped = (curve, direction) in {("convex", "increasing"), ("concave", "decreasing")}
    if flipped:
        xn = 1.0 - xn[::-1]
        yn = yn[::-1]
    if curve == "convex":
        yn = 1.0 - yn
    diff = yn - xn
    if np.max(np.abs(diff)) < 1e-12:
        return None

    is_max = np.zeros(n, dtype=bool)
    is_min = np.zeros(n, dtype=bool)
    for i in range(n):
        left = diff[i - 1] if i > 0 else -np.inf
        right = diff[i + 1] if i < n - 1 else -np.inf
        is_max[i] = diff[i] >= left and diff[i] >= right
        left = diff[i - 1] if i > 0 else np.inf
        right = diff[i + 1] if i < n - 1 else np.inf
        is_min[i] = diff[i] <= left and diff[i] <= right
    # endpoints are not extrema candidates
    is_max[[0, -1]] = False
    is_min[[0, -1]] = False
    maxima = np.flatnonzero(is_max)
    if maxima.size == 0:
        return None
    step = np.abs(np.diff(xn)).mean()

    threshold = None
    threshold_index = None
    for i in range(maxima[0], n - 1):
        if is_max[i]:
            threshold = diff[i] - sensitivity * step
            threshold_index = i
        if is_min[i]:
            threshold = 0.0
        if threshold is not None and diff[i + 1] < threshold:
            return n - 1 - threshold_index if flipped else int(threshold_index)
    return None


def k_distance_curve(aset: AnnotationSet) -> np.ndarray:
    """Ascending distances from each onset to its nearest neighbour in the same recording."""
    dists: list[np.ndarray] = []
    for anns in aset.by_recording().values():
        t = np.sort(np.array([a.onset_ms for a in anns], dtype=float))
        if len(t) < 2:
            continue
        gaps = np.diff(t)
        left = np.concatenate([[np.inf], gaps])
        right = np.concatenate([gaps, [np.inf]])
        dists.append(np.minimum(left, right))
    if not dists:
        return np.array([])
    return np.sort(np.concatenate(dists))


def kneedle_epsilon(aset: AnnotationSet,
                    sensitivities: Sequence[float]) -> list[tuple[float, int]]:
    """Candidate DBSCAN radii: the knee of the 1-distance curve for each sensitivity.

    Sensitivities without a knee are left out of the result and logged.
    """
    curve = k_distance_curve(aset)
    if len(curve) < 3:
        raise ValidationError("need at least 3 annotations with a neighbour for knee detection")
    x = np.arange(len(curve), dtype=float)
    out = []
    for s in sensitivities:
        idx = find_knee(x, curve, float(s), curve="convex", direction="increasing")
        if idx is None:
            log.warning("no knee found for sensitivity S=%g", s)
            continue
        out.append((float(s), int(round(curve[idx]))))
    return out


# --- clustering ----------------------------------------------------------------

def _dbscan_labels(onsets: np.ndarray, eps: float, min_pts: int = DBSCAN_MIN_PTS) -> np.ndarray:
    """DBSCAN on sorted 1-D data; -1 marks noise."""
    n = len(onsets)
    labels = np.full(n, -1)
    if n == 0:
        return labels
    # neighbourhood (inclusive of self) of each point via two binary searches
    lo = np.searchsorted(onsets, onsets - eps, side="left")
    hi = np.searchsorted(onsets, onsets + eps, side="right")
    core = (hi - lo) >= min_pts
    cid = -1
    prev_core = None
    for i in np.flatnonzero(core):
        if prev_core is None or onsets[i] - onsets[prev_core] > eps:
            cid += 1
        labels[i] = cid
        prev_core = i
    # border points join the nearest core's cluster (the earlier one on ties)
    core_idx = np.flatnonzero(core)
    for i in np.flatnonzero(~core):
        if core_idx.size == 0:
            break
        j = np.searchsorted(onsets[core_idx], onsets[i])
        best = None
        for c in (j - 1, j):
            if 0 <= c < core_idx.size:
                d = abs(onsets[core_idx[c]] - onsets[i])
                if d <= eps and (best is None or d < best[0]):
                    best = (d, core_idx[c])
        if best is not None:
            labels[i] = labels[best[1]]
    return labels


def _ward_labels(onsets: np.ndarray, threshold: float) -> np.ndarray:
    n = len(onsets)
    if n == 0:
        return np.array([], dtype=int)
    if n == 1:
        return np.array([0])
    z = linkage(onsets.reshape(-1, 1), method="ward")
    # merges happen only below the threshold (strict)
    return fcluster(z, t=np.nextafter(threshold, -np.inf), criterion="distance") - 1


def _postprocess(groups: list[list[Annotation]], min_annotators: int):
    """Keep one member per annotator (nearest to the provisional centroid) and drop small clusters."""
    kept: list[list[Annotation]] = []
    noise: list[Annotation] = []
    dedupe_demoted = 0
    for members in groups:
        centroid = float(np.mean([a.onset_ms for a in members]))
        by_ann: dict[str, list[Annotation]] = {}
        for a in members:
            by_ann.setdefault(a.annotator_id, []).append(a)
        chosen = []
        for anns in by_ann.values():
            anns = sorted(anns, key=lambda a: (abs(a.onset_ms - centroid), a.onset_ms))
            chosen.append(anns[0])
            noise.extend(anns[1:])
            dedupe_demoted += len(anns) - 1
        if len(chosen) >= min_annotators:
            kept.append(sorted(chosen, key=Annotation.sort_key))
        else:
            noise.extend(chosen)
    return kept, noise, dedupe_demoted


def _cluster(aset: AnnotationSet, config: ClusterConfig) -> Clustering:
    aset.require_nonempty()
    provisional: list[tuple[str, list[Annotation]]] = []
    noise: list[Annotation] = []
    for rec, anns in aset.by_recording().items():
        if not anns:
            continue
        anns = sorted(anns, key=lambda a: (a.onset_ms, natural_key(a.annotator_id)))
        onsets = np.array([a.onset_ms for a in anns], dtype=float)
        if config.method is Method.DBSCAN:
            labels = _dbscan_labels(onsets, config.epsilon_ms)
        else:
            labels = _ward_labels(onsets, config.epsilon_ms)
        groups: dict[int, list[Annotation]] = {}
        for a, lab in zip(anns, labels):
            if lab < 0:
                noise.append(a)
            else:
                groups.setdefault(int(lab), []).append(a)
        provisional.extend((rec, g) for g in groups.values())

    kept, demoted, n_dedupe = _postprocess([g for _, g in provisional],
                                           config.min_cluster_annotators)
    noise.extend(demoted)
    ordered = sorted(kept, key=lambda m: (natural_key(m[0].recording_id),
                                          float(np.mean([a.onset_ms for a in m]))))
    clusters = tuple(Cluster(i, m[0].recording_id, tuple(m)) for i, m in enumerate(ordered))
    meta = {"provisional_clusters": len(provisional), "dedupe_demoted": n_dedupe,
            "dbscan_min_pts": DBSCAN_MIN_PTS if config.method is Method.DBSCAN else None}
    return Clustering(clusters, tuple(sorted(noise, key=Annotation.sort_key)), config,
                      aset.annotators, meta)


def cluster_dbscan(aset: AnnotationSet, config: ClusterConfig) -> Clustering:
    """1-D DBSCAN (radius ``epsilon_ms``, minPts 2) per recording, then post-processing."""
    return _cluster(aset, ClusterConfig(Method.DBSCAN, config.epsilon_ms,
                                        config.min_cluster_annotators,
                                        config.kneedle_sensitivities))


def cluster_agglomerative(aset: AnnotationSet, config: ClusterConfig) -> Clustering:
    """Ward clustering per recording; merging stops at Ward distance >= ``epsilon_ms``."""
    return _cluster(aset, ClusterConfig(Method.AGGLOMERATIVE, config.epsilon_ms,
                                        config.min_cluster_annotators,
                                        config.kneedle_sensitivities))


def cluster(aset: AnnotationSet, config: ClusterConfig) -> Clustering:
    return _cluster(aset, config)


def restrict_clusters(c: Clustering, keep_ids: set[int]) -> Clustering:
    """Copy of ``c`` where clusters not in ``keep_ids`` are dissolved into noise."""
    kept = tuple(cl for cl in c.clusters if cl.cluster_id in keep_ids)
    dropped = [a for cl in c.clusters if cl.cluster_id not in keep_ids for a in cl.members]
    noise = tuple(sorted(list(c.noise) + dropped, key=Annotation.sort_key))
    return Clustering(kept, noise, c.config, c.annotators, dict(c.metadata))


# --- statistics ------------------------------------------------------------------

@dataclass
class ClusterStats:
    n_clustered: int = 0
    n_noise: int = 0
    n_clusters: int = 0
    cluster_lengths_ms: list[int] = field(default_factory=list)
    own_centroid_distances_ms: list[float] = field(default_factory=list)
    neighbor_centroid_distances_ms: list[float] = field(default_factory=list)
    annotator_participation: dict[str, float] = field(default_factory=dict)
    size_histogram: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["size_histogram"] = {str(k): v for k, v in sorted(self.size_histogram.items())}
        return d


def clustering_statistics(c: Clustering) -> ClusterStats:
    st = ClusterStats()
    st.n_noise = len(c.noise)
    st.n_clusters = len(c.clusters)
    st.n_clustered = sum(len(cl.members) for cl in c.clusters)
    st.annotator_participation = {k: 0.0 for k in c.annotators}
    if not c.clusters:
        return st
    centroids: dict[str, list[float]] = {}
    for cl in c.clusters:
        centroids.setdefault(cl.recording_id, []).append(cl.centroid_ms)
    for cl in c.clusters:
        st.cluster_lengths_ms.append(cl.length_ms)
        own = cl.centroid_ms
        others = [x for x in centroids[cl.recording_id] if x != own]
        for a in cl.members:
            st.own_centroid_distances_ms.append(abs(a.onset_ms - own))
            if others:
                st.neighbor_centroid_distances_ms.append(min(abs(a.onset_ms - x) for x in others))
    counts = Counter(k for cl in c.clusters for k in cl.annotator_ids)
    st.annotator_participation = {k: counts.get(k, 0) / len(c.clusters) for k in c.annotators}
    st.size_histogram = dict(sorted(Counter(len(cl.members) for cl in c.clusters).items()))
    return st


def cluster_labels(c: Clustering) -> dict[tuple, int]:
    """Label per annotation key; each noise annotation gets its own negative label."""
    labels: dict[tuple, int] = {}
    for cl in c.clusters:
        for a in cl.members:
            labels[a.key] = cl.cluster_id
    for i, a in enumerate(sorted(c.noise, key=Annotation.sort_key)):
        labels[a.key] = -(i + 1)
    return labels


def compare_clusterings(a: Clustering, b: Clustering) -> tuple[float, float]:
    """(ARI, NMI) between two clusterings of the same annotations; noise points are singletons."""
    la, lb = cluster_labels(a), cluster_labels(b)
    if set(la) != set(lb):
        raise ValidationError("clusterings cover different annotation universes")
    keys = sorted(la)
    ya = [la[k] for k in keys]
    yb = [lb[k] for k in keys]
    with warnings.catch_warnings():
        # many singleton noise labels trip sklearn's label-type heuristic
        warnings.simplefilter("ignore", UserWarning)
        return float(adjusted_rand_score(ya, yb)), float(normalized_mutual_info_score(ya, yb))
