"""Mood from emotions: average the per-message probabilities of a time window,
then cluster the averages with K-means (K=2) and name the clusters GOOD/BAD
by how much positive versus negative emotion mass their centroids carry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import erc
from .corpus import LabelSet, Mood, MoodGroup
from .errors import InputError


def aggregate_logits(logits) -> np.ndarray:
    """Component-wise mean of N equal-length probability vectors."""
    try:
        x = np.asarray(logits, dtype=np.float64)
    except ValueError:
        raise InputError("all logit vectors must have the same length") from None
    if x.ndim != 2:
        raise InputError(f"expected a 2-d array of logit vectors, got shape {x.shape}")
    if x.shape[0] == 0:
        raise InputError("cannot aggregate an empty group")
    return x.sum(axis=0) / x.shape[0]


def load_polarity(path=None) -> dict[str, int]:
    """Label-name polarity map (+1 positive, -1 negative, 0 neutral)."""
    if path is None:
        text = resources.files("leapmood.data").joinpath("polarity.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    for k, v in raw.items():
        if v not in (-1, 0, 1):
            raise InputError(f"polarity of {k!r} must be -1, 0 or +1")
    return raw


def polarity_by_id(names: Mapping[str, int], labels: LabelSet) -> dict[int, int]:
    missing = [n for n in labels.names if n not in names]
    if missing:
        raise InputError(f"polarity map is missing labels {missing}")
    return {i: int(names[n]) for i, n in enumerate(labels.names)}


@dataclass
class KMeansModel:
    centroids: np.ndarray  # (k, M)
    assignments: np.ndarray  # (n,)
    inertia: float
    seed: int = 0
    inertia_history: list[float] = field(default_factory=list)
    cluster_to_mood: dict[int, Mood] = field(default_factory=dict)
    polarity: dict[int, int] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def nearest(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.argmin(_sq_dist(p, self.centroids), axis=1)

    def mood_of(self, vector) -> Mood:
        return self.cluster_to_mood[int(self.nearest(vector)[0])]

    def to_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "cluster_to_mood": {str(k): v.value for k, v in sorted(self.cluster_to_mood.items())},
            "polarity": {str(k): v for k, v in sorted(self.polarity.items())},
            "seed": self.seed,
            "inertia": self.inertia,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "KMeansModel":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            centroids=np.asarray(d["centroids"], dtype=np.float64),
            assignments=np.zeros(0, dtype=np.int64),
            inertia=float(d["inertia"]),
            seed=int(d["seed"]),
            cluster_to_mood={int(k): Mood(v) for k, v in d["cluster_to_mood"].items()},
            polarity={int(k): int(v) for k, v in d["polarity"].items()},
        )


def _sq_dist(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(points, k, rng):
    n = len(points)
    centers = [points[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = _sq_dist(points, np.array(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            # every point coincides with a chosen center
            centers.append(points[int(np.argmax(d2))])
        else:
            centers.append(points[int(rng.choice(n, p=d2 / total))])
    return np.array(centers, dtype=np.float64)


def kmeans_fit(points, k: int = 2, seed: int = 0, max_iters: int = 300, tol: float = 1e-10) -> KMeansModel:
    """Lloyd's algorithm from k-means++ seeds.

    An empty cluster is re-seeded to the point farthest from its assigned
    centroid, which never increases the inertia.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("points must form a 2-D array")
    if k < 1:
        raise InputError("k must be >= 1")
    if len(x) < k:
        raise InputError(f"need at least k={k} points, got {len(x)}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k, rng)
    history = []
    for _ in range(max_iters):
        d2 = _sq_dist(x, centroids)
        assign = np.argmin(d2, axis=1)
        for c in range(k):
            if not np.any(assign == c):
                far = int(np.argmax(d2[np.arange(len(x)), assign]))
                centroids[c] = x[far]
                d2 = _sq_dist(x, centroids)
                assign = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), assign].sum()))
        new = np.array([x[assign == c].mean(axis=0) if np.any(assign == c) else centroids[c] for c in range(k)])
        shift = float(np.max(np.abs(new - centroids)))
        centroids = new
        if shift < tol:
            break
    d2 = _sq_dist(x, centroids)
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(x)), assign].sum())
    history.append(inertia)
    return KMeansModel(centroids, assign, inertia, seed, history)


def label_clusters(model: KMeansModel, polarity: Mapping[int, int]) -> dict[int, Mood]:
    """GOOD for the single highest-polarity centroid, BAD for the rest.

    If the top score is shared, no cluster is GOOD.
    """
    M = model.centroids.shape[1]
    missing = [i for i in range(M) if i not in polarity]
    if missing:
        raise InputError(f"polarity map is missing label ids {missing}")
    weights = np.array([polarity[i] for i in range(M)], dtype=np.float64)
    scores = model.centroids @ weights
    best = np.max(scores)
    winners = np.nonzero(scores == best)[0]
    mapping = {c: Mood.BAD for c in range(model.k)}
    if len(winners) == 1:
        mapping[int(winners[0])] = Mood.GOOD
    model.cluster_to_mood = mapping
    model.polarity = dict(polarity)
    return mapping


def group_aggregates(groups: Sequence[MoodGroup], model, encoder) -> np.ndarray:
    """Mean emotion-probability vector of each group, via the emotion model."""
    encoded = [encoder.encode_texts(g.texts) for g in groups]
    return np.array([aggregate_logits(probs) for probs, _ in erc.predict_many(model, encoded)])


def fit_mood_model(groups: Sequence[MoodGroup], model, encoder, polarity: Mapping[int, int],
                   k: int = 2, seed: int = 0) -> KMeansModel:
    km = kmeans_fit(group_aggregates(groups, model, encoder), k=k, seed=seed)
    label_clusters(km, polarity)
    return km


def predict_mood(group: MoodGroup, model, km: KMeansModel, encoder) -> Mood:
    if len(group.messages) == 0:
        raise InputError("cannot predict the mood of an empty group")
    probs, _ = erc.predict(model, encoder.encode_texts(group.texts))
    return km.mood_of(aggregate_logits(probs))
