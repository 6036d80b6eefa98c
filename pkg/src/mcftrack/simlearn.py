"""Online bilinear similarity learning with passive-aggressive updates.

The similarity between unit feature vectors a and b is the bilinear form
a^T W b. W starts at the identity (cosine similarity) and is adapted online
from triplets (anchor, positive, negative): the anchored hinge loss

    L = max(0, 1 - a^T W a_pos + a^T W a_neg)

is driven to zero by the smallest Frobenius step, clipped by the
aggressiveness C:

    V = outer(a, a_pos - a_neg),  alpha = min(C, L / ||V||_F^2),  W += alpha V.

Each applied update is rank one. alpha = L / ||V||_F^2 is the exact
minimizer of ||W' - W||_F^2 / 2 subject to zero loss; the C clip bounds the
step against noisy triplets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class DegenerateTripletError(ValueError):
    """Positive loss with a zero update direction (positive == negative)."""


def _as_unit_vector(name: str, vec: np.ndarray, dim: int) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise ValueError(f"{name} must be a 1-D vector of length {dim}")
    return arr


@dataclass(frozen=True)
class Triplet:
    """Anchor with a should-match positive and a should-not-match negative."""

    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.anchor, dtype=np.float64)
        p = _as_unit_vector("positive", self.positive, a.shape[0])
        n = _as_unit_vector("negative", self.negative, a.shape[0])
        if a.ndim != 1:
            raise ValueError("anchor must be a 1-D vector")
        object.__setattr__(self, "anchor", a)
        object.__setattr__(self, "positive", p)
        object.__setattr__(self, "negative", n)


@dataclass
class SimilarityModel:
    """Bilinear similarity a^T W b with per-model aggressiveness C."""

    W: np.ndarray
    aggressiveness: float = 0.1
    update_count: int = 0

    def __post_init__(self) -> None:
        w = np.array(self.W, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"W must be square, got shape {w.shape}")
        if self.aggressiveness <= 0:
            raise ValueError(f"aggressiveness must be positive, got {self.aggressiveness}")
        self.W = w

    @classmethod
    def identity(cls, dim: int, aggressiveness: float = 0.1) -> "SimilarityModel":
        return cls(W=np.eye(dim), aggressiveness=aggressiveness)

    @property
    def dim(self) -> int:
        return self.W.shape[0]


def similarity(model: SimilarityModel, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.asarray(a, dtype=np.float64) @ model.W @ np.asarray(b, dtype=np.float64))


def hinge_loss(model: SimilarityModel, triplet: Triplet) -> float:
    margin = similarity(model, triplet.anchor, triplet.positive) - similarity(
        model, triplet.anchor, triplet.negative
    )
    return max(0.0, 1.0 - margin)


def pa_update(
    model: SimilarityModel, triplet: Triplet
) -> tuple[SimilarityModel, float]:
    """Apply one passive-aggressive step in place; returns (model, alpha).

    No-op exactly when the triplet already satisfies the unit margin.
    Raises DegenerateTripletError when the loss is positive but the update
    direction vanishes (positive equals negative).
    """
    loss = hinge_loss(model, triplet)
    if loss <= 0.0:
        return model, 0.0
    delta = triplet.positive - triplet.negative
    # ||outer(a, delta)||_F^2 factorizes; no need to materialize V for the norm.
    vnorm = float(triplet.anchor @ triplet.anchor) * float(delta @ delta)
    if vnorm <= 0.0:
        raise DegenerateTripletError(
            "positive == negative: loss is positive but the step direction is zero"
        )
    alpha = min(model.aggressiveness, loss / vnorm)
    model.W += alpha * np.outer(triplet.anchor, delta)
    model.update_count += 1
    return model, alpha


def update_model(
    model: SimilarityModel, triplets: Iterable[Triplet]
) -> SimilarityModel:
    """Apply triplets strictly in the given order."""
    for triplet in triplets:
        pa_update(model, triplet)
    return model


def build_triplets(
    trajectories: Sequence[object], associations: Mapping[int, np.ndarray]
) -> dict[int, list[Triplet]]:
    """Per-trajectory triplet sets from one frame's co-associations.

    associations maps trajectory index -> the feature newly associated to it.
    Trajectory k's set pairs its template (anchor) and new feature (positive)
    against every other associated feature (negatives), in index order. Fewer
    than two associations yield no triplets.
    """
    keys = sorted(associations)
    out: dict[int, list[Triplet]] = {}
    for k in keys:
        anchor = trajectories[k].template  # type: ignore[attr-defined]
        positive = associations[k]
        out[k] = [
            Triplet(anchor=anchor, positive=positive, negative=associations[l])
            for l in keys
            if l != k
        ]
    return out


_HEADER = struct.Struct("<I d")  # dim, aggressiveness


def save_model(model: SimilarityModel, path: str) -> None:
    """Binary snapshot: uint32 dim, float64 C, row-major float64 W."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(model.dim, model.aggressiveness))
        fh.write(np.ascontiguousarray(model.W, dtype="<f8").tobytes())


def load_model(path: str) -> SimilarityModel:
    """Inverse of save_model. update_count is not persisted and restarts at 0."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"model snapshot {path!r} is truncated")
    dim, aggressiveness = _HEADER.unpack_from(blob)
    expected = _HEADER.size + 8 * dim * dim
    if len(blob) != expected:
        raise ValueError(
            f"model snapshot {path!r} has {len(blob)} bytes, expected {expected}"
        )
    w = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(dim, dim)
    return SimilarityModel(W=w.copy(), aggressiveness=aggressiveness)
