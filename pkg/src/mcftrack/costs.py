"""Edge cost assembly for the window network.

Tracked commodities price detections by learned bilinear similarity against
the trajectory template, transitions by pairwise bilinear similarity, and
starts by a decayed overlap between the trajectory's constant-velocity
prediction and the candidate box. The dummy commodity prices detections by
negated detector score, transitions by cosine similarity, and starts by a
flat constant. Termination is a flat constant for every commodity. Bypass
costs are the price of leaving a commodity's demand unrouted; they are
configuration, not part of the published cost model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .graph import Box, Detection, EdgeKind, FlowNetwork
from .simlearn import SimilarityModel, similarity


class TrackLike(Protocol):
    """What cost assembly needs from a trajectory."""

    last_box: Box
    last_frame: int
    velocity: tuple[float, float]
    template: np.ndarray
    model: SimilarityModel


@dataclass(frozen=True)
class CostConfig:
    """Cost constants. eta is the per-frame start-cost decay in (0, 1]."""

    eta: float = 0.95
    termination_cost: float = 10.0
    dummy_start_cost: float = 10.0
    bypass_cost_tracked: float = 5.0
    bypass_cost_dummy: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")


@dataclass(frozen=True)
class CostVector:
    """Dense per-edge costs for one commodity over a window network."""

    commodity: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def predict_box(traj: TrackLike, frame: int) -> Box:
    """Constant-velocity extrapolation of the last associated box.

    Only forward prediction is defined; frame must exceed the trajectory's
    last associated frame.
    """
    gap = frame - traj.last_frame
    if gap <= 0:
        raise ValueError(
            f"prediction frame {frame} not after last associated frame {traj.last_frame}"
        )
    x, y, w, h = traj.last_box
    vx, vy = traj.velocity
    return (x + vx * gap, y + vy * gap, w, h)


def observation_cost(traj: TrackLike, det: Detection) -> float:
    """Negated bilinear similarity of the template to the detection feature."""
    return -similarity(traj.model, traj.template, det.feature)


def dummy_observation_cost(det: Detection) -> float:
    return -det.score


def transition_cost(traj: TrackLike, det_i: Detection, det_j: Detection) -> float:
    return -similarity(traj.model, det_i.feature, det_j.feature)


def dummy_transition_cost(det_i: Detection, det_j: Detection) -> float:
    """Negated cosine similarity; features are unit-norm so this is a dot."""
    return -float(det_i.feature @ det_j.feature)


def start_cost(traj: TrackLike, det: Detection, config: CostConfig) -> float:
    """-eta**gap * IoU(prediction, detection box); 0 when they miss entirely."""
    gap = det.frame - traj.last_frame
    if gap < 1:
        raise ValueError(
            f"start candidate at frame {det.frame} does not follow frame {traj.last_frame}"
        )
    overlap = iou(predict_box(traj, det.frame), det.box)
    return -(config.eta**gap) * overlap


def assemble_cost_vector(
    network: FlowNetwork,
    commodity: int,
    trajectories: Sequence[TrackLike],
    config: CostConfig = CostConfig(),
) -> CostVector:
    """Dense cost vector over every edge id for one commodity.

    Entries on edges a commodity can never traverse (other commodities'
    start/termination edges) are filled by the same kind-wise rules; they are
    inert because pricing and path enumeration never visit them.
    """
    if not (0 <= commodity < network.num_commodities):
        raise ValueError(f"commodity {commodity} out of range")
    if len(trajectories) != network.num_tracked:
        raise ValueError(
            f"{len(trajectories)} trajectories for {network.num_tracked} tracked commodities"
        )
    dets = network.detections
    n = len(dets)
    values = np.zeros(network.num_edges, dtype=np.float64)

    if n:
        feats = np.stack([d.feature for d in dets])
        if commodity == 0:
            obs = -np.array([d.score for d in dets], dtype=np.float64)
            gram = feats @ feats.T
            starts = np.full(n, config.dummy_start_cost)
        else:
            traj = trajectories[commodity - 1]
            w = traj.model.W
            obs = -(feats @ (w.T @ traj.template))
            gram = feats @ w @ feats.T
            starts = np.array(
                [start_cost(traj, d, config) for d in dets], dtype=np.float64
            )
        values[:n] = obs
        for eid, (i, j) in enumerate(network.transitions, start=n):
            values[eid] = -gram[i, j]
        start_mask = network.kind == EdgeKind.START
        values[start_mask] = starts[network.det_a[start_mask]]

    values[network.kind == EdgeKind.TERMINATION] = config.termination_cost
    values[network.kind == EdgeKind.BYPASS] = (
        config.bypass_cost_dummy if commodity == 0 else config.bypass_cost_tracked
    )
    return CostVector(commodity=commodity, values=values)
