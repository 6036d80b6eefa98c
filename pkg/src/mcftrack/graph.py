"""Detection graph and multi-commodity flow network construction.

A tracking window is encoded as a directed acyclic graph. Every detection i
contributes a node pair (u_i, v_i) joined by an observation edge; permissible
frame-forward transitions contribute edges (v_i, u_j). Each commodity k
(index 0 is the dummy commodity that carries new objects, 1..K follow the
tracked targets) owns a source s_k with start edges into every u_i, a sink
n_k with termination edges out of every v_i, and one bypass edge (s_k, n_k)
so that its demand is always routable even when no detections are claimed.

Edge ids are stable and contiguous: shared edges first (observation edges in
detection order, then transition edges sorted by (i, j)), followed by one
block of 2N+1 edges per commodity (starts, terminations, bypass). Unit
coupling capacity applies to shared edge ids only; bypass edges are exempt
from the binary flow constraint and may carry a commodity's full demand.

Node ids: u_i = 2i, v_i = 2i+1 for detection index i, then s_k = 2N+2k,
n_k = 2N+2k+1, giving 2N + 2(K+1) nodes total.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

Box = tuple[float, float, float, float]  # x, y, w, h (top-left corner)

FEATURE_NORM_TOL = 1e-9


class EdgeKind(IntEnum):
    OBSERVATION = 0
    TRANSITION = 1
    START = 2
    TERMINATION = 3
    BYPASS = 4


@dataclass(frozen=True)
class Detection:
    """One detector response: frame index, box geometry, score, appearance.

    The feature vector must be unit-norm; similarity costs assume it.
    """

    det_id: int
    frame: int
    box: Box
    score: float
    feature: np.ndarray

    def __post_init__(self) -> None:
        x, y, w, h = self.box
        if not (w > 0 and h > 0):
            raise ValueError(f"detection {self.det_id}: nonpositive box size {w}x{h}")
        feat = np.asarray(self.feature, dtype=np.float64)
        if feat.ndim != 1:
            raise ValueError(f"detection {self.det_id}: feature must be 1-D")
        norm = float(np.linalg.norm(feat))
        if abs(norm - 1.0) > FEATURE_NORM_TOL:
            raise ValueError(
                f"detection {self.det_id}: feature norm {norm!r} not unit within {FEATURE_NORM_TOL}"
            )
        feat.flags.writeable = False
        object.__setattr__(self, "feature", feat)
        object.__setattr__(self, "box", (float(x), float(y), float(w), float(h)))

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.box
        return (x + w / 2.0, y + h / 2.0)

    @property
    def diagonal(self) -> float:
        _, _, w, h = self.box
        return math.hypot(w, h)


@dataclass(frozen=True)
class GatingConfig:
    """Transition gating: temporal gap window and spatial reach per gap frame."""

    max_gap: int = 3
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if self.max_gap < 1:
            raise ValueError(f"max_gap must be >= 1, got {self.max_gap}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def permissible_transitions(
    detections: Sequence[Detection], gating: GatingConfig = GatingConfig()
) -> list[tuple[int, int]]:
    """Gated transition pairs (i, j) over detection indices, sorted by (i, j).

    A pair is admitted when 1 <= frame_j - frame_i <= max_gap and the center
    distance is at most gamma * gap * mean box diagonal of the pair.
    """
    _check_frame_sorted(detections)
    pairs: list[tuple[int, int]] = []
    for i, di in enumerate(detections):
        ci = di.center
        for j in range(i + 1, len(detections)):
            dj = detections[j]
            gap = dj.frame - di.frame
            if gap < 1:
                continue
            if gap > gating.max_gap:
                break  # frame-sorted: later j only grows the gap
            cj = dj.center
            reach = gating.gamma * gap * 0.5 * (di.diagonal + dj.diagonal)
            if math.hypot(cj[0] - ci[0], cj[1] - ci[1]) <= reach:
                pairs.append((i, j))
    return pairs


@dataclass
class FlowNetwork:
    """Window DAG with stable edge ids and per-commodity demands.

    tail/head/kind/owner/det_a/det_b are parallel edge arrays. owner is -1
    for shared edges and the commodity index otherwise. det_a holds the
    detection index of observation/start/termination edges and the
    transition tail; det_b holds the transition head (-1 elsewhere).
    """

    detections: list[Detection]
    transitions: list[tuple[int, int]]
    demands: np.ndarray
    tail: np.ndarray
    head: np.ndarray
    kind: np.ndarray
    owner: np.ndarray
    det_a: np.ndarray
    det_b: np.ndarray
    num_shared: int
    _trans_out: list[list[int]] = field(repr=False, default_factory=list)
    _topo: list[int] | None = field(repr=False, default=None)

    # -- shape ---------------------------------------------------------------

    @property
    def num_detections(self) -> int:
        return len(self.detections)

    @property
    def num_commodities(self) -> int:
        """Commodity count including the dummy (K + 1)."""
        return len(self.demands)

    @property
    def num_tracked(self) -> int:
        return self.num_commodities - 1

    @property
    def num_nodes(self) -> int:
        return 2 * self.num_detections + 2 * self.num_commodities

    @property
    def num_edges(self) -> int:
        return len(self.tail)

    # -- id arithmetic -------------------------------------------------------

    def u_node(self, i: int) -> int:
        return 2 * i

    def v_node(self, i: int) -> int:
        return 2 * i + 1

    def source(self, k: int) -> int:
        return 2 * self.num_detections + 2 * k

    def sink(self, k: int) -> int:
        return 2 * self.num_detections + 2 * k + 1

    def block_start(self, k: int) -> int:
        """First edge id of commodity k's private block."""
        return self.num_shared + k * (2 * self.num_detections + 1)

    def start_edge(self, k: int, i: int) -> int:
        return self.block_start(k) + i

    def term_edge(self, k: int, i: int) -> int:
        return self.block_start(k) + self.num_detections + i

    def bypass_edge(self, k: int) -> int:
        return self.block_start(k) + 2 * self.num_detections

    def edges_of(self, k: int) -> range:
        """Edge ids usable by commodity k's paths (shared ids are 0..num_shared-1)."""
        return range(self.block_start(k), self.block_start(k + 1))

    # -- traversal -----------------------------------------------------------

    def out_edges(self, node: int, k: int) -> Iterator[int]:
        """Outgoing edge ids at `node` visible to commodity k, ascending."""
        n = self.num_detections
        if node < 2 * n:
            i = node // 2
            if node % 2 == 0:  # u_i: only the observation edge
                yield i
            else:  # v_i: shared transitions, then this commodity's termination
                yield from self._trans_out[i]
                yield self.term_edge(k, i)
        elif node == self.source(k):
            yield from range(self.block_start(k), self.block_start(k) + n)
            yield self.bypass_edge(k)
        # sinks and other commodities' endpoints have no edges for k

    def topological_order(self) -> list[int]:
        """Deterministic topological order over all nodes (smallest id first).

        Raises ValueError on a cycle, which indicates internal corruption:
        transitions are validated to run strictly forward in frame index.
        """
        if self._topo is not None:
            return self._topo
        indeg = [0] * self.num_nodes
        succ: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for t, h in zip(self.tail.tolist(), self.head.tolist()):
            indeg[h] += 1
            succ[t].append(h)
        ready = [node for node, d in enumerate(indeg) if d == 0]
        heapq.heapify(ready)
        order: list[int] = []
        while ready:
            node = heapq.heappop(ready)
            order.append(node)
            for h in succ[node]:
                indeg[h] -= 1
                if indeg[h] == 0:
                    heapq.heappush(ready, h)
        if len(order) != self.num_nodes:
            raise ValueError("cycle in flow network; graph construction is corrupt")
        self._topo = order
        return order

    def path_detections(self, edges: Sequence[int]) -> list[int]:
        """Detection indices claimed along a path, in path order."""
        return [
            int(self.det_a[e]) for e in edges if self.kind[e] == EdgeKind.OBSERVATION
        ]

    def is_shared(self, edge: int) -> bool:
        return edge < self.num_shared


def _check_frame_sorted(detections: Sequence[Detection]) -> None:
    for a, b in zip(detections, detections[1:]):
        if b.frame < a.frame:
            raise ValueError("detections must be sorted by frame")


def network_from_parts(
    detections: Sequence[Detection],
    transitions: Sequence[tuple[int, int]],
    demands: Sequence[int],
) -> FlowNetwork:
    """Assemble a FlowNetwork from explicit transitions (already gated).

    demands has one entry per commodity, dummy first; tracked demands must
    be exactly 1 and the dummy demand nonnegative.
    """
    detections = list(detections)
    _check_frame_sorted(detections)
    seen_ids = set()
    for det in detections:
        if det.det_id in seen_ids:
            raise ValueError(f"duplicate det_id {det.det_id}")
        seen_ids.add(det.det_id)

    n = len(detections)
    raw = [(int(i), int(j)) for i, j in transitions]
    trans = sorted(set(raw))
    if len(trans) != len(raw):
        raise ValueError("duplicate transition pairs")
    for i, j in trans:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"transition ({i},{j}) out of range")
        if detections[j].frame <= detections[i].frame:
            raise ValueError(f"transition ({i},{j}) does not advance in frame")

    dem = np.asarray(demands, dtype=np.int64)
    if dem.ndim != 1 or len(dem) < 1:
        raise ValueError("demands must be a nonempty 1-D sequence")
    if dem[0] < 0:
        raise ValueError("dummy demand must be nonnegative")
    if any(int(d) != 1 for d in dem[1:]):
        raise ValueError("tracked commodity demands must all be 1")

    num_comm = len(dem)
    num_shared = n + len(trans)
    num_edges = num_shared + num_comm * (2 * n + 1)
    tail = np.empty(num_edges, dtype=np.int64)
    head = np.empty(num_edges, dtype=np.int64)
    kind = np.empty(num_edges, dtype=np.int64)
    owner = np.full(num_edges, -1, dtype=np.int64)
    det_a = np.full(num_edges, -1, dtype=np.int64)
    det_b = np.full(num_edges, -1, dtype=np.int64)

    for i in range(n):
        tail[i], head[i] = 2 * i, 2 * i + 1
        kind[i] = EdgeKind.OBSERVATION
        det_a[i] = i
    for e, (i, j) in enumerate(trans, start=n):
        tail[e], head[e] = 2 * i + 1, 2 * j
        kind[e] = EdgeKind.TRANSITION
        det_a[e], det_b[e] = i, j

    e = num_shared
    for k in range(num_comm):
        s, t = 2 * n + 2 * k, 2 * n + 2 * k + 1
        for i in range(n):
            tail[e], head[e] = s, 2 * i
            kind[e], owner[e], det_a[e] = EdgeKind.START, k, i
            e += 1
        for i in range(n):
            tail[e], head[e] = 2 * i + 1, t
            kind[e], owner[e], det_a[e] = EdgeKind.TERMINATION, k, i
            e += 1
        tail[e], head[e] = s, t
        kind[e], owner[e] = EdgeKind.BYPASS, k
        e += 1

    trans_out: list[list[int]] = [[] for _ in range(n)]
    for eid, (i, _) in enumerate(trans, start=n):
        trans_out[i].append(eid)

    for arr in (tail, head, kind, owner, det_a, det_b):
        arr.flags.writeable = False

    return FlowNetwork(
        detections=detections,
        transitions=trans,
        demands=dem,
        tail=tail,
        head=head,
        kind=kind,
        owner=owner,
        det_a=det_a,
        det_b=det_b,
        num_shared=num_shared,
        _trans_out=trans_out,
    )


def build_network(
    detections: Sequence[Detection],
    trajectories: Sequence[object],
    demands: Sequence[int] | None = None,
    gating: GatingConfig = GatingConfig(),
    new_object_budget: int = 20,
) -> FlowNetwork:
    """Build the window network for K = len(trajectories) tracked commodities.

    demands defaults to [new_object_budget, 1, ..., 1].
    """
    k = len(trajectories)
    if demands is None:
        demands = [new_object_budget] + [1] * k
    elif len(demands) != k + 1:
        raise ValueError(
            f"demands length {len(demands)} != commodity count {k + 1}"
        )
    trans = permissible_transitions(list(detections), gating)
    return network_from_parts(detections, trans, demands)
