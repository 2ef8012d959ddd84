"""
Weighted matching graphs with a single boundary vertex.

Edges carry a fault id and an observable bitmask. Weights are either uniform
or log((1 - q) / q) for a fault of probability q.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from utils import config
from utils.error_handler import DegenerateInputError, MatchingInfeasibleError

BOUNDARY = -1


def probability_to_weight(q: float) -> float:
    """Matching weight log((1 - q) / q) of a fault with probability q"""
    if not 0.0 < q < 0.5:
        raise DegenerateInputError(
            f"Fault probability {q!r} outside (0, 0.5); negative or zero weights are not supported"
        )
    return math.log((1.0 - q) / q)


def quantize_weights(weights: np.ndarray) -> np.ndarray:
    """Integer weights on the 2^-16 grid used for exact comparisons"""
    return np.rint(np.asarray(weights, dtype=np.float64) * config.WEIGHT_SCALE).astype(np.int64)


@dataclass(frozen=True)
class Matching:
    edge_ids: Tuple[int, ...]
    total_weight: float


class MatchGraph:
    """Edge-list graph; node ids 0..num_nodes-1 plus BOUNDARY."""

    def __init__(self, num_nodes: int):
        if num_nodes < 0:
            raise ValueError("num_nodes must be non-negative")
        self.num_nodes = num_nodes
        self._u: List[int] = []
        self._v: List[int] = []
        self._weight: List[float] = []
        self._fault_id: List[int] = []
        self._obs_mask: List[int] = []
        self._frozen = False

    def add_edge(self, u: int, v: int, weight: float = 1.0, fault_id: Optional[int] = None, obs_mask: int = 0) -> int:
        if self._frozen:
            raise RuntimeError("MatchGraph is frozen")
        if u == BOUNDARY:
            u, v = v, u
        if u == BOUNDARY:
            raise ValueError("An edge needs at least one non-boundary endpoint")
        for node in (u, v):
            if node != BOUNDARY and not 0 <= node < self.num_nodes:
                raise ValueError(f"Node {node} out of range [0, {self.num_nodes})")
        if not math.isfinite(weight) or weight < 0:
            raise DegenerateInputError(f"Edge weight {weight!r} must be finite and non-negative")
        eid = len(self._u)
        self._u.append(u)
        self._v.append(v)
        self._weight.append(float(weight))
        self._fault_id.append(eid if fault_id is None else fault_id)
        self._obs_mask.append(int(obs_mask))
        return eid

    def freeze(self) -> "MatchGraph":
        """Materialize numpy arrays; no edges may be added afterwards"""
        self.u = np.asarray(self._u, dtype=np.int64)
        self.v = np.asarray(self._v, dtype=np.int64)
        self.weight = np.asarray(self._weight, dtype=np.float64)
        self.fault_id = np.asarray(self._fault_id, dtype=np.int64)
        self.obs_mask = np.asarray(self._obs_mask, dtype=np.uint64)
        self.quantized = quantize_weights(self.weight)
        self._frozen = True
        return self

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable[Tuple], weight: float = 1.0) -> "MatchGraph":
        """Build from (u, v) or (u, v, weight) tuples"""
        graph = cls(num_nodes)
        for edge in edges:
            if len(edge) == 2:
                graph.add_edge(edge[0], edge[1], weight)
            else:
                graph.add_edge(edge[0], edge[1], edge[2])
        return graph.freeze()

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def num_edges(self) -> int:
        return len(self._u)

    def endpoints(self, eid: int) -> Tuple[int, int]:
        return self._u[eid], self._v[eid]

    def edge_weights(self, selected: np.ndarray) -> np.ndarray:
        """Total weight of each row of a boolean (shots, num_edges) selection"""
        return np.asarray(selected, dtype=np.float64) @ self.weight

    def observable_flips(self, selected: np.ndarray, num_observables: int = 1) -> np.ndarray:
        """Observable parities of each row of a boolean selection"""
        selected = np.asarray(selected, dtype=np.uint8)
        flips = np.zeros((selected.shape[0], num_observables), dtype=bool)
        for k in range(num_observables):
            column = ((self.obs_mask >> np.uint64(k)) & np.uint64(1)).astype(np.uint8)
            flips[:, k] = (selected @ column) % 2 == 1
        return flips

    def check_parity(self, defects: Iterable[int], edge_ids: Iterable[int]) -> bool:
        """True if edge_ids touch every defect oddly and every other node evenly"""
        degree = np.zeros(self.num_nodes, dtype=np.int64)
        for eid in edge_ids:
            u, v = self.endpoints(eid)
            degree[u] += 1
            if v != BOUNDARY:
                degree[v] += 1
        expected = np.zeros(self.num_nodes, dtype=np.int64)
        expected[list(defects)] = 1
        return bool(np.all(degree % 2 == expected))

    def validate_defects(self, defects: Iterable[int]) -> List[int]:
        defects = sorted(set(int(d) for d in defects))
        for node in defects:
            if not 0 <= node < self.num_nodes:
                raise MatchingInfeasibleError(f"Defect {node} is not a node of the graph")
        return defects
