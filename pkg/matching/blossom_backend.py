import logging
from typing import Dict, Iterable, Tuple

import numpy as np
import pymatching

from matching.base import MatchingBackend
from matching.graph import BOUNDARY, MatchGraph, Matching
from utils.error_handler import MatchingInfeasibleError

logger = logging.getLogger(__name__)


class SparseBlossomBackend(MatchingBackend):
    """pymatching sparse blossom; every MatchGraph edge is its own fault id."""

    name = "sparse_blossom"

    def __init__(self, graph: MatchGraph):
        super().__init__(graph)
        # Parallel edges collapse to the lightest one, lowest id on ties
        best: Dict[Tuple[int, int], Tuple[int, int]] = {}
        for eid in range(graph.num_edges):
            u, v = graph.endpoints(eid)
            if u == v:
                continue
            key = (u, v) if v == BOUNDARY else (min(u, v), max(u, v))
            candidate = (int(graph.quantized[eid]), eid)
            if key not in best or candidate < best[key]:
                best[key] = candidate

        self._matching = pymatching.Matching()
        for (u, v), (_, eid) in sorted(best.items(), key=lambda item: item[1][1]):
            if v == BOUNDARY:
                self._matching.add_boundary_edge(
                    u, fault_ids={eid}, weight=float(graph.weight[eid]), merge_strategy="disallow"
                )
            else:
                self._matching.add_edge(
                    u, v, fault_ids={eid}, weight=float(graph.weight[eid]), merge_strategy="disallow"
                )
        self._width = self._matching.num_detectors if best else 0

    def solve(self, defects: Iterable[int]) -> Matching:
        defects = self.graph.validate_defects(defects)
        syndrome = np.zeros((1, self.graph.num_nodes), dtype=bool)
        syndrome[0, defects] = True
        selected, weights = self.solve_batch(syndrome)
        return Matching(edge_ids=tuple(np.flatnonzero(selected[0]).tolist()), total_weight=float(weights[0]))

    def solve_batch(self, syndromes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        syndromes = np.asarray(syndromes, dtype=bool)
        shots = syndromes.shape[0]
        selected = np.zeros((shots, self.graph.num_edges), dtype=bool)

        if syndromes[:, self._width:].any():
            raise MatchingInfeasibleError("Defect on a node without incident edges")

        active = np.flatnonzero(syndromes[:, :self._width].any(axis=1)) if self._width else np.array([], dtype=np.int64)
        if active.size:
            try:
                predictions = self._matching.decode_batch(
                    syndromes[active, :self._width].astype(np.uint8)
                )
            except (ValueError, RuntimeError) as e:
                raise MatchingInfeasibleError(f"Sparse blossom found no perfect matching: {e}")
            width = min(predictions.shape[1], self.graph.num_edges)
            selected[active, :width] = predictions[:, :width].astype(bool)

        return selected, self.graph.edge_weights(selected)
