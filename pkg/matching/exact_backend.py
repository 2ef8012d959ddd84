import logging
from typing import Dict, Iterable, Tuple

import networkx as nx

from matching.base import MatchingBackend
from matching.graph import BOUNDARY, MatchGraph, Matching
from utils.error_handler import MatchingInfeasibleError

logger = logging.getLogger(__name__)


class ExactMatchingBackend(MatchingBackend):
    """Blossom matching on the metric closure of the defects (networkx).

    Weights are compared on the integer 2^-16 grid. Each defect gets a private
    copy of the boundary vertex, and copies pair with each other at zero cost,
    so any number of defects can leave through the boundary.
    """

    name = "exact"

    def __init__(self, graph: MatchGraph):
        super().__init__(graph)
        self._boundary = graph.num_nodes

        # Parallel edges collapse to the lightest one, lowest id on ties
        best: Dict[Tuple[int, int], Tuple[int, int]] = {}
        for eid in range(graph.num_edges):
            u, v = graph.endpoints(eid)
            if v == BOUNDARY:
                v = self._boundary
            if u == v:
                continue
            key = (min(u, v), max(u, v))
            candidate = (int(graph.quantized[eid]), eid)
            if key not in best or candidate < best[key]:
                best[key] = candidate

        self._pair_edge = {key: eid for key, (_, eid) in best.items()}
        self._nx = nx.Graph()
        self._nx.add_nodes_from(range(graph.num_nodes + 1))
        for key in sorted(best):
            self._nx.add_edge(key[0], key[1], weight=best[key][0])

    def solve(self, defects: Iterable[int]) -> Matching:
        defects = self.graph.validate_defects(defects)
        if not defects:
            return Matching(edge_ids=(), total_weight=0.0)

        k = len(defects)
        distances = []
        paths = []
        for node in defects:
            lengths, node_paths = nx.single_source_dijkstra(self._nx, node, weight="weight")
            distances.append(lengths)
            paths.append(node_paths)

        # Defects are 0..k-1, their boundary copies k..2k-1
        closure = []
        for i in range(k):
            for j in range(i + 1, k):
                if defects[j] in distances[i]:
                    closure.append((i, j, distances[i][defects[j]]))
            if self._boundary in distances[i]:
                closure.append((i, k + i, distances[i][self._boundary]))
            for j in range(i + 1, k):
                closure.append((k + i, k + j, 0))

        ceiling = max((w for _, _, w in closure), default=0) + 1
        complete = nx.Graph()
        complete.add_nodes_from(range(2 * k))
        for a, b, w in closure:
            complete.add_edge(a, b, weight=ceiling - w)

        mate = nx.max_weight_matching(complete, maxcardinality=True)
        if 2 * len(mate) != 2 * k:
            raise MatchingInfeasibleError(
                f"No perfect matching for {k} defects",
                details={"defects": defects[:32]}
            )

        selected = set()
        for a, b in mate:
            a, b = min(a, b), max(a, b)
            if a >= k:
                continue
            target = self._boundary if b == k + a else defects[b]
            path = paths[a][target]
            for x, y in zip(path, path[1:]):
                selected ^= {self._pair_edge[(min(x, y), max(x, y))]}

        edge_ids = tuple(sorted(selected))
        total = float(sum(self.graph.weight[eid] for eid in edge_ids))
        return Matching(edge_ids=edge_ids, total_weight=total)
