from abc import ABC, abstractmethod
from typing import Iterable, Tuple

import numpy as np

from matching.graph import MatchGraph, Matching


class MatchingBackend(ABC):
    """Minimum-weight perfect matching with a boundary vertex on one MatchGraph.

    A backend is built once per graph and is read-only afterwards, so one
    instance may serve many solve calls.
    """

    name = "abstract"

    def __init__(self, graph: MatchGraph):
        if not graph.frozen:
            graph.freeze()
        self.graph = graph

    @abstractmethod
    def solve(self, defects: Iterable[int]) -> Matching:
        pass

    def solve_batch(self, syndromes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Solve each row of a boolean (shots, num_nodes) defect matrix.

        Returns the boolean (shots, num_edges) edge selection and the total
        weight of each row.
        """
        syndromes = np.asarray(syndromes, dtype=bool)
        selected = np.zeros((syndromes.shape[0], self.graph.num_edges), dtype=bool)
        for row in np.flatnonzero(syndromes.any(axis=1)):
            matching = self.solve(np.flatnonzero(syndromes[row]))
            selected[row, list(matching.edge_ids)] = True
        return selected, self.graph.edge_weights(selected)
