from typing import Iterable, Optional

from matching.base import MatchingBackend
from matching.blossom_backend import SparseBlossomBackend
from matching.exact_backend import ExactMatchingBackend
from matching.graph import MatchGraph, Matching
from utils import config
from utils.error_handler import UsageError


class MatchingBackendFactory:
    """Factory to create matching backends for a MatchGraph"""

    BACKENDS = {
        "sparse_blossom": SparseBlossomBackend,
        "pymatching": SparseBlossomBackend,
        "exact": ExactMatchingBackend,
        "networkx": ExactMatchingBackend,
    }

    @staticmethod
    def get_backend(graph: MatchGraph, backend: Optional[str] = None) -> MatchingBackend:
        """
        Get a matching backend bound to a graph

        Args:
            graph: Graph to match on (frozen on first use)
            backend: Backend name; defaults to CMWPM_MATCHING_BACKEND

        Returns:
            Backend instance
        """
        name = (backend or config.MATCHING_BACKEND).lower()
        backend_class = MatchingBackendFactory.BACKENDS.get(name)
        if backend_class is None:
            raise UsageError(f"Unknown matching backend: {name}")
        return backend_class(graph)


def solve(graph: MatchGraph, defects: Iterable[int], backend: Optional[str] = None) -> Matching:
    """Minimum-weight edge set touching each defect oddly and every other node evenly"""
    return MatchingBackendFactory.get_backend(graph, backend).solve(defects)
