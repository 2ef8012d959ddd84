import itertools

import numpy as np
import pytest

from matching.backend_factory import MatchingBackendFactory, solve
from matching.graph import BOUNDARY, MatchGraph, probability_to_weight, quantize_weights
from utils.error_handler import DegenerateInputError, MatchingInfeasibleError, UsageError

BACKENDS = ("exact", "sparse_blossom")


def brute_force_weight(graph: MatchGraph, defects) -> int:
    """Lightest edge subset with the right parity everywhere, on the quantized grid"""
    best = None
    for size in range(graph.num_edges + 1):
        for subset in itertools.combinations(range(graph.num_edges), size):
            if graph.check_parity(defects, subset):
                weight = int(sum(graph.quantized[e] for e in subset))
                best = weight if best is None else min(best, weight)
    return best


def random_graph(rng, num_nodes: int, num_inner_edges: int) -> MatchGraph:
    graph = MatchGraph(num_nodes)
    for node in range(num_nodes):
        graph.add_edge(node, BOUNDARY, float(rng.integers(1, 10)))
    for _ in range(num_inner_edges if num_nodes > 1 else 0):
        u, v = rng.choice(num_nodes, size=2, replace=False)
        graph.add_edge(int(u), int(v), float(rng.integers(1, 10)))
    return graph.freeze()


def test_probability_to_weight():
    assert probability_to_weight(0.1) == pytest.approx(np.log(9.0))
    for q in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(DegenerateInputError):
            probability_to_weight(q)


def test_quantize_weights_grid():
    assert quantize_weights([1.0, 0.5])[0] == 2 ** 16
    assert quantize_weights([1.0, 0.5])[1] == 2 ** 15


def test_add_edge_rejects_bad_edges():
    graph = MatchGraph(2)
    with pytest.raises(ValueError):
        graph.add_edge(BOUNDARY, BOUNDARY)
    with pytest.raises(ValueError):
        graph.add_edge(0, 5)
    with pytest.raises(DegenerateInputError):
        graph.add_edge(0, 1, -1.0)
    graph.add_edge(BOUNDARY, 1)
    assert graph.endpoints(0) == (1, BOUNDARY)
    graph.freeze()
    with pytest.raises(RuntimeError):
        graph.add_edge(0, 1)


def test_unknown_backend():
    graph = MatchGraph.from_edges(2, [(0, 1)])
    with pytest.raises(UsageError):
        MatchingBackendFactory.get_backend(graph, "nonexistent")


@pytest.mark.parametrize("backend", BACKENDS)
def test_path_graph(backend):
    # 0 - 1 - 2 - boundary
    graph = MatchGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, BOUNDARY, 1.0), (0, BOUNDARY, 5.0)])
    matching = solve(graph, [0, 2], backend)
    assert set(matching.edge_ids) == {0, 1}
    assert matching.total_weight == pytest.approx(2.0)

    matching = solve(graph, [1], backend)
    assert set(matching.edge_ids) == {1, 2}
    assert graph.check_parity([1], matching.edge_ids)


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_defects(backend):
    graph = MatchGraph.from_edges(2, [(0, 1), (1, BOUNDARY)])
    matching = solve(graph, [], backend)
    assert matching.edge_ids == ()
    assert matching.total_weight == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_defect_outside_graph(backend):
    graph = MatchGraph.from_edges(2, [(0, 1)])
    with pytest.raises(MatchingInfeasibleError):
        solve(graph, [4], backend)


def test_isolated_defect_without_boundary():
    graph = MatchGraph.from_edges(3, [(0, 1)])
    with pytest.raises(MatchingInfeasibleError):
        solve(graph, [2], "exact")


@pytest.mark.parametrize("backend", BACKENDS)
def test_solve_batch_matches_solve(backend, rng):
    graph = random_graph(rng, 6, 8)
    matcher = MatchingBackendFactory.get_backend(graph, backend)
    syndromes = rng.random((20, 6)) < 0.4
    selected, weights = matcher.solve_batch(syndromes)
    for row in range(20):
        defects = np.flatnonzero(syndromes[row])
        assert graph.check_parity(defects, np.flatnonzero(selected[row]))
        assert weights[row] == pytest.approx(matcher.solve(defects).total_weight)


@pytest.mark.parametrize("backend", BACKENDS)
def test_random_graphs_against_brute_force(backend, rng):
    for _ in range(150):
        num_nodes = int(rng.integers(1, 6))
        graph = random_graph(rng, num_nodes, int(rng.integers(0, 6)))
        defects = [n for n in range(num_nodes) if rng.random() < 0.5]
        matching = solve(graph, defects, backend)
        assert graph.check_parity(defects, matching.edge_ids)
        quantized = int(sum(graph.quantized[e] for e in matching.edge_ids))
        assert quantized == brute_force_weight(graph, defects)


@pytest.mark.slow
@pytest.mark.parametrize("backend", BACKENDS)
def test_many_random_graphs_against_brute_force(backend):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        num_nodes = int(rng.integers(1, 7))
        graph = random_graph(rng, num_nodes, int(rng.integers(0, 6)))
        defects = [n for n in range(num_nodes) if rng.random() < 0.5]
        matching = solve(graph, defects, backend)
        quantized = int(sum(graph.quantized[e] for e in matching.edge_ids))
        assert quantized == brute_force_weight(graph, defects)


def test_observable_flips():
    graph = MatchGraph(2)
    graph.add_edge(0, 1, obs_mask=0b1)
    graph.add_edge(1, BOUNDARY, obs_mask=0b10)
    graph.freeze()
    flips = graph.observable_flips(np.array([[True, False], [True, True], [False, False]]), 2)
    assert flips.tolist() == [[True, False], [True, True], [False, False]]


@pytest.mark.parametrize("backend", BACKENDS)
def test_parallel_edges_keep_the_lighter_fault(backend):
    graph = MatchGraph.from_edges(2, [(0, BOUNDARY, 5.0), (1, BOUNDARY, 5.0), (0, 1, 3.0), (0, 1, 2.0)])
    matching = solve(graph, [0, 1], backend)
    assert matching.edge_ids == (3,)
    assert matching.total_weight == pytest.approx(2.0)
    assert graph.check_parity([0, 1], matching.edge_ids)


@pytest.mark.parametrize("backend", BACKENDS)
def test_parallel_edge_ties_keep_the_lower_id(backend):
    graph = MatchGraph.from_edges(2, [(0, 1, 2.0), (1, 0, 2.0), (0, BOUNDARY, 9.0), (1, BOUNDARY, 9.0), (1, BOUNDARY, 1.0)])
    assert solve(graph, [0, 1], backend).edge_ids == (0,)
    assert solve(graph, [1], backend).edge_ids == (4,)
