"""
Triangular 6-6-6 color-code lattice and its per-color derived graphs.

Coordinates: rows y = 0..L with L = 3(d-1)/2 and x in y, y+2, ..., 2L-y.
The red boundary is the bottom row (y = 0), the green boundary the left side
(x = y) and the blue boundary the right side (x = 2L - y). A point is a face
center when ((x - y)/2) mod 3 equals its row's center position; every other
point is a qubit. Face vertices are listed by hexagon position 0..5 at the
offsets in FACE_OFFSETS.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, List, Tuple

import galois
import numpy as np

from matching.graph import BOUNDARY, MatchGraph
from utils.config import COLORS
from utils.error_handler import InvalidDistanceError

logger = logging.getLogger(__name__)

GF2 = galois.GF(2)

# Hexagon positions, counter-clockwise from upper left
FACE_OFFSETS = ((-1, 1), (1, 1), (2, 0), (1, -1), (-1, -1), (-2, 0))

# Half of the six triangular-lattice directions; the rest are negatives
NEIGHBOR_OFFSETS = ((2, 0), (1, 1), (-1, 1))

# Row y mod 3 -> (face color, center position)
ROW_FACES = {0: ("g", 2), 1: ("b", 0), 2: ("r", 1)}


def third_color(a: str, b: str) -> str:
    (color,) = set(COLORS) - {a, b}
    return color


@dataclass(frozen=True)
class ColorLattice:
    distance: int
    coordinates: Tuple[Tuple[int, int], ...]
    edges: Tuple[Tuple[int, int], ...]
    edge_colors: Tuple[str, ...]
    faces: Tuple[Tuple[int, ...], ...]
    face_positions: Tuple[Tuple[int, ...], ...]
    face_colors: Tuple[str, ...]
    face_centers: Tuple[Tuple[int, int], ...]
    boundaries: Dict[str, Tuple[int, ...]]

    @property
    def num_vertices(self) -> int:
        return len(self.coordinates)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def vertex_faces(self) -> Tuple[Dict[str, int], ...]:
        """Per vertex: color -> id of the face of that color containing it"""
        table: List[Dict[str, int]] = [dict() for _ in range(self.num_vertices)]
        for f, members in enumerate(self.faces):
            for v in members:
                table[v][self.face_colors[f]] = f
        return tuple(table)

    @cached_property
    def vertex_edges(self) -> Tuple[Dict[str, int], ...]:
        """Per vertex: color -> id of the incident edge of that color"""
        table: List[Dict[str, int]] = [dict() for _ in range(self.num_vertices)]
        for e, (u, v) in enumerate(self.edges):
            table[u][self.edge_colors[e]] = e
            table[v][self.edge_colors[e]] = e
        return tuple(table)

    @cached_property
    def vertex_boundaries(self) -> Tuple[FrozenSet[str], ...]:
        table: List[set] = [set() for _ in range(self.num_vertices)]
        for color, members in self.boundaries.items():
            for v in members:
                table[v].add(color)
        return tuple(frozenset(s) for s in table)

    @cached_property
    def check_matrix(self) -> np.ndarray:
        """Face-by-vertex incidence matrix (the Z and the X checks coincide)"""
        matrix = np.zeros((self.num_faces, self.num_vertices), dtype=np.uint8)
        for f, members in enumerate(self.faces):
            matrix[f, list(members)] = 1
        return matrix

    def faces_of_color(self, color: str) -> Tuple[int, ...]:
        return tuple(f for f, c in enumerate(self.face_colors) if c == color)

    def edges_of_color(self, color: str) -> Tuple[int, ...]:
        return tuple(e for e, c in enumerate(self.edge_colors) if c == color)

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "vertices": [{"id": v, "x": x, "y": y} for v, (x, y) in enumerate(self.coordinates)],
            "edges": [
                {"id": e, "vertices": list(pair), "color": self.edge_colors[e]}
                for e, pair in enumerate(self.edges)
            ],
            "faces": [
                {
                    "id": f,
                    "color": self.face_colors[f],
                    "center": list(self.face_centers[f]),
                    "vertices": list(members),
                }
                for f, members in enumerate(self.faces)
            ],
            "boundaries": {color: list(members) for color, members in self.boundaries.items()},
        }


def build_triangular(d: int) -> ColorLattice:
    """Build the distance-d triangular patch with deterministic scan-order ids"""
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
        raise InvalidDistanceError(f"Code distance must be an odd integer >= 3, got {d!r}")
    d = int(d)
    size = 3 * (d - 1) // 2

    coordinates: List[Tuple[int, int]] = []
    centers: List[Tuple[int, int]] = []
    center_colors: List[str] = []
    for y in range(size + 1):
        color, position = ROW_FACES[y % 3]
        for x in range(y, 2 * size - y + 1, 2):
            if ((x - y) // 2) % 3 == position:
                centers.append((x, y))
                center_colors.append(color)
            else:
                coordinates.append((x, y))
    index = {point: v for v, point in enumerate(coordinates)}

    faces: List[Tuple[int, ...]] = []
    positions: List[Tuple[int, ...]] = []
    for cx, cy in centers:
        members = [(index[(cx + dx, cy + dy)], k) for k, (dx, dy) in enumerate(FACE_OFFSETS) if (cx + dx, cy + dy) in index]
        faces.append(tuple(v for v, _ in members))
        positions.append(tuple(k for _, k in members))

    edge_set = set()
    for v, (x, y) in enumerate(coordinates):
        for dx, dy in NEIGHBOR_OFFSETS:
            w = index.get((x + dx, y + dy))
            if w is not None:
                edge_set.add((min(v, w), max(v, w)))

    # Cut faces close up along the boundary through one extra edge
    for members, present in zip(faces, positions):
        if len(members) != 4:
            continue
        missing = set(range(6)) - set(present)
        by_position = dict(zip(present, members))
        start = next(p for p in present if (p + 1) % 6 in missing)
        end = next(p for p in present if (p - 1) % 6 in missing)
        a, b = by_position[start], by_position[end]
        edge_set.add((min(a, b), max(a, b)))
    edges = sorted(edge_set)

    boundaries = {
        "r": tuple(sorted((v for v, (x, y) in enumerate(coordinates) if y == 0), key=lambda v: coordinates[v][0])),
        "g": tuple(sorted((v for v, (x, y) in enumerate(coordinates) if x == y), key=lambda v: coordinates[v][1])),
        "b": tuple(sorted((v for v, (x, y) in enumerate(coordinates) if x == 2 * size - y), key=lambda v: coordinates[v][1])),
    }
    on_boundary = [set() for _ in coordinates]
    for color, members in boundaries.items():
        for v in members:
            on_boundary[v].add(color)

    vertex_faces = [dict() for _ in coordinates]
    for f, members in enumerate(faces):
        for v in members:
            vertex_faces[v][center_colors[f]] = f

    edge_colors = []
    for u, v in edges:
        shared = {c for c, f in vertex_faces[u].items() if vertex_faces[v].get(c) == f}
        if len(shared) == 2:
            edge_colors.append(third_color(*shared))
        elif len(shared) == 1:
            (face_color,) = shared
            common = (on_boundary[u] & on_boundary[v]) - {face_color}
            if len(common) != 1:
                raise RuntimeError(f"Cannot color boundary edge ({u}, {v})")
            edge_colors.append(third_color(face_color, common.pop()))
        else:
            raise RuntimeError(f"Edge ({u}, {v}) bounds no face")

    lattice = ColorLattice(
        distance=d,
        coordinates=tuple(coordinates),
        edges=tuple(edges),
        edge_colors=tuple(edge_colors),
        faces=tuple(faces),
        face_positions=tuple(positions),
        face_colors=tuple(center_colors),
        face_centers=tuple(centers),
        boundaries=boundaries,
    )
    logger.debug(f"Built d={d} lattice: {lattice.num_vertices} qubits, {lattice.num_faces} faces, {len(edges)} edges")
    return lattice


def gf2_rank(matrix: np.ndarray) -> int:
    return int(np.linalg.matrix_rank(GF2(np.asarray(matrix, dtype=np.uint8) % 2)))


def check_invariants(lattice: ColorLattice) -> List[str]:
    """Every violated structural invariant, as a list of messages"""
    problems = []
    d = lattice.distance
    if lattice.num_vertices != (3 * d * d + 1) // 4:
        problems.append(f"vertex count {lattice.num_vertices} != (3d^2+1)/4")
    if lattice.num_faces != (3 * d * d - 3) // 8:
        problems.append(f"face count {lattice.num_faces} != (3d^2-3)/8")

    degree = np.zeros(lattice.num_vertices, dtype=int)
    for u, v in lattice.edges:
        degree[u] += 1
        degree[v] += 1
    for v in range(lattice.num_vertices):
        corner = len(lattice.vertex_boundaries[v]) == 2
        if degree[v] != (2 if corner else 3):
            problems.append(f"vertex {v} has degree {degree[v]}")
        if len(lattice.vertex_edges[v]) != degree[v]:
            problems.append(f"vertex {v} has two edges of one color")

    for f, members in enumerate(lattice.faces):
        if len(members) not in (4, 6):
            problems.append(f"face {f} has weight {len(members)}")

    for e, (u, v) in enumerate(lattice.edges):
        bounding = [f for c, f in lattice.vertex_faces[u].items() if lattice.vertex_faces[v].get(c) == f]
        colors = [lattice.face_colors[f] for f in bounding]
        if len(set(colors)) != len(colors):
            problems.append(f"faces {bounding} share edge {e} and a color")
        if lattice.edge_colors[e] in colors:
            problems.append(f"edge {e} has the color of a face it bounds")

    for color in COLORS:
        if len(lattice.boundaries[color]) != d:
            problems.append(f"{color} boundary has {len(lattice.boundaries[color])} qubits")

    # X and Z checks share the face supports, so the stacked rank is twice the face rank
    if 2 * gf2_rank(lattice.check_matrix) != lattice.num_vertices - 1:
        problems.append("stabilizer rank is not n - 1")
    return problems


@dataclass(frozen=True)
class RestrictedGraph:
    """Non-c faces plus a boundary vertex, one edge per c-colored lattice edge."""

    color: str
    faces: Tuple[int, ...]
    lattice_edges: Tuple[int, ...]
    endpoints: Tuple[Tuple[int, int], ...]

    @cached_property
    def _node_index(self) -> Dict[int, int]:
        return {f: i for i, f in enumerate(self.faces)}

    @cached_property
    def _edge_index(self) -> Dict[int, int]:
        return {e: k for k, e in enumerate(self.lattice_edges)}

    @property
    def num_nodes(self) -> int:
        return len(self.faces)

    def node_of_face(self, face: int) -> int:
        return self._node_index[face]

    def rho(self, lattice_edge: int) -> int:
        return self._edge_index[lattice_edge]

    def rho_inverse(self, graph_edge: int) -> int:
        return self.lattice_edges[graph_edge]

    def to_match_graph(self, weight: float = 1.0) -> MatchGraph:
        graph = MatchGraph(self.num_nodes)
        for k, (a, b) in enumerate(self.endpoints):
            graph.add_edge(a, b, weight, fault_id=k)
        return graph.freeze()


@dataclass(frozen=True)
class MonochromeGraph:
    """c-colored edges and faces plus a boundary vertex, one edge per qubit.

    Nodes 0..m-1 are the c-edges (same order as the restricted graph's edges),
    nodes m.. are the c-faces. Graph edge k is lattice vertex k.
    """

    color: str
    lattice_edges: Tuple[int, ...]
    faces: Tuple[int, ...]
    endpoints: Tuple[Tuple[int, int], ...]

    @property
    def num_nodes(self) -> int:
        return len(self.lattice_edges) + len(self.faces)

    @cached_property
    def _edge_node(self) -> Dict[int, int]:
        return {e: k for k, e in enumerate(self.lattice_edges)}

    @cached_property
    def _face_node(self) -> Dict[int, int]:
        offset = len(self.lattice_edges)
        return {f: offset + i for i, f in enumerate(self.faces)}

    def node_of_edge(self, lattice_edge: int) -> int:
        return self._edge_node[lattice_edge]

    def node_of_face(self, face: int) -> int:
        return self._face_node[face]

    def mu(self, vertex: int) -> int:
        if not 0 <= vertex < len(self.endpoints):
            raise KeyError(vertex)
        return vertex

    def mu_inverse(self, graph_edge: int) -> int:
        if not 0 <= graph_edge < len(self.endpoints):
            raise KeyError(graph_edge)
        return graph_edge

    def to_match_graph(self, weight: float = 1.0) -> MatchGraph:
        graph = MatchGraph(self.num_nodes)
        for k, (a, b) in enumerate(self.endpoints):
            graph.add_edge(a, b, weight, fault_id=k)
        return graph.freeze()


def restricted_graph(lattice: ColorLattice, c: str) -> RestrictedGraph:
    faces = tuple(f for f, color in enumerate(lattice.face_colors) if color != c)
    node = {f: i for i, f in enumerate(faces)}
    lattice_edges = lattice.edges_of_color(c)
    endpoints = []
    for e in lattice_edges:
        u, v = lattice.edges[e]
        bounding = sorted(
            node[f] for color, f in lattice.vertex_faces[u].items()
            if color != c and lattice.vertex_faces[v].get(color) == f
        )
        if len(bounding) == 2:
            endpoints.append((bounding[0], bounding[1]))
        elif len(bounding) == 1:
            endpoints.append((bounding[0], BOUNDARY))
        else:
            raise RuntimeError(f"{c}-edge {e} bounds no face")
    return RestrictedGraph(color=c, faces=faces, lattice_edges=lattice_edges, endpoints=tuple(endpoints))


def monochrome_graph(lattice: ColorLattice, c: str) -> MonochromeGraph:
    lattice_edges = lattice.edges_of_color(c)
    faces = lattice.faces_of_color(c)
    edge_node = {e: k for k, e in enumerate(lattice_edges)}
    face_node = {f: len(lattice_edges) + i for i, f in enumerate(faces)}
    endpoints = []
    for v in range(lattice.num_vertices):
        ends = []
        if c in lattice.vertex_edges[v]:
            ends.append(edge_node[lattice.vertex_edges[v][c]])
        if c in lattice.vertex_faces[v]:
            ends.append(face_node[lattice.vertex_faces[v][c]])
        if not ends:
            raise RuntimeError(f"Qubit {v} touches neither a {c}-edge nor a {c}-face")
        ends.append(BOUNDARY)
        endpoints.append((ends[0], ends[1]))
    return MonochromeGraph(color=c, lattice_edges=lattice_edges, faces=faces, endpoints=tuple(endpoints))


def logical_support(lattice: ColorLattice, c: str) -> FrozenSet[int]:
    """Qubits of the c-colored boundary; X or Z on all of them is a logical operator"""
    return frozenset(lattice.boundaries[c])
