"""
Concatenated MWPM decoding with perfect syndrome measurements.

For each color c the decoder matches the non-c violated faces on the
c-restricted graph, turns the matched c-edges into extra defects of the
c-only graph, matches again, and reads the qubits of the second matching as
the prediction. The lightest of the three predictions wins (ties R < G < B).
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from matching.backend_factory import MatchingBackendFactory
from matching.graph import BOUNDARY
from models.schemas import DecodeResult2D
from services.lattice_service import (
    ColorLattice,
    build_triangular,
    gf2_rank,
    logical_support,
    monochrome_graph,
    restricted_graph,
)
from utils.config import COLORS
from utils.error_handler import DecoderError, MatchingInfeasibleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Syndrome2D:
    """Violated Z-check faces, partitioned by color."""

    r: FrozenSet[int] = frozenset()
    g: FrozenSet[int] = frozenset()
    b: FrozenSet[int] = frozenset()

    @classmethod
    def from_faces(cls, lattice: ColorLattice, faces: Iterable[int]) -> "Syndrome2D":
        parts: Dict[str, set] = {c: set() for c in COLORS}
        for f in faces:
            parts[lattice.face_colors[f]].add(int(f))
        return cls(**{c: frozenset(members) for c, members in parts.items()})

    def of_color(self, c: str) -> FrozenSet[int]:
        return getattr(self, c)

    @property
    def faces(self) -> FrozenSet[int]:
        return self.r | self.g | self.b

    def is_empty(self) -> bool:
        return not self.faces

    def check(self, lattice: ColorLattice):
        for c in COLORS:
            for f in self.of_color(c):
                if not 0 <= f < lattice.num_faces or lattice.face_colors[f] != c:
                    raise DecoderError(f"Face {f} is not a {c} face of the lattice")

    def to_vector(self, lattice: ColorLattice) -> np.ndarray:
        vector = np.zeros(lattice.num_faces, dtype=bool)
        vector[list(self.faces)] = True
        return vector


def syndrome_vector(lattice: ColorLattice, errors: np.ndarray) -> np.ndarray:
    """Violated faces of each row of a boolean (shots, qubits) error matrix"""
    errors = np.asarray(errors, dtype=np.uint8)
    return (errors @ lattice.check_matrix.T.astype(np.uint8)) % 2 == 1


def syndrome_from_error(lattice: ColorLattice, error: Iterable[int]) -> Syndrome2D:
    vector = np.zeros(lattice.num_vertices, dtype=bool)
    vector[list(error)] = True
    violated = np.flatnonzero(syndrome_vector(lattice, vector[None, :])[0])
    return Syndrome2D.from_faces(lattice, violated.tolist())


def logical_flips(lattice: ColorLattice, residuals: np.ndarray) -> np.ndarray:
    """Whether each residual row anticommutes with the Z logical on the red boundary"""
    indicator = np.zeros(lattice.num_vertices, dtype=np.uint8)
    indicator[list(logical_support(lattice, "r"))] = 1
    return (np.asarray(residuals, dtype=np.uint8) @ indicator) % 2 == 1


def is_logical_failure(lattice: ColorLattice, error: Iterable[int], prediction: Iterable[int]) -> bool:
    residual = np.zeros(lattice.num_vertices, dtype=bool)
    residual[list(set(error) ^ set(prediction))] = True
    return bool(logical_flips(lattice, residual[None, :])[0])


def in_stabilizer_span(lattice: ColorLattice, residual: Iterable[int]) -> bool:
    """GF(2) test: is the residual a product of checks"""
    vector = np.zeros(lattice.num_vertices, dtype=np.uint8)
    vector[list(residual)] = 1
    checks = lattice.check_matrix
    return gf2_rank(np.vstack([checks, vector])) == gf2_rank(checks)


@dataclass
class _ColorContext:
    restricted: object
    monochrome: object
    restricted_backend: object
    monochrome_backend: object


class Decoder2DService:
    """Decode context: the lattice plus both derived graphs per color."""

    def __init__(self, lattice: ColorLattice, backend: Optional[str] = None):
        self.lattice = lattice
        self.backend = backend
        self._contexts: Dict[str, _ColorContext] = {}
        for c in COLORS:
            restricted = restricted_graph(lattice, c)
            monochrome = monochrome_graph(lattice, c)
            self._contexts[c] = _ColorContext(
                restricted=restricted,
                monochrome=monochrome,
                restricted_backend=MatchingBackendFactory.get_backend(restricted.to_match_graph(), backend),
                monochrome_backend=MatchingBackendFactory.get_backend(monochrome.to_match_graph(), backend),
            )

    def decode_color_batch(self, syndromes: np.ndarray, c: str) -> np.ndarray:
        """Predicted qubits (shots, qubits) of the c sub-decoder"""
        ctx = self._contexts[c]
        syndromes = np.asarray(syndromes, dtype=bool)
        selected, _ = ctx.restricted_backend.solve_batch(syndromes[:, list(ctx.restricted.faces)])
        stage2 = np.concatenate([selected, syndromes[:, list(ctx.monochrome.faces)]], axis=1)
        try:
            predicted, _ = ctx.monochrome_backend.solve_batch(stage2)
        except MatchingInfeasibleError as e:
            raise MatchingInfeasibleError(f"{c}-only matching failed after the restricted stage: {e}")
        # Graph edge k of the c-only graph is qubit k
        return predicted

    def decode_batch(self, syndromes: np.ndarray, colors: Sequence[str] = COLORS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Decode many syndromes at once

        Args:
            syndromes: boolean (shots, faces) matrix
            colors: sub-decoders to run; the tie order R < G < B always applies

        Returns:
            final predictions (shots, qubits), chosen color index into the
            ordered colors, and per-color weights (colors, shots)
        """
        ordered = [c for c in COLORS if c in set(colors)]
        if not ordered:
            raise DecoderError("At least one color is required")
        syndromes = np.atleast_2d(np.asarray(syndromes, dtype=bool))
        shots = syndromes.shape[0]
        predictions = np.zeros((len(ordered), shots, self.lattice.num_vertices), dtype=bool)
        for k, c in enumerate(ordered):
            predictions[k] = self.decode_color_batch(syndromes, c)
        weights = predictions.sum(axis=2)
        chosen = np.argmin(weights, axis=0)
        final = predictions[chosen, np.arange(shots)]
        return final, chosen, weights

    def decode_color(self, syndrome: Syndrome2D, c: str) -> FrozenSet[int]:
        syndrome.check(self.lattice)
        row = self.decode_color_batch(syndrome.to_vector(self.lattice)[None, :], c)[0]
        return frozenset(np.flatnonzero(row).tolist())

    def decode(self, syndrome: Syndrome2D, colors: Sequence[str] = COLORS) -> DecodeResult2D:
        syndrome.check(self.lattice)
        ordered = [c for c in COLORS if c in set(colors)]
        vector = syndrome.to_vector(self.lattice)[None, :]
        per_color = {c: sorted(np.flatnonzero(self.decode_color_batch(vector, c)[0]).tolist()) for c in ordered}
        weights = {c: len(v) for c, v in per_color.items()}
        chosen = min(ordered, key=lambda c: (weights[c], COLORS.index(c)))
        return DecodeResult2D(
            predictions=per_color,
            weights=weights,
            chosen_color=chosen,
            prediction=per_color[chosen],
        )


_decoders: Dict[Tuple[int, Optional[str]], Decoder2DService] = {}


def get_decoder(lattice: ColorLattice, backend: Optional[str] = None) -> Decoder2DService:
    """Shared decode context per (distance, backend)"""
    key = (lattice.distance, backend)
    if key not in _decoders:
        _decoders[key] = Decoder2DService(lattice, backend)
    return _decoders[key]


def decode_color(lattice: ColorLattice, syndrome: Syndrome2D, c: str) -> FrozenSet[int]:
    return get_decoder(lattice).decode_color(syndrome, c)


def decode(lattice: ColorLattice, syndrome: Syndrome2D, colors: Sequence[str] = COLORS) -> DecodeResult2D:
    return get_decoder(lattice).decode(syndrome, colors)


# Hard-error families

def _face_steps(lattice: ColorLattice, c: str, face: int) -> List[Tuple[int, Optional[int]]]:
    """(c-edge, face at its other end or None on the c boundary) for each c-edge leaving a c-face"""
    steps = []
    for w in lattice.faces[face]:
        e = lattice.vertex_edges[w].get(c)
        if e is None:
            continue
        u, v = lattice.edges[e]
        other = v if u == w else u
        steps.append((e, lattice.vertex_faces[other].get(c)))
    return sorted(steps)


def _edge_qubits(lattice: ColorLattice, edges: Iterable[int]) -> FrozenSet[int]:
    qubits = set()
    for e in edges:
        qubits ^= set(lattice.edges[e])
    return frozenset(qubits)


def _central_qubit(lattice: ColorLattice) -> int:
    size = 3 * (lattice.distance - 1) // 2
    cx, cy = size, size / 3

    def key(v):
        x, y = lattice.coordinates[v]
        return ((x - cx) ** 2 + 3 * (y - cy) ** 2, v)

    bulk = [v for v in range(lattice.num_vertices) if len(lattice.vertex_faces[v]) == 3]
    return min(bulk, key=key)


def gen_projection_hard_error(lattice: ColorLattice, c: str = "r") -> FrozenSet[int]:
    """A central qubit plus the shortest c-string from its c-face to the c boundary.

    Only the two non-c faces around the central qubit are violated.
    """
    v0 = _central_qubit(lattice)
    start = lattice.vertex_faces[v0][c]
    parents: Dict[int, Tuple[Optional[int], Optional[int]]] = {start: (None, None)}
    queue = deque([start])
    string: List[int] = []
    while queue:
        face = queue.popleft()
        for e, other in _face_steps(lattice, c, face):
            if other is None:
                string = [e]
                while parents[face][0] is not None:
                    previous, via = parents[face]
                    string.append(via)
                    face = previous
                queue.clear()
                break
            if other not in parents:
                parents[other] = (face, e)
                queue.append(other)
    return frozenset({v0}) ^ _edge_qubits(lattice, string)


def _boundary_strings(lattice: ColorLattice, c: str, length: int) -> List[Tuple[int, FrozenSet[int]]]:
    """Every c-string of `length` c-edges leaving the c boundary: (violated face, qubits)"""
    strings = []
    boundary_steps = sorted({
        (e, lattice.vertex_faces[u].get(c), lattice.vertex_faces[v].get(c))
        for e, (u, v) in enumerate(lattice.edges)
        if lattice.edge_colors[e] == c
    })
    for e, fu, fv in boundary_steps:
        if (fu is None) == (fv is None):
            continue
        entry = fu if fu is not None else fv

        def extend(face, used_edges, visited):
            if len(used_edges) == length:
                strings.append((face, _edge_qubits(lattice, used_edges)))
                return
            for step, other in _face_steps(lattice, c, face):
                if other is None or other in visited:
                    continue
                extend(other, used_edges + [step], visited | {other})

        extend(entry, [e], {entry})
    return strings


def _restricted_distances(lattice: ColorLattice, c: str) -> Tuple[np.ndarray, Dict[int, int]]:
    """Unit-weight face distances in the c-restricted graph, boundary vertex excluded"""
    graph = restricted_graph(lattice, c)
    rows, cols = [], []
    for a, b in graph.endpoints:
        if b != BOUNDARY:
            rows.extend([a, b])
            cols.extend([b, a])
    adjacency = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(graph.num_nodes, graph.num_nodes))
    distances = shortest_path(adjacency, unweighted=True, directed=False)
    return distances, {f: i for i, f in enumerate(graph.faces)}


def string_gaps(lattice: ColorLattice, violated: Dict[str, int]) -> Dict[str, float]:
    """Gap between the two violated faces not of color c, counted in c-edges"""
    gaps = {}
    for c in COLORS:
        a, b = [violated[x] for x in COLORS if x != c]
        distances, node = _restricted_distances(lattice, c)
        gaps[c] = float(distances[node[a], node[b]])
    return gaps


def gen_concat_hard_error(
    d: int = 25,
    string_length: int = 2,
    target_gap: int = 7,
    backend: Optional[str] = None
) -> Tuple[ColorLattice, FrozenSet[int]]:
    """Three boundary strings, one per color, that the concatenated decoder gets wrong.

    The red string ends on the central qubit of the red boundary, the violated
    faces are pairwise equally far apart, and candidates are tried from the
    target gap outwards until one decodes to a logical failure.
    """
    lattice = build_triangular(d)
    center = lattice.boundaries["r"][(d - 1) // 2]
    strings = {c: _boundary_strings(lattice, c, string_length) for c in COLORS}
    strings["r"] = [s for s in strings["r"] if center in s[1]]
    distances = {c: _restricted_distances(lattice, c) for c in COLORS}

    def gap(c, fa, fb):
        matrix, node = distances[c]
        return matrix[node[fa], node[fb]]

    candidates = []
    for (fr, qr), (fg, qg), (fb, qb) in itertools.product(strings["r"], strings["g"], strings["b"]):
        if qr & qg or qr & qb or qg & qb:
            continue
        gaps = (gap("r", fg, fb), gap("g", fr, fb), gap("b", fr, fg))
        if not np.all(np.isfinite(gaps)) or len(set(gaps)) != 1:
            continue
        candidates.append((abs(gaps[0] - target_gap), len(candidates), qr | qg | qb))

    decoder = get_decoder(lattice, backend)
    for _, _, error in sorted(candidates, key=lambda item: (item[0], item[1])):
        result = decoder.decode(syndrome_from_error(lattice, error))
        if is_logical_failure(lattice, error, result.prediction):
            logger.info(f"Found uncorrectable weight-{len(error)} error at d={d}")
            return lattice, error
    raise DecoderError(f"No uncorrectable three-string error with {string_length}-edge strings at d={d}")
