import pytest
import stim

from services.circuit_service import (
    apply_noise,
    build_memory_circuit,
    build_noisy_circuit,
    check_determinism,
    count_gates,
    count_noise_sites,
    detector_coordinates,
    to_text,
)
from services.lattice_service import build_triangular
from utils.config import COLORS
from utils.error_handler import UsageError


@pytest.mark.parametrize("d,T", [(3, 1), (3, 3), (5, 2), (7, 4)])
def test_detector_and_measurement_counts(d, T):
    lattice = build_triangular(d)
    circuit = build_memory_circuit(d, T, lattice=lattice)
    F, n = lattice.num_faces, lattice.num_vertices
    assert circuit.num_detectors == 2 * F * T
    assert circuit.num_measurements == 2 * F * T + n
    assert circuit.num_observables == 1
    assert len(circuit.observables[0]) == d
    # data reset, then (reset, 7 CNOT slices, measure) per round, then data measure
    assert len(circuit.slices) == 2 + 9 * T


def test_detector_order(circuit_d3_t2):
    keys = [(det.round, det.basis) for det in circuit_d3_t2.detectors]
    assert keys == [(1, "Z")] * 3 + [(2, "Z")] * 3 + [(2, "X")] * 3 + [(3, "Z")] * 3
    assert circuit_d3_t2.detector_index(0, "x", 2) == 6
    with pytest.raises(UsageError):
        circuit_d3_t2.detector_index(0, "X", 1)


def test_every_qubit_acts_once_per_slice(circuit_d3_t2):
    for ops in circuit_d3_t2.slices:
        touched = [q for op in ops for q in op.targets]
        assert sorted(touched) == list(range(circuit_d3_t2.num_qubits))


def test_cnot_count(circuit_d3_t2):
    lattice = build_triangular(3)
    weight = sum(len(face) for face in lattice.faces)
    assert count_gates(circuit_d3_t2, "CX") == 2 * weight * 2


def test_noise_site_count():
    circuit = build_noisy_circuit(3, 1, 1e-3)
    assert count_noise_sites(circuit) == 119


def test_noise_strength_range(circuit_d3_t2):
    with pytest.raises(UsageError):
        apply_noise(circuit_d3_t2, 0.8)
    with pytest.raises(UsageError):
        apply_noise(circuit_d3_t2, -0.1)
    assert not apply_noise(circuit_d3_t2, 0.0).is_noisy
    assert apply_noise(circuit_d3_t2, 0.01).is_noisy


def test_noise_model_channels(noisy_d3_t2):
    kinds = {}
    for ops, channels in zip(noisy_d3_t2.slices, noisy_d3_t2.noise):
        gates = {op.gate for op in ops}
        for channel in channels:
            kinds.setdefault(channel.kind, set()).update(gates)
            if channel.before:
                assert channel.kind in ("X_ERROR", "Z_ERROR")
    assert "CX" in kinds["DEPOLARIZE2"]
    assert "I" in kinds["DEPOLARIZE1"]


def test_invalid_rounds():
    with pytest.raises(UsageError):
        build_memory_circuit(3, 0)


@pytest.mark.parametrize("d", [3, 5, 7])
def test_noiseless_circuit_is_deterministic(d):
    assert check_determinism(build_memory_circuit(d, 3)) == []


@pytest.mark.slow
def test_distance_nine_is_deterministic():
    assert check_determinism(build_memory_circuit(9, 2)) == []


def test_text_listing(noisy_d3_t2):
    text = to_text(noisy_d3_t2)
    header, body = text.split("\n", 1)
    assert header == "# d=3 T=2 schedule=2,3,6,5,4,1;3,4,7,6,5,2 p=0.001"
    assert "DEPOLARIZE2(0.001)" in body
    parsed = stim.Circuit(body)
    assert parsed.num_detectors == noisy_d3_t2.num_detectors
    assert parsed.num_observables == 1
    assert parsed.num_measurements == noisy_d3_t2.num_measurements


def test_detector_coordinates(circuit_d3_t2):
    coordinates = circuit_d3_t2.stim_circuit.get_detector_coordinates()
    for i, det in enumerate(circuit_d3_t2.detectors):
        assert tuple(coordinates[i]) == detector_coordinates(det.face, det.basis, det.round, det.color)
    assert coordinates[0][1:] == [0, 1, COLORS.index(circuit_d3_t2.detectors[0].color)]


def test_stim_circuit_is_deterministic_and_noiseless(circuit_d3_t2):
    model = circuit_d3_t2.stim_circuit.detector_error_model()
    assert model.num_errors == 0
    assert model.num_detectors == circuit_d3_t2.num_detectors
    assert circuit_d3_t2.stim_circuit.num_ticks == len(circuit_d3_t2.slices)


def test_measurement_record_order(circuit_d3_t2):
    F, n = circuit_d3_t2.num_faces, circuit_d3_t2.num_data
    assert circuit_d3_t2.measurement_index("Z", 1, 1) == 1
    assert circuit_d3_t2.measurement_index("X", 0, 2) == 2 * F + F
    assert circuit_d3_t2.measurement_index("D", n - 1, 0) == 2 * F * 2 + n - 1
