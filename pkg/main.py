"""
Command line entry point.

    python main.py simulate --mode bitflip --d 3,5 --p 0.06:0.10:5 --shots 100000 --out bitflip.csv
    python main.py enumerate-schedules --length 7 --reduce
    python main.py validate-schedule --schedule "2,3,6,5,4,1;3,4,7,6,5,2"
    python main.py export-dem --d 3 --T 3 --p 0.001 --color r --part restricted --out r.dem
    python main.py decode --dem model.dem --events shots.b8 --out predictions.csv
    python main.py decode2d --d 5 --error 4,9
    python main.py circuit --d 3 --T 2 --p 0.001
    python main.py fit bitflip.csv --out report.json
"""

import argparse
import hashlib
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import pandas as pd
from pydantic import ValidationError

from models.schemas import RunConfig
from services.analysis_service import analyze_table
from services.circuit_decoder_service import CircuitDecoderService
from services.circuit_service import apply_noise, build_memory_circuit, to_text, validate_schedule
from services.decoder2d_service import Syndrome2D, get_decoder, syndrome_from_error
from services.dem_service import decompose, extract_dem, serialize_dem
from services.export_service import export_service, header_line
from services.lattice_service import build_triangular
from services.montecarlo_service import estimate_pfail
from services.schedule_service import enumerate_schedules, format_schedule, reduce_by_symmetry
from utils import config
from utils.error_handler import BudgetExceededError, DecoderError, ScheduleError, UsageError, error_handler
from utils.input_parser import input_parser
from utils.resource_monitor import resource_monitor
from utils.run_logger import run_logger

logger = logging.getLogger(__name__)


def point_stream(d: int, T: int, p: float) -> int:
    """RNG stream of one grid point, independent of the rest of the grid"""
    digest = hashlib.blake2b(f"{d}|{T}|{p!r}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _schedule(args) -> Optional[tuple]:
    return input_parser.parse_schedule(args.schedule) if args.schedule else None


def run_config_from_args(args) -> RunConfig:
    return RunConfig(
        command=args.command,
        mode=getattr(args, "mode", "circuit"),
        d=input_parser.parse_int_list(args.d) if isinstance(getattr(args, "d", None), str) else [],
        T=getattr(args, "T", None),
        p=input_parser.parse_p_values(args.p) if getattr(args, "p", None) else [],
        schedule=format_schedule(_schedule(args)) if getattr(args, "schedule", None) else None,
        shots=getattr(args, "shots", None),
        ci_target=getattr(args, "ci", None),
        ci_mode=getattr(args, "ci_mode", "relative"),
        max_shots=getattr(args, "max_shots", None),
        seed=getattr(args, "seed", 0),
        backend=getattr(args, "backend", None),
        include_stage1_weight=getattr(args, "include_stage1_weight", False),
        out=getattr(args, "out", None),
    )


def cmd_simulate(args, run_config: RunConfig) -> int:
    if args.shots is None and args.ci is None:
        raise UsageError("simulate needs --shots or --ci")
    schedule = _schedule(args)
    estimates = []
    for d in run_config.d:
        T = 1 if run_config.mode == "bitflip" else (run_config.T or d)
        for p in run_config.p:
            estimates.append(estimate_pfail(
                d, T, p,
                schedule=schedule,
                ci_target=args.ci,
                seed=args.seed,
                mode=run_config.mode,
                ci_mode=run_config.ci_mode,
                shots=args.shots,
                max_shots=args.max_shots,
                stream=point_stream(d, T, p),
                backend=args.backend,
                include_stage1_weight=args.include_stage1_weight,
                workers=args.workers,
            ))
            logger.info(f"d={d} T={T} p={p:.6g}: pfail={estimates[-1].pfail:.6g} ({estimates[-1].shots} shots)")

    if args.out and args.out.endswith(".xlsx"):
        export_service.write_results_excel(estimates, args.out, run_config)
    else:
        _emit(export_service.write_results_csv(estimates, None, run_config), args.out)

    exhausted = [e for e in estimates if e.budget_exhausted]
    if exhausted:
        raise BudgetExceededError(
            f"{len(exhausted)} point(s) stopped at the shot budget before reaching the CI target",
            {"points": [(e.d, e.T, e.p) for e in exhausted]},
        )
    return 0


def cmd_enumerate_schedules(args, run_config: RunConfig) -> int:
    schedules = enumerate_schedules(args.length)
    if args.reduce:
        schedules = reduce_by_symmetry(schedules)
    logger.info(f"{len(schedules)} schedules of length {args.length}")
    _emit(export_service.write_schedules((format_schedule(s) for s in schedules), run_config), args.out)
    return 0


def cmd_validate_schedule(args, run_config: RunConfig) -> int:
    distances = tuple(input_parser.parse_int_list(args.d))
    diagnostics = validate_schedule(_schedule(args), distances=distances, rounds=args.T)
    _emit(export_service.write_json(diagnostics, run_config), args.out)
    if not diagnostics.valid:
        raise ScheduleError(
            f"Schedule {diagnostics.schedule} is invalid", {"messages": diagnostics.messages}
        )
    return 0


def _memory_dem(run_config: RunConfig, schedule):
    if len(run_config.d) != 1 or len(run_config.p) != 1:
        raise UsageError("Give exactly one --d and one --p")
    d, p = run_config.d[0], run_config.p[0]
    circuit = build_memory_circuit(d, run_config.T or d, schedule)
    return extract_dem(apply_noise(circuit, p))


def cmd_export_dem(args, run_config: RunConfig) -> int:
    dem = _memory_dem(run_config, _schedule(args))
    if args.color and dem.mechanisms:
        decomposition = decompose(dem, input_parser.parse_color(args.color))
        dem = decomposition.restricted if args.part != "only" else decomposition.only
    elif args.part and not args.color:
        raise UsageError("--part needs --color")

    if not dem.mechanisms:
        # Noiseless circuits export an empty file
        _emit("", args.out)
        return 0
    if args.out:
        export_service.write_dem(dem, args.out, run_config)
    else:
        sys.stdout.write(serialize_dem(dem, [header_line(run_config)[2:]]))
    return 0


def cmd_decode(args, run_config: RunConfig) -> int:
    dem = export_service.read_dem(args.dem)
    decoder = CircuitDecoderService(dem, args.backend, args.include_stage1_weight)
    events = export_service.read_events(args.events, dem.num_detectors)
    colors = [input_parser.parse_color(c) for c in args.colors.split(",")] if args.colors else config.COLORS
    flips, chosen, weights = decoder.decode_batch(events, colors)
    ordered = [c for c in config.COLORS if c in set(colors)]
    frame = pd.DataFrame({
        "shot": range(len(events)),
        "prediction": flips[:, 0].astype(int),
        "color": [ordered[k] for k in chosen],
    })
    for k, c in enumerate(ordered):
        frame[f"w_{c}"] = weights[k]
    _emit(header_line(run_config) + "\n" + frame.to_csv(index=False, lineterminator="\n"), args.out)
    return 0


def cmd_decode2d(args, run_config: RunConfig) -> int:
    if len(run_config.d) != 1:
        raise UsageError("Give exactly one --d")
    lattice = build_triangular(run_config.d[0])
    if bool(args.error) == bool(args.syndrome):
        raise UsageError("Give exactly one of --error or --syndrome")
    if args.error:
        syndrome = syndrome_from_error(lattice, input_parser.parse_qubit_set(args.error))
    else:
        syndrome = Syndrome2D.from_faces(lattice, input_parser.parse_qubit_set(args.syndrome))
    colors = [input_parser.parse_color(c) for c in args.colors.split(",")] if args.colors else config.COLORS
    result = get_decoder(lattice, args.backend).decode(syndrome, colors)
    _emit(export_service.write_json(result, run_config), args.out)
    return 0


def cmd_circuit(args, run_config: RunConfig) -> int:
    if len(run_config.d) != 1:
        raise UsageError("Give exactly one --d")
    d = run_config.d[0]
    circuit = build_memory_circuit(d, run_config.T or d, _schedule(args))
    if run_config.p:
        circuit = apply_noise(circuit, run_config.p[0])
    _emit(f"# {header_line(run_config)[2:]}\n" + to_text(circuit), args.out)
    return 0


def cmd_fit(args, run_config: RunConfig) -> int:
    table = export_service.read_results_csv(args.csv)
    report = analyze_table(table, run_config)
    for note in report.notes:
        logger.warning(note)
    _emit(export_service.write_report(report) + "\n", args.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "enumerate-schedules": cmd_enumerate_schedules,
    "validate-schedule": cmd_validate_schedule,
    "export-dem": cmd_export_dem,
    "decode": cmd_decode,
    "decode2d": cmd_decode2d,
    "circuit": cmd_circuit,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmwpm", description="Concatenated MWPM decoding of the triangular color code"
    )
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, d_default="3", with_p=True, with_T=True):
        p.add_argument("--d", default=d_default, help="Distance or comma separated distances")
        if with_T:
            p.add_argument("--T", type=int, default=None, help="Rounds (default d)")
        if with_p:
            p.add_argument("--p", default=None, help="Noise strength, list, or start:stop:count grid")
        p.add_argument("--schedule", default=None, help="CNOT schedule a,b,c,d,e,f;g,h,i,j,k,l")
        p.add_argument("--backend", default=None, choices=("sparse_blossom", "exact"))
        p.add_argument("--out", default=None, help="Output file (default stdout)")

    simulate = sub.add_parser("simulate", help="Estimate logical failure rates over a (d, p) grid")
    common(simulate)
    simulate.add_argument("--mode", default="circuit", choices=("bitflip", "circuit"))
    simulate.add_argument("--shots", type=int, default=None)
    simulate.add_argument("--ci", type=float, default=None, help="Target 99%% CI half-width")
    simulate.add_argument("--ci-mode", default="relative", choices=("absolute", "relative"))
    simulate.add_argument("--max-shots", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--workers", type=int, default=None)
    simulate.add_argument("--include-stage1-weight", action="store_true")

    enumerate_parser = sub.add_parser("enumerate-schedules", help="List valid CNOT schedules")
    enumerate_parser.add_argument("--length", type=int, default=7)
    enumerate_parser.add_argument("--reduce", action="store_true", help="One schedule per rotation orbit")
    enumerate_parser.add_argument("--out", default=None)

    validate = sub.add_parser("validate-schedule", help="Diagnose one CNOT schedule")
    validate.add_argument("--schedule", required=True)
    validate.add_argument("--d", default="3,5")
    validate.add_argument("--T", type=int, default=2)
    validate.add_argument("--out", default=None)

    export_dem = sub.add_parser("export-dem", help="Write the detector error model of a memory circuit")
    common(export_dem)
    export_dem.add_argument("--color", default=None)
    export_dem.add_argument("--part", default=None, choices=("restricted", "only"))

    decode = sub.add_parser("decode", help="Decode packed detection events against a DEM file")
    decode.add_argument("--dem", required=True)
    decode.add_argument("--events", required=True)
    decode.add_argument("--colors", default=None)
    decode.add_argument("--backend", default=None, choices=("sparse_blossom", "exact"))
    decode.add_argument("--include-stage1-weight", action="store_true")
    decode.add_argument("--out", default=None)

    decode2d = sub.add_parser("decode2d", help="Decode one perfect-measurement syndrome")
    decode2d.add_argument("--d", default="3")
    decode2d.add_argument("--error", default=None, help="Flipped qubits")
    decode2d.add_argument("--syndrome", default=None, help="Violated faces")
    decode2d.add_argument("--colors", default=None)
    decode2d.add_argument("--backend", default=None, choices=("sparse_blossom", "exact"))
    decode2d.add_argument("--out", default=None)

    circuit = sub.add_parser("circuit", help="List the slices of a memory circuit")
    common(circuit)

    fit = sub.add_parser("fit", help="Fit thresholds to a simulate CSV")
    fit.add_argument("csv")
    fit.add_argument("--out", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    start_time = time.time()
    exit_code = 0
    try:
        run_config = run_config_from_args(args)
        run_logger.log_run_start(args.command, run_config.model_dump(), resource_monitor.snapshot())
        exit_code = COMMANDS[args.command](args, run_config)
    except DecoderError as e:
        exit_code = error_handler.handle(e, {"command": args.command})
    except ValidationError as e:
        exit_code = error_handler.handle(UsageError(str(e)), {"command": args.command})
    except Exception as e:
        exit_code = error_handler.handle(e, {"command": args.command})
    run_logger.log_run_end(args.command, exit_code, time.time() - start_time)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
