import re
from typing import List, Tuple

import numpy as np

from utils.error_handler import InputFormatError


class InputParser:

    COLOR_ALIASES = {
        "r": "r", "red": "r",
        "g": "g", "green": "g",
        "b": "b", "blue": "b",
    }

    @staticmethod
    def _clean(value: str) -> str:
        """Strip whitespace and control characters"""
        value = re.sub(r'[\x00-\x1f\x7f]', '', str(value))
        return re.sub(r'\s+', '', value)

    @staticmethod
    def parse_int_list(value: str) -> List[int]:
        """Parse '3,5,7' into [3, 5, 7]"""
        value = InputParser._clean(value)
        if not value:
            return []
        try:
            return [int(item) for item in value.split(",") if item != ""]
        except ValueError:
            raise InputFormatError(f"Expected a comma separated list of integers, got '{value}'")

    @staticmethod
    def parse_qubit_set(value: str) -> frozenset:
        qubits = InputParser.parse_int_list(value)
        if any(q < 0 for q in qubits):
            raise InputFormatError("Qubit indices must be non-negative")
        return frozenset(qubits)

    @staticmethod
    def parse_schedule(value: str) -> Tuple[int, ...]:
        """Parse 'a,b,c,d,e,f;g,h,i,j,k,l' into a 12-tuple"""
        value = InputParser._clean(value)
        parts = value.split(";")
        if len(parts) != 2:
            raise InputFormatError(f"Schedule must have a Z part and an X part separated by ';', got '{value}'")
        numbers = []
        for part in parts:
            items = [item for item in part.split(",") if item != ""]
            if len(items) != 6:
                raise InputFormatError(f"Each schedule part needs six integers, got '{part}'")
            try:
                numbers.extend(int(item) for item in items)
            except ValueError:
                raise InputFormatError(f"Schedule entries must be integers, got '{part}'")
        if any(n < 1 for n in numbers):
            raise InputFormatError("Schedule entries must be positive")
        return tuple(numbers)

    @staticmethod
    def format_schedule(schedule) -> str:
        schedule = tuple(schedule)
        return ",".join(map(str, schedule[:6])) + ";" + ",".join(map(str, schedule[6:]))

    @staticmethod
    def parse_p_values(value: str) -> List[float]:
        """Parse a single probability or a 'start:stop:count' log-spaced grid"""
        value = InputParser._clean(value)
        try:
            if ":" in value:
                start, stop, count = value.split(":")
                start, stop, count = float(start), float(stop), int(count)
                if start <= 0 or stop <= 0 or count < 1:
                    raise InputFormatError(f"Grid '{value}' needs positive bounds and count")
                if count == 1:
                    return [start]
                return [float(p) for p in np.geomspace(start, stop, count)]
            if "," in value:
                return [float(item) for item in value.split(",") if item != ""]
            return [float(value)]
        except ValueError:
            raise InputFormatError(f"Cannot parse noise strength '{value}'")

    @staticmethod
    def parse_color(value: str) -> str:
        color = InputParser.COLOR_ALIASES.get(InputParser._clean(value).lower())
        if color is None:
            raise InputFormatError(f"Unknown color '{value}' (expected r, g or b)")
        return color


input_parser = InputParser()
