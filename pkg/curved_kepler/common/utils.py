"""
General Utility functions
"""

import csv
import logging
import math
import os
import json
import typing
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Type, Any, Iterable, List, Optional, Sequence, Union

import numpy as np

from curved_kepler.common.errors import ValidationError

LOGGER = logging.getLogger(__name__)

PACKAGE_LOGGER_NAME = "curved_kepler"


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """Attach console and optional file handlers to the package logger"""
    logger = logging.getLogger(PACKAGE_LOGGER_NAME)
    logger.setLevel(level)

    # drop handlers from a previous call so repeated runs don't duplicate lines
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    log_formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
    console_logging_handler = logging.StreamHandler()
    console_logging_handler.setFormatter(log_formatter)
    logger.addHandler(console_logging_handler)

    if log_file is not None:
        file_logging_handler = logging.FileHandler(log_file)
        file_logging_handler.setFormatter(log_formatter)
        logger.addHandler(file_logging_handler)

    return logger


def parse_number(value: Union[str, int, float], field: str = "value") -> float:
    """Parse a JSON number, a decimal string or a rational string such as "2/3" """
    if isinstance(value, bool):
        raise ValidationError(field, f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        number = float(value)
    elif isinstance(value, str):
        try:
            number = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError(field, f"cannot parse {value!r} as a number ({e})") from e
    else:
        raise ValidationError(field, f"expected a number, got {value!r}")

    if not math.isfinite(number):
        raise ValidationError(field, f"{value!r} is not finite")
    return number


def format_float(value: float) -> str:
    """Shortest representation that round-trips to the same double"""
    return repr(float(value))


def write_csv(file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write rows to a csv file, floats in round-trip form. Returns the number of rows"""
    count = 0
    with open(file_path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
            count += 1
    LOGGER.debug("Wrote %d rows to %s", count, file_path)
    return count


def read_csv(file_path: str) -> List[dict]:
    """Read a csv file written by write_csv into a list of dictionaries"""
    with open(file_path, "r", encoding="utf-8", newline="") as file:
        return list(csv.DictReader(file))


def save_json(data, file_path):
    """Save a json object to a file path"""
    try:
        with open(file_path, "w", encoding="utf-8") as file:
            json.dump(data, file, indent=4, sort_keys=True)
    except Exception as e:
        LOGGER.warning("Failed to save json to %s due to %s", file_path, e)


def load_json(file_path):
    """Load a json object from a file path"""
    try:
        with open(file_path, "r", encoding="utf-8") as file:
            return json.load(file)
    except Exception as e:
        LOGGER.warning("Failed to load json from %s due to %s", file_path, e)
        return None


def _strip_optional(fieldtype):
    """Return T for Optional[T], otherwise the type itself"""
    if typing.get_origin(fieldtype) is Union:
        args = [arg for arg in typing.get_args(fieldtype) if arg is not type(None)]
        if len(args) == 1:
            return args[0]
    return fieldtype


def from_dict(dataclass_type: Type[Any], data: dict, prefix: str = "") -> Any:
    """Recursive function to populate the dataclass and its nested members

    Numeric fields accept numbers or rational strings; unknown keys are rejected.
    """
    if not isinstance(data, dict):
        raise ValidationError(prefix or dataclass_type.__name__, "expected an object")

    data = dict(data)
    fieldtypes = {f.name: f.type for f in dataclass_type.__dataclass_fields__.values()}

    unknown = set(data) - set(fieldtypes)
    if unknown:
        raise ValidationError(f"{prefix}{sorted(unknown)[0]}", "unknown configuration key")

    for field, fieldtype in fieldtypes.items():
        if field not in data or data[field] is None:
            continue
        name = f"{prefix}{field}"
        fieldtype = _strip_optional(fieldtype)

        # If the field is a dataclass, recursively deserialize it
        if hasattr(fieldtype, "__dataclass_fields__"):
            data[field] = from_dict(fieldtype, data[field], prefix=f"{name}.")
        # If the field is a List of dataclasses or numbers, handle it element wise
        elif typing.get_origin(fieldtype) is list:
            if not isinstance(data[field], list):
                raise ValidationError(name, "expected a list")
            item_type = typing.get_args(fieldtype)[0]
            if hasattr(item_type, "__dataclass_fields__"):
                data[field] = [from_dict(item_type, item, prefix=f"{name}.") for item in data[field]]
            elif item_type is float:
                data[field] = [parse_number(item, f"{name}[{i}]") for i, item in enumerate(data[field])]
        elif fieldtype is float:
            data[field] = parse_number(data[field], name)
        elif fieldtype is int:
            number = parse_number(data[field], name)
            if number != int(number):
                raise ValidationError(name, f"expected an integer, got {data[field]!r}")
            data[field] = int(number)

    # Return an instance of the dataclass, passing the processed dictionary
    return dataclass_type(**data)


def thread_count(env_var: str = "CURVED_KEPLER_THREADS", default: int = 8) -> int:
    """Worker thread count from the environment"""
    value = os.environ.get(env_var)
    if value is None or value.strip() == "":
        return default
    try:
        count = int(value)
    except ValueError as e:
        raise ValidationError(env_var, f"expected a positive integer, got {value!r}") from e
    if count < 1:
        raise ValidationError(env_var, f"expected a positive integer, got {value!r}")
    return count


@dataclass
class ResidualStatistics:
    """Contains statistical information about a set of residuals"""

    key: str
    min: float
    max: float
    mean: float
    median: float
    std: float

    def __str__(self):
        return f"{self.key}: {self.min} to {self.max}, mean: {self.mean}, median: {self.median}, std: {self.std}"

    def to_dict(self):
        """Convert the statistics to a dictionary"""
        return asdict(self)


def get_statistics(key: str, values: Iterable[float]) -> Optional[ResidualStatistics]:
    """Get the statistics of a set of values, ignoring NaN entries"""
    values = [float(value) for value in values if value is not None and not math.isnan(value)]

    if len(values) == 0:
        return None

    return ResidualStatistics(
        key=key,
        min=float(np.min(values)),
        max=float(np.max(values)),
        mean=float(np.mean(values)),
        median=float(np.median(values)),
        std=float(np.std(values)),
    )
