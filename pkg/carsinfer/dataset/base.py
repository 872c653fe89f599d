"""On-disk artefacts: spectrum and table CSVs, JSON documents."""
import csv
import json
import logging
import os

import numpy as np

from ..models.spectral import WavenumberGrid
from ..utils.utils import DataFormatError, check_makedirs

logger = logging.getLogger("global")

SPECTRUM_HEADER = ("wavenumber_cm-1", "intensity")
FLOAT_FMT = "%.17g"


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FMT % float(value)


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; floats keep 17 significant digits."""
    dirname = os.path.dirname(path)
    if dirname:
        check_makedirs(dirname)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path, expected_header=None):
    """(header, rows of strings); raises DataFormatError naming ``path``."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataFormatError("cannot read '{}': {}".format(path, e.strerror))
    if not rows:
        raise DataFormatError("'{}' is empty".format(path))
    header, body = tuple(rows[0]), [r for r in rows[1:] if r]
    if expected_header is not None and header != tuple(expected_header):
        raise DataFormatError(
            "'{}' has header {} (expected {})".format(path, ",".join(header), ",".join(expected_header))
        )
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataFormatError("'{}' line {}: expected {} fields".format(path, i + 2, len(header)))
    return header, body


def read_numeric(path, expected_header=None):
    header, body = read_csv(path, expected_header)
    try:
        data = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as e:
        raise DataFormatError("'{}': {}".format(path, e))
    return header, data.reshape(len(body), len(header))


def write_spectrum(path, grid, values):
    write_csv(path, SPECTRUM_HEADER, zip(grid.axis, values))


def read_spectrum(path):
    """(grid, values) from a two-column spectrum CSV."""
    _, data = read_numeric(path, SPECTRUM_HEADER)
    if not np.all(np.isfinite(data)):
        raise DataFormatError("'{}' contains non-finite values".format(path))
    try:
        grid = WavenumberGrid.from_axis(data[:, 0])
    except ValueError as e:
        raise DataFormatError("'{}': {}".format(path, e))
    logger.info("# channels: {} ({})".format(grid.count, path))
    return grid, data[:, 1]


def write_json(path, doc):
    dirname = os.path.dirname(path)
    if dirname:
        check_makedirs(dirname)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise DataFormatError("cannot read '{}': {}".format(path, e.strerror))
    except ValueError as e:
        raise DataFormatError("'{}' is not valid JSON: {}".format(path, e))


def write_bands(path, axis, bands):
    """Long-format band table: wavenumber,lower,median,upper,series."""
    rows = []
    for name, band in bands.items():
        for nu, lo, med, hi in zip(axis, band.lower, band.median, band.upper):
            rows.append((nu, lo, med, hi, name))
    write_csv(path, ("wavenumber", "lower", "median", "upper", "series"), rows)


def read_bands(path):
    """{series: (wavenumber, lower, median, upper)} arrays."""
    _, body = read_csv(path, ("wavenumber", "lower", "median", "upper", "series"))
    out = {}
    try:
        for row in body:
            out.setdefault(row[4], []).append([float(v) for v in row[:4]])
    except ValueError as e:
        raise DataFormatError("'{}': {}".format(path, e))
    return {name: np.array(rows).T for name, rows in out.items()}
