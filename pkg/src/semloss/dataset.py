"""Measured metric grids over (SNR, compression ratio).

The reference measurements are stored verbatim as decimal text, one row per
SNR value in the order they were tabulated (highest SNR first), and parsed on
access.  Grids handed out by this module always have increasing axes.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricGrid",
    "MetricSlice",
    "GridError",
    "TABLE_NAMES",
    "embedded_table",
    "embedded_source",
    "load_grid",
    "export_grid",
    "slice_at_rho",
    "SNR_SCALES",
    "snr_input",
]

CORNER = "gamma_db\\rho"

_RHO = ("2", "4", "6", "8", "12")

# name -> (metric label, rows of "gamma v(rho=2) v(4) v(6) v(8) v(12)")
_TABLES = {
    "djscc-psnr": ("psnr-dB", """
        8  35.1659 34.5505 34.0580 33.6110 33.2048
        4  34.6355 33.7960 33.1808 32.7066 32.1396
        0  33.9541 32.9471 32.2797 31.6707 30.9957
        -1 33.6718 32.6668 31.9636 31.4396 30.7259
        -2 33.3420 32.4279 31.7131 31.0607 30.3161
        -3 33.0512 32.0707 31.3065 30.7091 29.9191
        -4 32.7076 31.7420 30.9968 30.3004 29.4664
        -5 32.4621 31.3836 30.5894 29.9658 29.0585
        -6 32.0890 31.0723 30.2680 29.5925 28.6726
        -7 31.8650 30.7567 29.9635 29.2635 28.3096
    """),
    "djscc-ssim": ("ssim-percent", """
        8  93.9029 93.0065 92.0605 90.8419 89.3904
        4  92.8318 91.0260 89.9122 88.5497 86.9133
        0  91.4196 88.2488 86.1295 84.2376 81.8966
        -1 90.7393 87.6952 85.3222 83.4208 80.6235
        -2 90.2920 86.7390 84.0706 81.7849 78.9081
        -3 89.2889 85.2669 82.4933 80.2096 76.8448
        -4 88.2929 83.8135 80.8698 78.0683 74.5515
        -5 86.9725 82.3352 78.8621 76.3074 72.1772
        -6 85.5012 80.6746 77.0950 74.1351 69.7947
        -7 84.3367 78.9294 75.2783 72.1513 67.5156
    """),
    "djscc-mse": ("image-mse", """
        8  30.1747 35.2691 40.1839 47.5344 58.4974
        4  36.4795 48.8558 55.1101 63.4826 76.4652
        0  44.4293 64.2171 77.8224 88.3959 106.3604
        -1 49.6283 65.6896 78.7179 90.9191 111.2500
        -2 50.5202 71.9030 86.6523 102.2033 123.2206
        -3 57.5215 80.8606 97.6941 111.2566 134.7072
        -4 63.0393 89.4421 106.4504 126.8159 151.5233
        -5 70.4309 99.1093 122.2410 136.6730 167.8200
        -6 80.5933 110.0527 134.3242 153.9908 185.4238
        -7 87.7364 123.5263 147.7795 170.0484 204.4302
    """),
    "evit-accuracy": ("accuracy-percent", """
        8  97.7051 97.2967 96.9067 96.5121 95.8632
        4  97.2928 96.5092 96.0357 95.3670 94.3556
        0  97.0890 95.6177 94.5010 93.4146 91.3953
        -1 96.8802 95.3873 93.9642 92.7888 90.1026
        -2 96.6108 94.8307 93.1518 91.5226 88.5643
        -3 96.0471 93.7941 92.0042 90.1831 86.5272
        -4 95.4615 92.9421 90.5939 88.3597 84.3994
        -5 94.7738 91.9048 89.0595 86.6307 81.8966
        -6 93.9276 90.6833 87.5220 84.6269 79.1926
    """),
    "evit-precision": ("precision-percent", """
        8  97.6660 97.3024 96.9487 96.5824 95.9765
        4  97.2554 96.5211 96.0831 95.4476 94.4837
        0  96.8145 95.6488 94.5692 93.5293 91.5745
        -1 96.8520 95.3238 94.0368 92.8982 90.2869
        -2 96.5923 94.8722 93.2397 91.6484 88.7577
        -3 96.0325 93.8358 92.1079 90.3163 86.7739
        -4 95.4552 92.9980 90.7076 88.5351 84.6581
        -5 94.7731 91.9842 89.1803 86.8053 82.1347
        -6 93.9442 90.7627 87.6891 84.8078 79.4080
    """),
    "evit-recall": ("recall-percent", """
        8  97.6127 97.2508 96.8902 96.5088 95.8397
        4  97.2018 96.4655 96.0222 95.3674 94.3372
        0  96.7542 95.5818 94.4970 93.4260 91.3905
        -1 96.7982 95.1904 93.9644 92.8050 90.1037
        -2 96.5321 94.8024 93.1568 91.5443 88.5721
        -3 95.9718 93.7701 92.0142 90.2106 86.5420
        -4 95.3896 92.9224 90.6089 88.3929 84.4213
        -5 94.7052 91.8891 89.0794 86.6693 81.9252
        -6 93.8619 90.6713 87.5462 84.6706 79.2274
    """),
}

TABLE_NAMES = tuple(_TABLES)


SNR_SCALES = ("linear", "db")


def snr_input(gamma_db, scale: str = "linear"):
    """Map tabulated SNR in dB to the variable the fitted models consume.

    ``"linear"`` gives the power ratio 10**(gamma/10); ``"db"`` passes the
    values through.
    """
    if scale == "linear":
        return np.power(10.0, np.asarray(gamma_db, dtype=np.float64) / 10.0)
    if scale == "db":
        return np.asarray(gamma_db, dtype=np.float64)
    raise ValueError(f"unknown SNR scale {scale!r}; expected one of {SNR_SCALES}")


class GridError(ValueError):
    """Raised for malformed or invalid metric grids."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MetricGrid:
    """A dense grid of one metric, rows indexed by SNR (dB), columns by rho."""

    metric_name: str
    gamma_axis: np.ndarray
    rho_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        gamma = _frozen(self.gamma_axis).reshape(-1)
        rho = _frozen(self.rho_axis).reshape(-1)
        values = _frozen(self.values)
        object.__setattr__(self, "gamma_axis", gamma)
        object.__setattr__(self, "rho_axis", rho)
        object.__setattr__(self, "values", values)

        if gamma.size == 0 or rho.size == 0:
            raise GridError("grid axes must be non-empty")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(rho))):
            raise GridError("axis values must be finite")
        if np.any(np.diff(gamma) <= 0):
            raise GridError(f"gamma axis must be strictly increasing: {gamma.tolist()}")
        if np.any(np.diff(rho) <= 0):
            raise GridError(f"rho axis must be strictly increasing: {rho.tolist()}")
        if np.any(rho <= 0):
            raise GridError("rho values must be positive")
        if values.shape != (gamma.size, rho.size):
            raise GridError(
                f"values shape {values.shape} does not match axes "
                f"({gamma.size}, {rho.size})"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("grid values must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_cells(self) -> int:
        return self.values.size

    def value_at(self, gamma: float, rho: float) -> float:
        i = _index_of(self.gamma_axis, gamma, "gamma")
        j = _index_of(self.rho_axis, rho, "rho")
        return float(self.values[i, j])

    def __eq__(self, other):
        if not isinstance(other, MetricGrid):
            return NotImplemented
        return (
            self.metric_name == other.metric_name
            and np.array_equal(self.gamma_axis, other.gamma_axis)
            and np.array_equal(self.rho_axis, other.rho_axis)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MetricSlice:
    """One column of a grid: the metric against SNR at a fixed rho."""

    metric_name: str
    rho: float
    gamma_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        gamma = _frozen(self.gamma_axis).reshape(-1)
        values = _frozen(self.values).reshape(-1)
        object.__setattr__(self, "gamma_axis", gamma)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "rho", float(self.rho))
        if gamma.size != values.size:
            raise GridError(f"slice has {values.size} values for {gamma.size} SNR points")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(values))):
            raise GridError("slice entries must be finite")

    def __len__(self):
        return self.values.size


def _index_of(axis: np.ndarray, value: float, label: str) -> int:
    hits = np.flatnonzero(axis == value)
    if hits.size == 0:
        raise KeyError(f"{label}={value:g} not on axis; available: {axis.tolist()}")
    return int(hits[0])


def _parse_table(text: str):
    rows = [line.split() for line in text.strip().splitlines()]
    rows.sort(key=lambda r: float(r[0]))
    return rows


def embedded_source(name: str) -> dict[str, list[str]]:
    """Return the verbatim decimal text of a reference table.

    Keys are the SNR labels as tabulated, values the five metric strings for
    rho = 2, 4, 6, 8, 12.
    """
    _check_name(name)
    _, text = _TABLES[name]
    return {r[0]: list(r[1:]) for r in _parse_table(text)}


def _check_name(name: str):
    if name not in _TABLES:
        raise KeyError(
            f"unknown table {name!r}; valid tables: {', '.join(TABLE_NAMES)}"
        )


def embedded_table(name: str) -> MetricGrid:
    """Parse one of the reference measurement tables into a MetricGrid."""
    _check_name(name)
    label, text = _TABLES[name]
    rows = _parse_table(text)
    return MetricGrid(
        metric_name=label,
        gamma_axis=[float(r[0]) for r in rows],
        rho_axis=[float(r) for r in _RHO],
        values=[[float(v) for v in r[1:]] for r in rows],
    )


def _parse_number(cell: str, where: str) -> float:
    try:
        value = float(cell.strip())
    except ValueError:
        raise GridError(f"{where}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise GridError(f"{where}: non-finite value {cell!r}")
    return value


def parse_grid(text: str, metric_name: str = "user", source: str = "<string>") -> MetricGrid:
    """Parse grid CSV text (see :func:`load_grid`)."""
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        raise GridError(f"{source}: empty grid file")
    header = rows[0]
    if header[0].strip().lstrip("﻿") != CORNER:
        raise GridError(f"{source}: row 1, column 1: expected {CORNER!r}, got {header[0]!r}")
    if len(header) < 2:
        raise GridError(f"{source}: row 1: no rho columns")
    rho = [_parse_number(c, f"{source}: row 1, column {j + 1}") for j, c in enumerate(header[1:], 1)]

    gamma, values = [], []
    for i, row in enumerate(rows[1:], 2):
        if len(row) != len(header):
            raise GridError(
                f"{source}: row {i}: expected {len(header)} columns, found {len(row)}"
            )
        gamma.append(_parse_number(row[0], f"{source}: row {i}, column 1"))
        values.append([
            _parse_number(c, f"{source}: row {i}, column {j + 1}")
            for j, c in enumerate(row[1:], 1)
        ])
    if not gamma:
        raise GridError(f"{source}: no data rows")
    return MetricGrid(metric_name, gamma, rho, values)


def load_grid(path, metric_name: str | None = None) -> MetricGrid:
    """Read a measurement grid from CSV.

    The first header cell is the literal ``gamma_db\\rho``, the remaining header
    cells are the compression ratios; every following row is an SNR in dB and
    then one metric value per ratio.
    """
    path = os.fspath(path)
    with open(path, encoding="utf-8", newline="") as f:
        text = f.read()
    if metric_name is None:
        metric_name = os.path.splitext(os.path.basename(path))[0]
    return parse_grid(text, metric_name, source=path)


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips, so at least as precise as %.6g
    return repr(float(x))


def format_grid(grid: MetricGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([CORNER, *(_fmt(r) for r in grid.rho_axis)])
    for g, row in zip(grid.gamma_axis, grid.values):
        w.writerow([_fmt(g), *(_fmt(v) for v in row)])
    return buf.getvalue()


def export_grid(grid: MetricGrid, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_grid(grid))


def slice_at_rho(grid: MetricGrid, rho: float) -> MetricSlice:
    hits = np.flatnonzero(grid.rho_axis == rho)
    if hits.size == 0:
        raise KeyError(
            f"rho={rho:g} not in grid; available rho values: "
            f"{', '.join(f'{r:g}' for r in grid.rho_axis)}"
        )
    j = int(hits[0])
    return MetricSlice(grid.metric_name, float(grid.rho_axis[j]), grid.gamma_axis, grid.values[:, j])
