"""Error tables, run reports and CSV output."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .ritz import eoc


def fmt(v) -> str:
    """17 significant digits; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def config_hash(text) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def header_line(cfg_hash: str = "") -> str:
    return f"# dynbc {__version__} config_sha256={cfg_hash or 'none'}"


def write_csv(path, columns, rows, cfg_hash: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(header_line(cfg_hash) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path):
    """Return (columns, rows) from a file written by :func:`write_csv`; numeric cells become floats."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    cols = lines[0].split(",")
    rows = [[_cell(v) for v in ln.split(",")] for ln in lines[1:]]
    return cols, rows


def _cell(v: str):
    if not v:
        return float("nan")
    try:
        return float(v)
    except ValueError:
        return v


@dataclass
class ErrorTable:
    """Errors per refinement level with pairwise convergence rates.

    ``sizes`` are mesh widths or step sizes, strictly decreasing.
    """

    size_label: str
    sizes: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)

    def add(self, size: float, values: dict) -> None:
        if self.sizes and not size < self.sizes[-1]:
            raise ValueError("sizes must be strictly decreasing")
        self.sizes.append(float(size))
        for k, v in values.items():
            self.errors.setdefault(k, []).append(float(v))

    @property
    def names(self):
        return list(self.errors)

    def rates(self, name) -> np.ndarray:
        return eoc(self.sizes, self.errors[name])

    def last_rates(self, name, count: int = 2) -> np.ndarray:
        r = self.rates(name)
        return r[-count:] if count else r

    def columns(self):
        cols = [self.size_label]
        for name in self.names:
            cols += [name, f"eoc_{name}"]
        return cols

    def rows(self):
        out = []
        rates = {k: self.rates(k) for k in self.names}
        for i, h in enumerate(self.sizes):
            row = [h]
            for k in self.names:
                row += [self.errors[k][i], rates[k][i - 1] if i > 0 else None]
            out.append(row)
        return out

    def to_csv(self, path, cfg_hash: str = "") -> None:
        write_csv(path, self.columns(), self.rows(), cfg_hash)

    def format(self, names=None) -> str:
        names = names or self.names
        lines = [f"{self.size_label:>12}" + "".join(f"{n:>18}{'eoc':>7}" for n in names)]
        rates = {k: self.rates(k) for k in names}
        for i, h in enumerate(self.sizes):
            s = f"{h:12.5g}"
            for k in names:
                r = rates[k][i - 1] if i > 0 else float("nan")
                s += f"{self.errors[k][i]:18.6e}" + (f"{r:7.3f}" if i > 0 else f"{'':7}")
            lines.append(s)
        return "\n".join(lines)

    def check(self, thresholds: dict, count: int = 2) -> list:
        """Failures as (name, rate, threshold) for the last ``count`` rates."""
        bad = []
        for name, (lo, hi) in thresholds.items():
            if name not in self.errors:
                bad.append((name, float("nan"), lo))
                continue
            for r in self.last_rates(name, count):
                if not (lo is None or r >= lo) or not (hi is None or r <= hi):
                    bad.append((name, float(r), (lo, hi)))
        return bad


@dataclass
class RunReport:
    problem: str
    metadata: dict = field(default_factory=dict)
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    error_table: Optional[ErrorTable] = None
    timings: dict = field(default_factory=dict)
