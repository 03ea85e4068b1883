"""Game-theoretic analysis of bid/ask profiles and empirical payoffs.

A single job's bargaining game has a continuum of pure equilibria: any
matched price pair between the transport cost and the willingness to pay
splits the full surplus between carrier and shipper. This module provides
the classification of a bid/ask pair into feasibility regions, the
equilibrium predicate, and pure-Nash extraction from empirical payoff
matrices (profile vs. profile), the latter readable from small CSV files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import JobEconomics

__all__ = [
    "BidAskProfile",
    "classify_profile",
    "is_nash_point",
    "PayoffMatrix",
    "BestResponseReport",
    "best_responses",
    "load_payoff_csv",
    "format_nash_report",
]

NASH_TOL = 1e-9


@dataclass(frozen=True)
class BidAskProfile:
    bid: float
    ask: float
    econ: JobEconomics


def classify_profile(p: BidAskProfile) -> str:
    """Sort a bid/ask pair into its feasibility region.

    ``set1``: the bid (or the whole pair) sits below the transport cost, so
    the carrier can never profit; ``set2``: the ask (or pair) exceeds the
    willingness to pay, so the shipper can never profit; ``set3``: prices
    are inside the band but the bid undercuts the ask, so nothing ships;
    ``feasible``: cost <= ask <= bid <= pay, the only region where both
    sides can gain. Overlaps resolve by first match in that order.
    """
    cost, pay = p.econ.trn_cost, p.econ.max_pay
    if p.bid < cost:
        return "set1"
    if p.ask > pay:
        return "set2"
    if p.bid < p.ask:
        return "set3"
    if cost <= p.ask and p.bid <= pay:
        return "feasible"
    # Remaining corners: ask below cost (carrier-side loss if shipped) or
    # bid above pay (shipper-side loss); classify with the losing side.
    return "set1" if p.ask < cost else "set2"


def is_nash_point(p: BidAskProfile, tol: float = NASH_TOL) -> bool:
    """True iff prices match (within tol) inside the feasible band.

    At such a point neither agent can unilaterally gain: the full surplus
    pay - cost is already split between the two of them.
    """
    if abs(p.bid - p.ask) > tol:
        return False
    lo, hi = min(p.bid, p.ask), max(p.bid, p.ask)
    return p.econ.trn_cost <= lo and hi <= p.econ.max_pay


# ---------------------------------------------------------------------------
# Empirical payoff matrices


@dataclass(frozen=True)
class PayoffMatrix:
    """Carrier-profile rows vs shipper-profile columns; NaN cells mean N/A."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    carrier: np.ndarray
    shipper: np.ndarray

    def __post_init__(self) -> None:
        shape = (len(self.row_labels), len(self.col_labels))
        if self.carrier.shape != shape or self.shipper.shape != shape:
            raise ValueError("payoff arrays do not match the label grid")
        if len(set(self.row_labels)) != len(self.row_labels):
            raise ValueError("duplicate row labels")
        if len(set(self.col_labels)) != len(self.col_labels):
            raise ValueError("duplicate column labels")


@dataclass(frozen=True)
class BestResponseReport:
    carrier_best: dict[str, tuple[str, ...]]   # per shipper column: best carrier rows
    shipper_best: dict[str, tuple[str, ...]]   # per carrier row: best shipper columns
    nash: tuple[tuple[str, str], ...]          # (carrier row, shipper column) cells
    undefined_cols: tuple[str, ...]
    undefined_rows: tuple[str, ...]


def best_responses(matrix: PayoffMatrix) -> BestResponseReport:
    """Best responses per player and their intersections (pure Nash cells).

    Ties retain every maximizer. N/A payoffs never win a comparison (they
    are treated as minus infinity); a row or column that is entirely N/A is
    reported as undefined instead of producing responses.
    """
    carrier = np.where(np.isnan(matrix.carrier), -np.inf, matrix.carrier)
    shipper = np.where(np.isnan(matrix.shipper), -np.inf, matrix.shipper)
    carrier_best: dict[str, tuple[str, ...]] = {}
    shipper_best: dict[str, tuple[str, ...]] = {}
    undefined_cols: list[str] = []
    undefined_rows: list[str] = []
    best_c = np.zeros_like(carrier, dtype=bool)
    best_s = np.zeros_like(shipper, dtype=bool)
    for j, col in enumerate(matrix.col_labels):
        column = carrier[:, j]
        if np.all(np.isinf(column)):
            undefined_cols.append(col)
            continue
        top = column.max()
        rows = column == top
        best_c[:, j] = rows
        carrier_best[col] = tuple(r for r, hit in zip(matrix.row_labels, rows) if hit)
    for i, row in enumerate(matrix.row_labels):
        line = shipper[i, :]
        if np.all(np.isinf(line)):
            undefined_rows.append(row)
            continue
        top = line.max()
        cols = line == top
        best_s[i, :] = cols
        shipper_best[row] = tuple(c for c, hit in zip(matrix.col_labels, cols) if hit)
    nash = [
        (matrix.row_labels[i], matrix.col_labels[j])
        for i in range(len(matrix.row_labels))
        for j in range(len(matrix.col_labels))
        if best_c[i, j] and best_s[i, j]
    ]
    return BestResponseReport(
        carrier_best=carrier_best,
        shipper_best=shipper_best,
        nash=tuple(nash),
        undefined_cols=tuple(undefined_cols),
        undefined_rows=tuple(undefined_rows),
    )


def _parse_cell(text: str) -> tuple[float, float]:
    text = text.strip()
    if text.upper() in ("NA", "N/A", ""):
        return math.nan, math.nan
    try:
        c, s = text.split("/")
        return float(c), float(s)
    except ValueError:
        raise ValueError(f"bad payoff cell {text!r}; expected 'carrier/shipper' or 'NA'") from None


def load_payoff_csv(path: str | Path) -> PayoffMatrix:
    """Read a payoff matrix CSV.

    First row: corner label then shipper profile names. Each further row:
    carrier profile name then cells ``carrier_payoff/shipper_payoff`` or
    ``NA``.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ValueError(f"{path}: payoff CSV needs a header row and at least one data row")
    col_labels = tuple(c.strip() for c in rows[0][1:])
    row_labels = []
    carrier = []
    shipper = []
    for row in rows[1:]:
        if len(row) != len(col_labels) + 1:
            raise ValueError(f"{path}: row {row[0]!r} has {len(row) - 1} cells, expected {len(col_labels)}")
        row_labels.append(row[0].strip())
        parsed = [_parse_cell(c) for c in row[1:]]
        carrier.append([p[0] for p in parsed])
        shipper.append([p[1] for p in parsed])
    return PayoffMatrix(
        row_labels=tuple(row_labels),
        col_labels=tuple(col_labels),
        carrier=np.array(carrier),
        shipper=np.array(shipper),
    )


def format_nash_report(matrix: PayoffMatrix, report: BestResponseReport | None = None) -> str:
    """Annotated text table: C! / S! mark best responses, ** marks Nash cells."""
    if report is None:
        report = best_responses(matrix)
    nash = set(report.nash)
    width = 18
    lines = []
    header = "carrier \\ shipper".ljust(width) + "".join(c.ljust(width) for c in matrix.col_labels)
    lines.append(header)
    for i, row in enumerate(matrix.row_labels):
        cells = []
        for j, col in enumerate(matrix.col_labels):
            c, s = matrix.carrier[i, j], matrix.shipper[i, j]
            if math.isnan(c) and math.isnan(s):
                text = "NA"
            else:
                text = f"{c:.2f}/{s:.2f}"
            marks = ""
            if row in report.carrier_best.get(col, ()):
                marks += "C!"
            if col in report.shipper_best.get(row, ()):
                marks += "S!"
            if (row, col) in nash:
                marks += "**"
            cells.append((text + " " + marks).strip().ljust(width))
        lines.append(row.ljust(width) + "".join(cells))
    if report.nash:
        pairs = ", ".join(f"(carrier {r}, shipper {c})" for r, c in report.nash)
        lines.append(f"pure Nash cells: {pairs}")
    else:
        lines.append("pure Nash cells: none")
    for col in report.undefined_cols:
        lines.append(f"column {col}: all payoffs N/A, best response undefined")
    for row in report.undefined_rows:
        lines.append(f"row {row}: all payoffs N/A, best response undefined")
    return "\n".join(lines)
