"""
CSV export of performance grids and fused decisions, and CSV feature input.

Floats are written with ``repr`` so that a value read back is bit-identical,
and nothing time-dependent is written, so identical inputs give identical
bytes.
"""

import csv
import io
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from bayes_fusion.exceptions import InputDomainError, ScenarioFileError
from bayes_fusion.models import PerformanceGrid

logger = logging.getLogger(__name__)

GRID_CORNER = "h\\c"


def format_float(value: float) -> str:
    """Shortest round-tripping text for a float; '' for NaN."""
    value = float(value)
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


class CSVGridExporter:
    """Exports performance grids and decision tables to CSV format."""

    def generate_grid_csv(self, grid: PerformanceGrid) -> bytes:
        """
        Generate the performance grid as CSV.

        The header row holds the decision-bin centers after a ``h\\c`` corner
        cell; each following row starts with its object-bin center. Empty rows
        (no samples) have empty cells.

        Args:
            grid: Performance grid to export

        Returns:
            CSV file as UTF-8 bytes
        """
        output = io.StringIO()
        writer = csv.writer(output, lineterminator="\n")
        writer.writerow([GRID_CORNER] + [format_float(c) for c in grid.decision_centers])
        for h, row in zip(grid.object_centers, grid.values):
            writer.writerow([format_float(h)] + [format_float(value) for value in row])
        logger.debug(f"Wrote {grid.shape[0]}x{grid.shape[1]} grid CSV")
        return output.getvalue().encode("utf-8")

    def generate_decisions_csv(
        self,
        features: np.ndarray,
        decisions: np.ndarray,
        soft: Optional[np.ndarray] = None,
    ) -> bytes:
        """
        Generate one row per feature vector with its fused decision.

        Args:
            features: Array (L, N) of joint feature rows
            decisions: Array (L,) of decisions in K
            soft: Optional posterior means before quantization

        Returns:
            CSV file as UTF-8 bytes
        """
        output = io.StringIO()
        writer = csv.writer(output, lineterminator="\n")
        headers = [f"a_{i + 1}" for i in range(features.shape[1])] + ["decision"]
        if soft is not None:
            headers.append("posterior_mean")
        writer.writerow(headers)
        for index, row in enumerate(features):
            cells = [format_float(x) for x in row] + [format_float(decisions[index])]
            if soft is not None:
                cells.append(format_float(soft[index]))
            writer.writerow(cells)
        return output.getvalue().encode("utf-8")


def _parse_cell(text: str, line: int) -> float:
    value = text.strip().lower()
    if value in ("inf", "+inf"):
        return math.inf
    if value == "-inf":
        return -math.inf
    try:
        return float(value)
    except ValueError:
        raise InputDomainError(f"Line {line}: '{text}' is not a number") from None


def read_feature_rows(source: Union[str, Path, bytes], dims: int) -> np.ndarray:
    """
    Read joint feature vectors from CSV, one row per vector.

    A first line that is not numeric is treated as a header. Blank lines are
    skipped.

    Args:
        source: File path or raw CSV bytes
        dims: Expected number of columns (total feature dimension N)

    Returns:
        Array of shape (L, dims)

    Raises:
        ScenarioFileError: If the file cannot be read
        InputDomainError: If a row has the wrong width or a non-numeric cell
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8-sig")
    else:
        try:
            text = Path(source).read_text(encoding="utf-8-sig")
        except OSError as e:
            raise ScenarioFileError(f"Cannot read feature file {source}: {e}") from e

    rows: List[Sequence[float]] = []
    for line, cells in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not cells or all(not cell.strip() for cell in cells):
            continue
        if line == 1 and not _is_numeric_row(cells):
            continue
        if len(cells) != dims:
            raise InputDomainError(f"Line {line}: expected {dims} columns, got {len(cells)}")
        rows.append([_parse_cell(cell, line) for cell in cells])
    logger.info(f"Read {len(rows)} feature rows")
    return np.asarray(rows, dtype=float).reshape(len(rows), dims)


def _is_numeric_row(cells: Sequence[str]) -> bool:
    try:
        for cell in cells:
            _parse_cell(cell, 1)
    except InputDomainError:
        return False
    return True


def parse_vector(text: str) -> List[float]:
    """'a1,a2,...' to a list of floats."""
    cells = [cell for cell in text.split(",") if cell.strip()]
    if not cells:
        raise InputDomainError("Empty feature vector")
    return [_parse_cell(cell, 1) for cell in cells]
