"""
Deterministic JSON documents for risk reports, grid sidecars and manifests.
"""

import json
import logging
import math
from typing import Any, Dict

import numpy as np

from bayes_fusion.models import PerformanceGrid

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """Convert numpy values to JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_plain(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return "nan"
        if math.isinf(number):
            return "inf" if number > 0 else "-inf"
        return number
    return value


class JSONReportExporter:
    """Serialises report documents with sorted keys and a fixed indent."""

    def __init__(self, indent: int = 2) -> None:
        self.indent = indent

    def generate(self, document: Dict[str, Any]) -> bytes:
        text = json.dumps(_plain(document), sort_keys=True, indent=self.indent, allow_nan=False)
        return (text + "\n").encode("utf-8")

    def grid_sidecar(self, grid: PerformanceGrid, extra: Dict[str, Any]) -> Dict[str, Any]:
        """
        Metadata that travels next to a grid CSV: bin edges, sample counts and
        normalization diagnostics.
        """
        doc = {
            "decision_edges": grid.decision_edges,
            "decision_widths": grid.decision_widths,
            "object_edges": grid.object_edges,
            "row_counts": grid.counts,
            "effective_counts": grid.effective_counts,
            "normalization": grid.normalization_report(),
            "max_decision": grid.max_decision,
            "min_decision": grid.min_decision,
        }
        mean, spread = grid.row_moments()
        doc["row_mean"] = mean
        doc["row_std"] = spread
        doc.update(extra)
        return doc
