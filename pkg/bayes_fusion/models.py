"""
Data models for the fusion engine.

This module defines the immutable domain structures passed between the
services (scenarios, sample batches, performance grids, risk estimates and run
manifests), as well as the Django model that records report runs.
"""

import dataclasses
import json
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from django.db import models
from django.utils import timezone

from bayes_fusion import __version__
from bayes_fusion.distributions.priors import Prior
from bayes_fusion.distributions.sensors import SensorModel
from bayes_fusion.exceptions import InputDomainError, ScenarioFileError
from bayes_fusion.spaces import CostFunction, DecisionSpace, ObjectSpace

CENTRALIZED = "centralized"
PBPO = "pbpo"


@dataclass(frozen=True)
class FusionTopology:
    """
    Centralized fusion or a two-stage distributed (PBPO) network.

    For PBPO, ``groups`` partitions the sensor indices 0..M-1 and
    ``intermediate`` holds the decision space K* of each group's local center.
    """

    kind: str = CENTRALIZED
    groups: Tuple[Tuple[int, ...], ...] = ()
    intermediate: Tuple[DecisionSpace, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (CENTRALIZED, PBPO):
            raise InputDomainError(f"Unknown topology kind '{self.kind}'")
        if self.kind == PBPO:
            if not self.groups:
                raise InputDomainError("PBPO topology needs at least one group")
            if any(not group for group in self.groups):
                raise InputDomainError("PBPO groups must be non-empty")
            if len(self.intermediate) != len(self.groups):
                raise InputDomainError("PBPO topology needs one intermediate space per group")

    @classmethod
    def centralized(cls) -> "FusionTopology":
        return cls()

    @classmethod
    def pbpo(
        cls, groups: Sequence[Sequence[int]], intermediate: Sequence[DecisionSpace]
    ) -> "FusionTopology":
        return cls(
            kind=PBPO,
            groups=tuple(tuple(int(i) for i in group) for group in groups),
            intermediate=tuple(intermediate),
        )

    @classmethod
    def halves(cls, sensor_count: int, intermediate: DecisionSpace) -> "FusionTopology":
        """Two equal groups (first half, second half) sharing one K*."""
        if sensor_count < 2 or sensor_count % 2:
            raise InputDomainError(
                f"Splitting into halves needs an even M >= 2, got {sensor_count}"
            )
        half = sensor_count // 2
        return cls.pbpo(
            [range(half), range(half, sensor_count)], [intermediate, intermediate]
        )

    @property
    def is_centralized(self) -> bool:
        return self.kind == CENTRALIZED

    def validate(self, sensor_count: int) -> None:
        if self.is_centralized:
            return
        flat = sorted(i for group in self.groups for i in group)
        if flat != list(range(sensor_count)):
            raise InputDomainError(
                f"PBPO groups must partition sensors 0..{sensor_count - 1}, got {self.groups}"
            )

    def describe(self) -> Dict[str, Any]:
        if self.is_centralized:
            return {"kind": CENTRALIZED}
        return {
            "kind": PBPO,
            "groups": [list(group) for group in self.groups],
            "intermediate": [space.describe() for space in self.intermediate],
        }


@dataclass(frozen=True, eq=False)
class Scenario:
    """Complete problem statement: spaces, prior, sensors and cost."""

    object_space: ObjectSpace
    prior: Prior
    sensors: Tuple[SensorModel, ...]
    decision_space: DecisionSpace
    cost: CostFunction = field(default_factory=CostFunction.squared_error)
    name: str = "custom"
    even_cost_optimal: bool = False
    topology: Optional[FusionTopology] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise InputDomainError("Scenario needs at least one sensor")
        if self.prior.space != self.object_space:
            raise InputDomainError(
                f"Prior is defined over {self.prior.space.describe()}, "
                f"scenario object space is {self.object_space.describe()}"
            )
        if self.topology is not None:
            self.topology.validate(len(self.sensors))

    @property
    def sensor_count(self) -> int:
        return len(self.sensors)

    @property
    def total_dims(self) -> int:
        return sum(sensor.dims for sensor in self.sensors)

    @property
    def block_slices(self) -> List[slice]:
        """Column slice of each sensor's block in a joint feature vector."""
        slices = []
        start = 0
        for sensor in self.sensors:
            slices.append(slice(start, start + sensor.dims))
            start += sensor.dims
        return slices

    def replace(self, **changes: Any) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def describe(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "name": self.name,
            "object": self.object_space.describe(),
            "prior": self.prior.describe(),
            "sensors": [sensor.describe() for sensor in self.sensors],
            "decision": self.decision_space.describe(),
            "cost": self.cost.label,
            "even_cost_optimal": self.even_cost_optimal,
        }
        if self.topology is not None:
            doc["topology"] = self.topology.describe()
        return doc


@dataclass(frozen=True)
class GridSpec:
    """Binning of the performance grid over K x I."""

    decision_bins: int = 200
    object_bins: int = 64
    decision_range: Optional[Tuple[float, float]] = None
    object_range: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.decision_bins < 1 or self.object_bins < 1:
            raise InputDomainError("Grid needs at least one bin per axis")
        for label, bounds in (("decision", self.decision_range), ("object", self.object_range)):
            if bounds is not None and not bounds[0] < bounds[1]:
                raise InputDomainError(f"Grid {label} range needs lo < hi, got {bounds}")

    def describe(self) -> Dict[str, Any]:
        return {
            "decision_bins": self.decision_bins,
            "object_bins": self.object_bins,
            "decision_range": list(self.decision_range) if self.decision_range else None,
            "object_range": list(self.object_range) if self.object_range else None,
        }


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """
    Draws (h_l, a_l, w_l) from the proposal distribution.

    ``chunk_bounds`` records the sub-batch partition; each sub-batch was drawn
    from its own stream derived from ``seed``.
    """

    objects: np.ndarray
    features: np.ndarray
    weights: np.ndarray
    seed: int
    mode: str
    chunk_bounds: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        size = len(self.objects)
        if self.features.shape[0] != size or self.weights.shape != (size,):
            raise InputDomainError("Sample batch arrays disagree on length")
        if not self.chunk_bounds:
            object.__setattr__(self, "chunk_bounds", ((0, size),))

    @property
    def size(self) -> int:
        return len(self.objects)

    def sub_batches(self) -> Iterator["SampleBatch"]:
        for start, stop in self.chunk_bounds:
            yield SampleBatch(
                objects=self.objects[start:stop],
                features=self.features[start:stop],
                weights=self.weights[start:stop],
                seed=self.seed,
                mode=self.mode,
                chunk_bounds=((0, stop - start),),
            )

    @classmethod
    def concatenate(cls, parts: Sequence["SampleBatch"], seed: int, mode: str) -> "SampleBatch":
        bounds = []
        start = 0
        for part in parts:
            bounds.append((start, start + part.size))
            start += part.size
        return cls(
            objects=np.concatenate([part.objects for part in parts]),
            features=np.concatenate([part.features for part in parts]),
            weights=np.concatenate([part.weights for part in parts]),
            seed=seed,
            mode=mode,
            chunk_bounds=tuple(bounds),
        )


@dataclass(frozen=True, eq=False)
class Histogram:
    """Partial weighted histogram over (object bin, decision bin)."""

    weights: np.ndarray
    squared_weights: np.ndarray
    counts: np.ndarray
    dropped: int = 0
    max_decision: float = -math.inf
    min_decision: float = math.inf

    @classmethod
    def empty(cls, object_bins: int, decision_bins: int) -> "Histogram":
        return cls(
            weights=np.zeros((object_bins, decision_bins)),
            squared_weights=np.zeros(object_bins),
            counts=np.zeros(object_bins, dtype=np.int64),
        )

    def merge(self, other: "Histogram") -> "Histogram":
        return Histogram(
            weights=self.weights + other.weights,
            squared_weights=self.squared_weights + other.squared_weights,
            counts=self.counts + other.counts,
            dropped=self.dropped + other.dropped,
            max_decision=max(self.max_decision, other.max_decision),
            min_decision=min(self.min_decision, other.min_decision),
        )


@dataclass(frozen=True, eq=False)
class PerformanceGrid:
    """
    Estimated performance d_{C|H}(c, h) on a grid over K x I.

    Rows are object bins, columns decision bins. Rows without samples hold NaN
    and are flagged in ``empty_rows``. For discrete K the column widths are 1
    and ``decision_edges`` is None; likewise for discrete I.
    """

    decision_centers: np.ndarray
    decision_widths: np.ndarray
    object_centers: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    effective_counts: np.ndarray
    empty_rows: np.ndarray
    decision_edges: Optional[np.ndarray] = None
    object_edges: Optional[np.ndarray] = None
    dropped: int = 0
    total: int = 0
    max_decision: float = -math.inf
    min_decision: float = math.inf

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def row_integrals(self) -> np.ndarray:
        """c-integral of each row; NaN for empty rows."""
        return np.sum(self.values * self.decision_widths, axis=1)

    def row_moments(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-row mean and standard deviation of C."""
        mass = self.values * self.decision_widths
        mean = np.sum(mass * self.decision_centers, axis=1)
        second = np.sum(mass * self.decision_centers**2, axis=1)
        return mean, np.sqrt(np.maximum(second - mean**2, 0.0))

    def normalization_report(self) -> Dict[str, Any]:
        integrals = self.row_integrals()
        populated = ~self.empty_rows
        deviation = (
            float(np.max(np.abs(integrals[populated] - 1.0))) if np.any(populated) else 0.0
        )
        return {
            "populated_rows": int(np.sum(populated)),
            "empty_rows": [int(i) for i in np.flatnonzero(self.empty_rows)],
            "max_row_integral_deviation": deviation,
            "dropped_samples": int(self.dropped),
            "total_samples": int(self.total),
            "min_effective_count": float(np.min(self.effective_counts[populated]))
            if np.any(populated)
            else 0.0,
        }


@dataclass(frozen=True)
class RiskEstimate:
    """Bayes-risk point estimate with a two-sided confidence interval."""

    estimate: float
    samples: int
    confidence: float
    half_width: float
    method: str = "clt-empirical"

    @property
    def ci_low(self) -> float:
        return self.estimate - self.half_width

    @property
    def ci_high(self) -> float:
        return self.estimate + self.half_width

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "half_width": self.half_width,
            "confidence": self.confidence,
            "L": self.samples,
            "method": self.method,
        }


@dataclass(frozen=True)
class RiskComparison:
    """Paired estimate of risk(baseline) - risk(rule) over shared samples."""

    difference: float
    half_width: float
    confidence: float
    samples: int
    rule: RiskEstimate
    baseline: RiskEstimate

    @property
    def ci_low(self) -> float:
        return self.difference - self.half_width

    @property
    def ci_high(self) -> float:
        return self.difference + self.half_width

    @property
    def rule_is_better(self) -> bool:
        return self.ci_low > 0

    @property
    def separate_intervals_overlap(self) -> bool:
        rule, baseline = self.rule, self.baseline
        return rule.ci_high >= baseline.ci_low and baseline.ci_high >= rule.ci_low

    def to_dict(self) -> Dict[str, Any]:
        return {
            "difference": self.difference,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "L": self.samples,
            "rule": self.rule.to_dict(),
            "baseline": self.baseline.to_dict(),
            "separate_intervals_overlap": self.separate_intervals_overlap,
        }


@dataclass
class RunManifest:
    """Everything needed to reproduce the outputs of a command run."""

    subcommand: str
    scenario: str
    seed: int
    samples: int
    mode: str = "prior"
    params: Dict[str, str] = field(default_factory=dict)
    grid: Dict[str, Any] = field(default_factory=lambda: GridSpec().describe())
    cost: Optional[str] = None
    confidence: float = 0.95
    method: str = "clt-empirical"
    weighting: str = "importance"
    topology: Optional[str] = None
    soft: bool = False
    chunk_size: Optional[int] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    engine_version: str = __version__

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        known = {f.name for f in dataclasses.fields(cls)}
        missing = {"subcommand", "scenario", "seed", "samples"} - set(data)
        if missing:
            raise ScenarioFileError(f"Manifest is missing keys: {sorted(missing)}")
        unknown = set(data) - known
        if unknown:
            raise ScenarioFileError(f"Manifest has unknown keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioFileError(f"Cannot read manifest {path}: {e}") from e
        if not isinstance(data, dict):
            raise ScenarioFileError(f"Manifest {path} must be a JSON object")
        return cls.from_dict(data)

    def grid_spec(self) -> GridSpec:
        grid = dict(self.grid)
        for key in ("decision_range", "object_range"):
            if grid.get(key) is not None:
                grid[key] = tuple(grid[key])
        return GridSpec(**grid)


@dataclass(frozen=True)
class ValidationCheck:
    """One oracle-versus-engine comparison."""

    name: str
    oracle: Optional[float]
    estimate: Optional[float]
    passed: bool
    tolerance: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class ValidationReport:
    """Result of validating one built-in scenario."""

    scenario: str
    params: Dict[str, str]
    samples: int
    seed: int
    confidence: float
    checks: List[ValidationCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "params": dict(sorted(self.params.items())),
            "L": self.samples,
            "seed": self.seed,
            "confidence": self.confidence,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }


# ============================================================================
# Django Models for run history
# ============================================================================

class ReportRunStatus(models.TextChoices):
    """Status choices for report runs."""
    PENDING = 'pending', 'Pending'
    PROCESSING = 'processing', 'Processing'
    COMPLETED = 'completed', 'Completed'
    FAILED = 'failed', 'Failed'


class ReportRun(models.Model):
    """
    Represents one execution of a writing command.

    Stores the manifest that produced the outputs and their checksums, so a
    rerun can be compared byte for byte.
    """

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    subcommand = models.CharField(max_length=32)
    scenario = models.CharField(max_length=255, help_text="Scenario path or builtin:name")
    seed = models.BigIntegerField()
    samples = models.BigIntegerField(default=0)
    status = models.CharField(
        max_length=20,
        choices=ReportRunStatus.choices,
        default=ReportRunStatus.PENDING,
        db_index=True
    )

    manifest = models.JSONField(default=dict)
    checksums = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=1024, blank=True)

    # Timestamps
    created_at = models.DateTimeField(default=timezone.now, db_index=True)
    started_at = models.DateTimeField(null=True, blank=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    error_message = models.TextField(blank=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['-created_at', 'status'], name='report_run_created_idx'),
        ]

    def __str__(self):
        return f"ReportRun {self.id} - {self.subcommand} {self.scenario} ({self.status})"

    def mark_started(self):
        """Mark run as started."""
        self.status = ReportRunStatus.PROCESSING
        self.started_at = timezone.now()
        self.save(update_fields=['status', 'started_at'])

    def mark_completed(self, checksums: Dict[str, str]):
        """Mark run as completed and store output checksums."""
        self.status = ReportRunStatus.COMPLETED
        self.completed_at = timezone.now()
        self.checksums = checksums
        self.save(update_fields=['status', 'completed_at', 'checksums'])

    def mark_failed(self, error_message: str = ""):
        """Mark run as failed."""
        self.status = ReportRunStatus.FAILED
        self.completed_at = timezone.now()
        self.error_message = error_message
        self.save(update_fields=['status', 'completed_at', 'error_message'])
