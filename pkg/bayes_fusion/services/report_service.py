"""
Report service: turns a run manifest into output files on disk.

Every writing command goes through here. The manifest alone determines the
bytes of every output (no timestamps, no absolute paths inside documents), so
running the same manifest twice yields identical files and checksums. Runs
are recorded as ReportRun rows when run history is enabled.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from django.conf import settings
from django.db import DatabaseError

from bayes_fusion import __version__
from bayes_fusion.exceptions import InputDomainError
from bayes_fusion.exporters.csv_grid_exporter import (
    CSVGridExporter,
    parse_vector,
    read_feature_rows,
)
from bayes_fusion.exporters.json_exporter import JSONReportExporter
from bayes_fusion.models import ReportRun, RunManifest, SampleBatch, Scenario
from bayes_fusion.services.fusion_service import Rule
from bayes_fusion.services.montecarlo_service import (
    MonteCarloService,
    estimate_performance,
    estimate_risk,
    risk_from_grid,
)
from bayes_fusion.services.network_service import build_pbpo
from bayes_fusion.services.scenario_loader import apply_topology, resolve_scenario
from bayes_fusion.services.validation_service import (
    closed_form_grid,
    closed_forms,
    run_validate,
)
from bayes_fusion.spaces import CostFunction

logger = logging.getLogger(__name__)

PERFORMANCE_CSV = "performance.csv"
PERFORMANCE_JSON = "performance.json"
RISK_JSON = "risk.json"
VALIDATION_JSON = "validation.json"
DECISIONS_CSV = "decisions.csv"
MANIFEST_JSON = "manifest.json"
ANALYTIC_CSV = "analytic.csv"
ANALYTIC_JSON = "analytic.json"

SUBCOMMANDS = ("analytic", "fuse", "performance", "risk", "report", "validate")


@dataclass
class ReportResult:
    """Files written by one run, with their sha256 checksums."""

    output_dir: Path
    files: Dict[str, Path]
    checksums: Dict[str, str]
    documents: Dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ReportService:
    """Service for running a manifest and writing its outputs."""

    def __init__(
        self,
        monte_carlo: Optional[MonteCarloService] = None,
        record_runs: Optional[bool] = None,
    ):
        """
        Initialize report service.

        Args:
            monte_carlo: Service used for drawing and fusing samples
            record_runs: Persist ReportRun rows (settings.FUSION_RECORD_RUNS when None)
        """
        self.monte_carlo = monte_carlo or MonteCarloService()
        self.record_runs = settings.FUSION_RECORD_RUNS if record_runs is None else record_runs
        self.csv_exporter = CSVGridExporter()
        self.json_exporter = JSONReportExporter()

    # Scenario and samples

    def prepare(self, manifest: RunManifest) -> Tuple[Scenario, Rule]:
        scenario = resolve_scenario(manifest.scenario, manifest.params)
        scenario = apply_topology(scenario, manifest.topology)
        if manifest.cost is not None:
            scenario = scenario.replace(cost=CostFunction.parse(manifest.cost))
        return scenario, build_pbpo(scenario)

    def monte_carlo_for(self, manifest: RunManifest) -> MonteCarloService:
        """Service with the sub-batch partition the manifest was run with."""
        if manifest.chunk_size is None or manifest.chunk_size == self.monte_carlo.chunk_size:
            return self.monte_carlo
        return MonteCarloService(self.monte_carlo.max_concurrent, manifest.chunk_size)

    def sample(
        self, manifest: RunManifest, scenario: Scenario, rule: Rule
    ) -> Tuple[SampleBatch, np.ndarray]:
        monte_carlo = self.monte_carlo_for(manifest)
        batch = monte_carlo.draw(scenario, manifest.samples, manifest.mode, manifest.seed)
        return batch, monte_carlo.evaluate(rule, batch)

    def _run_info(self, manifest: RunManifest, scenario: Scenario, rule: Rule) -> Dict[str, Any]:
        return {
            "scenario": scenario.name,
            "rule": rule.label,
            "cost": scenario.cost.label,
            "seed": manifest.seed,
            "mode": manifest.mode,
        }

    # Documents per subcommand

    def performance_files(self, manifest: RunManifest) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        scenario, rule = self.prepare(manifest)
        batch, decisions = self.sample(manifest, scenario, rule)
        return self._performance(manifest, scenario, rule, batch, decisions)

    def _performance(
        self,
        manifest: RunManifest,
        scenario: Scenario,
        rule: Rule,
        batch: SampleBatch,
        decisions: np.ndarray,
    ) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        grid = estimate_performance(
            rule,
            batch,
            manifest.grid_spec(),
            weighting=manifest.weighting,
            decisions=decisions,
            scenario=scenario,
        )
        info = self._run_info(manifest, scenario, rule)
        info["weighting"] = manifest.weighting
        info["L"] = batch.size
        info["grid_risk"] = risk_from_grid(grid, scenario.prior, scenario.cost)
        sidecar = self.json_exporter.grid_sidecar(grid, info)
        files = {
            PERFORMANCE_CSV: self.csv_exporter.generate_grid_csv(grid),
            PERFORMANCE_JSON: self.json_exporter.generate(sidecar),
        }
        return files, {"performance": sidecar}

    def risk_files(self, manifest: RunManifest) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        scenario, rule = self.prepare(manifest)
        batch, decisions = self.sample(manifest, scenario, rule)
        return self._risk(manifest, scenario, rule, batch, decisions)

    def _risk(
        self,
        manifest: RunManifest,
        scenario: Scenario,
        rule: Rule,
        batch: SampleBatch,
        decisions: np.ndarray,
    ) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        risk = estimate_risk(
            rule,
            batch,
            confidence=manifest.confidence,
            method=manifest.method,
            decisions=decisions,
            scenario=scenario,
        )
        doc = risk.to_dict()
        doc.update(self._run_info(manifest, scenario, rule))
        return {RISK_JSON: self.json_exporter.generate(doc)}, {"risk": doc}

    def report_files(self, manifest: RunManifest) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        scenario, rule = self.prepare(manifest)
        batch, decisions = self.sample(manifest, scenario, rule)
        files, docs = self._performance(manifest, scenario, rule, batch, decisions)
        risk_files, risk_docs = self._risk(manifest, scenario, rule, batch, decisions)
        files.update(risk_files)
        docs.update(risk_docs)
        return files, docs

    def validate_files(self, manifest: RunManifest) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        report = run_validate(
            manifest.scenario,
            manifest.params,
            samples=manifest.samples,
            seed=manifest.seed,
            confidence=manifest.confidence,
            service=self.monte_carlo_for(manifest),
        )
        doc = report.to_dict()
        return {VALIDATION_JSON: self.json_exporter.generate(doc)}, {"validation": doc}

    def analytic_files(self, manifest: RunManifest) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        at = parse_vector(manifest.inputs["at"]) if "at" in manifest.inputs else None
        doc = closed_forms(manifest.scenario, manifest.params, at)
        files = {ANALYTIC_JSON: self.json_exporter.generate(doc)}
        grid = closed_form_grid(manifest.scenario, manifest.params, manifest.grid_spec())
        if grid is not None:
            files[ANALYTIC_CSV] = self.csv_exporter.generate_grid_csv(grid)
        return files, {"analytic": doc}

    def fuse_files(self, manifest: RunManifest) -> Tuple[Dict[str, bytes], Dict[str, Any]]:
        if "features" not in manifest.inputs:
            raise InputDomainError("fuse needs a features CSV in the manifest inputs")
        scenario, rule = self.prepare(manifest)
        features = read_feature_rows(manifest.inputs["features"], scenario.total_dims)
        soft = rule.soft_batch(features) if manifest.soft else None
        decisions = rule.fuse_batch(features)
        data = self.csv_exporter.generate_decisions_csv(features, decisions, soft)
        return {DECISIONS_CSV: data}, {"decisions": decisions}

    # Writing

    def run(self, manifest: RunManifest, output_dir: Optional[Path] = None) -> ReportResult:
        """
        Execute a manifest and write its outputs plus ``manifest.json``.

        Args:
            manifest: Run manifest
            output_dir: Target directory (settings.FUSION_OUTPUT_DIR when None)

        Returns:
            ReportResult with paths and sha256 checksums

        Raises:
            OSError: If the output directory is not writable
        """
        producers: Dict[str, Callable[[RunManifest], Tuple[Dict[str, bytes], Dict[str, Any]]]] = {
            "analytic": self.analytic_files,
            "fuse": self.fuse_files,
            "performance": self.performance_files,
            "risk": self.risk_files,
            "report": self.report_files,
            "validate": self.validate_files,
        }
        if manifest.subcommand not in producers:
            raise InputDomainError(
                f"Manifest subcommand '{manifest.subcommand}' is not one of {SUBCOMMANDS}"
            )
        if manifest.engine_version != __version__:
            logger.warning(
                f"Manifest was written by engine {manifest.engine_version}, running {__version__}"
            )
            manifest.engine_version = __version__
        out_dir = Path(output_dir or settings.FUSION_OUTPUT_DIR)
        run = self._record_start(manifest, out_dir)
        try:
            files, documents = producers[manifest.subcommand](manifest)
            result = self.write_outputs(manifest, files, out_dir)
        except Exception as e:
            logger.error(f"Run {manifest.subcommand} on {manifest.scenario} failed: {e}")
            self._record(run, lambda r: r.mark_failed(str(e)))
            raise
        result.documents = documents
        if "validation" in documents:
            result.passed = bool(documents["validation"]["passed"])
        self._record(run, lambda r: r.mark_completed(result.checksums))
        return result

    def write_outputs(
        self, manifest: RunManifest, files: Dict[str, bytes], output_dir: Path
    ) -> ReportResult:
        """Write the given files and the manifest naming them; return checksums."""
        output_dir.mkdir(parents=True, exist_ok=True)
        manifest.outputs = {name: name for name in sorted(files)}
        files = dict(files)
        files[MANIFEST_JSON] = self.json_exporter.generate(manifest.to_dict())
        paths: Dict[str, Path] = {}
        checksums: Dict[str, str] = {}
        for name in sorted(files):
            path = output_dir / name
            path.write_bytes(files[name])
            paths[name] = path
            checksums[name] = sha256(files[name])
        logger.info(f"Wrote {len(files)} files to {output_dir}")
        return ReportResult(output_dir=output_dir, files=paths, checksums=checksums)

    # Run history

    def _record_start(self, manifest: RunManifest, output_dir: Path) -> Optional[ReportRun]:
        if not self.record_runs:
            return None
        try:
            run = ReportRun.objects.create(
                subcommand=manifest.subcommand,
                scenario=manifest.scenario,
                seed=manifest.seed,
                samples=manifest.samples,
                manifest=manifest.to_dict(),
                output_dir=str(output_dir),
            )
            run.mark_started()
            return run
        except DatabaseError as e:
            logger.warning(f"Run history unavailable, continuing without it: {e}")
            return None

    def _record(self, run: Optional[ReportRun], update: Callable[[ReportRun], None]) -> None:
        if run is None:
            return
        try:
            update(run)
        except DatabaseError as e:
            logger.warning(f"Could not update run history for {run.id}: {e}")


def run_report(
    manifest: RunManifest,
    output_dir: Optional[Path] = None,
    service: Optional[ReportService] = None,
) -> ReportResult:
    """Execute a manifest and write its outputs (see ReportService.run)."""
    return (service or ReportService()).run(manifest, output_dir)
