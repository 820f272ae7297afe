"""
Shared plumbing for the fusion management commands.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from bayes_fusion.distributions.priors import PROPOSAL_MODES
from bayes_fusion.exceptions import (
    FusionEngineException,
    NumericalDegeneracyError,
)
from bayes_fusion.exporters.json_exporter import JSONReportExporter
from bayes_fusion.models import GridSpec, RunManifest
from bayes_fusion.services.builtin_scenarios import parse_params

logger = logging.getLogger(__name__)

EXIT_VALIDATION_FAILED = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3


def parse_range(text: Optional[str]) -> Optional[Tuple[float, float]]:
    """'lo,hi' to a tuple."""
    if text is None:
        return None
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError:
        raise CommandError(f"Range must look like lo,hi, got '{text}'", returncode=EXIT_USAGE)
    return lo, hi


class FusionCommand(BaseCommand):
    """
    Base class for the engine's subcommands.

    Subclasses implement ``run``; engine exceptions are mapped to exit codes
    (2 usage or file errors, 3 numerical degeneracy).
    """

    subcommand = ""
    requires_system_checks: list = []

    def add_common_arguments(self, parser: CommandParser, scenario_required: bool = True) -> None:
        parser.add_argument(
            "--scenario",
            required=scenario_required,
            help="Scenario file path or builtin:<name>",
        )
        parser.add_argument(
            "--param",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Built-in scenario parameter (repeatable)",
        )
        parser.add_argument("--seed", type=int, default=None, help="Master seed")
        parser.add_argument(
            "--samples", type=int, default=100_000, help="Monte Carlo sample count L"
        )
        parser.add_argument(
            "--proposal",
            choices=PROPOSAL_MODES,
            default="prior",
            help="Proposal distribution for h",
        )
        parser.add_argument("--confidence", type=float, default=None, help="Confidence level R")
        parser.add_argument("--bins", type=int, default=200, help="Decision bins of the grid")
        parser.add_argument(
            "--topology", default=None, help="centralized | pbpo[:groups:real|discrete]"
        )
        parser.add_argument(
            "--cost", default=None, help="quadratic | squared | power:p | poly:p=c,..."
        )
        parser.add_argument("--out", default=None, help="Output directory")

    def build_manifest(self, options: Dict[str, Any], **overrides: Any) -> RunManifest:
        """Manifest for this subcommand from parsed options."""
        grid = GridSpec(
            decision_bins=options.get("bins") or 200,
            object_bins=options.get("object_bins") or 64,
            decision_range=parse_range(options.get("decision_range")),
            object_range=parse_range(options.get("object_range")),
        )
        manifest = RunManifest(
            subcommand=self.subcommand,
            scenario=options["scenario"],
            seed=(
                options["seed"]
                if options.get("seed") is not None
                else settings.FUSION_DEFAULT_SEED
            ),
            samples=options.get("samples") or 0,
            mode=options.get("proposal") or "prior",
            params=parse_params(options.get("param")),
            grid=grid.describe(),
            cost=options.get("cost"),
            confidence=options.get("confidence") or settings.FUSION_DEFAULT_CONFIDENCE,
            topology=options.get("topology"),
            chunk_size=settings.FUSION_CHUNK_SIZE,
        )
        for key, value in overrides.items():
            setattr(manifest, key, value)
        return manifest

    def output_dir(self, options: Dict[str, Any], default: bool = True) -> Optional[Path]:
        if options.get("out"):
            return Path(options["out"])
        return Path(settings.FUSION_OUTPUT_DIR) / self.subcommand if default else None

    def write_json(self, document: Dict[str, Any]) -> None:
        self.stdout.write(JSONReportExporter().generate(document).decode("utf-8"), ending="")

    def handle(self, *args: Any, **options: Any) -> None:
        try:
            self.run(**options)
        except CommandError:
            raise
        except NumericalDegeneracyError as e:
            logger.error(f"{self.subcommand}: {e}")
            raise CommandError(str(e), returncode=EXIT_DEGENERATE) from e
        except (FusionEngineException, OSError) as e:
            logger.error(f"{self.subcommand}: {e}")
            raise CommandError(str(e), returncode=EXIT_USAGE) from e

    def run(self, **options: Any) -> None:
        raise NotImplementedError
