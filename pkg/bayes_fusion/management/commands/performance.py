"""
Estimate the performance density d_{C|H}(c, h) on a grid.
"""

from typing import Any

from django.core.management.base import CommandParser

from bayes_fusion.management.commands._base import FusionCommand
from bayes_fusion.services.montecarlo_service import WEIGHTINGS
from bayes_fusion.services.report_service import PERFORMANCE_CSV, ReportService


class Command(FusionCommand):
    help = "Monte Carlo performance grid of the fusion rule, written as CSV plus a JSON sidecar"
    subcommand = "performance"

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_common_arguments(parser)
        parser.add_argument("--object-bins", type=int, default=64, help="Object bins of the grid")
        parser.add_argument("--decision-range", default=None, help="lo,hi of the decision axis")
        parser.add_argument("--object-range", default=None, help="lo,hi of the object axis")
        parser.add_argument("--weighting", choices=WEIGHTINGS, default=WEIGHTINGS[0])

    def run(self, **options: Any) -> None:
        manifest = self.build_manifest(options, weighting=options["weighting"])
        result = ReportService().run(manifest, self.output_dir(options))
        sidecar = result.documents["performance"]
        self.write_json(
            {
                "grid": str(result.files[PERFORMANCE_CSV]),
                "normalization": sidecar["normalization"],
                "grid_risk": sidecar["grid_risk"],
                "checksums": result.checksums,
            }
        )
