"""
Print the closed-form oracle values of a built-in scenario.
"""

from typing import Any

from django.core.management.base import CommandParser

from bayes_fusion.management.commands._base import FusionCommand
from bayes_fusion.services.report_service import ReportService


class Command(FusionCommand):
    help = "Closed-form risk, rule and performance values of a built-in scenario"
    subcommand = "analytic"

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_common_arguments(parser)
        parser.add_argument(
            "--at", default=None, help="Joint feature vector a1,a2,... for the rule"
        )
        parser.add_argument("--object-bins", type=int, default=64)
        parser.add_argument("--decision-range", default=None, help="lo,hi of the tabulated grid")
        parser.add_argument("--object-range", default=None, help="lo,hi of the tabulated grid")

    def run(self, **options: Any) -> None:
        inputs = {"at": options["at"]} if options.get("at") else {}
        manifest = self.build_manifest(options, samples=0, inputs=inputs)
        service = ReportService()
        out = self.output_dir(options, default=False)
        if out is None:
            _, documents = service.analytic_files(manifest)
        else:
            documents = service.run(manifest, out).documents
        self.write_json(documents["analytic"])
