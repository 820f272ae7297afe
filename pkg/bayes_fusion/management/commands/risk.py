"""
Estimate the Bayes risk of the fusion rule with a confidence interval.
"""

from typing import Any

from django.core.management.base import CommandParser

from bayes_fusion.management.commands._base import FusionCommand
from bayes_fusion.services.montecarlo_service import RISK_METHODS
from bayes_fusion.services.report_service import ReportService


class Command(FusionCommand):
    help = "Monte Carlo Bayes risk with a CLT or even-cost confidence interval"
    subcommand = "risk"

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_common_arguments(parser)
        parser.add_argument("--method", choices=RISK_METHODS, default=RISK_METHODS[0])

    def run(self, **options: Any) -> None:
        manifest = self.build_manifest(options, method=options["method"])
        service = ReportService()
        out = self.output_dir(options, default=False)
        if out is None:
            _, documents = service.risk_files(manifest)
        else:
            documents = service.run(manifest, out).documents
        self.write_json(documents["risk"])
