"""
Validate a built-in scenario against its closed forms and published values.
"""

from typing import Any

from django.core.management.base import CommandError, CommandParser

from bayes_fusion.management.commands._base import EXIT_VALIDATION_FAILED, FusionCommand
from bayes_fusion.services.builtin_scenarios import BUILTIN_SCENARIOS, parse_params
from bayes_fusion.services.report_service import ReportService


class Command(FusionCommand):
    help = "Compare the Monte Carlo engine with the oracles of a built-in scenario"
    subcommand = "validate"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("name", help=f"One of {', '.join(sorted(BUILTIN_SCENARIOS))}")
        parser.add_argument("params", nargs="*", metavar="KEY=VALUE", help="Scenario parameters")
        self.add_common_arguments(parser, scenario_required=False)
        parser.set_defaults(samples=1_000_000)

    def run(self, **options: Any) -> None:
        params = parse_params(options["params"])
        params.update(parse_params(options["param"]))
        manifest = self.build_manifest({**options, "scenario": options["name"]}, params=params)
        service = ReportService()
        out = self.output_dir(options, default=False)
        if out is None:
            _, documents = service.validate_files(manifest)
        else:
            documents = service.run(manifest, out).documents
        report = documents["validation"]
        self.write_json(report)
        if not report["passed"]:
            failed = [check["name"] for check in report["checks"] if not check["passed"]]
            raise CommandError(
                f"Validation of {options['name']} failed: {', '.join(failed)}",
                returncode=EXIT_VALIDATION_FAILED,
            )
