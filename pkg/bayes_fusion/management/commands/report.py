"""
Run a manifest (or the equivalent flags) and write every output it names.
"""

from typing import Any

from django.core.management.base import CommandError, CommandParser

from bayes_fusion.management.commands._base import (
    EXIT_USAGE,
    EXIT_VALIDATION_FAILED,
    FusionCommand,
)
from bayes_fusion.models import RunManifest
from bayes_fusion.services.report_service import ReportService


class Command(FusionCommand):
    help = "Write the performance grid and risk report of a run; replays manifest.json files"
    subcommand = "report"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--manifest", default=None, help="manifest.json of an earlier run")
        self.add_common_arguments(parser, scenario_required=False)
        parser.add_argument("--object-bins", type=int, default=64)
        parser.add_argument("--decision-range", default=None)
        parser.add_argument("--object-range", default=None)

    def run(self, **options: Any) -> None:
        if options["manifest"]:
            manifest = RunManifest.load(options["manifest"])
        elif options["scenario"]:
            manifest = self.build_manifest(options)
        else:
            raise CommandError("Give --manifest or --scenario", returncode=EXIT_USAGE)
        result = ReportService().run(manifest, self.output_dir(options))
        self.write_json(
            {
                "subcommand": manifest.subcommand,
                "output_dir": str(result.output_dir),
                "checksums": result.checksums,
            }
        )
        if result.passed is False:
            raise CommandError(
                "Replayed validation failed", returncode=EXIT_VALIDATION_FAILED
            )
