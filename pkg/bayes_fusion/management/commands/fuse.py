"""
Fuse feature vectors read from CSV into decisions.
"""

from typing import Any

from django.core.management.base import CommandParser

from bayes_fusion.management.commands._base import FusionCommand
from bayes_fusion.services.report_service import DECISIONS_CSV, ReportService


class Command(FusionCommand):
    help = "Apply the Bayes-optimal fusion rule to feature rows from a CSV file"
    subcommand = "fuse"

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_common_arguments(parser)
        parser.add_argument(
            "--features", required=True, help="CSV with one joint feature vector per row"
        )
        parser.add_argument(
            "--soft", action="store_true", help="Also emit the posterior mean before quantization"
        )

    def run(self, **options: Any) -> None:
        manifest = self.build_manifest(
            options, samples=0, soft=options["soft"], inputs={"features": options["features"]}
        )
        service = ReportService()
        out = self.output_dir(options, default=False)
        if out is None:
            files, _ = service.fuse_files(manifest)
            self.stdout.write(files[DECISIONS_CSV].decode("utf-8"), ending="")
            return
        result = service.run(manifest, out)
        self.stderr.write(f"Decisions written to {result.files[DECISIONS_CSV]}")
