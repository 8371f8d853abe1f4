"""Command-line entry point: nero-export --spec spec.json"""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import export
from .spec import load_spec


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nero-export",
        description="Export artifact bundles (train/test_id/test_ood) from a "
        "trained torch classifier checkpoint.",
    )
    parser.add_argument("--spec", required=True, help="export spec JSON file")
    args = parser.parse_args(argv)
    try:
        paths = export(load_spec(args.spec))
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
