#!/usr/bin/env python3
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from elegance.config import LOG_FORMAT, LOG_LEVEL
from elegance.errors import EleganceError, VerificationError
from elegance.evalkit.acceptance import verify_efficacy
from elegance.utils import install_verbosity_level


def main() -> int:
    parser = argparse.ArgumentParser(description="Assert the toy efficacy thresholds over an acceptance sweep.")
    parser.add_argument("sweep", type=Path, help="Output directory of run_toy_acceptance.sh")
    parser.add_argument(
        "--verbosity",
        default="some",
        choices=["debug", "some", "minimal", "silent"],
        help="Logging verbosity level",
    )
    args = parser.parse_args()
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    install_verbosity_level(args.verbosity)

    try:
        table = verify_efficacy(args.sweep)
    except VerificationError as e:
        logging.error(f"❌ {e}")
        return 2
    except EleganceError as e:
        logging.error(f"❌ {e}")
        return 1
    print(table.to_string(index=False))
    return 0


if __name__ == "__main__":
    sys.exit(main())
