"""MAAE anomaly detection toolkit - Main entry point."""

import logging
import sys

from ui.cli import main as cli_main


def main():
    """Main entry point: forwards the command line to the CLI and exits with its code."""
    try:
        sys.exit(cli_main(sys.argv[1:]))

    except KeyboardInterrupt:
        logging.getLogger(__name__).info("Interrupted by user")
        sys.exit(130)


if __name__ == "__main__":
    main()
