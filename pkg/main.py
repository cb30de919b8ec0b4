"""
Main entry point for the PABF toolkit.

This module forwards to the package command line.
"""

import sys

from pabf.main import main

if __name__ == "__main__":
    sys.exit(main())
