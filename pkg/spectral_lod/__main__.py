"""Entry point for `python -m spectral_lod`."""
import sys

from spectral_lod.cli import main

sys.exit(main())
