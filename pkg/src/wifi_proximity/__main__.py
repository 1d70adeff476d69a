"""Module entry point: python -m wifi_proximity."""
import sys

from .cli import main

sys.exit(main())
