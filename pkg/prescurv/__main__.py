"""Allow running as: python -m prescurv"""
import sys

from prescurv.cli import main

sys.exit(main())
