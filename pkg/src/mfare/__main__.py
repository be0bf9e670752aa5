"""``python -m mfare``."""

import sys

from .cli import main

sys.exit(main())
