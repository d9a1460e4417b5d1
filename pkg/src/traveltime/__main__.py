"""Allow ``python -m traveltime``."""

import sys

from .cli import main

sys.exit(main())
