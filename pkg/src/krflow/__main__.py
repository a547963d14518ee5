"""Allow ``python -m krflow`` as an alias for the ``krflow`` script."""

import sys

from .cli import main

sys.exit(main())
