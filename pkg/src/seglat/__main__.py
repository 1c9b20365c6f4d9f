"""``python -m seglat``."""

from seglat.cli import main

raise SystemExit(main())
