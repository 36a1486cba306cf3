import sys

from mmsense.cli import main

sys.exit(main())
