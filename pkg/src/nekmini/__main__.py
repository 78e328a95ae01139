import sys

from nekmini.cli import main

sys.exit(main())
