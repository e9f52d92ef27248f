import sys

from loftsim.harness.cli import main

sys.exit(main())
