import sys

from drsandbox.harness.cli import main

sys.exit(main())
