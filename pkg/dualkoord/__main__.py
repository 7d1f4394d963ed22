import sys

from dualkoord.cli import main

sys.exit(main())
