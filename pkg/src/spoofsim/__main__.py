import sys

from spoofsim.cli import main

sys.exit(main())
