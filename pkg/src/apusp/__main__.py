import sys

from apusp.cli import main

sys.exit(main())
