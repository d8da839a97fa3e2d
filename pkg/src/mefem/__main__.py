import sys

from mefem.cli import main

sys.exit(main())
