import sys

from distance_forward.cli import main

sys.exit(main())
