import sys

from weatherwatt.cli import main

sys.exit(main())
