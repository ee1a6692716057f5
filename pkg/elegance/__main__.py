import sys

from elegance.cli import main

sys.exit(main())
