import sys

from hierzsl.cli import main

sys.exit(main())
