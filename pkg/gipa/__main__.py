import sys

from gipa.cli import main

sys.exit(main())
