import sys

from mcdetect.cli import main

sys.exit(main())
