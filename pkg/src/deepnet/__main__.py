import sys

from deepnet.cli import main

sys.exit(main())
