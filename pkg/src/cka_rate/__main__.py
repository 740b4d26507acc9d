import sys

from cka_rate.cli import main

sys.exit(main())
