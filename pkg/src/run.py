"""Application entry point."""

import sys

from lca_net.cli import main

if __name__ == '__main__':
    sys.exit(main())
