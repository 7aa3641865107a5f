"""Run the DLCZ pair-source simulator from a source checkout: python dlcz_sim.py run --preset ideal"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
