import sys

from cpfree_ofdm.harness.cli import main

sys.exit(main())
