import sys

from cascademl.cli import main

sys.exit(main())
