import sys

from gip_planner.cli.service import main

sys.exit(main())
