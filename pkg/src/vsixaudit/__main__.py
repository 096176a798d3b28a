import sys

from vsixaudit.cli import main

sys.exit(main())
