import sys

from pmgan.main import main

sys.exit(main())
