import sys

from iems.cli import main

if __name__ == "__main__":
    sys.exit(main())
