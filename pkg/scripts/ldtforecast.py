#!/usr/bin/env python3

import multiprocessing
import sys

from itaxotools.ldtforecast import main

if __name__ == "__main__":
    multiprocessing.freeze_support()
    sys.exit(main())
