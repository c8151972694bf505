#!/usr/bin/env python3

from itaxotools.ldtforecast import run
from pathlib import Path

import sys


if __name__ == '__main__':
    if len(sys.argv) < 2:
        print(' Usage: synthetic.py DEST [EPOCHS]')
        print('    ex: synthetic.py synthetic_run 50')
        print('  Runs every stage on generated entities with known groups')
        exit()
    dest = Path(sys.argv[1])
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 200
    run(
        out_dir=dest,
        stages=dict(ingest=False, synth=True),
        train=dict(budget_epochs=epochs))
