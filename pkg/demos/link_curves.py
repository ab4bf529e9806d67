"""Tabulate L, L' and L'' with the large-theta expansion beside them.

Writes CSV to stdout, ready for any plotting tool; the same table comes
from ``unseen linkfun --asymptotic``.
"""
import sys

from unseen.cli import run

sys.exit(run(["linkfun", "--theta-min", "0", "--theta-max", "20", "--step", "0.5",
              "--asymptotic", "--order", "5", "--no-timestamp"]))
