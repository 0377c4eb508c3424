"""
Lint the spectral_lod package; fail if the score drops below 9.75
"""

import sys

from pylint.lint import Run

RESULTS = Run(['./spectral_lod/'], exit=False)
SCORE = RESULTS.linter.stats.global_note
print("Your code has been rated at {:.2f}/10".format(SCORE))

if SCORE >= 9.75:
    sys.exit(0)
else:
    sys.exit(1)
