"""
Lint the test suite and its fixtures; fail if the score drops below MIN_SCORE
"""

import sys

from pylint.lint import Run

MIN_SCORE = 9.5

# pytest fixtures are passed as arguments, which pylint reads as shadowing
RESULTS = Run(
    ['./tests/', './conftest.py', '--disable=redefined-outer-name,invalid-name'], exit=False
)
SCORE = RESULTS.linter.stats.global_note
print("Tests have been rated at {:.2f}/10 ({:.2f} required)".format(SCORE, MIN_SCORE))

sys.exit(0 if SCORE >= MIN_SCORE else 1)
