"""Type-check the test suite and its fixtures; fail above the allowed error count."""

import sys

from mypy import api as mypy

MAX_ALLOWED_ERRORS = 5

# fixtures live in the root conftest, so check it with the tests
RESULTS = mypy.run(["./tests/", "./conftest.py"])
print(RESULTS[0], end="")
print(RESULTS[1], end="")
NUM_ERRORS = len([line for line in RESULTS[0].split("\n") if ": error: " in line])
print("There are {} errors in the tests. {} are allowed.".format(NUM_ERRORS, MAX_ALLOWED_ERRORS))

sys.exit(0 if NUM_ERRORS <= MAX_ALLOWED_ERRORS else 1)
