import sys
from pathlib import Path

# helpers.py / reference_impls.py live next to the tests
TESTS_DIR = Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))
