import sys
from pathlib import Path

# Let test modules import helpers from each other (tests.test_* namespace).
sys.path.insert(0, str(Path(__file__).parent))
