import sys
from pathlib import Path

# allow the acceptance suite to import helpers from sibling test modules
sys.path.insert(0, str(Path(__file__).resolve().parent))
