import os
import sys

# Add repository root to path so `src` imports resolve
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
