import os
import sys

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

SCENARIO_DIR = os.path.join(project_root, "scenarios")
