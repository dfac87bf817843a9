"""Run the acceptance criteria and print one PASS/FAIL line each."""
import os
import runpy
import sys

if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    sys.argv = [sys.argv[0]]
    runpy.run_path(os.path.join(here, "..", "tests", "test_acceptance.py"), run_name="__main__")
