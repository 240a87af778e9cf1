"""
The relgbdt command line
========================

Every step above is also reachable from the shell. This script drives the
CLI in a temporary directory and prints what each command writes.
"""

import subprocess
import sys
import tempfile
from pathlib import Path


def relgbdt(*args):
    out = subprocess.run([sys.executable, "-m", "relgbdt.cli", *map(str, args)], capture_output=True, text=True)
    print("$ relgbdt", " ".join(map(str, args)))
    print(out.stdout.rstrip() or out.stderr.rstrip())
    return out.returncode


work = Path(tempfile.mkdtemp())
data = work / "synth"

relgbdt("synth-gen", "--n-a", 400, "--seed", 1, "--out-dir", data)
relgbdt("inspect", "--schema", data / "schema.json", "--schedule", "--cover-count", 1)
relgbdt("train", "--schema", data / "schema.json", "--data", data, "--out", work / "model.json",
        "--iterations", 20, "--loss", "binary")
relgbdt("evaluate", "--schema", data / "schema.json", "--data", data, "--model", work / "model.json")
relgbdt("evaluate", "--schema", data / "schema.json", "--data", data, "--folds", 3, "--iterations", 10)
relgbdt("importance", "--model", work / "model.json", "--out", work / "importance.csv")
print((work / "importance.csv").read_text().splitlines()[:5])
relgbdt("flatten", "--schema", data / "schema.json", "--data", data, "--out", work / "flat")
print(sorted(p.name for p in (work / "flat").iterdir()))
