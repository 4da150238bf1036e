"""Drive the command-line interface end to end and render a plot.

Runs a short d=3 splitting estimate through the `qecsplit run` entry
point, then turns the resulting CSV report into a log-log SVG with
`qecsplit plot`.  Reports embed the full resolved configuration as
comment lines, so the CSV alone reproduces the run.
"""

import tempfile
from pathlib import Path

from qecsplit.cli import main

workdir = Path(tempfile.mkdtemp(prefix="qecsplit-demo-"))
csv_path = workdir / "d3_split.csv"
svg_path = workdir / "d3_split.svg"

code = main(["run", "--method", "split", "--d", "3",
             "--p", "1e-3", "--p-target", "2e-4",
             "--stop-failures", "100", "--seed", "0",
             "--out", str(csv_path)])
print(f"\nrun exit code: {code}")

print("\nreport:")
print(csv_path.read_text())

code = main(["plot", str(csv_path), "--output", str(svg_path)])
print(f"plot exit code: {code}; wrote {svg_path} "
      f"({svg_path.stat().st_size} bytes)")
