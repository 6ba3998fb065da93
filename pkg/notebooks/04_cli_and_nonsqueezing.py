# The command line front end, driven from Python.
import subprocess
import sys
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp())

# rays of the cusp flow neither collapse nor fly apart
subprocess.run([sys.executable, "-m", "beamforge.cli", "nonsqueeze", "--t", "0.5",
                "--pairs", "2000", "--out", str(out / "ns")], check=True)

# a small initial-data study; flags override the config file
cfg = out / "init.yaml"
cfg.write_text("problem: init_data\norders: [1, 2]\n")
subprocess.run([sys.executable, "-m", "beamforge.cli", "init-data", "--config", str(cfg),
                "--epsilon-max", "0.0625", "--epsilon-min", "0.015625",
                "--out", str(out / "init")], check=True)
print((out / "init" / "records.csv").read_text())
