"""End-to-end CLI run on a pocket-sized grid.

Writes a config file, invokes the ``run`` subcommand the same way the shell
would, and shows the output files.  Everything is seeded: running this
twice produces byte-identical CSVs.
"""

import tempfile
from pathlib import Path

from fedkme.cli import ExperimentConfig, main, serialize_config


CONFIG = ExperimentConfig(
    grid=(0.0, 0.5, 1.0),
    repetitions=3,
    test_size=100,
    agents=12,
    samples_per_agent=10,
    dim=5,
    d_rff=128,
    steps=400,
    ridge_penalty=0.05,
    seed=42,
)


def run() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "experiment.cfg"
        cfg_path.write_text(serialize_config(CONFIG))
        print("# config")
        print(cfg_path.read_text())

        out = Path(tmp) / "out"
        out.mkdir()
        code = main(["run", "--config", str(cfg_path), "--out", str(out)])
        print(f"exit code: {code}\n")

        for name in ("results.csv", "weights.csv", "comm.csv"):
            lines = (out / name).read_text().splitlines()
            print(f"# {name} ({len(lines) - 1} rows)")
            print("\n".join(lines[:4]))
            print()


if __name__ == "__main__":
    run()
