from __future__ import annotations

import os
import sys
from pathlib import Path


def main() -> None:
    app_path = Path(__file__).resolve().parents[1]
    if str(app_path) not in sys.path:
        sys.path.insert(0, str(app_path))

    from termpress.sample_data import write_sample_data

    root_env = os.getenv("SAMPLE_DATA_ROOT")
    root = Path(root_env) if root_env else app_path / "data" / "sample_trajectories"

    print(f"Writing sample trajectories to {root}...")
    for path in write_sample_data(root):
        print(f"  Created: {path}")
    print("Sample data generation completed!")
    print(f"\nTry: termpress replay {root} --mock {root / 'transcript.json'} --table")


if __name__ == "__main__":
    main()
