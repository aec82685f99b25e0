"""Rebuild the bundled demo assets from their generators.

    python scripts/regenerate_assets.py            # overwrite src/vastream/assets
    python scripts/regenerate_assets.py --out tmp  # write elsewhere for diffing
"""

import argparse
from pathlib import Path

from vastream.scenarios import asset_path, write_demo_assets


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=asset_path("profile").parent)
    args = ap.parse_args()
    for name, path in write_demo_assets(args.out).items():
        print(f"{name:>14}  {path}")


if __name__ == "__main__":
    main()
