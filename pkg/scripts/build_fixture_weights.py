#!/usr/bin/env python3
"""Regenerate the checked-in flagship fixture file.

The construction is deterministic (piecewise-linear interpolation, no
training), so rerunning this script must reproduce
src/nflsynth/data/example_fixture.json byte for byte.
"""

from pathlib import Path

from nflsynth.fixtures import EXAMPLE_RADIUS, build_networks, example_matrices
from nflsynth.serialize import dumps_canonical, mlp_to_obj


def main() -> None:
    mats = example_matrices()
    obj = {
        "kind": "example_fixture",
        "A": mats["A"],
        "B0": mats["B0"],
        "B1": mats["B1"],
        "B2": mats["B2"],
        "C1": mats["C1"],
        "C2": mats["C2"],
        "radius": EXAMPLE_RADIUS,
        "psi_mlps": [mlp_to_obj(mlp) for mlp in build_networks()],
    }
    out = Path(__file__).resolve().parent.parent / "src" / "nflsynth" / "data"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "example_fixture.json"
    path.write_text(dumps_canonical(obj) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
