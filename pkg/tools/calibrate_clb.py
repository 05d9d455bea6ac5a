"""Run the 1000-image CLB pilot and write ``src/somgen/data/clb_params.json``.

Run from the repository root after installing: ``python tools/calibrate_clb.py``.
"""
import json
from pathlib import Path

from somgen import clb

OUT = Path(__file__).resolve().parents[1] / "src" / "somgen" / "data" / "clb_params.json"
PILOT_SEED = 20_240_101

SOURCE = (
    "Defaults of the clustered lumpy background model as published with it "
    "(mean 150 clusters on a 200x200 frame, 20 lumps per cluster, Lx=5, Ly=2, "
    "alpha=2.1, beta=0.5, cluster spread 12). Normalization from a 1000-image pilot."
)


def main():
    params = clb.ClbParams()
    norm = clb.calibrate_normalization(params, PILOT_SEED, n_images=1000)
    doc = clb.with_normalization(params, norm).to_json()
    doc["source"] = SOURCE
    doc["pilot_seed"] = PILOT_SEED
    with open(OUT, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(norm)


if __name__ == "__main__":
    main()
