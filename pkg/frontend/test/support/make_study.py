"""Build a small open study (one method pair, six trials) for the UI tests."""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from madstudy.service import StudyConfig, StudyState, run_ingest, run_schedule, run_select

METHODS = ("alphaenh", "betaenh")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("root", help="scratch directory to build the study in")
    parser.add_argument("--trials", type=int, default=6)
    args = parser.parse_args()

    root = Path(args.root)
    rng = np.random.default_rng(99)
    pool_dir = root / "pool"
    (pool_dir / "inputs").mkdir(parents=True)
    for method in METHODS:
        (pool_dir / method).mkdir()
    for i in range(args.trials + 2):
        name = f"cand{i:02d}.png"
        base = rng.integers(0, 256, (24, 24, 3)).astype(np.uint8)
        Image.fromarray(base, "RGB").save(pool_dir / "inputs" / name)
        for method in METHODS:
            shift = rng.integers(-70, 70, base.shape)
            out = np.clip(base.astype(int) + shift, 0, 255).astype(np.uint8)
            Image.fromarray(out, "RGB").save(pool_dir / method / name)
    methods_file = root / "methods.txt"
    methods_file.write_text("\n".join(METHODS) + "\n")

    config = StudyConfig(study_id="uitest", k=args.trials, d1="mse", seed=7)
    state = StudyState.create(root / "study", config)
    run_ingest(state, pool_dir, methods_file)
    run_select(state)
    run_schedule(state)
    print(state.root)


if __name__ == "__main__":
    main()
