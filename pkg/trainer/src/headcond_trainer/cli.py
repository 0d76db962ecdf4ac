"""Train a conditional generator on a headcond dataset.

Example:
    headcond-train --dataset d/ --out run/ --steps 2000 --conditioning render
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import TrainerConfig
from .data import TrainData
from .training import Trainer


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="headcond-train", description=__doc__)
    p.add_argument("--dataset", required=True, help="dataset root (manifest.jsonl)")
    p.add_argument("--out", required=True, help="run directory for logs/checkpoints")
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--conditioning", choices=("render", "vector"), default="render")
    p.add_argument("--lambda-tex", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=2.5e-3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    data = TrainData(args.dataset)
    cfg = TrainerConfig(resolution=data.resolution, conditioning=args.conditioning,
                        lambda_tex=args.lambda_tex, lr=args.lr, seed=args.seed,
                        steps=args.steps, batch_size=args.batch_size)
    trainer = Trainer(cfg, data, out_dir=args.out)

    before = trainer.adherence()
    trainer.train()
    after = trainer.adherence()
    trainer.save_checkpoint(os.path.join(args.out, "checkpoint.pt"))
    trainer.sample_grid(os.path.join(args.out, "samples.png"))
    summary = {
        "steps": trainer.step_count,
        "adherence_untrained": before,
        "adherence_trained": after,
        "final_losses": trainer.history[-1] if trainer.history else None,
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
