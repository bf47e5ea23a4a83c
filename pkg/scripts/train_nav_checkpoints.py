"""Train the safe agent and the unconstrained ablation on the dynamic crossing
scenario and install their final checkpoints as package data.

    python scripts/train_nav_checkpoints.py [--epochs 300] [--work /tmp/nav-ckpt]

The robustness sweep in the acceptance suite loads these checkpoints, so rerun
this after any change that alters training numerics.
"""

import argparse
import shutil
from dataclasses import replace
from pathlib import Path

from latentsafe.config import RunConfig, default_config_text
from latentsafe.harness import train_run

DEST = Path(__file__).resolve().parents[1] / "src" / "latentsafe" / "data" / "checkpoints"


def nav_config(variant: str, epochs: int) -> RunConfig:
    cfg = RunConfig(env="nav", scenario="dynamic-2", checkpoint_every=0)
    train = replace(cfg.train, epochs=epochs)
    if variant == "sac":
        train = train.unconstrained()
    return replace(cfg, train=train)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--work", type=Path, default=Path("/tmp/nav-ckpt"))
    args = ap.parse_args()
    for variant in ("safe", "sac"):
        cfg = nav_config(variant, args.epochs)
        out = args.work / variant
        res = train_run(cfg, out)
        tail = res.stats[-50:]
        print(f"{variant}: last-50 return {sum(s['return'] for s in tail) / len(tail):.2f}  "
              f"cost {sum(s['cost'] for s in tail) / len(tail):.3f}  "
              f"violations {sum(s['violations'] for s in tail)}")
        target = DEST / variant
        if target.exists():
            shutil.rmtree(target)
        shutil.copytree(out / "final", target)
        (target / "config.ini").write_text(default_config_text(cfg))
    print(f"installed checkpoints under {DEST}")


if __name__ == "__main__":
    main()
