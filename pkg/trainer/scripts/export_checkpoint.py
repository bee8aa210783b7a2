#!/usr/bin/env python3
"""Export a training checkpoint (.pt) to the .gsm exchange format."""

import argparse
import sys

import torch

from gridforge_trainer.gsmio import export_weights
from gridforge_trainer.networks import Generator
from gridforge_trainer.presets import PRESETS


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("checkpoint")
    parser.add_argument("out_gsm")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    args = parser.parse_args()

    state = torch.load(args.checkpoint, map_location="cpu", weights_only=True)
    gen = Generator(PRESETS[args.preset]())
    gen.load_state_dict(state["generator"])
    export_weights(gen, args.out_gsm)
    print(f"{args.out_gsm} (epoch {state.get('epoch', '?')})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
