"""Shared argument handling for the experiment scripts."""

import argparse
import os

from icd.acceptance import Budget, Lab


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default="runs/experiments", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=6000, help="training steps for every model")
    return p


def lab_from(args) -> Lab:
    os.makedirs(args.out, exist_ok=True)
    return Lab(Budget(seed=args.seed, teacher_steps=args.steps, cfg_steps=args.steps, icd_steps=args.steps))
