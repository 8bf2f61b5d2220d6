#!/usr/bin/env python3
"""Regenerate data/dw2000q_approx.csv, the bundled approximation of the annealing schedule.

A(s) = A0 exp(-cA s - dA s^2), B(s) = B0 + B1 s^k, in angular GHz. The parameters were
tuned so the n=20 p-spin and search instances reproduce the reported avoided-crossing
location and width; they are not vendor data.
"""
import math
import sys

A0, CA, DA, B1, K, B0 = 34.0, 4.4, 1.3, 30.0, 1.43, 0.05
POINTS = 401


def main(path):
    with open(path, "w") as f:
        f.write("# Approximate D-Wave 2000Q annealing schedule (not vendor data).\n")
        f.write(f"# A(s) = {A0} exp(-{CA} s - {DA} s^2), B(s) = {B0} + {B1} s^{K}; angular GHz.\n")
        f.write("# Regenerate with tools/make_schedule.py.\n")
        f.write("s,A,B\n")
        for k in range(POINTS):
            s = k / (POINTS - 1)
            a = A0 * math.exp(-CA * s - DA * s * s)
            b = B0 + B1 * s**K
            f.write(f"{s:.6f},{a:.12g},{b:.12g}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/dw2000q_approx.csv")
