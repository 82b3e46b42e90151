"""Manufactured-solution convergence of the anisotropic Darcy solver."""
import argparse

import numpy as np

from lc_homog.limit import darcy_solve, face_centres
from lc_homog.linalg import SolveConfig


def errors(b, N):
    s, c, pi = np.sin, np.cos, np.pi
    (xx, xy), (yx, yy) = face_centres(N)
    ux = 2 * pi * s(pi * xx) ** 2 * s(pi * xy) * c(pi * xy)
    uy = -2 * pi * s(pi * yx) * c(pi * yx) * s(pi * yy) ** 2
    gx = ux - pi * (b[0, 0] * s(pi * xx) * c(pi * xy) + b[0, 1] * c(pi * xx) * s(pi * xy))
    gy = uy - pi * (b[1, 0] * s(pi * yx) * c(pi * yy) + b[1, 1] * c(pi * yx) * s(pi * yy))
    sol = darcy_solve(b, (gx, gy), N, SolveConfig(rel_tol=1e-12))
    ctr = (np.arange(N) + 0.5) / N
    X, Y = np.meshgrid(ctr, ctr, indexing="ij")
    P = c(pi * X) * c(pi * Y)
    h = 1.0 / N
    eu = h * np.sqrt(((sol.u[0] - ux) ** 2).sum() + ((sol.u[1] - uy) ** 2).sum())
    ep = h * np.sqrt(((sol.p_limit - P + P.mean()) ** 2).sum())
    return eu, ep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--b", type=float, nargs=3, default=[0.02, 0.005, 0.03],
                    metavar=("B11", "B12", "B22"))
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    args = ap.parse_args()
    b = np.array([[args.b[0], args.b[1]], [args.b[1], args.b[2]]])
    prev = None
    for N in args.sizes:
        eu, ep = errors(b, N)
        rate = "" if prev is None else f"  ratios {prev[0] / eu:.2f} {prev[1] / ep:.2f}"
        print(f"N={N:<4} |u - u*| = {eu:.3e}  |P - P*| = {ep:.3e}{rate}")
        prev = (eu, ep)


if __name__ == "__main__":
    main()
