#!/usr/bin/env python3
"""Grid calibration of the local geometry constants of the circle benchmark.

L(x) = (|x|^2 - 1)^2 has zero set the unit circle, G is the shifted Ackley
function. Writes a key = value fixture consumed by `geometry_file`.

The constants are chosen so the soft Laplace bound is evaluated on late-time
ensembles at xi = 1e4 (tau = 1/(xi alpha)):

  eta_L = 1, nu_L = 1/2   since |x|^2 - 1 = (|x| - 1)(|x| + 1) and |x| + 1 >= 1
  lipschitz_lower         sup of L over B_r(theta*) divided by r, which is
                          all the bound uses the Lipschitz constant for
  theta_tilde             grid argmin of G over the annulus N_{r_G}
  nu_G = 1/2, eta_G       min over the annulus sublevel set of
                          gap^{1/2} / |x - theta_tilde|, times a safety factor
"""
import argparse

import numpy as np

A, a, b, SHIFT = 20.0, 0.2, 3.0, np.array([0.5, 1.0 / 3.0])
THETA_STAR = np.array([0.7817183882501361, 0.6236315911430478])


def ackley(x, y):
    dx, dy = x - SHIFT[0], y - SHIFT[1]
    r = np.sqrt(dx * dx + dy * dy)
    c = 0.5 * (np.cos(2 * np.pi * b * dx) + np.cos(2 * np.pi * b * dy))
    g = -A * np.exp(-a * np.sqrt(b * b / 2.0) * r) - np.exp(c) + A + np.e
    return np.minimum(g, 22.36)


def circle_lower(x, y):
    return (x * x + y * y - 1.0) ** 2


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="tests/fixtures/circle_geometry.txt")
    p.add_argument("--r-g", type=float, default=0.03)
    p.add_argument("--big-r-g", type=float, default=0.04)
    p.add_argument("--r", type=float, default=0.006)
    p.add_argument("--u", type=float, default=2.5)
    p.add_argument("--delta-lev", type=float, default=6.5e-4)
    p.add_argument("--g-inf", type=float, default=3.5)
    p.add_argument("--safety", type=float, default=0.9)
    args = p.parse_args()
    r_g, r = args.r_g, args.r

    # Annulus N_{r_G}(circle) in polar coordinates.
    phi = np.linspace(0.0, 2 * np.pi, 40000, endpoint=False)
    rad = np.linspace(1.0 - r_g, 1.0 + r_g, 401)
    pp, rr = np.meshgrid(phi, rad)
    x, y = rr * np.cos(pp), rr * np.sin(pp)
    g = ackley(x, y)
    k = np.unravel_index(np.argmin(g), g.shape)
    tilde = np.array([float(x[k]), float(y[k])])
    g_tilde = float(g[k])
    if np.linalg.norm(tilde - THETA_STAR) > args.big_r_g:
        raise SystemExit(f"argmin {tilde} leaves B_RG(theta*); pick another R_G")

    gap = g - g_tilde
    dist = np.hypot(x - tilde[0], y - tilde[1])
    mask = (gap <= args.g_inf) & (dist > 0)
    eta_g = float(args.safety * np.min(np.sqrt(gap[mask]) / dist[mask]))

    # Ball B_r(theta*).
    t = np.linspace(-r, r, 1001)
    bx, by = np.meshgrid(THETA_STAR[0] + t, THETA_STAR[1] + t)
    inside = np.hypot(bx - THETA_STAR[0], by - THETA_STAR[1]) <= r
    l_lip = float(1.01 * np.max(circle_lower(bx[inside], by[inside])) / r)
    g_tilde_r = float(np.max(ackley(bx[inside], by[inside]))) - g_tilde
    if args.u + g_tilde_r > args.g_inf:
        raise SystemExit(f"u + G~_r = {args.u + g_tilde_r} exceeds G_inf")

    lines = [
        "# circle benchmark local geometry, produced by tools/calibrate_geometry.py",
        f"# G(theta_tilde) = {g_tilde!r}, grid G~_r = {g_tilde_r!r}",
        "eta_l = 1",
        "nu_l = 0.5",
        "l_inf = 1",
        f"eta_g = {eta_g!r}",
        "nu_g = 0.5",
        f"g_inf = {args.g_inf!r}",
        f"r_g = {r_g!r}",
        f"big_r_g = {args.big_r_g!r}",
        f"r = {r!r}",
        f"u = {args.u!r}",
        f"delta_lev = {args.delta_lev!r}",
        f"theta_tilde = {float(tilde[0])!r},{float(tilde[1])!r}",
        f"lipschitz_lower = {l_lip!r}",
    ]
    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")
    print("\n".join(lines))


if __name__ == "__main__":
    main()
