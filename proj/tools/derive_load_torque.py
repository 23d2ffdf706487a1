#!/usr/bin/env python3
"""Solve the load torque that places the 4200 rpm equilibrium at a given
throttle open area (default 7.44e-5 m^2), with the default engine parameters.

In choked-only flow mode the equilibrium decouples: the flow balance fixes the
manifold pressure for the given area, and the torque balance then gives T_l.
"""
import argparse
import math

from scipy.optimize import brentq

P = dict(R=287.0, theta_a=298.0, theta_m=340.0, V_d=2.77e-3, V_c=0.277e-3,
         p_a=1e5, p_out=1e5, gamma0=0.45, gamma1=3.42e-3, gamma2=-7.7e-6,
         eta0=0.16, eta1=2.21e-3, beta0=15.6, beta2=0.175e-3, H_f=45.8e6,
         kappa=1.35, alpha=14.70)


def vol_eff(w, p):
    speed = P["gamma0"] + P["gamma1"] * w + P["gamma2"] * w * w
    press = (P["V_c"] + P["V_d"]) / P["V_d"] - P["V_c"] / P["V_d"] * (P["p_out"] / p) ** (1 / P["kappa"])
    return speed * press


def air_flow(p, w):
    mix = p / (P["R"] * P["theta_m"]) * vol_eff(w, p) * P["V_d"] * w / (4 * math.pi)
    return mix * P["alpha"] / (P["alpha"] + 1)


def intake_flow(area):
    return area * P["p_a"] / math.sqrt(P["R"] * P["theta_a"]) / math.sqrt(2)


def torque(p, w):
    fuel_mep = (P["eta0"] + P["eta1"] * w) * P["H_f"] * p / (P["R"] * P["theta_m"]) * vol_eff(w, p) / (P["alpha"] + 1)
    losses = P["beta0"] + P["beta2"] * w * w + (P["p_out"] - p)
    return (fuel_mep - losses) * P["V_d"] / (4 * math.pi)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rpm", type=float, default=4200.0)
    parser.add_argument("--area", type=float, default=7.44e-5)
    args = parser.parse_args()
    w = args.rpm * 2 * math.pi / 60
    p = brentq(lambda p: intake_flow(args.area) - air_flow(p, w), 1e3, P["p_a"], xtol=1e-12, rtol=1e-15)
    print(f"p_m = {p!r} Pa")
    print(f"load_torque = {torque(p, w)!r}")


if __name__ == "__main__":
    main()
