"""Writes the load profiles for the IEEE 57 PV demo.

One CSV per load bus under data/pvdemo/loads/, 10-minute rows over one
day, columns `time,P,Q` in per unit on the case base. Each bus follows a
daily residential shape with a small seeded per-bus jitter, scaled so
its maximum equals 1.2 times the static load of the case.

    python3 scripts/gen_pvdemo.py
"""
import datetime as dt
import os
import re

import numpy as np

ROOT = os.path.join(os.path.dirname(__file__), "..")
CASE = os.path.join(ROOT, "data", "cases", "ieee57.m")
OUT = os.path.join(ROOT, "data", "pvdemo", "loads")
START = dt.datetime(2024, 6, 21)
STEP_S = 600
PEAK = 1.2


def bus_loads(path):
    text = open(path).read()
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([\d.]+)", text).group(1))
    block = re.search(r"mpc\.bus\s*=\s*\[(.*?)\];", text, re.S).group(1)
    out = []
    for line in block.strip().splitlines():
        row = [float(x) for x in line.strip().rstrip(";").split()]
        if row[2] != 0 or row[3] != 0:
            out.append((int(row[0]), row[2] / base, row[3] / base))
    return out


def shape(hours):
    morning = 0.25 * np.exp(-0.5 * ((hours - 8.0) / 1.5) ** 2)
    evening = 0.55 * np.exp(-0.5 * ((hours - 19.0) / 2.0) ** 2)
    return 0.45 + morning + evening


def main():
    rng = np.random.default_rng(57)
    os.makedirs(OUT, exist_ok=True)
    n = 24 * 3600 // STEP_S + 1
    hours = np.arange(n) * STEP_S / 3600.0
    for bus, p, q in bus_loads(CASE):
        s = shape(hours + rng.normal(0.0, 0.3)) * (1.0 + 0.03 * rng.standard_normal(n))
        s *= PEAK / s.max()
        with open(os.path.join(OUT, "load_%d.csv" % bus), "w") as f:
            f.write("# time,P_pu,Q_pu\n")
            for k in range(n):
                t = (START + dt.timedelta(seconds=k * STEP_S)).strftime("%Y-%m-%dT%H:%M:%S")
                f.write("%s,%.10g,%.10g\n" % (t, p * s[k], q * s[k]))
    print(" ".join(str(b) for b, _, _ in bus_loads(CASE)))


if __name__ == "__main__":
    main()
