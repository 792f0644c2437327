"""Regenerates the bundled IEEE case files and reference solutions.

Writes Matpower version-2 case files from the PYPOWER copies of the
standard IEEE 14/30/57 bus cases, then solves each with PYPOWER's
Newton power flow (flat start, no Q-limit enforcement) and its
interior-point OPF to produce reference fixtures.

    pip install pypower
    python3 scripts/gen_fixtures.py
"""
import json
import os
import numpy as np
from pypower.api import case14, case30, case57, runpf, runopf, ppoption

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "cases")


def fmt_row(row, ints):
    out = []
    for k, v in enumerate(row):
        if k in ints:
            out.append("%d" % int(round(v)))
        else:
            out.append(repr(float(v)) if v != int(v) else "%d" % int(v))
    return "\t" + "\t".join(out) + ";"


def write_case(name, ppc):
    lines = [
        "function mpc = %s" % name,
        "%% %s: standard IEEE test case (data via PYPOWER)" % name.upper(),
        "",
        "%% MATPOWER Case Format : Version 2",
        "mpc.version = '2';",
        "",
        "%%-----  Power Flow Data  -----%%",
        "%% system MVA base",
        "mpc.baseMVA = %g;" % ppc["baseMVA"],
        "",
        "%% bus data",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    lines += [fmt_row(r, {0, 1, 6, 10}) for r in ppc["bus"]]
    lines += ["];", "", "%% generator data",
              "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
              "mpc.gen = ["]
    lines += [fmt_row(r[:10], {0, 7}) for r in ppc["gen"]]
    lines += ["];", "", "%% branch data",
              "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
              "mpc.branch = ["]
    lines += [fmt_row(r[:13], {0, 1, 10}) for r in ppc["branch"]]
    lines += ["];", "", "%%-----  OPF Data  -----%%", "%% generator cost data",
              "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0",
              "mpc.gencost = ["]
    lines += [fmt_row(r, {0, 3}) for r in ppc["gencost"]]
    lines += ["];", ""]
    with open(os.path.join(OUT, name + ".m"), "w") as f:
        f.write("\n".join(lines))


def main():
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-12, ENFORCE_Q_LIMS=0,
                   OPF_VIOLATION=1e-8, PDIPM_GRADTOL=1e-9, PDIPM_COMPTOL=1e-9,
                   PDIPM_FEASTOL=1e-9, PDIPM_COSTTOL=1e-9)
    ref = {}
    for name, fn in (("ieee14", case14), ("ieee30", case30), ("ieee57", case57)):
        ppc = fn()
        write_case(name, ppc)
        flat = fn()
        flat["bus"][:, 7] = 1.0
        flat["bus"][:, 8] = 0.0
        pf, ok = runpf(flat, opt)
        assert ok
        with open(os.path.join(OUT, name + "_pf_solution.csv"), "w") as f:
            f.write("# bus,Vm_pu,Va_deg (PYPOWER Newton power flow, tol 1e-12)\n")
            for r in pf["bus"]:
                f.write("%d,%.12f,%.12f\n" % (int(r[0]), r[7], r[8]))
        res = runopf(fn(), opt)
        ref[name] = {"opf_objective": float(res["f"]), "opf_success": bool(res["success"])}
    with open(os.path.join(OUT, "reference_opf.json"), "w") as f:
        json.dump(ref, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
