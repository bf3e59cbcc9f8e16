#!/usr/bin/env python3
"""Export the bundled IEEE cases and freeze pandapower reference solutions.

The bundled cases are pandapower's case14/case118 with two modelling changes
applied before export: transformer taps set to neutral (ratio 1.0) and bus
shunts removed; transformers use the pi model. The same modified networks are solved with pandapower's
Newton-Raphson and the results are written to tests/data as frozen oracles.

Usage: python3 scripts/export_cases.py   (from the repository root)
"""
import json
import math

import numpy as np
import pandapower as pp
import pandapower.networks as pn
from pandapower.pypower.idx_brch import BR_G

TOL_MVA = 1e-11


def modified(net_factory):
    net = net_factory()
    net.trafo["tap_pos"] = net.trafo["tap_neutral"].fillna(0.0)
    net.shunt.drop(net.shunt.index, inplace=True)
    return net


def run(net):
    pp.runpp(net, calculate_voltage_angles=True, tolerance_mva=TOL_MVA,
             init="flat", max_iteration=30, enforce_q_lims=False, trafo_model="pi")


def f(v):
    return repr(float(v))


def export(name, net):
    run(net)
    ppc = net._ppc
    lookup = net._pd2ppc_lookups["bus"]
    assert list(lookup[: len(net.bus)]) == list(range(len(net.bus))), "bus reorder"
    base_mva = float(ppc["baseMVA"])
    branch = ppc["branch"]
    n_line = len(net.line)
    n_trafo = len(net.trafo)
    assert branch.shape[0] == n_line + n_trafo
    assert np.all(np.abs(branch[:, 8].real - 1.0) < 1e-15), "taps not neutral"
    assert np.all(np.abs(branch[:, 9].real) < 1e-15), "phase shift present"
    assert np.all(np.abs(branch[:, BR_G].real) < 1e-15), "branch shunt conductance present"

    slack_bus = int(net.ext_grid.bus.iloc[0])
    gen_bus = {}
    gens = [(slack_bus, 0.0, float(net.ext_grid.vm_pu.iloc[0]))]
    # slack p setpoint: use pandapower's solved slack output for reference
    gens[0] = (slack_bus, float(net.res_ext_grid.p_mw.iloc[0]) / base_mva,
               float(net.ext_grid.vm_pu.iloc[0]))
    for _, g in net.gen.iterrows():
        gens.append((int(g.bus), float(g.p_mw) / base_mva, float(g.vm_pu)))
    for b, _, v in gens:
        assert b not in gen_bus, "multiple generators on one bus"
        gen_bus[b] = v

    lines = []
    for i in range(n_line + n_trafo):
        row = branch[i].real
        lines.append(dict(fr=int(row[0]), to=int(row[1]), r=row[2], x=row[3],
                          b=row[4], i_max=row[5] / base_mva,
                          switchable=i < n_line))

    out = [ "mfpf-case v1", f"name {name}", f"base_mva {f(base_mva)}",
            "# generated by scripts/export_cases.py from pandapower "
            + name.replace('ieee', 'case') + " (taps neutral, shunts removed)" ]
    va0 = math.radians(float(net.ext_grid.va_degree.iloc[0]))
    for b in range(len(net.bus)):
        kind = "slack" if b == slack_bus else ("pv" if b in gen_bus else "pq")
        vm = gen_bus.get(b, 1.0)
        va = va0 if b == slack_bus else 0.0
        out.append(f"bus id={b} kind={kind} base_kv={f(net.bus.vn_kv.iloc[b])} "
                   f"vm={f(vm)} va={f(va)}")
    li = 0
    for br in lines:
        if br["switchable"]:
            out.append(f"line id={li} from={br['fr']} to={br['to']} r={f(br['r'])} "
                       f"x={f(br['x'])} b={f(br['b'])} i_max={f(br['i_max'])}")
            li += 1
    for br in lines:
        if not br["switchable"]:
            out.append(f"transformer from={br['fr']} to={br['to']} r={f(br['r'])} "
                       f"x={f(br['x'])} b={f(br['b'])} i_max={f(br['i_max'])}")
    for b, p, v in gens:
        out.append(f"generator bus={b} p={f(p)} v={f(v)}")
    for _, l in net.load.iterrows():
        out.append(f"load bus={int(l.bus)} p={f(l.p_mw / base_mva)} q={f(l.q_mvar / base_mva)}")
    with open(f"data/{name}.case", "w") as fh:
        fh.write("\n".join(out) + "\n")

    # MATPOWER-style export of the same modified data (physical units).
    m = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {f(base_mva)};",
         "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin", "mpc.bus = ["]
    pd = np.zeros(len(net.bus)); qd = np.zeros(len(net.bus))
    for _, l in net.load.iterrows():
        pd[int(l.bus)] += l.p_mw; qd[int(l.bus)] += l.q_mvar
    for b in range(len(net.bus)):
        t = 3 if b == slack_bus else (2 if b in gen_bus else 1)
        vm = gen_bus.get(b, 1.0)
        va = math.degrees(va0) if b == slack_bus else 0.0
        m.append(f"\t{b + 1}\t{t}\t{f(pd[b])}\t{f(qd[b])}\t0\t0\t1\t{f(vm)}\t{f(va)}\t"
                 f"{f(net.bus.vn_kv.iloc[b])}\t1\t1.06\t0.94;")
    m += ["];", "%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin", "mpc.gen = ["]
    for b, p, v in gens:
        m.append(f"\t{b + 1}\t{f(p * base_mva)}\t0\t9999\t-9999\t{f(v)}\t{f(base_mva)}\t1\t9999\t0;")
    m += ["];", "%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax",
          "mpc.branch = ["]
    for br in lines:
        # transformers between equal-kV buses are marked with a unit ratio
        ratio = 0 if br["switchable"] else 1
        m.append(f"\t{br['fr'] + 1}\t{br['to'] + 1}\t{f(br['r'])}\t{f(br['x'])}\t{f(br['b'])}\t"
                 f"{f(br['i_max'] * base_mva)}\t0\t0\t{ratio}\t0\t1\t-360\t360;")
    m += ["];"]
    with open(f"data/{name}.m", "w") as fh:
        fh.write("\n".join(m) + "\n")
    return base_mva


def solution(net, base_mva):
    n_line = len(net.line)
    vm = net.res_bus.vm_pu.to_numpy()
    va = np.radians(net.res_bus.va_degree.to_numpy())
    vn = net.bus.vn_kv.to_numpy()
    ibase_from = base_mva / (math.sqrt(3.0) * vn[net.line.from_bus.to_numpy()])
    ibase_to = base_mva / (math.sqrt(3.0) * vn[net.line.to_bus.to_numpy()])
    ok = net.line.in_service.to_numpy()
    i_from = np.where(ok, net.res_line.i_from_ka.to_numpy() / ibase_from, 0.0)
    i_to = np.where(ok, net.res_line.i_to_ka.to_numpy() / ibase_to, 0.0)
    return dict(
        converged=bool(net.converged),
        iterations=int(net._ppc["iterations"]),
        vm=vm.tolist(), va=va.tolist(),
        p_li=np.where(ok, net.res_line.p_from_mw.to_numpy() / base_mva, 0.0).tolist(),
        i_from=i_from.tolist(), i_to=i_to.tolist(),
        loading=np.where(ok, net.res_line.loading_percent.to_numpy() / 100.0, 0.0).tolist(),
    )


def reference(name, factory, outages):
    net = modified(factory)
    base_mva = export(name, net)
    ref = dict(source=f"pandapower {pp.__version__} runpp, tolerance_mva={TOL_MVA}",
               base=solution(net, base_mva))
    if name == "ieee14":
        Y = net._ppc["internal"]["Ybus"].toarray()
        ref["ybus_re"] = Y.real.tolist()
        ref["ybus_im"] = Y.imag.tolist()
    ref["outages"] = []
    for lines in outages:
        net2 = modified(factory)
        for l in lines:
            net2.line.loc[l, "in_service"] = False
        run(net2)
        ref["outages"].append(dict(lines=lines, solution=solution(net2, base_mva)))
    with open(f"tests/data/{name}_reference.json", "w") as fh:
        json.dump(ref, fh, indent=1)


if __name__ == "__main__":
    reference("ieee14", pn.case14, [[3], [0, 9]])
    reference("ieee118", pn.case118, [[10], [20, 100]])
