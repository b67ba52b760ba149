"""Command-line front end: demos, net and quasigroup builds, compilation, verification.

Every run is deterministic given its flags and seed.  Outputs are JSON bundles
(schema above each writer) or tidy CSV for plotting; summaries go to stdout.
Exit codes: 0 all checks pass, 1 a bound or invariant failed, 2 usage or IO.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from . import serialize
from .algebra import certify_approx_rep, ordinary_rep, right_quasigroup_from_table
from .approx_protocol import QuasigroupProtocolSpec, dilation_error
from .compiler import CompileTargets, compile_target, lemma_advisory, normalize_su
from .demos import EXACT_DEMOS, exact_demo_instance
from .errors import FastcuError, SchemaMismatch
from .exact_protocol import run_exact_protocol
from .net import DEFAULT_CAP, build_net
from .qgbuilder import assemble_quasigroup
from .qsim import RegisterLayout, random_pure_state

DEMO_TRIALS = 50


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastcu", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("exact-demo", help="run a named exact-protocol demo")
    d.add_argument("name", choices=sorted(EXACT_DEMOS))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", default=None)

    n = sub.add_parser("net-build", help="build a word net and emit its cache")
    n.add_argument("--d", type=int, default=2)
    n.add_argument("--m", type=int, required=True)
    n.add_argument("--cap", type=int, default=DEFAULT_CAP)
    n.add_argument("--out", default=None)

    q = sub.add_parser("qg-build", help="assemble a right quasigroup over a net")
    q.add_argument("--d", type=int, default=2)
    q.add_argument("--m", type=int, required=True)
    q.add_argument("--eta", type=float, required=True)
    q.add_argument("--cap", type=int, default=DEFAULT_CAP)
    q.add_argument("--threads", type=int, default=1)
    q.add_argument("--out", default=None)

    c = sub.add_parser("compile", help="compile a controlled unitary from a representation JSON")
    c.add_argument("input", help="path to {'dim':..., 'matrices':[...]} for the controlled blocks")
    c.add_argument("--zeta-target", type=float, default=None)
    c.add_argument("--eta", type=float, default=None, help="eta target")
    c.add_argument("--delta-target", type=float, default=None)
    c.add_argument("--epsilon-target", type=float, default=None)
    c.add_argument("--cap", type=int, default=DEFAULT_CAP)
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)

    v = sub.add_parser("verify", help="re-run all checks against a saved bundle")
    v.add_argument("bundle")

    r = sub.add_parser("report", help="emit plot-ready CSV from a bundle")
    r.add_argument("bundle")
    r.add_argument("--out", required=True)
    return p


def _emit(doc: dict, out: str | None) -> None:
    if out:
        serialize.save_json(doc, out)
        print(f"wrote {out}")


def cmd_exact_demo(args) -> int:
    cgu = exact_demo_instance(args.name)
    rng = np.random.default_rng(args.seed)
    layout = RegisterLayout.of(("A", cgu.d_a), ("B", cgu.d_b))
    worst_dev = 0.0
    worst_uni = 0.0
    for _ in range(DEMO_TRIALS):
        record = run_exact_protocol(cgu, random_pure_state(layout, rng))
        worst_dev = max(worst_dev, record.max_deviation)
        worst_uni = max(worst_uni, record.uniformity_error)
    doc = {
        "schema_version": serialize.SCHEMA_VERSION,
        "kind": "exact-demo",
        "example": args.name,
        "seed": args.seed,
        "trials": DEMO_TRIALS,
        "N": cgu.group.order,
        "S": list(cgu.subset),
        "cost_ebits": cgu.cost_ebits(),
        "max_branch_deviation": worst_dev,
        "uniformity_error": worst_uni,
    }
    print(f"{args.name}: N={doc['N']} cost={doc['cost_ebits']:.6f} ebits "
          f"max_dev={worst_dev:.3e} uniformity={worst_uni:.3e} over {DEMO_TRIALS} inputs")
    _emit(doc, args.out)
    return 0 if worst_dev <= 1e-9 and worst_uni <= 1e-10 else 1


def cmd_net_build(args) -> int:
    net = build_net(args.d, args.m, cap=args.cap)
    print(f"net d={args.d} m={args.m}: size={net.size} mixing_bound={net.mixing_bound:.6f} "
          f"cost={math.log2(net.size):.4f} ebits")
    if args.out:
        serialize.save_json(serialize.net_to_json(net), args.out)
        print(f"wrote {args.out}")
    return 0


def _qg_bundle(built, d: int, m: int) -> dict:
    return {
        "schema_version": serialize.SCHEMA_VERSION,
        "kind": "quasigroup",
        "N": built.quasigroup.order,
        "eta": built.eta,
        "delta_cert": built.certificate.delta_cert,
        "table": built.quasigroup.table.tolist(),
        "net": {"d": d, "m": m},
        "matched_counts": built.matched_counts.tolist(),
    }


def cmd_qg_build(args) -> int:
    net = build_net(args.d, args.m, cap=args.cap)
    built = assemble_quasigroup(net, args.eta, workers=max(1, args.threads))
    print(f"quasigroup N={net.size} eta={args.eta}: delta_cert={built.certificate.delta_cert:.6f} "
          f"(matching bound {built.delta_from_matching:.6f})")
    _emit(_qg_bundle(built, args.d, args.m), args.out)
    return 0


def cmd_compile(args) -> int:
    doc = serialize.load_json(args.input)
    blocks = serialize.rep_from_json(doc)
    target = normalize_su(blocks)
    targets = CompileTargets(zeta=args.zeta_target, eta=args.eta,
                             delta=args.delta_target, epsilon=args.epsilon_target)
    result = compile_target(target, targets, cap=args.cap, workers=max(1, args.threads))
    plan, report = result.plan, result.report
    advisory = lemma_advisory(target.d_b, plan.zeta) if 0 < plan.zeta < 1 else None
    print(f"compiled at m={plan.m}: zeta={plan.zeta:.4f} eta={plan.eta:.4f} "
          f"delta_cert={plan.delta_cert:.4f} cost={report.cost_ebits:.4f} ebits")
    print(f"measured diamond bound {report.diamond_bound_measured:.4f} <= "
          f"certified {report.certified_error_bound:.4f}"
          + (f" (advisory degree {advisory})" if advisory is not None else ""))
    bundle = {
        "schema_version": serialize.SCHEMA_VERSION,
        "kind": "compile",
        "seed": args.seed,
        "target": {"dim": target.d_b,
                   "matrices": serialize.complex_to_pairs(target.blocks),
                   "phases": target.phases.tolist()},
        "plan": {
            "m": plan.m,
            "eta": plan.eta,
            "delta_cert": plan.delta_cert,
            "zeta": plan.zeta,
            "zetas": list(plan.zetas),
            "assignment": list(plan.assignment),
            "table": plan.built.quasigroup.table.tolist(),
            "net": {"d": plan.net.d, "m": plan.net.m},
        },
        "report": {
            "gap_target_plan": report.gap_target_plan,
            "gap_plan_actual": report.gap_plan_actual,
            "gap_target_actual": report.gap_target_actual,
            "diamond_bound_measured": report.diamond_bound_measured,
            "certified_error_bound": report.certified_error_bound,
            "cost_ebits": report.cost_ebits,
        },
        "scan": [{"m": p.m, "eta": p.eta, "zeta": p.zeta, "delta": p.delta,
                  "cost_ebits": p.cost_ebits, "accepted": p.accepted}
                 for p in result.scan_trace],
    }
    _emit(bundle, args.out)
    return 0


def _fail(name: str, detail: str) -> int:
    print(f"FAIL {name}: {detail}")
    return 1


def _verify_quasigroup_bundle(doc: dict) -> int:
    table = np.asarray(doc["table"], dtype=np.int64)
    n = table.shape[0]
    idx = np.arange(n)
    for col in range(n):
        if not np.array_equal(np.sort(table[:, col]), idx):
            return _fail("axioms", f"column {col} is not a permutation")
    print(f"ok axioms: all {n} columns are permutations")
    quasigroup = right_quasigroup_from_table(table)
    net = build_net(doc["net"]["d"], doc["net"]["m"])
    if net.size != n:
        return _fail("net", f"net size {net.size} does not match table order {n}")
    cert = certify_approx_rep(net.matrices, quasigroup, doc["eta"])
    if abs(cert.delta_cert - doc["delta_cert"]) > 1e-12:
        return _fail("recount", f"stored delta_cert={doc['delta_cert']} but recount={cert.delta_cert}")
    print(f"ok recount: delta_cert={cert.delta_cert:.6f}")
    spec = QuasigroupProtocolSpec(quasigroup, ordinary_rep(quasigroup, net.matrices),
                                  term_map=tuple(range(min(3, n))))
    rep = dilation_error(spec, doc["eta"], cert.delta_cert)
    if rep.measured > rep.certified_gap_bound + 1e-9:
        return _fail("dilation", f"measured {rep.measured} exceeds bound {rep.certified_gap_bound}")
    print(f"ok dilation: measured {rep.measured:.6f} <= bound {rep.certified_gap_bound:.6f}")
    return 0


def _verify_compile_bundle(doc: dict) -> int:
    plan = doc["plan"]
    table = np.asarray(plan["table"], dtype=np.int64)
    n = table.shape[0]
    idx = np.arange(n)
    for col in range(n):
        if not np.array_equal(np.sort(table[:, col]), idx):
            return _fail("axioms", f"column {col} is not a permutation")
    print(f"ok axioms: all {n} columns are permutations")
    quasigroup = right_quasigroup_from_table(table)
    net = build_net(plan["net"]["d"], plan["net"]["m"])
    cert = certify_approx_rep(net.matrices, quasigroup, plan["eta"])
    if abs(cert.delta_cert - plan["delta_cert"]) > 1e-12:
        return _fail("recount", f"stored delta_cert={plan['delta_cert']} but recount={cert.delta_cert}")
    print(f"ok recount: delta_cert={cert.delta_cert:.6f}")

    blocks = serialize.pairs_to_complex(doc["target"]["matrices"])
    assignment = list(plan["assignment"])
    zeta = max(float(np.linalg.svd(w - net.matrices[k], compute_uv=False)[0])
               for w, k in zip(blocks, assignment))
    if zeta > plan["zeta"] + 1e-12:
        return _fail("zeta", f"stored zeta={plan['zeta']} but recomputed {zeta}")
    print(f"ok zeta: {zeta:.6f}")

    spec = QuasigroupProtocolSpec(quasigroup, ordinary_rep(quasigroup, net.matrices),
                                  term_map=tuple(assignment))
    rep = dilation_error(spec, plan["eta"], cert.delta_cert)
    bound = 2.0 * (zeta + math.sqrt(plan["eta"] ** 2 + 4.0 * cert.delta_cert))
    measured = doc["report"]["diamond_bound_measured"]
    if measured > bound + 1e-9:
        return _fail("bound", f"measured {measured} exceeds certified {bound}")
    print(f"ok bound: measured {measured:.6f} <= certified {bound:.6f}")
    r = plan["net"]["d"] * (plan["net"]["d"] - 1) // 2
    expected_cost = 1.0 + plan["net"]["m"] * r * math.log2(6.0)
    if abs(doc["report"]["cost_ebits"] - expected_cost) > 1e-9:
        return _fail("cost", f"cost {doc['report']['cost_ebits']} != identity {expected_cost}")
    print(f"ok cost: {expected_cost:.6f} ebits")
    return 0


def cmd_verify(args) -> int:
    doc = serialize.load_json(args.bundle)
    kind = doc.get("kind")
    if kind == "quasigroup":
        return _verify_quasigroup_bundle(doc)
    if kind == "compile":
        return _verify_compile_bundle(doc)
    if kind == "exact-demo":
        ok = doc["max_branch_deviation"] <= 1e-9 and doc["uniformity_error"] <= 1e-10
        print(("ok" if ok else "FAIL") + f" demo record: dev={doc['max_branch_deviation']:.3e}")
        return 0 if ok else 1
    raise SchemaMismatch(f"cannot verify bundle of kind {kind!r}")


def cmd_report(args) -> int:
    doc = serialize.load_json(args.bundle)
    rows = []
    if doc.get("kind") == "compile":
        for p in doc["scan"]:
            eps = (2.0 * (p["zeta"] + math.sqrt(p["eta"] ** 2 + 4.0 * p["delta"]))
                   if p["eta"] == p["eta"] and p["delta"] == p["delta"] else float("nan"))
            rows.append({"m": p["m"], "eta": p["eta"], "zeta": p["zeta"],
                         "delta": p["delta"], "cost_ebits": p["cost_ebits"],
                         "error_bound": eps, "accepted": int(p["accepted"])})
    elif doc.get("kind") == "quasigroup":
        eps = 2.0 * math.sqrt(doc["eta"] ** 2 + 4.0 * doc["delta_cert"])
        rows.append({"m": doc["net"]["m"], "eta": doc["eta"], "zeta": float("nan"),
                     "delta": doc["delta_cert"],
                     "cost_ebits": math.log2(doc["N"]), "error_bound": eps, "accepted": 1})
    else:
        raise SchemaMismatch(f"cannot report on bundle of kind {doc.get('kind')!r}")
    fields = ["m", "eta", "zeta", "delta", "cost_ebits", "error_bound", "accepted"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "exact-demo": cmd_exact_demo,
        "net-build": cmd_net_build,
        "qg-build": cmd_qg_build,
        "compile": cmd_compile,
        "verify": cmd_verify,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FastcuError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
