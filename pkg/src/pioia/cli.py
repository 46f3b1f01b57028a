"""Command-line entry points: ``solve``, ``perturb`` and ``oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .backend import BACKENDS, CONIC_ENGINES
from .formulation import FormulationError, Variant
from .metrics import gap, milestones, optg, violation
from .model import InstanceError, instance_to_dict, load_instance, perturb_loads
from .oia import AlgoParams, OiaError
from .oracle import EnumerationTooLarge, brute_force_optimum, write_golden
from .progressive import Method, exit_code, run_pioia

log = logging.getLogger("pioia")


def _finite(v):
    return v if v is not None and math.isfinite(v) else None


def _params(args) -> AlgoParams:
    return AlgoParams(
        eps=args.eps, eps_tol=args.eps_tol, eps_par=args.eps_par, p_cut=args.p_cut,
        mip_gap_init=args.mip_gap_init, solver_time_init=args.solver_time_init,
        eps_lp=args.eps_lp, eps_ig=args.eps_ig, k_ig=args.k_ig, max_iter=args.max_iter,
        time_budget=args.time_budget, seed=args.seed, backend=args.backend, conic=args.conic)


def summarize(state, inst, variant, method, obj_star=None) -> dict:
    vio = violation(inst, variant, state.incumbent) if state.incumbent is not None else None
    return {
        "method": Method.parse(method).value,
        "variant": Variant.parse(variant).value,
        "ub": _finite(state.UB),
        "lb": _finite(state.LB),
        "gap": _finite(gap(state.UB, state.LB)),
        "optg": _finite(optg(state.UB, obj_star)) if obj_star is not None else None,
        "vio": vio,
        "runtime_s": state.trace.last.wall_time_s if state.trace.last else 0.0,
        "milestones": milestones(state.trace, obj_star),
        "cut_counts": {k: state.pool.count(k) for k in ("soc", "cap", "benders")},
    }


def cmd_solve(args) -> int:
    try:
        inst = load_instance(args.instance)
        params = _params(args)
        state = run_pioia(inst, args.variant, params, args.method)
    except (InstanceError, FormulationError, OiaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = summarize(state, inst, args.variant, args.method, args.obj_star)
    if args.trace:
        state.trace.write(args.trace)
    text = json.dumps(summary, indent=1)
    if args.summary:
        Path(args.summary).write_text(text + "\n")
    print(text)
    for e in state.events:
        log.info(e)
    code = exit_code(state)
    if code:
        print(f"stopped without convergence ({state.reason})", file=sys.stderr)
    return code


def parse_seeds(spec: str) -> list[int]:
    """'1..10', '1-10' or '1,4,7' to a list of ints."""
    out: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        for sep in ("..", "-"):
            if sep in part.lstrip("-"):
                lo, hi = part.split(sep, 1) if sep == ".." else part.rsplit("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
                break
        else:
            out.append(int(part))
    return out


def cmd_perturb(args) -> int:
    try:
        inst = load_instance(args.instance)
        seeds = parse_seeds(args.seeds)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(args.instance).stem
        for s in seeds:
            rec = instance_to_dict(perturb_loads(inst, args.sigma, s, perturb_q=not args.keep_q))
            rec["meta"] = {"source": str(args.instance), "sigma": args.sigma, "seed": s}
            path = out_dir / f"{stem}-s{s}.json"
            path.write_text(json.dumps(rec, indent=1))
            print(path)
    except (InstanceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_oracle(args) -> int:
    try:
        inst = load_instance(args.instance)
        res = brute_force_optimum(inst, args.variant, conic=args.conic, backend=args.backend)
    except (InstanceError, EnumerationTooLarge, FormulationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sched = None if res.schedule is None else res.schedule.u.tolist()
    print(json.dumps({"obj_star": _finite(res.objective), "schedule": sched,
                      "schedules": res.n_schedules, "feasible": res.n_feasible}, indent=1))
    if args.golden:
        write_golden(args.golden, inst, args.variant, res)
    return 0 if res.schedule is not None else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pioia", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--instance", required=True, help="instance JSON file")
        sp.add_argument("--variant", default="f2", choices=[v.value for v in Variant])
        sp.add_argument("--backend", default=None, choices=sorted(BACKENDS),
                        help="solver backend (default: $PIOIA_BACKEND or highs)")
        sp.add_argument("--conic", default=None, choices=sorted(CONIC_ENGINES),
                        help="override the conic engine")

    s = sub.add_parser("solve", help="run the staged outer-inner method")
    common(s)
    d = AlgoParams()
    s.add_argument("--method", default="m4", choices=[m.value for m in Method])
    s.add_argument("--eps", type=float, default=d.eps)
    s.add_argument("--eps-tol", type=float, default=d.eps_tol)
    s.add_argument("--eps-par", type=float, default=d.eps_par)
    s.add_argument("--p-cut", type=float, default=d.p_cut)
    s.add_argument("--mip-gap-init", type=float, default=d.mip_gap_init)
    s.add_argument("--solver-time-init", type=float, default=d.solver_time_init)
    s.add_argument("--eps-lp", type=float, default=d.eps_lp)
    s.add_argument("--eps-ig", type=float, default=d.eps_ig)
    s.add_argument("--k-ig", type=int, default=None)
    s.add_argument("--max-iter", type=int, default=d.max_iter)
    s.add_argument("--time-budget", type=float, default=math.inf, help="wall-clock seconds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", help="write the iteration trace CSV here")
    s.add_argument("--summary", help="write the summary JSON here")
    s.add_argument("--obj-star", type=float, default=None, help="known optimum for OptG")
    s.set_defaults(func=cmd_solve)

    pt = sub.add_parser("perturb", help="write load-perturbed copies of an instance")
    pt.add_argument("--instance", required=True)
    pt.add_argument("--sigma", type=float, required=True)
    pt.add_argument("--seeds", required=True, help="e.g. 1..10 or 1,2,5")
    pt.add_argument("--out-dir", default=".")
    pt.add_argument("--keep-q", action="store_true", help="leave reactive loads unscaled")
    pt.set_defaults(func=cmd_perturb)

    o = sub.add_parser("oracle", help="enumerate commitments for the exact optimum")
    common(o)
    o.add_argument("--golden", help="write a golden record here")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
