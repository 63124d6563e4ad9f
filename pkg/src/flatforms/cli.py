"""Command-line front end.

Instance files are JSON: ``complex``, ``leaves``, ``heights``,
``epsilon`` and a ``version`` field, with optional ``coefficients``,
``fiber_model`` and ``partition`` sections.  Rationals travel as
"p/q" strings throughout so nothing is ever rounded.  Every command
prints a report object to stdout (and to ``--report FILE`` when given)
whose content is deterministic apart from the timing block.

Exit codes: 0 when all checks pass, 1 when a check fails, 2 on
malformed input.  Failures always carry a certificate naming the
simplex, block or tuple that witnessed them.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .flatsys import (
    CoefficientSystem,
    Infeasible,
    MissingFaceData,
    cw_boundary,
    cw_homology,
    extend_system,
    fiber_homology,
    holonomy_on_homology,
    igusa_check,
    igusa_export,
    validate_system,
)
from .instances import (
    generate,
    instance_from_json,
    instance_to_json,
    make_fiber_model,
)
from .linalg import eye, mat_eq, qx
from .mixed import (
    ChainIdentityViolation,
    FiberModel,
    NotNilpotent,
    build_Iprime,
    build_mixed_connection,
    locality_check,
    validate_fiber_model,
)
from .morse import check_partial_order, check_refinement, validate_leaf_system
from .simplicial import build_complex, dim
from .smoothing import (
    PartitionOfUnity,
    assemble_I,
    omega_betti,
    partition_default,
    pullback_global,
    quasi_iso_ranks,
    validate_partition,
    verify_chain,
    verify_global,
)
from .wkflow import NoConvergence, classify_limits, flow, height, nearest_vertex

FILE_VERSION = 1


class ParseError(Exception):
    pass


# ---------------------------------------------------------------------------
# instance plumbing
# ---------------------------------------------------------------------------


def _skey(s) -> str:
    return ",".join(map(str, s))


def _plain(x):
    """Rationals to strings, tuples to lists, numpy scalars to floats."""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {(_skey(k) if isinstance(k, tuple) else k): _plain(v)
                for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


class Loaded:
    def __init__(self, raw, S, L, A, FM, P, has_coeffs):
        self.raw = raw
        self.S, self.L, self.A = S, L, A
        self.FM, self.P = FM, P
        self.has_coeffs = has_coeffs


def load_instance(args) -> Loaded:
    if getattr(args, "instance", None):
        try:
            raw = json.loads(Path(args.instance).read_text())
        except FileNotFoundError:
            raise ParseError(f"no such file: {args.instance}")
        except json.JSONDecodeError as ex:
            raise ParseError(f"{args.instance} is not valid JSON: {ex}")
        if "version" not in raw:
            raise ParseError("instance file has no version field")
        try:
            S, L, A = instance_from_json(raw)
            FM = (FiberModel.from_json(raw["fiber_model"])
                  if "fiber_model" in raw else None)
            P = (PartitionOfUnity.from_json(S, raw["partition"])
                 if "partition" in raw else None)
        except (KeyError, TypeError, ValueError) as ex:
            raise ParseError(f"malformed instance file: {ex!r}")
        return Loaded(raw, S, L, A, FM, P, "coefficients" in raw)
    if getattr(args, "seed", None) is not None:
        inst = generate(args.seed)
        try:
            FM = make_fiber_model(inst)
        except ValueError:
            FM = None
        return Loaded(None, inst.S, inst.L, inst.A, FM, None, True)
    raise ParseError("provide --instance FILE or --seed N")


def save_instance(path, S, L, A, extra: dict | None = None):
    data = instance_to_json(S, L, A)
    data["version"] = FILE_VERSION
    for key in ("fiber_model", "partition"):
        if extra and key in extra:
            data[key] = extra[key]
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def _skeleton(A: CoefficientSystem, k: int) -> CoefficientSystem:
    """The system restricted to the k-skeleton of its base."""
    cells = [s for s in A.S if dim(s) <= k]
    out = CoefficientSystem(build_complex(cells), A.L)
    for s in cells:
        if A.has(s):
            out.set(s, {r: dict(row) for r, row in A.coeffs[s].items()})
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args):
    inst = load_instance(args)
    certs = []
    checks = {}
    t0 = time.perf_counter()
    leaf = (validate_leaf_system(inst.L, inst.S)
            + check_partial_order(inst.L, inst.S)
            + check_refinement(inst.L, inst.S))
    checks["leaves"] = "ok" if not leaf else leaf
    certs += leaf
    if inst.has_coeffs:
        sysp = validate_system(inst.A)
        checks["system"] = "ok" if not sysp else sysp
        certs += sysp
    else:
        checks["system"] = "skipped (no coefficients)"
    if inst.FM is not None:
        if inst.has_coeffs and checks["system"] == "ok":
            fmp = validate_fiber_model(inst.A, inst.FM)
            checks["fiber_model"] = "ok" if not fmp else fmp
            certs += fmp
        else:
            checks["fiber_model"] = "skipped (needs a valid system)"
    if inst.P is not None:
        pp = validate_partition(inst.P)
        checks["partition"] = "ok" if not pp else pp
        certs += pp
    return {"checks": checks,
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_extend(args):
    if not args.instance:
        raise ParseError("extend needs --instance FILE to write back to")
    inst = load_instance(args)
    certs = []
    t0 = time.perf_counter()
    try:
        full = extend_system(inst.A, to_dim=args.to_dim)
    except (Infeasible, MissingFaceData) as ex:
        return {"checks": {"extend": str(ex)},
                "timings": {"total": time.perf_counter() - t0}}, [str(ex)]
    problems = validate_system(full)
    certs += problems
    filled = sorted(set(full.coeffs) - set(inst.A.coeffs))
    if not certs:
        extra = {k: inst.raw[k] for k in ("fiber_model", "partition")
                 if inst.raw and k in inst.raw}
        save_instance(args.instance, inst.S, inst.L, full, extra)
    return {"checks": {"filled": [_skey(s) for s in filled],
                       "system": "ok" if not problems else problems,
                       "written": not certs},
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_build_aprime(args):
    inst = load_instance(args)
    certs = []
    t0 = time.perf_counter()
    sysp = validate_system(inst.A)
    if sysp:
        return {"checks": {"system": sysp}}, sysp
    try:
        data = build_mixed_connection(inst.A, max_degree=args.max_degree,
                                      strict=False)
    except NotNilpotent as ex:
        return {"checks": {"build": str(ex)}}, [str(ex)]
    checks = {"simplices": len(data.report)}
    for entry in data.report:
        for kind in ("compat", "structure", "coherence"):
            for msg in entry[kind]:
                certs.append(f"{_skey(entry['sigma'])}: {msg}")
        if entry["flat"] is False:
            certs.append(f"{_skey(entry['sigma'])}: connection is not flat")
    checks["problems"] = certs if certs else "none"
    return {"checks": checks,
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_build_iprime(args):
    inst = load_instance(args)
    if inst.FM is None:
        raise ParseError("no fiber model: add one to the instance file "
                         "or use --seed")
    certs = []
    t0 = time.perf_counter()
    fmp = validate_fiber_model(inst.A, inst.FM)
    if fmp:
        return {"checks": {"fiber_model": fmp}}, fmp
    data = build_mixed_connection(inst.A, max_degree=args.max_degree,
                                  strict=False)
    try:
        cm = build_Iprime(data, inst.FM, max_degree=args.max_degree,
                          strict=False)
    except (NotNilpotent, ChainIdentityViolation) as ex:
        return {"checks": {"build": str(ex)}}, [str(ex)]
    checks = {"simplices": len(cm.report)}
    for entry in cm.report:
        for kind in ("structure", "coherence"):
            for msg in entry[kind]:
                certs.append(f"{_skey(entry['sigma'])}: {msg}")
        if entry["chain"] is False:
            certs.append(f"{_skey(entry['sigma'])}: chain identity fails")
    if inst.FM.eta is not None:
        loc = locality_check(data, cm)
        checks["locality"] = "ok" if not loc else loc
        certs += loc
    checks["problems"] = certs if certs else "none"
    return {"checks": checks,
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_smooth(args):
    inst = load_instance(args)
    certs = []
    checks = {}
    t0 = time.perf_counter()
    A = inst.A
    if A.S.dim > 2:
        A = _skeleton(A, 2)
        checks["skeleton"] = 2
    P = inst.P
    checks["partition"] = "from file" if P is not None else "default"
    if P is None:
        P = partition_default(A.S)
    pp = validate_partition(P)
    checks["partition_valid"] = "ok" if not pp else pp
    certs += pp
    data = build_mixed_connection(A, strict=False)
    G = pullback_global(data, P)
    rep = verify_global(G)
    for kind in ("flat", "c0", "first_order"):
        checks[kind] = "ok" if not rep[kind] else rep[kind]
        certs += rep[kind]
    if inst.FM is not None:
        cm = build_Iprime(data, inst.FM, strict=False)
        assemble_I(G, cm)
        chain = verify_chain(G)
        checks["chain"] = "ok" if not chain else chain
        certs += chain
    return {"checks": checks,
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_igusa(args):
    inst = load_instance(args)
    certs = []
    t0 = time.perf_counter()
    count = 0
    for sigma in inst.A.S:
        bad = igusa_check(igusa_export(inst.A, sigma))
        count += 1
        for tup in bad:
            certs.append(f"{_skey(sigma)}: relation fails at tuple {tup}")
    return {"checks": {"simplices": count,
                       "problems": certs if certs else "none"},
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_holonomy(args):
    inst = load_instance(args)
    certs = []
    t0 = time.perf_counter()
    tris = {}
    for tri in inst.A.S.of_dim(2):
        hol = holonomy_on_homology(inst.A, tri)
        ok = mat_eq(hol, eye(len(hol)))
        tris[_skey(tri)] = bool(ok)
        if not ok:
            certs.append(f"holonomy around {_skey(tri)} is not the identity")
    return {"checks": {"triangles": tris if tris else "none"},
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_homology(args):
    inst = load_instance(args)
    certs = []
    t0 = time.perf_counter()
    bdry = cw_boundary(inst.A)
    checks = {"cw_betti": cw_homology(inst.A),
              "generators": len(bdry.generators)}
    fibers = {}
    for v in inst.A.S.vertices():
        fibers[_skey(v)] = fiber_homology(inst.A, v).betti
    checks["fiber_betti"] = fibers
    if inst.FM is not None:
        rep = quasi_iso_ranks(inst.A, inst.FM)
        checks["omega_betti"] = omega_betti(inst.FM)
        checks["quasi_iso"] = "ok" if not rep["problems"] else rep["problems"]
        certs += rep["problems"]
    return {"checks": checks,
            "timings": {"total": time.perf_counter() - t0}}, certs


def cmd_flow(args):
    k = args.k
    if k < 1:
        raise ParseError("--k must be at least 1")
    certs = []
    t0 = time.perf_counter()

    def run_one(start, keep_path: bool):
        out = {"start": [str(c) for c in start],
               "backward": args.backward}
        x0 = [float(c) for c in start]
        back, fwd = classify_limits(x0, tol=1e-12)
        expected = back if args.backward else fwd
        out["expected_vertex"] = expected
        try:
            traj = flow(k, x0, backward=args.backward)
        except NoConvergence as ex:
            certs.append(f"start {out['start']}: {ex}")
            out["converged"] = False
            return out
        out["converged"] = True
        out["limit"] = [float(c) for c in traj.limit]
        m = nearest_vertex(traj.limit, tol=1e-6)
        out["limit_vertex"] = m
        if m != expected:
            certs.append(
                f"start {out['start']}: limit vertex {m}, expected {expected}")
        hs = [height(k, p) for p in traj.points]
        drift = 1e-9
        if args.backward:
            mono = all(b <= a + drift for a, b in zip(hs, hs[1:]))
        else:
            mono = all(b >= a - drift for a, b in zip(hs, hs[1:]))
        out["height_monotone"] = bool(mono)
        if not mono:
            certs.append(f"start {out['start']}: height not monotone")
        if keep_path:
            out["times"] = [float(t) for t in traj.times]
            out["points"] = [[float(c) for c in p] for p in traj.points]
        return out

    checks = {}
    if args.sweep:
        rng = np.random.default_rng(args.seed if args.seed is not None else 0)
        runs = []
        for _ in range(args.sweep):
            start = rng.dirichlet(np.ones(k + 1))
            runs.append(run_one([Fraction(c).limit_denominator(10**9)
                                 for c in start], keep_path=False))
        checks["runs"] = runs
    else:
        if not args.start:
            raise ParseError("flow needs --start or --sweep")
        start = [qx(c) for c in args.start.split(",")]
        if len(start) != k + 1:
            raise ParseError(f"--start needs {k + 1} coordinates for k={k}")
        if sum(start) != 1 or any(c < 0 for c in start):
            raise ParseError("--start is not a barycentric point")
        checks["trajectory"] = run_one(start, keep_path=True)
    return {"checks": checks,
            "timings": {"total": time.perf_counter() - t0}}, certs


COMMANDS = {
    "validate": cmd_validate,
    "extend": cmd_extend,
    "build-aprime": cmd_build_aprime,
    "build-iprime": cmd_build_iprime,
    "smooth": cmd_smooth,
    "igusa": cmd_igusa,
    "holonomy": cmd_holonomy,
    "homology": cmd_homology,
    "flow": cmd_flow,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="flatforms",
        description="exact checks for flat form data over a simplicial base")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--instance", metavar="FILE",
                       help="JSON instance file")
        p.add_argument("--seed", type=int, metavar="N",
                       help="generate a deterministic instance instead")
        p.add_argument("--report", metavar="FILE",
                       help="also write the report here")

    p = sub.add_parser("validate", help="structural and flatness checks")
    common(p)
    p = sub.add_parser("extend", help="fill in missing coefficients and "
                                      "write the completed file back")
    common(p)
    p.add_argument("--to-dim", type=int, metavar="K", default=None)
    p = sub.add_parser("build-aprime", help="build the per-simplex form data")
    common(p)
    p.add_argument("--max-degree", type=int, metavar="D", default=None)
    p = sub.add_parser("build-iprime", help="build the per-simplex chain maps")
    common(p)
    p.add_argument("--max-degree", type=int, metavar="D", default=None)
    p = sub.add_parser("smooth", help="pull everything back along the "
                                      "partition of unity and recheck")
    common(p)
    p = sub.add_parser("igusa", help="reindexed relation check")
    common(p)
    p = sub.add_parser("holonomy", help="homology holonomy around triangles")
    common(p)
    p = sub.add_parser("homology", help="Betti numbers of base and fibers")
    common(p)

    p = sub.add_parser("flow", help="integrate the canonical simplex field")
    p.add_argument("--k", type=int, required=True, help="simplex dimension")
    p.add_argument("--start", metavar="C0,C1,...",
                   help="barycentric start point, rational entries")
    p.add_argument("--backward", action="store_true")
    p.add_argument("--sweep", type=int, metavar="N", default=0,
                   help="run N random starts instead of --start")
    p.add_argument("--seed", type=int, metavar="N",
                   help="RNG seed for --sweep")
    p.add_argument("--report", metavar="FILE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        body, certs = COMMANDS[args.command](args)
    except ParseError as ex:
        print(f"input error: {ex}", file=sys.stderr)
        return 2
    except (OSError, KeyError, TypeError, ValueError) as ex:
        print(f"input error: {ex!r}", file=sys.stderr)
        return 2
    report = {"command": args.command,
              "status": "pass" if not certs else "fail",
              "certificates": certs}
    report.update(body)
    text = json.dumps(_plain(report), indent=2)
    print(text)
    if getattr(args, "report", None):
        Path(args.report).write_text(text + "\n")
    return 0 if not certs else 1


if __name__ == "__main__":
    sys.exit(main())
