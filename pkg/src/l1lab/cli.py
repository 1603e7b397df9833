"""Batch command-line front end.

Subcommands generate example sets, measure norms with rigorous error bounds,
run the certificate pipelines, replay certificates, and consolidate results
into report tables with optional figures.  All file outputs are UTF-8 JSON
or CSV with stable key order, so identical inputs, seeds, and configuration
produce identical bytes; wall time goes to stdout only.

Exit codes: 0 success, 2 validation/precondition, 3 budget exceeded,
4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace

from .cdp import (
    CdpCertificate,
    bound_1d_exponential,
    bound_2d,
    verify_certificate,
)
from .config import LIMITS, refresh_from_env
from .errors import BudgetError, ValidationError, VerificationError
from .freiman import (
    FreimanMap,
    bound_3d_via_embedding,
    canonical_embedding,
    choose_k_reference,
    mark_verified,
    recenter_to_box,
    verify_freiman,
)
from .lattice import (
    gen_ap,
    gen_box_progression,
    gen_cube,
    gen_lacunary,
    gen_prime_residue,
    gen_random_subset,
    set_from_dict,
    set_to_dict,
    translate_to_positive,
)
from .norms import l1_estimate, l2_exact, linf_exact, write_trace_csv
from .report import build_report


def _digest_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


def _load_set(path: str):
    obj = _load_json(path)
    return set_from_dict(obj), _digest_file(path)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from exc


def _run_report(args, digest, outputs, hit) -> dict:
    return {
        "command": [args.cmd] + list(args.echo),
        "input_digest": digest,
        "outputs": outputs,
        "budgets": {
            "samples_budget": LIMITS.samples_budget,
            "set_points_budget": LIMITS.set_points_budget,
            "hit": sorted(hit),
        },
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    fam = args.family
    meta = {"family": fam}
    if fam == "cube":
        A = gen_cube(args.N, args.d)
        meta.update({"N": args.N, "d": args.d})
    elif fam == "ap":
        A = gen_ap(args.c, args.q, args.N)
        meta.update({"c": args.c, "q": args.q, "N": args.N})
    elif fam == "box":
        res = gen_box_progression(args.c, _ints(args.steps), _ints(args.extents))
        A = res.set
        meta.update(
            {
                "c": args.c,
                "steps": list(_ints(args.steps)),
                "extents": list(_ints(args.extents)),
                "proper": res.proper,
            }
        )
    elif fam == "lacunary":
        A = gen_lacunary(args.N)
        meta.update({"N": args.N})
    elif fam == "prime-residue":
        res = gen_prime_residue(args.L)
        if res.set is None:
            raise BudgetError(
                f"modulus {res.modulus} too large to list the {res.size} members"
            )
        A = res.set
        meta.update(
            {"L": args.L, "primes": list(res.primes), "modulus": res.modulus}
        )
    elif fam == "random":
        res = gen_random_subset(args.N, args.density, args.seed)
        A = res.set
        meta.update(
            {"N": args.N, "density": args.density, "seed": args.seed, "retries": res.retries}
        )
    else:
        raise ValidationError(f"unknown family {fam!r}")
    obj = set_to_dict(A)
    obj["meta"] = meta
    _write_json(obj, args.out)
    print(f"wrote {args.out}: {A.size} points, dim {A.dim}")
    return 0


def cmd_norm(args) -> int:
    A, dig = _load_set(args.set)
    hit = []
    if args.p == "2":
        value, err, grid, met = l2_exact(A), 0.0, [], True
    elif args.p == "inf":
        value, err, grid, met = linf_exact(A), 0.0, [], True
    else:
        est = l1_estimate(A, target_rel_err=args.tol)
        value, err, grid, met = est.value, est.error_bound, list(est.grid), est.met_target
        if not met:
            hit.append("samples_budget")
        trace_path = args.trace
        if trace_path is None and args.out:
            stem = args.out[:-5] if args.out.endswith(".json") else args.out
            trace_path = stem + "_trace.csv"
        if trace_path:
            write_trace_csv(est, trace_path)
            print(f"trace: {trace_path}")
    outputs = {
        "kind": "norm",
        "p": args.p,
        "points": A.size,
        "value": value,
        "error_bound": err,
        "grid": grid,
        "met_target": met,
    }
    if args.out:
        _write_json(_run_report(args, dig, outputs, hit), args.out)
    print(f"|A| = {A.size}  L{args.p} = {value!r}  error <= {err!r}  met_target={met}")
    return 0


def _emit_certificate(cert: CdpCertificate, digest: str, extra: dict, out: str) -> None:
    ctx = dict(cert.context)
    ctx["input_digest"] = digest
    ctx.update(extra)
    cert = replace(cert, context=ctx)
    _write_json(cert.to_dict(), out)
    print(f"wrote {out}")
    print(
        f"certified_bound = {cert.certified_bound!r}  "
        f"measured_re = {cert.measured_re!r} (+/- {cert.measured_budget!r})"
    )
    print(
        f"t = {cert.t} ({cert.t_source})  rounds achieved = {cert.achieved}  "
        f"grid = {'x'.join(str(g) for g in cert.grid)}"
    )


def cmd_bound2d(args) -> int:
    A, dig = _load_set(args.set)
    extra = {}
    if A.dim == 1:
        A2, shift = translate_to_positive(A)
        extra["translation"] = list(shift)
        cert = bound_1d_exponential(A2, t_override=args.t)
    elif A.dim == 2:
        cert = bound_2d(
            A,
            axis=args.axis,
            eps=args.eps,
            t_override=args.t,
            min_row_size=args.min_rows,
        )
    else:
        raise ValidationError("3-D sets go through `freiman bound3d`")
    _emit_certificate(cert, dig, extra, args.out)
    return 0


def cmd_freiman(args) -> int:
    if args.sub == "embed":
        ext = _ints(args.extents)
        if len(ext) != 3:
            raise ValidationError("--extents needs three comma-separated integers")
        fmap = canonical_embedding(ext, args.k, B_override=args.B)
        _write_json(fmap.to_dict(), args.out)
        print(
            f"wrote {args.out}: base B = {fmap.base}, degree k = {fmap.degree}, "
            f"verified = {fmap.verified}"
        )
        if min(ext) >= 2:
            print(f"reference degree for these extents: {choose_k_reference(ext[2], ext[1], ext[0])}")
        return 0
    if args.sub == "verify":
        fmap = FreimanMap.from_dict(_load_json(args.map))
        check = verify_freiman(fmap, k=args.k, budget=args.budget)
        print(
            f"{'pass' if check.passed else 'fail'}: method={check.method} "
            f"k={check.k} checked={check.checked}"
        )
        if check.witness is not None:
            print("witness: " + json.dumps(check.witness, sort_keys=True))
        if args.out:
            _write_json(mark_verified(fmap, check).to_dict(), args.out)
            print(f"wrote {args.out}")
        return 0 if check.passed else 4
    if args.sub == "bound3d":
        A, dig = _load_set(args.set)
        fmap = FreimanMap.from_dict(_load_json(args.map))
        A0, ext, shift = recenter_to_box(A)
        extra = {"recenter_shift": list(shift)}
        cert = bound_3d_via_embedding(A0, fmap, t_override=args.t)
        _emit_certificate(cert, dig, extra, args.out)
        return 0
    raise ValidationError(f"unknown freiman subcommand {args.sub!r}")


def cmd_verify_cert(args) -> int:
    cert = CdpCertificate.from_dict(_load_json(args.cert))
    rep = verify_certificate(cert, grid_factor=args.grid_factor)
    for e in rep.entries:
        print(f"{'ok  ' if e.passed else 'FAIL'} {e.name}: {e.detail}")
    if rep.ok:
        print("certificate verified")
        return 0
    print("certificate FAILED verification")
    return 4


def cmd_report(args) -> int:
    summary = build_report(args.paths, args.out_prefix, plot=not args.no_plot)
    print(f"{summary['rows']} rows -> {summary['csv']}, {summary['json']}")
    for fig in summary["figures"]:
        print(f"figure: {fig}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="l1lab",
        description="Certified L1 lower bounds for exponential sums over integer sets.",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for randomized generators")
    p.add_argument("--threads", type=int, default=1, help="worker cap for parallel kernels")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an example set")
    g.add_argument(
        "family",
        choices=["cube", "ap", "box", "lacunary", "prime-residue", "random"],
    )
    g.add_argument("--N", type=int, default=8)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--c", type=int, default=1)
    g.add_argument("--q", type=int, default=1)
    g.add_argument("--steps", type=str, default="1")
    g.add_argument("--extents", type=str, default="2")
    g.add_argument("--L", type=int, default=3)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    n = sub.add_parser("norm", help="norm of the exponential sum over a set")
    n.add_argument("set")
    n.add_argument("--p", choices=["1", "2", "inf"], default="1")
    n.add_argument("--tol", type=float, default=1e-4, help="relative error target for p=1")
    n.add_argument("--out", default=None, help="write a run report JSON here")
    n.add_argument("--trace", default=None, help="refinement trace CSV path")
    n.set_defaults(func=cmd_norm)

    b = sub.add_parser("bound2d", help="certified lower bound for a 1-D or 2-D set")
    b.add_argument("set")
    b.add_argument("--axis", type=int, default=0, help="axis the rows run along")
    b.add_argument("--eps", type=float, default=1e-3, help="row-sign clamp width")
    b.add_argument("--t", type=int, default=None, help="round width override")
    b.add_argument("--min-rows", type=int, default=1, help="drop rows smaller than this")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bound2d)

    f = sub.add_parser("freiman", help="degree-k embeddings and the 3-D pipeline")
    fs = f.add_subparsers(dest="sub", required=True)
    fe = fs.add_parser("embed", help="canonical base-B embedding of a box")
    fe.add_argument("--extents", required=True, help="three comma-separated extents")
    fe.add_argument("--k", type=int, required=True)
    fe.add_argument("--B", type=int, default=None, help="base override (testing)")
    fe.add_argument("--out", required=True)
    fv = fs.add_parser("verify", help="check sum-equality transfer for a map")
    fv.add_argument("map")
    fv.add_argument("--k", type=int, default=None)
    fv.add_argument("--budget", type=int, default=10 ** 8)
    fv.add_argument("--out", default=None, help="write the marked map here")
    fb = fs.add_parser("bound3d", help="three-level certificate through an embedding")
    fb.add_argument("set")
    fb.add_argument("map")
    fb.add_argument("--t", type=int, default=None)
    fb.add_argument("--out", required=True)
    f.set_defaults(func=cmd_freiman)

    v = sub.add_parser("verify-cert", help="replay a certificate's claims")
    v.add_argument("cert")
    v.add_argument("--grid-factor", type=int, default=2)
    v.set_defaults(func=cmd_verify_cert)

    r = sub.add_parser("report", help="consolidate results into tables and figures")
    r.add_argument("paths", nargs="+")
    r.add_argument("--out-prefix", required=True)
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    refresh_from_env()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.echo = argv
    LIMITS.threads = max(1, args.threads)
    t0 = time.monotonic()
    try:
        code = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 4
    print(f"wall time: {time.monotonic() - t0:.3f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
