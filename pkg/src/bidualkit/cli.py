"""Command-line front end: generate seeded instances, run verification
suites against them, and render stored reports.

Exit codes: 0 all checks pass (or are skipped), 1 verification failure,
2 usage error, 3 unreadable or invalid input file.
"""

import argparse
import json
import random
import sys
import time

from .errors import DatumNotRegular
from .grouprings import default_cap
from .modalg import bidual
from .selmer_sim import (
    SelmerDatum,
    TowerDatum,
    dumps,
    generate_selmer,
    generate_tower,
    is_regular,
    loads,
    validate,
)
from .systems import (
    CheckResult,
    KolyvaginCollection,
    Report,
    _binc,
    _sub,
    check_appendix,
    check_commutative,
    check_fitting_theorems,
    check_main,
    check_mrs,
    horizontal_family,
    psi,
    psi_inv,
    random_element,
    regulator,
    stark_from_horizontal,
    stark_module,
    us_to_dks,
    vertical_family,
)

SUITES = ("axioms", "appendix", "stark", "kolyvagin", "mrs", "main", "fitting")


# ---------------------------------------------------------------------------
# suite runners
# ---------------------------------------------------------------------------


def _suite_axioms(datum, tower, dets):
    report = Report()
    objs = [datum] if tower is None else [datum, tower]
    for obj in objs:
        for rec in validate(obj):
            report.add(
                CheckResult(
                    f"axiom {rec.axiom}",
                    f"axiom-{rec.axiom.lower()}",
                    rec.verdict,
                    rec.witness,
                )
            )
    return report


def _suite_appendix(datum, tower, dets):
    return check_appendix(datum)


def _suite_stark(datum, tower, dets):
    report = Report()
    t0 = time.perf_counter()
    st = stark_module(datum, datum.rank)
    if not is_regular(datum):
        report.add(
            CheckResult(
                "module of compatible families",
                "stark-structure",
                "SKIPPED",
                {"reason": "datum not regular", "free_rank_one": st.free_rank_one},
                time.perf_counter() - t0,
            )
        )
        return report
    report.add(
        CheckResult(
            "module of compatible families is free of rank one",
            "stark-structure",
            "PASS" if st.free_rank_one else "FAIL",
            None if st.free_rank_one else {"ladder": st.fitting_ladder[:2]},
            time.perf_counter() - t0,
        )
    )
    t0 = time.perf_counter()
    try:
        stark_from_horizontal(datum, horizontal_family(datum, 1))
        verdict, witness = "PASS", None
    except DatumNotRegular as exc:
        verdict, witness = "SKIPPED", str(exc)
    report.add(
        CheckResult(
            "level projections form a compatible family",
            "level-projection-family",
            verdict,
            witness,
            time.perf_counter() - t0,
        )
    )
    return report


def _suite_kolyvagin(datum, tower, dets):
    report = Report()
    if not is_regular(datum):
        report.add(
            CheckResult(
                "kolyvagin suite",
                "kolyvagin-suite",
                "SKIPPED",
                "datum not regular",
            )
        )
        return report

    t0 = time.perf_counter()
    eps = stark_from_horizontal(datum, horizontal_family(datum, 1))
    try:
        regulator(eps)
        verdict, witness = "PASS", None
    except Exception as exc:  # verdict errors carry the witness
        verdict, witness = "FAIL", exc.args[0] if exc.args else repr(exc)
    report.add(
        CheckResult(
            "regulator of the projected family is a system",
            "regulator-system",
            verdict,
            witness,
            time.perf_counter() - t0,
        )
    )

    t0 = time.perf_counter()
    try:
        us_to_dks(eps)
        verdict, witness = "PASS", None
    except Exception as exc:
        verdict, witness = "FAIL", exc.args[0] if exc.args else repr(exc)
    report.add(
        CheckResult(
            "choice expansion of the projected family is derived",
            "choice-expansion-derived",
            verdict,
            witness,
            time.perf_counter() - t0,
        )
    )

    t0 = time.perf_counter()
    rng = random.Random(f"bidualkit-cli:{datum.signature()}")
    verdict, witness = "PASS", None
    for trial in range(20):
        vals = {}
        for n in datum.levels():
            sub, _ = _sub(datum, n)
            B = bidual(sub, datum.rank)
            coords = tuple(
                random_element(datum.group, datum.m, rng, 2)
                for _ in range(B.ngens)
            )
            vals[n] = _binc(datum, n, datum.rank).apply(B.element(coords))
        col = KolyvaginCollection(datum, vals)
        if psi_inv(psi(col)) != col or psi(psi_inv(col)) != col:
            verdict, witness = "FAIL", {"trial": trial}
            break
    report.add(
        CheckResult(
            "triangular shift and its inverse are mutually inverse",
            "shift-round-trip",
            verdict,
            witness,
            time.perf_counter() - t0,
        )
    )
    return report


def _suite_mrs(datum, tower, dets):
    if tower is None:
        return Report(
            [CheckResult("mrs suite", "mrs-suite", "SKIPPED", "no tower")]
        )
    return check_mrs(tower, dets)


def _suite_main(datum, tower, dets):
    report = Report()
    if tower is None:
        report.add(CheckResult("main suite", "main-suite", "SKIPPED", "no tower"))
    else:
        report.extend(check_main(tower, dets))
    try:
        report.extend(check_commutative(datum))
    except DatumNotRegular as exc:
        report.add(
            CheckResult(
                "shift of the choice expansion equals the regulator",
                "regulator-square",
                "SKIPPED",
                str(exc),
            )
        )
    return report


def _suite_fitting(datum, tower, dets):
    try:
        return check_fitting_theorems(datum)
    except DatumNotRegular as exc:
        return Report(
            [CheckResult("fitting suite", "fitting-suite", "SKIPPED", str(exc))]
        )


_SUITE_RUNNERS = {
    "axioms": _suite_axioms,
    "appendix": _suite_appendix,
    "stark": _suite_stark,
    "kolyvagin": _suite_kolyvagin,
    "mrs": _suite_mrs,
    "main": _suite_main,
    "fitting": _suite_fitting,
}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cell_flags(parser, seed_required):
    parser.add_argument("--seed", type=int, required=seed_required,
                        help="generation seed")
    parser.add_argument("--p", type=int, default=3, help="odd residue prime")
    parser.add_argument("--k", type=int, default=1,
                        help="exponent of the coefficient modulus p^k")
    parser.add_argument("--gamma", type=int, default=1,
                        help="order of the base group factor (a power of p)")
    parser.add_argument("--rank", type=int, default=1, help="core rank")
    parser.add_argument("--primes", type=int, default=1,
                        help="number of auxiliary primes")
    parser.add_argument("--regime", choices=("regular", "degenerate"),
                        default="regular", help="generation regime")


def _generate_datum(args) -> SelmerDatum:
    return generate_selmer(
        args.seed,
        p=args.p,
        k=args.k,
        gamma=args.gamma,
        rank=args.rank,
        nprimes=args.primes,
        regime=args.regime,
    )


def cmd_generate(args) -> int:
    try:
        datum = _generate_datum(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = dumps(datum)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _load_instance(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def cmd_verify(args) -> int:
    suites = SUITES if "all" in args.suite else tuple(
        s for s in SUITES if s in args.suite
    )
    tower = None
    if args.datum:
        try:
            obj = _load_instance(args.datum)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        if isinstance(obj, TowerDatum):
            tower, datum = obj, obj.datum
        else:
            datum = obj
    elif args.seed is not None:
        try:
            datum = _generate_datum(args)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    else:
        print("error: provide --datum FILE or --seed N", file=sys.stderr)
        return 2

    if args.tower:
        try:
            obj = _load_instance(args.tower)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        if not isinstance(obj, TowerDatum) or obj.datum != datum:
            print("error: tower file does not lift the datum", file=sys.stderr)
            return 3
        tower = obj

    if tower is None and any(s in suites for s in ("mrs", "main", "axioms")):
        try:
            tower = generate_tower(datum.seed, datum)
        except DatumNotRegular:
            tower = None
    dets = vertical_family(tower, 1) if tower is not None else None

    report = Report()
    for suite in suites:
        report.extend(_SUITE_RUNNERS[suite](datum, tower, dets))

    config = {
        "command": "verify",
        "seed": datum.seed,
        "cell": {
            "p": datum.p,
            "k": datum.k,
            "gamma": datum.gamma_order,
            "rank": datum.rank,
            "primes": datum.nprimes,
            "regime": datum.regime,
        },
        "suites": list(suites),
        "output": args.output,
        "cap": default_cap(),
    }
    payload = report.payload()
    payload["config"] = config
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if report.ok else 1


def cmd_report(args) -> int:
    try:
        with open(args.file, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    results = payload.get("results", [])
    if not results:
        print("no checks")
        return 0
    width = max(len(r.get("anchor", "")) for r in results)
    for r in results:
        anchor = r.get("anchor", "")
        verdict = r.get("verdict", "?")
        seconds = r.get("seconds", 0.0)
        name = r.get("name", "")
        print(f"{verdict:7s} {anchor:{width}s} {seconds:9.3f}s  {name}")
    npass = sum(1 for r in results if r.get("verdict") == "PASS")
    nskip = sum(1 for r in results if r.get("verdict") == "SKIPPED")
    nfail = len(results) - npass - nskip
    print(f"{npass} passed, {nfail} failed, {nskip} skipped")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bidualkit",
        description="generate, verify and report on synthetic instances",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a canonical instance file")
    _cell_flags(g, seed_required=True)
    g.add_argument("-o", "--output", default=None, help="output path")
    g.set_defaults(fn=cmd_generate)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--datum", default=None, help="instance file to verify")
    v.add_argument("--tower", default=None, help="tower file lifting the datum")
    _cell_flags(v, seed_required=False)
    v.add_argument(
        "--suite",
        action="append",
        choices=SUITES + ("all",),
        default=None,
        help="suite to run (repeatable; default all)",
    )
    v.add_argument("-o", "--output", default=None, help="report output path")
    v.set_defaults(fn=cmd_verify)

    r = sub.add_parser("report", help="render a stored report")
    r.add_argument("file", help="report file")
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    if getattr(args, "suite", None) is None and args.command == "verify":
        args.suite = ["all"]
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
