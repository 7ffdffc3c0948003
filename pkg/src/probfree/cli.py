"""Command-line front end: ``probfree {check,price,viability,verify} SPEC``.

Exit codes: 0 success (arbitrage-free / priced / viable / verified),
1 usage, parse or validation error, 2 arbitrage found (inviable, or a
report that fails re-verification), 3 grid too coarse to decide.
Set ``PROBFREE_LOG=DEBUG`` for the solver trace on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ftap import Verdict, check_arbitrage, verify_certificate, verify_measure
from .hedging import ArbitrageError, HedgeOptions, is_no_arbitrage_price, price_interval
from .lp import SipOptions
from .market import Market
from .measure import AtomicMeasure
from .specfile import MarketSpec, SpecError, load_spec
from .viability import Viability, build_extension, verify_extension

EXIT_OK, EXIT_ERROR, EXIT_ARBITRAGE, EXIT_REFINE = 0, 1, 2, 3

log = logging.getLogger("probfree")


def _options(spec: MarketSpec, args) -> tuple[HedgeOptions, dict]:
    opt = dict(spec.options)
    for key in ("grid", "feas_tol", "max_cuts"):
        val = getattr(args, key, None)
        if val is not None:
            opt[key] = val
    sip = SipOptions(**{k: opt[k] for k in ("feas_tol", "gap_tol", "cs_tol", "max_cuts") if k in opt})
    grid = opt.get("grid")
    if isinstance(grid, list):
        grid = tuple(grid)
    ftap_kw = {k: opt[k] for k in ("feas_tol", "eps_pos", "strict_tol") if k in opt}
    return HedgeOptions(grid=grid, sip=sip), ftap_kw


def _emit(report: dict, fmt: str, text_lines: list[str]) -> None:
    if fmt == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print("\n".join(text_lines))


def cmd_check(spec: MarketSpec, args) -> int:
    opts, ftap_kw = _options(spec, args)
    m = spec.market
    t0 = time.perf_counter()
    verdict = check_arbitrage(m, opts.grid_for(m), **ftap_kw)
    elapsed = time.perf_counter() - t0
    report = {"command": "check", "market": m.to_dict(), **verdict.to_dict()}
    lines = [f"verdict: {verdict.verdict.value}",
             f"grid: {'x'.join(map(str, verdict.grid.resolution))}  fill distance: {verdict.fill_distance:.3g}"]
    if verdict.measure is not None:
        rep = verify_measure(m, verdict.measure)
        report["measure_report"] = rep.to_dict()
        lines.append(f"martingale measure: {len(verdict.measure)} atoms, min weight {rep.min_weight:.3g}, "
                     f"max moment error {rep.max_moment_error:.3g}")
        if args.export:
            with open(args.export, "w", encoding="utf-8") as fh:
                json.dump(verdict.measure.to_dict(), fh, indent=2)
            lines.append(f"measure exported to {args.export}")
    if verdict.certificate is not None:
        c = verdict.certificate
        lines.append(f"arbitrage portfolio: {np.array2string(c.portfolio, precision=6)}")
        lines.append(f"cost {c.cost:.3g}, lattice min payoff {c.lattice_min:.3g}, "
                     f"payoff {c.witness_payoff:.3g} at {c.witness.tolist()}")
    if verdict.offending_state is not None and verdict.verdict is Verdict.NEEDS_REFINEMENT:
        lines.append(f"refine the grid near {verdict.offending_state.tolist()}")
    lines.append(f"time: {elapsed:.3f}s")
    _emit(report, args.format, lines)
    return {Verdict.ARBITRAGE_FREE: EXIT_OK, Verdict.ARBITRAGE: EXIT_ARBITRAGE,
            Verdict.NEEDS_REFINEMENT: EXIT_REFINE}[verdict.verdict]


def cmd_price(spec: MarketSpec, args) -> int:
    opts, _ = _options(spec, args)
    names = args.claims or list(spec.claims)
    missing = [n for n in names if n not in spec.claims]
    if missing:
        print(f"error: unknown claim(s) {missing}; spec defines {sorted(spec.claims)}", file=sys.stderr)
        return EXIT_ERROR
    if not names:
        print("error: spec defines no claims", file=sys.stderr)
        return EXIT_ERROR
    m = spec.market

    def one(name):
        t0 = time.perf_counter()
        iv = price_interval(m, spec.claims[name], opts)
        rec = {"claim": name, **iv.to_dict()}
        if args.quote is not None:
            rec["quote"] = is_no_arbitrage_price(m, spec.claims[name], args.quote, opts, iv).to_dict()
        return rec, time.perf_counter() - t0

    try:
        with ThreadPoolExecutor(max_workers=min(4, len(names))) as pool:
            results = list(pool.map(one, names))
    except ArbitrageError as exc:
        print("error: market admits arbitrage; no hedging prices exist", file=sys.stderr)
        _emit({"command": "price", "market": m.to_dict(), **exc.verdict.to_dict()}, args.format,
              [f"verdict: {exc.verdict.verdict.value}"])
        return EXIT_ARBITRAGE
    report = {"command": "price", "market": m.to_dict(), "results": [r for r, _ in results]}
    lines = []
    for rec, dt in results:
        lo, hi = rec["interval"]
        lines.append(f"{rec['claim']}: [{lo:.10g}, {hi:.10g}]" + ("  replicable" if rec["replicable"] else ""))
        for side in ("sub", "super"):
            r = rec[side]
            lines.append(f"  {side:5s} price {r['price']:.10g}  portfolio {np.round(r['portfolio'], 8).tolist()}  "
                         f"gap {r['gap']:.2g}  cuts {r['iterations']}  {r['status']}")
            atoms = r["measure"]["atoms"]
            lines.append("        dual measure: " + ", ".join(
                f"{a['state']}: {a['weight']:.6g}" for a in atoms[:8]) + (" ..." if len(atoms) > 8 else ""))
        if "quote" in rec:
            lines.append(f"  quote {rec['quote']['price']:g}: {rec['quote']['verdict']}")
        lines.append(f"  time: {dt:.3f}s")
    _emit(report, args.format, lines)
    return EXIT_OK


def cmd_viability(spec: MarketSpec, args) -> int:
    opts, _ = _options(spec, args)
    m = spec.market
    grid = opts.grid_for(m)
    res = build_extension(m, grid)
    report = {"command": "viability", "market": m.to_dict(), "viability": res.viability.value,
              "arbitrage_check": res.ftap.to_dict()}
    lines = [f"viability: {res.viability.value}"]
    if res.extension is not None:
        rep = verify_extension(res.extension, m, trials=args.trials, bumps=20, grid=grid)
        report["verification"] = rep.to_dict()
        lines.append(f"max |Phi(pi.S) - pi.f| over {rep.trials} portfolios: {rep.max_deviation:.3g}")
        lines.append(f"min Phi over {rep.bumps} grid-cell bumps: {rep.min_bump_value:.3g}")
    elif res.ftap.certificate is not None:
        lines.append(f"arbitrage portfolio: {res.ftap.certificate.portfolio.tolist()}")
    _emit(report, args.format, lines)
    return {Viability.VIABLE: EXIT_OK, Viability.INVIABLE: EXIT_ARBITRAGE,
            Viability.UNDECIDED: EXIT_REFINE}[res.viability]


def verify_report(report: dict, feas_tol: float = 1e-8) -> dict:
    """Re-verify every measure and certificate of a JSON report from its own data."""
    m = Market.from_dict(report["market"])
    checks = []

    def measure(tag, data, need_positive=True):
        rep = verify_measure(m, AtomicMeasure.from_dict(data))
        ok = rep.mass_error <= feas_tol and rep.max_moment_error <= feas_tol
        ok = ok and (rep.min_weight > 0 or not need_positive)
        checks.append({"item": tag, "ok": bool(ok), **rep.to_dict()})

    def certificate(tag, data):
        cert = verify_certificate(m, data["portfolio"], data["witness"])
        checks.append({"item": tag, "ok": bool(cert.ok(feas_tol)), **cert.to_dict()})

    sections = [report] if "verdict" in report else []
    if "arbitrage_check" in report:
        sections.append(report["arbitrage_check"])
    for sec in sections:
        if "measure" in sec:
            measure("measure", sec["measure"])
        if "certificate" in sec and sec.get("verdict") == "arbitrage":
            certificate("certificate", sec["certificate"])
    for rec in report.get("results", []):
        for side in ("sub", "super"):
            measure(f"{rec['claim']}.{side}.measure", rec[side]["measure"], need_positive=False)
    return {"ok": all(c["ok"] for c in checks), "checks": checks}


def cmd_verify(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        report = json.load(fh)
    out = verify_report(report)
    lines = [f"{c['item']}: {'ok' if c['ok'] else 'FAILED'}" for c in out["checks"]]
    _emit(out, args.format, lines or ["nothing to verify"])
    return EXIT_OK if out["ok"] else EXIT_ARBITRAGE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="probfree", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("spec", help="market-spec JSON file")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--grid", type=int, help="grid points per dimension")
        sp.add_argument("--feas-tol", dest="feas_tol", type=float)
        sp.add_argument("--max-cuts", dest="max_cuts", type=int)

    c = sub.add_parser("check", help="decide arbitrage-freeness with a certificate")
    common(c)
    c.add_argument("--export", metavar="FILE", help="write the martingale measure to FILE")
    pr = sub.add_parser("price", help="sub/superhedging prices of claims")
    common(pr)
    pr.add_argument("claims", nargs="*", help="claim names (default: all)")
    pr.add_argument("--quote", type=float, help="also test this number as a no-arbitrage price")
    v = sub.add_parser("viability", help="strictly positive extension of the price functional")
    common(v)
    v.add_argument("--trials", type=int, default=50)
    ver = sub.add_parser("verify", help="re-verify the certificates in a JSON report")
    ver.add_argument("report")
    ver.add_argument("--format", choices=("text", "json"), default="text")
    return p


def main(argv=None) -> int:
    level = os.environ.get("PROBFREE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        spec = load_spec(args.spec)
        return {"check": cmd_check, "price": cmd_price, "viability": cmd_viability}[args.command](spec, args)
    except SpecError as exc:
        print(f"{args.spec}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
