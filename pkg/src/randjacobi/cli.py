"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 a lower-bound check failed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import spectral
from .estimators import delta_ids_empirical_grid, empirical_ids, rotation_ids
from .fileio import load_model, write_csv, write_json, write_manifest
from .lifshitz import (bound_report, lifshitz_exponent, theorem_bounds, upper_constant_summary,
                       DegenerateCurve)
from .model import GENERATOR_VERSION, ModelError
from .normal_form import BandEdgeNormalForm, NoValidRadius, epsilon0_calibrate
from .prufer import PhaseDynamics, closed_form_shift

OUT_ENV = "RANDJACOBI_OUT"
MIN_EXPECTED_DN = 1e-9


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """Comma list ``0.02,0.05`` or geometric ``geom:lo:hi:n``."""
    if text.startswith("geom:"):
        _, lo, hi, n = text.split(":")
        return [float(x) for x in np.geomspace(float(lo), float(hi), int(n))]
    return [float(x) for x in text.split(",") if x.strip()]


def _edge_and_form(args, ens):
    try:
        edge = spectral.select_edge(ens, args.edge)
        eps0 = epsilon0_calibrate(edge, ens)
    except (ValueError, NoValidRadius) as exc:
        raise UsageError(f"normal_form.{type(exc).__name__}: {exc}") from None
    return edge, BandEdgeNormalForm.build(edge, epsilon0=eps0)


def _default_grid(nf):
    return [float(x) for x in np.geomspace(nf.epsilon0 / 20, nf.epsilon0, 6)]


def _budget_filter(edge, ens, grid, m, warn):
    """Drop offsets whose lower bound predicts dN below MIN_EXPECTED_DN; warn on thin budgets."""
    kept = []
    for eps in grid:
        if eps <= 0:
            kept.append(eps)
            continue
        lower = theorem_bounds(edge, ens, eps).lower
        if lower < MIN_EXPECTED_DN:
            warn(f"eps={eps:g}: expected dN >= {lower:.3g} is below {MIN_EXPECTED_DN:g}; skipped")
            continue
        if m * ens.period * lower < 10:
            warn(f"eps={eps:g}: fewer than 10 rotations expected from the lower bound with m={m}")
        kept.append(eps)
    return kept


def cmd_validate(args, ens, out):
    print(f"model ok: {len(ens.blocks)} blocks, period L={ens.period}, p={list(ens.probabilities)}")
    for i, b in enumerate(ens.blocks):
        bs = spectral.cached_bands(b)
        bands = ", ".join(f"[{a:.12g}, {c:.12g}]" for a, c in bs.bands)
        print(f"  block {i} {b.label!r}: bands {bands}" + (f"; touching at {list(bs.touching)}" if bs.touching else ""))
    for c in spectral.find_shared_edges(ens):
        e = c.edge
        status = "ok" if c.ok else "rejected: " + "; ".join(c.violations)
        print(f"  edge E={e.energy:.12g} block {e.owner} {e.side} lambda={e.lam:+g}: {status}")
    return 0


def cmd_bands(args, ens, out):
    rows = []
    for i, b in enumerate(ens.blocks):
        if args.block is not None and args.block not in (b.label, str(i)):
            continue
        bs = spectral.band_structure(b, tol=args.tol_edge, density=args.density)
        for j, ((lo, hi), (lm, lp)) in enumerate(zip(bs.bands, bs.edge_lambdas), start=1):
            rows.append((b.label, j, lo, hi, lm, lp))
    if not rows:
        raise UsageError(f"cli.UnknownBlock: {args.block!r}")
    path = write_csv(out / "bands.csv", ["block", "j", "E_minus", "E_plus", "lambda_minus", "lambda_plus"], rows)
    print(path)
    return 0


def cmd_ids(args, ens, out):
    energies = np.linspace(args.emin, args.emax, args.points)
    header = ["E"] + [f"N_{b.label}" for b in ens.blocks]
    rows = [[float(E)] + [spectral.ids_periodic(b, float(E)) for b in ens.blocks] for E in energies]
    if args.empirical:
        header += ["N_empirical", "stderr"]
        for row, E in zip(rows, energies):
            est = empirical_ids(ens, float(E), args.n, args.replicas, args.seed, args.workers)
            row += [est.value, est.std_error]
    print(write_csv(out / "ids.csv", header, rows))
    return 0


def cmd_portrait(args, ens, out):
    edge, nf = _edge_and_form(args, ens)
    theta = np.linspace(-math.pi / 2, math.pi / 2, args.points, endpoint=False)
    for eps in parse_grid(args.eps):
        dyn = PhaseDynamics.build(nf, ens, eps)
        header = ["theta"] + [f"S_{ens.blocks[i].label}" for i in ens.support] + ["S_closed_form"]
        cols = [theta] + [dyn.maps[i](theta) for i in ens.support] + [closed_form_shift(nf, eps, theta)]
        print(write_csv(out / f"portrait_eps{eps:+.6g}.csv", header, np.column_stack(cols).tolist()))
    diag = [(float(e), nf.kappa(e), float(np.linalg.det(nf.basis(e, check=False))), nf.residual(e))
            for e in np.linspace(-nf.epsilon0, nf.epsilon0, 41)]
    print(write_csv(out / "normal_form.csv", ["epsilon", "kappa", "det_M", "residual"], diag))
    return 0


def _measure(args, ens, edge, nf, grid):
    rot, stu = {}, {}
    if args.method in ("rotation", "both"):
        for eps in grid:
            rot[eps] = rotation_ids(ens, nf, eps, args.m, args.replicas, args.seed, workers=args.workers)
    if args.method in ("sturm", "both"):
        for est in delta_ids_empirical_grid(ens, edge, grid, args.n, args.sturm_replicas, args.seed, args.workers):
            stu[est.epsilon] = est
    return rot, stu


def cmd_tail_scan(args, ens, out):
    edge, nf = _edge_and_form(args, ens)
    grid = parse_grid(args.eps_grid) if args.eps_grid else _default_grid(nf)
    grid = _budget_filter(edge, ens, grid, args.m, lambda msg: print("warning:", msg, file=sys.stderr))
    rot, stu = _measure(args, ens, edge, nf, grid)
    rows, records = [], []
    for eps in grid:
        dn_nu = spectral.delta_ids_periodic(edge, eps)
        for est in (rot.get(eps), stu.get(eps)):
            if est is not None:
                rows.append((eps, dn_nu, est.method, est.value, est.std_error))
                records.append(est.record())
    print(write_csv(out / "tail.csv", ["epsilon", "delta_N_nu", "method", "value", "std_error"], rows))
    summary = {"edge": edge.energy, "epsilon0": nf.epsilon0, "records": records}
    curve = [(e, (rot.get(e) or stu.get(e)).value) for e in grid if e > 0]
    try:
        summary["lifshitz_exponent"] = lifshitz_exponent(curve)
    except DegenerateCurve as exc:
        summary["lifshitz_exponent"] = None
        summary["lifshitz_exponent_error"] = str(exc)
    write_json(out / "tail_summary.json", summary)
    return 0


def cmd_verify(args, ens, out):
    edge, nf = _edge_and_form(args, ens)
    grid = sorted(parse_grid(args.eps_grid) if args.eps_grid else _default_grid(nf))
    for eps in grid:
        if abs(eps) > nf.epsilon0:
            raise UsageError(f"lifshitz.OutsideRadius: eps={eps} exceeds epsilon0={nf.epsilon0}")
    grid = _budget_filter(edge, ens, grid, args.m, lambda msg: print("warning:", msg, file=sys.stderr))
    method = "rotation" if args.method == "both" else args.method
    args.method = method
    rot, stu = _measure(args, ens, edge, nf, grid)
    meas = rot if method == "rotation" else stu
    reports = [bound_report(edge, ens, meas[eps]) for eps in grid]
    header = ["epsilon", "delta_N_nu", "K", "lower", "upper_envelope", "measured", "stderr", "ratio_upper",
              "pass_lower"]
    print(write_csv(out / "verify.csv", header, [[r.row()[h] for h in header] for r in reports]))
    summary = upper_constant_summary(reports)
    curve = [(r.epsilon, r.measured.value) for r in reports if r.in_domain and r.measured.value > 0]
    try:
        summary["lifshitz_exponent"] = lifshitz_exponent(curve)
    except DegenerateCurve as exc:
        summary["lifshitz_exponent"] = None
        summary["lifshitz_exponent_error"] = str(exc)
    summary.update({
        "edge": edge.energy, "owner": ens.blocks[edge.owner].label, "side": edge.side, "epsilon0": nf.epsilon0,
        "all_pass_lower": all(r.pass_lower for r in reports),
        "warnings": sorted({w for r in reports for w in r.measured.warnings}),
        "generator": GENERATOR_VERSION,
    })
    write_json(out / "verify_summary.json", summary)
    return 0 if summary["all_pass_lower"] else 3


COMMANDS = {
    "validate": cmd_validate, "bands": cmd_bands, "ids": cmd_ids, "portrait": cmd_portrait,
    "tail-scan": cmd_tail_scan, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model JSON file")
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "."), help=f"output directory (env {OUT_ENV})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--tol-edge", type=float, default=spectral.EDGE_TOL)
    common.add_argument("--density", type=float, default=None, help="bracketing grid points per unit energy")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--edge", required=True, help="'label:lower', 'label:band:upper' or an energy")
    mc.add_argument("--m", type=int, default=10**6, help="blocks per rotation replica")
    mc.add_argument("--n", type=int, default=10**5, help="sites per Sturm replica")
    mc.add_argument("--replicas", type=int, default=8)
    mc.add_argument("--sturm-replicas", type=int, default=16)
    mc.add_argument("--eps-grid", default=None, help="comma list or geom:lo:hi:n")

    p = argparse.ArgumentParser(prog="randjacobi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common])
    b = sub.add_parser("bands", parents=[common])
    b.add_argument("--block", default=None)
    i = sub.add_parser("ids", parents=[common])
    i.add_argument("--emin", type=float, required=True)
    i.add_argument("--emax", type=float, required=True)
    i.add_argument("--points", type=int, default=201)
    i.add_argument("--empirical", action="store_true")
    i.add_argument("--n", type=int, default=10**4)
    i.add_argument("--replicas", type=int, default=8)
    pt = sub.add_parser("portrait", parents=[common])
    pt.add_argument("--edge", required=True)
    pt.add_argument("--eps", required=True, help="one or more offsets, comma separated")
    pt.add_argument("--points", type=int, default=1000)
    ts = sub.add_parser("tail-scan", parents=[common, mc])
    ts.add_argument("--method", choices=["rotation", "sturm", "both"], default="rotation")
    v = sub.add_parser("verify", parents=[common, mc])
    v.add_argument("--method", choices=["rotation", "sturm"], default="rotation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ens = load_model(args.model)
    except ModelError as exc:
        print(f"error[model.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[cli.FileError]: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in sorted(vars(args).items())}
    try:
        code = COMMANDS[args.command](args, ens, out)
    except UsageError as exc:
        print(f"error[{exc}]", file=sys.stderr)
        return 2
    write_manifest(out, args.command, config)
    return code


if __name__ == "__main__":
    sys.exit(main())
