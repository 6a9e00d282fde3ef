"""Command-line front end: ``opfrelax <pf|relax|bounds|chordal> --case FILE ...``.

Every command prints one JSON report.  Exit codes: 0 success, 1 usage or
parse error, 2 numerical non-convergence, 3 model-hypothesis violation.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bfm import BranchFlowState, bfm_residual, recover_angles, reverse_orientation
from .bim import bim_residual
from .cost import CostSpec
from .errors import CaseSemanticError, CaseSyntaxError, ConvergenceError, OpfRelaxError, TopologyError
from .generate import random_loads, random_network
from .netmodel import AWAY, Network, orient, parse_case
from .pmatrix import chordal_extension, sdp_standard_form
from .radial import (check_bounds, distflow_residual, solve_linear_distflow, solve_linear_reverse,
                     solve_radial)
from .relax import solve_opf
from .socp import SolverOptions

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_HYPOTHESIS = 0, 1, 2, 3
DEFAULT_TOL = {"pf": 1e-8, "relax": 1e-6, "bounds": 1e-9, "chordal": 1e-8}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    command: str
    case: str = None
    out: str = None
    tol: float = 1e-8
    model: str = "bfm"
    cost: str = "loss"
    seed: int = 0
    instances: int = 100
    pretty: bool = False
    ordering: str = None
    sdp_out: str = None
    max_n: int = 30
    gen_fraction: float = 0.0
    lossless: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise UsageError("tolerances must be positive")
        if self.instances < 1:
            raise UsageError("--instances must be at least 1")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opfrelax", description="OPF relaxations in the bus injection and branch flow models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=["pf", "relax", "bounds", "chordal"])
    p.add_argument("--case", help="JSON case file")
    p.add_argument("--model", choices=["bfm", "bim"], default="bfm")
    p.add_argument("--cost", choices=["loss", "gen"], default="loss",
                   help="total line loss, or generation weighted by each bus's 'cost' entry")
    p.add_argument("--tol", type=float, default=None, help="tolerance (env OPFRELAX_TOL overrides the default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--pretty", action="store_true", help="indented, key-sorted JSON")
    p.add_argument("--ordering", help="chordal: elimination ordering file (JSON list or whitespace-separated ids)")
    p.add_argument("--sdp-out", help="chordal: write the clique-decomposed SDP problem dump here")
    p.add_argument("--max-n", type=int, default=30, help="bounds: largest random tree size")
    p.add_argument("--gen-fraction", type=float, default=0.0,
                   help="bounds: fraction of buses turned into generators")
    p.add_argument("--lossless", action="store_true", help="bounds: evaluate the zero-loss limit l = 0")
    return p


def _resolve_tol(command: str, flag):
    if flag is not None:
        return flag
    env = os.environ.get("OPFRELAX_TOL")
    if env:
        try:
            return float(env)
        except ValueError:
            raise UsageError(f"OPFRELAX_TOL is not a number: {env!r}") from None
    return DEFAULT_TOL[command]


def _load_case(cfg: RunConfig) -> Network:
    if not cfg.case:
        raise UsageError(f"{cfg.command} needs --case")
    try:
        text = Path(cfg.case).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read case file: {exc}") from None
    return parse_case(text)


def _cplx(c) -> list:
    return [float(np.real(c)), float(np.imag(c))]


def _cost(net: Network, name: str) -> CostSpec:
    if name == "gen":
        return CostSpec.weighted_generation([b.cost for b in net.buses])
    return CostSpec.total_loss()


def _fixed_injections(net: Network) -> np.ndarray:
    s = np.zeros(net.n, dtype=complex)
    for b in net.buses[1:]:
        if b.fixed_injection:
            s[b.id - 1] = b.s_min
        elif b.s_min != complex(-math.inf, -math.inf) or b.s_max != complex(math.inf, math.inf):
            raise UsageError(f"power flow needs a fixed injection at bus {b.id} (s_min == s_max)")
    return s


def _voltages(V) -> list:
    return [{"id": j, "v_mag": float(abs(x)), "v_ang": float(np.angle(x))} for j, x in enumerate(V)]


# ---------------------------------------------------------------------------
# commands


def cmd_pf(cfg: RunConfig) -> dict:
    net = _load_case(cfg)
    if not net.is_radial:
        raise TopologyError("radial solver requires tree")
    s = _fixed_injections(net)
    x = solve_radial(net, s)
    dnet = orient(net, AWAY)
    xt = recover_angles(x, dnet)
    return {
        "command": "pf",
        "converged": True,
        "n": net.n,
        "m": net.m,
        "s0": _cplx(x.s[0]),
        "buses": [dict(rec, v=float(x.v[rec["id"]])) for rec in _voltages(xt.V)],
        "lines": [{"from": int(a), "to": int(b), "S": _cplx(S), "l": float(l)}
                  for (a, b), S, l in zip(dnet.edges, x.S, x.l)],
        "residuals": {
            "distflow": distflow_residual(dnet, x).max,
            "bfm": bfm_residual(dnet, xt).max,
            "bim": float(np.abs(bim_residual(net, xt.V, x.s)).max()),
        },
    }


def cmd_relax(cfg: RunConfig) -> dict:
    net = _load_case(cfg)
    cost = _cost(net, cfg.cost)
    res = solve_opf(net, cost, cfg.model, tol=cfg.tol, opts=SolverOptions())
    sol = res.solution
    out = {
        "command": "relax",
        "model": cfg.model,
        "cost": cost.to_dict(),
        "radial": net.is_radial,
        "objective": res.objective,
        "verdict": res.report.verdict,
        "exactness": res.report.to_dict(),
        "edges": [list(e) for e in res.dnet.edges],
        "solver": {
            "status": sol.status,
            "iterations": sol.iterations,
            "primal_residual": sol.residuals.primal,
            "dual_residual": sol.residuals.dual,
            "gap": sol.residuals.gap,
            "dual_objective": sol.residuals.dual_objective,
        },
    }
    if not net.is_radial and not res.report.exact:
        out["note"] = "mesh network: objective is a lower bound on the OPF optimum"
    if res.recovered is not None:
        out["recovered"] = {
            "voltages": _voltages(res.recovered.V),
            "injections": [_cplx(c) for c in res.recovered.s],
            "bfm_residual": bfm_residual(res.dnet, res.recovered).max,
        }
    return out


def _bounds_instances(cfg: RunConfig):
    if cfg.case:
        net = _load_case(cfg)
        if not net.is_radial:
            raise TopologyError("bounds require a radial network")
        yield net, _fixed_injections(net)
        return
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.instances):
        n = int(rng.integers(1, cfg.max_n + 1))
        s = random_loads(n, rng)
        gens = rng.random(n) < cfg.gen_fraction
        s[gens] = -s[gens] * rng.uniform(1.0, 4.0, int(gens.sum()))
        yield random_network(n, rng, loads=s), s


def cmd_bounds(cfg: RunConfig) -> dict:
    summary = {
        "command": "bounds",
        "seed": cfg.seed,
        "instances": 0,
        "checked": 0,
        "violations": 0,
        "out_of_hypothesis": 0,
        "out_of_hypothesis_violations": 0,
        "nonconverged": 0,
        "max_identity_residual": 0.0,
        "min_flow_gap": math.inf,
        "min_voltage_gap": math.inf,
        "all_tight": True,
        "flagged": [],
    }
    for i, (net, s) in enumerate(_bounds_instances(cfg)):
        summary["instances"] += 1
        loads_only = bool(np.all(s.real <= 0))
        try:
            if cfg.lossless:
                # zero-impedance limit: no losses, so the state equals the linear one
                lin = solve_linear_distflow(net, s)
                s0 = lin.S_lin[lin.dnet.tails == 0].sum()
                x = BranchFlowState(S=lin.S_lin, l=np.zeros(net.m), v=lin.v_lin, s=np.concatenate([[s0], s]))
            else:
                x = solve_radial(net, s)
        except ConvergenceError as exc:
            summary["nonconverged"] += 1
            summary["flagged"].append({"instance": i, "reason": "nonconverged", "detail": str(exc)})
            continue
        dnet = orient(net, AWAY)
        reports = [
            check_bounds(x, solve_linear_distflow(net, s), tol=cfg.tol),
            check_bounds(reverse_orientation(x, dnet), solve_linear_reverse(net, s), tol=cfg.tol),
        ]
        summary["checked"] += 1
        bad = sum(len(r.edge_violations) + len(r.bus_violations) for r in reports)
        for r in reports:
            summary["max_identity_residual"] = max(summary["max_identity_residual"], r.identity_residual)
            summary["min_flow_gap"] = min(summary["min_flow_gap"], float(r.S_gap.real.min(initial=math.inf)),
                                          float(r.S_gap.imag.min(initial=math.inf)))
            summary["min_voltage_gap"] = min(summary["min_voltage_gap"], float(r.v_gap.min()))
            summary["all_tight"] = summary["all_tight"] and r.all_tight
        if not loads_only:
            summary["out_of_hypothesis"] += 1
            summary["out_of_hypothesis_violations"] += bad
            summary["flagged"].append({"instance": i, "reason": "out_of_hypothesis", "violations": bad})
        else:
            summary["violations"] += bad
    summary["ok"] = summary["violations"] == 0
    for key in ("min_flow_gap", "min_voltage_gap"):
        if math.isinf(summary[key]):
            summary[key] = None
        else:
            summary[key] += 0.0  # no negative zero in the report
    if summary["checked"] and summary["all_tight"]:
        summary["note"] = "all bounds tight"
    elif not summary["checked"]:
        summary["all_tight"] = False
    return summary


def _read_ordering(path: str) -> list:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read ordering file: {exc}") from None
    try:
        vals = json.loads(text)
    except json.JSONDecodeError:
        vals = text.split()
    try:
        return [int(v) for v in vals]
    except (TypeError, ValueError):
        raise UsageError("ordering file must list integer bus ids") from None


def cmd_chordal(cfg: RunConfig) -> dict:
    net = _load_case(cfg)
    ordering = _read_ordering(cfg.ordering) if cfg.ordering else None
    try:
        ext = chordal_extension(net, ordering)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = {
        "command": "chordal",
        "n_nodes": len(ext.nodes),
        "edges": [list(e) for e in ext.edges],
        "ordering": list(ext.ordering),
        "fill": [list(e) for e in ext.fill],
        "cliques": [list(q) for q in ext.cliques],
        "clique_tree": [{"cliques": [a, b], "separator": list(sep)} for a, b, sep in ext.clique_tree],
        "decoupling_count": ext.decoupling_count,
        "block_sizes": [len(q) for q in ext.cliques],
    }
    if cfg.sdp_out:
        form = sdp_standard_form(ext, net, _cost(net, cfg.cost))
        Path(cfg.sdp_out).write_text(form.dumps(indent=2 if cfg.pretty else None))
        out["sdp_dump"] = cfg.sdp_out
        out["sdp_constraints"] = len(form.constraints)
        out["sdp_decoupling"] = len(form.decoupling)
    return out


COMMANDS = {"pf": cmd_pf, "relax": cmd_relax, "bounds": cmd_bounds, "chordal": cmd_chordal}


def _emit(report: dict, cfg: RunConfig):
    text = json.dumps(report, indent=2 if cfg.pretty else None, sort_keys=cfg.pretty, allow_nan=False)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            command=args.command, case=args.case, out=args.out, tol=_resolve_tol(args.command, args.tol),
            model=args.model, cost=args.cost, seed=args.seed, instances=args.instances, pretty=args.pretty,
            ordering=args.ordering, sdp_out=args.sdp_out, max_n=args.max_n, gen_fraction=args.gen_fraction,
            lossless=args.lossless,
        )
        report = COMMANDS[cfg.command](cfg)
    except (UsageError, CaseSyntaxError, CaseSemanticError) as exc:
        _error(args, EXIT_USAGE, exc)
        return EXIT_USAGE
    except TopologyError as exc:
        _error(args, EXIT_HYPOTHESIS, exc)
        return EXIT_HYPOTHESIS
    except ConvergenceError as exc:
        _error(args, EXIT_NONCONVERGED, exc)
        return EXIT_NONCONVERGED
    except OpfRelaxError as exc:
        _error(args, EXIT_NONCONVERGED, exc)
        return EXIT_NONCONVERGED
    _emit(report, cfg)
    return EXIT_OK


def _error(args, code, exc):
    sys.stderr.write(f"opfrelax {args.command}: {exc}\n")
    sys.stdout.write(json.dumps({"command": args.command, "error": str(exc), "exit_code": code}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
