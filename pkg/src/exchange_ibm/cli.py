"""Command-line interface: analyze, check, exact, simulate, laws, oracle.

Exit codes: 0 success or certified, 1 checked and false, 2 input error,
3 resource cap.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checker import check_agreement, check_model_invariance, check_pair_invariance, check_rate_condition
from .conservation import conservation_laws, verify_log_measure
from .cycles import cycle_census
from .exactgen import (
    DEFAULT_MAX_STATES,
    StateCapExceeded,
    brute_force_families,
    build_generator,
    is_irreducible,
    stationary_dimension,
    verify_invariant_exact,
)
from .kmc import run_replicas
from .model import DEFAULT_TOL, ModelError, ProcessModel, SpinMeasure, load_measure, load_model, path_edges
from .partitions import (
    DEFAULT_CAP_ASSIGNMENTS,
    IbmFamily,
    SearchCapExceeded,
    enumerate_families,
    enumerate_families_general,
    minimal_partition_connected,
    sample_generic_measure,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FALSE, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def render_json(command: str, model: ProcessModel, result: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "model_digest": model.digest(), "result": result}
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _labels(model: ProcessModel, spins) -> list[str]:
    return [model.spins.labels[x] for x in spins]


# -- analyze ----------------------------------------------------------------

def _certify(model: ProcessModel, fam: IbmFamily, seed, tol: float, max_states: int) -> dict:
    nu = sample_generic_measure(fam, seed)
    F = model.map
    cert: dict = {"sample": nu.probs.tolist()}
    if F.is_bijective and F.is_symmetric:
        cert["agreement"] = bool(check_agreement(nu, F, tol))
    cert["pair_invariance"] = check_pair_invariance(nu, F, tol)
    cert["graph"] = "path-3, unit rates"
    try:
        gen = build_generator(model.with_graph(3, path_edges(3)), max_states)
        ex = verify_invariant_exact(nu, gen)
        cert["exact_residual"] = ex.residual
        cert["certified"] = bool(cert["pair_invariance"] and ex.invariant)
    except StateCapExceeded:
        cert["exact_residual"] = None
        cert["certified"] = bool(cert["pair_invariance"])
    return cert


def analyze(model: ProcessModel, tol=DEFAULT_TOL, seed=0, max_states=DEFAULT_MAX_STATES,
            cap_assignments=DEFAULT_CAP_ASSIGNMENTS, merge_order_seed=None) -> dict:
    F = model.map
    oriented = model.mode == "oriented"
    census = cycle_census(F)
    if F.is_bijective:
        try:
            parts = [minimal_partition_connected(F, order_seed=merge_order_seed, oriented=oriented)]
            route = "connected"
        except ModelError:
            parts = enumerate_families_general(F, cap=cap_assignments, oriented=oriented)
            route = "general"
        families = [IbmFamily(P, tuple(range(F.m))) for P in parts]
        truncated = False
    else:
        found = enumerate_families(F, cap_assignments=cap_assignments, oriented=oriented)
        families, truncated, route = list(found.families), found.truncated, "reduced"

    out_families = []
    for k, fam in enumerate(families):
        out_families.append({
            "blocks": [_labels(model, b) for b in fam.blocks],
            "dimension": fam.dimension,
            "kill_set": _labels(model, sorted(fam.kill_set)),
            "certification": _certify(model, fam, np.random.SeedSequence(seed, spawn_key=(k,)), tol, max_states),
        })
    everything = (
        len(families) == 1 and not families[0].kill_set and families[0].partition.block_count == F.m
    )
    rate_ok = [bool(check_rate_condition(e.rates, F)) for e in model.edges] if F.is_bijective else []
    return {
        "spins": list(model.spins.labels),
        "bijective": F.is_bijective,
        "symmetric": F.is_symmetric,
        "mode": model.mode,
        "census": census,
        "route": route,
        "families": out_families,
        "truncated": truncated,
        "all_bernoulli_invariant": everything,
        "rate_hypothesis": all(rate_ok) if rate_ok else None,
    }


def _text_analyze(r: dict) -> str:
    c = r["census"]
    lines = [
        f"spins: {', '.join(r['spins'])}   bijective={r['bijective']} symmetric={r['symmetric']} mode={r['mode']}",
        f"cycles: {c['cycles']} (lengths {c['lengths']}), connected {c['connected']}, "
        f"disconnected {c['disconnected']}, inessential points {c['inessential']}",
        f"route: {r['route']}",
    ]
    if r["all_bernoulli_invariant"]:
        lines.append("*** any Bernoulli measure is invariant ***")
    for k, fam in enumerate(r["families"]):
        blocks = " | ".join("{" + ",".join(b) + "}" for b in fam["blocks"])
        kill = f"  kill set {{{','.join(fam['kill_set'])}}}" if fam["kill_set"] else ""
        cert = fam["certification"]
        res = cert["exact_residual"]
        res_txt = "n/a" if res is None else f"{res:.2e}"
        lines.append(f"family {k + 1}: dimension {fam['dimension']}  blocks {blocks}{kill}")
        lines.append(f"    certified={cert['certified']}  (exact residual on {cert['graph']}: {res_txt})")
    if r["truncated"]:
        lines.append("warning: kill-set enumeration truncated")
    if r["rate_hypothesis"] is False:
        lines.append("note: model rates are not constant along cycles of F")
    return "\n".join(lines)


# -- other commands ---------------------------------------------------------

def _text_check(r: dict) -> str:
    lines = [
        f"invariant: {r['invariant']}  (method: {r['method']})",
        f"agreement: {r['agreement']}  pair invariance: {r['pair_invariance']}",
        f"rate hypothesis per edge: {'all hold' if all(r['rate_conditions']) else r['rate_conditions']}",
        f"max single-edge residual: {max(r['edge_residuals'], default=0.0):.3e}",
    ]
    if r["exact_residual"] is not None:
        lines.append(f"exact residual: {r['exact_residual']:.3e} (tolerance {r['exact_tolerance']:.1e})")
    if r["witness"]:
        lines.append(f"witness cycle {r['witness']['cycle']} with pair values {r['witness']['values']}")
    lines.extend(f"note: {n}" for n in r["notes"])
    return "\n".join(lines)


def exact(model: ProcessModel, nu: SpinMeasure, max_states: int, diagnostics: bool = False) -> dict:
    gen = build_generator(model, max_states)
    res = verify_invariant_exact(nu, gen)
    out = {
        "states": gen.n,
        "residual": res.residual,
        "tolerance": res.tolerance,
        "invariant": res.invariant,
        "max_row_sum": float(np.max(np.abs(gen.row_sums()))) if gen.n else 0.0,
    }
    if diagnostics:
        out["irreducible"] = is_irreducible(gen)
        try:
            out["stationary_dimension"] = stationary_dimension(gen)
        except StateCapExceeded:
            out["stationary_dimension"] = None
    return out


def _text_exact(r: dict) -> str:
    lines = [
        f"states: {r['states']}",
        f"residual |mu Q|_inf = {r['residual']:.3e} (tolerance {r['tolerance']:.1e}) -> invariant={r['invariant']}",
    ]
    if "irreducible" in r:
        lines.append(f"irreducible: {r['irreducible']}  stationary dimension: {r['stationary_dimension']}")
    return "\n".join(lines)


def simulate(model, nu, config, events, time, seed, replicas, burn_in, trace_stride=None) -> dict:
    reference = nu
    summary = run_replicas(
        model, nu if nu is not None else SpinMeasure.uniform(model.m), seed, replicas,
        events=events, time=time, burn_in=burn_in, config=config, trace_stride=trace_stride,
    )
    per = []
    for res, rep in zip(summary.runs, summary.reports):
        item = {"events": res.events, "clock": res.clock, "frozen": res.frozen, "integrity_error": res.integrity_error}
        if reference is not None:
            item["marginals"] = rep.to_dict()
        if res.trace:
            item["trace"] = res.trace
        per.append(item)
    pooled = summary.pooled
    site = pooled.occupation.sum(axis=0)
    out = {
        "replicas": per,
        "seed": seed,
        "pooled_site_marginal": (site / site.sum()).tolist() if site.sum() > 0 else None,
    }
    if reference is not None:
        agg = {}
        for attr in ("site_tv_mean", "pair_tv_mean", "pooled_site_tv", "pooled_pair_tv"):
            mean, se = summary.mean_se(attr)
            agg[attr] = {"mean": mean, "se": None if np.isnan(se) else se}
        out["aggregate"] = agg
    return out


def _text_simulate(r: dict) -> str:
    lines = []
    for k, rep in enumerate(r["replicas"]):
        line = f"replica {k}: events={rep['events']} time={rep['clock']:.6g} frozen={rep['frozen']}"
        if "marginals" in rep:
            mg = rep["marginals"]
            line += f" site TV mean={mg['site_tv_mean']:.4f} pair TV mean={mg['pair_tv_mean']:.4f}"
        lines.append(line)
    for attr, v in r.get("aggregate", {}).items():
        se = "n/a" if v["se"] is None else f"{v['se']:.4f}"
        lines.append(f"{attr}: {v['mean']:.4f} +/- {se}")
    if r["pooled_site_marginal"] is not None:
        lines.append("pooled site marginal: " + ", ".join(f"{p:.4f}" for p in r["pooled_site_marginal"]))
    return "\n".join(lines)


def laws(model: ProcessModel, nu: SpinMeasure | None, tol: float) -> dict:
    basis = conservation_laws(model.map)
    out = {"dimension": int(basis.shape[1]), "basis": (np.round(basis, 12) + 0.0).T.tolist()}
    if nu is not None:
        res = verify_log_measure(nu, model.map, tol)
        out["log_measure"] = {"conserved": res.conserved, "residual": res.residual}
    return out


def _text_laws(r: dict) -> str:
    lines = [f"conservation law space: dimension {r['dimension']}"]
    for k, vec in enumerate(r["basis"]):
        lines.append(f"  E{k + 1} = [" + ", ".join(f"{x:+.6f}" for x in vec) + "]")
    if "log_measure" in r:
        lm = r["log_measure"]
        lines.append(f"ln nu conserved: {lm['conserved']} (projection residual {lm['residual']:.3e})")
    return "\n".join(lines)


def oracle(model: ProcessModel, cap_assignments: int) -> dict:
    F = model.map
    oriented = model.mode == "oriented"
    fast = enumerate_families_general(F, cap=cap_assignments, oriented=oriented)
    slow = brute_force_families(F)
    fmt = lambda parts: [[_labels(model, b) for b in P.blocks] for P in parts]
    return {"enumerated": fmt(fast), "brute_force": fmt(slow), "agree": set(fast) == set(slow)}


def _text_oracle(r: dict) -> str:
    lines = [f"agree: {r['agree']}"]
    for name in ("enumerated", "brute_force"):
        for P in r[name]:
            lines.append(f"  {name}: " + " | ".join("{" + ",".join(b) + "}" for b in P))
    return "\n".join(lines)


# -- argument parsing -------------------------------------------------------

def _parse_config(text: str) -> list[int]:
    path = Path(text)
    if path.exists():
        raw = json.loads(path.read_text())
        return [int(x) for x in (raw["config"] if isinstance(raw, dict) else raw)]
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit the machine-readable report")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="relative tolerance for level sets")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES)
    common.add_argument("--cap-assignments", type=int, default=DEFAULT_CAP_ASSIGNMENTS)

    parser = argparse.ArgumentParser(prog="exchange-ibm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="enumerate invariant Bernoulli families")
    p.add_argument("model")
    p.add_argument("--merge-order-seed", type=int, default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("check", parents=[common], help="decide invariance of a given measure")
    p.add_argument("model")
    p.add_argument("measure")

    p = sub.add_parser("exact", parents=[common], help="exact generator residual of a given measure")
    p.add_argument("model")
    p.add_argument("measure")
    p.add_argument("--diagnostics", action="store_true", help="also report irreducibility and stationary dimension")

    p = sub.add_parser("simulate", parents=[common], help="kinetic Monte Carlo run with marginal statistics")
    p.add_argument("model")
    p.add_argument("--nu", help="measure file to sample the start from and compare against")
    p.add_argument("--config", help="explicit start: comma-separated spins or a JSON file")
    stop = p.add_mutually_exclusive_group(required=True)
    stop.add_argument("--events", type=lambda s: int(float(s)))
    stop.add_argument("--time", type=float)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--burn-in", type=float, default=0.0, help="events discarded before collecting statistics")
    p.add_argument("--trace-stride", type=lambda s: int(float(s)), default=None)

    p = sub.add_parser("laws", parents=[common], help="additive conservation laws")
    p.add_argument("model")
    p.add_argument("measure", nargs="?")

    p = sub.add_parser("oracle", parents=[common], help="compare enumeration against exhaustive search")
    p.add_argument("model")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        model = load_model(args.model)
        code = EXIT_OK
        if args.command == "analyze":
            result = analyze(model, args.tol, args.seed, args.max_states, args.cap_assignments, args.merge_order_seed)
            text = _text_analyze(result)
        elif args.command == "check":
            nu = load_measure(args.measure, model.m)
            result = check_model_invariance(model, nu, args.tol, args.max_states).to_dict()
            text = _text_check(result)
            code = {True: EXIT_OK, False: EXIT_FALSE, None: EXIT_CAP}[result["invariant"]]
        elif args.command == "exact":
            nu = load_measure(args.measure, model.m)
            result = exact(model, nu, args.max_states, args.diagnostics)
            text = _text_exact(result)
            code = EXIT_OK if result["invariant"] else EXIT_FALSE
        elif args.command == "simulate":
            if args.nu is None and args.config is None:
                raise ModelError("simulate needs --nu or --config")
            nu = load_measure(args.nu, model.m) if args.nu else None
            config = _parse_config(args.config) if args.config else None
            result = simulate(model, nu, config, args.events, args.time, args.seed, args.replicas,
                              int(args.burn_in), args.trace_stride)
            text = _text_simulate(result)
        elif args.command == "laws":
            nu = load_measure(args.measure, model.m) if args.measure else None
            result = laws(model, nu, args.tol)
            text = _text_laws(result)
            if "log_measure" in result and not result["log_measure"]["conserved"]:
                code = EXIT_FALSE
        else:
            result = oracle(model, args.cap_assignments)
            text = _text_oracle(result)
            code = EXIT_OK if result["agree"] else EXIT_FALSE
    except (ModelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SearchCapExceeded, StateCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    sys.stdout.write(render_json(args.command, model, result) if args.json else text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
