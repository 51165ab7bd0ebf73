"""Command-line entry point: ``mev-arena <subcommand> [options]``.

Exit codes: 0 on success, 1 for invalid input or usage, 2 for runtime
failures. Results go to stdout; ``--out DIR`` also writes them to
``DIR/<subcommand>.<format>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .builder import (ConflictInstance, KevInstance, adversarial_instance, adversarial_summary,
                      fbca_exact, fbca_greedy, kev_exact, kev_greedy_by_price)
from .equilibrium import (analyze, check_sybil_resistance, find_epsilon_ne, min_null_state_cost,
                          symmetric_ne)
from .errors import MevArenaError, NotAnEquilibrium, UndefinedCost, ValidationError
from .game import simulate_runs
from .numeric import encode_number, pretty, to_fraction
from .presets import all_presets, get_preset, write_presets
from .scenario import ScenarioIOError, build_scenario, load_scenario
from .search import local_mev
from .serialize import dumps


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([pretty(x) if isinstance(x, Fraction) else x for x in row])
    return buf.getvalue()


def _scenario(args, kinds):
    if args.scenario is None:
        return None
    if args.scenario.startswith("preset:"):
        try:
            doc = get_preset(args.scenario[len("preset:"):])
        except KeyError as exc:
            raise ValidationError(exc.args[0]) from None
        sc = build_scenario(doc)
    else:
        sc = load_scenario(args.scenario)
    if sc.kind not in kinds:
        raise ValidationError(f"{args.command} needs a scenario of kind "
                              f"{' or '.join(kinds)}, got {sc.kind!r}")
    return sc


def _require(sc, kinds, command):
    if sc is None:
        raise ValidationError(f"{command} requires --scenario (kind {' or '.join(kinds)})")
    return sc


def _seed(args, sc):
    return args.seed if args.seed is not None else sc.analysis.seed


# -- subcommands ---------------------------------------------------------------


def cmd_solve_kev(args):
    sc = _scenario(args, ("kev",))
    if sc is not None:
        inst = KevInstance(tuple(tuple(i) for i in sc.kev["items"]), sc.kev["gas_limit"])
    elif args.items and args.L:
        items = []
        for part in args.items.split(","):
            g, m = part.split(":")
            items.append((int(g), to_fraction(m)))
        inst = KevInstance(tuple(items), args.L)
    else:
        inst = KevInstance(((6, 5), (5, 4), (5, 4)), 10)
    exact, greedy = kev_exact(inst), kev_greedy_by_price(inst)
    rows = [["solver", "revenue", "gas_used", "selected"],
            ["exact", exact.revenue, exact.gas_used, " ".join(map(str, exact.selected))],
            ["greedy_by_price", greedy.revenue, greedy.gas_used,
             " ".join(map(str, greedy.selected))]]
    data = {"gas_limit": inst.gas_limit,
            "exact": {"revenue": encode_number(exact.revenue), "gas_used": exact.gas_used,
                      "selected": list(exact.selected)},
            "greedy_by_price": {"revenue": encode_number(greedy.revenue),
                                "gas_used": greedy.gas_used, "selected": list(greedy.selected)}}
    return rows, data


def _block_rows(inst):
    greedy, opt = fbca_greedy(inst), fbca_exact(inst)
    rows = [["builder", "revenue", "gas_used", "selected"]]
    data = {}
    for name, built in (("greedy", greedy), ("exact", opt)):
        sel = [inst.bundles[i].hash for i in built.selected]
        rows.append([name, built.revenue, built.gas_used, " ".join(h[:16] for h in sel)])
        data[name] = {"revenue": encode_number(built.revenue), "gas_used": built.gas_used,
                      "selected": list(built.selected), "bundles": sel}
    ratio = greedy.revenue / opt.revenue if opt.revenue else Fraction(1)
    rows.append(["ratio", ratio, "", ""])
    data["ratio"] = encode_number(ratio)
    data["conflicts"] = sorted(list(e) for e in inst.conflicts)
    return rows, data


def cmd_build_block(args):
    sc = _require(_scenario(args, ("block",)), ("block",), args.command)
    if "adversarial" in sc.block:
        a = sc.block["adversarial"]
        inst = adversarial_instance(a["L"], a["g_min"], to_fraction(a["eps"]), to_fraction(a["m"]))
    else:
        b = sc.block
        inst = ConflictInstance.build(b["bundles"], b["gas_limit"], b["conflicts"], b["state"])
    return _block_rows(inst)


COUNTER_COLUMNS = ["L", "g_min", "k", "m", "eps", "FBR", "OPT", "ratio", "bound",
                   "FBR_per_gmin", "OPT_per_gmin"]


def cmd_counterexample(args):
    sc = _scenario(args, ("block",))
    if sc is not None and "adversarial" in sc.block:
        a = sc.block["adversarial"]
        L, g, m, eps = a["L"], a["g_min"], a["m"], a["eps"]
    else:
        L, g, m, eps = args.L, args.gmin, args.m, args.eps
    s = adversarial_summary(int(L), int(g), to_fraction(m), to_fraction(eps))
    values = [s[c] for c in COUNTER_COLUMNS]
    print(f"FBR={pretty(s['FBR'])} OPT={pretty(s['OPT'])} ratio={pretty(s['ratio'])} "
          f"bound={pretty(s['bound'])}", file=sys.stderr)
    data = {c: encode_number(v) for c, v in zip(COUNTER_COLUMNS, values)}
    data["within_bound"] = s["ratio"] <= s["bound"]
    return [COUNTER_COLUMNS + ["within_bound"], values + [str(data["within_bound"]).lower()]], data


def cmd_local_mev(args):
    sc = _require(_scenario(args, ("search",)), ("search",), args.command)
    state, caps = sc.search["state"], sc.search["caps"]
    rows = [["player", "local_mev", "argmev_size", "explored", "argmev"]]
    data = {"players": []}
    for cap in caps:
        res = local_mev(state, cap)
        hashes = [b.hash for b in res.argmev]
        rows.append([cap.player, res.value, len(hashes), res.explored,
                     " ".join(h[:16] for h in hashes)])
        data["players"].append({"player": cap.player, "local_mev": encode_number(res.value),
                                "explored": res.explored, "argmev": [b.to_json() for b in res.argmev]})
    try:
        gas, witness = min_null_state_cost(state, caps)
        data["null_state_cost"] = {"gas": gas, "witness": witness.to_json()}
        rows.append(["null_state_cost", gas, "", "", witness.hash[:16]])
    except UndefinedCost as exc:
        data["null_state_cost"] = {"gas": None, "reason": str(exc)}
        rows.append(["null_state_cost", "undefined", "", "", ""])
    return rows, data


def _profile(sc):
    if sc.analysis.profile is not None:
        return sc.analysis.profile
    return (sc.grid.strategies[-1],) * sc.spec.n_players


def cmd_simulate(args):
    sc = _require(_scenario(args, ("stage",)), ("stage",), args.command)
    profile = _profile(sc)
    runs = args.runs or sc.analysis.runs
    seed = _seed(args, sc)
    results = simulate_runs(sc.spec, profile, runs, seed, args.threads, record=bool(args.out))
    n = sc.spec.n_players
    rows = [["run", "seal_time", "winner", "gas_used"] + [f"delta_b{i}" for i in range(n)]]
    for r, res in enumerate(results):
        rows.append([r, res.seal_time, "" if res.outcome.winner is None else res.outcome.winner,
                     res.gas_used] + list(res.deltas))
    means = [sum((res.deltas[i] for res in results), Fraction(0)) / runs for i in range(n)]
    wins = [Fraction(sum(1 for res in results if res.outcome.winner == i), runs) for i in range(n)]
    cost = Fraction(sum(res.gas_used for res in results), runs)
    data = {"profile": [s.to_json() for s in profile], "runs": runs, "seed": seed,
            "mean_utility": [encode_number(x) for x in means],
            "win_rate": [encode_number(x) for x in wins],
            "expected_gas": encode_number(cost)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"run": r, **e.to_json()}, sort_keys=True)
                 for r, res in enumerate(results) for e in res.events]
        (out / "events.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    return rows, data


def _game(sc, args):
    if sc.kind == "cournot":
        return sc.cournot_game()
    return sc.stage_game(runs=args.runs, seed=_seed(args, sc), threads=args.threads)


def _sybil_checks(sc, game, eps):
    phi = sc.analysis.phi
    if phi is None:
        return []
    if phi == "symmetric-ne":
        def phi_fn(n):
            p = symmetric_ne(game.resized(n), eps)
            if p is None:
                raise NotAnEquilibrium(f"no symmetric equilibrium at n={n}")
            return p
    else:
        def phi_fn(n):
            return (phi,) * n
    lo, hi = sc.analysis.n_range
    out = []
    for n in range(lo, max(hi, lo + 1)):
        try:
            out.append((n, check_sybil_resistance(game, phi_fn, n, eps)))
        except NotAnEquilibrium as exc:
            out.append((n, f"precondition failed: {exc}"))
    return out


def _report(args, with_pomev):
    sc = _require(_scenario(args, ("stage", "cournot")), ("stage", "cournot"), args.command)
    game = _game(sc, args)
    eps = sc.analysis.epsilon
    n_max = sc.analysis.n_range[1]
    state = caps = None
    if with_pomev:
        if sc.kind != "stage":
            raise ValidationError("pomev needs a stage scenario")
        state, caps = sc.spec.initial_state, sc.spec.capabilities()
    report = analyze(game, eps, n_max, state, caps)
    report.sybil_checks = _sybil_checks(sc, game, eps)
    data = report.to_json()
    if sc.analysis.sweep_n:
        sweep = []
        for n in range(sc.analysis.n_range[0], n_max + 1):
            g = game.resized(n)
            ne = find_epsilon_ne(g, eps)
            sweep.append({"n": n, "ne_count": len(ne),
                          "max_ne_cost": encode_number(max(g.evaluate(p).cost for p in ne))
                          if ne else None})
        data["ne_cost_by_n"] = sweep
    return sc, report, data


def cmd_equilibrium(args):
    _, report, data = _report(args, with_pomev=False)
    rows = report.csv_rows()
    return rows, data


def cmd_pomev(args):
    sc, report, data = _report(args, with_pomev=True)
    rows = [["scenario", "pomev", "numerator", "denominator", "poa", "ne", "sne", "note"],
            [sc.name, "undefined" if report.pomev is None else report.pomev,
             "" if report.numerator is None else report.numerator,
             "" if report.denominator is None else report.denominator,
             "undefined" if report.poa is None else report.poa, len(report.ne), len(report.sne),
             "; ".join([report.poa_note] + report.diagnostics).strip("; ")]]
    print(f"PoMEV={'undefined' if report.pomev is None else pretty(report.pomev)}",
          file=sys.stderr)
    return rows, data


def cmd_presets(args):
    presets = all_presets()
    if args.out:
        write_presets(args.out)
    rows = [["name", "kind", "description"]]
    rows += [[name, presets[name]["kind"], presets[name].get("description", "")]
             for name in sorted(presets)]
    data = {"presets": [{"name": r[0], "kind": r[1], "description": r[2]} for r in rows[1:]]}
    return rows, data


COMMANDS = {
    "solve-kev": (cmd_solve_kev, "fee-maximizing block under a gas limit (exact and greedy)"),
    "build-block": (cmd_build_block, "bundle auction block: greedy and exact builders"),
    "counterexample": (cmd_counterexample, "adversarial instance for the greedy bundle builder"),
    "local-mev": (cmd_local_mev, "exhaustive local MEV and null-state cost"),
    "simulate": (cmd_simulate, "Monte Carlo runs of one strategy profile"),
    "equilibrium": (cmd_equilibrium, "epsilon-equilibria, Sybil checks and PoA"),
    "pomev": (cmd_pomev, "price of MEV of a stage game"),
    "presets": (cmd_presets, "list built-in scenarios; --out writes them as files"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mev-arena", description="MEV games laboratory")
    parser.add_argument("--version", action="version", version=f"mev-arena {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--seed", type=int, default=None, help="random seed (default from scenario)")
        p.add_argument("--scenario", default=None,
                       help="scenario JSON file, or preset:<name> for a built-in one")
        p.add_argument("--out", default=None, help="directory for output files")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: MEV_ARENA_THREADS or 1)")
        if name in ("simulate", "equilibrium", "pomev"):
            p.add_argument("--runs", type=int, default=None, help="Monte Carlo runs per profile")
        if name == "counterexample":
            p.add_argument("--L", type=int, default=100, help="block gas limit")
            p.add_argument("--gmin", type=int, default=10, help="gas of every bundle")
            p.add_argument("--m", default="1", help="base gas price")
            p.add_argument("--eps", default="0.01", help="price premium of the blocking bundle")
        if name == "solve-kev":
            p.add_argument("--items", default=None, help="comma list of gas:price pairs")
            p.add_argument("--L", type=int, default=None, help="block gas limit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = COMMANDS[args.command][0]
    try:
        if args.threads is not None and args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        if getattr(args, "runs", None) is not None and args.runs < 1:
            raise ValidationError("--runs must be at least 1")
        rows, data = handler(args)
    except ValidationError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return 1
    except ScenarioIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MevArenaError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.format == "json":
        text = dumps({"command": args.command, "version": __version__, "result": data})
    else:
        text = _csv_text(rows)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.{args.format}").write_text(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
