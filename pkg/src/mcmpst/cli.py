"""Command-line front end.

Exit codes: 0 the property holds / success, 1 refuted or rejected,
2 input error (parse/IO/missing name), 3 inconclusive (budget exhausted).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from .core import EMPTY_ENV, LocalContext, Active, rational_str
from .ctxlts import dfree, pending, reach, safe
from .errors import (
    BudgetExceeded, McmpstError, ParseError, SearchBudgetExceeded,
    StateBudgetExceeded,
)
from .interface import synthesize_interface
from .reduction import explore, explored_dot, is_error, reachable_states, simulate
from .subtype import (
    DEFAULT_BUDGET, check_derivation, format_derivation, sub_multi, sub_single,
    sub_standard,
)
from .surface import Parser, parse_file, pp_context, pp_process, pp_type, pretty
from .typecheck import canonical, check

SCHEMA = "mcmpst/1"


def _budget(args) -> int:
    if getattr(args, "budget", None) is not None:
        return args.budget
    env = os.environ.get("MCMPST_BUDGET")
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return DEFAULT_BUDGET


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as handle:
            return parse_file(handle.read())
    except OSError as e:
        raise ParseError(str(e))


def _named(table, name, kind):
    if name not in table:
        raise ParseError(f"no {kind} named {name!r}")
    return table[name]


def _emit(args, text_lines, payload):
    if args.format == "json":
        payload = {"schema": SCHEMA, **payload}
        print(json.dumps(payload, indent=2))
    else:
        for line in text_lines:
            print(line)


def _verdict_payload(v):
    return {
        "holds": v.holds,
        "reason": v.reason,
        "path": [{"label": str(l), "prob": rational_str(p)} for l, p in v.path],
        "state": pp_context(v.state) if v.state is not None else None,
    }


def cmd_check(args) -> int:
    pf = _load(args.file)
    process = _named(pf.processes, args.process, "process")
    context = _named(pf.contexts, args.context, "context")
    report = check(EMPTY_ENV, process, context, _budget(args))
    lines = [f"check {args.process} against {args.context}: "
             + ("accepted" if report.verdict else "rejected")]
    lines += [f"  {d}" for d in report.diagnostics]
    if report.synthesized is not None:
        lines.append(f"  synthesized: {pp_context(report.synthesized)}")
    _emit(args, lines, report.to_json())
    return 0 if report.verdict else 1


def cmd_subtype(args) -> int:
    pf = _load(args.file)
    sub = _named(pf.contexts, args.sub, "context")
    sup = _named(pf.contexts, args.sup, "context")
    budget = _budget(args)
    if args.relation == "multi":
        deriv = sub_multi(sub, sup, budget)
    elif args.relation == "single":
        deriv = sub_single(sub, sup, budget)
    else:
        if len(sub) != 1 or len(sup) != 1:
            raise ParseError("standard subtyping needs single-binding contexts")
        deriv = sub_standard(sub.bindings[0][1], sup.bindings[0][1], budget)
    if deriv is None:
        _emit(args, [f"{args.sub} <= {args.sup}: refuted"],
              {"holds": False, "relation": args.relation})
        return 1
    ok = check_derivation(deriv)
    lines = [f"{args.sub} <= {args.sup}: derivable "
             f"(certificate {'valid' if ok else 'INVALID'})",
             format_derivation(deriv)]
    _emit(args, lines, {"holds": True, "relation": args.relation,
                        "certificate_valid": ok,
                        "derivation": deriv.to_json()})
    return 0 if ok else 1


def _graph_command(args, predicate, name) -> int:
    pf = _load(args.file)
    context = _named(pf.contexts, args.context, "context")
    verdict = predicate(context)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as handle:
            handle.write(reach(context).to_dot())
    lines = [f"{name}({args.context}): {'holds' if verdict.holds else 'violated'}"]
    if not verdict.holds:
        lines.append(f"  reason: {verdict.reason}")
        for label, prob in verdict.path:
            lines.append(f"  via {label} @{rational_str(prob)}")
        if verdict.state is not None:
            lines.append(f"  state: {pp_context(verdict.state)}")
    _emit(args, lines, {"property": name, **_verdict_payload(verdict)})
    return 0 if verdict.holds else 1


def cmd_safety(args) -> int:
    return _graph_command(args, safe, "safe")


def cmd_dfree(args) -> int:
    return _graph_command(args, dfree, "dfree")


def cmd_pending(args) -> int:
    pf = _load(args.file)
    context = _named(pf.contexts, args.context, "context")
    parser = Parser(args.channel)
    channel = parser.parse_channel()
    result = pending(Active(channel, context))
    _emit(args, [f"pending({args.channel} * {args.context}): {result}"],
          {"pending": result})
    return 0 if result else 1


def cmd_interface(args) -> int:
    pf = _load(args.file)
    context = _named(pf.contexts, args.context, "context")
    roles, ty, deriv = synthesize_interface(context, _budget(args))
    session = next(iter(context.sessions()))
    chan_text = f"{session}[{{{','.join(sorted(roles))}}}]"
    lines = [f"interface for {args.context}:",
             f"  {chan_text}: {pp_type(ty)}",
             "validating derivation:",
             format_derivation(deriv)]
    _emit(args, lines, {
        "channel": chan_text,
        "type": pp_type(ty),
        "derivation": deriv.to_json(),
    })
    return 0


def cmd_run(args) -> int:
    pf = _load(args.file)
    process = _named(pf.processes, args.process, "process")
    scheduler, script = args.scheduler, None
    if scheduler.startswith("script:"):
        script = [int(x) for x in scheduler[len("script:"):].split(",") if x]
        scheduler = "script"
    trace = simulate(process, seed=args.seed, max_steps=args.steps,
                     scheduler=scheduler, script=script)
    lines = [f"run {args.process} (seed {args.seed}):"]
    for rule, desc, prob in trace.steps:
        lines.append(f"  [{rule}] {desc} @{rational_str(prob)}")
    lines.append(f"  cumulative {rational_str(trace.cumulative)}")
    lines.append(f"  final {pp_process(trace.final)}")
    _emit(args, lines, trace.to_json())
    return 0


def cmd_explore(args) -> int:
    pf = _load(args.file)
    process = _named(pf.processes, args.process, "process")
    outcomes = explore(process, args.depth)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as handle:
            handle.write(explored_dot(process, args.depth))
    lines = [f"explore {args.process} (depth {args.depth}): "
             f"{len(outcomes)} path(s)"]
    for o in outcomes:
        flags = []
        if o.deadlocked:
            flags.append("deadlock")
        if o.error:
            flags.append(f"error:{o.error}")
        if o.truncated:
            flags.append("truncated")
        note = f" [{', '.join(flags)}]" if flags else ""
        lines.append(f"  mass {rational_str(o.mass)} -> "
                     f"{pp_process(o.terminal)}{note}")
    total = sum((o.mass for o in outcomes), Fraction(0))
    lines.append(f"  total mass {rational_str(total)}")
    _emit(args, lines, {"outcomes": [o.to_json() for o in outcomes],
                        "total_mass": rational_str(total)})
    return 0


def cmd_errors(args) -> int:
    pf = _load(args.file)
    process = _named(pf.processes, args.process, "process")
    direct = is_error(process)
    hits = []
    if args.depth:
        for state in reachable_states(process, args.depth):
            kind = is_error(state)
            if kind:
                hits.append((kind, pp_process(state)))
    lines = [f"errors in {args.process}: "
             f"{direct or ('none' if not hits else '')}"]
    for kind, text in hits:
        lines.append(f"  reachable {kind} error: {text}")
    _emit(args, lines, {"direct": direct,
                        "reachable": [{"kind": k, "state": s}
                                      for k, s in hits]})
    return 0 if not direct and not hits else 1


def cmd_parse(args) -> int:
    pf = _load(args.file)
    lines = []
    for name, t in pf.types.items():
        lines.append(f"type {name} = {pp_type(t)}")
    for name, c in pf.contexts.items():
        lines.append(f"context {name} {{ {pp_context(c)} }}")
    for name, p in pf.processes.items():
        lines.append(f"process {name} = {pp_process(p)}")
    _emit(args, lines, {
        "types": {n: pp_type(t) for n, t in pf.types.items()},
        "contexts": {n: pp_context(c) for n, c in pf.contexts.items()},
        "processes": {n: pp_process(p) for n, p in pf.processes.items()},
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="mcmpst",
        description="verify probabilistic mixed-choice multiparty sessions")
    top.add_argument("--format", choices=("text", "json"), default="text")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, budget=False, dot=False):
        if budget:
            p.add_argument("--budget", type=int, default=None)
        if dot:
            p.add_argument("--dot", default=None, metavar="PATH")

    p = sub.add_parser("check", help="type-check a process against a context")
    p.add_argument("file"); p.add_argument("process"); p.add_argument("context")
    common(p, budget=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("subtype", help="decide context subtyping")
    p.add_argument("file"); p.add_argument("sub"); p.add_argument("sup")
    p.add_argument("--relation", choices=("multi", "single", "standard"),
                   default="multi")
    common(p, budget=True)
    p.set_defaults(func=cmd_subtype)

    p = sub.add_parser("safety", help="decide safety of a context")
    p.add_argument("file"); p.add_argument("context")
    common(p, dot=True)
    p.set_defaults(func=cmd_safety)

    p = sub.add_parser("dfree", help="decide deadlock-freedom of a context")
    p.add_argument("file"); p.add_argument("context")
    common(p, dot=True)
    p.set_defaults(func=cmd_dfree)

    p = sub.add_parser("pending", help="decide pending for an active channel")
    p.add_argument("file"); p.add_argument("context"); p.add_argument("channel")
    p.set_defaults(func=cmd_pending)

    p = sub.add_parser("interface", help="synthesise a single-channel interface")
    p.add_argument("file"); p.add_argument("context")
    common(p, budget=True)
    p.set_defaults(func=cmd_interface)

    p = sub.add_parser("run", help="simulate one reduction sequence")
    p.add_argument("file"); p.add_argument("process")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--scheduler", default="uniform",
                   help="uniform | first | script:<i,j,...>")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explore", help="exhaustive weighted exploration")
    p.add_argument("file"); p.add_argument("process")
    p.add_argument("--depth", type=int, default=12)
    common(p, dot=True)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("errors", help="detect error processes")
    p.add_argument("file"); p.add_argument("process")
    p.add_argument("--depth", type=int, default=0)
    p.set_defaults(func=cmd_errors)

    p = sub.add_parser("parse", help="syntax-check and pretty-print a file")
    p.add_argument("file")
    p.set_defaults(func=cmd_parse)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SearchBudgetExceeded, StateBudgetExceeded, BudgetExceeded) as e:
        print(f"inconclusive: {e}", file=sys.stderr)
        return 3
    except McmpstError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
