"""Command line front end.

One subcommand per pipeline stage: parse and validate problem files, embed
and canonicalize controls, integrate, enumerate brackets, synthesize bracket
words, fit expansion orders, check the first and higher order conditions,
search for multipliers, and run the rank/classification routes.

Exit codes: 0 when the command completed and every checked condition passed,
1 when a condition failed, 2 for input errors (parse errors, missing data,
violated hypotheses).  Reports are deterministic: the same inputs and config
produce byte-identical text, so they can be committed and diffed.
"""

from __future__ import annotations

import argparse
import csv
import io
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adjoint import integrate_adjoint
from .brackets import parse_bracket, required_smoothness
from .checker import (
    _linear_structure,
    abnormality_profile,
    check_complementarity,
    check_differentiated,
    check_first_order,
    check_higher_order,
    classify_fully_impulsive,
    find_multiplier,
    kalman_check,
    rank_I1,
    rank_I2,
)
from .config import RunConfig
from .controls import PiecewiseControl, StrictControl, embed_strict
from .errors import ImpulsiveMPError, InsufficientSmoothness, ParseError
from .fields import bracket_display, enumerate_bracket_pool
from .integrate import canonicalize, simulate, total_cost
from .problem import (
    _as_float,
    _as_vector,
    _as_vector_list,
    _parse_sections,
    _take,
    load_problem,
    validate_problem,
)
from .report import ConditionReport
from .variations import BracketGenerator, run_ladder, synth_bracket_control

_CONTROL_SECTIONS = ("control", "strict", "multiplier")

_LEAF_RE = re.compile(r"([A-Za-z]+)(\d+)")


def _generator_for(text: str) -> BracketGenerator:
    """Bracket argument to generator: leaves may repeat channel indices.

    Accepts both the formal spelling "[X1,X2]" and the pool display spelling
    "[[g1,g2],g1]"; leaf positions are relabeled consecutively and the digits
    name the channel each leaf binds to.
    """
    comps: list[int] = []

    def relabel(mt: re.Match) -> str:
        comps.append(int(mt.group(2)))
        return f"X{len(comps)}"

    b = parse_bracket(_LEAF_RE.sub(relabel, text))
    return BracketGenerator(b, leaves=tuple((i + 1, c) for i, c in enumerate(comps)))


# -- input files ---------------------------------------------------------------


def _reject_leftovers(sec: dict):
    for key, (_, line) in sec.items():
        raise ParseError(f"unknown key {key!r}", line, 1)


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror or e}", 1, 1) from None


def parse_control_text(text: str, m: int, q: int):
    """Parse a [control] or [strict] section into a space-time control.

    Returns (ctrl, kind) where kind records which section was present.  A
    strict-sense control is embedded on the spot (graph completion), so every
    caller downstream sees a space-time control.
    """
    sections = _parse_sections(text, allowed=_CONTROL_SECTIONS)
    has_c, has_s = "control" in sections, "strict" in sections
    if has_c and has_s:
        raise ParseError("give either [control] or [strict], not both", 1, 1)
    if not (has_c or has_s):
        raise ParseError("control file needs a [control] or [strict] section", 1, 1)

    if has_s:
        sec = dict(sections["strict"])
        uraw, uline = _take(sec, "u")
        u = _as_vector_list(uraw, uline, m)
        P = u.shape[0]
        if "edges" in sec:
            eraw, eline = _take(sec, "edges")
            edges = _as_vector(eraw, eline, P + 1)
        else:
            traw, tline = _take(sec, "T")
            T = _as_float(traw, tline)
            if T <= 0:
                raise ParseError("T must be positive", tline, 1)
            edges = np.linspace(0.0, T, P + 1)
        araw, aline = _take(sec, "a", required=False)
        a = _as_vector_list(araw, aline, q) if araw is not None else np.zeros((P, q))
        if a.shape[0] != P:
            raise ParseError(f"expected {P} rows of a, got {a.shape[0]}", aline, 1)
        _reject_leftovers(sec)
        return embed_strict(StrictControl(edges=edges, u=u, a=a)), "strict"

    sec = dict(sections["control"])
    wraw, wline = _take(sec, "w")
    w = _as_vector_list(wraw, wline, m)
    P = w.shape[0]
    w0raw, w0line = _take(sec, "w0")
    w0 = _as_vector(w0raw, w0line, P)
    if "edges" in sec:
        eraw, eline = _take(sec, "edges")
        edges = _as_vector(eraw, eline, P + 1)
    else:
        sraw, sline = _take(sec, "S")
        S = _as_float(sraw, sline)
        if S <= 0:
            raise ParseError("S must be positive", sline, 1)
        edges = np.linspace(0.0, S, P + 1)
    araw, aline = _take(sec, "alpha", required=False)
    alpha = _as_vector_list(araw, aline, q) if araw is not None else np.zeros((P, q))
    if alpha.shape[0] != P:
        raise ParseError(f"expected {P} rows of alpha, got {alpha.shape[0]}", aline, 1)
    zraw, zline = _take(sec, "zeta", required=False)
    zeta = _as_vector(zraw, zline, P) if zraw is not None else None
    _reject_leftovers(sec)
    return PiecewiseControl(edges=edges, w0=w0, w=w, alpha=alpha, zeta=zeta), "control"


def load_control(path, spec):
    return parse_control_text(_read_text(path), spec.m, spec.q)[0]


def parse_multiplier_text(text: str, n: int):
    """Parse a [multiplier] section: terminal covector plus the scalars."""
    sections = _parse_sections(text, allowed=_CONTROL_SECTIONS)
    if "multiplier" not in sections:
        raise ParseError("multiplier file needs a [multiplier] section", 1, 1)
    sec = dict(sections["multiplier"])
    praw, pline = _take(sec, "pS")
    pS = _as_vector(praw, pline, n)
    scalars = {}
    for key in ("p0", "pi", "lambda"):
        raw, line = _take(sec, key, required=False)
        scalars[key] = _as_float(raw, line) if raw is not None else 0.0
    _reject_leftovers(sec)
    return pS, scalars["p0"], scalars["pi"], scalars["lambda"]


def load_multiplier(path, spec, traj, config):
    pS, p0, pi, lam = parse_multiplier_text(_read_text(path), spec.n)
    return integrate_adjoint(spec, traj, pS, pi, lam, p0, config)


# -- report plumbing -----------------------------------------------------------


def _g(v) -> str:
    return f"{float(v):.12g}"


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_g(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _residual_csv(reports) -> str:
    rows = []
    for rep in reports:
        for r in rep.records:
            rows.append([rep.title, r.name, float(r.residual), float(r.tol),
                         "yes" if r.passed else "no",
                         "" if r.location is None else _g(r.location)])
    return _csv(["report", "condition", "residual", "tol", "passed", "location"], rows)


def _control_csv(ctrl: PiecewiseControl) -> str:
    header = (["lo", "hi", "w0"] + [f"w{i}" for i in range(1, ctrl.m + 1)]
              + [f"a{i}" for i in range(1, ctrl.alpha.shape[1] + 1)] + ["zeta"])
    rows = []
    for k in range(ctrl.num_pieces):
        rows.append([float(ctrl.edges[k]), float(ctrl.edges[k + 1]), float(ctrl.w0[k]),
                     *map(float, ctrl.w[k]), *map(float, ctrl.alpha[k]), float(ctrl.zeta[k])])
    return _csv(header, rows)


class _Run:
    """Accumulates report text and output files for one command."""

    def __init__(self, command: str, spec_name: str, config: RunConfig):
        self.blocks = [f"impmp {command}", f"problem: {spec_name}", config.describe()]
        self.files: dict[str, str] = {}

    def say(self, text: str):
        self.blocks.append("")
        self.blocks.append(text)

    def attach(self, name: str, content: str):
        self.files[name] = content

    def finish(self, code: int, out_dir) -> int:
        word = {0: "PASS", 1: "FAIL", 2: "input error"}[code]
        self.blocks += ["", f"result: {word}"]
        text = "\n".join(self.blocks) + "\n"
        sys.stdout.write(text)
        if out_dir:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            (d / "verdict.txt").write_text(text)
            for name, content in self.files.items():
                (d / name).write_text(content)
        return code


def _endpoint_block(spec, traj) -> str:
    y0S, yS, ylS, betaS = traj.endpoint()
    lines = ["== endpoint =="]
    lines.append(f"S = {_g(traj.S)}")
    lines.append(f"y0(S) = {_g(y0S)}")
    lines.append("y(S) = " + " ".join(_g(v) for v in yS))
    lines.append(f"running cost = {_g(ylS)}")
    lines.append(f"beta(S) = {_g(betaS)} (budget K = {_g(spec.K) if np.isfinite(spec.K) else 'inf'})")
    lines.append(f"total cost = {_g(total_cost(spec, traj))}")
    return "\n".join(lines)


def _pieces_block(ctrl: PiecewiseControl, title: str) -> str:
    lines = [f"== {title} =="]
    lines.append(f"pieces: {ctrl.num_pieces}, S = {_g(ctrl.S)}, canonical: "
                 + ("yes" if ctrl.is_canonical() else "no"))
    for k in range(ctrl.num_pieces):
        lines.append(
            f"  [{_g(ctrl.edges[k])}, {_g(ctrl.edges[k + 1])}]  w0 = {_g(ctrl.w0[k])}"
            f"  w = ({' '.join(_g(v) for v in ctrl.w[k])})"
            f"  a = ({' '.join(_g(v) for v in ctrl.alpha[k])})")
    return "\n".join(lines)


# -- premise report used by validate -------------------------------------------


def _hp1_report(spec, target, config: RunConfig) -> ConditionReport:
    rep = ConditionReport(title="fully-impulsive premises (informational)")
    tcol = float(np.max(np.abs(target.A[:, 0]))) if target.A.shape[0] else 0.0
    rep.add("target is time-invariant", tcol, 1e-12)
    tdep = "t" in spec.psi.free_vars()
    rep.add("terminal cost is time-independent", 1.0 if tdep else 0.0, 0.0, passed=not tdep)

    rng = np.random.default_rng(2024)
    lmin = np.inf
    flat = 0.0
    for _ in range(40):
        x = spec.x0 + rng.uniform(-1.0, 1.0, size=spec.n)
        for a in spec.control_points:
            lmin = min(lmin, spec.l0_at(x, tuple(a)))
        w = np.zeros(spec.m)
        w[: spec.m1] = rng.uniform(-1.5, 1.5, size=spec.m1)
        if spec.cone.generators.shape[0]:
            w[spec.m1 :] = spec.cone.generators.T @ rng.uniform(
                0.0, 1.5, size=spec.cone.generators.shape[0])
        flat = max(flat, abs(spec.lhat1_at(x, 0.0, w)))
    rep.add("running cost l0 strictly positive (sampled)", max(0.0, -lmin),
            config.tol_ineq, passed=lmin > 0.0, note=f"sampled min {lmin:.6g}")
    rep.add("impulse cost flat at w0 = 0 (sampled)", flat, config.tol_eq)
    return rep


# -- command handlers -----------------------------------------------------------


def _cmd_validate(args, config):
    spec, target = load_problem(args.problem)
    run = _Run("validate", spec.name or Path(args.problem).stem, config)
    rep = validate_problem(spec, target, config)
    hp1 = _hp1_report(spec, target, config)
    run.say(rep.format())
    run.say(hp1.format())
    run.say("note: the premise block feeds `classify`; it does not gate this command")
    run.attach("validation.csv", _residual_csv([rep, hp1]))
    return run.finish(0 if rep.passed else 1, args.out)


def _cmd_embed(args, config):
    spec, _ = load_problem(args.problem)
    ctrl, kind = parse_control_text(_read_text(args.control), spec.m, spec.q)
    if kind != "strict":
        raise ParseError("embed expects a [strict] section", 1, 1)
    run = _Run("embed", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    run.say(_pieces_block(ctrl, "embedded space-time control"))
    run.say(_endpoint_block(spec, proc.traj))
    run.attach("control.csv", _control_csv(ctrl))
    run.attach("series.csv", proc.traj.to_csv())
    return run.finish(0, args.out)


def _cmd_canonicalize(args, config):
    spec, _ = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("canonicalize", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    ctrl_c, traj_c = canonicalize(ctrl, proc.traj)
    run.say(_pieces_block(ctrl, "input control"))
    run.say(_pieces_block(ctrl_c, "canonical control"))
    run.say(_endpoint_block(spec, traj_c))
    run.attach("control.csv", _control_csv(ctrl_c))
    run.attach("series.csv", traj_c.to_csv())
    return run.finish(0, args.out)


def _cmd_simulate(args, config):
    spec, _ = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("simulate", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    run.say(_pieces_block(ctrl, "control"))
    run.say(_endpoint_block(spec, proc.traj))
    run.attach("series.csv", proc.traj.to_csv())
    return run.finish(0, args.out)


def _cmd_brackets(args, config):
    spec, _ = load_problem(args.problem)
    run = _Run("brackets", spec.name or Path(args.problem).stem, config)
    block = list(spec.g[: spec.m1])
    pool = enumerate_bracket_pool(block, args.length, k=args.k)
    lines = [f"== bracket pool, lengths 2..{args.length}, k = {args.k} =="]
    rows = []
    for b, asg in pool:
        need = required_smoothness(b, args.k)
        per_leaf = ", ".join(
            f"{asg.field_for(j).name or f'leaf{j}'} in C^{need[j]}" for j in sorted(need))
        disp = bracket_display(b, asg)
        lines.append(f"{disp}  length {b.length}  switches {b.switch_number}  needs {per_leaf}")
        rows.append([disp, b.length, b.switch_number, max(need.values())])
    lines.append(f"admissible brackets: {len(pool)}")
    run.say("\n".join(lines))
    run.attach("brackets.csv", _csv(["bracket", "length", "switches", "max_order"], rows))
    return run.finish(0, args.out)


def _cmd_synth_bracket(args, config):
    spec, _ = load_problem(args.problem)
    run = _Run("synth-bracket", spec.name or Path(args.problem).stem, config)
    gen = _generator_for(args.bracket)
    b = gen.bracket
    a = _as_vector(args.alpha, 1, spec.q) if args.alpha else None
    ctrl = synth_bracket_control(spec, gen, args.s, a=a)
    run.say(_pieces_block(ctrl, f"bracket word for {args.bracket}, total duration {_g(args.s)}"))
    B0 = gen.field_value(spec, spec.x0)
    h = b.length
    r = b.switch_number
    scale = (args.s / r) ** h
    lines = ["== first order direction =="]
    lines.append(f"order h = {h}, switches r = {r}")
    lines.append("B(xcheck) = " + " ".join(_g(v) for v in B0))
    lines.append(f"(s/r)^h B(xcheck) = " + " ".join(_g(scale * v) for v in B0))
    proc = simulate(spec, ctrl, config)
    dev = proc.traj.y[-1] - spec.x0
    lines.append("endpoint - xcheck = " + " ".join(_g(v) for v in dev))
    lines.append(f"remainder = {_g(np.linalg.norm(dev - scale * B0))}")
    run.say("\n".join(lines))
    run.attach("control.csv", _control_csv(ctrl))
    return run.finish(0, args.out)


def _cmd_verify_order(args, config):
    spec, _ = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("verify-order", spec.name or Path(args.problem).stem, config)
    gen = _generator_for(args.bracket)
    report, rows = run_ladder(spec, ctrl, lambda e: [(gen, args.at, e)], config)
    lines = [report.format(), ""]
    lines.append("eps          deviation     predicted     remainder")
    for row in rows:
        lines.append(f"{row['eps']:<12.4e} {row['deviation']:<13.6e} "
                     f"{row['predicted']:<13.6e} {row['remainder']:.6e}")
    run.say("\n".join(lines))
    run.attach("ladder.csv", _csv(
        ["eps", "deviation", "predicted", "remainder"],
        [[row["eps"], row["deviation"], row["predicted"], row["remainder"]] for row in rows]))
    return run.finish(0 if report.passed else 1, args.out)


def _cmd_check_mp(args, config):
    spec, target = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("check-mp", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    mult = load_multiplier(args.multiplier, spec, proc.traj, config)
    rep1 = check_first_order(spec, proc, mult, target, config)
    rep2 = check_complementarity(spec, proc, mult, config)
    run.say(rep1.format())
    run.say(rep2.format())
    run.attach("residuals.csv", _residual_csv([rep1, rep2]))
    return run.finish(0 if rep1.passed and rep2.passed else 1, args.out)


def _cmd_check_ho(args, config):
    spec, _ = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("check-ho", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    mult = load_multiplier(args.multiplier, spec, proc.traj, config)
    block = list(spec.g[: spec.m1])
    if args.bracket:
        brackets = []
        for text in args.bracket:
            gen = _generator_for(text)
            brackets.append((gen.bracket, gen.assignment(spec)))
    else:
        brackets = enumerate_bracket_pool(block, args.depth, k=0)
    reports = [check_higher_order(spec, proc, mult, brackets, config)]
    run.say(reports[0].format())
    for i in range(1, spec.m + 1):
        try:
            rep = check_differentiated(spec, proc, mult, i, config)
        except InsufficientSmoothness as e:
            run.say(f"differentiated condition for g{i} skipped: {e}")
            continue
        reports.append(rep)
        run.say(rep.format())
    run.attach("residuals.csv", _residual_csv(reports))
    return run.finish(0 if all(r.passed for r in reports) else 1, args.out)


def _cmd_find_multiplier(args, config):
    spec, target = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("find-multiplier", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    res = find_multiplier(spec, proc, target, config, fix_lambda=args.fix_lambda)
    run.say(res.format())
    if args.fix_lambda is None:
        verdict, rays = abnormality_profile(spec, proc, target, config)
        lines = ["== abnormality profile =="]
        for key in ("lam=0", "lam>0"):
            ray = rays[key]
            word = "feasible" if ray.feasible else "infeasible"
            lines.append(f"{key}: {word}, residual {_g(ray.residual)}, margin {_g(ray.margin)}")
        lines.append(f"profile: {verdict}")
        run.say("\n".join(lines))
    if res.multiplier is not None:
        m = res.multiplier
        rows = [[float(sv), *map(float, pv)] for sv, pv in zip(m.s, m.p)]
        run.attach("multiplier.csv", _csv(
            ["s"] + [f"p{i}" for i in range(1, spec.n + 1)], rows))
        run.attach("residuals.csv", _residual_csv([res.report]))
    return run.finish(0 if res.feasible else 1, args.out)


def _cmd_rank(args, config):
    spec, _ = load_problem(args.problem)
    run = _Run("rank", spec.name or Path(args.problem).stem, config)
    x = _as_vector(args.at, 1, spec.n) if args.at else spec.x0
    a = _as_vector(args.alpha, 1, spec.q) if args.alpha else spec.control_points[0]
    block = list(spec.g[: spec.m1])
    pool0 = enumerate_bracket_pool(block, args.depth, k=0)
    pool1 = enumerate_bracket_pool(block, args.depth, k=1)
    r1 = rank_I1(spec, x, pool0, config)
    r2 = rank_I2(spec, x, tuple(a), (pool0, pool1), config)
    run.say(r1.format())
    run.say(r2.format())
    held = r1.holds or r2.holds
    probes = [x, np.zeros(spec.n)] + [0.7 * e for e in np.eye(spec.n)]
    linear = _linear_structure(spec, probes, config)
    if linear is not None:
        C, E = linear
        kal = kalman_check(C, E, config)
        run.say(kal.format())
        held = held or kal.holds
    else:
        run.say("== rank condition Kalman ==\nsystem is not linear; not applicable")
    rows = [[r1.condition, min(r1.ranks), r1.needed, "yes" if r1.holds else "no"],
            [r2.condition, min(r2.ranks), r2.needed, "yes" if r2.holds else "no"]]
    if linear is not None:
        rows.append([kal.condition, min(kal.ranks), kal.needed, "yes" if kal.holds else "no"])
    run.attach("ranks.csv", _csv(["condition", "min_rank", "needed", "holds"], rows))
    return run.finish(0 if held else 1, args.out)


def _cmd_classify(args, config):
    spec, target = load_problem(args.problem)
    ctrl = load_control(args.control, spec)
    run = _Run("classify", spec.name or Path(args.problem).stem, config)
    proc = simulate(spec, ctrl, config)
    mult = load_multiplier(args.multiplier, spec, proc.traj, config)
    cls = classify_fully_impulsive(spec, proc, mult, target, config, pool_depth=args.depth)
    run.say(cls.format())
    reports = [cls.premises]
    run.attach("residuals.csv", _residual_csv(reports))
    return run.finish(0 if cls.predicted and cls.consistent else 1, args.out)


# -- argument parsing ------------------------------------------------------------


def _ladder_value(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ladder {text!r}: comma-separated floats")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=None, help="control discretization pieces")
    common.add_argument("--tol-eq", type=float, default=None, help="equality residual tolerance")
    common.add_argument("--tol-ineq", type=float, default=None, help="inequality slack tolerance")
    common.add_argument("--ladder", type=_ladder_value, default=None,
                        help="comma-separated strictly decreasing epsilons")
    common.add_argument("--out", default=None, help="write verdict.txt and CSV series here")

    parser = argparse.ArgumentParser(
        prog="impmp",
        description="Space-time impulsive extension toolkit: integrate control-affine "
                    "problems with impulse channels and verify maximum-principle conditions.")
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, handler, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("problem", help="problem file")
        return p

    cmd("validate", _cmd_validate, "structural checks on the problem data")

    p = cmd("embed", _cmd_embed, "graph-completion embedding of an ordinary control")
    p.add_argument("--control", required=True, help="control file with a [strict] section")

    p = cmd("canonicalize", _cmd_canonicalize, "arc-length reparameterization, w0 + |w| = 1")
    p.add_argument("--control", required=True)

    p = cmd("simulate", _cmd_simulate, "integrate the space-time system")
    p.add_argument("--control", required=True)

    p = cmd("brackets", _cmd_brackets, "enumerate the admissible bracket pool")
    p.add_argument("--length", type=int, default=3, help="maximum bracket length")
    p.add_argument("--k", type=int, default=0, choices=(0, 1),
                   help="extra smoothness orders to require")

    p = cmd("synth-bracket", _cmd_synth_bracket, "control word realizing a bracket direction")
    p.add_argument("bracket", help="formal bracket, e.g. \"[X1,X2]\"")
    p.add_argument("--s", type=float, required=True, help="total word duration")
    p.add_argument("--alpha", default=None, help="ordinary control value a, space-separated")

    p = cmd("verify-order", _cmd_verify_order, "epsilon-ladder fit of the expansion order")
    p.add_argument("--control", required=True)
    p.add_argument("--bracket", required=True)
    p.add_argument("--at", type=float, required=True, help="insertion parameter s")

    p = cmd("check-mp", _cmd_check_mp, "first order conditions and complementarity")
    p.add_argument("--control", required=True)
    p.add_argument("--multiplier", required=True, help="file with a [multiplier] section")

    p = cmd("check-ho", _cmd_check_ho, "higher order and differentiated conditions")
    p.add_argument("--control", required=True)
    p.add_argument("--multiplier", required=True)
    p.add_argument("--bracket", action="append", default=None,
                   help="explicit bracket (repeatable); default enumerates a pool")
    p.add_argument("--depth", type=int, default=3, help="pool depth when enumerating")

    p = cmd("find-multiplier", _cmd_find_multiplier, "search for a feasible multiplier ray")
    p.add_argument("--control", required=True)
    p.add_argument("--fix-lambda", type=int, default=None, choices=(0, 1),
                   help="constrain the cost multiplier during the search")

    p = cmd("rank", _cmd_rank, "pointwise and Kalman rank conditions")
    p.add_argument("--at", default=None, help="state point, space-separated; default xcheck")
    p.add_argument("--alpha", default=None, help="ordinary control point for I.2")
    p.add_argument("--depth", type=int, default=3)

    p = cmd("classify", _cmd_classify, "fully-impulsive classification, options (a)-(c)")
    p.add_argument("--control", required=True)
    p.add_argument("--multiplier", required=True)
    p.add_argument("--depth", type=int, default=3)

    return parser


def _make_config(args) -> RunConfig:
    overrides = {}
    if args.grid is not None:
        overrides["grid"] = args.grid
    if args.tol_eq is not None:
        overrides["tol_eq"] = args.tol_eq
    if args.tol_ineq is not None:
        overrides["tol_ineq"] = args.tol_ineq
    if args.ladder is not None:
        overrides["ladder"] = args.ladder
    try:
        return replace(RunConfig(), **overrides)
    except ValueError as e:
        raise ParseError(str(e), 1, 1) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _make_config(args)
        return args.handler(args, config)
    except ParseError as e:
        sys.stderr.write(f"impmp: {e}\n")
        return 2
    except ImpulsiveMPError as e:
        sys.stderr.write(f"impmp {args.command}: {type(e).__name__}: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"impmp {args.command}: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
