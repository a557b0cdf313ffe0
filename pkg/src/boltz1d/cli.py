"""Command-line entry point: ``boltz1d run|check-kernel|verify|oracle``.

Exit status is 0 only when every inequality the command asserts holds; 1 when
one fails; 2 for unusable input (bad config, unknown lemma).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_checks
from .config import ConfigError, load_config, preflight
from .inequality_lab import (DEFAULT_SEED, GROWTH_MODES, LEMMAS, ORACLE_GRID, GrowthBoundSpec,
                             maximal_solution_oracle, run_trials, verify_growth_oracle)
from .integrator import run
from .kernel import validate_hypotheses
from .output import _jsonable, emit_outputs

log = logging.getLogger("boltz1d")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _dump(obj, path=None):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output:
        cfg.values["output"]["directory"] = args.output
    pre = preflight(cfg)
    t0 = time.time()
    traj = run(cfg)
    checks = run_checks(traj, cfg) if traj.records else []
    written = emit_outputs(traj, cfg, checks=checks, extra={"preflight": pre})
    ok = traj.status == "completed" and all(c.holds for c in checks)
    log.info("run finished in %.1f s (%s)", time.time() - t0, traj.status)
    for c in checks:
        print(f"{'PASS' if c.holds else 'FAIL'}  {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g}")
    if traj.error:
        print(f"ERROR {traj.error}")
    print(f"outputs: {written.get('json')}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_check_kernel(args) -> int:
    cfg = load_config(args.config)
    kernel = cfg.kernel()
    rep = validate_hypotheses(kernel, quad=cfg.quadrature())
    out = {"kernel": kernel.label, "params": kernel.params, "R0": kernel.R0,
           "declared_delta": kernel.delta, "phi_l1": kernel.phi_l1,
           "sup_bound": kernel.sup_bound, **rep.as_dict()}
    _dump(out, args.json)
    ok = rep.h1_holds and rep.h2_holds and rep.declared_delta_admissible
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    names = LEMMAS if args.lemma == "all" else (args.lemma,)
    if args.lemma != "all" and args.lemma not in LEMMAS:
        print(f"unknown lemma {args.lemma!r}; choose from {', '.join(LEMMAS)} or all", file=sys.stderr)
        return EXIT_USAGE
    reports = []
    for name in names:
        rep = run_trials(name, args.trials, args.seed)
        log.info("%s: %d checks, %d failures, %.1f s", name, rep.checks, rep.failures, rep.runtime)
        reports.append({"lemma": name, "lhs": rep.worst_lhs, "rhs": rep.worst_rhs,
                        "margin": rep.worst_margin, "trials": rep.trials, "seed": rep.seed,
                        "checks": rep.checks, "failures": rep.failures, "holds": rep.holds,
                        "runtime_s": round(rep.runtime, 3), "failed_examples": rep.failed})
    ok = all(r["holds"] for r in reports)
    _dump({"seed": args.seed, "trials": args.trials, "all_hold": ok, "lemmas": reports}, args.json)
    return EXIT_OK if ok else EXIT_FAIL


def _a_profile(text: str, t: np.ndarray) -> np.ndarray:
    """a(t) from 'const:A', 'decay:A,lam' (A e^{-lam t}), 'power:A,p' (A (1+t)^-p) or 'table:v0,v1,..'."""
    kind, _, rest = text.partition(":")
    vals = [float(s) for s in rest.split(",") if s.strip()]
    if kind == "const" and len(vals) == 1:
        return np.full_like(t, vals[0])
    if kind == "decay" and len(vals) == 2:
        return vals[0] * np.exp(-vals[1] * t)
    if kind == "power" and len(vals) == 2:
        return vals[0] * (1.0 + t) ** (-vals[1])
    if kind == "table" and len(vals) >= 2:
        return np.interp(t, np.linspace(t[0], t[-1], len(vals)), vals)
    raise ValueError(f"cannot read a = {text!r}")


def read_growth_spec(path):
    """[growth] block: mode, c, phi0, a, c2, alpha, eps, m, t_end, n_t."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(Path(path).read_text(encoding="utf-8"), source=str(path))
    allowed = {"mode", "c", "phi0", "a", "c2", "alpha", "eps", "m", "t_end", "n_t"}
    errs = [f"[{s}]: unknown section" for s in cp.sections() if s != "growth"]
    sec = cp["growth"] if cp.has_section("growth") else {}
    errs += [f"growth.{k}: unknown key" for k in sec if k not in allowed]
    if errs:
        raise ConfigError(errs)
    g = lambda k, d: sec.get(k, d)
    t = np.linspace(0.0, float(g("t_end", ORACLE_GRID[-1])), int(g("n_t", ORACLE_GRID.size)))
    mode = g("mode", "bony").strip()
    if mode not in GROWTH_MODES:
        raise ConfigError([f"growth.mode must be one of {', '.join(GROWTH_MODES)}"])
    try:
        a = _a_profile(g("a", "const:0"), t) if mode == "bony" else None
        spec = GrowthBoundSpec(mode, c=float(g("c", 1.0)), phi0=float(g("phi0", 1.0)), a=a,
                               c2=float(g("c2", 0.0)), alpha=float(g("alpha", 0.5)),
                               eps=float(g("eps", 1.0)), m=float(g("m", 1.0)))
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    return spec, t


def cmd_oracle(args) -> int:
    spec, t = read_growth_spec(args.spec)
    res = verify_growth_oracle(spec, t)
    orc = maximal_solution_oracle(spec, t)
    out = {"mode": spec.mode, "holds": res.holds, "log_oracle": res.lhs, "log_bound": res.rhs,
           "margin": res.margin, **res.details,
           "oracle_final": float(orc.values[-1]), "t_end": float(t[-1]), "n_t": int(t.size)}
    _dump(out, args.json)
    return EXIT_OK if res.holds else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boltz1d", description="1D-in-space Boltzmann experiments")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a configured experiment and check it")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="override output.directory")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("check-kernel", help="validate kernel hypotheses")
    k.add_argument("config")
    k.add_argument("--json", help="also write the report here")
    k.set_defaults(func=cmd_check_kernel)

    v = sub.add_parser("verify", help="randomized checks of the functional estimates")
    v.add_argument("lemma", help=f"one of {', '.join(LEMMAS)} or all")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=DEFAULT_SEED)
    v.add_argument("--json", help="also write the report here")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="maximal solution of a growth inequality vs its bound")
    o.add_argument("spec", help="INI file with a [growth] block")
    o.add_argument("--json", help="also write the report here")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
