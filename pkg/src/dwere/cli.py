"""Command-line driver: ``dwere simulate | estimate <suite> | surgery | construct``.

Parameters come from built-in defaults, then an optional ``--config`` file
(``key = value`` under ``[common]`` and a section named after the command,
e.g. ``[estimate.rate]``), then flags.  Every run that writes to ``--out``
also writes ``config.ini``, from which it can be replayed.

Exit codes: 0 success, 1 usage or config error, 2 runtime error,
3 a verification that did not pass (inconclusive or failed).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

from dwere import constructions as C
from dwere import env as E
from dwere import surgery as S
from dwere import walk as W
from dwere._rng import trial_seed
from dwere.errors import DwereError, PreconditionError

log = logging.getLogger("dwere")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_UNVERIFIED = 0, 1, 2, 3
EXIT_INTERRUPTED = 130


class ConfigError(Exception):
    pass


# -- value parsers --------------------------------------------------------------------------

def parse_count(text) -> int:
    """Integer that may be written as ``1e6``."""
    s = str(text).strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        v = float(s)
    except ValueError:
        raise ConfigError(f"not a count: {text!r}") from None
    if not math.isfinite(v) or v != int(v):
        raise ConfigError(f"not a whole number: {text!r}")
    return int(v)


def parse_fraction(text) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def parse_list(conv):
    def f(text):
        items = [t for t in str(text).replace(" ", "").split(",") if t]
        if not items:
            raise ConfigError("empty list")
        return [conv(t) for t in items]
    return f


def parse_weights(text):
    s = str(text).strip()
    if s == "uniform":
        return "uniform"
    return parse_list(lambda t: float(Fraction(t)))(s)


def parse_bool(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_window(text):
    try:
        lo, hi = (int(v) for v in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"window must be lo:hi, got {text!r}") from None
    return lo, hi


def parse_quad(text):
    vals = parse_list(int)(text)
    if len(vals) != 4:
        raise ConfigError(f"--raise needs a,b,ta,tb, got {text!r}")
    return vals


# name -> (parser, default); names double as config keys and flag dests
COMMON = {
    "L": (parse_count, 2),
    "M": (parse_count, 2),
    "weights": (parse_weights, "uniform"),
    "seed": (parse_count, 0),
    "trials": (parse_count, 10**5),
    "max_steps": (parse_count, 10**5),
    "out": (str, None),
    "workers": (parse_count, 1),
}

PARAMS = {
    "simulate": {
        "example_paper": (parse_bool, False),
        "construct": (str, None),
        "k": (parse_count, 1),
        "window": (parse_window, None),
        "env": (str, None),
        "target": (parse_count, None),
    },
    "estimate.rate": {
        "lambda": (parse_list(parse_fraction), [Fraction(0), Fraction(1, 4), Fraction(1, 2)]),
        "n": (parse_list(parse_count), [16, 32, 64]),
        "theta": (float, None),
    },
    "estimate.returns": {"kmax": (parse_count, 3)},
    "estimate.annulus": {"kmax": (parse_count, 15), "fit_lo": (parse_count, 5)},
    "estimate.subadd": {
        "lambda": (parse_list(parse_fraction), [Fraction(1, 4)]),
        "n": (parse_list(parse_count), [64]),
        "m": (parse_count, None),
        "coupled": (parse_bool, False),
    },
    "estimate.concavity": {
        "lambda": (parse_list(parse_fraction), [Fraction(0), Fraction(1, 2), Fraction(1)]),
        "n": (parse_list(parse_count), [16, 32, 64]),
    },
    "estimate.mainbound": {
        "lambda": (parse_list(parse_fraction), [Fraction(1, 2)]),
        "n": (parse_list(parse_count), [16, 32, 64]),
    },
    "surgery": {
        "lambda": (parse_list(parse_fraction), [Fraction(1)]),
        "n": (parse_list(parse_count), [400]),
        "seeds": (parse_count, 10),
        "verify_only": (str, None),
        "ell": (parse_fraction, None),
        "m": (parse_fraction, None),
        "raise_": (parse_quad, None),
        "env": (str, None),
        "budget": (parse_count, None),
    },
    "construct": {
        "kind": (str, "k-returns"),
        "k": (parse_count, 1),
        "start": (parse_count, 0),
        "n": (parse_list(parse_count), [4]),
        "lo": (parse_count, 0),
        "hi": (parse_count, 0),
    },
}

SUITES = ("rate", "returns", "annulus", "subadd", "concavity", "mainbound")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common_flags(p):
    p.add_argument("--L", dest="L")
    p.add_argument("--M", dest="M")
    p.add_argument("--weights", help="comma-separated weights or 'uniform'")
    p.add_argument("--seed")
    p.add_argument("--trials", help="accepts scientific notation, e.g. 1e6")
    p.add_argument("--max-steps", dest="max_steps")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers")
    p.add_argument("--config", help="config file (key = value with sections)")
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="dwere", description="Deterministic walks in excited random environments.")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one walk")
    _common_flags(p)
    p.add_argument("--example-paper", dest="example_paper", action="store_const", const="true")
    p.add_argument("--construct", choices=["k-returns"])
    p.add_argument("--k")
    p.add_argument("--window", help="lo:hi sites to materialize")
    p.add_argument("--env", help="read the environment from a file")
    p.add_argument("--target", help="stop on reaching this site")

    p = sub.add_parser("estimate", help="Monte Carlo estimators and checks")
    est = p.add_subparsers(dest="suite", required=True, parser_class=_Parser)
    for name in SUITES:
        q = est.add_parser(name)
        _common_flags(q)
        keys = PARAMS[f"estimate.{name}"]
        if "lambda" in keys:
            q.add_argument("--lambda", dest="lambda")
        if "n" in keys:
            q.add_argument("--n")
        if "kmax" in keys:
            q.add_argument("--kmax")
        if name == "annulus":
            q.add_argument("--fit-lo", dest="fit_lo")
        if name == "rate":
            q.add_argument("--theta", help="use xi(n) = n^theta")
        if name == "subadd":
            q.add_argument("--m")
            q.add_argument("--coupled", action="store_const", const="true")

    p = sub.add_parser("surgery", help="backtrack elimination and stack raising")
    _common_flags(p)
    p.add_argument("--lambda", dest="lambda")
    p.add_argument("--n")
    p.add_argument("--seeds")
    p.add_argument("--verify-only", dest="verify_only", nargs=2, metavar=("BEFORE", "AFTER"))
    p.add_argument("--ell")
    p.add_argument("--m")
    p.add_argument("--raise", dest="raise_", metavar="a,b,ta,tb")
    p.add_argument("--env", help="environment file for --raise")
    p.add_argument("--budget")

    p = sub.add_parser("construct", help="write a construction as a patch file")
    _common_flags(p)
    p.add_argument("kind", nargs="?", choices=["k-returns", "trap", "ballistic", "blockers", "example"])
    p.add_argument("--k")
    p.add_argument("--start")
    p.add_argument("--n")
    p.add_argument("--lo")
    p.add_argument("--hi")
    return top


def section_name(args) -> str:
    return f"estimate.{args.suite}" if args.command == "estimate" else args.command


def resolve(args) -> dict:
    """Defaults, then the config file, then flags; unknown config keys are errors."""
    section = section_name(args)
    spec = dict(COMMON)
    spec.update(PARAMS[section])
    raw = {k: d for k, (_, d) in spec.items()}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        if not cp.read(cfg_path):
            raise ConfigError(f"cannot read config file {cfg_path}")
        for sec in cp.sections():
            if sec not in ("common", section) and sec not in PARAMS:
                raise ConfigError(f"unknown config section [{sec}]")
        for sec in ("common", section):
            if not cp.has_section(sec):
                continue
            allowed = COMMON if sec == "common" else spec
            for key, value in cp.items(sec):
                key = key.replace("-", "_")
                if key == "raise":
                    key = "raise_"
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
                raw[key] = spec[key][0](value)
    for key, (conv, _) in spec.items():
        v = getattr(args, key, None)
        if v is not None:
            if key == "verify_only":
                raw[key] = list(v)
            else:
                raw[key] = conv(v)
    validate(raw)
    return raw


def validate(cfg: dict) -> None:
    if cfg["L"] < 1:
        raise ConfigError("L must be at least 1")
    if cfg["M"] < 1:
        raise ConfigError("M must be at least 1")
    if cfg["trials"] < 1:
        raise ConfigError("trials must be at least 1")
    if cfg["max_steps"] < 0:
        raise ConfigError("max_steps must be nonnegative")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    for lam in cfg.get("lambda") or []:
        if lam < 0:
            raise ConfigError("lambda must be nonnegative")
    for n in cfg.get("n") or []:
        if n < 0:
            raise ConfigError("n must be nonnegative")
    distribution(cfg)


def distribution(cfg) -> E.CookieDistribution:
    if cfg["weights"] == "uniform":
        return E.uniform(cfg["L"])
    try:
        return E.make_distribution(cfg["L"], cfg["weights"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def snapshot(cfg: dict, args) -> str:
    section = section_name(args)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["common"] = {k: _fmt(cfg[k]) for k in COMMON if cfg[k] is not None and k != "out"}
    own = {}
    for k in PARAMS[section]:
        v = cfg[k]
        if v is None:
            continue
        if k == "window":
            v = f"{v[0]}:{v[1]}"
        own["raise" if k == "raise_" else k] = _fmt(v)
    cp[section] = own
    buf = io.StringIO()
    cmd = "estimate " + args.suite if args.command == "estimate" else args.command
    buf.write(f"# replay: dwere {cmd} --config config.ini\n")
    cp.write(buf)
    return buf.getvalue()


class Output:
    """Writes named files into the output directory, or nowhere when ``out`` is unset."""

    def __init__(self, out):
        self.dir = Path(out) if out else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        if self.dir:
            (self.dir / name).write_text(text)

    def csv(self, name: str, rows: list, header: dict = None) -> None:
        if not self.dir or not rows:
            return
        buf = io.StringIO()
        if header:
            for k, v in header.items():
                buf.write(f"# {k}={v}\n")
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(v) for k, v in r.items()})
        self.write(name, buf.getvalue())

    def json(self, name: str, obj) -> None:
        self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, Fraction):
        return str(o)
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(type(o).__name__)


def _header(cfg, extra=None) -> dict:
    h = {"master_seed": cfg["seed"], "L": cfg["L"], "M": cfg["M"], "weights": _fmt(cfg["weights"])}
    h.update(extra or {})
    return h


# -- commands --------------------------------------------------------------------------------

def cmd_simulate(cfg, out: Output, state: dict) -> int:
    dist = distribution(cfg)
    M = cfg["M"]
    if cfg["example_paper"]:
        env = C.example_environment(cfg["seed"])
        steps = len(C.EXAMPLE_TRAJECTORY) - 1
        outcome = W.run(env, steps)
    else:
        if cfg["env"]:
            env = E.load(cfg["env"])
        else:
            window = cfg["window"] or (-dist.L * cfg["max_steps"] - dist.L, dist.L * cfg["max_steps"] + dist.L)
            if cfg["construct"] == "k-returns":
                k = cfg["k"]
                if dist.L < 2 or M < 2:
                    raise ConfigError("the k-returns construction needs L >= 2 and M >= 2")
                _, _, ps = C.build_k_returns(k)
                window = cfg["window"] or (-2 * k - dist.L, 2 * k + dist.L)
                env = ps.apply(E.sample_environment(dist, M, cfg["seed"], window))
            else:
                env = E.sample_environment(dist, M, cfg["seed"], window)
        stop = W.HittingQuery.threshold(cfg["target"]) if cfg["target"] is not None else None
        outcome = W.run(env, cfg["max_steps"], stop_on=stop)
    out.write("environment.env", E.dumps(env))
    out.write("trajectory.txt", W.dump_trajectory(outcome))
    out.write("outcome.json", W.outcome_json(outcome) + "\n")
    print(f"stop_reason: {outcome.stop_reason}")
    print(f"steps: {outcome.steps}")
    d0 = outcome.D0
    print(f"D0: {d0 if d0 is not None else 'undetermined'}")
    if len(outcome.trajectory) <= 200:
        print("trajectory: " + ",".join(str(x) for x in outcome.trajectory))
    return EXIT_OK


def cmd_estimate(cfg, suite, out: Output, state: dict) -> int:
    from dwere import estimate as X
    from dwere.estimate import suites as SU

    dist = distribution(cfg)
    M, trials, seed, workers = cfg["M"], cfg["trials"], cfg["seed"], cfg["workers"]
    header = _header(cfg, {"suite": suite, "trials": trials})
    code = EXIT_OK

    if suite == "rate" or suite == "concavity":
        scaling = X.Scaling(cfg.get("theta")) if cfg.get("theta") else X.IDENTITY
        if scaling is not X.IDENTITY:
            X.events.check_scaling(scaling)
        rows = state.setdefault("rows", [])
        state["flush"] = lambda partial: out.csv(
            "rate.csv", rows, dict(header, partial=partial, scaling=scaling.name))

        def progress(cell):
            r = cell.report.row()
            r["rate"] = cell.rate if cell.finite else cell.rate_upper
            r["rate_is_bound"] = not cell.finite
            rows.append(r)
            log.info("lambda=%s n=%d p_hat=%.3g", cell.lam, cell.n, cell.report.p_hat)

        table = X.estimate_rate_function(dist, M, cfg["lambda"], cfg["n"], trials, seed,
                                         scaling=scaling, workers=workers, progress=progress)
        state["flush"](False)
        summary = {"trend": {str(l): table.trend(l) for l in table.lambdas}}
        for r in rows:
            print(f"lambda={r['lambda']} n={r['n']} p_hat={r['p_hat']:.6g} rate={r['rate']:.6g}"
                  + (" (bound)" if r["rate_is_bound"] else ""))
        if suite == "concavity":
            rep = X.check_concavity(table)
            summary["concavity"] = {
                "max_violation": {str(n): v for n, v in rep.max_violation.items()},
                "significant": [vars(v) for v in rep.significant],
                "shrinking": rep.shrinking,
            }
            print(f"significant violations: {len(rep.significant)}; shrinking: {rep.shrinking}")
            if rep.significant and not rep.shrinking:
                code = EXIT_UNVERIFIED
        out.json("summary.json", {"config": header, **summary})
        return code

    if suite == "returns":
        t = X.estimate_return_distribution(dist, M, cfg["kmax"], trials, seed,
                                           max_steps=cfg["max_steps"], workers=workers)
        rows = t.rows()
        out.csv("returns.csv", rows, header)
        out.json("summary.json", {"config": header, "infinite": t.infinite, "beyond": t.beyond,
                                  "indeterminate": t.indeterminate})
        for r in rows:
            print(f"k={r['k']} p_hat={r['p_hat']:.6g} lower={r['lower_bound']:.3g} upper={r['upper_bound']:.6g}")
        print(f"infinite={t.infinite} beyond={t.beyond} indeterminate={t.indeterminate}")
        return code

    if suite == "annulus":
        rep = X.estimate_annulus_decay(dist, M, cfg["kmax"], trials, seed, max_steps=cfg["max_steps"],
                                       fit_range=(cfg["fit_lo"], cfg["kmax"]), workers=workers)
        out.csv("annulus.csv", rep.rows(), header)
        fit = rep.fit
        summary = {"config": header, "monotone_trialwise": rep.monotone_trialwise(),
                   "flagged": rep.flagged}
        if fit is not None:
            summary["fit"] = {"slope": fit.slope, "slope_ci95": fit.slope_ci95, "c_hat": fit.c_hat,
                              "c_ci95": fit.c_ci95, "residuals": fit.residuals, "ks": fit.ks}
        out.json("summary.json", summary)
        for r in rep.rows():
            print(f"k={r['k']} p_hat={r['p_hat']:.6g}")
        if fit is not None:
            print(f"c_hat={fit.c_hat:.4g} 95% CI {fit.c_ci95[0]:.4g}..{fit.c_ci95[1]:.4g}")
            if not fit.slope_ci95[1] < 0:
                code = EXIT_UNVERIFIED
        return code

    if suite == "subadd":
        rows = []
        verdicts = []
        state["flush"] = lambda partial: out.csv("subadd.csv", rows, dict(header, partial=partial))
        for i, lam in enumerate(cfg["lambda"]):
            for j, n in enumerate(cfg["n"]):
                m = cfg["m"] if cfg["m"] is not None else n
                rep = X.check_subadditivity(dist, M, lam, n, m, trials, X.cell_seed(seed, i, j),
                                            coupled=cfg["coupled"], workers=workers)
                rows.append({"lambda": str(lam), "n": n, "m": m, "p_sum": rep.p_sum, "p_n": rep.p_n,
                             "p_m": rep.p_m, "margin": rep.margin, "se_independent": rep.se_independent,
                             "se_coupled": rep.se_coupled, "verdict": rep.verdict})
                verdicts.append(rep.verdict)
                print(f"lambda={lam} n={n} m={m} p(A_n+m)={rep.p_sum:.4g} "
                      f"p(A_n)p(A_m)={rep.product:.4g} {rep.verdict}")
        state["flush"](False)
        if any(v != SU.PASS for v in verdicts):
            code = EXIT_UNVERIFIED
        return code

    if suite == "mainbound":
        rows = []
        state["flush"] = lambda partial: out.csv("mainbound.csv", rows, dict(header, partial=partial))
        verdicts = []
        for i, lam in enumerate(cfg["lambda"]):
            def progress(c, lam=lam):
                rows.append({"lambda": str(lam), "n": c.n, "hit": c.hit, "reach": c.reach,
                             "trials": c.trials, "ratio": c.ratio, "scaled": c.scaled,
                             "scaled_se": c.scaled_se, "inclusion_holds": c.inclusion_holds})
            rep = X.check_main_bound(dist, M, lam, cfg["n"], trials, X.cell_seed(seed, i),
                                     workers=workers, progress=progress)
            verdicts.append(rep.verdict)
            print(f"lambda={lam} verdict={rep.verdict} log C={rep.log_C:.4g}")
            for c in rep.cells:
                print(f"  n={c.n} ratio={c.ratio:.4g} log(ratio)/sqrt(n)={c.scaled:.4g}")
        state["flush"](False)
        if any(v != SU.PASS for v in verdicts):
            code = EXIT_UNVERIFIED
        return code
    raise ConfigError(f"unknown suite {suite}")


def cmd_surgery(cfg, out: Output, state: dict) -> int:
    dist = distribution(cfg)
    M = cfg["M"]
    if cfg["verify_only"]:
        if cfg["ell"] is None or cfg["m"] is None:
            raise ConfigError("--verify-only needs --ell and --m")
        before, after = (E.load(p) for p in cfg["verify_only"])
        params = S.SubenvParams(cfg["ell"], cfg["m"])
        try:
            conds = S.subenvironment_conditions(after, before, params, budget=cfg["max_steps"])
        except DwereError as exc:
            print(f"not in domain: {exc}")
            return EXIT_UNVERIFIED
        ok = all(conds.values())
        out.json("verify.json", {"conditions": conds, "subenvironment": ok})
        for k, v in conds.items():
            print(f"{k}: {v}")
        print("PASS" if ok else "FAIL")
        return EXIT_OK if ok else EXIT_UNVERIFIED
    if cfg["raise_"]:
        if not cfg["env"]:
            raise ConfigError("--raise needs --env")
        env = E.load(cfg["env"])
        a, b, ta, tb = cfg["raise_"]
        res = S.raise_stack(env, a, b, ta, tb)
        out.write("after.env", E.dumps(res.after))
        out.json("surgery.json", res.record())
        print(f"modified_sites: {res.modified_sites}")
        print(f"t_saved: {res.t_saved}")
        print("checks: " + ", ".join(f"{k}={v}" for k, v in res.checks.items()))
        return EXIT_OK
    lam, n = cfg["lambda"][0], cfg["n"][0]
    rows = []
    state["flush"] = lambda partial: out.csv("surgery.csv", rows,
                                             _header(cfg, {"lambda": lam, "n": n, "partial": partial}))
    failures = 0
    for s in range(cfg["seeds"]):
        inst_seed = int(trial_seed(cfg["seed"], s))
        w = S.favorable_instance(dist, M, lam, n, inst_seed)
        res = S.eliminate_backtracking(w, lam, n, budget=cfg["budget"])
        row = {"seed": inst_seed, "success": res.success, "iterations": res.iterations}
        if res.success:
            row.update({"t_saved": res.t_saved, **res.checks, "reason": ""})
            print(f"seed {inst_seed}: PASS iterations={res.iterations} t_saved={res.t_saved}")
            if out.dir:
                out.json(f"instance_{s}.json", res.record())
        else:
            failures += 1
            row.update({"t_saved": "", "subenv": "", "nonbacktracking": "", "traj_splice": "",
                        "reason": res.reason})
            print(f"seed {inst_seed}: FAIL {res.reason} obstruction={res.obstruction}")
            out.json(f"instance_{s}.json", res.record())
        if out.dir:
            out.write(f"instance_{s}_before.env", E.dumps(res.before))
            out.write(f"instance_{s}_after.env",
                      E.dumps(res.after if res.success else res.current))
        rows.append(row)
    state["flush"](False)
    print(f"success rate: {cfg['seeds'] - failures}/{cfg['seeds']}")
    return EXIT_OK


def cmd_construct(cfg, kind, out: Output, state: dict) -> int:
    dist = distribution(cfg)
    M, L = cfg["M"], dist.L
    if kind == "k-returns":
        _, _, ps = C.build_k_returns(cfg["k"])
    elif kind == "trap":
        ps = C.build_trap(cfg["start"], L)
    elif kind == "ballistic":
        ps = C.build_ballistic(cfg["n"][0], L)
    elif kind == "blockers":
        ps = C.build_blockers(cfg["lo"], cfg["hi"])
    elif kind == "example":
        ps = C.EXAMPLE_PATCH
    else:
        raise ConfigError(f"unknown construction {kind}")
    if ps.max_abs_jump() > L:
        raise ConfigError(f"construction needs jumps up to {ps.max_abs_jump()} but L = {L}")
    text = E.header_line(L, M, cfg["seed"], min(ps.sites), max(ps.sites)) + "\n" + ps.to_text(M)
    out.write("patch.env", text)
    sys.stdout.write(text)
    print(f"# probability bound: {ps.probability_bound(dist, M):.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    state: dict = {}
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        out = Output(cfg["out"])
        out.write("config.ini", snapshot(cfg, args))
        if args.command == "simulate":
            return cmd_simulate(cfg, out, state)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.suite, out, state)
        if args.command == "surgery":
            return cmd_surgery(cfg, out, state)
        return cmd_construct(cfg, args.kind or cfg["kind"], out, state)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        if "flush" in state:
            state["flush"](True)
            print("interrupted; partial results written", file=sys.stderr)
        return EXIT_INTERRUPTED
    except (DwereError, ValueError, IndexError, MemoryError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
