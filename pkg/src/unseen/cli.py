"""Command-line front end.

Every command parses its arguments, calls the library, and writes either
CSV (with a ``#`` metadata header) or JSON (metadata under ``"metadata"``).
Exit status is 1 for bad configuration and 2 when a numerical guard trips.

CSV columns per command:

* ``simulate``: space separated ``time state`` (path),
  ``time magnitude [post_state]`` (``--negjumps``) or one magnitude per
  line (``--draws``), the formats of :mod:`unseen.formats`;
* ``transition``: ``x,y,p``; the largest omitted row mass is in the header;
* ``equilibrium``: ``n,pmf,tail``;
* ``bounds``: ``kind,t,theta,mu,tau_id,m,exact,bound,ratio``;
* ``linkfun``: ``theta,L,dL,d2L`` and, with ``--asymptotic``,
  ``L_asym,dL_asym,d2L_asym``;
* ``replicate``: ``replicate,theta_hat,z``.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .bounds import gini_bound, kolmogorov_bound, moment_bound
from .chain import (ChainParams, ConditioningError, StateDistribution, equilibrium,
                    return_time_mean, tail_R, transition, transition_matrix)
from .formats import (dumps_json, metadata_header, read_magnitudes, read_record, write_csv,
                      write_magnitudes, write_path, write_record)
from .infer import asymptotic_se, estimate_theta, replicate_estimates, sample_magnitudes
from .predict import UnderflowError, answer_query, query_from_dict
from .sim import extract_negjumps, sample_path
from .specfun import ConvergenceError, eval_L, eval_L_asymptotic, eval_L_series

COMMANDS = ("simulate", "transition", "equilibrium", "bounds", "estimate", "predict", "linkfun", "replicate")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--theta", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-12, help="truncation tolerance, in (0, 1e-6]")
    g.add_argument("--out", default="-", help="output file, '-' for stdout")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--no-timestamp", action="store_true", help="omit the creation time from the header")

    initial = _Parser(add_help=False)
    initial.add_argument("--initial", default="point:0",
                         help="point:X, geometric:P:N or equilibrium")

    p = _Parser(prog="unseen", description="Birth/mass-death chain toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common, initial], help="simulate a path or magnitude draws")
    s.add_argument("--horizon", type=float, default=10.0)
    s.add_argument("--negjumps", action="store_true", help="emit the negative-jump record")
    s.add_argument("--hidden", action="store_true", help="drop post-jump states from the record")
    s.add_argument("--draws", type=int, help="emit this many i.i.d. magnitudes instead of a path")

    s = sub.add_parser("transition", parents=[common], help="tabulate p_t(x, y)")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--x-max", type=int, default=10)
    s.add_argument("--y-max", type=int)
    s.add_argument("--strict", action="store_true",
                   help="evaluate entry by entry with the precision guard (needs --y-max)")

    s = sub.add_parser("equilibrium", parents=[common], help="tabulate the equilibrium law")
    s.add_argument("--n-max", type=int)
    s.add_argument("--return-state", type=int, default=1)

    s = sub.add_parser("bounds", parents=[common, initial], help="exact distances and their bounds")
    s.add_argument("--times", type=_floats, default=[0.0, 0.25, 1.0, 4.0])
    s.add_argument("--moments", type=_ints, default=[1, 2, 3])

    s = sub.add_parser("estimate", parents=[common], help="estimate theta from magnitudes")
    s.add_argument("--input", required=True)
    s.add_argument("--horizon", type=float, help="observation horizon; enables mu_hat for record files")

    s = sub.add_parser("predict", parents=[common], help="answer a JSON prediction query")
    s.add_argument("--query", required=True)
    s.add_argument("--xi", type=int)

    s = sub.add_parser("linkfun", parents=[common], help="tabulate L, L', L''")
    s.add_argument("--theta-min", type=float, default=0.0)
    s.add_argument("--theta-max", type=float, default=20.0)
    s.add_argument("--step", type=float, default=0.1)
    s.add_argument("--asymptotic", action="store_true", help="add the large-theta expansion")
    s.add_argument("--order", type=int, default=5)

    s = sub.add_parser("replicate", parents=[common], help="replicated estimation study")
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--reps", type=int, default=500)
    return p


def _params(args) -> ChainParams | None:
    if args.lam is not None and args.theta is not None:
        raise ConfigError("give --lambda or --theta, not both")
    if args.mu is not None and not args.mu > 0:
        raise ConfigError("--mu must be positive")
    if args.lam is not None:
        return ChainParams(args.lam, args.mu)
    if args.theta is not None:
        if not args.theta > 0:
            raise ConfigError("--theta must be positive")
        return ChainParams.from_theta(args.theta, args.mu)
    return None


def _need_params(args) -> ChainParams:
    p = _params(args)
    if p is None:
        raise ConfigError(f"{args.command} needs --lambda or --theta")
    return p


def _initial(spec: str, params: ChainParams) -> StateDistribution:
    parts = spec.split(":")
    try:
        if parts[0] == "point":
            return StateDistribution.point(int(parts[1]))
        if parts[0] == "geometric":
            return StateDistribution.geometric(float(parts[1]), int(parts[2]))
        if parts[0] == "equilibrium":
            return StateDistribution.equilibrium(params)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad --initial {spec!r}: {exc}") from None
    raise ConfigError(f"unknown --initial {spec!r}")


def _meta(args, params: ChainParams | None, extra: dict | None = None) -> dict:
    meta = {"command": args.command, "version": __version__}
    if params is not None:
        meta.update({"lambda": params.lam, "mu": params.mu, "theta": params.theta})
    meta.update({"seed": args.seed, "tol": args.tol})
    if extra:
        meta.update(extra)
    return meta


def _emit(args, meta: dict, columns: list[str], rows, doc=None, text_body: str | None = None) -> str:
    """Render one output; ``doc`` is the JSON payload, ``rows`` the CSV body."""
    if args.format == "json":
        payload = {"metadata": dict(meta)}
        if not args.no_timestamp:
            payload["metadata"]["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        payload["data"] = doc if doc is not None else [dict(zip(columns, r)) for r in rows]
        return dumps_json(payload) + "\n"
    buf = io.StringIO()
    for line in metadata_header(meta, timestamp=not args.no_timestamp):
        buf.write(line + "\n")
    if text_body is not None:
        buf.write(text_body)
    else:
        write_csv(buf, columns, rows)
    return buf.getvalue()


def cmd_simulate(args) -> str:
    params = _need_params(args)
    if args.draws is not None:
        if args.draws < 1:
            raise ConfigError("--draws must be >= 1")
        d = sample_magnitudes(params.theta, args.draws, seed=args.seed)
        meta = _meta(args, params, {"draws": args.draws})
        buf = io.StringIO()
        write_magnitudes(d, buf)
        return _emit(args, meta, ["magnitude"], ([int(v)] for v in d), doc=d, text_body=buf.getvalue())
    if not args.horizon > 0:
        raise ConfigError("--horizon must be positive")
    init = _initial(args.initial, params)
    path = sample_path(params, init, args.horizon, args.seed)
    meta = _meta(args, params, {"horizon": args.horizon, "initial": args.initial})
    buf = io.StringIO()
    if args.negjumps:
        rec = extract_negjumps(path)
        write_record(rec, buf, hidden=args.hidden)
        doc = {"times": rec.times, "magnitudes": rec.magnitudes}
        if not args.hidden:
            doc["post_states"] = rec.post_states
        return _emit(args, meta, [], [], doc=doc, text_body=buf.getvalue())
    write_path(path, buf)
    doc = {"jump_times": path.jump_times, "states": path.states, "horizon": path.horizon}
    return _emit(args, meta, [], [], doc=doc, text_body=buf.getvalue())


def cmd_transition(args) -> str:
    params = _need_params(args)
    if args.t < 0:
        raise ConfigError("--t must be non-negative")
    if args.strict:
        if args.y_max is None:
            raise ConfigError("--strict needs --y-max")
        P = np.array([[transition(params, x, y, args.t) for y in range(args.y_max + 1)]
                      for x in range(args.x_max + 1)])
        rem = np.array([tail_R(params, x, args.y_max + 1, args.t) for x in range(args.x_max + 1)])
    else:
        P, rem = transition_matrix(params, args.t, args.x_max, args.y_max, tol=args.tol)
    rows = [(x, y, float(P[x, y])) for x in range(P.shape[0]) for y in range(P.shape[1])]
    meta = _meta(args, params, {"t": args.t, "x_max": args.x_max, "y_max": P.shape[1] - 1,
                                "max_remainder": float(rem.max())})
    return _emit(args, meta, ["x", "y", "p"], rows, doc={"p": P, "remainder": rem})


def cmd_equilibrium(args) -> str:
    params = _need_params(args)
    law = equilibrium(params)
    n_max = args.n_max if args.n_max is not None else law.truncation(args.tol)
    n = np.arange(n_max + 1)
    pmf, tail = law.pmf(n), law.tail(n)
    rt = return_time_mean(params, args.return_state)
    extra = {"mean": law.mean(), "return_state": rt.x, "return_time_derived": rt.derived,
             "return_time_printed": rt.printed, "discrepancy_factor": rt.discrepancy_factor}
    meta = _meta(args, params, extra)
    rows = [(int(k), float(a), float(b)) for k, a, b in zip(n, pmf, tail)]
    return _emit(args, meta, ["n", "pmf", "tail"], rows)


def cmd_bounds(args) -> str:
    params = _need_params(args)
    init = _initial(args.initial, params)
    rows = []
    for t in args.times:
        reps = [kolmogorov_bound(params, init, t), gini_bound(params, init, t)]
        reps += [moment_bound(params, init, m, t) for m in args.moments]
        for r in reps:
            rows.append((r.kind, t, params.theta, params.mu, args.initial,
                         "" if r.m is None else r.m, r.exact, r.bound, r.ratio))
    meta = _meta(args, params, {"initial": args.initial})
    cols = ["kind", "t", "theta", "mu", "tau_id", "m", "exact", "bound", "ratio"]
    return _emit(args, meta, cols, rows)


def cmd_estimate(args) -> str:
    try:
        with open(args.input) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    d = read_magnitudes(io.StringIO(text))
    if d.size == 0:
        raise ConfigError("input holds no magnitudes")
    record = None
    if args.horizon is not None:
        record = read_record(io.StringIO(text))
    try:
        report = estimate_theta(d, horizon=args.horizon, record=record)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    meta = _meta(args, None, {"input": args.input})
    doc = report.to_dict()
    return _emit(args, meta, list(doc), [list(doc.values())], doc=doc)


def cmd_predict(args) -> str:
    try:
        with open(args.query) as fh:
            obj = json.load(fh)
        if args.xi is not None:
            obj["xi"] = args.xi
        query = query_from_dict(obj)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"bad query: {exc}") from None
    resp = answer_query(query)
    meta = _meta(args, query.params, {"query": args.query})
    flat = {k: v for k, v in resp.items() if k != "weights_summary"}
    return _emit(args, meta, list(flat), [list(flat.values())], doc=resp)


def cmd_linkfun(args) -> str:
    if args.step <= 0 or args.theta_max < args.theta_min or args.theta_min < 0:
        raise ConfigError("need 0 <= --theta-min <= --theta-max and --step > 0")
    if not 0 <= args.order <= 5:
        raise ConfigError("--order must be in 0..5")
    n = int(math.floor((args.theta_max - args.theta_min) / args.step + 1e-9)) + 1
    grid = args.theta_min + args.step * np.arange(n)
    cols = ["theta", "L", "dL", "d2L"]
    if args.asymptotic:
        cols += ["L_asym", "dL_asym", "d2L_asym"]
    rows = []
    # with the overlay the exact columns always come from the series
    exact = eval_L_series if args.asymptotic else eval_L
    for th in grid:
        ev = exact(th)
        row = [float(th), ev.value, ev.d1, ev.d2]
        if args.asymptotic:
            if th > 0:
                a = eval_L_asymptotic(th, args.order)
                row += [a.value, a.d1, a.d2]
            else:
                row += [math.nan] * 3
        rows.append(row)
    meta = _meta(args, None, {"theta_min": args.theta_min, "theta_max": args.theta_max,
                              "step": args.step, "order": args.order if args.asymptotic else None})
    return _emit(args, meta, cols, rows)


def cmd_replicate(args) -> str:
    params = _need_params(args)
    if args.n < 1 or args.reps < 1:
        raise ConfigError("--n and --reps must be >= 1")
    est = replicate_estimates(params.theta, args.n, args.reps, args.seed)
    se = asymptotic_se(params.theta, args.n)
    z = (est - params.theta) / se
    meta = _meta(args, params, {"n": args.n, "reps": args.reps, "se_asymptotic": se,
                                "sd_empirical": float(est.std(ddof=1))})
    rows = [(r, float(e), float(zz)) for r, (e, zz) in enumerate(zip(est, z))]
    return _emit(args, meta, ["replicate", "theta_hat", "z"], rows)


_HANDLERS = {
    "simulate": cmd_simulate,
    "transition": cmd_transition,
    "equilibrium": cmd_equilibrium,
    "bounds": cmd_bounds,
    "estimate": cmd_estimate,
    "predict": cmd_predict,
    "linkfun": cmd_linkfun,
    "replicate": cmd_replicate,
}


def run(argv: list[str] | None = None) -> int:
    """Run one command; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not 0 < args.tol <= 1e-6:
            raise ConfigError("--tol must be in (0, 1e-6]")
        try:
            text = _HANDLERS[args.command](args)
        except (ConditioningError, UnderflowError, ConvergenceError) as exc:
            print(f"unseen: numerical guard: {exc}", file=sys.stderr)
            return 2
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if args.out == "-":
            sys.stdout.write(text)
        else:
            with open(args.out, "w") as fh:
                fh.write(text)
    except ConfigError as exc:
        print(f"unseen: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
