"""Command-line front end.

Exit codes: 0 success, 2 config/parse/I-O error, 3 domain error,
4 convergence failure, 5 property violation found by an audit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .canonical import ConvergenceConfig, DEFAULT_EPSILON, DEFAULT_MAX_SWEEPS, residual
from .completion import check_support, random_orders, scca, verify_shift_consistency, verify_uniqueness
from .data import (
    SCALES,
    SyntheticSpec,
    consensus_instance,
    generate,
    generate_full_support,
    parse_movielens,
    read_dataset,
)
from .errors import ConvergenceError, DomainError, ParseError, PatternError, ShiftrecError
from .harness import ExperimentConfig, evaluate
from .recsys import ConsensusPattern, Recommender, fairness_probe, pick_probe_user, verify_consensus
from .tensor import SparseTensor, dumps_coo, read_coo, write_coo
from .uc import UC_LABEL, ucca

log = logging.getLogger("shiftrec")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_CONVERGENCE = 4
EXIT_VIOLATION = 5

AUDITS = ("support", "shift-consistency", "uniqueness", "consensus", "fairness")


class ConfigError(ShiftrecError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _seeds(text: str) -> tuple[int, ...]:
    # "5" means seeds 0..4; "3,7,11" is an explicit list
    if "," in text:
        return _ints(text)
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--seeds must be >= 1")
    return tuple(range(n))


def _shape(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.lower().replace("x", ",").split(",") if x.strip())


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("input")
    src.add_argument("--input", help="ratings/tensor file (COO text or MovieLens)")
    src.add_argument("--flavor", default="coo", choices=["coo", *SCALES],
                     help="input format (default: coo)")
    src.add_argument("--synthetic", type=_shape, metavar="SHAPE",
                     help="use a synthetic instance of this shape instead of --input, e.g. 50x80")
    src.add_argument("--model", default="additive", choices=["additive", "multiplicative"])
    src.add_argument("--known-fraction", type=float, default=0.5)
    src.add_argument("--noise", type=float, default=0.0)
    src.add_argument("--discretize", type=_floats, metavar="LO,HI,STEP",
                     help="clamp and round synthetic values to a rating scale")
    src.add_argument("--full-support", action="store_true",
                     help="redraw synthetic masks until fully supported")
    src.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", default="sc", choices=["sc", "uc"])
    p.add_argument("--k", type=int, help="subtensor order (default d-1)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--max-sweeps", type=int, default=DEFAULT_MAX_SWEEPS)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", default="json", choices=["json", "csv"])


def _synthetic_spec(args) -> SyntheticSpec:
    if args.model == "multiplicative":
        rng = (0.5, 2.0)
        base = 1.0
    elif args.discretize:
        rng = (-1.0, 1.0)
        base = 0.5 * (args.discretize[0] + args.discretize[1])
    else:
        rng = (-1.0, 1.0)
        base = 0.0
    return SyntheticSpec(
        shape=args.synthetic, model=args.model, factor_range=rng, base=base,
        noise=args.noise, known_fraction=args.known_fraction,
        discretize=tuple(args.discretize) if args.discretize else None,
    )


def _load(args):
    """Return (tensor, scale_max or None)."""
    if args.synthetic:
        spec = _synthetic_spec(args)
        inst = generate_full_support(spec, args.seed) if args.full_support else generate(spec, args.seed)
        smax = spec.discretize[1] if spec.discretize else None
        return inst.masked, smax
    if not args.input:
        raise ConfigError("either --input or --synthetic is required")
    path = Path(args.input)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    if args.flavor == "coo":
        text_head = path.open("rb").read(4096)
        if b"# users" in text_head or b"# flavor" in text_head:
            ds = read_dataset(path)
            return ds.matrix, ds.scale.high
        return read_coo(path), None
    ds = parse_movielens(path, args.flavor)
    return ds.matrix, ds.scale.high


def _cfg(args) -> ConvergenceConfig:
    try:
        return ConvergenceConfig(args.epsilon, args.max_sweeps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _k(args, t: SparseTensor) -> int:
    return args.k if args.k is not None else t.ndim - 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_complete(args) -> int:
    t, _ = _load(args)
    k = _k(args, t)
    cfg = _cfg(args)
    res = ucca(t, k, cfg) if args.method == "uc" else scca(t, k, cfg)
    diag = {
        "method": "SC" if args.method == "sc" else UC_LABEL,
        "shape": list(t.shape),
        "k": k,
        "known": t.nnz,
        "imputed": t.n_unknown,
        "sweeps": res.diagnostics.sweeps_used,
        "final_sweep_variance": res.diagnostics.final_sweep_variance,
        "residual": residual(res.diagnostics.canonical, k),
        "backend": res.diagnostics.backend,
    }
    comments = [f"{key} {val}" for key, val in diag.items() if key != "shape"]
    if args.out:
        write_coo(res.completed, args.out, comments=comments)
        Path(str(args.out) + ".json").write_text(json.dumps(diag, indent=2) + "\n")
    else:
        sys.stdout.write(dumps_coo(res.completed, comments=comments))
    log.info("completed %s: %d sweeps", t, diag["sweeps"])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    t, _ = _load(args)
    methods = ("sc", "uc") if args.method == "both" else (args.method,)
    try:
        config = ExperimentConfig(
            methods=methods, k=args.k, test_fraction=args.test_fraction,
            fractions=args.fractions, seeds=args.seeds, epsilon=args.epsilon,
            max_sweeps=args.max_sweeps, source=args.input or f"synthetic {args.synthetic}",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = evaluate(t, config)
    _emit(args, report.to_csv() if args.format == "csv" else report.to_json() + "\n")
    return EXIT_OK


def _audit_support(args, t, cfg):
    rep = check_support(t, certificates=args.certificates)
    out = {"audit": "support", "passed": rep.fully_supported, **rep.summary()}
    if args.certificates:
        out["certificates"] = {
            " ".join(map(str, a)): {"s": list(c.s), "corners": [list(x) for x in c.corners]}
            for a, c in rep.certificates.items()
        }
    out["unsupported"] = [list(a) for a in rep.unsupported[:1000]]
    out["inconclusive"] = [list(a) for a in rep.inconclusive[:1000]]
    return out, rep.fully_supported, None


def _audit_shift(args, t, cfg):
    k = _k(args, t)
    support = check_support(t, certificates=False)
    dev = verify_shift_consistency(t, k, trials=args.trials, seed=args.seed, cfg=cfg)
    passed = dev < args.tolerance
    out = {"audit": "shift-consistency", "passed": passed, "max_deviation": dev,
           "tolerance": args.tolerance, "trials": args.trials, "k": k,
           "precondition_full_support": support.fully_supported}
    return out, passed or not support.fully_supported, None


def _audit_uniqueness(args, t, cfg):
    k = _k(args, t)
    orders = random_orders(t.shape, k, args.orders, seed=args.seed)
    rep = verify_uniqueness(t, k, orders, cfg)
    passed = rep.max_deviation < args.tolerance and rep.null_shift_deviation < args.tolerance
    out = {"audit": "uniqueness", "passed": passed if rep.guaranteed else None,
           "guaranteed": rep.guaranteed, "max_deviation": rep.max_deviation,
           "null_shift_deviation": rep.null_shift_deviation, "orders": rep.n_orders,
           "tolerance": args.tolerance, "k": k}
    if not rep.guaranteed:
        out["note"] = "precondition unmet: tensor is not fully supported; uniqueness not guaranteed"
    return out, passed or not rep.guaranteed, None


def _audit_consensus(args, t, cfg):
    if args.gamma:
        gamma = args.gamma
    elif args.synthetic:
        t, gamma = consensus_instance(t.shape, D=args.D, axis=args.axis, seed=args.seed)
    else:
        raise ConfigError("consensus audit needs --gamma, or --synthetic to construct a pattern")
    try:
        pat = ConsensusPattern.from_tensor(t, gamma, args.axis)
    except PatternError as exc:
        out = {"audit": "consensus", "passed": None, "precondition_failed": str(exc)}
        return out, True, EXIT_CONFIG
    rec = Recommender.fit(t, args.method, cfg)
    chk = verify_consensus(rec, pat)
    out = {"audit": "consensus", "passed": chk.ok, "gamma": list(pat.gamma), "axis": pat.axis,
           "checked": chk.n_checked, "violations": [
               {"alpha": list(v[0]), "a": v[1], "b": v[2], "value_a": v[3], "value_b": v[4]}
               for v in chk.violations[:1000]]}
    return out, chk.ok, None


def _audit_fairness(args, t, cfg, smax):
    if t.ndim != 2:
        raise ConfigError("fairness audit needs a users x items matrix")
    user = args.user
    if user is None:
        if smax is not None:
            try:
                user = pick_probe_user(t, smax, args.delta)
            except ValueError:
                user = None
        if user is None:
            counts = np.bincount(t.index_array[:, 0], minlength=t.shape[0])
            user = int(np.flatnonzero(counts)[0]) + 1
    rep = fairness_probe(t, user, args.delta, tuple(range(1, args.n_max + 1)), args.method, cfg)
    passed = rep.ok and rep.max_other_deviation <= args.tolerance
    out = {"audit": "fairness", "passed": passed, "tolerance": args.tolerance, **rep.to_dict()}
    return out, passed, rep


def cmd_audit(args) -> int:
    t, smax = _load(args)
    cfg = _cfg(args)
    if args.tolerance is None:
        args.tolerance = 1e-9 if args.audit == "fairness" else 1e-8
    extra = None
    forced = None
    if args.audit == "support":
        out, passed, _ = _audit_support(args, t, cfg)
    elif args.audit == "shift-consistency":
        out, passed, _ = _audit_shift(args, t, cfg)
    elif args.audit == "uniqueness":
        out, passed, _ = _audit_uniqueness(args, t, cfg)
    elif args.audit == "consensus":
        out, passed, forced = _audit_consensus(args, t, cfg)
    else:
        out, passed, extra = _audit_fairness(args, t, cfg, smax)
    if args.audit == "fairness" and args.format == "csv":
        _emit(args, extra.to_csv())
    else:
        _emit(args, json.dumps(out, indent=2) + "\n")
    if forced is not None:
        return forced
    if args.audit == "support":
        return EXIT_OK
    return EXIT_OK if passed else EXIT_VIOLATION


def cmd_generate(args) -> int:
    if not args.synthetic:
        raise ConfigError("generate needs --synthetic SHAPE")
    spec = _synthetic_spec(args)
    inst = generate_full_support(spec, args.seed) if args.full_support else generate(spec, args.seed)
    comments = [f"synthetic model={spec.model} seed={args.seed} known_fraction={spec.known_fraction}"]
    if args.out:
        write_coo(inst.masked, args.out, comments=comments)
    else:
        sys.stdout.write(dumps_coo(inst.masked, comments=comments))
    if args.truth:
        idx = np.indices(spec.shape).reshape(len(spec.shape), -1).T
        write_coo(SparseTensor(spec.shape, idx, inst.truth.reshape(-1), one_based=False), args.truth)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftrec", description="Shift-consistent completion for recommender systems."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="complete a tensor and write it as COO")
    _add_common(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("evaluate", help="RMSE/MAE sweep over training fractions")
    _add_common(p)
    p.set_defaults(method="both")
    for a in p._actions:
        if a.dest == "method":
            a.choices = ["sc", "uc", "both"]
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--fractions", type=_floats, default=tuple(round(0.1 * i, 1) for i in range(1, 11)))
    p.add_argument("--seeds", type=_seeds, default=tuple(range(5)),
                   help="number of seeds, or comma-separated list")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("audit", help="check a provable property on an instance")
    p.add_argument("audit", choices=AUDITS)
    _add_common(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--orders", type=int, default=3)
    p.add_argument("--tolerance", type=float,
                   help="pass threshold (default 1e-9 for fairness, 1e-8 otherwise)")
    p.add_argument("--certificates", action="store_true", help="list support certificates")
    p.add_argument("--gamma", type=_ints, help="comma-separated slice indices for consensus")
    p.add_argument("--axis", type=int, help="slice dimension for consensus (default last)")
    p.add_argument("--D", type=int, default=3, help="pattern size for synthetic consensus")
    p.add_argument("--user", type=int, help="user to shift in the fairness audit")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=25)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("generate", help="write a synthetic instance as COO")
    _add_common(p)
    p.add_argument("--truth", help="also write the full ground truth here")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ParseError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
