"""Command-line front end.

Every command prints (or writes with ``--out``) one JSON document carrying
the convention stamp and a build identifier.  All randomness derives from
``--seed`` through the stream tree of :class:`hermval.geomlin.RandomStream`,
so the thread count never changes a result.

Exit codes: 0 success, 2 argument or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bodies import Ball, body_from_json, random_polytope
from .geomlin import ComplexStructure, RandomStream, Subspace, sample_subspace
from .intrinsic import CONVENTION, intrinsic_volume, kubota_oracle, steiner_oracle
from .montecarlo import set_threads
from . import kinematics as kin
from . import valuations as val

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_id():
    env = os.environ.get("HERMVAL_BUILD")
    if env:
        return env
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def emit(payload, out=None):
    text = json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def load_body(path):
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read body file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    try:
        return body_from_json(obj)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def load_plane(path, ambient_dim):
    try:
        obj = json.loads(Path(path).read_text())
        frame = np.asarray(obj["frame"], dtype=float)
    except OSError as exc:
        raise UsageError(f"cannot read plane file {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        raise UsageError(f"{path}: frame: expected a list of basis vectors") from None
    if frame.ndim != 2 or frame.shape[1] != ambient_dim:
        raise UsageError(f"{path}: frame: vectors must have length {ambient_dim}")
    return Subspace(frame, ambient_dim)


# -- valuation specs --------------------------------------------------------

def _ints(tokens, count, what):
    if len(tokens) < count:
        raise UsageError(f"{what} needs {count} integer arguments")
    try:
        return [int(t) for t in tokens[:count]], tokens[count:]
    except ValueError:
        raise UsageError(f"{what}: indices must be integers") from None


def parse_valuation(tokens, n, samples, method="auto"):
    """``C k l`` | ``U k p`` | ``V k`` | ``kaz`` -> (evaluator, rest)."""
    if not tokens:
        raise UsageError("missing valuation name (C, U, V or kaz)")
    kind, rest = tokens[0], tokens[1:]
    N = samples or val.DEFAULT_SAMPLES
    if kind == "C":
        (k, l), rest = _ints(rest, 2, "C")
        if not (0 <= k <= 2 * n and 0 < l <= n):
            raise UsageError(f"C: need 0 <= k <= 2n and 1 <= l <= n (n={n})")
        return val.C_valuation(k, l, n, N), rest
    if kind == "U":
        (k, p), rest = _ints(rest, 2, "U")
        if not 0 <= 2 * p <= k <= 2 * n:
            raise UsageError(f"U: need 0 <= 2p <= k <= 2n (n={n})")
        return val.U_valuation(k, p, n, N, method=method), rest
    if kind == "V":
        (k,), rest = _ints(rest, 1, "V")
        if not 0 <= k <= 2 * n:
            raise UsageError(f"V: need 0 <= k <= 2n (n={n})")
        return val.intrinsic_valuation(k), rest
    if kind == "kaz":
        if n > 3:
            raise UsageError("kaz: supported for n <= 3")
        return val.kazarnovskii_valuation(n, N=samples or 20_000), rest
    raise UsageError(f"unknown valuation {kind!r} (expected C, U, V or kaz)")


def _plane(args, degree, d, stream):
    if args.plane:
        E = load_plane(args.plane, d)
        if E.dim != degree:
            raise UsageError(f"plane: expected a {degree}-plane, got dimension {E.dim}")
        return E
    return sample_subspace(degree, d, stream.child(0))


def _dim_from_body(K, args):
    if K.ambient_dim % 2:
        raise UsageError(f"body lives in R^{K.ambient_dim}; an even dimension 2n is required")
    n = K.ambient_dim // 2
    if args.n is not None and args.n != n:
        raise UsageError(f"--n {args.n} does not match the body dimension {K.ambient_dim}")
    return n


def cmd_valuation(args):
    stream = RandomStream(args.seed)
    kind = args.tokens[0] if args.tokens else None
    if kind in ("C", "U", "V", "kaz"):
        if not args.tokens[1:]:
            raise UsageError("missing body file")
        K = load_body(args.tokens[-1])
        n = _dim_from_body(K, args)
        phi, rest = parse_valuation(args.tokens[:-1], n, args.samples, args.method)
        if rest:
            raise UsageError(f"unexpected arguments {rest}")
        est = phi.evaluate(K, stream.child(1))
        return {"valuation": phi.to_json(), "body": args.tokens[-1], "estimate": est.to_json()}
    if kind == "lambda":
        if len(args.tokens) < 3:
            raise UsageError("usage: valuation lambda <valuation> <body.json>")
        K = load_body(args.tokens[-1])
        n = _dim_from_body(K, args)
        phi, rest = parse_valuation(args.tokens[1:-1], n, args.samples, args.method)
        if rest:
            raise UsageError(f"unexpected arguments {rest}")
        if phi.degree < 1:
            raise UsageError("lambda: valuation must have degree >= 1")
        est = val.lambda_op(phi, K, stream.child(1))
        return {"valuation": {"name": f"Lambda({phi.name})", "degree": phi.degree - 1},
                "body": args.tokens[-1], "estimate": est.to_json()}
    if kind in ("klain", "dual", "cosine"):
        n = args.n or 2
        d = 2 * n
        phi, rest = parse_valuation(args.tokens[1:], n, args.samples, args.method)
        if rest:
            raise UsageError(f"unexpected arguments {rest}")
        f = val.klain_function(phi, d, args.probe)
        if kind == "dual":
            f = val.duality(f)
        elif kind == "cosine":
            j = phi.degree if args.j is None else args.j
            if not 0 < j < d:
                raise UsageError(f"--j must lie in 1..{d - 1}")
            f = val.cosine_transform(f, j, phi.degree, stream.child(2), args.samples or 200, d)
        E = _plane(args, f.degree, d, stream)
        est = f(E, stream.child(1))
        return {"function": f.name, "plane": E.to_json(), "estimate": est.to_json()}
    raise UsageError(f"unknown valuation command {kind!r}")


def cmd_intrinsic(args):
    K = load_body(args.body)
    if not 0 <= args.j <= K.ambient_dim:
        raise UsageError(f"j must lie in 0..{K.ambient_dim}")
    stream = RandomStream(args.seed)
    if args.method == "face":
        est = intrinsic_volume(K, args.j, stream, args.samples or 20_000)
    elif args.method == "steiner":
        est = steiner_oracle(K, stream, args.samples or 1_000_000)[args.j]
    else:
        est = kubota_oracle(K, args.j, stream, args.samples or 10_000)
    return {"body": args.body, "j": args.j, "method": args.method, "estimate": est.to_json()}


# -- verification suites ---------------------------------------------------

def _suite_lefschetz(args, stream):
    n = args.n or 2
    cases = [(args.k, args.l)] if args.k is not None else [(1, 1), (2, 2), (3, 2)]
    checks = []
    for i, (k, l) in enumerate(cases):
        if k is None or l is None or not (0 <= k < 2 * n and 0 < l <= n):
            raise UsageError("lefschetz: need --k in 0..2n-1 and --l in 1..n")
        r = val.verify_lefschetz(k, l, n, stream.child(i), args.samples or 4000)
        r["pass"] = r["spread"] <= args.spread
        checks.append(r)
    return checks


def _suite_duality(args, stream):
    n = args.n or 2
    k = 2 if args.k is None else args.k
    p = 1 if args.p is None else args.p
    if not 0 <= 2 * p <= k <= 2 * n:
        raise UsageError("duality: need 0 <= 2p <= k <= 2n")
    r = val.verify_U_equals_dual_C(k, p, n, stream, args.samples or 20_000)
    r["pass"] = r["spread"] <= args.spread
    return [r]


def _suite_c2(args, stream):
    if args.n not in (None, 2):
        raise UsageError("c2: the identity lives in C^2")
    bodies = [Ball(np.zeros(4), 1.0)] + [random_polytope(4, 8, stream.child(0).child(i)) for i in range(10)]
    N = args.samples or 20_000
    ident = kin.verify_c2_identity(bodies, stream.child(1), N, args.sigma)
    for row in ident["rows"]:
        row["body"] = "B4" if row["body"] == 0 else f"random polytope {row['body']}"
    klain = kin.verify_phi_klain(stream.child(2), args.samples or 4000, 20, args.sigma)
    return [{"check": "phi + 2 psi = V2", **ident},
            {"check": "Klain function of phi", **klain}]


def _suite_klain(args, stream):
    n = args.n or 2
    d = 2 * n
    N = args.samples or 4000
    planes = [sample_subspace(2, d, stream.child(0).child(i)) for i in range(10)]
    out = []
    fV = val.klain_function(val.intrinsic_valuation(2), d)
    dev = [abs(fV(E).value - 1.0) for E in planes]
    out.append({"check": "klain(V_2) = 1", "max_abs_error": max(dev), "pass": max(dev) <= 1e-9})
    chi = val.constant_klain(0, d, 1.0, "chi")
    fvol = val.klain_function(val.volume_valuation(d), d)
    full = Subspace(np.eye(d), d)
    err = abs(val.duality(chi)(full).value - fvol(full).value)
    out.append({"check": "dual(chi) = vol", "abs_error": err, "pass": err <= 1e-12})
    fC = val.klain_function(val.C_valuation(2, 1, n, N), d)
    ff = val.duality(val.duality(fC))
    diffs = [abs(ff(E, stream.child(1).child(i)).value - fC(E, stream.child(1).child(i)).value)
             for i, E in enumerate(planes)]
    out.append({"check": "dual(dual(f)) = f", "max_abs_error": max(diffs), "pass": max(diffs) <= 1e-12})
    fS = val.klain_function(val.C_valuation(2, 1, n, N), d, probe="simplex")
    devs = []
    for i, E in enumerate(planes):
        a, b = fC(E, stream.child(2).child(i)), fS(E, stream.child(3).child(i))
        devs.append(abs(a.value - b.value) / math.hypot(a.std_error, b.std_error))
    out.append({"check": "cube and simplex probes agree", "deviation_sigma": devs,
                "pass": max(devs) <= args.sigma})
    return out


def _suite_kaz_span(args, stream):
    n = args.n or 2
    r = val.kazarnovskii_span(n, stream, args.samples or 20_000)
    r["pass"] = r["residual"] <= 0.03
    return [r]


def _suite_gram(args, stream):
    n = args.n or 2
    out = []
    for k in range(2 * n + 1):
        r = val.gram_report(k, n, stream.child(k), args.samples or 20_000, 40, sigma=args.sigma)
        r["pass"] = r["rank"] == r["expected_rank"] and r["gap"] >= 10.0
        out.append(r)
    return out


SUITES = {"lefschetz": _suite_lefschetz, "duality": _suite_duality, "c2": _suite_c2,
          "klain": _suite_klain, "kaz-span": _suite_kaz_span, "gram": _suite_gram}


def cmd_verify(args):
    checks = SUITES[args.suite](args, RandomStream(args.seed))
    return {"suite": args.suite, "checks": checks, "pass": all(c["pass"] for c in checks)}


# -- constants ---------------------------------------------------------------

def cmd_constants(args):
    stream = RandomStream(args.seed)
    if args.which == "kappa":
        n = args.n or 2
        if n != 2:
            raise UsageError("kappa: supported at n = 2")
        train, held = kin.default_kappa_pairs(stream.child(0), n)
        N = args.samples or 400
        fit, reg, cache = kin.solve_kappa(n, train, stream.child(1), N)
        pred, perr = kin.predict_kappa_pair(reg, cache, *held)
        lhs = kin.principal_kinematic_lhs(*held, ComplexStructure(n), stream.child(2), N)
        heldout = {"predicted": pred, "predicted_sigma": perr, "lhs": lhs.to_json(),
                   "relative_error": abs(pred - lhs.value) / abs(lhs.value)}
    elif args.which == "beta":
        n = args.n or 2
        if n != 2:
            raise UsageError("beta: supported at n = 2")
        bodies, held = kin.default_beta_bodies(stream.child(0), n)
        N = args.samples or 20_000
        fit, reg, cache = kin.solve_beta(n, bodies, stream.child(1), N)
        row = [cache(held, n, p) for p in fit.names]
        pred = float(reg.predict([[r.value for r in row]])[0])
        perr = float(reg.predict_err([[r.value for r in row]], [[r.std_error for r in row]])[0])
        lhs = kin.lagrangian_crofton_lhs(held, ComplexStructure(n), stream.child(2), N)
        heldout = {"predicted": pred, "predicted_sigma": perr, "lhs": lhs.to_json(),
                   "deviation_sigma": abs(pred - lhs.value) / math.hypot(perr, lhs.std_error)}
    else:
        n = args.n or 3
        if n != 3:
            raise UsageError("gamma: supported at n = 3")
        q = 2 if args.q is None else args.q
        k = 3 if args.k is None else args.k
        p = 1 if args.p is None else args.p
        bodies, held = kin.default_gamma_bodies(stream.child(0), n)
        N = args.samples or 100_000
        try:
            fit, reg, cache = kin.solve_gamma(n, k, p, q, bodies, stream.child(1), N)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        kk = k + 2 * (n - q)
        row = [cache(held, kk, r) for r in fit.names]
        pred = float(reg.predict([[r.value for r in row]])[0])
        lhs = kin.complex_crofton_lhs(held, k, p, q, ComplexStructure(n), stream.child(2), N)
        heldout = {"predicted": pred, "lhs": lhs.to_json(),
                   "relative_error": abs(pred - lhs.value) / abs(lhs.value)}
    return {"which": args.which, "fit": fit.to_json(), "held_out": heldout}


# -- entry point -------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--sigma", type=float, default=3.0)
    common.add_argument("--out", default=None)

    parser = _Parser(prog="hermval", description="Unitarily invariant valuations by Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("valuation", parents=[common],
                       help="C k l | U k p | V k | kaz BODY; lambda VAL BODY; klain|dual|cosine VAL")
    p.add_argument("tokens", nargs="+")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--plane", default=None, help="JSON file with a 'frame' list")
    p.add_argument("--probe", choices=["cube", "simplex"], default="cube")
    p.add_argument("--method", choices=["auto", "section", "projection", "fibre"], default="auto")
    p.add_argument("--j", type=int, default=None, help="target degree of the cosine transform")
    p.set_defaults(func=cmd_valuation)

    p = sub.add_parser("intrinsic", parents=[common], help="V_j of a body")
    p.add_argument("j", type=int)
    p.add_argument("body")
    p.add_argument("--method", choices=["face", "steiner", "kubota"], default="face")
    p.set_defaults(func=cmd_intrinsic)

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("suite", choices=sorted(SUITES))
    for name in ("n", "k", "l", "p"):
        p.add_argument(f"--{name}", type=int, default=None)
    p.add_argument("--spread", type=float, default=0.03, help="relative spread tolerance")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("constants", parents=[common], help="fit kinematic / Crofton constants")
    p.add_argument("which", choices=["kappa", "beta", "gamma"])
    for name in ("n", "q", "k", "p"):
        p.add_argument(f"--{name}", type=int, default=None)
    p.set_defaults(func=cmd_constants)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.samples is not None and args.samples < 1:
            raise UsageError("--samples must be at least 1")
        if not args.sigma > 0:
            raise UsageError("--sigma must be positive")
        set_threads(args.threads)
        result = args.func(args)
    except UsageError as exc:
        print(f"hermval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"hermval: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"hermval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every other failure is numerical by contract
        print(f"hermval: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    payload = {"command": args.command, "seed": args.seed, "samples": args.samples,
               "convention": CONVENTION, "build": build_id(), "result": result}
    try:
        emit(payload, args.out)
    except OSError as exc:
        print(f"hermval: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    # a failed verification is reported as a numerical failure
    return EXIT_OK if result.get("pass", True) else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
