"""Command-line front end.

Every command reads a JSON problem file, writes CSV/JSON into ``--out``
(atomically, temp file then rename) together with ``manifest.json``, and
reports failures on stderr as ``ERROR <code> <kind>: <message>``.

Exit codes: 0 ok, 1 parse/validation, 2 solver failure, 3 incomplete
spectrum, 4 verification suite failure, 5 reconstruction not converged.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys
import tempfile
import time
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np

from . import asymptotics, forward, inverse, spectrum, verify
from .errors import (AllDiverged, IncompleteSpectrum, ParseError, PencilError, SpecMismatch,
                     ValidationError)
from .model import HALF_PI, PI, load_problem

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_INCOMPLETE = 3
EXIT_SUITE = 4
EXIT_NOT_CONVERGED = 5

MANIFEST = "manifest.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _threads() -> int:
    raw = os.environ.get("PENCILSPEC_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"PENCILSPEC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError("PENCILSPEC_THREADS must be >= 1")
    return n


@contextlib.contextmanager
def _atomic(path: Path):
    """Yield a temp path in the target directory; rename onto ``path`` on success."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _f(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with _atomic(path) as tmp:
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, int) else _f(v))
                            for v in row])


def _write_json(path: Path, data) -> None:
    with _atomic(path) as tmp:
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


class _Run:
    """Collects outputs and writes the manifest beside them."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValidationError(f"cannot create output directory {self.out}: {exc.strerror}")

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def finish(self, status: str, extra: dict | None = None) -> None:
        settings = {k: v for k, v in vars(self.args).items() if k not in ("func", "command")}
        data = {
            "command": self.args.command,
            "config": str(getattr(self.args, "config", "")),
            "settings": settings,
            "seed": getattr(self.args, "seed", None),
            "tool_version": _version(),
            "wall_time_s": time.perf_counter() - self.t0,
            "status": status,
            "outputs": self.outputs,
            "threads": _threads(),
        }
        if extra:
            data.update(extra)
        _write_json(self.out / MANIFEST, data)


def _settings(args) -> forward.IntegratorSettings:
    return forward.IntegratorSettings(rtol=args.rtol, atol=args.atol)


def _spectrum_rows(spec_obj):
    return [(e.n, e.lam.real, e.lam.imag, e.residual, e.iterations, e.flags)
            for e in spec_obj.entries]


SPECTRUM_HEADER = ["n", "re_lambda", "im_lambda", "residual", "iterations", "flags"]


# --------------------------------------------------------------------------
# commands


def cmd_spectrum(args) -> int:
    spec = load_problem(args.config)
    run = _Run(args)
    cfg = _settings(args)
    probe = True if args.complex_probe else None
    try:
        result = spectrum.compute_spectrum(spec, args.nmax, tol=args.tol, cfg=cfg,
                                           complex_probe=probe, audit=not args.no_audit)
    except IncompleteSpectrum as exc:
        if exc.partial is not None:
            _write_csv(run.path("spectrum.csv"), SPECTRUM_HEADER, _spectrum_rows(exc.partial))
        run.finish("incomplete", {"error": str(exc)})
        raise
    _write_csv(run.path("spectrum.csv"), SPECTRUM_HEADER, _spectrum_rows(result))
    run.finish("ok", {"flags": list(result.flags)})
    return EXIT_OK


def cmd_charfn(args) -> int:
    spec = load_problem(args.config)
    if args.samples < 1:
        raise ValidationError("--samples must be >= 1")
    if not (math.isfinite(args.lmin) and math.isfinite(args.lmax) and args.lmax >= args.lmin):
        raise ValidationError("need finite --lmin <= --lmax")
    run = _Run(args)
    re = np.linspace(args.lmin, args.lmax, args.samples)
    lams = re + 1j * args.im
    d = forward.char_fn_batch(spec, lams, _settings(args))
    d0 = np.asarray(asymptotics.char_fn0(spec, lams), dtype=complex).ravel()
    rows = [(l.real, l.imag, a.real, a.imag, b.real, b.imag) for l, a, b in zip(lams, d, d0)]
    _write_csv(run.path("charfn.csv"),
               ["re_lambda", "im_lambda", "re_delta", "im_delta", "re_delta0", "im_delta0"], rows)
    run.finish("ok")
    return EXIT_OK


def _green_suite(spec_a, spec_b, cfg, run):
    checks = []
    rows = []
    for re in np.linspace(0.5, 10.0, 5):
        for im in np.linspace(0.0, 0.5, 5):
            lam = complex(re, im)
            r = verify.green_identity_residual(spec_a, spec_b, lam, cfg=cfg)
            limit = 1e-7 * math.exp(abs(im) * PI)
            rows.append((re, im, r))
            checks.append((f"green lambda={re:.4g}{im:+.4g}i", r, limit, r <= limit))
    _write_csv(run.path("green_sweep.csv"), ["re_lambda", "im_lambda", "residual"], rows)
    return checks


def _asymptotic_suite(spec_a, cfg, run):
    lams = np.linspace(1.0, 40.0, 40)
    rows = asymptotics.remainder_report(spec_a, lams, cfg)
    _write_csv(run.path("remainder.csv"), ["lambda", "abs_diff", "scaled_diff"], rows)
    # diagnostic only: passes when it ran and produced finite numbers
    ok = all(math.isfinite(r[2]) for r in rows)
    return [("asymptotic remainder (diagnostic)", max(r[2] for r in rows), math.inf, ok)]


def _volterra_suite(seed, run):
    checks = []
    vp = verify.VolterraProblem(1, lambda x, t: 1.0)
    _, hist = verify.volterra_trivial_check(vp, lambda t: 1.0, 20)
    rows = []
    for k, h in enumerate(hist):
        bound = HALF_PI**k / math.factorial(k)
        rows.append(("scalar", k, h, bound))
        checks.append((f"volterra scalar k={k}", h - bound, 1e-12, h <= bound + 1e-12))
    rng = np.random.default_rng(seed)
    R = rng.uniform(-0.25, 0.25, (3, 3))
    vp3 = verify.VolterraProblem(3, lambda x, t: R * (1.0 + np.cos(x - t)) / 2.0)
    final, hist3 = verify.volterra_trivial_check(vp3, lambda t: np.ones(3), 15)
    rows += [("random3", k, h, math.nan) for k, h in enumerate(hist3)]
    checks.append(("volterra random 3x3 final/initial", final / hist3[0], 1e-10,
                   final < 1e-10 * hist3[0]))
    _write_csv(run.path("volterra.csv"), ["case", "k", "norm", "bound"], rows)
    return checks


def cmd_verify(args) -> int:
    spec_a = load_problem(args.config)
    spec_b = load_problem(args.config_b) if args.config_b else spec_a
    if args.suite in ("green", "all"):
        # mismatched constants are an input problem, caught before any solve
        verify._same_constants(spec_a, spec_b)
        verify._same_right_half(spec_a, spec_b)
    run = _Run(args)
    cfg = _settings(args)
    checks = []
    if args.suite in ("green", "all"):
        checks += _green_suite(spec_a, spec_b, cfg, run)
    if args.suite in ("asymptotic", "all"):
        checks += _asymptotic_suite(spec_a, cfg, run)
    if args.suite in ("volterra", "all"):
        checks += _volterra_suite(args.seed, run)
    _write_csv(run.path("verify_report.csv"), ["check", "value", "limit", "pass"],
               [(name, v, lim, "PASS" if ok else "FAIL") for name, v, lim, ok in checks])
    failed = [c for c in checks if not c[3]]
    for name, v, lim, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  value={v:.3e}  limit={lim:.3e}")
    run.finish("ok" if not failed else "failed", {"n_checks": len(checks), "n_failed": len(failed)})
    if failed:
        raise _SuiteFailure(f"{len(failed)} of {len(checks)} checks failed")
    return EXIT_OK


class _SuiteFailure(PencilError):
    kind = "SuiteFailure"


class _NotConverged(PencilError):
    kind = "NotConverged"


def _load_spectrum(path):
    try:
        return spectrum.Spectrum.from_csv(path)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: malformed spectrum CSV ({exc})") from exc


def cmd_reconstruct(args) -> int:
    spec = load_problem(args.config)
    target = _load_spectrum(args.spectrum)
    cfg = inverse.ReconstructionConfig(
        basis_dim=args.basis_dim, n_eigen=args.n_eigen, regularization=args.regularization,
        max_iter=args.max_iter, multistart=args.multistart, seed=args.seed)
    if len(target.entries) < cfg.n_eigen:
        raise ValidationError(f"spectrum has {len(target.entries)} entries, need {cfg.n_eigen}")
    run = _Run(args)
    icfg = _settings(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            if cfg.multistart > 1:
                rep = inverse.uniqueness_probe(spec.potentials, spec, target, cfg, icfg=icfg)
            else:
                rep = inverse.reconstruct(spec.potentials, spec, target, cfg, icfg=icfg)
        except AllDiverged as exc:
            run.finish("not converged", {"error": str(exc)})
            raise _NotConverged(str(exc)) from exc
    D = cfg.basis_dim
    _write_csv(run.path("coefficients.csv"), ["k", "p_coef", "q_coef"],
               [(k, rep.recovered.p_coef[k], rep.recovered.q_coef[k]) for k in range(D)])
    _write_csv(run.path("objective.csv"), ["iteration", "objective"],
               list(enumerate(rep.objective_history)))
    if cfg.multistart > 1:
        d = rep.multistart_distances
        _write_csv(run.path("distances.csv"), ["run"] + [f"d{j}" for j in range(d.shape[0])],
                   [(i, *d[i]) for i in range(d.shape[0])])
    if args.landscape:
        scans = inverse.constants_probe(spec, target, icfg=icfg)
        _write_csv(run.path("landscape.csv"), ["axis", "offset", "objective"],
                   inverse.landscape_rows(scans))
    summary = rep.summary()
    _write_json(run.path("report.json"), summary)
    run.finish("ok" if rep.converged else "not converged", {"report": summary})
    if not rep.converged:
        raise _NotConverged(f"stopped after {rep.iterations} iterations ({rep.reason})")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pencilspec", description="Spectral tools for a quadratic pencil "
                "with transmission conditions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, with_out=True):
        sp.add_argument("--config", required=True, help="JSON problem file")
        sp.add_argument("--rtol", type=float, default=1e-10, help="integrator rtol (1e-10)")
        sp.add_argument("--atol", type=float, default=1e-12, help="integrator atol (1e-12)")
        if with_out:
            sp.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("spectrum", help="first N eigenvalues")
    common(s)
    s.add_argument("--nmax", type=int, required=True)
    s.add_argument("--tol", type=float, default=1e-10, help="Newton tolerance (1e-10)")
    s.add_argument("--complex-probe", action="store_true",
                   help="probe windows off the real axis even when gamma = 0")
    s.add_argument("--no-audit", action="store_true", help="skip argument-principle audit")
    s.set_defaults(func=cmd_spectrum)

    c = sub.add_parser("charfn", help="sample Delta and Delta0 on a line")
    common(c)
    c.add_argument("--lmin", type=float, required=True)
    c.add_argument("--lmax", type=float, required=True)
    c.add_argument("--samples", type=int, required=True)
    c.add_argument("--im", type=float, default=0.0, help="imaginary offset of the line (0)")
    c.set_defaults(func=cmd_charfn)

    v = sub.add_parser("verify", help="identity and Volterra checks")
    common(v)
    v.add_argument("--config-b", help="second problem (defaults to --config)")
    v.add_argument("--suite", choices=("green", "asymptotic", "volterra", "all"), default="all")
    v.add_argument("--seed", type=int, default=7, help="seed of the random kernel (7)")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reconstruct", help="recover the left-half potentials")
    common(r)
    r.add_argument("--spectrum", required=True, help="spectrum CSV")
    r.add_argument("--basis-dim", type=int, default=6)
    r.add_argument("--n-eigen", type=int, default=24)
    r.add_argument("--multistart", type=int, default=1)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--regularization", type=float,
                   default=inverse.ReconstructionConfig.regularization)
    r.add_argument("--max-iter", type=int, default=100)
    r.add_argument("--landscape", action="store_true",
                   help="also scan the objective along each constant")
    r.set_defaults(func=cmd_reconstruct)
    return p


def _code_for(exc: PencilError) -> int:
    if isinstance(exc, _SuiteFailure):
        return EXIT_SUITE
    if isinstance(exc, _NotConverged):
        return EXIT_NOT_CONVERGED
    if isinstance(exc, IncompleteSpectrum):
        return EXIT_INCOMPLETE
    if isinstance(exc, (ParseError, ValidationError, SpecMismatch)):
        return EXIT_INPUT
    return EXIT_SOLVER


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _threads()
        return args.func(args)
    except PencilError as exc:
        code = _code_for(exc)
        msg = " ".join(str(exc).split())
        print(f"ERROR {code} {exc.kind}: {msg}", file=sys.stderr)
        return code
    except (ValueError, ArithmeticError) as exc:
        print(f"ERROR {EXIT_SOLVER} {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
