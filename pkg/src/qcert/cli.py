"""Batch experiment driver.

Subcommands: gen-sigma, certify, sweep, verify, bounds, divergence.
Tables go to CSV, reports to JSON; every output embeds the resolved config
and master seed so a rerun reproduces the data rows byte for byte (the
wall-time column is informational and excluded from that guarantee).
Exit codes: 0 success, 1 check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .certify import CertifyConfig, basic_certify, certify
from .classical import l23_functional
from .instances import (
    EnsembleUnavailableError,
    build_corner,
    build_offdiag,
    corner_ensemble,
    plan_offdiag,
    sample_paninski,
    tune_paninski,
)
from .haar_oracle import (
    exact_transcript_divergence,
    ingster_bound,
    phi_pairs_finite,
    verify_moments_basic,
)
from .linalg import DensityMatrix, ValidationError, fidelity_mm, schatten_quasinorm, trace_distance
from .measurement import CopySource, NonadaptiveSchedule, basis_povm
from .rng import RngHandle, haar_unitary
from .spectrum import (
    Spectrum,
    predicted_bounds,
    remove_mass_lower_nonadaptive,
    remove_mass_upper,
)


def make_spectrum(family: str, d: int, rank: int | None = None, ratio: float = 0.5,
                  path: str | None = None) -> Spectrum:
    """Reference-state families used across the experiments."""
    if family == "mm":
        return Spectrum(np.full(d, 1.0 / d))
    if family == "rank-mm":
        if not rank or rank > d:
            raise ValidationError("rank-mm needs --rank in 1..d")
        lam = np.zeros(d)
        lam[:rank] = 1.0 / rank
        return Spectrum(lam)
    if family == "spiked":
        # dimension d+1: one heavy entry 1 - 1/d plus d entries of 1/d^2
        lam = np.full(d + 1, 1.0 / d**2)
        lam[0] = 1.0 - 1.0 / d
        return Spectrum(lam)
    if family == "geometric":
        lam = ratio ** np.arange(d)
        return Spectrum(lam / lam.sum())
    if family == "file":
        if not path:
            raise ValidationError("family 'file' needs --input")
        with open(path) as fh:
            return Spectrum.from_json(fh.read())
    raise ValidationError(f"unknown family {family!r}")


def hidden_state(kind: str, spec: Spectrum, eps: float, rng: RngHandle) -> DensityMatrix:
    """Draw the certification target for one trial."""
    sigma = DensityMatrix.from_diagonal(spec.lambdas)
    if kind == "null":
        return sigma
    if kind == "paninski":
        inst = tune_paninski(spec, eps)
        return sample_paninski(sigma, inst, rng)
    if kind == "offdiag":
        inst = plan_offdiag(spec, eps)
        return build_offdiag(sigma, inst, rng)
    if kind == "corner":
        u = 1 if rng.generator().random() < 0.5 else -1
        return build_corner(sigma, eps, u)
    if kind == "tail":
        # move eps^2/4 extra mass into the removed tail, taken from the top entry
        removal = remove_mass_upper(spec, eps)
        if not removal.tail:
            raise ValidationError("spectrum has no removable tail at this eps")
        lam = spec.lambdas.copy()
        shift = eps**2 / 4
        lam[int(np.argmax(lam))] -= shift
        lam[list(removal.tail)] += shift / len(removal.tail)
        return DensityMatrix.from_diagonal(lam)
    if kind == "spike":
        d = spec.dim
        beta = min(eps / np.sqrt(1 - 1 / d), 1.0)
        v = haar_unitary(d, rng.generator())[:, 0]
        sigma_m = sigma.mat
        return DensityMatrix((1 - beta) * sigma_m + beta * np.outer(v, v.conj()))
    raise ValidationError(f"unknown hidden-state family {kind!r}")


def _emit(args, payload: dict, rows: list[dict] | None = None, header: list[str] | None = None):
    """Write JSON (reports) or config-prefixed CSV (tables)."""
    if args.format == "json":
        out = dict(payload)
        if rows is not None:
            out["rows"] = rows
        text = json.dumps(out, indent=2, default=float) + "\n"
    else:
        buf = io.StringIO()
        buf.write("# " + json.dumps(payload, default=float) + "\n")
        writer = csv.DictWriter(buf, fieldnames=header or (list(rows[0]) if rows else []))
        writer.writeheader()
        for row in rows or []:
            writer.writerow(row)
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolved(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",) and v is not None}
    cfg.update(extra)
    return cfg


def cmd_gen_sigma(args) -> int:
    spec = make_spectrum(args.family, args.d, args.rank, args.ratio, args.input)
    payload = {"config": _resolved(args), "lambdas": list(spec.lambdas)}
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _one_certify_trial(packed) -> dict:
    (trial, family, lambdas, hidden, eps, delta, seed, algorithm, budget) = packed
    spec = Spectrum(np.asarray(lambdas))
    handle = RngHandle(seed).child("trial", trial)
    rho = hidden_state(hidden, spec, eps, handle.child("state"))
    src = CopySource(rho, budget)
    sigma = DensityMatrix.from_diagonal(spec.lambdas)
    cfg = CertifyConfig(eps=eps, delta=delta, seed=seed)
    t0 = time.perf_counter()
    if algorithm == "basic":
        verdict = basic_certify(src, sigma, eps, delta, cfg, rng=handle.child("algo"))
    else:
        verdict = certify(src, sigma, eps, delta, cfg, rng=handle.child("algo"))
    wall_ms = (time.perf_counter() - t0) * 1e3
    return {
        "trial": trial,
        "seed": seed,
        "hidden": hidden,
        "verdict": verdict.answer,
        "copies": verdict.copies_used,
        "wall_ms": round(wall_ms, 3),
    }


def cmd_certify(args) -> int:
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    spec = make_spectrum(args.family, args.d, args.rank, args.ratio, args.input)
    jobs = [
        (t, args.family, list(spec.lambdas), args.hidden, args.eps, args.delta,
         args.seed, args.algorithm, args.budget)
        for t in range(args.trials)
    ]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_one_certify_trial, jobs))
    else:
        rows = [_one_certify_trial(j) for j in jobs]
    yes = sum(r["verdict"] == "YES" for r in rows)
    yes_rate = yes / args.trials
    summary = {
        "trials": args.trials,
        "yes_rate": yes_rate,
        # under the null the correct verdict is YES; under every alternative
        # family it is NO
        "error_rate": 1 - yes_rate if args.hidden == "null" else yes_rate,
        "mean_copies": float(np.mean([r["copies"] for r in rows])),
    }
    _emit(args, {"config": _resolved(args), "summary": summary}, rows,
          header=["trial", "seed", "hidden", "verdict", "copies", "wall_ms"])
    return 0


def minimal_copies(d: int, eps: float, seed: int, trials: int, target: float,
                   delta: float = 0.85) -> int:
    """Doubling plus bisection for the least per-round copy count reaching the
    target success rate on both hypotheses (majority of 3 rounds)."""
    spec = Spectrum(np.full(d, 1.0 / d))
    sigma = DensityMatrix.from_diagonal(spec.lambdas)

    def success(n_copies: int) -> float:
        cfg = CertifyConfig(eps=eps, delta=delta, c_basic=n_copies * eps**2 / np.sqrt(d),
                            seed=seed)
        ok_null = ok_alt = 0
        for t in range(trials):
            handle = RngHandle(seed).child("sweep", d, n_copies, t)
            vn = basic_certify(CopySource(sigma), sigma, eps, delta, cfg,
                               rng=handle.child("null"))
            ok_null += vn.answer == "YES"
            rho = hidden_state("spike", spec, eps, handle.child("state"))
            va = basic_certify(CopySource(rho), sigma, eps, delta, cfg,
                               rng=handle.child("alt"))
            ok_alt += va.answer == "NO"
        return min(ok_null, ok_alt) / trials

    n = 16
    while success(n) < target:
        n *= 2
        if n > 10**7:
            raise ValidationError("sweep failed to reach the target success rate")
    lo, hi = n // 2, n
    for _ in range(8):
        mid = (lo + hi) // 2
        if mid == lo:
            break
        if success(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def cmd_sweep(args) -> int:
    dims = [int(x) for x in args.d_list.split(",")]
    rows = []
    for d in dims:
        n = minimal_copies(d, args.eps, args.seed, args.trials, args.target)
        rows.append({"d": d, "min_copies_per_round": n})
    payload = {"config": _resolved(args)}
    if len(dims) >= 2:
        x = np.log([r["d"] for r in rows])
        y = np.log([r["min_copies_per_round"] for r in rows])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        dof = max(len(dims) - 2, 1)
        se = float(np.sqrt((resid**2).sum() / dof / ((x - x.mean()) ** 2).sum()))
        payload["slope"] = float(slope)
        payload["slope_ci95"] = [float(slope - 1.96 * se), float(slope + 1.96 * se)]
        payload["monotone"] = bool(np.all(np.diff([r["min_copies_per_round"] for r in rows]) >= 0))
    else:
        payload["slope"] = None
        payload["note"] = "slope undefined with a single dimension"
    _emit(args, payload, rows, header=["d", "min_copies_per_round"])
    return 0


def cmd_bounds(args) -> int:
    spec = make_spectrum(args.family, args.d, args.rank, args.ratio, args.input)
    eps = args.eps
    bounds = predicted_bounds(spec, eps)
    removal = remove_mass_lower_nonadaptive(spec, eps)
    sigma = DensityMatrix.from_diagonal(spec.lambdas)
    report = {
        "config": _resolved(args),
        "bounds": json.loads(bounds.to_json()),
        "trimmed_norm_2_5": schatten_quasinorm(np.diag(removal.trimmed.astype(complex)), 2 / 5)
        if removal.trimmed.sum() > 0 else 0.0,
        "kept_norm_1_2": schatten_quasinorm(np.diag(removal.kept.astype(complex)), 0.5)
        if removal.kept.sum() > 0 else 0.0,
        "d_eff": removal.d_eff,
        "fidelity_mm": fidelity_mm(sigma),
        "classical_l23_over_eps2": l23_functional(spec.lambdas, eps) / eps**2,
    }
    try:
        tune_paninski(spec, eps)
        report["paninski_available"] = True
    except EnsembleUnavailableError:
        report["paninski_available"] = False
        report["classical_path"] = "all buckets are singletons; classical bound applies"
    except ValidationError:
        report["paninski_available"] = False
    args.format = "json"
    _emit(args, report)
    return 0


def cmd_divergence(args) -> int:
    spec = make_spectrum(args.family, args.d, args.rank, args.ratio, args.input)
    sigma = DensityMatrix.from_diagonal(spec.lambdas)
    handle = RngHandle(args.seed).child("divergence")
    rows = []
    worst = {"tv": 0.0, "chi2": 0.0, "kl": 0.0}
    for s in range(args.schedules):
        gen = handle.child("schedule", s).generator()
        povms = tuple(basis_povm(haar_unitary(spec.dim, gen)) for _ in range(args.copies))
        schedule = NonadaptiveSchedule(povms)
        if args.ensemble == "corner":
            ens = corner_ensemble(sigma, args.eps)
            rep = exact_transcript_divergence(sigma, ens, schedule)
            bound, se = ingster_bound(
                np.concatenate([phi_pairs_finite(m, sigma, ens) for m in povms]),
                args.copies,
            )
        elif args.ensemble == "paninski":
            inst = tune_paninski(spec, args.eps)
            rep = exact_transcript_divergence(
                sigma, lambda g: sample_paninski(sigma, inst, g), schedule,
                param_draws=args.param_draws, rng=handle.child("draws", s).generator(),
            )
            bound = se = float("nan")
        else:
            raise ValidationError(f"unknown ensemble {args.ensemble!r}")
        rows.append({
            "schedule": s, "tv": rep.tv, "chi2": rep.chi2, "kl": rep.kl,
            "min_likelihood_ratio": rep.min_likelihood_ratio,
            "ingster_bound": bound, "ingster_se": se,
        })
        for k in worst:
            worst[k] = max(worst[k], getattr(rep, k))
    _emit(args, {"config": _resolved(args), "worst": worst}, rows,
          header=["schedule", "tv", "chi2", "kl", "min_likelihood_ratio",
                  "ingster_bound", "ingster_se"])
    return 0


def cmd_verify(args) -> int:
    handle = RngHandle(args.seed)
    checks: list[dict] = []

    def record(name: str, ok: bool, **info):
        checks.append({"check": name, "ok": bool(ok), **info})

    # Haar-basis moment identities at small dimension.
    for d in (2, 4, 8):
        m = np.diag([1.0] * (d // 2) + [-1.0] * (d // 2)).astype(complex)
        rep = verify_moments_basic(m, args.samples, handle.child("moments", d).generator())
        record(f"moments-mean-d{d}", rep.first_ok, estimate=rep.ez_mc, exact=rep.ez_exact,
               se=rep.ez_se)
        record(f"moments-second-d{d}", rep.second_ok, estimate=rep.ez2_mc, bound=rep.ez2_bound,
               exact=rep.ez2_exact)

    # Instance validity fuzzing (small batteries; the test suite runs the full ones).
    spec = make_spectrum("mm", 16, None, 0.5, None)
    sigma = DensityMatrix.from_diagonal(spec.lambdas)
    inst = tune_paninski(spec, 0.2)
    ok = True
    for t in range(args.fuzz):
        rho = sample_paninski(sigma, inst, handle.child("fuzz-paninski", t).generator())
        ok &= abs(trace_distance(sigma, rho) - 0.2) < 1e-8
    record("paninski-distance", ok, trials=args.fuzz)

    corner_sigma = DensityMatrix.from_diagonal([0.8, 0.2])
    ens = corner_ensemble(corner_sigma, 0.3)
    want = 2 * np.sqrt(0.3**4 / 16 + 0.3**2 / 4)
    ok = all(abs(trace_distance(corner_sigma, s) - want) < 1e-10 for s, _ in ens)
    record("corner-distance", ok, expected=want)

    # Corner likelihood-ratio floor over random rank-1 schedules.
    floor = (1 - 32 * 0.3**2 / 9) ** (5 / 2)
    ok = True
    worst = 1.0
    for s in range(args.schedules):
        gen = handle.child("corner-bound", s).generator()
        schedule = NonadaptiveSchedule(tuple(basis_povm(haar_unitary(2, gen)) for _ in range(5)))
        rep = exact_transcript_divergence(corner_sigma, ens, schedule)
        worst = min(worst, rep.min_likelihood_ratio)
        ok &= rep.min_likelihood_ratio >= floor - 1e-12 and rep.tv <= 1 - floor + 1e-12
    record("corner-likelihood-floor", ok, floor=floor, worst_ratio=worst)

    # Moment-method bound dominates the exact chi-squared (finite ensemble).
    ok = True
    for s in range(args.schedules):
        gen = handle.child("ingster", s).generator()
        povms = tuple(basis_povm(haar_unitary(2, gen)) for _ in range(4))
        schedule = NonadaptiveSchedule(povms)
        rep = exact_transcript_divergence(corner_sigma, ens, schedule)
        phis = np.concatenate([phi_pairs_finite(m, corner_sigma, ens) for m in povms])
        bound, se = ingster_bound(phis, 4)
        ok &= rep.chi2 <= bound + 3 * se + 1e-12
    record("ingster-dominates-chi2", ok)

    payload = {"config": _resolved(args), "checks": checks,
               "all_ok": all(c["ok"] for c in checks)}
    args.format = "json"
    _emit(args, payload)
    return 0 if payload["all_ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, family=True):
        p.add_argument("--seed", type=int, default=0, help="master seed (decimal 64-bit)")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=1)
        if family:
            p.add_argument("--family", default="mm",
                           choices=("mm", "rank-mm", "spiked", "geometric", "file"))
            p.add_argument("--d", type=int, default=8)
            p.add_argument("--rank", type=int, default=None)
            p.add_argument("--ratio", type=float, default=0.5)
            p.add_argument("--input", default=None, help="spectrum JSON for family=file")

    p = sub.add_parser("gen-sigma", help="emit a reference spectrum as JSON")
    common(p)
    p.set_defaults(func=cmd_gen_sigma)

    p = sub.add_parser("certify", help="run certification trials")
    common(p)
    p.add_argument("--algorithm", choices=("certify", "basic"), default="certify")
    p.add_argument("--hidden", default="null",
                   choices=("null", "paninski", "offdiag", "corner", "tail", "spike"))
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="minimal-copy sweep across dimensions")
    common(p, family=False)
    p.add_argument("--d-list", default="4,8,16,32")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--target", type=float, default=0.9)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="predicted copy-complexity report for a spectrum")
    common(p)
    p.add_argument("--eps", type=float, default=0.3)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="moment/instance/divergence verification battery")
    common(p, family=False)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--fuzz", type=int, default=100)
    p.add_argument("--schedules", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("divergence", help="exact transcript divergences for an ensemble")
    common(p)
    p.add_argument("--ensemble", choices=("corner", "paninski"), default="corner")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--copies", type=int, default=5)
    p.add_argument("--schedules", type=int, default=10)
    p.add_argument("--param-draws", type=int, default=1000)
    p.set_defaults(func=cmd_divergence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        parser.exit(2, f"qcert: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
