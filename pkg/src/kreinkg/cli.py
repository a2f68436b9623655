"""Command line runner: ``kreinkg <command> --config FILE [--out DIR] ...``.

Each command writes CSV tables, ``summary.txt`` (one PASS/FAIL line per
checked invariant), ``run.log`` and ``manifest.json`` into the output
directory.  Exit codes: 0 when every check passes, 1 on a numeric failure,
2 on configuration or precondition errors.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from . import __version__
from .calculus import (ErfPlateau, Gaussian, Pole, eigen_oracle_calculus, hs_calculus)
from .config import COMMANDS, grid_of, load_config, pair_of, potential_of
from .errors import (ConfigError, InputError, KreinError, PreconditionError,
                     StructuralError)
from .estimates import (lap_scan, mourre_c1_prediction, mourre_experiment, pencil_lap,
                        plancherel_outside, propagation_bound_constant,
                        propagation_integral, conjugate_weight_ratio)
from .fileio import fmt, write_csv, write_matrix
from .krein import (KreinOperator, KreinSpace, classify_spectrum, pp_projection,
                    suggest_definitizing)
from .models import ReferenceWeight, Window, split_k
from .operators import (build_diagonalization, build_H, build_K, build_Phi, in_rho,
                        resolvent_H, resolvent_K)

log = logging.getLogger("kreinkg")

RESOLVENT_RTOL = 1e-10
HAUSDORFF_RTOL = 1e-8
IDEMPOTENCY_TOL = 1e-8
VERIFY_RTOL = 1e-8
LAP_STABILITY_MAX = 2.0
LAP_UNWEIGHTED_GROWTH = 4.0
PENCIL_RATIO_RANGE = (0.1, 10.0)
PLANCHEREL_RTOL = 1e-3
CALCULUS_TOL = 1e-6
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class Run:
    cfg: object
    out: str
    workers: int
    seed: int
    refine: bool
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        log.info("check %s: %s %s", name, "PASS" if ok else "FAIL", detail)

    def note(self, text):
        self.notes.append(text)
        log.info("%s", text)

    def csv(self, name, header, rows):
        path = os.path.join(self.out, name)
        write_csv(path, header, rows)
        self.files.append(name)

    def matrix(self, name, A):
        write_matrix(os.path.join(self.out, name), A)
        self.files.append(name)

    def stage(self, name):
        return _Stage(self, name)


class _Stage:
    def __init__(self, run, name):
        self.run, self.name = run, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)

    def __exit__(self, *exc):
        self.run.stages[self.name] = self.run.stages.get(self.name, 0.0) + time.perf_counter() - self.t0
        return False


# ---------------------------------------------------------------- operators

def _krein_operator(cfg):
    m = cfg.model
    try:
        return KreinOperator(m["matrix"], KreinSpace(m["gram"]))
    except StructuralError as exc:
        raise cfg.error("model", "gram", str(exc)) from None


def _diagonalized(cfg, pair):
    R = cfg.operator["split_radius"]
    k1 = np.zeros((pair.n, pair.n)) if R is None else split_k(pair, R)[0]
    return build_diagonalization(pair, k1)


def _operators(cfg, names, refine=False):
    """Named :class:`KreinOperator` objects for the requested generators."""
    if cfg.model["kind"] == "krein":
        return {"A": _krein_operator(cfg)}, None
    pair = pair_of(cfg, refine)
    out = {}
    for name in names:
        if name == "H":
            out["H"] = build_H(pair).operator
        elif name == "K":
            out["K"] = build_K(pair).operator
        else:
            D = _diagonalized(cfg, pair)
            out["L"] = KreinOperator(D.L, KreinSpace(D.gram))
    return out, pair


def _generator(cfg, pair):
    which = cfg.operator["which"]
    if which == "H":
        return build_H(pair)
    if which == "K":
        return build_K(pair)
    D = _diagonalized(cfg, pair)
    return KreinOperator(D.L, KreinSpace(D.gram))


# ---------------------------------------------------------------- commands

def cmd_spectrum(run):
    cfg = run.cfg
    with run.stage("build"):
        ops, pair = _operators(cfg, cfg.analysis["operators"], run.refine)
    rows, spectra = [], {}
    with run.stage("classify"):
        for name, op in ops.items():
            cls = classify_spectrum(op)
            spectra[name] = np.linalg.eigvals(op.matrix)
            for r in sorted(cls.real_eigs, key=lambda r: r.value):
                rows.append((r.value, 0.0, r.multiplicity, r.riesz_index, "", name))
            pairs = sorted(cls.complex_pairs, key=lambda p: (p.upper.real, p.upper.imag))
            for i, p in enumerate(pairs):
                for z in (p.upper, p.lower):
                    rows.append((z.real, z.imag, p.multiplicity, p.riesz_index, "p%d" % i, name))
            run.note("%s: %d real eigenvalues, %d conjugate pairs"
                     % (name, len(cls.real_eigs), len(pairs)))
    run.csv("spectrum.csv", ["re", "im", "multiplicity", "riesz_index", "pair_id", "operator"],
            rows)
    names = list(spectra)
    for a, b in zip(names, names[1:]):
        pa = np.column_stack([spectra[a].real, spectra[a].imag])
        pb = np.column_stack([spectra[b].real, spectra[b].imag])
        d = max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0])
        scale = max(1.0, float(np.abs(spectra[a]).max()))
        run.check("hausdorff_%s_%s" % (a, b), d <= HAUSDORFF_RTOL * scale,
                  "distance %.3e (scale %.3g)" % (d, scale))
    if pair is not None and cfg.analysis["resolvent_samples"]:
        with run.stage("resolvents"):
            _resolvent_checks(run, pair)
    with run.stage("pp_projection"):
        op = next(iter(ops.values()))
        P = pp_projection(op)
        defect = float(np.linalg.norm(P @ P - P, 2)) / max(1.0, float(np.linalg.norm(P, 2)))
        rank = int(round(np.trace(P).real))
        run.check("pp_projection_idempotent", defect <= IDEMPOTENCY_TOL,
                  "rank %d, defect %.3e" % (rank, defect))


def _resolvent_checks(run, pair):
    rng = np.random.default_rng(run.seed)
    H = build_H(pair).matrix
    K = build_K(pair).matrix
    lam = np.linalg.eigvals(H)
    lo, hi = float(lam.real.min()), float(lam.real.max())
    rows, worst = [], 0.0
    count = run.cfg.analysis["resolvent_samples"]
    while len(rows) < 2 * count:
        z = complex(rng.uniform(lo, hi), rng.choice([-1, 1]) * rng.uniform(0.05, 1.0))
        if not in_rho(pair, z):
            continue
        for name, M, formula in (("H", H, resolvent_H), ("K", K, resolvent_K)):
            ref = np.linalg.inv(M - z * np.eye(M.shape[0]))
            err = float(np.linalg.norm(formula(pair, z) - ref, 2) / np.linalg.norm(ref, 2))
            worst = max(worst, err)
            rows.append((z.real, z.imag, name, err))
    run.csv("resolvent_check.csv", ["re", "im", "operator", "relative_error"], rows)
    run.check("resolvent_formulas", worst <= RESOLVENT_RTOL, "max relative error %.3e" % worst)


def cmd_pencil(run):
    cfg, an = run.cfg, run.cfg.analysis
    pair = pair_of(cfg, run.refine)
    weight = ReferenceWeight(grid_of(cfg, run.refine)) if pair.model is not None else None
    eps = an["eps"][-1]
    with run.stage("scan"):
        res = pencil_lap(pair, an["interval"], an["delta"], eps, weight, an["n_re"], run.workers)
    run.csv("pencil.csv", ["re", "eps", "pencil_norm", "energy_norm"],
            [(x, eps, p, e) for x, p, e in zip(res.re_grid, res.pencil_scan, res.energy_scan)])
    lo, hi = PENCIL_RATIO_RANGE
    run.check("pencil_equivalence", lo <= res.ratio <= hi,
              "pencil sup %.6g, energy sup %.6g, ratio %.4g" % (res.pencil_sup, res.energy_sup,
                                                              res.ratio))


def _lap_weight(cfg, pair, refine):
    return ReferenceWeight(grid_of(cfg, refine)) if pair is not None and pair.model is not None \
        else None


def _lap_at(run, refine):
    cfg, an = run.cfg, run.cfg.analysis
    if cfg.model["kind"] == "krein":
        op, pair = _krein_operator(cfg), None
    else:
        pair = pair_of(cfg, refine)
        op = _generator(cfg, pair)
    w = _lap_weight(cfg, pair, refine)
    out = {}
    for label, delta in (("weighted", an["delta"]), ("unweighted", 0.0)):
        out[label] = lap_scan(op, an["interval"], delta, an["eps"], w, an["n_re"], run.workers)
    n = pair.n if pair is not None else op.matrix.shape[0]
    R = grid_of(cfg, refine).R if pair is not None and pair.model is not None else 0.0
    return out, n, R, op


def cmd_lap(run):
    cfg, an = run.cfg, run.cfg.analysis
    levels = [False, True] if run.refine else [False]
    results, rows = [], []
    for refine in levels:
        with run.stage("scan_refined" if refine else "scan"):
            scans, n, R, op = _lap_at(run, refine)
        results.append(scans)
        w, u = scans["weighted"], scans["unweighted"]
        for i, eps in enumerate(w.eps_ladder):
            for j, x in enumerate(w.re_grid):
                rows.append((n, R, eps, x, w.table[i, j], u.table[i, j]))
        for label, s in scans.items():
            run.check("oracle_vs_formula_%s_n%d" % (label, n), s.verification <= VERIFY_RTOL,
                      "max relative deviation %.3e" % s.verification)
        run.note("n=%d: weighted sup %.6g, unweighted sup %.6g, ladder stability %.4g, "
                 "level spacing %.4g, eps >= 3 x spacing: %s"
                 % (n, w.sup, u.sup, w.stability_ratio, w.level_spacing,
                    "yes" if w.spacing_ok else "no"))
        if cfg.operator["which"] == "L" and not refine:
            a, b = an["interval"]
            z = 0.5 * (a + b) + 1j * an["eps"][-1]
            pair = pair_of(cfg, refine)
            D = _diagonalized(cfg, pair)
            from .models import build_a_chi, build_dilation_generator
            chi = Window(*(an["chi"] or _default_chi(an["interval"])))
            conj = build_a_chi(build_dilation_generator(grid_of(cfg), an["eta_radius"]), D, chi)
            cw = conjugate_weight_ratio(D.L, conj.A_diag, z, an["delta"], D.gram)
            run.note("conjugate-operator weight norm at z=%s: %.6g (reference weight %.6g, "
                     "ratio %.4g)" % (fmt(z), cw, w.table[-1, len(w.re_grid) // 2],
                                      cw / w.table[-1, len(w.re_grid) // 2]))
    run.csv("lap.csv", ["n", "R", "eps", "re", "weighted", "unweighted"], rows)
    if run.refine:
        base, fine = results
        rw = fine["weighted"].sup_per_eps[-1] / base["weighted"].sup_per_eps[-1]
        ru = fine["unweighted"].sup_per_eps[-1] / base["unweighted"].sup_per_eps[-1]
        run.check("weighted_stability", rw <= LAP_STABILITY_MAX,
                  "sup ratio under box doubling %.4g (<= %g)" % (rw, LAP_STABILITY_MAX))
        run.check("unweighted_growth", ru >= LAP_UNWEIGHTED_GROWTH,
                  "sup ratio under box doubling %.4g (>= %g)" % (ru, LAP_UNWEIGHTED_GROWTH))
        run.check("weighted_vs_unweighted", rw < ru, "%.4g < %.4g" % (rw, ru))


def _default_chi(interval):
    a, b = interval
    lo, hi = 0.75 * a * a, 1.3 * b * b
    return (lo, hi, 0.1 * (hi - lo))


def _packet(grid, center, momentum, width):
    s = grid.points
    g = np.exp(-((s - center) / width) ** 2) * np.exp(1j * momentum * s)
    return np.concatenate([g, np.zeros_like(g)])


def cmd_prop(run):
    cfg, an = run.cfg, run.cfg.analysis
    pair = pair_of(cfg, run.refine)
    if pair.model is None:
        raise cfg.error("model", "kind", "prop needs a grid model (kind = flat or radial)")
    grid = grid_of(cfg, run.refine)
    H = build_H(pair)
    a, b = an["interval"]
    chi = Window(*(an["chi"] or (a, b, 0.25 * (b - a))))
    eps = an["eps"][-1]
    f = _packet(grid, *an["packet"])
    w = ReferenceWeight(grid)
    lap_scan(H, (a, b), an["delta"], (eps,), w, 3, 1, verify=0)  # precondition on the window
    with run.stage("integrals"):
        rep = propagation_integral(H, chi, an["delta"], f, eps, an["horizon"], w, run.workers)
    with run.stage("bound"):
        K, S, kappa = propagation_bound_constant(H, chi, an["delta"], eps, (a, b), w)
        tout = plancherel_outside(H, chi, an["delta"], f, eps, (a, b), w)
    bound = S * S * K + tout
    run.csv("prop.csv", ["eps", "horizon", "time_value", "plancherel_value", "norm_f2", "C",
                         "mismatch", "lap_sup", "kappa", "K", "outside", "bound"],
            [(eps, rep.horizon, rep.time_value, rep.plancherel_value, rep.norm_f2, rep.constant,
              rep.mismatch, S, kappa, K, tout, bound)])
    run.check("plancherel_mismatch", rep.mismatch <= PLANCHEREL_RTOL,
              "relative mismatch %.3e" % rep.mismatch)
    run.check("propagation_bound", rep.constant <= bound,
              "C = %.6g <= S^2 K + outside = %.6g (S %.4g, K %.4g)" % (rep.constant, bound, S, K))


def cmd_mourre(run):
    cfg, an = run.cfg, run.cfg.analysis
    if cfg.model["kind"] not in ("flat",):
        raise cfg.error("model", "kind", "mourre runs on flat grid models")
    grid = grid_of(cfg, run.refine)
    pot = potential_of(cfg)
    a, b = an["interval"]
    chi = Window(*(an["chi"] or _default_chi((a, b))))
    f = Window(*(an["f_window"] or (a, b, 0.25 * (b - a))))
    c1 = an["c1"] or mourre_c1_prediction(f.support, pot.asymptotic_mass)
    with run.stage("forms"):
        rep = mourre_experiment(grid, pot, chi, f, c1, an["eta_radius"],
                                cfg.operator["split_radius"])
    rows = [(grid.n, i, e) for i, e in enumerate(rep.form_eigenvalues)]
    rows += [(2 * grid.n, i, e) for i, e in enumerate(rep.form_eigenvalues_refined)]
    run.csv("mourre.csv", ["n", "index", "eigenvalue"], rows)
    free = pot.v0 == 0 or cfg.model["potential"] == "none"
    run.note("dim Ran f(L) = %d, c1 = %.6g, min ratio %.6g, hermitian defect %.2e"
             % (rep.range_dim, c1, rep.min_ratio, rep.hermitian_defect))
    run.check("negative_rank_stable", rep.negative_rank == rep.negative_rank_refined,
              "%d at n=%d, %s at n=%d" % (rep.negative_rank, grid.n, rep.negative_rank_refined,
                                          2 * grid.n))
    run.check("negative_rank_budget", rep.negative_rank <= 8, "%d <= 8" % rep.negative_rank)
    if free:
        run.check("free_positivity", rep.passed(require_positive=True),
                  "negative rank %d (need 0), min ratio %.4g (need >= %.4g)"
                  % (rep.negative_rank, rep.min_ratio, 0.5 * c1))


def _function(name, args):
    if name == "gaussian":
        return Gaussian(*args)
    if name == "erf":
        return ErfPlateau(*args)
    return Pole(complex(args[0], args[1]))


def cmd_calculus(run):
    cfg, an = run.cfg, run.cfg.analysis
    if cfg.model["kind"] == "krein":
        op = _krein_operator(cfg)
    else:
        op = _generator(cfg, pair_of(cfg, run.refine))
        op = op.operator if hasattr(op, "operator") else op
    rows = []
    for name, args in an["functions"]:
        phi = _function(name, args)
        with run.stage("hs_%s" % name):
            hs = hs_calculus(op, phi, order=an["order"], tol=an["tol"],
                             max_level=an["max_level"], workers=run.workers)
        ref = eigen_oracle_calculus(op, phi)
        mis = float(np.linalg.norm(hs.matrix - ref.matrix, 2) /
                    max(1.0, np.linalg.norm(ref.matrix, 2)))
        label = "%s(%s)" % (name, " ".join(fmt(x) for x in args))
        rows.append((label, mis, hs.error_estimate, hs.levels, ref.eigenvector_condition))
        run.check("hs_vs_oracle %s" % label, mis <= CALCULUS_TOL, "mismatch %.3e" % mis)
    run.csv("calculus.csv", ["function", "mismatch", "hs_error_estimate", "levels",
                             "eigenvector_condition"], rows)


def cmd_definitize(run):
    cfg = run.cfg
    if cfg.model["kind"] == "krein":
        op = _krein_operator(cfg)
    else:
        op = _generator(cfg, pair_of(cfg, run.refine))
        op = op.operator if hasattr(op, "operator") else op
    with run.stage("suggest"):
        cands = suggest_definitizing(op)
    rows = [(i, c.degree, " ".join(fmt(x) for x in c.polynomial.coef), c.verified,
             c.min_form_eigenvalue) for i, c in enumerate(cands)]
    run.csv("definitize.csv", ["candidate", "degree", "coefficients", "verified",
                               "min_form_eigenvalue"], rows)
    good = [c for c in cands if c.verified]
    detail = ("lowest degree verified: %s" % " ".join(fmt(x) for x in good[0].polynomial.coef)
              if good else "no candidate verified")
    run.check("definitizing_polynomial", bool(good), detail)


def cmd_model_dump(run):
    cfg = run.cfg
    if cfg.model["kind"] == "krein":
        op = _krein_operator(cfg)
        run.matrix("A.mat", op.matrix)
        run.matrix("gram.mat", op.space.gram)
    else:
        pair = pair_of(cfg, run.refine)
        run.matrix("h.mat", pair.h)
        run.matrix("k.mat", pair.k)
        run.matrix("H.mat", build_H(pair).matrix)
        run.matrix("K.mat", build_K(pair).matrix)
        run.matrix("Phi.mat", build_Phi(pair))
        if cfg.operator["which"] == "L":
            D = _diagonalized(cfg, pair)
            run.matrix("L.mat", D.L)
            run.matrix("L_gram.mat", D.gram)
    run.check("written", True, "%d matrices" % len(run.files))


HANDLERS = {
    "spectrum": cmd_spectrum,
    "pencil": cmd_pencil,
    "lap": cmd_lap,
    "prop": cmd_prop,
    "mourre": cmd_mourre,
    "calculus": cmd_calculus,
    "definitize": cmd_definitize,
    "model-dump": cmd_model_dump,
}


# ---------------------------------------------------------------- runner

def build_parser():
    p = argparse.ArgumentParser(prog="kreinkg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI experiment config")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker threads for scans (default: available cores)")
    p.add_argument("--seed", type=int, help="seed for randomized checks (overrides run.seed)")
    p.add_argument("--refine", action="store_true", help="double n and R for stability checks")
    return p


def _setup_log(out):
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    handler = logging.FileHandler(os.path.join(out, "run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.propagate = False
    return handler


def _error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    for key in ("line", "field", "smallest_singular_value"):
        val = getattr(exc, key, None)
        if val is not None:
            rec[key] = val
    return rec


def _describe(exc):
    where = []
    if getattr(exc, "line", None):
        where.append("line %d" % exc.line)
    if getattr(exc, "field", None):
        where.append("field %s" % exc.field)
    return "%s%s: %s" % (type(exc).__name__, " (%s)" % ", ".join(where) if where else "", exc)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print("config error: %s" % _describe(exc), file=sys.stderr)
        return EXIT_USAGE
    if cfg.command is not None and cfg.command != args.command:
        print("config error: %s" % _describe(cfg.error(
            "run", "command", "config is for %r, not %r" % (cfg.command, args.command))),
            file=sys.stderr)
        return EXIT_USAGE
    out = args.out or cfg.output["directory"]
    os.makedirs(out, exist_ok=True)
    handler = _setup_log(out)
    seed = cfg.seed if args.seed is None else args.seed
    run = Run(cfg, out, args.workers, seed, args.refine)
    log.info("kreinkg %s %s config=%s workers=%d seed=%d refine=%s", __version__, args.command,
             args.config, args.workers, seed, args.refine)
    t0 = time.perf_counter()
    code, error = EXIT_OK, None
    try:
        HANDLERS[args.command](run)
        code = EXIT_OK if all(ok for _, ok, _ in run.checks) else EXIT_FAIL
    except (ConfigError, PreconditionError, InputError, StructuralError) as exc:
        code, error = EXIT_USAGE, exc
    except KreinError as exc:
        code, error = EXIT_FAIL, exc
    if error is not None:
        log.error("error %s", json.dumps(_error_record(error), sort_keys=True))
        print("error: %s" % _describe(error), file=sys.stderr)
    lines = ["%s %s %s" % ("PASS" if ok else "FAIL", name, detail) for name, ok, detail in run.checks]
    lines += ["NOTE %s" % n for n in run.notes]
    if error is not None:
        lines.append("ERROR %s" % _describe(error))
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    manifest = {
        "command": args.command,
        "config": os.path.abspath(args.config),
        "config_hash": cfg.config_hash,
        "seed": seed,
        "refine": args.refine,
        "toolkit_version": __version__,
        "workers": args.workers,
        "stages_seconds": run.stages,
        "wall_seconds": time.perf_counter() - t0,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "outputs": run.files + ["summary.txt", "run.log"],
        "exit_code": code,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    log.info("exit %d", code)
    log.removeHandler(handler)
    handler.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
