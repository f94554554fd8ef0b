"""Command-line entry point: ``fracmag <verb> --config FILE [--out DIR]``.

Verbs: assemble, check, dnmap, identity, runge, reconstruct, kernel-check.
Every verb writes a ``manifest_<verb>.json`` listing its outputs with
SHA-256 digests and a pass/fail summary; the exit code is 0 iff all
checks pass (2 for configuration errors).
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .assembly import GridFunction, assemble_fractional_laplacian, assemble_L, cell_quadrature
from .config import RunConfig, load_config
from .geometry import ConfigError, FieldSpec
from .inverse import (
    ContrastCells,
    born_reconstruct,
    cell_targets,
    recover_contrast_oracle,
    runge_approximate,
)
from .io import RunManifest, write_csv, write_json, write_matrix
from .kernel import KernelSpec, fit_kernel_bounds, fractional_kernel, kernel_from_heat
from .magnetic import PhaseContext, phase_locality_check
from .norms import norm_equivalence_report, random_grid_function
from .solver import Model, check_coercivity, dn_map, integral_identity_residual, random_exterior_data

log = logging.getLogger("fracmag")

IDENTITY_TOL = 1e-8
DUALITY_L_TOL = 1e-12
DUALITY_DN_TOL = 1e-10
PSD_TOL = 1e-10
KERNEL_TOL = 0.01
RUNGE_MONOTONE_TOL = 1e-12
ZERO_CONTRAST_TOL = 1e-6
IMAG_TOL = 1e-8


def build_model(rc: RunConfig) -> Model:
    return Model(rc.problem, KernelSpec("closed_form", rc.problem.n, rc.problem.s), rc.order)


# ----------------------------------------------------------------------------
# Invariant suites
# ----------------------------------------------------------------------------

def _quadrature_points_in(model: Model, inside) -> np.ndarray:
    pts, _, _ = cell_quadrature(model.grid, max(model.order, 2))
    flat = pts.reshape(-1, model.grid.n)
    return flat[inside(flat)]


def locality_reports(model: Model) -> dict:
    """Phase locality over quadrature points of each window and of Omega."""
    cfg = model.config
    ctx = model.phase(+1)
    yo = _quadrature_points_in(model, lambda p: cfg.omega.contains(p))
    out = {}
    for w in cfg.windows:
        xw = _quadrature_points_in(model, w.contains)
        out[w.name] = phase_locality_check(ctx, xw, yo, cfg.r, window=w)
    return out


def kernel_consistency(n: int, s: float, h: float, r: float, samples: int = 25) -> dict:
    """Heat-kernel K against the closed form on ``|x - y|`` in ``[h, 2r]``."""
    d = np.linspace(h, 2 * r, samples)
    x = np.zeros((samples, n))
    y = np.zeros((samples, n))
    y[:, 0] = d
    heat = np.asarray(kernel_from_heat(x, y, KernelSpec("heat_identity", n, s)), dtype=float).reshape(-1)
    closed = np.asarray(fractional_kernel(x, y, KernelSpec("closed_form", n, s)), dtype=float).reshape(-1)
    rel = np.abs(heat - closed) / closed
    c1, c2 = fit_kernel_bounds(d, heat, n, s)
    return {"distances": d, "heat": heat, "closed": closed, "rel_error": rel,
            "max_rel_error": float(rel.max()), "C1": c1, "C2": c2}


def run_checks(rc: RunConfig, model: Model, rng: np.random.Generator, manifest: RunManifest) -> dict:
    cfg = model.config
    q1 = model.q(0)
    report = {}

    LA, LmA = model.L(+1), model.L(-1)
    dev = float(np.max(np.abs(LA.data - LmA.data.T)))
    manifest.check("duality_L", dev <= DUALITY_L_TOL, value=dev, tol=DUALITY_L_TOL)

    dev_dn = float(np.max(np.abs(dn_map(model.form(q1, +1)).data.T - dn_map(model.form(q1, -1)).data)))
    manifest.check("duality_DN", dev_dn <= DUALITY_DN_TOL, value=dev_dn, tol=DUALITY_DN_TOL)

    zero = PhaseContext(FieldSpec.zero(True, cfg.n), +1)
    La0 = assemble_L(model.grid, model.partition, model.kernel, zero, model.order)
    L0 = assemble_fractional_laplacian(model.grid, model.partition, model.kernel, model.order)
    manifest.check("zero_field_reduction", bool(np.array_equal(La0.data, L0.data)))

    H = LA.data
    herm = float(np.max(np.abs(H - H.conj().T)))
    norm = float(np.linalg.norm(H, 2))
    lam_min = float(np.linalg.eigvalsh(0.5 * (H + H.conj().T))[0])
    manifest.check("hermitian_psd", herm <= 1e-12 * norm and lam_min >= -PSD_TOL * norm,
                   hermitian_error=herm, min_eigenvalue=lam_min, spectral_norm=norm)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        coer = {f"q{k + 1}": check_coercivity(model.form(model.q(k), +1)) for k in range(len(cfg.q_specs))}
    manifest.check("coercivity", all(v > 0 for v in coer.values()), min_eigenvalues=coer)

    samples = [random_grid_function(model.grid, model.partition.active, rng)
               for _ in range(rc.solver.check_samples)]
    eq = norm_equivalence_report(samples, model.phase(+1), cfg.s, model.order)
    manifest.check("norm_equivalence", eq.passed, **eq.to_dict())

    for name, rep in locality_reports(model).items():
        manifest.check(f"phase_locality_{name}", rep.passed, **rep.to_dict())

    kc = kernel_consistency(cfg.n, cfg.s, cfg.h, cfg.r)
    manifest.check("kernel_bounds", kc["max_rel_error"] <= KERNEL_TOL and 0 < kc["C1"] <= kc["C2"] < np.inf,
                   max_rel_error=kc["max_rel_error"], C1=kc["C1"], C2=kc["C2"])
    report.update(manifest.checks)
    return report


# ----------------------------------------------------------------------------
# Verbs
# ----------------------------------------------------------------------------

def cmd_assemble(rc: RunConfig, model: Model, out: Path, rng, manifest: RunManifest) -> None:
    part = model.partition
    L = model.L(+1)
    manifest.add(write_matrix(out / "L", L.data, L.meta, part.active))
    seen = []
    for k, q in enumerate(model.config.q_specs):
        if q in seen:
            continue
        seen.append(q)
        Q = model.Q(q)
        manifest.add(write_matrix(out / f"Q{k + 1}", Q.data, Q.meta, part.active))
    sizes = part.sizes()
    manifest.add(write_json(out / "partition.json", {
        "sizes": sizes, "interior": part.interior, "frozen": part.frozen,
        "exterior_other": part.exterior_other,
        "windows": {name: part.window(name) for name in part.window_names},
        "grid": {"n": model.grid.n, "h": model.grid.h, "nodes_per_axis": model.grid.m},
    }))
    manifest.check("assembled", bool(np.all(np.isfinite(L.data))))


def cmd_check(rc, model, out, rng, manifest) -> None:
    report = run_checks(rc, model, rng, manifest)
    manifest.add(write_json(out / "check_report.json", report))


def cmd_dnmap(rc, model, out, rng, manifest) -> None:
    for k, q in enumerate(model.config.q_specs):
        for sign, tag in ((+1, "A"), (-1, "minusA")):
            lam = dn_map(model.form(q, sign))
            manifest.add(write_matrix(out / f"dn_q{k + 1}_{tag}", lam.data, {**lam.meta, "q": k + 1}, lam.dofs))
    q1 = model.q(0)
    dev = float(np.max(np.abs(dn_map(model.form(q1, +1)).data.T - dn_map(model.form(q1, -1)).data)))
    manifest.check("duality_DN", dev <= DUALITY_DN_TOL, value=dev)


def _windows(model: Model) -> tuple[str, str]:
    names = [w.name for w in model.config.windows]
    if len(names) < 2:
        raise ConfigError("windows", "need two windows")
    return names[0], names[1]


def cmd_identity(rc, model, out, rng, manifest) -> None:
    w1, w2 = _windows(model)
    q1, q2 = model.q(0), model.q(1)
    records = []
    for _ in range(rc.solver.identity_pairs):
        g1 = random_exterior_data(model, w1, rng)
        g2 = random_exterior_data(model, w2, rng)
        records.append(integral_identity_residual(model, q1, q2, g1, g2).to_dict())
    worst = max(r["residual"] for r in records)
    manifest.add(write_json(out / "identity.json", {"config_sha256": rc.digest, "records": records,
                                                     "max_residual": worst}))
    manifest.check("identity", worst <= IDENTITY_TOL, max_residual=worst, tol=IDENTITY_TOL)


def cmd_runge(rc, model, out, rng, manifest) -> None:
    inv = rc.inverse
    idx = model.partition.interior
    if inv.target == "one":
        f = np.ones(len(idx))
    else:
        cells = ContrastCells.for_config(model.config, inv.divisions)
        k = int(inv.target.split(":")[1])
        if k >= cells.count:
            raise ConfigError("inverse.target", f"cell index {k} out of range")
        f = cell_targets(model, cells)[0][:, k]
    target = GridFunction.from_dofs(model.grid, idx, f)
    B = model.form(model.q(0), inv.sign)
    res = runge_approximate(model, target, inv.source_window, B, inv.reg, curve=True, reg_scale=inv.reg_scale)
    curve = res.curve
    manifest.add(write_csv(out / "runge_curve.csv", ["sources", "relative_error"],
                           [(m + 1, e) for m, e in enumerate(curve)]))
    manifest.add(write_json(out / "runge.json", {**res.to_dict(), "target": inv.target,
                                                  "window": inv.source_window, "sign": inv.sign}))
    rise = float(np.max(np.diff(curve))) if len(curve) > 1 else 0.0
    manifest.check("runge_monotone", rise <= RUNGE_MONOTONE_TOL, max_increase=rise)


def _reconstruction_rows(res, n):
    rows = []
    for c in range(len(res.recovered)):
        ref = res.reference[c] if res.reference is not None else float("nan")
        rows.append((*res.centers[c], res.recovered[c], ref, res.recovered[c] - ref))
    return rows


def cmd_reconstruct(rc, model, out, rng, manifest) -> None:
    inv = rc.inverse
    cfg = model.config
    q1, q2 = model.q(0), model.q(1)
    windows = _windows(model)
    cells = ContrastCells.for_config(cfg, inv.divisions)
    lam1 = dn_map(model.form(q1, +1))
    lam2 = dn_map(model.form(q2, +1))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        oracle = recover_contrast_oracle(model, lam1, lam2, q1, q2, cells, windows, inv.reg, inv.runge_tol,
                                         inv.budget, inv.reg_scale)
        born = born_reconstruct(model, lam1 - lam2, q2, cells, windows, inv.reg, reference_q1=q1,
                                reg_scale=inv.reg_scale)
    header = [f"x{k}" for k in range(cfg.n)] + ["recovered", "reference", "error"]
    for res in (oracle, born):
        manifest.add(write_csv(out / f"reconstruction_{res.mode}.csv", header, _reconstruction_rows(res, cfg.n)))
    summary = {"oracle": oracle.to_dict(), "born": born.to_dict(),
               "warnings": [str(w.message) for w in caught],
               "born_target": {"rel_error": born.rel_error, "threshold": 0.3}}
    manifest.add(write_json(out / "reconstruction.json", summary))
    gap = np.abs(oracle.recovered - oracle.reference)
    manifest.check("oracle_error_bound", bool(np.all(gap <= np.asarray(oracle.trace["error_bound"]))),
                   max_gap=float(gap.max()))
    if cfg.a_spec.is_zero():
        manifest.check("oracle_real", oracle.imag_residue <= IMAG_TOL, imag_residue=oracle.imag_residue)
    if q1 == q2:
        worst = max(float(np.max(np.abs(oracle.recovered))), float(np.max(np.abs(born.recovered))))
        manifest.check("zero_contrast", worst <= ZERO_CONTRAST_TOL, max_abs=worst)


def cmd_kernel_check(rc, model, out, rng, manifest) -> None:
    cfg = rc.problem
    kc = kernel_consistency(cfg.n, cfg.s, cfg.h, cfg.r)
    manifest.add(write_csv(out / "kernel_check.csv", ["distance", "heat", "closed_form", "rel_error"],
                           zip(kc["distances"], kc["heat"], kc["closed"], kc["rel_error"])))
    manifest.add(write_json(out / "kernel_check.json", {k: kc[k] for k in ("max_rel_error", "C1", "C2")}))
    manifest.check("kernel_consistency", kc["max_rel_error"] <= KERNEL_TOL, max_rel_error=kc["max_rel_error"])
    manifest.check("kernel_bounds", 0 < kc["C1"] <= kc["C2"] < np.inf, C1=kc["C1"], C2=kc["C2"])


COMMANDS = {
    "assemble": cmd_assemble,
    "check": cmd_check,
    "dnmap": cmd_dnmap,
    "identity": cmd_identity,
    "runge": cmd_runge,
    "reconstruct": cmd_reconstruct,
    "kernel-check": cmd_kernel_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracmag", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path, help="TOML configuration file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="override the configured random seed")
    p.add_argument("--threads", type=int, default=None, help="limit BLAS threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _thread_limit(n: int | None):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = load_config(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    seed = rc.seed if args.seed is None else args.seed
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(args.command, str(args.config), rc.digest, out, seed)
    try:
        with _thread_limit(args.threads):
            model = build_model(rc)
            COMMANDS[args.command](rc, model, out, np.random.default_rng(seed), manifest)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        manifest.check("completed", False, error=str(exc))
        manifest.write()
        return 1
    path = manifest.write()
    for name, res in manifest.checks.items():
        log.info("%s: %s", name, "pass" if res["passed"] else "FAIL")
    print(f"{args.command}: {'ok' if manifest.passed else 'FAILED'} ({path})")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
