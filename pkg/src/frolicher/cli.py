"""Batch front-end: `frolicher <command> --model NAME | --file PATH [options]`.

Exit status: 0 on success, 1 when a checked invariant is violated, 2 on input errors.
"""

from __future__ import annotations

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .errors import (
    CapabilityError,
    DomainError,
    FrolicherError,
    IntegrabilityError,
    NumericalError,
    ParseError,
    PreconditionError,
    StructureError,
)
from .reports import Report

COMMANDS = ("validate", "pages", "dh", "favb", "tower", "sg", "family")
INPUT_ERRORS = (ParseError, DomainError, StructureError, IntegrabilityError, CapabilityError, LookupError, OSError)


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str | None = None
    file: str | None = None
    k: int | None = None
    r: int | None = None
    h_grid: tuple[complex, ...] | None = None
    t_grid: tuple[complex, ...] | None = None
    seed: int = 0
    tol_rank: float = 1e-9
    tol_zero: float = 1e-10
    format: str = "table"
    out: str | None = None
    jobs: int | None = None
    metric: str = "identity"
    mode: str = "favb"
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise DomainError(f"unknown command {self.command!r}")
        if (self.model is None) == (self.file is None):
            raise DomainError("give exactly one of --model or --file")
        if not (self.tol_rank > 0 and self.tol_zero > 0):
            raise DomainError("tolerances must be positive")
        for name in ("h_grid", "t_grid"):
            grid = getattr(self, name)
            if grid is not None and not grid:
                raise DomainError(f"{name.replace('_', '-')} is empty")
        if self.format not in ("table", "csv", "json"):
            raise DomainError(f"unknown format {self.format!r}")


# ------------------------------------------------------------------ parsing


def parse_complex(text: str) -> complex:
    s = text.strip().replace(" ", "")
    if s.endswith("i"):
        s = s[:-1] + "j"
    if s in ("j", "+j", "-j"):
        s = s.replace("j", "1j")
    try:
        return complex(s)
    except ValueError:
        raise DomainError(f"bad complex number {text!r}") from None


def parse_grid(text: str) -> tuple[complex, ...]:
    """Comma-separated complex values, or `square:<radius>:<count>` for a count x count grid."""
    if text.startswith("square:"):
        try:
            _, radius, count = text.split(":")
            radius, count = float(radius), int(count)
        except ValueError:
            raise DomainError(f"bad grid {text!r}; expected square:<radius>:<count>") from None
        xs = np.linspace(-radius, radius, count) if count > 1 else np.zeros(1)
        return tuple(complex(a, b) for b in xs for a in xs)
    return tuple(parse_complex(x) for x in text.split(",") if x.strip())


def _load(cfg: RunConfig):
    from .modelfile import parse_model_file
    from .models import catalog

    return catalog(cfg.model) if cfg.model is not None else parse_model_file(cfg.file)


def _model_of(spec):
    from .models import FamilySpec, build_model, family_at

    if isinstance(spec, FamilySpec):
        spec = family_at(spec, 0)
    return build_model(spec)


# ----------------------------------------------------------------- commands


def _cmd_validate(cfg, spec, rep: Report) -> None:
    from .bicomplex import d_h_total, validate_bicomplex
    from .numerics import annulus_sample, zero_cutoff

    M = _model_of(spec)
    B = M.bicomplex
    vr = validate_bicomplex(B)
    rep.columns = ("check", "location", "residual", "threshold", "ok")
    rep.rows.append(("bicomplex", "all", vr.max_residual, vr.threshold, vr.valid))
    for v in vr.violations:
        rep.rows.append((v.identity, f"({v.bidegree[0]},{v.bidegree[1]})", v.residual, vr.threshold, False))
    ok = vr.valid
    rng = np.random.default_rng(cfg.seed)
    for h in annulus_sample(rng, 8):
        worst = 0.0
        for k in range(2 * B.n - 1):
            worst = max(worst, float(np.abs(d_h_total(B, h, k + 1) @ d_h_total(B, h, k)).max(initial=0.0)))
        thr = zero_cutoff(B.max_norm() ** 2 * (1 + abs(h)) ** 2)
        rep.rows.append(("d_h o d_h", f"h={h.real:.6g}{h.imag:+.6g}i", worst, thr, worst <= thr))
        ok &= worst <= thr
    rep.summary["valid"] = ok
    rep.status = 0 if ok else 1


def _cmd_pages(cfg, spec, rep: Report) -> None:
    from .bicomplex import betti
    from .spectral import check_page_invariants, degeneration_page, page

    B = _model_of(spec).bicomplex
    dp = degeneration_page(B)
    r_top = cfg.r if cfg.r is not None else dp + 1
    if r_top < 1:
        raise DomainError("--r must be >= 1")
    rep.columns = ("r", "p", "q", "dim")
    for r in range(1, r_top + 1):
        pt = page(B, r)
        for p, q in B.grading.all_bidegrees():
            rep.rows.append((r, p, q, pt.dim(p, q)))
        rep.summary[f"totals_E{r}"] = list(pt.totals)
    rep.summary["betti"] = list(betti(B))
    rep.summary["degeneration_page"] = dp
    problems = check_page_invariants(B)
    rep.messages.extend(problems)
    rep.status = 1 if problems else 0


def _cmd_dh(cfg, spec, rep: Report) -> None:
    from .bicomplex import betti, cohomology_dim
    from .harmonic import default_h_grid, parallel_map

    B = _model_of(spec).bicomplex
    b = betti(B)
    ks = [cfg.k] if cfg.k is not None else list(range(2 * B.n + 1))
    grid = list(cfg.h_grid or default_h_grid())
    rep.columns = ("k", "h_real", "h_imag", "dim", "b_k")
    bad = 0
    jobs = [(k, h) for k in ks for h in grid]
    dims = parallel_map(lambda kh: cohomology_dim(B, kh[0], kh[1]), jobs, cfg.jobs)
    for (k, h), d in zip(jobs, dims):
        rep.rows.append((k, h.real, h.imag, d, b[k]))
        if h != 0 and d != b[k]:
            bad += 1
    rep.summary["mismatches_h_nonzero"] = bad
    rep.status = 1 if bad else 0


def _cmd_favb(cfg, spec, rep: Report) -> None:
    from .harmonic import favb_scan
    from .spectral import degeneration_page

    M = _model_of(spec)
    k = 1 if cfg.k is None else cfg.k
    r = cfg.r if cfg.r is not None else degeneration_page(M.bicomplex)
    sc = favb_scan(M, k, r, cfg.h_grid, jobs=cfg.jobs)
    rep.columns = ("h_real", "h_imag", "kernel_dim", "lambda_bk", "lambda_bk_plus_1")
    for pt in sc.points:
        lb = float("nan") if pt.lambda_bk is None else pt.lambda_bk
        lb1 = float("nan") if pt.lambda_bk_plus_1 is None else pt.lambda_bk_plus_1
        rep.rows.append((pt.h.real, pt.h.imag, pt.kernel_dim, lb, lb1))
    rep.summary.update({"k": k, "r": r, "b_k": sc.b_k, "constant_rank": sc.constant_rank, "jumps": list(sc.jumps)})
    if not sc.constant_rank:
        rep.messages.append(f"rank jump: kernel dimension differs from b_k = {sc.b_k} at h in {list(sc.jumps)}")
    rep.status = 0 if sc.constant_rank else 1


def _cmd_tower(cfg, spec, rep: Report) -> None:
    from .harmonic import harmonic_tower
    from .numerics import rank
    from .spectral import degeneration_page, dr_map, page_cell

    M = _model_of(spec)
    B = M.bicomplex
    r_max = cfg.r if cfg.r is not None else degeneration_page(B) + 1
    r_max = min(r_max, B.n + 1)
    tower = harmonic_tower(M, r_max)
    rep.columns = ("r", "p", "q", "dim_H", "dim_E", "rank_d_omega", "rank_d_r", "agree")
    bad = 0
    for r in range(1, r_max + 1):
        for p, q in B.grading.all_bidegrees():
            dh = tower.dim(r, p, q)
            de = page_cell(B, p, q, r).dim
            ro = rank(tower.d_omega(r, p, q))
            rr = rank(dr_map(B, r, p, q)) if de else 0
            ok = dh == de and ro == rr
            bad += not ok
            rep.rows.append((r, p, q, dh, de, ro, rr, ok))
    rep.summary.update({"r_max": r_max, "mismatches": bad})
    rep.status = 1 if bad else 0


def _metric(cfg, n: int):
    from .sg import HermitianMetric

    if cfg.metric == "identity":
        return HermitianMetric.identity(n)
    if cfg.metric == "random":
        return HermitianMetric.random(n, np.random.default_rng(cfg.seed))
    raise DomainError(f"unknown metric {cfg.metric!r}; use identity or random")


def _cmd_sg(cfg, spec, rep: Report) -> None:
    from .sg import is_gauduchon, sg_level

    M = _model_of(spec)
    gamma = _metric(cfg, M.n)
    rep.columns = ("metric", "min_eigenvalue", "gauduchon", "sg_level", "del_norm")
    if not is_gauduchon(M, gamma):
        rep.rows.append((cfg.metric, float(gamma.eigenvalues.min()), False, "", float("nan")))
        rep.messages.append("metric is not Gauduchon; sG level undefined")
        rep.status = 1
        return
    sr = sg_level(M, gamma)
    rep.rows.append((cfg.metric, float(gamma.eigenvalues.min()), True, sr.level_label, sr.del_norm))
    rep.summary["sg_level"] = sr.level_label


def _cmd_family(cfg, spec, rep: Report) -> None:
    from .harmonic import family_scan
    from .models import FamilySpec
    from .sg import family_sg_scan

    if not isinstance(spec, FamilySpec):
        raise DomainError("the family command needs a family model")
    ts = cfg.t_grid or (0j,)
    if cfg.mode == "sg":
        sc = family_sg_scan(spec, _metric(cfg, spec.n), ts, jobs=cfg.jobs)
        rep.columns = ("t_real", "t_imag", "min_eigenvalue", "gauduchon", "sg_level", "error")
        for pt in sc.points:
            ev = float("nan") if pt.min_eigenvalue is None else pt.min_eigenvalue
            g = pt.report.gauduchon if pt.report else False
            lvl = pt.report.level_label if pt.report else ""
            rep.rows.append((pt.t.real, pt.t.imag, ev, g, lvl, pt.error or ""))
        ff = sc.first_failure
        rep.summary.update({"positivity_maintained": sc.positivity_maintained, "first_failure": ff})
        rep.status = 0 if ff is None else 1
        return
    if cfg.mode != "favb":
        raise DomainError(f"unknown family mode {cfg.mode!r}; use favb or sg")
    k = 1 if cfg.k is None else cfg.k
    sc = family_scan(spec, k, cfg.h_grid, ts, jobs=cfg.jobs)
    rep.columns = ("t_real", "t_imag", "h_real", "h_imag", "kernel_dim", "degen_page")
    for row in sc.rows:
        rep.rows.append((row.t.real, row.t.imag, row.h.real, row.h.imag, row.kernel_dim, row.degen_page))
    rep.summary.update(
        {"k": k, "b_k": sc.b_k, "r": sc.r, "constant_rank": sc.constant_rank, "hodge_usc": sc.hodge_usc, "e1_open": sc.e1_open}
    )
    rep.status = 0 if (sc.constant_rank and sc.hodge_usc and sc.e1_open is not False) else 1


_DISPATCH = {
    "validate": _cmd_validate,
    "pages": _cmd_pages,
    "dh": _cmd_dh,
    "favb": _cmd_favb,
    "tower": _cmd_tower,
    "sg": _cmd_sg,
    "family": _cmd_family,
}


def run(cfg: RunConfig) -> tuple[int, Report]:
    """Execute one command; never raises for library errors, which map onto exit statuses."""
    from .numerics import using_tolerances

    rep = Report(cfg.command, ())
    rep.meta = {
        "tool": "frolicher",
        "version": __version__,
        "command": cfg.command,
        "seed": cfg.seed,
        "tol_rank": cfg.tol_rank,
        "tol_zero": cfg.tol_zero,
        "model": cfg.model if cfg.model is not None else os.path.basename(cfg.file),
    }
    try:
        with using_tolerances(rank=cfg.tol_rank, zero=cfg.tol_zero):
            spec = _load(cfg)
            rep.meta["model_hash"] = spec.digest()
            _DISPATCH[cfg.command](cfg, spec, rep)
    except INPUT_ERRORS as exc:
        rep.status = 2
        rep.messages.append(f"error: {type(exc).__name__}: {exc}")
    except (NumericalError, PreconditionError, FrolicherError) as exc:
        rep.status = 1
        rep.messages.append(f"error: {type(exc).__name__}: {exc}")
    rep.meta.setdefault("model_hash", "")
    return rep.status, rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frolicher", description="Frolicher spectral sequence toolkit")
    ap.add_argument("--version", action="version", version=f"frolicher {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--model", help="catalog name")
        src.add_argument("--file", help="structure-equation file")
        sp.add_argument("--k", type=int)
        sp.add_argument("--r", type=int)
        sp.add_argument("--h-grid", help="comma-separated complex values, e.g. 0,0.5,1i")
        sp.add_argument("--t-grid", help="comma-separated complex values or square:<radius>:<count>")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol-rank", type=float, default=1e-9)
        sp.add_argument("--tol-zero", type=float, default=1e-10)
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--metric", choices=("identity", "random"), default="identity")
        if name == "family":
            sp.add_argument("--mode", choices=("favb", "sg"), default="favb")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = RunConfig(
            command=ns.command,
            model=ns.model,
            file=ns.file,
            k=ns.k,
            r=ns.r,
            h_grid=parse_grid(ns.h_grid) if ns.h_grid else None,
            t_grid=parse_grid(ns.t_grid) if ns.t_grid else None,
            seed=ns.seed,
            tol_rank=ns.tol_rank,
            tol_zero=ns.tol_zero,
            format=ns.format,
            out=ns.out,
            jobs=ns.jobs,
            metric=ns.metric,
            mode=getattr(ns, "mode", "favb"),
        )
    except DomainError as exc:
        print(f"error: DomainError: {exc}", file=sys.stderr)
        return 2
    status, rep = run(cfg)
    text = rep.render(cfg.format)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for msg in rep.messages:
        if msg.startswith("error:"):
            print(msg, file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
