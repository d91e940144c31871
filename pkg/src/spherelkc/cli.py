"""Batch front end: ``spherelkc COMMAND --config FILE [--output DIR]``.

Each run writes ``<command>.csv`` and ``manifest.txt`` into the output
directory. The manifest is itself a valid config (its ``[manifest]``
section is ignored on input), so running it again reproduces the CSV.
Failures exit nonzero and leave a JSON error record in ``error.json``
and on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, load_config
from .geometry import summarize
from .lkc import excursion_prob_approx, expected_lkc_eigen, expected_lkc_gaussian
from .montecarlo import WORKERS_ENV, McConfig, mc_cumulant_decay, mc_sup_probability, mc_validate_lkcs
from .simsphere import ResolutionError, build_gjq, make_grid, sample_alm, synthesize, write_binary, write_text
from .spectra import (
    PowerSpectrum,
    field_variance,
    lambda_jq,
    spectral_moment,
    transformed_spectrum,
)
from .wigner import UnsupportedOrderError

__all__ = ["main", "run"]

EXIT_CONFIG = 2
EXIT_RESOLUTION = 3
EXIT_ORDER = 4
EXIT_OTHER = 1


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _csv(header, rows, cfg):
    buf = io.StringIO()
    buf.write(f"# spherelkc {__version__} config_hash={cfg.hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (str, int)) else _num(v) for v in r])
    return buf.getvalue()


def _mc_config(cfg):
    if cfg.kind == "eigen":
        return McConfig(kind="eigen", ell=cfg.ell, grid=tuple(cfg.grid), geometry_grid=cfg.geometry_grid)
    return McConfig(
        cfg.spectrum(), cfg.window(), cfg.kernel(), cfg.q, tuple(cfg.grid), cfg.geometry_grid
    )


# ---------------------------------------------------------------------------
# commands; each returns (csv text, extra manifest entries)


def _cmd_spectra(cfg):
    spec, w, k = cfg.spectrum(), cfg.window(), cfg.kernel()
    ts = transformed_spectrum(cfg.q, w, spec, k)
    L = max(w.ell_hi, k.L_K)
    cl = spec.array(L)
    b2 = w.b2_array(L)
    kap = k.array(L)
    cjq = np.zeros(L + 1)
    cjq[: ts.L_K + 1] = ts.values
    rows = [(ell, cl[ell], b2[ell], kap[ell] ** 2, cjq[ell]) for ell in range(L + 1)]
    ell = np.arange(L + 1)
    extra = {
        "sum_beta_variance": repr(float(np.sum((2 * ell + 1) * b2 * cl) / (4 * math.pi))),
        "beta_variance": repr(field_variance(w, spec)),
        "sum_transformed_variance": repr(float(np.sum((2 * ell + 1) * cjq) / (4 * math.pi))),
        "transformed_variance": repr(ts.variance()),
        "lambda_j": repr(spectral_moment(w, spec)),
        "lambda_jq": repr(lambda_jq(ts)),
    }
    return _csv(("ell", "C_ell", "b2", "kappa2", "C_ell_jq"), rows, cfg), extra


def _cmd_lkc_theory(cfg):
    if cfg.kind == "eigen":
        lam = cfg.ell * (cfg.ell + 1) / 2.0
        tri = lambda u: expected_lkc_eigen(u, cfg.ell)  # noqa: E731
    else:
        lam = lambda_jq(transformed_spectrum(cfg.q, cfg.window(), cfg.spectrum(), cfg.kernel()))
        tri = lambda u: expected_lkc_gaussian(u, lam)  # noqa: E731
    rows = []
    for u in cfg.levels:
        t = tri(u)
        rows.append((u, t.l0, t.l1, t.l2, t.boundary_length, excursion_prob_approx(u, lam)))
    return _csv(("u", "l0", "l1", "l2", "len", "exc_prob"), rows, cfg), {"lambda": repr(lam)}


def _cmd_simulate(cfg, outdir):
    grid = make_grid(*cfg.grid)
    if cfg.kind == "eigen":
        cl = np.zeros(cfg.ell + 1)
        cl[cfg.ell] = 4 * math.pi / (2 * cfg.ell + 1)
        fld = synthesize(sample_alm(PowerSpectrum.tabulated(cl), cfg.ell, cfg.seed, cfg.replicate), grid)
    else:
        _, fld = build_gjq(cfg.spectrum(), cfg.window(), cfg.kernel(), cfg.q, grid, cfg.seed, cfg.replicate)
    name = "field.bin" if cfg.format == "binary" else "field.txt"
    (write_binary if cfg.format == "binary" else write_text)(fld, os.path.join(outdir, name))
    rows = []
    for u in cfg.levels:
        s = summarize(fld, grid, u)
        rows.append((u, s.area, s.boundary_length, s.euler_char, s.sup_value))
    return _csv(("u", "area", "boundary_length", "euler_char", "sup"), rows, cfg), {"field_file": name}


def _report_out(cfg, rep):
    rep.manifest["model_hash"] = rep.manifest["config_hash"]
    rep.manifest["config_hash"] = cfg.hash()
    extra = {k: v for k, v in rep.manifest.items() if k not in ("version", "config_hash", "seed", "replicates")}
    for i, wmsg in enumerate(rep.warnings):
        extra[f"warning_{i}"] = wmsg
    return rep.to_csv(), extra


def _cmd_mc_validate(cfg):
    return _report_out(cfg, mc_validate_lkcs(_mc_config(cfg), cfg.levels, cfg.replicates, cfg.seed))


def _cmd_mc_sup(cfg):
    return _report_out(cfg, mc_sup_probability(_mc_config(cfg), cfg.levels, cfg.replicates, cfg.seed))


def _cmd_cum4(cfg):
    tab = mc_cumulant_decay(cfg.spectrum(), cfg.B, cfg.kernel(), cfg.q, cfg.j_list, cfg.replicates, cfg.seed)
    tab.manifest["config_hash"] = cfg.hash()
    extra = {"slope": repr(tab.slope), "slope_per_logB": repr(tab.slope_per_logB)}
    for i, wmsg in enumerate(tab.warnings):
        extra[f"warning_{i}"] = wmsg
    return tab.to_csv(), extra


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run(cfg):
    """Execute one configured command; returns the paths written."""
    outdir = cfg.output
    os.makedirs(outdir, exist_ok=True)
    if cfg.command == "spectra":
        text, extra = _cmd_spectra(cfg)
    elif cfg.command == "lkc-theory":
        text, extra = _cmd_lkc_theory(cfg)
    elif cfg.command == "simulate":
        text, extra = _cmd_simulate(cfg, outdir)
    elif cfg.command == "mc-validate":
        text, extra = _cmd_mc_validate(cfg)
    elif cfg.command == "mc-sup":
        text, extra = _cmd_mc_sup(cfg)
    else:
        text, extra = _cmd_cum4(cfg)
    csv_path = os.path.join(outdir, f"{cfg.command}.csv")
    _write(csv_path, text)
    man = [cfg.to_text().rstrip("\n"), "", "[manifest]", f"version = {__version__}", f"config_hash = {cfg.hash()}"]
    man += [f"{k} = {v}" for k, v in sorted(extra.items())]
    man_path = os.path.join(outdir, "manifest.txt")
    _write(man_path, "\n".join(man) + "\n")
    return csv_path, man_path


def _error_record(exc, cfg=None):
    if isinstance(exc, (ConfigError, FileNotFoundError)):
        code, kind = EXIT_CONFIG, "invalid_config"
    elif isinstance(exc, ResolutionError):
        code, kind = EXIT_RESOLUTION, "under_resolved_grid"
    elif isinstance(exc, UnsupportedOrderError):
        code, kind = EXIT_ORDER, "unsupported_order"
    elif isinstance(exc, ValueError):
        code, kind = EXIT_CONFIG, "invalid_config"
    else:
        code, kind = EXIT_OTHER, "internal_error"
    rec = {
        "error": kind,
        "exception": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
        "version": __version__,
        "config_hash": None if cfg is None else cfg.hash(),
    }
    return code, rec


def main(argv=None):
    p = argparse.ArgumentParser(prog="spherelkc", description="Excursion-set geometry of subordinated needlet fields.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="structured-text config file")
    p.add_argument("--output", help="output directory (overrides run.output)")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    args = p.parse_args(argv)
    if args.workers is not None:
        os.environ[WORKERS_ENV] = str(args.workers)

    cfg = None
    outdir = args.output or "."
    try:
        cfg = load_config(args.config, args.output)
        outdir = cfg.output
        cfg = cfg.with_command(args.command)
        run(cfg)
    except Exception as exc:  # every failure becomes a machine-readable record
        code, rec = _error_record(exc, cfg)
        text = json.dumps(rec, sort_keys=True)
        print(text, file=sys.stderr)
        try:
            os.makedirs(outdir, exist_ok=True)
            _write(os.path.join(outdir, "error.json"), text + "\n")
        except OSError:
            pass
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
