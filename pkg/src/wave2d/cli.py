"""Command-line entry points.

    wave2d classify --config run.json [--out report.json] [--strict]
    wave2d scan     --config run.json [--out crossings.csv]
    wave2d waveop   --config run.json [--out DIR] [--strict]
    wave2d probe    --config run.json [--out ratios.csv]
    wave2d verify   [SUITE] [--out report.txt] [--strict]

Exit codes: 0 success, 1 configuration / IO / precondition error,
2 conditioning warnings under ``--strict``, 3 failed verification checks.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import io as wio
from .grid import GridFunction, dstar_project
from .potentials import factor_potential
from .threshold import ClassificationError, classify, coupling_scan, reconstruct_resonance, static_set

log = logging.getLogger("wave2d")

EXIT_OK, EXIT_CONFIG, EXIT_WARN, EXIT_VERIFY = 0, 1, 2, 3


class _Abort(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _write_text(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _Abort(EXIT_CONFIG, f"cannot write {out}: {exc.strerror}") from exc


def _json_text(obj) -> str:
    return json.dumps(wio._plain(obj), indent=2, sort_keys=True) + "\n"


def _config(args) -> wio.RunConfig:
    if args.config is None:
        return wio.RunConfig()
    return wio.RunConfig.load(args.config)


# -- classify -------------------------------------------------------------------------------

def cmd_classify(cfg: wio.RunConfig, out=None, strict=False) -> int:
    V = cfg.make_potential()
    fp = factor_potential(V)
    st = static_set(fp)
    tol = float(cfg.tolerances.get("classify", 1e-6))
    try:
        rep = classify(fp, tol=tol, strict=strict, statics=st)
    except ClassificationError as exc:
        if strict:
            raise _Abort(EXIT_WARN, f"classification: {exc}") from exc
        raise
    res = [reconstruct_resonance(rep.basis_S1[:, k], fp, st) for k in range(rep.rank_S1)]
    d = wio.threshold_report_dict(rep, res)
    d["coupling"] = cfg.potential.coupling
    d["profile"] = cfg.potential.profile
    _write_text(_json_text(d), out)
    log.info("kind %s (ranks %d/%d/%d)", rep.kind, rep.rank_S1, rep.rank_S2, rep.rank_S3)
    if strict and rep.warnings:
        for w in rep.warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_WARN
    return EXIT_OK


# -- scan -----------------------------------------------------------------------------------

def cmd_scan(cfg: wio.RunConfig, out=None, strict=False) -> int:
    g_range = cfg.options.get("g_range", [0.5, 10.0])
    if len(g_range) != 2 or not all(math.isfinite(float(x)) for x in g_range):
        raise wio.ConfigError("options.g_range must be two finite numbers")
    n_steps = int(cfg.options.get("n_steps", 40))
    if n_steps < 1:
        raise wio.ConfigError("options.n_steps must be positive")
    # the scan multiplies the unit-coupling profile; the configured coupling is ignored
    unit = dataclasses.replace(cfg, potential=dataclasses.replace(cfg.potential, coupling=1.0))
    V0 = unit.make_potential()
    tol = float(cfg.tolerances.get("classify", 1e-6))
    crossings = coupling_scan(V0, g_range, n_steps=n_steps, tol=tol)
    _write_text(wio.crossings_csv(crossings), out)
    if strict and any(c.gap < 10 for c in crossings):
        print("warning: crossing with classification gap < 10", file=sys.stderr)
        return EXIT_WARN
    return EXIT_OK


# -- waveop ---------------------------------------------------------------------------------

def _input_function(cfg: wio.RunConfig, grid) -> GridFunction:
    inp = dict(cfg.options.get("input", {}))
    if "file" in inp:
        try:
            u = wio.read_grid_function(inp["file"])
        except OSError as exc:
            raise wio.ConfigError(f"cannot read input function: {exc}") from exc
        except ValueError as exc:
            raise wio.ConfigError(f"input function: {exc}") from exc
        if u.grid.n != grid.n or abs(u.grid.L - grid.L) > 1e-12 * grid.L:
            raise wio.ConfigError("input function grid does not match the configured grid")
    else:
        X1, X2 = grid.mesh()
        c1, c2 = (float(x) for x in inp.get("center", (1.0, 0.0)))
        w = float(inp.get("width", 2.0))
        if not w > 0:
            raise wio.ConfigError("input width must be positive")
        R2 = ((X1 - c1) ** 2 + (X2 - c2) ** 2) / (w * w)
        prof = inp.get("profile", "gaussian")
        if prof == "gaussian":
            vals = np.exp(-R2)
        elif prof == "dipole":
            vals = (X1 - c1) / w * np.exp(-R2)
        else:
            raise wio.ConfigError(f"unknown input profile {prof!r}")
        u = GridFunction(grid, vals.astype(complex))
    win = cfg.window()
    if win is None:
        raise wio.ConfigError("waveop needs a band [alpha, beta]")
    return dstar_project(u, win)


def _probe_family(cfg):
    from .verify import probe_family
    scales = cfg.options.get("scales", [1.0, 0.1, 0.01, 0.001])
    if not scales or any(not (float(s) > 0) for s in scales):
        raise wio.ConfigError("options.scales must be positive numbers")
    return probe_family([float(s) for s in scales])


def _run_probe(cfg):
    from .probe import lp_growth_probe
    p_values = [float(p) for p in cfg.options.get("p_values", [1.5, 2.0, 4.0])]
    if any(not p >= 1 for p in p_values):
        raise wio.ConfigError("options.p_values must be >= 1")
    return lp_growth_probe(cfg.make_potential(), p_values, _probe_family(cfg), cfg.a,
                           method=cfg.options.get("probe_method", "multiscale"))


def cmd_waveop(cfg: wio.RunConfig, out=None, strict=False) -> int:
    from .waveop import (DomainError, TruncationError, build_quadrature, w_stationary,
                         w_time_dependent)
    grid = cfg.make_grid()
    V = cfg.make_potential(grid)
    u = _input_function(cfg, grid)
    mode = cfg.options.get("mode", "stationary")
    if mode not in ("stationary", "time", "both"):
        raise wio.ConfigError(f"unknown waveop mode {mode!r}")
    t_list = [float(t) for t in cfg.options.get("t_list", [4.0, 6.0, 8.0, 10.0])]
    metrics = {"mode": mode, "u_norm": u.norm()}
    W_st = W_td = None
    rejected = []
    try:
        if mode in ("stationary", "both"):
            t0 = time.time()
            q = build_quadrature(cfg.window(), cfg.a, grid=grid)
            res = w_stationary(V, u, q)
            W_st = res.W
            rejected = res.rejected
            metrics["stationary"] = {"l2_ratio": W_st.norm() / u.norm(), "nodes": len(res.nodes),
                                     "rejected_nodes": [float(nd.lam) for nd in rejected],
                                     "seconds": time.time() - t0}
        if mode in ("time", "both"):
            t0 = time.time()
            td = w_time_dependent(V, u, t_list)
            W_td = td.outputs[-1]
            metrics["time_dependent"] = {"l2_ratio": W_td.norm() / u.norm(), "t_list": t_list,
                                         "increments": td.increments, "tails": td.tail_mass,
                                         "dt": td.dt, "seconds": time.time() - t0}
    except (DomainError, TruncationError, ValueError) as exc:
        raise _Abort(EXIT_CONFIG, f"waveop: {exc}") from exc
    W = W_st if W_st is not None else W_td
    metrics["l2_ratio"] = W.norm() / u.norm()
    if W_st is not None and W_td is not None:
        err = (W_st - W_td).norm() / u.norm()
        metrics["cross_error"] = err
        metrics["cross_ok"] = bool(err < float(cfg.tolerances.get("cross_error", 0.05)))
    probe = _run_probe(cfg) if cfg.options.get("probe") else None
    if out is None:
        _write_text(_json_text(metrics), None)
    else:
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as exc:
            raise _Abort(EXIT_CONFIG, f"cannot create {out}: {exc.strerror}") from exc
        wio.write_grid_binary(W, os.path.join(out, "W.gf2d"))
        _write_text(_json_text(metrics), os.path.join(out, "metrics.json"))
        if probe is not None:
            _write_text(wio.probe_csv(probe), os.path.join(out, "probe.csv"))
    if strict and rejected:
        print(f"warning: {len(rejected)} ill-conditioned quadrature nodes", file=sys.stderr)
        return EXIT_WARN
    return EXIT_OK


def cmd_probe(cfg: wio.RunConfig, out=None, strict=False) -> int:
    res = _run_probe(cfg)
    _write_text(wio.probe_csv(res), out)
    return EXIT_OK


# -- verify ---------------------------------------------------------------------------------

def cmd_verify(suite: str, out=None, strict=False) -> int:
    from . import verify
    if suite != "all" and suite not in verify.SUITES:
        raise _Abort(EXIT_CONFIG, f"unknown suite {suite!r}; expected one of "
                                  f"{sorted(verify.SUITES) + ['all']}")
    lines = []

    def echo(line):
        lines.append(line)
        print(line, flush=True)

    checks = verify.run_suite(suite, echo=echo)
    n_fail = sum(not c.passed for c in checks)
    summary = f"{len(checks) - n_fail}/{len(checks)} checks passed"
    echo(summary)
    if out is not None:
        _write_text("\n".join(lines) + "\n", out)
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


# -- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wave2d", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("classify", "zero-energy classification report (JSON)"),
                        ("scan", "coupling scan for threshold crossings (CSV)"),
                        ("waveop", "stationary / time-dependent wave operator run"),
                        ("probe", "L^p ratio probe over a dilation family (CSV)"),
                        ("verify", "run a self-test suite")):
        sp = sub.add_parser(name, help=help_)
        if name == "verify":
            sp.add_argument("suite", nargs="?", default="all",
                            help="specfun | inversion | expansion | waveop | all")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output file (directory for waveop)")
        sp.add_argument("--strict", action="store_true",
                        help="treat conditioning warnings as errors (exit 2)")
    return ap


COMMANDS = {"classify": cmd_classify, "scan": cmd_scan, "waveop": cmd_waveop, "probe": cmd_probe}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.out, args.strict)
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args.out, args.strict)
    except _Abort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except wio.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
