"""Command-line entry point: reproducible experiments from one INI config.

Subcommands: renorm, sample, evolve, label, defects, chessboard, gap,
ldp-scan. Every invocation writes its outputs plus a JSON manifest capturing
the config hash, seed, package version, and wall time. Exit codes: 0 on
success, 2 when the statistics are inconclusive, 1 on any error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .dynamics import (
    DivergedError,
    SimConfig,
    read_checkpoint,
    run,
    write_checkpoint,
)
from .gff import (
    RENORM_CSV_HEADER,
    ModelParams,
    compute_renorm_constants,
    renorm_csv_row,
    sample_gff,
)
from .ldp_stats import ldp_rate, rate_table_from_log_probs, spectral_gap_estimate
from .observables import block_average, lattice_wick_square, q1_all
from .phase_geometry import (
    FRUSTRATED,
    INTERFACE,
    classify_blocks,
    extract_defects,
    phase_label,
    verify_badset_inequalities,
)
from .reflection import chessboard_check
from .torus import ConfigurationError, CutoffProfile, Field, make_blocks, make_grid
from .umbrella import log_event_probability, run_umbrella_ladder

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


class ConfigFileError(Exception):
    """Invalid experiment configuration, with key-level diagnostics."""


def _parse_float(value: str) -> float:
    if value.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(value)


def _parse_bool(value: str) -> bool:
    text = value.strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


_SCHEMA = {
    "model": {
        "dim": int,
        "n": int,
        "eps": float,
        "beta": float,
        "eta": float,
        "k": _parse_float,
        "profile": str,
    },
    "dynamics": {
        "scheme": str,
        "dt": float,
        "n_steps": int,
        "burn_in": int,
        "thin": int,
        "seed": int,
        "checkpoint_every": int,
    },
    "analysis": {
        "delta": float,
        "gamma": float,
        "zeta": float,
        "a0": float,
        "block_sets": str,
        "ladder": str,
        "umbrella": _parse_bool,
        "umbrella_kappa": float,
        "umbrella_windows": int,
        "umbrella_span": float,
    },
    "io": {
        "outdir": str,
        "formats": str,
    },
}

_DEFAULTS = {
    "model": {"eta": 1.0, "k": math.inf, "profile": "0.5:1.0"},
    "dynamics": {"burn_in": 0, "thin": 1, "seed": 0, "checkpoint_every": 0},
    "analysis": {"delta": 0.25, "gamma": 0.5, "zeta": 0.5, "a0": 1.0,
                 "block_sets": "", "ladder": "",
                 "umbrella": False, "umbrella_kappa": 1200.0,
                 "umbrella_windows": 97, "umbrella_span": 1.2},
    "io": {"outdir": ".", "formats": "csv,json"},
}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    values: dict
    config_hash: str
    path: str

    def __getitem__(self, section: str) -> dict:
        return self.values[section]


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
        parser.read_string(raw, source=path)
    except OSError as exc:
        raise ConfigFileError(f"cannot read config {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigFileError(f"malformed config {path!r}: {exc}") from exc

    values: dict = {s: dict(d) for s, d in _DEFAULTS.items()}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigFileError(
                f"{path}: unknown section [{section}]; "
                f"expected one of {sorted(_SCHEMA)}"
            )
        for key, text in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigFileError(
                    f"{path}: unknown key {key!r} in section [{section}]; "
                    f"expected one of {sorted(_SCHEMA[section])}"
                )
            try:
                values[section][key] = _SCHEMA[section][key](text)
            except ValueError as exc:
                raise ConfigFileError(
                    f"{path}: bad value for [{section}] {key} = {text!r}: {exc}"
                ) from exc
    outdir_env = os.environ.get("PHI4SIM_OUTDIR")
    if outdir_env:
        values["io"]["outdir"] = outdir_env
    digest = hashlib.sha256(raw.encode("utf-8")).hexdigest()
    return ExperimentConfig(values=values, config_hash=digest, path=path)


def _require(cfg: ExperimentConfig, section: str, keys: list[str]) -> None:
    missing = [k for k in keys if k not in cfg[section]]
    if missing:
        raise ConfigFileError(
            f"{cfg.path}: section [{section}] is missing required keys {missing}"
        )


def _model(cfg: ExperimentConfig, side: int | None = None):
    _require(cfg, "model", ["dim", "n", "eps", "beta"])
    m = cfg["model"]
    grid = make_grid(m["dim"], side if side is not None else m["n"], m["eps"])
    lo, _, hi = m["profile"].partition(":")
    profile = CutoffProfile(c_rho=float(lo), C_rho=float(hi))
    params = ModelParams(beta=m["beta"], eta=m["eta"], K=m["k"], profile=profile)
    return grid, params


def _sim_config(cfg: ExperimentConfig, grid, params) -> SimConfig:
    _require(cfg, "dynamics", ["scheme", "dt", "n_steps"])
    d = cfg["dynamics"]
    return SimConfig(
        grid=grid,
        params=params,
        scheme=d["scheme"],
        dt=d["dt"],
        n_steps=d["n_steps"],
        burn_in=d["burn_in"],
        thin=d["thin"],
        seed=d["seed"],
        checkpoint_every=d["checkpoint_every"],
    )


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)  # RFC-4180: CRLF line endings, '.' decimals
        writer.writerow(header)
        writer.writerows(rows)


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None  # strict JSON has no NaN/Infinity
    return value


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _manifest(cfg: ExperimentConfig, outdir: str, command: str,
              outputs: list[str], started: float) -> str:
    path = os.path.join(outdir, f"{command}_manifest.json")
    _write_json(path, {
        "command": command,
        "config_path": os.path.abspath(cfg.path),
        "config_hash": cfg.config_hash,
        "seed": cfg["dynamics"].get("seed", 0),
        "code_version": __version__,
        "wall_time_seconds": time.monotonic() - started,
        "outputs": sorted(os.path.basename(p) for p in outputs),
    })
    return path


def _outdir(cfg: ExperimentConfig) -> str:
    out = cfg["io"]["outdir"]
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_renorm(cfg: ExperimentConfig) -> int:
    started = time.monotonic()
    grid, params = _model(cfg)
    constants = compute_renorm_constants(grid, params)
    out = _outdir(cfg)
    path = os.path.join(out, "renorm.csv")
    _write_csv(
        path,
        RENORM_CSV_HEADER.split(","),
        [renorm_csv_row(grid, params, constants).split(",")],
    )
    _manifest(cfg, out, "renorm", [path], started)
    return EXIT_OK


def cmd_sample(cfg: ExperimentConfig) -> int:
    started = time.monotonic()
    grid, params = _model(cfg)
    n = cfg["dynamics"].get("n_steps")
    if n is None:
        raise ConfigFileError(f"{cfg.path}: [dynamics] n_steps sets the sample count")
    seed = cfg["dynamics"]["seed"]
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        f = sample_gff(grid, params, rng)
        rows.append([i, repr(float(np.mean(f.values)))])
    out = _outdir(cfg)
    path = os.path.join(out, "samples.csv")
    _write_csv(path, ["sample", "magnetisation"], rows)
    _manifest(cfg, out, "sample", [path], started)
    return EXIT_OK


def cmd_evolve(cfg: ExperimentConfig) -> int:
    started = time.monotonic()
    grid, params = _model(cfg)
    sim = _sim_config(cfg, grid, params)
    out = _outdir(cfg)
    try:
        result = run(sim, checkpoint_dir=out, keep_fields=False)
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    rows = [
        [r.step, repr(r.time), repr(r.magnetisation), repr(r.energy_density),
         int(r.finite), r.checkpoint_id or ""]
        for r in result.records
    ]
    path = os.path.join(out, "trajectory.csv")
    _write_csv(
        path,
        ["step", "time", "magnetisation", "energy_density", "finite", "checkpoint_id"],
        rows,
    )
    final = os.path.join(out, "final.phi4")
    write_checkpoint(final, sim, result.final_field, result.final_step)
    _manifest(cfg, out, "evolve", [path, final, *result.checkpoint_paths], started)
    return EXIT_OK


def _labelled(cfg: ExperimentConfig, checkpoint: str):
    ck = read_checkpoint(checkpoint)
    params = ModelParams(beta=ck.beta, eta=ck.eta, K=ck.K)
    part = make_blocks(ck.grid)
    wick2 = lattice_wick_square(ck.field, params)
    bf = block_average(ck.field, wick2, part)
    delta = cfg["analysis"]["delta"]
    label = phase_label(classify_blocks(bf, ck.beta, delta), part, ck.beta)
    return ck, params, bf, label, delta


def cmd_label(cfg: ExperimentConfig, checkpoint: str) -> int:
    started = time.monotonic()
    ck, params, bf, label, delta = _labelled(cfg, checkpoint)
    report = verify_badset_inequalities(label, bf, ck.beta, delta)
    out = _outdir(cfg)
    path = os.path.join(out, "label.json")
    _write_json(path, {
        "checkpoint": os.path.abspath(checkpoint),
        "delta": delta,
        "n_blocks": label.partition.n_blocks,
        "n_bad": int(label.bad_blocks.size),
        "n_frustrated": int(np.count_nonzero(label.bad_kind == FRUSTRATED)),
        "n_interface": int(np.count_nonzero(label.bad_kind == INTERFACE)),
        "badset_violations": report.violations,
        "badset_min_slack_log": report.min_slack_log,
    })
    _manifest(cfg, out, "label", [path], started)
    return EXIT_OK


def cmd_defects(cfg: ExperimentConfig, checkpoint: str) -> int:
    started = time.monotonic()
    ck, params, bf, label, delta = _labelled(cfg, checkpoint)
    gamma = cfg["analysis"]["gamma"]
    ds = extract_defects(label, gamma)
    out = _outdir(cfg)
    detail = [
        {
            "size": d.size,
            "class": "small" if d.small else "large",
            "maximal": d.maximal,
            "interior_volume": int(d.interior.size) if d.interior is not None else None,
        }
        for d in ds.defects
    ]
    jpath = os.path.join(out, "defects.json")
    _write_json(jpath, {
        "checkpoint": os.path.abspath(checkpoint),
        "gamma": gamma,
        "defects": detail,
    })
    cpath = os.path.join(out, "defects_summary.csv")
    small = [d for d in ds.defects if d.small]
    large = [d for d in ds.defects if not d.small]
    _write_csv(
        cpath,
        ["n_bad", "n_frustrated", "n_interface", "n_defects",
         "total_large_size", "total_small_interior"],
        [[int(label.bad_blocks.size),
          int(np.count_nonzero(label.bad_kind == FRUSTRATED)),
          int(np.count_nonzero(label.bad_kind == INTERFACE)),
          len(ds.defects),
          sum(d.size for d in large),
          sum(int(d.interior.size) for d in small)]],
    )
    _manifest(cfg, out, "defects", [jpath, cpath], started)
    return EXIT_OK


def _parse_block_sets(text: str) -> list[list[int]]:
    sets = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            sets.append([int(v) for v in chunk.split(",")])
    return sets


def cmd_chessboard(cfg: ExperimentConfig) -> int:
    started = time.monotonic()
    grid, params = _model(cfg)
    sim = _sim_config(cfg, grid, params)
    part = make_blocks(grid)
    block_sets = _parse_block_sets(cfg["analysis"]["block_sets"]) or [[0, 1]]
    a0 = cfg["analysis"]["a0"]
    result = run(sim)
    bfs = [
        block_average(f, lattice_wick_square(f, params), part)
        for f in result.emitted
    ]
    reports = [
        chessboard_check(bfs, lambda bf: a0 * q1_all(bf, params.beta), bs)
        for bs in block_sets
    ]
    out = _outdir(cfg)
    path = os.path.join(out, "chessboard.json")
    _write_json(path, {
        "a": a0,
        "n_samples": len(bfs),
        "checks": [
            {
                "blocks": bs,
                "log_lhs": r.log_lhs,
                "log_rhs": r.log_rhs,
                "margin": r.margin,
                "stderr": r.stderr,
                "inconclusive": r.inconclusive,
            }
            for bs, r in zip(block_sets, reports)
        ],
    })
    _manifest(cfg, out, "chessboard", [path], started)
    return EXIT_INCONCLUSIVE if any(r.inconclusive for r in reports) else EXIT_OK


def cmd_gap(cfg: ExperimentConfig) -> int:
    started = time.monotonic()
    grid, params = _model(cfg)
    sim = _sim_config(cfg, grid, params)
    try:
        result = run(sim, keep_fields=False)
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    mags = np.array([r.magnetisation for r in result.records])
    threshold = 0.5 * math.sqrt(params.beta)
    est = spectral_gap_estimate(mags, sim.dt * sim.thin, threshold)
    out = _outdir(cfg)
    path = os.path.join(out, "gap.json")
    _write_json(path, {
        "side": grid.side,
        "beta": params.beta,
        "rate": est.rate,
        "stderr": est.stderr,
        "tau_int_steps": est.tau_int,
        "fit_lags": list(est.fit_lags),
        "inconclusive": est.inconclusive,
    })
    _manifest(cfg, out, "gap", [path], started)
    return EXIT_INCONCLUSIVE if est.inconclusive else EXIT_OK


def cmd_ldp_scan(cfg: ExperimentConfig) -> int:
    started = time.monotonic()
    ladder_text = cfg["analysis"]["ladder"]
    if not ladder_text.strip():
        raise ConfigFileError(f"{cfg.path}: [analysis] ladder (e.g. 8,12,16) is required")
    ladder = [int(v) for v in ladder_text.split(",")]
    zeta = cfg["analysis"]["zeta"]
    _, params = _model(cfg, side=ladder[0])
    if cfg["analysis"]["umbrella"]:
        span = cfg["analysis"]["umbrella_span"] * math.sqrt(params.beta)
        centres = np.linspace(-span, span, cfg["analysis"]["umbrella_windows"])
        kappa = cfg["analysis"]["umbrella_kappa"]
        edges = np.linspace(-1.2 * span, 1.2 * span,
                            12 * cfg["analysis"]["umbrella_windows"] + 1)
        threshold = zeta * math.sqrt(params.beta)
        per_side_lp = {}
        for side in ladder:
            grid, params = _model(cfg, side=side)
            sim = _sim_config(cfg, grid, params)
            windows = run_umbrella_ladder(sim, centres, kappa)
            per_side_lp[side] = log_event_probability(windows, threshold, edges)
        table = rate_table_from_log_probs(
            per_side_lp, zeta, params.beta, cfg["model"]["dim"]
        )
    else:
        per_side = {}
        for side in ladder:
            grid, params = _model(cfg, side=side)
            sim = _sim_config(cfg, grid, params)
            result = run(sim, keep_fields=False)
            per_side[side] = np.array([r.magnetisation for r in result.records])
        table = ldp_rate(per_side, zeta, params.beta, cfg["model"]["dim"])
    out = _outdir(cfg)
    cpath = os.path.join(out, "ldp_rates.csv")
    _write_csv(
        cpath,
        ["N", "n_samples", "n_events", "rate", "stderr", "upper_bound_only"],
        [[e.side, e.n_samples, e.n_events, repr(e.rate), repr(e.stderr),
          int(e.upper_bound_only)] for e in table.entries],
    )
    jpath = os.path.join(out, "ldp_verdict.json")
    _write_json(jpath, {
        "zeta": zeta,
        "beta": params.beta,
        "dim": cfg["model"]["dim"],
        "umbrella": cfg["analysis"]["umbrella"],
        "consistent_pairwise_2se": table.consistent_pairwise_2se,
        "inconclusive": table.inconclusive,
    })
    _manifest(cfg, out, "ldp-scan", [cpath, jpath], started)
    return EXIT_INCONCLUSIVE if table.inconclusive else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="phi4sim",
        description="Double-well lattice field simulator and analysis toolkit.",
    )
    parser.add_argument("--config", "-c", required=True, help="INI experiment config")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("renorm", "sample", "evolve", "chessboard", "gap", "ldp-scan"):
        sub.add_parser(name)
    for name in ("label", "defects"):
        p = sub.add_parser(name)
        p.add_argument("checkpoint", help="binary checkpoint file to analyse")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "renorm":
            return cmd_renorm(cfg)
        if args.command == "sample":
            return cmd_sample(cfg)
        if args.command == "evolve":
            return cmd_evolve(cfg)
        if args.command == "label":
            return cmd_label(cfg, args.checkpoint)
        if args.command == "defects":
            return cmd_defects(cfg, args.checkpoint)
        if args.command == "chessboard":
            return cmd_chessboard(cfg)
        if args.command == "gap":
            return cmd_gap(cfg)
        if args.command == "ldp-scan":
            return cmd_ldp_scan(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigFileError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
