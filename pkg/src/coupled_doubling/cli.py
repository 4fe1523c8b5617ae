"""Command-line front end.

Modes:
  finite   iterate N globally coupled doubling maps; per-step observables,
           final states and the time-averaged site histogram
  density  push a density forward with the infinite-population transfer operator
  scan     sweep the coupling strength and summarise ensembles per value
  renorm   number n of renormalizations of the two-site difference map, K = 2**n
  verify   run the bundled acceptance suite (exit 0 iff every criterion passes)

Every run writes CSV files and a ``manifest.json`` into ``--out-dir``.
Nothing is written until all results are computed; files are staged under
temporary names and renamed into place, the manifest last.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import density as dens
from .config import ConfigError, ExperimentConfig, emit_config, parse_config, parse_init
from .ensemble import ScanSpec, epsilon_scan, merge_histograms, simulate_ensemble, simulate_orbit
from .finite import CouplingParams, renormalization_depth
from .stats import ks_distance_to_uniform

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------- CSV helpers

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def rows_to_csv(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue().encode()


def array_to_csv(header: list[str], table: np.ndarray) -> bytes:
    buf = io.StringIO()
    np.savetxt(buf, table, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue().encode()


def dicts_to_csv(rows: list[dict]) -> bytes:
    header: list[str] = []
    for r in rows:
        header += [k for k in r if k not in header]
    return rows_to_csv(header, ([r.get(k) for k in header] for r in rows))


# ---------------------------------------------------------------- modes

def run_finite(cfg: ExperimentConfig, echo) -> dict[str, bytes]:
    params = CouplingParams(cfg.epsilon, cfg.sites)
    obs = [o for o in cfg.observables if o != "x"]
    want_x = "x" in cfg.observables
    init = parse_init(cfg.init)
    common = dict(observables=obs, burn_in=cfg.burn_in, histogram_bins=cfg.bins, record_trajectory=want_x)
    if init.kind == "explicit":
        records = [simulate_orbit(np.array(init.args), params, cfg.steps, **common)]
    else:
        records = simulate_ensemble(cfg.seed, cfg.orbits, params, cfg.steps, **common)

    t = np.arange(cfg.burn_in, cfg.burn_in + cfg.steps, dtype=float)
    header = ["orbit", "t"] + obs + ([f"x{s}" for s in range(cfg.sites)] if want_x else [])
    blocks = []
    for k, r in enumerate(records):
        cols = [np.full_like(t, k), t] + [r.observables[o].astype(float) for o in obs]
        if want_x:
            cols += [r.trajectory[:, s] for s in range(cfg.sites)]
        blocks.append(np.column_stack(cols))
    out = {}
    if obs or want_x:
        out["observables.csv"] = array_to_csv(header, np.concatenate(blocks))
    final = np.array([[k, *r.final] for k, r in enumerate(records)])
    out["final.csv"] = array_to_csv(["orbit"] + [f"x{s}" for s in range(cfg.sites)], final)
    hist = merge_histograms(r.histogram for r in records)
    edges = hist.edges
    out["histogram.csv"] = rows_to_csv(
        ["bin", "left", "count"], ((b, edges[b], c) for b, c in enumerate(hist.counts))
    )
    echo(f"finite: eps={cfg.epsilon!r} N={cfg.sites} orbits={len(records)} steps={cfg.steps} "
         f"KS(time average, uniform)={ks_distance_to_uniform(hist):.4g}")
    return out


def _initial_density(cfg: ExperimentConfig) -> dens.GridDensity:
    init = parse_init(cfg.init)
    if init.kind == "bump":
        return dens.GridDensity.bump(init.args[0], init.args[1], cfg.grid_size)
    if init.kind == "sine":
        return dens.GridDensity.sine(init.args[0], cfg.grid_size)
    return dens.GridDensity.uniform(cfg.grid_size)


def _density_row(f: dens.GridDensity, step: int, cols: list[str]) -> list:
    row: list = [step]
    for c in cols:
        if c == "support":
            s = f.support
            row += [s.start, s.length] if s is not None else [0.0, 1.0]
        elif c == "sup":
            row.append(f.sup())
        elif c == "tv":
            row.append(dens.total_variation(f))
        elif c == "mass_defect":
            row.append(f.raw_mass_defect)
        elif c == "center_of_mass":
            try:
                row.append(dens.center_of_mass(f))
            except dens.SupportTooWideError:
                row.append(math.nan)
        elif c == "wing_mass":
            try:
                row.append(dens.wing_mass(f))
            except ValueError:
                row.append(math.nan)
    return row


def run_density(cfg: ExperimentConfig, echo) -> dict[str, bytes]:
    cols = list(cfg.observables) or ["support", "sup", "tv", "center_of_mass", "mass_defect"]
    header = ["step"]
    for c in cols:
        header += ["support_start", "support_length"] if c == "support" else [c]
    f0 = _initial_density(cfg)
    f = f0
    rows = [_density_row(f, 0, cols)]
    for k in range(1, cfg.steps + 1):
        f = dens.transfer_step(f, cfg.epsilon)
        rows.append(_density_row(f, k, cols))
    echo(f"density: eps={cfg.epsilon!r} M={cfg.grid_size} steps={cfg.steps} "
         f"final TV={dens.total_variation(f):.4g}")
    return {
        "density_steps.csv": rows_to_csv(header, rows),
        "density_initial.csv": dens.density_to_csv(f0).encode(),
        "density_final.csv": dens.density_to_csv(f).encode(),
    }


def _eps_values(cfg: ExperimentConfig) -> list[float]:
    return list(cfg.epsilon_grid) if cfg.epsilon_grid else [cfg.epsilon]


def run_scan(cfg: ExperimentConfig, echo) -> dict[str, bytes]:
    spec = ScanSpec(
        n_sites=cfg.sites, steps=cfg.steps, burn_in=cfg.burn_in, orbits=cfg.orbits,
        master_seed=cfg.seed, observables=tuple(cfg.observables) or ("labels_visited",),
        bin_count=cfg.bins,
    )
    rows = epsilon_scan(_eps_values(cfg), spec)
    failed = [r for r in rows if "error" in r]
    echo(f"scan: {len(rows)} values of eps, {len(failed)} failed")
    return {"scan.csv": dicts_to_csv(rows)}


def run_renorm(cfg: ExperimentConfig, echo) -> dict[str, bytes]:
    rows = []
    single = not cfg.epsilon_grid
    for eps in _eps_values(cfg):
        try:
            n, k = renormalization_depth(eps)
        except ValueError as exc:
            if single:
                raise
            rows.append({"epsilon": eps, "n": None, "K": None, "error": str(exc)})
            echo(f"epsilon={eps!r}: {exc}")
            continue
        rows.append({"epsilon": eps, "n": n, "K": k})
        echo(f"n={n}, K={k}" if single else f"epsilon={eps!r}: n={n}, K={k}")
    return {"renorm.csv": dicts_to_csv(rows)}


def run_verify(cfg: ExperimentConfig, echo) -> tuple[dict[str, bytes], bool]:
    from .acceptance import run_all

    results = run_all(echo=True)
    ok = all(r.passed for r in results)
    echo(f"verify: {sum(r.passed for r in results)}/{len(results)} criteria passed")
    data = rows_to_csv(
        ["id", "name", "passed", "limit_seconds", "detail"],
        ((r.id, r.name, r.passed, r.limit, r.detail) for r in results),
    )
    return {"acceptance.csv": data}, ok


# ---------------------------------------------------------------- run + manifest

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stage_all(out_dir: Path, outputs: dict[str, bytes]) -> None:
    """Write every output to a temporary name first, then rename them all."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, data in outputs.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.chmod(tmp, 0o644)
            staged.append((tmp, out_dir / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)


def run(cfg: ExperimentConfig, echo=print) -> int:
    """Execute a validated config; returns the process exit status."""
    out_dir = Path(cfg.out_dir)
    manifest = {
        "config": cfg.to_dict(),
        "version": __version__,
        "seed": cfg.seed,
        "started": _now(),
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
    }
    status = 0
    try:
        if cfg.mode == "finite":
            outputs = run_finite(cfg, echo)
        elif cfg.mode == "density":
            outputs = run_density(cfg, echo)
        elif cfg.mode == "scan":
            outputs = run_scan(cfg, echo)
        elif cfg.mode == "renorm":
            outputs = run_renorm(cfg, echo)
        else:
            outputs, ok = run_verify(cfg, echo)
            status = 0 if ok else 1
        _stage_all(out_dir, outputs)
        manifest["status"] = "ok" if status == 0 else "failed"
        manifest["error"] = None if status == 0 else "acceptance criteria failed"
        manifest["outputs"] = {n: hashlib.sha256(d).hexdigest() for n, d in sorted(outputs.items())}
    except Exception as exc:  # noqa: BLE001 - every failure is recorded in the manifest
        status = 1
        context = f"mode={cfg.mode} epsilon={cfg.epsilon!r} sites={cfg.sites} seed={cfg.seed}"
        msg = f"{type(exc).__name__}: {exc} [{context}]"
        print(f"error: {msg}", file=sys.stderr)
        manifest.update(status="failed", error=msg, outputs={})
    manifest["finished"] = _now()
    atomic_write(out_dir / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())
    return status


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coupled-doubling",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="config file (JSON object or key = value lines); flags override it")
    p.add_argument("--mode", choices=["finite", "density", "scan", "renorm", "verify"])
    p.add_argument("--epsilon", help="coupling strength in [0, 1); fractions like 1/3 are accepted")
    p.add_argument("--epsilon-grid", help="comma list or start:stop:count")
    p.add_argument("--sites", help="number of sites N >= 2 (finite, scan)")
    p.add_argument("--grid-size", help="density grid size, a power of two (default 16384)")
    p.add_argument("--steps", help="recorded steps (finite/scan) or transfer steps (density)")
    p.add_argument("--burn-in", help="discarded steps before recording")
    p.add_argument("--seed", help="master seed for every random draw")
    p.add_argument("--init", help="uniform-random | x1,x2,... | bump(center,width) | sine(amplitude) | uniform")
    p.add_argument("--observables", help="comma list; finite: label,min_gap,diameter,sum,v,x; "
                   "density: support,sup,tv,center_of_mass,mass_defect,wing_mass; "
                   "scan: labels_visited,min_gap_quantiles,sync_fraction,K,ks")
    p.add_argument("--orbits", help="number of orbits (finite ensembles, scan)")
    p.add_argument("--bins", help="histogram bins for time averages")
    p.add_argument("--out-dir", help="output directory (default ./out)")
    p.add_argument("--emit-config", action="store_true", help="print the resolved config and exit")
    return p


FLAG_KEYS = ("mode", "epsilon", "epsilon_grid", "sites", "grid_size", "steps", "burn_in", "seed",
             "init", "observables", "orbits", "bins", "out_dir")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    text = None
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config!r} ({exc.strerror})") from None
    overrides = {k: getattr(args, k) for k in FLAG_KEYS if getattr(args, k) is not None}
    return parse_config(text, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.emit_config:
        sys.stdout.write(emit_config(cfg))
        return 0
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
