"""Command line: convergence runs from flat config files and the property suites.

Config files hold one ``key = value`` per line; ``#`` starts a comment::

    scene = moving_circle
    k = 1
    beta = 0
    levels = 0-4
"""

import argparse
import configparser
import contextlib
import csv
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from typing import Optional

from .assembly import MethodParams
from .exceptions import ConfigurationError
from .mesh import build_time_grid, level_mesh
from .postproc import ConvergenceReport, LevelRow, compute_errors
from .scenes import SCENE_DEFAULTS, get_scene
from .solver import march

log = logging.getLogger(__name__)

CSV_HEADER = ["level", "h", "dt", "err_energy", "err_surface_energy", "err_linf_l2", "e_mass", "eoc_s", "eoc_q", "eoc_qs"]

def _parse_number(text):
    """Float from ``0.25``, ``2^-2`` or ``2**-2``."""
    t = text.replace("**", "^").strip()
    if "^" in t:
        base, exp = t.split("^", 1)
        return float(base) ** float(exp)
    return float(t)


def _parse_levels(text):
    """``0-4`` or ``0,1,3`` -> list of ints."""
    text = text.strip()
    if "-" in text and "," not in text:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def _parse_bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Everything needed for one convergence study."""

    scene: str = "moving_circle"
    k_s: int = 1
    k_q: int = 1
    k_gs: int = 1
    k_gq: int = 1
    beta: float = 0.0
    xi: str = "h"
    alpha: str = "simple"
    r_mode: str = "weighted"
    source: str = "auto"
    mu_d: float = 1.0
    levels_s: list = field(default_factory=lambda: [0, 1, 2])
    levels_q: list = field(default_factory=lambda: [0, 1, 2])
    diagonal: bool = True
    h_init: Optional[float] = None
    dt_init: Optional[float] = None
    T: Optional[float] = None
    domain: Optional[tuple] = None
    L: Optional[int] = None
    q_s: Optional[int] = None
    extension: str = "closest_point"
    name: str = "run"
    out: str = "results"
    threads: int = 1
    scene_args: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.k_s, self.k_q, self.k_gs, self.k_gq) < 1:
            raise ConfigurationError("orders k and k_g must be >= 1")
        if not self.levels_s or not self.levels_q:
            raise ConfigurationError("level ranges must be nonempty")
        if self.diagonal and len(self.levels_s) != len(self.levels_q):
            raise ConfigurationError("diagonal runs need equally many spatial and temporal levels")
        if self.extension not in ("closest_point", "analytic"):
            raise ConfigurationError(f"unknown extension mode {self.extension!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        self.method()  # validates the method parameters

    @classmethod
    def from_mapping(cls, items):
        """Build from string key/value pairs (as read from a config file)."""
        kw, scene_args = {}, {}
        names = {f.name for f in fields(cls)}
        for key, raw in items.items():
            key = key.strip().lower()
            val = raw.strip()
            if key.startswith("scene_"):
                scene_args[key[6:]] = _parse_scalar(val)
            elif key == "k":
                kw["k_s"] = kw["k_q"] = int(val)
            elif key == "k_g":
                kw["k_gs"] = kw["k_gq"] = int(val)
            elif key == "levels":
                kw["levels_s"] = kw["levels_q"] = _parse_levels(val)
            elif key in ("levels_s", "levels_q"):
                kw[key] = _parse_levels(val)
            elif key in ("k_s", "k_q", "k_gs", "k_gq", "threads"):
                kw[key] = int(val)
            elif key in ("L", "l", "q_s"):
                kw["L" if key in ("L", "l") else key] = int(val)
            elif key in ("beta", "mu_d", "h_init", "dt_init", "T", "t"):
                kw["T" if key in ("T", "t") else key] = _parse_number(val)
            elif key == "diagonal":
                kw[key] = _parse_bool(val)
            elif key == "domain":
                parts = [_parse_number(v) for v in val.replace("(", "").replace(")", "").split(",")]
                if len(parts) != 4:
                    raise ConfigurationError("domain needs four numbers x0, x1, y0, y1")
                kw[key] = tuple(parts)
            elif key in names:
                kw[key] = val
            else:
                raise ConfigurationError(f"unknown config key {key!r}")
        # the time-order default follows k_s when only k_s is given
        if "k_s" in kw and "k_q" not in kw:
            kw["k_q"] = kw["k_s"]
        if "k_gs" not in kw and "k_s" in kw:
            kw["k_gs"] = kw["k_gq"] = kw["k_s"]
        return cls(scene_args=scene_args, **kw)

    @classmethod
    def from_file(cls, path):
        text = open(path, encoding="utf-8").read()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",), delimiters=("=",))
        parser.optionxform = str
        try:
            parser.read_string("[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        return cls.from_mapping(dict(parser["run"]))

    def method(self):
        return MethodParams(
            beta=self.beta,
            xi_mode=self.xi,
            alpha=self.alpha,
            mu_d=self.mu_d,
            r_mode=self.r_mode,
            k_s=self.k_s,
            k_q=self.k_q,
            k_gs=self.k_gs,
            k_gq=self.k_gq,
            L=self.L,
            q_s=self.q_s,
            source=self.source,
        )

    def make_scene(self):
        return get_scene(self.scene, **self.scene_args)

    def level_pairs(self):
        if self.diagonal:
            return list(zip(self.levels_s, self.levels_q))
        return [(s, q) for s in self.levels_s for q in self.levels_q]


def _parse_scalar(text):
    try:
        return _parse_number(text)
    except ValueError:
        return text


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(float(v))


def eoc_key(report):
    """Error column tracked by the CSV EOC columns: energy when available, else e_mass."""
    vals = [r.errors.get("err_energy") for r in report.rows]
    if any(v is not None and math.isfinite(v) for v in vals):
        return "err_energy"
    return "e_mass"


def write_csv(report, path):
    key = eoc_key(report)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for row in report.rows:
            eo = report.row_eocs(row, key) if row.status == "ok" else (None, None, None)
            level = str(row.l_s) if report.diagonal and row.l_s == row.l_q else f"{row.l_s}-{row.l_q}"
            e = row.errors
            wr.writerow(
                [level, _fmt(row.h), _fmt(row.dt)]
                + [_fmt(e.get(k)) for k in ("err_energy", "err_surface_energy", "err_linf_l2", "e_mass")]
                + [_fmt(x) for x in eo]
            )


def write_mass_series(sol, rep, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "t", "i_mass", "i_surf"])
        for n, (m, s) in enumerate(zip(rep.i_mass, rep.i_surf)):
            wr.writerow([n, _fmt(sol.grid.t_nodes[n]), _fmt(m), _fmt(s)])


def run_level(cfg, scene, l_s, l_q):
    """March and post-process one (l_s, l_q) pair."""
    h_def, dt_def = SCENE_DEFAULTS.get(cfg.scene, (2.0**-2, 2.0**-2))
    domain = cfg.domain or scene.domain
    T = cfg.T or scene.T
    mesh = level_mesh(domain, cfg.h_init or h_def, l_s)
    grid = build_time_grid(T, cfg.dt_init or dt_def, l_q)
    sol = march(cfg.method(), scene, mesh, grid)
    rep = compute_errors(sol, cfg.extension)
    errors = {
        "err_energy": rep.energy,
        "err_surface_energy": rep.surface_energy,
        "err_linf_l2": rep.linf_l2,
        "e_mass": rep.e_mass,
    }
    return LevelRow(l_s, l_q, mesh.h, grid.dt, errors), sol, rep


def run_experiment(cfg, out=None, echo=print):
    """Loop over the configured levels, writing CSV output as it goes.

    Failures of a level are recorded (status ``failed``) and the remaining
    levels still run; the CSV always reflects the levels attempted so far.

    Returns
    -------
    ConvergenceReport
    """
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    scene = cfg.make_scene()
    report = ConvergenceReport([], diagonal=cfg.diagonal)
    csv_path = os.path.join(out, f"{cfg.name}.csv")
    for l_s, l_q in cfg.level_pairs():
        t0 = time.perf_counter()
        try:
            row, sol, rep = run_level(cfg, scene, l_s, l_q)
            write_mass_series(sol, rep, os.path.join(out, f"{cfg.name}_mass_{l_s}_{l_q}.csv"))
        except Exception as exc:  # record and continue with the next level
            log.error("level (%d, %d) failed: %s", l_s, l_q, exc)
            row = LevelRow(l_s, l_q, float("nan"), float("nan"), {}, status=f"failed: {exc}")
        report.rows.append(row)
        write_csv(report, csv_path)
        if echo is not None:
            echo(f"level l_s={l_s} l_q={l_q}: {row.status} ({time.perf_counter() - t0:.1f}s)")
    report.finalize()
    return report


def format_table(report):
    """Plain-text EOC table.

    Diagonal runs list one row per level; level grids print the energy
    error (or e_mass) as a matrix over (l_s, l_q) with temporal EOCs to the
    right of each entry and spatial EOCs below it.
    """
    key = eoc_key(report)
    lines = []
    if report.diagonal:
        cols = ("err_energy", "err_linf_l2", "e_mass")
        head = f"{'l':>3} {'h':>10} {'dt':>10}" + "".join(f" {c:>14} {'eoc':>6}" for c in cols)
        lines.append(head)
        prev = None
        for row in report.rows:
            s = f"{row.l_s:>3} {row.h:>10.3e} {row.dt:>10.3e}"
            for c in cols:
                v = row.errors.get(c)
                e = None
                if prev is not None and row.status == "ok" and prev.status == "ok":
                    e = report.row_eocs(row, c)[2]
                s += f" {v:>14.4e}" if v is not None and math.isfinite(v) else f" {'-':>14}"
                s += f" {e:>6.2f}" if e is not None else f" {'-':>6}"
            lines.append(s + ("" if row.status == "ok" else f"  [{row.status}]"))
            prev = row
        return "\n".join(lines)
    ls_vals = sorted({r.l_s for r in report.rows})
    lq_vals = sorted({r.l_q for r in report.rows})
    by = {(r.l_s, r.l_q): r for r in report.rows}
    lines.append(f"{key}: rows l_s, columns l_q (eoc_q after '|', eoc_s below)")
    lines.append("      " + "".join(f"{'l_q=' + str(q):>24}" for q in lq_vals))
    for s in ls_vals:
        vals, eos = [], []
        for q in lq_vals:
            r = by.get((s, q))
            if r is None or r.status != "ok":
                vals.append(f"{'-':>24}")
                eos.append(f"{'':>24}")
                continue
            es, eq, _ = report.row_eocs(r, key)
            v = r.errors.get(key)
            vals.append(f"{v:>14.4e} | " + (f"{eq:>6.2f}" if eq is not None else f"{'-':>6}"))
            eos.append(f"{'(' + format(es, '.2f') + ')' if es is not None else '':>24}")
        lines.append(f"l_s={s:<2}" + "".join(vals))
        lines.append("      " + "".join(eos))
    return "\n".join(lines)


@contextlib.contextmanager
def thread_limit(n):
    """Cap the BLAS/LAPACK thread pools at ``n``."""
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


def build_parser():
    p = argparse.ArgumentParser(prog="sttrace", description="Space-time trace FEM on evolving curves.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a convergence study from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--threads", type=int, default=None, help="thread count (overrides the config)")
    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("--suite", required=True, choices=["invariants", "oracles"])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        from .verify import run_suite

        results = run_suite(args.suite, echo=print)
        n_fail = sum(not r.passed for r in results)
        print(f"{len(results) - n_fail}/{len(results)} checks passed")
        return 0 if n_fail == 0 else 1
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if args.threads is not None:
            cfg.threads = args.threads
            cfg.__post_init__()
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    with thread_limit(cfg.threads):
        report = run_experiment(cfg, out=args.out)
    print(format_table(report))
    return 0 if all(r.status == "ok" for r in report.rows) else 1


if __name__ == "__main__":
    sys.exit(main())
