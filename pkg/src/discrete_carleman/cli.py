"""Command-line front end.

Subcommands: ``identities``, ``audit-remainders``, ``converge``, ``bounded-ratio``,
``disambiguate``, ``counterexample``, ``swap`` and ``all``.

Every run writes ``<suite>.csv`` and/or ``<suite>.json`` into ``--out`` and
prints one verdict line per suite.  Exit status is 0 when every verdict is
PASS, 1 when any check fails and 2 for usage or configuration errors
(including claims refused because their regime condition fails).

Settings may also come from a key-value config file (``--config``, or the
path in ``DISCRETE_CARLEMAN_CONFIG``)::

    # comments start with '#'
    s = 2
    h = 2^-4..2^-9
    claim = weighted-avg-diff, nested-avg-diff
    lam = 1
    seed = 0
    out = reports

Keys are the long option names with ``-`` replaced by ``_``; command-line
flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import runner
from .asymptotics import REGISTRY, RegimeError
from .fields import SpecError, WeightSpec

CONFIG_ENV = "DISCRETE_CARLEMAN_CONFIG"
COMMANDS = ("identities", "audit-remainders", "converge", "bounded-ratio", "disambiguate", "counterexample",
            "swap", "all")


class ConfigError(ValueError):
    pass


# -- value parsing ------------------------------------------------------------------------

_POW = re.compile(r"^\s*2\^(-?\d+)\s*$")


def parse_real(text: str) -> float:
    m = _POW.match(text)
    if m:
        return 2.0 ** int(m.group(1))
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_h_levels(text: str) -> list[float]:
    """``"2^-4..2^-9"`` (every power of two in between), or a comma list of reals."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        ma, mb = _POW.match(a), _POW.match(b)
        if not (ma and mb):
            raise ConfigError(f"ranges must look like 2^-4..2^-9, got {text!r}")
        ka, kb = int(ma.group(1)), int(mb.group(1))
        step = -1 if kb < ka else 1
        levels = [2.0 ** k for k in range(ka, kb + step, step)]
    else:
        levels = [parse_real(v) for v in text.split(",") if v.strip()]
    if any(v <= 0 for v in levels):
        raise ConfigError("h levels must be positive")
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"h levels must be strictly decreasing, got {levels}")
    return levels


def parse_list(text: str, conv=str) -> list:
    return [conv(v.strip()) for v in text.split(",") if v.strip()]


# -- config ---------------------------------------------------------------------------------

def read_config(path: str | os.PathLike) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        cp.read_string("[run]\n" + p.read_text())
    except configparser.Error as e:
        raise ConfigError(f"bad config file {p}: {e}") from None
    return {k.replace("-", "_"): v for k, v in cp["run"].items()}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="discrete-carleman",
                                 description="Verify discrete Carleman weight identities and expansions.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help=f"key-value config file (default: ${CONFIG_ENV} if set)")
    ap.add_argument("--out", help="output directory (default: reports)")
    ap.add_argument("--format", choices=("csv", "json", "both"), help="report format (default: both)")
    ap.add_argument("--seed", type=int, help="seed of the quasi-random point sets (default: 0)")
    ap.add_argument("--jobs", type=int, help="worker threads (default: 1)")
    ap.add_argument("--claim", help="comma-separated claim ids")
    ap.add_argument("--h", help="h levels, e.g. 2^-4..2^-9 or 0.1,0.05,0.025,0.0125")
    ap.add_argument("--s", help="fixed s (or tau for time-dependent claims) for convergence fits")
    ap.add_argument("--s-values", help="comma-separated s values for bounded-ratio")
    ap.add_argument("--sh-values", help="comma-separated s*h values for bounded-ratio")
    ap.add_argument("--policy", choices=("fixed_s", "fixed_sh"), help="s policy of convergence fits")
    ap.add_argument("--identity-h", help="step of the exact-identity suite (default: 0.2)")
    ap.add_argument("--lam", help="lambda (>= 1)")
    ap.add_argument("--psi", choices=("poly", "hyperbolic"), help="psi preset")
    ap.add_argument("--delta", help="delta in (0, 1/2]")
    ap.add_argument("--T", help="final time")
    ap.add_argument("--beta", help="hyperbolic preset: beta")
    ap.add_argument("--c0", help="hyperbolic preset: c0")
    ap.add_argument("--x-star", help="hyperbolic preset: comma-separated x_star")
    ap.add_argument("--M", help="counterexample: comma-separated interior sizes")
    ap.add_argument("--omega", help="counterexample: observation rectangle i0:i1,j0:j1")
    ap.add_argument("--alpha-dt", help="counterexample: alpha*dt in (0, 1)")
    return ap


_KEYS = {"out", "format", "seed", "jobs", "claim", "h", "s", "s_values", "sh_values", "policy", "identity_h",
         "lam", "psi", "delta", "T", "beta", "c0", "x_star", "M", "omega", "alpha_dt"}


def resolve(argv: list[str] | None = None) -> dict:
    """Merge defaults, the config file and the flags (flags win) into a settings dict."""
    args = _parser().parse_args(argv)
    settings: dict = {}
    cfg_path = args.config or os.environ.get(CONFIG_ENV)
    if cfg_path:
        file_settings = read_config(cfg_path)
        lower = {k.lower(): k for k in _KEYS}
        for k, v in file_settings.items():
            if k not in lower:
                raise ConfigError(f"unknown config key {k!r}")
            settings[lower[k]] = v
    for k in _KEYS:
        v = getattr(args, k)
        if v is not None:
            settings[k] = v
    settings["command"] = args.command
    return settings


def _env(st: dict) -> WeightSpec | None:
    fields = {}
    if "lam" in st:
        fields["lam"] = parse_real(str(st["lam"]))
    if "psi" in st:
        fields["psi_preset"] = st["psi"]
    for k in ("delta", "T", "beta", "c0"):
        if k in st:
            fields[k] = parse_real(str(st[k]))
    if "x_star" in st:
        fields["x_star"] = tuple(parse_list(str(st["x_star"]), parse_real))
    if "s" in st:
        s = parse_real(str(st["s"]))
        fields["s"] = s
        fields["tau"] = s
    return WeightSpec(**fields) if fields else None


def _claims(st: dict, default) -> list[str]:
    if "claim" not in st:
        return list(default)
    ids = parse_list(str(st["claim"]))
    unknown = [c for c in ids if c not in REGISTRY]
    if unknown:
        raise ConfigError(f"unknown claim(s) {unknown}; known: {', '.join(sorted(REGISTRY))}")
    return ids


# -- report writing -------------------------------------------------------------------------

def fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.16e}"
    return str(v)


def to_csv(res: runner.SuiteResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(res.columns)
    for row in res.rows:
        w.writerow([fmt_cell(row.get(c)) for c in res.columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else fmt_cell(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if v is None or isinstance(v, str):
        return v
    return str(v)


def to_json(res: runner.SuiteResult) -> str:
    return json.dumps(_jsonable(res.to_json()), sort_keys=True, indent=2) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_reports(results: list[runner.SuiteResult], out: Path, fmt: str) -> list[Path]:
    written = []
    for res in results:
        if fmt in ("csv", "both"):
            p = out / f"{res.name}.csv"
            write_atomic(p, to_csv(res))
            written.append(p)
        if fmt in ("json", "both"):
            p = out / f"{res.name}.json"
            write_atomic(p, to_json(res))
            written.append(p)
    return written


# -- dispatch -------------------------------------------------------------------------------

def run_suites(st: dict) -> list[runner.SuiteResult]:
    cmd = st["command"]
    seed = int(st.get("seed", 0))
    jobs = int(st.get("jobs", 1))
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    env = _env(st)
    h_levels = parse_h_levels(str(st["h"])) if "h" in st else []
    s = parse_real(str(st["s"])) if "s" in st else 2.0
    out = []
    if cmd in ("identities", "all"):
        ih = parse_real(str(st.get("identity_h", "0.2")))
        out.append(runner.run_identities(h=ih, seed=seed, jobs=jobs))
        out.append(runner.run_tepper())
    if cmd in ("audit-remainders", "all"):
        out.append(runner.run_audits(seed=seed + 1, jobs=jobs))
    if cmd in ("converge", "all"):
        claims = _claims(st, runner.CONVERGE_CLAIMS)
        out.append(runner.run_convergence(claims, h_levels, s, env, st.get("policy", "fixed_s"), seed, jobs))
    if cmd in ("bounded-ratio", "all"):
        claims = _claims(st, runner.RATIO_CLAIMS)
        kw = {}
        if "s_values" in st:
            kw["s_values"] = parse_list(str(st["s_values"]), parse_real)
        if "sh_values" in st:
            kw["sh_values"] = parse_list(str(st["sh_values"]), parse_real)
        out.append(runner.run_bounded_ratio(claims, env=env, seed=seed, jobs=jobs, **kw))
    if cmd in ("disambiguate", "all"):
        for cid in _claims(st, ["nested-avg-diff"]):
            res = runner.run_disambiguate(cid, h_levels, s, env, seed)
            if cid != "nested-avg-diff":
                res.name = f"disambiguate-{cid}"
            out.append(res)
    if cmd in ("swap", "all"):
        claims = _claims(st, sorted(REGISTRY)) if cmd == "swap" else None
        out.append(runner.run_swap(claims, seed=seed, jobs=jobs))
    if cmd in ("counterexample", "all"):
        M = parse_list(str(st.get("M", "7,15,31,63")), int)
        c = parse_real(str(st.get("alpha_dt", "0.5")))
        T = parse_real(str(st.get("T", "1")))
        out.append(runner.run_counterexample(M, st.get("omega", "1:2,5:6"), T, c))
    return out


def main(argv: list[str] | None = None) -> int:
    try:
        st = resolve(argv)
        results = run_suites(st)
    except SystemExit as e:  # argparse usage errors
        return int(e.code or 0)
    except (ConfigError, SpecError, RegimeError, KeyError, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 2
    out = Path(st.get("out", "reports"))
    fmt = st.get("format", "both")
    write_reports(results, out, fmt)
    for res in results:
        print(f"{res.name}: {'PASS' if res.passed else 'FAIL'}")
        if not res.passed:
            for row in res.rows:
                if row.get("verdict") == "FAIL":
                    label = row.get("claim") or row.get("identity") or row.get("kind") or ""
                    print(f"  FAIL {label} {json.dumps(_jsonable(row), sort_keys=True)}")
    return 0 if all(r.passed for r in results) else 1
