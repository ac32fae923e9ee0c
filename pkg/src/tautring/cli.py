"""Command-line interface.

Subcommands: compute, pairing, house, sympow, mg.  Progress goes to
standard error; results (JSON/CSV/text/SVG) go to standard output or the
--out file.  Exit codes: 0 success, 2 usage error, 3 computational
integrity failure, 4 resource abort (partial results flagged).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass

from . import __version__
from .algebra import InputError, make_context
from .cache import cache_get, cache_key, cache_put
from .linalg import IntegrityError, RankPolicy
from .pushforward import mg_relation_bases, mg_ring_analysis
from .quotient import (
    DimensionTable,
    HouseSpec,
    build_quotient,
    dimension_table,
    gorenstein_transfer,
    house_render,
    pairing_report,
    socle_check,
    sympow_dimensions,
)
from .relations import ResourceAbort, compute_ttilde, rtilde_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3
EXIT_RESOURCE = 4

_MODES = ("rtilde", "ttilde", "mg")


@dataclass
class JobConfig:
    genus: int
    mode: str = "ttilde"
    codim_cap: int = None
    n: int = None
    thread_count: int = 1
    prime_seed: int = 20240911
    nu_window: int = 3
    engine: str = "exact"
    cache_dir: str = None
    out_format: str = "json"
    out_path: str = None
    house_dim: int = None
    time_limit: float = None

    def validate(self, command: str) -> None:
        if self.genus < 1:
            raise InputError("genus must be >= 1")
        if command in ("compute", "pairing") and self.mode not in _MODES:
            raise InputError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.codim_cap is not None and self.codim_cap < 0:
            raise InputError("max-codim must be >= 0")
        if self.thread_count < 1:
            raise InputError("threads must be >= 1")
        if self.engine not in ("exact", "modular"):
            raise InputError(f"unknown engine {self.engine!r}")
        if self.engine == "modular" and command not in ("pairing", "mg"):
            raise InputError(
                "the modular engine is only available for the pairing command")
        if command == "sympow":
            if self.n is None:
                raise InputError("sympow requires --n")
            if self.n < 2 * self.genus - 1:
                raise InputError(
                    f"sympow supports n >= 2g - 1 = {2 * self.genus - 1}; "
                    f"got n = {self.n} (smaller n has no closed dimension formula)")


def default_cap(genus: int, mode: str) -> int:
    return {"ttilde": 2 * genus - 1,
            "rtilde": max(genus - 1, 0),
            "mg": max(genus - 2, 0)}[mode]


def _policy(config: JobConfig) -> RankPolicy:
    return RankPolicy(prime_seed=config.prime_seed)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _engine_block(config: JobConfig) -> dict:
    return {
        "version": __version__,
        "primes_seed": config.prime_seed,
        "nu_policy": "structural-truncation",
    }


def _cache_io(config: JobConfig):
    if not config.cache_dir:
        return None, None
    cdir = config.cache_dir

    def fetch_for(mode):
        def fetch(piece):
            return cache_get(cdir, cache_key(config.genus, mode, piece))
        return fetch

    def store_for(mode):
        def store(piece, basis):
            cache_put(cdir, cache_key(config.genus, mode, piece), basis)
        return store

    return fetch_for, store_for


def _deadline(config: JobConfig):
    if config.time_limit is None:
        return None
    return time.monotonic() + config.time_limit


def _build_tables(config: JobConfig, cap: int):
    """Quotient structure + dimension table for the configured mode."""
    policy = _policy(config)
    fetch_for, store_for = _cache_io(config)
    deadline = _deadline(config)
    if config.mode == "mg":
        quotient = mg_relation_bases(config.genus, cap, policy,
                                     deadline=deadline)
        table, _ = mg_ring_analysis(config.genus, cap, policy, quotient=quotient)
        return quotient, table
    ctx = make_context(config.genus)
    kw = {}
    if fetch_for:
        kw = {"fetch": fetch_for(config.mode), "store": store_for(config.mode)}
    if config.mode == "ttilde":
        bases = compute_ttilde(ctx, cap, policy, deadline=deadline, **kw)
    else:
        raw = rtilde_table(ctx, cap, policy, deadline=deadline, **kw)
        bases = {(0, 2 * d): b for d, b in raw.items()}
    from .quotient import QuotientBasis
    quotient = QuotientBasis(ctx=ctx, mode=config.mode, bases=bases, codim_cap=cap)
    table = dimension_table(ctx, config.mode, cap, quotient=quotient)
    return quotient, table


def _socle_block(config: JobConfig, table: DimensionTable):
    if config.mode == "mg":
        from .quotient import socle_codim
        target = socle_codim(config.genus, "mg")
        recs = [r for r in table.records if r["codim"] == target]
        dim = sum(r["dim"] for r in recs)
        return {"codim": target, "dim": dim, "location": None}
    ctx = make_context(config.genus)
    codim, dim, location = socle_check(ctx, config.mode, table)
    return {"codim": codim, "dim": dim,
            "location": [[list(b), d] for b, d in location]}


def _dims_json(table: DimensionTable) -> list:
    out = []
    for r in table.records:
        out.append({
            "bidegree": list(r["bidegree"]) if r["bidegree"] is not None else None,
            "codim": r["codim"],
            "monomials": r["monomials"],
            "relation_rank": r["relation_rank"],
            "dim": r["dim"],
        })
    return out


def _emit(config: JobConfig, text: str) -> None:
    if config.out_path:
        with open(config.out_path, "w") as fh:
            fh.write(text)
        _progress(f"wrote {config.out_path}")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _json_dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=str)


def _dims_csv(table: DimensionTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "codim", "monomials", "relation_rank", "dim"])
    for r in table.records:
        bd = r["bidegree"] if r["bidegree"] is not None else ("", "")
        w.writerow([bd[0], bd[1], r["codim"], r["monomials"],
                    r["relation_rank"], r["dim"]])
    return buf.getvalue()


def cmd_compute(config: JobConfig) -> int:
    cap = config.codim_cap if config.codim_cap is not None \
        else default_cap(config.genus, config.mode)
    _progress(f"computing {config.mode} dimension table, genus {config.genus}, "
              f"codim cap {cap}")
    try:
        quotient, table = _build_tables(config, cap)
    except ResourceAbort as exc:
        return _abort_report(config, exc)
    doc = {
        "genus": config.genus,
        "mode": config.mode,
        "dimensions": _dims_json(table),
        "socle": _socle_block(config, table) if cap >= _socle_target(config) else None,
        "pairings": None,
        "gorenstein": None,
        "complete": table.complete,
        "engine": _engine_block(config),
    }
    if config.out_format == "csv":
        _emit(config, _dims_csv(table))
    else:
        _emit(config, _json_dumps(doc))
    return EXIT_OK


def _socle_target(config: JobConfig) -> int:
    from .quotient import socle_codim
    return socle_codim(config.genus, config.mode)


def _abort_report(config: JobConfig, exc: ResourceAbort) -> int:
    _progress(f"resource abort: {exc}")
    doc = {
        "genus": config.genus,
        "mode": config.mode,
        "error": "resource-abort",
        "complete": False,
        "partial_pieces": sorted(
            [list(k) if isinstance(k, tuple) else k for k in exc.partial],
        ),
        "engine": _engine_block(config),
    }
    _emit(config, _json_dumps(doc))
    return EXIT_RESOURCE


def _pairing_json(report) -> dict:
    return {
        "socle_degree": report.socle_degree,
        "socle_dim": report.socle_dim,
        "records": report.records,
        "gorenstein": report.gorenstein,
        "reason": report.reason,
    }


def _pairing_text(report) -> str:
    lines = [f"genus {report.genus}, mode {report.mode}: "
             f"socle degree {report.socle_degree}, dim {report.socle_dim}"]
    if report.socle_dim != 1:
        lines.append(f"not Gorenstein: {report.reason}")
        return "\n".join(lines) + "\n"
    for r in report.records:
        missing = max(r["missing_left"], r["missing_right"])
        if missing:
            lines.append(f"codim {r['codim']}: {missing} missing")
    lines.append("gorenstein: " + ("true" if report.gorenstein else "false"))
    return "\n".join(lines) + "\n"


def _modular_pairing(config: JobConfig, cap: int) -> int:
    """Certified multi-prime pairing analysis (large-genus path)."""
    from .modengine import certified_report, engine_primes

    policy = _policy(config)
    report = certified_report(config.genus, cap, config.mode,
                              policy, deadline=_deadline(config))
    primes = engine_primes(policy.prime_seed, max(2, policy.min_primes))
    if report.socle_dim != 1:
        reason = "socle dimension != 1"
    elif not report.gorenstein:
        reason = "pairing defects"
    else:
        reason = ""
    records = [
        {"codim": a, "dim_left": da, "dim_right": db, "rank": r,
         "missing_left": da - r, "missing_right": db - r}
        for a, da, db, r in report.pairing_ranks
    ]
    if report.piece_dims is not None:
        dims = [{"bidegree": list(k), "codim": (k[0] + k[1]) // 2, "dim": d}
                for k, d in sorted(report.piece_dims.items(),
                                   key=lambda kv: (sum(kv[0]) // 2, kv[0]))]
    else:
        bidegree = (lambda d: [0, 2 * d]) if config.mode == "rtilde" \
            else (lambda d: None)
        dims = [{"bidegree": bidegree(d), "codim": d, "dim": v}
                for d, v in enumerate(report.dims)]
    doc = {
        "genus": config.genus,
        "mode": config.mode,
        "dimensions": dims,
        "socle": {"codim": report.socle_degree, "dim": report.socle_dim,
                  "location": [[list(b), 1] for b in report.socle_location]
                  if report.socle_location else None},
        "pairings": records,
        "gorenstein": report.gorenstein,
        "reason": reason,
        "engine": {**_engine_block(config), "method": "modular",
                   "primes": primes},
    }
    if config.out_format == "text":
        lines = [f"genus {config.genus}, mode {config.mode}: "
                 f"socle degree {report.socle_degree}, dim {report.socle_dim}"]
        for degree, count in report.missing:
            lines.append(f"codim {degree}: {count} missing")
        lines.append("gorenstein: " + ("true" if report.gorenstein else "false"))
        _emit(config, "\n".join(lines) + "\n")
    else:
        _emit(config, _json_dumps(doc))
    return EXIT_OK


def cmd_pairing(config: JobConfig) -> int:
    cap = config.codim_cap if config.codim_cap is not None else None
    target = _socle_target(config)
    cap = max(cap, target) if cap is not None else target
    _progress(f"computing {config.mode} pairing report, genus {config.genus}")
    if config.engine == "modular":
        return _modular_pairing(config, cap)
    policy = _policy(config)
    try:
        if config.mode == "mg":
            quotient = mg_relation_bases(config.genus, cap, policy,
                                         deadline=_deadline(config))
            table, report = mg_ring_analysis(config.genus, cap, policy,
                                             quotient=quotient)
        else:
            quotient, table = _build_tables(config, cap)
            ctx = quotient.ctx
            report = pairing_report(ctx, config.mode, quotient, policy)
    except ResourceAbort as exc:
        return _abort_report(config, exc)
    doc = {
        "genus": config.genus,
        "mode": config.mode,
        "dimensions": _dims_json(table),
        "socle": {"codim": report.socle_degree, "dim": report.socle_dim,
                  "location": None},
        "pairings": report.records,
        "gorenstein": report.gorenstein,
        "reason": report.reason,
        "engine": _engine_block(config),
    }
    if config.out_format == "text":
        _emit(config, _pairing_text(report))
    else:
        _emit(config, _json_dumps(doc))
    return EXIT_OK


def cmd_house(config: JobConfig) -> int:
    spec = HouseSpec(genus=config.genus, base_dimension=config.house_dim)
    dims = None
    if config.codim_cap is not None:
        ctx = make_context(config.genus)
        quotient = build_quotient(ctx, "ttilde", config.codim_cap)
        dims = dimension_table(ctx, "ttilde", config.codim_cap, quotient=quotient)
    fmt = "svg" if config.out_format == "svg" else "text"
    _emit(config, house_render(spec, dims, format=fmt))
    return EXIT_OK


def cmd_sympow(config: JobConfig) -> int:
    g, n = config.genus, config.n
    _progress(f"symmetric power analysis, genus {g}, n {n}")
    sub = JobConfig(**{**config.__dict__, "mode": "ttilde"})
    try:
        quotient, table = _build_tables(sub, 2 * g - 1)
    except ResourceAbort as exc:
        return _abort_report(config, exc)
    report = pairing_report(quotient.ctx, "ttilde", quotient, _policy(config))
    dims = sympow_dimensions(g, n, table.dims_by_codim())
    transfer = gorenstein_transfer(report, g, n)
    doc = {
        "genus": g,
        "mode": "sympow",
        "n": n,
        "dimensions": [{"codim": i, "dim": d} for i, d in enumerate(dims)],
        "socle": {"codim": g - 1 + n, "dim": dims[g - 1 + n], "location": None},
        "gorenstein": transfer["gorenstein"],
        "transfer": transfer,
        "engine": _engine_block(config),
    }
    _emit(config, _json_dumps(doc))
    return EXIT_OK


def cmd_mg(config: JobConfig) -> int:
    config.mode = "mg"
    return cmd_pairing(config)


def _read_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InputError(f"bad config line (expected key = value): {line!r}")
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}")
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tautring",
        description="Exact analysis of formal tautological quotient rings.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mode_arg=True):
        sp.add_argument("--genus", type=int, required=True)
        if mode_arg:
            sp.add_argument("--mode", default="ttilde")
        sp.add_argument("--max-codim", type=int, dest="codim_cap")
        sp.add_argument("--out", dest="out_path")
        sp.add_argument("--format", dest="out_format",
                        choices=["json", "csv", "text", "svg"], default="json")
        sp.add_argument("--threads", type=int, dest="thread_count")
        sp.add_argument("--seed", type=int, dest="prime_seed")
        sp.add_argument("--nu-window", type=int, dest="nu_window")
        sp.add_argument("--engine", choices=["exact", "modular"])
        sp.add_argument("--cache-dir", dest="cache_dir")
        sp.add_argument("--time-limit", type=float, dest="time_limit")
        sp.add_argument("--config", dest="config_file")

    common(sub.add_parser("compute", help="dimension table + socle"))
    common(sub.add_parser("pairing", help="pairing matrices + Gorenstein verdict"))
    hp = sub.add_parser("house", help="render the block diagram")
    common(hp, mode_arg=False)
    hp.add_argument("--dim", type=int, dest="house_dim")
    spw = sub.add_parser("sympow", help="symmetric-power dimensions + transfer")
    common(spw, mode_arg=False)
    spw.add_argument("--n", type=int)
    common(sub.add_parser("mg", help="unpointed kappa ring analysis"),
           mode_arg=False)
    return p


_INT_KEYS = {"genus", "codim_cap", "n", "thread_count", "prime_seed",
             "nu_window", "house_dim"}
_CONFIG_ALIASES = {"max_codim": "codim_cap", "threads": "thread_count",
                   "seed": "prime_seed", "format": "out_format",
                   "out": "out_path", "dim": "house_dim"}


def build_config(args: argparse.Namespace) -> JobConfig:
    values = {}
    if getattr(args, "config_file", None):
        for k, v in _read_config_file(args.config_file).items():
            k = _CONFIG_ALIASES.get(k, k)
            if k in _INT_KEYS:
                try:
                    v = int(v)
                except ValueError:
                    raise InputError(f"config key {k} needs an integer, got {v!r}")
            elif k == "time_limit":
                v = float(v)
            values[k] = v
    for k in ("genus", "mode", "codim_cap", "n", "thread_count", "prime_seed",
              "nu_window", "cache_dir", "out_format", "out_path", "house_dim",
              "time_limit", "engine"):
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    env_map = {"TAUTRING_THREADS": ("thread_count", int),
               "TAUTRING_PRIME_SEED": ("prime_seed", int),
               "TAUTRING_CACHE_DIR": ("cache_dir", str)}
    for env, (key, conv) in env_map.items():
        if env in os.environ:
            try:
                values[key] = conv(os.environ[env])
            except ValueError:
                raise InputError(f"environment variable {env} must be {conv.__name__}")
    defaults = JobConfig(genus=values.get("genus", 1))
    for k, v in values.items():
        if hasattr(defaults, k):
            setattr(defaults, k, v)
    return defaults


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        config = build_config(args)
        config.validate(args.command)
        handler = {
            "compute": cmd_compute,
            "pairing": cmd_pairing,
            "house": cmd_house,
            "sympow": cmd_sympow,
            "mg": cmd_mg,
        }[args.command]
        return handler(config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except MemoryError:
        print("resource abort: out of memory", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
