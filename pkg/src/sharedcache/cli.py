"""Scenario runner: ``sharedcache run CONFIG`` and ``sharedcache sweep CONFIG``.

Configs are INI files; see ``sharedcache/configs`` for the shipped ones and
the README for the schema. Every run writes ``report.txt`` and
``results.csv`` to the output directory and exits nonzero when a user fails
to decode, a measured time disagrees with its closed form, or a converse
certificate fails.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Callable

from . import analytics, converse, ecc, online
from .association import Association, profile_of
from .delivery import decode_all, deliver_distinct, deliver_nondistinct, num_distinct, to_trace
from .errors import CodedCachingError, ConfigError
from .placement import EXACT, RANDOM, SystemParams, place_exact, place_random

log = logging.getLogger("sharedcache")

OUTPUT_ENV = "SHAREDCACHE_OUTPUT_DIR"
DEFAULT_OUTPUT = "sharedcache-out"
MODES = ("offline-distinct", "offline-nondistinct", "online", "ecc", "sweep")
RESULT_COLUMNS = ["point", "slot", "mode", "L", "M", "F", "delta", "u", "measured", "formula",
                  "match", "decoded", "verdict", "coded_time", "evicted"]
SWEEP_COLUMNS = ["point", "L", "M", "F", "delta", "measured", "t_offline", "t_uniform",
                 "t_dedicated", "coded_time", "match", "decoded"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# -- config parsing ---------------------------------------------------------

def _int(v: str) -> int:
    return int(v)


def _frac(v: str) -> Fraction:
    return Fraction(v.strip())


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(",", " ").split())


def _fracs(v: str) -> tuple[Fraction, ...]:
    return tuple(Fraction(x) for x in v.replace(",", " ").split())


def _profiles(v: str) -> tuple[tuple[int, ...], ...]:
    return tuple(_ints(p) for p in v.split(";") if p.strip())


def _groups(v: str) -> tuple[tuple[int, ...], ...]:
    return tuple(_ints(g) for g in v.split("|"))


def _file_size(v: str):
    return "auto" if v.strip() == "auto" else int(v)


def _choice(*options) -> Callable[[str], str]:
    def parse(v: str) -> str:
        v = v.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _errors(v: str):
    v = v.strip()
    return "sweep" if v == "sweep" else _ints(v)


# section -> key -> (parser, default); default ... means required
SCHEMA: dict[str, dict[str, tuple[Callable, object]]] = {
    "scenario": {"mode": (_choice(*MODES), ...), "name": (str.strip, "")},
    "system": {"N": (_int, ...), "K": (_int, ...), "caches": (_int, ...), "M": (_frac, None),
               "F": (_file_size, "auto"), "beta": (_frac, Fraction(1))},
    "association": {"profile": (_ints, None), "groups": (_groups, None)},
    "demand": {"d": (_ints, None), "trace": (str.strip, None)},
    "placement": {"mode": (_choice(EXACT, RANDOM), EXACT), "seed": (_int, 0)},
    "online": {"files": (_ints, None), "popular": (_ints, None), "order": (_ints, None)},
    "converse": {"certify": (_bool, False), "budget": (_int, converse.DEFAULT_MESSAGE_BUDGET)},
    "ecc": {"delta": (_int, 0), "code": (str.strip, "auto"), "errors": (_errors, ())},
    "sweep": {"M": (_fracs, None), "profiles": (_profiles, None), "delta": (_ints, (0,))},
}


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Line numbers of section headers and keys, for diagnostics."""
    where: dict[tuple[str, str | None], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
        elif section and line and line[0] not in "#;" and ("=" in line or ":" in line):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            where.setdefault((section, key), lineno)
    return where


@dataclass
class Scenario:
    name: str
    mode: str
    values: dict[str, dict[str, object]]
    base_dir: object = None
    source: str = "<config>"
    lines: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def fail(self, message: str, section: str, key: str | None = None) -> ConfigError:
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return ConfigError(message, line, self.source)


def parse_config(text: str, source: str = "<config>", base_dir=None) -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", lineno, source) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, source) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno, source) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("missing section header", exc.lineno, source) from exc
    lines = _line_index(text)
    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), source)
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]",
                                  lines.get((section, key)), source)
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (conv, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[section][key] = conv(raw)
                except (ValueError, ZeroDivisionError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}", lines.get((section, key)),
                                      source) from exc
            elif default is ...:
                line = lines.get((section, None))
                raise ConfigError(f"missing required key {key!r} in [{section}]", line, source)
            else:
                values[section][key] = default
    mode = values["scenario"]["mode"]
    name = values["scenario"]["name"] or Path(source).stem
    scenario = Scenario(name, mode, values, base_dir, source, lines)
    _validate(scenario)
    return scenario


def _validate(sc: Scenario) -> None:
    v = sc.values
    if sc.mode == "sweep":
        if v["sweep"]["M"] is None or v["sweep"]["profiles"] is None:
            raise sc.fail("sweep mode needs [sweep] M and profiles", "sweep")
        for L in v["sweep"]["profiles"]:
            if len(L) != v["system"]["caches"] or sum(L) != v["system"]["K"]:
                raise sc.fail(f"profile {L} must have {v['system']['caches']} entries summing to K",
                              "sweep", "profiles")
        return
    if v["system"]["M"] is None:
        raise sc.fail("missing required key 'M' in [system]", "system")
    a = v["association"]
    if (a["profile"] is None) == (a["groups"] is None):
        raise sc.fail("give exactly one of profile or groups", "association")
    if sc.mode == "online":
        if v["demand"]["trace"] is None:
            raise sc.fail("online mode needs [demand] trace", "demand")
        if v["online"]["files"] is None or v["online"]["popular"] is None:
            raise sc.fail("online mode needs [online] files and popular", "online")
    elif v["demand"]["d"] is None:
        raise sc.fail(f"{sc.mode} mode needs [demand] d", "demand")
    if sc.mode == "ecc" and v["ecc"]["delta"] < 1:
        raise sc.fail("ecc mode needs delta >= 1", "ecc", "delta")


def shipped_configs() -> list[str]:
    root = resources.files("sharedcache").joinpath("configs")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.is_file():
        return parse_config(path.read_text(), str(path), path.parent)
    name = ref[:-4] if ref.endswith(".ini") else ref
    root = resources.files("sharedcache").joinpath("configs")
    shipped = root.joinpath(f"{name}.ini")
    if not shipped.is_file():
        raise ConfigError(f"no config file {ref!r} and no shipped config named {name!r} "
                          f"(shipped: {', '.join(shipped_configs())})")
    return parse_config(shipped.read_text(), f"{name}.ini", root)


def _read_relative(sc: Scenario, rel: str) -> str:
    p = Path(rel)
    if p.is_absolute():
        return p.read_text()
    base = sc.base_dir if sc.base_dir is not None else Path(".")
    return base.joinpath(rel).read_text()


# -- scenario building ------------------------------------------------------

def auto_file_size(N_catalog: int, M: Fraction, num_caches: int) -> int:
    """Smallest F giving whole-bit exact-fraction subfiles: denominator(q)^Λ."""
    return (Fraction(M) / N_catalog).denominator ** num_caches


def build_params(sc: Scenario, M: Fraction | None = None) -> SystemParams:
    s = sc.values["system"]
    M = s["M"] if M is None else M
    catalog = s["N"] * s["beta"]
    F = s["F"]
    if F == "auto":
        if catalog.denominator != 1:
            raise sc.fail("beta*N must be an integer", "system", "beta")
        F = auto_file_size(int(catalog), M, s["caches"])
    try:
        return SystemParams(s["N"], s["K"], s["caches"], M, F, beta=s["beta"])
    except CodedCachingError as exc:
        raise sc.fail(str(exc), "system") from exc


def build_association(sc: Scenario, params: SystemParams) -> Association:
    a = sc.values["association"]
    try:
        if a["profile"] is not None:
            assoc = Association.from_profile(a["profile"])
        else:
            assoc = Association(a["groups"])
        if assoc.num_caches != params.num_caches:
            raise ConfigError(f"association has {assoc.num_caches} caches, expected "
                              f"{params.num_caches}")
        assoc.check_covers(params.num_users)
    except CodedCachingError as exc:
        key = "profile" if a["profile"] is not None else "groups"
        raise sc.fail(str(exc), "association", key) from exc
    return assoc


def _place(sc: Scenario, params: SystemParams, files=None):
    p = sc.values["placement"]
    if p["mode"] == EXACT:
        return place_exact(params, files=files)
    return place_random(params, p["seed"], files=files)


def _fmt_profile(L) -> str:
    return "(" + ",".join(map(str, L)) + ")"


def _code(sc: Scenario, k: int, delta: int) -> ecc.LinearBlockCode:
    code_ref = sc.values["ecc"]["code"]
    if code_ref == "auto":
        return ecc.code_for(k, delta)
    return ecc.load_code(_read_relative(sc, code_ref), name=code_ref)


def _error_patterns(sc: Scenario, n: int, delta: int) -> list[tuple[int, ...]]:
    errors = sc.values["ecc"]["errors"]
    if errors == "sweep":
        return [c for w in range(delta + 1) for c in combinations(range(n), w)]
    return [tuple(errors)]


@dataclass
class Outcome:
    report: list[str]
    rows: list[dict]
    ok: bool
    extra_files: dict[str, str] = field(default_factory=dict)


def run_offline(sc: Scenario) -> Outcome:
    params = build_params(sc)
    assoc = build_association(sc, params)
    demand = sc.values["demand"]["d"]
    if len(demand) != params.num_users:
        raise sc.fail(f"demand has {len(demand)} entries, K = {params.num_users}", "demand", "d")
    if any(not 1 <= f <= params.num_files for f in demand):
        raise sc.fail(f"demands must lie in 1..{params.num_files}", "demand", "d")
    distinct = num_distinct(demand) == len(demand)
    if sc.mode == "offline-nondistinct" and distinct:
        log.info("demand is distinct; the repeated-demand scheme still applies")
    placement = _place(sc, params)
    profile, _ = profile_of(assoc)
    exact = placement.mode == EXACT
    if sc.mode == "offline-nondistinct" or not distinct:
        tlog = deliver_nondistinct(placement, assoc, demand)
        formula = analytics.t_nondistinct(demand, assoc, params) if exact else None
    else:
        tlog = deliver_distinct(placement, assoc, demand)
        formula = analytics.t_offline(profile, params) if exact and params.cache_size else None
    decoded = decode_all(assoc, placement, tlog)
    measured = tlog.normalized_time
    match = formula is None or formula == measured
    ok = all(decoded.values()) and match
    report = [f"scenario: {sc.name} ({sc.mode})",
              f"system: N={params.num_files} K={params.num_users} caches={params.num_caches} "
              f"M={params.cache_size} F={params.file_size} placement={placement.mode}",
              f"association: {assoc.groups} profile {_fmt_profile(profile)}",
              f"demand: {tuple(demand)}",
              f"transmissions ({len(tlog)}):"]
    report += [f"  {t.describe()}  [{t.length} bits]" for t in tlog]
    cmp = "=" if match else "!="
    report.append(f"delivery time: measured {measured}"
                  + (f" {cmp} formula {formula}" if formula is not None else ""))
    report.append("decoding: " + ", ".join(f"user {u} {'ok' if v else 'FAILED'}"
                                           for u, v in sorted(decoded.items())))
    verdict_text = ""
    if sc.values["converse"]["certify"]:
        if exact and distinct:
            v = converse.certify_optimality(placement, assoc, demand, tlog,
                                            budget=sc.values["converse"]["budget"])
            verdict_text = v.status
            ok = ok and v.status == "OPTIMAL"
            report.append(f"converse: {v.summary()}")
        else:
            report.append("converse: skipped (needs exact placement and distinct demands)")
    delta = sc.values["ecc"]["delta"]
    coded_time = ""
    if delta > 0:
        code = _code(sc, max(tlog.total_bits, 1), delta)
        base = ecc.encode_concatenated(tlog, code, delta)
        patterns = _error_patterns(sc, base.coded_bits, delta)
        failures = 0
        for pos in patterns:
            run = ecc.inject_errors(base, pos)
            restored = ecc.restore_log(run, ecc.syndrome_decode(run))
            if not all(decode_all(assoc, placement, restored).values()):
                failures += 1
        coded_time = str(base.coded_time)
        ok = ok and failures == 0
        report.append(f"error correction: delta={delta} code {code.name} (n={code.n}, k={code.k}, "
                      f"d={code.d}), padding {base.padding} bits, coded time {base.coded_time}")
        report.append(f"  repetition-per-bit baseline: {ecc.repetition_per_bit_time(tlog, delta)}")
        report.append(f"  error patterns tried: {len(patterns)}, decode failures: {failures}")
    report.append(f"status: {'PASS' if ok else 'FAIL'}")
    row = {"point": 1, "slot": "", "mode": sc.mode, "L": _fmt_profile(profile),
           "M": str(params.cache_size), "F": params.file_size, "delta": delta, "u": 0,
           "measured": str(measured), "formula": "" if formula is None else str(formula),
           "match": match, "decoded": all(decoded.values()), "verdict": verdict_text,
           "coded_time": coded_time, "evicted": ""}
    return Outcome(report, [row], ok, {"transmissions.tsv": to_trace(tlog)})


def run_online(sc: Scenario) -> Outcome:
    params = build_params(sc)
    assoc = build_association(sc, params)
    o = sc.values["online"]
    trace_name = sc.values["demand"]["trace"]
    try:
        trace = online.parse_trace(_read_relative(sc, trace_name))
    except ValueError as exc:
        raise sc.fail(f"trace {trace_name}: {exc}", "demand", "trace") from exc
    except OSError as exc:
        raise sc.fail(f"cannot read trace {trace_name}: {exc}", "demand", "trace") from exc
    p = sc.values["placement"]
    state = online.initial_state(params, o["files"], o["popular"], order=o["order"],
                                 mode=p["mode"], seed=p["seed"])
    certify = sc.values["converse"]["certify"]
    state, reports = online.run_trace(state, assoc, trace, verify=True, certify=certify)
    report = [f"scenario: {sc.name} (online)",
              f"system: N={params.num_files} N'={params.catalog_size} K={params.num_users} "
              f"caches={params.num_caches} M={params.cache_size} F={params.file_size} "
              f"placement={p['mode']}",
              f"association: {assoc.groups}",
              f"initial cache list: {tuple(o['files'])}, ordering {dict(zip(o['files'], o['order'] or ()))}"]
    rows = []
    ok = True
    for r in reports:
        match = r.formula is None or r.formula == r.measured
        ok = ok and r.ok
        line = (f"slot {r.slot}: arrivals {r.arrivals} departures {r.departures} demand {r.demand} "
                f"-> measured {r.measured}")
        if r.formula is not None:
            line += f" {'=' if match else '!='} formula {r.formula}"
        report.append(line + f" (uncached {r.u_count})")
        for ev in r.evictions:
            tie = f", tie {ev.candidates} broken by ordering" if ev.tie_broken_by_order else ""
            report.append(f"  evict {ev.evicted} for {ev.new_file}{tie}")
        if r.verdict is not None:
            report.append(f"  converse: {r.verdict.summary()}")
        report.append(f"  cached after: {r.cached_after}; decoding "
                      f"{'ok' if all(r.decoded.values()) else 'FAILED'}")
        rows.append({"point": 1, "slot": r.slot, "mode": "online", "L": "",
                     "M": str(params.cache_size), "F": params.file_size, "delta": 0,
                     "u": r.u_count, "measured": str(r.measured),
                     "formula": "" if r.formula is None else str(r.formula), "match": match,
                     "decoded": all(r.decoded.values()),
                     "verdict": r.verdict.status if r.verdict is not None else "",
                     "coded_time": "", "evicted": " ".join(str(e.evicted) for e in r.evictions)})
    report.append(f"status: {'PASS' if ok else 'FAIL'}")
    return Outcome(report, rows, ok)


def sweep_point(args) -> dict:
    """One grid point: simulate the profile in exact mode and evaluate the closed forms."""
    values, L, M, delta, index = args
    s = values["system"]
    K, lam, N = s["K"], s["caches"], s["N"]
    F = s["F"] if s["F"] != "auto" else auto_file_size(N, M, lam)
    params = SystemParams(N, K, lam, M, F)
    assoc = Association.from_profile(L)
    demand = tuple((k % N) + 1 for k in range(K))
    placement = place_exact(params)
    distinct = num_distinct(demand) == K
    tlog = (deliver_distinct if distinct else deliver_nondistinct)(placement, assoc, demand)
    decoded = all(decode_all(assoc, placement, tlog).values())
    measured = tlog.normalized_time
    if M == 0:
        t_off = t_uni = t_ded = Fraction(K)
    else:
        t_off = analytics.t_offline(L, params) if distinct else analytics.t_nondistinct(
            demand, assoc, params)
        t_uni = analytics.t_uniform(K, lam, params) if K % lam == 0 else ""
        t_ded = analytics.t_dedicated(K, params)
    coded = ""
    if delta > 0:
        try:
            code = ecc.code_for(tlog.total_bits, delta)
            coded = str(ecc.encode_concatenated(tlog, code, delta).coded_time)
        except CodedCachingError as exc:
            coded = f"n/a ({exc.__class__.__name__})"
    return {"point": index, "L": _fmt_profile(L), "M": str(M), "F": F, "delta": delta,
            "measured": str(measured), "t_offline": str(t_off), "t_uniform": str(t_uni),
            "t_dedicated": str(t_ded), "coded_time": coded, "match": measured == t_off,
            "decoded": decoded}


def run_sweep(sc: Scenario, jobs: int = 1) -> Outcome:
    grid = sc.values["sweep"]
    points = [(sc.values, L, M, delta) for M in grid["M"] for L in grid["profiles"]
              for delta in grid["delta"]]
    points = [p + (i,) for i, p in enumerate(points, start=1)]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(sweep_point, points))
    else:
        rows = [sweep_point(p) for p in points]
    ok = all(r["match"] and r["decoded"] for r in rows)
    report = [f"scenario: {sc.name} (sweep, {len(rows)} points)"]
    for r in rows:
        flag = "" if r["match"] and r["decoded"] else "  MISMATCH"
        coded = f" coded {r['coded_time']}" if r["coded_time"] else ""
        report.append(f"L={r['L']} M={r['M']} delta={r['delta']}: measured {r['measured']} "
                      f"formula {r['t_offline']}{coded}{flag}")
    report.append(f"status: {'PASS' if ok else 'FAIL'}")
    return Outcome(report, rows, ok)


def execute(sc: Scenario, jobs: int = 1) -> Outcome:
    try:
        if sc.mode == "sweep":
            return run_sweep(sc, jobs)
        if sc.mode == "online":
            return run_online(sc)
        return run_offline(sc)
    except ConfigError:
        raise
    except CodedCachingError as exc:
        raise ConfigError(f"{exc.__class__.__name__}: {exc}", None, sc.source) from exc


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_outputs(outcome: Outcome, out_dir: Path, columns: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text("\n".join(outcome.report) + "\n")
    (out_dir / "results.csv").write_text(_csv(outcome.rows, columns))
    for name, text in outcome.extra_files.items():
        (out_dir / name).write_text(text)


def resolve_output(flag: str | None, name: str) -> Path:
    """``-o`` wins, then $SHAREDCACHE_OUTPUT_DIR, then ./sharedcache-out; one subdir per scenario."""
    base = flag or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    return Path(base) / name


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sharedcache", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, help_text in (("run", "run one scenario"), ("sweep", "run a parameter grid")):
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("config", help="config file path or shipped config name")
        p.add_argument("-o", "--output", help=f"output directory (default ${OUTPUT_ENV} or "
                                              f"./{DEFAULT_OUTPUT})")
        p.add_argument("-j", "--jobs", type=int, default=1, help="parallel grid points")
        p.add_argument("--print", dest="echo", action="store_true", help="echo the report")
    sub.add_parser("list", help="list shipped configs")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    if args.command == "list":
        print("\n".join(shipped_configs()))
        return EXIT_OK
    try:
        sc = load_scenario(args.config)
        if args.command == "sweep" and sc.mode != "sweep":
            raise ConfigError(f"sweep needs a config with mode = sweep, got {sc.mode}", None,
                              sc.source)
        log.info("running %s (%s)", sc.name, sc.mode)
        outcome = execute(sc, max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = resolve_output(args.output, sc.name)
    write_outputs(outcome, out_dir, SWEEP_COLUMNS if sc.mode == "sweep" else RESULT_COLUMNS)
    log.info("wrote %s", out_dir)
    if args.echo:
        print("\n".join(outcome.report))
    else:
        print(outcome.report[-1] + f"  ({out_dir})")
    return EXIT_OK if outcome.ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
