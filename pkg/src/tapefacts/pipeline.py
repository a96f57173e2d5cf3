"""End-to-end run: load or generate tapes, analyze symbols in parallel,
envelope white noise, decide verdicts and write the report bundle.

The bundle is a directory of CSV and JSON files. Every file carries the
config hash, JSON is written with sorted keys and floats in shortest
round-trip form, so reruns (at any worker count) are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, RunConfig, params_from_values
from .facts import (FACT_NAMES, BatteryAnalyzer, FactResult, run_battery, verdict)
from .stats import LagCurve
from .synth import NoiseBand, calendar_for, generate, load_bands, noise_band, save_bands, symbol_rng
from .tape import (ParseReport, SessionCalendar, Tape, TapeFormatError, TapeStats, filter_session,
                   parse_tape, tape_stats)

log = logging.getLogger(__name__)

SUBDIRS = ("curves", "bands", "facts")


class DataError(ValueError):
    """Input data unusable: missing or unreadable tape, no trades to analyze."""


@dataclass
class RunResult:
    out: Path
    config_hash: str
    symbols: list[str]
    skipped: list[dict]
    stats: dict[str, TapeStats]
    curves: dict[str, dict[str, LagCurve]]
    bands: dict[str, NoiseBand] | None
    results: list[FactResult] = field(default_factory=list)

    def verdicts(self) -> dict[tuple[int, str], str]:
        return {(r.fact_id, r.clock): r.verdict for r in self.results}


def synthetic_symbols(n: int) -> list[str]:
    return [f"SYN{i + 1:02d}" for i in range(n)]


# --------------------------------------------------------------------------
# input
# --------------------------------------------------------------------------

def load_tapes(paths, format: str = "auto") -> tuple[dict[str, Tape], dict[str, ParseReport]]:
    """Parse tape files; a symbol spread over several files is merged by timestamp."""
    parts: dict[str, list[Tape]] = {}
    reports = {}
    for p in paths:
        try:
            raw = Path(p).read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read tape {p}: {exc}") from None
        try:
            tapes, rep = parse_tape(raw, format)
        except TapeFormatError as exc:
            raise DataError(f"{p}: {exc}") from None
        reports[str(p)] = rep
        for sym, t in tapes.items():
            parts.setdefault(sym, []).append(t)
    merged = {}
    for sym, ts in sorted(parts.items()):
        if len(ts) == 1:
            merged[sym] = ts[0]
            continue
        cat = [np.concatenate([getattr(t, f) for t in ts]) for f in ("ts", "price", "size", "cond")]
        order = np.argsort(cat[0], kind="stable")
        merged[sym] = Tape(sym, *(c[order] for c in cat))
    return merged, reports


def _analyze(job):
    """Worker: one symbol from tape or generator spec to (stats, curves)."""
    kind, payload, calendar, params = job
    if kind == "gen":
        spec, symbol, index = payload
        tape = generate(spec, symbol, calendar, symbol_rng(spec.seed, index))
    else:
        tape = payload
    tape = filter_session(tape, calendar)
    st = tape_stats(tape, calendar)
    if len(tape) == 0:
        return tape.symbol, st, None
    return tape.symbol, st, run_battery(tape, calendar, params)


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --------------------------------------------------------------------------
# bands
# --------------------------------------------------------------------------

def band_calendar(cfg: RunConfig) -> SessionCalendar:
    return calendar_for(cfg.noise.spec, cfg.calendar)


def band_cache_key(cfg: RunConfig) -> str:
    cal = band_calendar(cfg)
    blob = json.dumps({"params": asdict(cfg.params), "noise": cfg.noise.spec.to_dict(),
                       "replicates": cfg.noise.replicates, "seed": cfg.noise.seed,
                       "session": [cal.session_open.isoformat(), cal.session_close.isoformat(), cal.tz]},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def compute_bands(cfg: RunConfig) -> dict[str, NoiseBand]:
    """White-noise envelopes for the configured battery, read from or stored in the cache."""
    path = None
    if cfg.noise.cache_dir:
        path = Path(cfg.noise.cache_dir) / f"band-{band_cache_key(cfg)}.json"
        if path.is_file():
            log.info("band cache hit %s", path)
            return load_bands(path)
    analyzer = BatteryAnalyzer(band_calendar(cfg), cfg.params)
    bands = noise_band(analyzer, cfg.noise.spec, cfg.noise.replicates, cfg.noise.seed, cfg.workers)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_bands(bands, tmp)
        tmp.replace(path)
    return bands


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------

def run_pipeline(cfg: RunConfig, write: bool = True) -> RunResult:
    """Analyze every selected symbol, build bands and verdicts, write the bundle."""
    skipped = []
    if cfg.gen is not None:
        calendar = calendar_for(cfg.gen, cfg.calendar)
        names = synthetic_symbols(cfg.gen_symbols)
        available = {s: ("gen", (cfg.gen, s, i)) for i, s in enumerate(names)}
    else:
        calendar = cfg.calendar
        tapes, _ = load_tapes(cfg.tapes, cfg.tape_format)
        available = {s: ("tape", t) for s, t in tapes.items()}
    wanted = list(dict.fromkeys(cfg.symbols)) if cfg.symbols else sorted(available)
    for s in wanted:
        if s not in available:
            log.warning("symbol %s not in the data; skipped", s)
            skipped.append({"symbol": s, "reason": "not in data"})
    selected = sorted(s for s in wanted if s in available)
    if not selected:
        raise DataError("no symbols to analyze")

    jobs = [(available[s][0], available[s][1], calendar, cfg.params) for s in selected]
    stats, curves = {}, {}
    for sym, st, cv in _map(_analyze, jobs, cfg.workers):
        stats[sym] = st
        if cv is None:
            log.warning("symbol %s has no session trades; skipped", sym)
            skipped.append({"symbol": sym, "reason": "no session trades"})
        else:
            curves[sym] = cv
    skipped.sort(key=lambda d: d["symbol"])

    bands = compute_bands(cfg) if cfg.noise.enabled and curves else None
    res = RunResult(Path(cfg.out), cfg.config_hash, sorted(curves), skipped, stats, curves, bands)
    res.results = decide(curves, bands, cfg.params, cfg.rules)
    if write:
        write_bundle(res, cfg)
    return res


def decide(curves, bands, params, rules) -> list[FactResult]:
    from .series import CLOCK, EVENT
    return [verdict(f, c, curves, bands, rules, params) for f in sorted(FACT_NAMES) for c in (CLOCK, EVENT)]


# --------------------------------------------------------------------------
# bundle
# --------------------------------------------------------------------------

def _clean(v):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    return str(v)


def _csv_text(header, rows, config_hash) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION} config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(x) for x in row])
    return buf.getvalue()


def safe_name(key: str) -> str:
    return key.replace("|", "__").replace("/", "-")


def curve_json(c: LagCurve, key: str, config_hash: str) -> dict:
    return {"key": key, "stat_id": c.stat_id, "symbol": c.symbol, "clock": c.clock, "scale": int(c.scale),
            "grid": c.grid.tolist(), "values": c.values.tolist(), "n_obs": c.n_obs.tolist(),
            "meta": c.meta, "config_hash": config_hash}


def curve_from_json(d: dict) -> LagCurve:
    nan = float("nan")
    return LagCurve(d["stat_id"], d["symbol"], d["clock"], d["scale"], np.array(d["grid"]),
                    [nan if v is None else v for v in d["values"]], d["n_obs"], dict(d["meta"]))


def bundle_files(res: RunResult, cfg: RunConfig) -> dict[str, str]:
    """Relative path -> file text for everything except the manifest."""
    h = res.config_hash
    files: dict[str, str] = {}

    summary = []
    by = {(r.fact_id, r.clock): r for r in res.results}
    for f in sorted(FACT_NAMES):
        c, e = by[(f, "clock")], by[(f, "event")]
        summary.append({"fact_id": f, "name": FACT_NAMES[f], "clock_verdict": c.verdict, "clock_rule": c.rule_id,
                        "event_verdict": e.verdict, "event_rule": e.rule_id})
    cols = ["fact_id", "name", "clock_verdict", "event_verdict", "clock_rule", "event_rule"]
    files["summary.csv"] = _csv_text(cols, [[s[k] for k in cols] for s in summary], h)
    files["summary.json"] = _dumps({"config_hash": h, "facts": summary})

    st_cols = ["symbol", "days", "total", "mean", "max", "min", "ia_count", "ia_mean_ns", "ia_median_ns",
               "ia_std_ns", "ia_min_ns", "ia_max_ns"]
    files["tape_stats.csv"] = _csv_text(st_cols, [list(asdict(res.stats[s]).values())
                                                  for s in sorted(res.stats)], h)

    long_rows = []
    for sym in sorted(res.curves):
        for key in sorted(res.curves[sym]):
            c = res.curves[sym][key]
            stem = f"curves/{sym}/{safe_name(key)}"
            files[stem + ".json"] = _dumps(curve_json(c, key, h))
            rows = [[x, v, n] for x, v, n in zip(c.grid.tolist(), c.values.tolist(), c.n_obs.tolist())]
            files[stem + ".csv"] = _csv_text(["x", "value", "n_obs"], rows, h)
            long_rows += [[sym, key, c.stat_id, c.clock, key.split("|")[2], *r] for r in rows]
    files["curves.csv"] = _csv_text(["symbol", "key", "stat", "clock", "scale", "x", "value", "n_obs"],
                                    long_rows, h)

    for key, b in sorted((res.bands or {}).items()):
        files[f"bands/{safe_name(key)}.json"] = _dumps({**b.to_json(), "key": key, "config_hash": h})

    for r in res.results:
        files[f"facts/fact{r.fact_id:02d}_{r.clock}.json"] = _dumps({
            "config_hash": h, "fact_id": r.fact_id, "name": r.name, "clock": r.clock, "verdict": r.verdict,
            "rule_id": r.rule_id, "per_symbol": r.per_symbol, "details": r.details})
    return files


def write_bundle(res: RunResult, cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if (out / "manifest.json").is_file():
        # an earlier bundle lives here; clear its generated trees so no stale file survives
        for sub in SUBDIRS:
            shutil.rmtree(out / sub, ignore_errors=True)
    files = bundle_files(res, cfg)
    for rel, text in files.items():
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    manifest = {"schema_version": SCHEMA_VERSION, "config_hash": res.config_hash,
                "config": {k: v for k, v in cfg.values.items() if k not in ("run.out", "run.workers")},
                "symbols": res.symbols, "skipped_symbols": res.skipped,
                "files": sorted(files)}
    (out / "manifest.json").write_text(_dumps(manifest))
    return out


# --------------------------------------------------------------------------
# re-derivation
# --------------------------------------------------------------------------

def read_bundle(out) -> tuple[dict, dict[str, dict[str, LagCurve]], dict[str, NoiseBand]]:
    out = Path(out)
    manifest = json.loads((out / "manifest.json").read_text())
    curves: dict[str, dict[str, LagCurve]] = {s: {} for s in manifest["symbols"]}
    bands = {}
    for rel in manifest["files"]:
        if rel.startswith("curves/") and rel.endswith(".json"):
            d = json.loads((out / rel).read_text())
            curves[d["symbol"]][d["key"]] = curve_from_json(d)
        elif rel.startswith("bands/"):
            d = json.loads((out / rel).read_text())
            bands[d["key"]] = NoiseBand.from_json(d)
    return manifest, curves, bands


def rederive_verdicts(out) -> dict[tuple[int, str], tuple[str, str]]:
    """Recompute every verdict from the curves and bands stored in a bundle."""
    manifest, curves, bands = read_bundle(out)
    params, rules = params_from_values(manifest["config"])
    return {(r.fact_id, r.clock): (r.verdict, r.rule_id)
            for r in decide(curves, bands or None, params, rules)}


def check_bundle(out) -> list[str]:
    """Mismatches between the bundle's summary and verdicts re-derived from its files."""
    summary = json.loads((Path(out) / "summary.json").read_text())["facts"]
    again = rederive_verdicts(out)
    problems = []
    for s in summary:
        for clock in ("clock", "event"):
            got = again[(s["fact_id"], clock)]
            want = (s[f"{clock}_verdict"], s[f"{clock}_rule"])
            if got != want:
                problems.append(f"fact {s['fact_id']} {clock}: summary {want} vs re-derived {got}")
    return problems
