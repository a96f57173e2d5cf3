"""Run configuration: INI-style text, one CLI flag per key, validated up front.

Every key lives in a section; ``--section.key VALUE`` on the command line
overrides the file value. Validation collects every problem before failing so
a config never half-loads.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field
from datetime import date, time
from pathlib import Path

from .facts import FactParams, VerdictRules
from .series import CLOCK, EVENT, RAW
from .synth import CLUSTERING, WHITE_NOISE, GenSpec
from .tape import NS_PER_MINUTE, NS_PER_SECOND, SessionCalendar

SCHEMA_VERSION = 1
OUT_ENV = "TAPEFACTS_OUT"

_UNITS = {"ns": 1, "us": 10 ** 3, "ms": 10 ** 6, "s": NS_PER_SECOND, "sec": NS_PER_SECOND,
          "min": NS_PER_MINUTE, "m": NS_PER_MINUTE, "h": 60 * NS_PER_MINUTE, "hr": 60 * NS_PER_MINUTE}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def parse_duration(text: str) -> int:
    """'30min' -> nanoseconds. A unit is required."""
    m = re.fullmatch(r"\s*(\d+)\s*([a-z]+)\s*", text)
    if not m or m.group(2) not in _UNITS:
        raise ValueError(f"bad duration {text!r} (use e.g. 1min, 30s, 2h)")
    ns = int(m.group(1)) * _UNITS[m.group(2)]
    if ns <= 0:
        raise ValueError(f"duration must be positive: {text!r}")
    return ns


def parse_durations(text: str) -> tuple[int, ...]:
    return tuple(parse_duration(t) for t in _split(text))


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _ints(text):
    return tuple(int(t) for t in _split(text))


def _floats(text):
    return tuple(float(t) for t in _split(text))


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _hhmm(text):
    return time.fromisoformat(text.strip())


def _opt_float(text):
    return float(text) if text.strip() else None


def _dates(text):
    return tuple(date.fromisoformat(t) for t in _split(text)) or None


def _early(text):
    out = []
    for item in _split(text):
        d, _, t = item.partition(" ")
        out.append((date.fromisoformat(d), time.fromisoformat(t.strip())))
    return tuple(out)


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"{t!r} not one of {', '.join(options)}")
        return t
    return parse


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise ValueError(f"must be >= 1, got {v}")
    return v


def _fit_range(text):
    lo, hi = _floats(text)
    if not 0 < lo < hi:
        raise ValueError("fit range must satisfy 0 < lo < hi")
    return (lo, hi)


def _str(text):
    return text.strip()


def _list(text):
    return tuple(_split(text))


# (section, key, parser, default text, help)
SCHEMA: list[tuple[str, str, object, str, str]] = [
    ("input", "tapes", _list, "", "comma-separated tape files (CSV or binary)"),
    ("input", "format", _choice("auto", "csv", "bin"), "auto", "tape format"),
    ("input", "symbols", _list, "", "only analyze these symbols (default: all)"),
    ("gen", "kind", _choice("", WHITE_NOISE, CLUSTERING), "", "generate synthetic symbols instead of reading tapes"),
    ("gen", "symbols", _pos_int, "5", "number of synthetic symbols"),
    ("gen", "days", _pos_int, "103", "trading days per synthetic tape"),
    ("gen", "trades_per_day", _pos_int, "250000", "trades per day"),
    ("gen", "return_variance", float, "0.0001", "trade-return variance"),
    ("gen", "variance_reading", _choice("variance", "stddev"), "variance", "read return_variance as variance or stddev"),
    ("gen", "omega", _opt_float, "", "GARCH omega (blank: match return_variance)"),
    ("gen", "alpha", float, "0.09", "GARCH alpha"),
    ("gen", "beta", float, "0.90", "GARCH beta"),
    ("gen", "start_price", float, "100", "initial price"),
    ("gen", "start_date", date.fromisoformat, "2018-10-18", "first synthetic trading day"),
    ("gen", "seed", int, "2024", "seed for synthetic symbols"),
    ("session", "open", _hhmm, "09:30", "session open (local)"),
    ("session", "close", _hhmm, "16:00", "session close (local)"),
    ("session", "tz", _str, "America/New_York", "exchange time zone"),
    ("session", "days", _dates, "", "explicit trading days (default: days with trades)"),
    ("session", "early_closes", _early, "", "shortened sessions as 'YYYY-MM-DD HH:MM' items"),
    ("scales", "clocks", _list, "clock,event", "clocks to analyze"),
    ("scales", "clock", parse_durations, "1min,5min,10min,15min,20min,30min,60min", "clock-time bucket widths"),
    ("scales", "event", _ints, "1,10,100,250,500,1000,2500", "event-time trades per bucket"),
    ("facts", "enabled", _ints, "1,2,3,4,5,6,7,8,9,10,11", "facts to run"),
    ("facts", "stage", _choice("raw", "normalized"), "raw", "return stage for facts other than 2/4/7"),
    ("facts", "v_mode", _choice("abs", "signed"), "abs", "time-of-day scale: mean |r'| or signed mean"),
    ("fact1", "tau_max", _pos_int, "100", "largest ACF lag"),
    ("fact3", "quantiles", _floats, "0.9,0.95,0.99,0.995,0.999", "|r| quantile cutoffs"),
    ("fact3", "min_exceedances", _pos_int, "20", "minimum exceedances per cutoff"),
    ("fact5", "q", float, "0.99", "extreme-return quantile"),
    ("fact5", "clock_window", parse_duration, "30min", "counting window in clock-time"),
    ("fact5", "event_window", _pos_int, "1000", "counting window in trades"),
    ("fact6", "tau_max", _pos_int, "100", "largest abs-ACF lag"),
    ("fact6", "fit_range", _fit_range, "1,100", "power-law fit lag range"),
    ("fact9", "tau_max", _pos_int, "10", "largest leverage lag"),
    ("fact9", "volatility", _choice("abs", "squared"), "abs", "volatility proxy"),
    ("fact10", "tau_max", _pos_int, "10", "largest volume lag"),
    ("fact10", "measure", _choice("shares", "trades"), "shares", "volume measure"),
    ("fact10", "event_scale", _pos_int, "1", "event-time bucket for volume"),
    ("fact11", "tau_max", _pos_int, "5", "largest coarse lag"),
    ("fact11", "clock_coarse", parse_duration, "30min", "coarse clock-time scale"),
    ("fact11", "event_coarse", _pos_int, "1000", "coarse event-time scale"),
    ("fact11", "fine_vol", _choice("mean_abs", "rogers_satchell"), "mean_abs", "fine volatility measure"),
    ("noise", "enabled", _bool, "true", "compute white-noise bands"),
    ("noise", "replicates", _pos_int, "100", "white-noise replicates"),
    ("noise", "seed", int, "12345", "band seed (replicate r uses seed + r)"),
    ("noise", "days", _pos_int, "103", "days per replicate"),
    ("noise", "trades_per_day", _pos_int, "250000", "trades per replicate day"),
    ("noise", "return_variance", float, "0.0001", "replicate trade-return variance"),
    ("noise", "variance_reading", _choice("variance", "stddev"), "variance", "read return_variance as variance or stddev"),
    ("noise", "cache_dir", _str, "", "band cache directory (blank: no cache)"),
    ("verdict", "symbol_frac", float, "0.9", "share of symbols that must meet a criterion"),
    ("verdict", "lag_frac", float, "0.8", "share of lags a curve criterion must hold on"),
    ("verdict", "acf_small", float, "0.05", "fact 1: |C| counted as negligible"),
    ("verdict", "acf_tail_start", _pos_int, "3", "fact 1: first lag of the tail"),
    ("verdict", "cluster_tau", _pos_int, "100", "facts 6/8: lags checked against the band"),
    ("verdict", "beta_min", float, "0.0", "fact 8: smallest accepted decay exponent (exclusive)"),
    ("verdict", "beta_max", float, "1.0", "fact 8: largest accepted decay exponent"),
    ("verdict", "asym_lags", _pos_int, "2", "fact 11: lags where D must sit below the band"),
    ("run", "out", _str, "", f"output directory (default: ${OUT_ENV} or ./report)"),
    ("run", "workers", _pos_int, "1", "worker processes"),
]

KEYS = {f"{s}.{k}": (p, d) for s, k, p, d, _ in SCHEMA}
# keys that do not change results, excluded from the config hash
_VOLATILE = {"run.out", "run.workers", "noise.cache_dir"}


@dataclass(frozen=True)
class NoiseConfig:
    enabled: bool = True
    replicates: int = 100
    seed: int = 12345
    spec: GenSpec = GenSpec()
    cache_dir: str = ""


@dataclass(frozen=True)
class RunConfig:
    tapes: tuple[str, ...] = ()
    tape_format: str = "auto"
    symbols: tuple[str, ...] = ()
    gen: GenSpec | None = None
    gen_symbols: int = 5
    calendar: SessionCalendar = SessionCalendar()
    params: FactParams = FactParams()
    rules: VerdictRules = VerdictRules()
    noise: NoiseConfig = NoiseConfig()
    out: str = "report"
    workers: int = 1
    values: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        canon = {k: v for k, v in self.values.items() if k not in _VOLATILE}
        blob = json.dumps({"schema": SCHEMA_VERSION, "config": canon}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def read_raw(text: str) -> dict[str, str]:
    """Parse config text to {"section.key": value}; raises ConfigError on syntax errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text or "")
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    return {f"{s}.{k}": v for s in cp.sections() for k, v in cp.items(s)}


def validate_config(text: str = "", overrides: dict[str, str] | None = None,
                    check_files: bool = True) -> RunConfig:
    """Build a RunConfig from config text plus flag overrides, or raise ConfigError listing every problem."""
    errors: list[str] = []
    raw = read_raw(text)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in sorted(set(raw) - set(KEYS)):
        errors.append(f"{key}: unknown key")
    vals = {}
    for key, (parser, default) in KEYS.items():
        txt = raw.get(key, default)
        try:
            vals[key] = parser(txt)
        except (ValueError, TypeError) as exc:
            errors.append(f"{key}: {exc}")
    if errors:
        raise ConfigError(errors)
    if not vals["run.out"]:
        vals["run.out"] = os.environ.get(OUT_ENV, "") or "report"

    def err(key, msg):
        errors.append(f"{key}: {msg}")

    # input source
    if vals["input.tapes"] and vals["gen.kind"]:
        err("input.tapes", "give either tape files or gen.kind, not both")
    elif not vals["input.tapes"] and not vals["gen.kind"]:
        err("input.tapes", "no tape path given (set input.tapes or gen.kind)")
    if check_files:
        for p in vals["input.tapes"]:
            if not Path(p).is_file():
                err("input.tapes", f"file not found: {p}")

    # clocks and scales
    clocks = vals["scales.clocks"]
    for c in clocks:
        if c not in (CLOCK, EVENT):
            err("scales.clocks", f"unknown clock {c!r}")
    if not clocks:
        err("scales.clocks", "at least one clock required")
    if vals["facts.enabled"] and CLOCK in clocks and not vals["scales.clock"]:
        err("scales.clock", "enabled facts need at least one clock-time scale")
    if vals["facts.enabled"] and EVENT in clocks and not vals["scales.event"]:
        err("scales.event", "enabled facts need at least one event-time scale")
    for f in vals["facts.enabled"]:
        if not 1 <= f <= 11:
            err("facts.enabled", f"no fact {f}")
    if any(e < 1 for e in vals["scales.event"]):
        err("scales.event", "event scales must be >= 1")
    session_ns = (vals["session.close"].hour * 60 + vals["session.close"].minute
                  - vals["session.open"].hour * 60 - vals["session.open"].minute) * NS_PER_MINUTE
    if session_ns <= 0:
        err("session.close", "session close must follow open")
    for s in vals["scales.clock"]:
        if session_ns > 0 and s > session_ns:
            err("scales.clock", "bucket longer than the session")
    enabled = set(vals["facts.enabled"])
    if vals["scales.clock"] and CLOCK in clocks:
        base = min(vals["scales.clock"])
        if 5 in enabled and vals["fact5.clock_window"] % base:
            err("fact5.clock_window", "must be a multiple of the finest clock scale")
        if 11 in enabled and (vals["fact11.clock_coarse"] % base or vals["fact11.clock_coarse"] <= base):
            err("fact11.clock_coarse", "must be a larger multiple of the finest clock scale")
    if vals["scales.event"] and EVENT in clocks:
        base = min(vals["scales.event"])
        if 5 in enabled and vals["fact5.event_window"] % base:
            err("fact5.event_window", "must be a multiple of the finest event scale")
        if 11 in enabled and (vals["fact11.event_coarse"] % base or vals["fact11.event_coarse"] <= base):
            err("fact11.event_coarse", "must be a larger multiple of the finest event scale")
    if not 0 < vals["fact5.q"] < 1:
        err("fact5.q", "must lie in (0, 1)")
    if any(not 0 < q < 1 for q in vals["fact3.quantiles"]):
        err("fact3.quantiles", "quantiles must lie in (0, 1)")
    for key in ("verdict.symbol_frac", "verdict.lag_frac"):
        if not 0 < vals[key] <= 1:
            err(key, "must lie in (0, 1]")

    gen = None
    if vals["gen.kind"]:
        try:
            gen = GenSpec(kind=vals["gen.kind"], days=vals["gen.days"], trades_per_day=vals["gen.trades_per_day"],
                          return_variance=vals["gen.return_variance"], variance_reading=vals["gen.variance_reading"],
                          omega=vals["gen.omega"], alpha=vals["gen.alpha"], beta=vals["gen.beta"],
                          start_price=vals["gen.start_price"], start_date=vals["gen.start_date"], seed=vals["gen.seed"])
        except ValueError as exc:
            key = "gen.alpha+gen.beta" if "stationarity" in str(exc) else "gen"
            err(key, str(exc))
    try:
        noise_spec = GenSpec(kind=WHITE_NOISE, days=vals["noise.days"], trades_per_day=vals["noise.trades_per_day"],
                             return_variance=vals["noise.return_variance"],
                             variance_reading=vals["noise.variance_reading"],
                             start_date=vals["gen.start_date"], seed=vals["noise.seed"])
    except ValueError as exc:
        err("noise", str(exc))
        noise_spec = None
    try:
        calendar = SessionCalendar(vals["session.open"], vals["session.close"], vals["session.days"],
                                   vals["session.tz"], vals["session.early_closes"])
        from zoneinfo import ZoneInfo
        ZoneInfo(calendar.tz)
    except Exception as exc:  # bad tz names raise several exception types
        err("session", str(exc))
        calendar = None
    if errors:
        raise ConfigError(errors)

    params = FactParams(
        facts=tuple(sorted(enabled)), clocks=tuple(c for c in (CLOCK, EVENT) if c in clocks),
        clock_scales=tuple(sorted(set(vals["scales.clock"]))), event_scales=tuple(sorted(set(vals["scales.event"]))),
        stage=RAW if vals["facts.stage"] == "raw" else "normalized", v_mode=vals["facts.v_mode"],
        acf_tau_max=vals["fact1.tau_max"], quantiles=vals["fact3.quantiles"],
        min_exceedances=vals["fact3.min_exceedances"], extreme_q=vals["fact5.q"],
        clock_window=vals["fact5.clock_window"], event_window=vals["fact5.event_window"],
        abs_tau_max=vals["fact6.tau_max"], fit_range=vals["fact6.fit_range"],
        leverage_tau_max=vals["fact9.tau_max"], leverage_volatility=vals["fact9.volatility"],
        volume_tau_max=vals["fact10.tau_max"], volume_measure=vals["fact10.measure"],
        event_volume_scale=vals["fact10.event_scale"], asym_tau_max=vals["fact11.tau_max"],
        clock_coarse=vals["fact11.clock_coarse"], event_coarse=vals["fact11.event_coarse"],
        fine_vol=vals["fact11.fine_vol"])
    rules = VerdictRules(**{k.split(".")[1]: vals[k] for k in KEYS if k.startswith("verdict.")})
    noise = NoiseConfig(vals["noise.enabled"], vals["noise.replicates"], vals["noise.seed"], noise_spec,
                        vals["noise.cache_dir"])
    return RunConfig(tapes=vals["input.tapes"], tape_format=vals["input.format"], symbols=vals["input.symbols"],
                     gen=gen, gen_symbols=vals["gen.symbols"], calendar=calendar, params=params, rules=rules,
                     noise=noise, out=vals["run.out"], workers=vals["run.workers"],
                     values={k: _jsonable(v) for k, v in vals.items()})


def _jsonable(v):
    if isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], date) and isinstance(v[1], time):
        return f"{v[0].isoformat()} {v[1].isoformat(timespec='minutes')}"
    if isinstance(v, (date, time)):
        return v.isoformat()
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def load_config(path: str | None, overrides: dict[str, str] | None = None, check_files: bool = True) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return validate_config(text, overrides, check_files)


def params_from_values(values: dict) -> tuple[FactParams, VerdictRules]:
    """Rebuild analysis parameters from a manifest's resolved config values."""
    lines = []
    for s, k, _, default, _ in SCHEMA:
        if f"[{s}]" not in lines:
            lines.append(f"[{s}]")
        key = f"{s}.{k}"
        lines.append(f"{k} = {_as_text(values[key], s, k) if key in values else default}")
    text = "\n".join(lines)
    cfg = validate_config(text, check_files=False) if values.get("gen.kind") or values.get("input.tapes") else None
    if cfg is None:
        raise ConfigError(["manifest config has no input source"])
    return cfg.params, cfg.rules


def _as_text(v, section, key):
    if v is None:
        return ""
    if isinstance(v, list):
        if section == "scales" and key == "clock":
            return ",".join(f"{x}ns" for x in v)
        return ",".join(str(x) for x in v)
    if key in ("clock_window", "clock_coarse"):
        return f"{v}ns"
    return str(v)


def example_config() -> str:
    """A fully commented config listing every key with its default."""
    lines, section = [], None
    for s, k, _, d, h in SCHEMA:
        if s != section:
            lines.append(f"\n[{s}]")
            section = s
        lines.append(f"; {h}")
        lines.append(f"{k} = {d}")
    return "\n".join(lines).lstrip() + "\n"
