"""Command line: ``tapefacts {analyze,synth,band,stats,config}``.

Every config key is also a flag, ``--section.key VALUE``, overriding the
config file. Exit codes: 0 ok, 1 config error, 2 data error, 3 analyzer
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import SCHEMA, ConfigError, example_config, load_config
from .facts import AnalyzerError
from .pipeline import DataError, band_cache_key, compute_bands, load_tapes, run_pipeline, synthetic_symbols
from .synth import calendar_for, generate, save_bands, symbol_rng
from .tape import filter_session, tape_stats, write_tape

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ANALYZER = 0, 1, 2, 3


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="INI config file")
    g = p.add_argument_group("config keys (override the file)")
    for section, key, _, default, help_ in SCHEMA:
        g.add_argument(f"--{section}.{key}", dest=f"{section}.{key}", metavar="V",
                       help=f"{help_} [{default}]" if default else help_)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tapefacts", description="Stylized facts of trade tapes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("analyze", help="run the fact battery and write a report bundle")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="write synthetic tapes from the [gen] section")
    _add_config_flags(p)
    p.add_argument("-o", "--output", required=True, help="tape file to write")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")

    p = sub.add_parser("band", help="compute white-noise bands into the band cache")
    _add_config_flags(p)
    p.add_argument("-o", "--output", help="also write the bands to this JSON file")

    p = sub.add_parser("stats", help="per-symbol tape statistics as CSV")
    _add_config_flags(p)
    p.add_argument("tapes", nargs="*", help="tape files (default: input.tapes)")

    sub.add_parser("config", help="print a commented config with every key and default")
    return ap


def _overrides(ns) -> dict[str, str]:
    return {f"{s}.{k}": getattr(ns, f"{s}.{k}") for s, k, *_ in SCHEMA
            if getattr(ns, f"{s}.{k}", None) is not None}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if ns.verb == "config":
        sys.stdout.write(example_config())
        return EXIT_OK
    overrides = _overrides(ns)
    if ns.verb == "stats" and ns.tapes:
        overrides["input.tapes"] = ",".join(ns.tapes)
    try:
        cfg = load_config(ns.config, overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return VERBS[ns.verb](cfg, ns)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AnalyzerError as exc:
        print(f"analyzer failure: {exc}", file=sys.stderr)
        return EXIT_ANALYZER


def _analyze(cfg, ns) -> int:
    res = run_pipeline(cfg)
    for r in res.results:
        print(f"fact {r.fact_id:2d} {r.clock:5s} {r.verdict:13s} {r.rule_id}")
    for s in res.skipped:
        print(f"skipped {s['symbol']}: {s['reason']}", file=sys.stderr)
    print(f"bundle written to {res.out} (config {res.config_hash})")
    return EXIT_OK


def _synth(cfg, ns) -> int:
    if cfg.gen is None:
        raise DataError("synth needs gen.kind")
    cal = calendar_for(cfg.gen, cfg.calendar)
    tapes = [generate(cfg.gen, s, cal, symbol_rng(cfg.gen.seed, i))
             for i, s in enumerate(synthetic_symbols(cfg.gen_symbols))]
    with open(ns.output, "wb") as fh:
        write_tape(tapes, fh, ns.format)
    print(f"wrote {sum(len(t) for t in tapes)} trades for {len(tapes)} symbols to {ns.output}")
    return EXIT_OK


def _band(cfg, ns) -> int:
    if not cfg.noise.cache_dir and not ns.output:
        cfg = _with_cache(cfg, str(Path(cfg.out) / "band_cache"))
    bands = compute_bands(cfg)
    if ns.output:
        save_bands(bands, ns.output)
    if cfg.noise.cache_dir:
        print(Path(cfg.noise.cache_dir) / f"band-{band_cache_key(cfg)}.json")
    print(f"{len(bands)} bands from {cfg.noise.replicates} replicates")
    return EXIT_OK


def _with_cache(cfg, path):
    from dataclasses import replace
    return replace(cfg, noise=replace(cfg.noise, cache_dir=path))


def _stats(cfg, ns) -> int:
    if cfg.gen is not None:
        cal = calendar_for(cfg.gen, cfg.calendar)
        tapes = {s: generate(cfg.gen, s, cal, symbol_rng(cfg.gen.seed, i))
                 for i, s in enumerate(synthetic_symbols(cfg.gen_symbols))}
    else:
        cal = cfg.calendar
        tapes, _ = load_tapes(cfg.tapes, cfg.tape_format)
    print("symbol,days,total,mean,max,min,ia_count,ia_mean_s,ia_median_s,ia_std_s,ia_min_s,ia_max_s")
    for sym in sorted(tapes):
        if cfg.symbols and sym not in cfg.symbols:
            continue
        st = tape_stats(filter_session(tapes[sym], cal), cal)
        ia = [f"{v / 1e9:.6g}" for v in (st.ia_mean, st.ia_median, st.ia_std, st.ia_min, st.ia_max)]
        print(f"{sym},{st.days},{st.total},{st.mean:.6g},{st.max},{st.min},{st.ia_count}," + ",".join(ia))
    return EXIT_OK


VERBS = {"analyze": _analyze, "synth": _synth, "band": _band, "stats": _stats}


if __name__ == "__main__":
    sys.exit(main())
