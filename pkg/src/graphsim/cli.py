"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .analysis import correlation_table, findings_markdown, heatmap_svg, table_from_csv, table_to_csv, trend_report
from .config import ConfigError, RunConfig, load_config
from .experiment import (
    ConfigMismatch,
    CorpusCorruption,
    CostNotConfirmed,
    Paths,
    RecordStore,
    StageError,
    build_dataset,
    corpus_specs,
    enumerate_pairs,
    estimate_cost,
    extract_corpus_features,
    generate_corpus,
    load_manifest,
    pending_pairs,
    reconcile,
    render_corpus,
    run_measures,
    run_ratings,
)
from .generators import GenerationFailure
from .rater import ConfigurationError, LiveRater, MockRater, Rater

log = logging.getLogger("graphsim")

STAGES = ("generate", "render", "measure", "rate", "correlate", "report", "run-all")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML or JSON run config")
        s.add_argument("--dry-run", action="store_true", help="print the plan and exit without writing")
        s.add_argument("--jobs", type=int, default=None, help="cap on worker processes")
        s.add_argument("-v", "--verbose", action="count", default=0)
        s.add_argument("-q", "--quiet", action="store_true")
        if name in ("rate", "run-all"):
            s.add_argument("--rater", choices=("mock", "live"), default=None)
            s.add_argument("--confirm-cost", action="store_true", help="allow paid live requests")
            s.add_argument("--max-pairs", type=int, default=None, help="rate at most this many pending pairs")
    return p


def _setup_logging(cfg: RunConfig, args, dry_run: bool) -> None:
    level = logging.INFO
    if args.quiet or cfg.verbosity == "quiet":
        level = logging.WARNING
    if args.verbose or cfg.verbosity == "debug":
        level = logging.DEBUG
    root = logging.getLogger("graphsim")
    root.handlers.clear()
    # quiet only silences the console; run.log always keeps the info trail
    root.setLevel(min(level, logging.INFO))
    root.propagate = False
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s")
    h = logging.StreamHandler(sys.stderr)
    h.setLevel(level)
    h.setFormatter(fmt)
    root.addHandler(h)
    if not dry_run:
        cfg.out.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(cfg.out / "run.log", encoding="utf-8")
        fh.setFormatter(fmt)
        root.addHandler(fh)


def _make_rater(cfg: RunConfig, kind: str, transport=None) -> Rater:
    if kind == "live":
        return LiveRater(cfg.rater.endpoint(), transport=transport)
    return MockRater()


def _plan(cfg: RunConfig, command: str, kind: str, max_pairs: Optional[int]) -> str:
    specs = corpus_specs(cfg)
    lines = [f"plan for '{command}' in {cfg.out}", f"  graphs: {len(specs)}"]
    paths = Paths(cfg.out)
    if paths.manifest.exists():
        manifest = load_manifest(cfg)
        pairs = enumerate_pairs(manifest, cfg.pairing)
        records = RecordStore(paths.records).load()
        counts = reconcile(records, pairs)
        todo = len(pending_pairs(records, pairs, max_pairs))
    else:
        groups = len(cfg.corpus.grid.size_classes) * len(cfg.corpus.grid.density_classes)
        per = len(specs) // groups
        n_pairs = groups * per * (per - 1) // 2 if cfg.pairing == "within_stratum" else len(specs) * (len(specs) - 1) // 2
        counts = {"enumerated": n_pairs, "rated": 0, "failed": 0, "pending": n_pairs}
        todo = n_pairs if max_pairs is None else min(n_pairs, max_pairs)
    lines.append(f"  pairs ({cfg.pairing}): " + " ".join(f"{k}={v}" for k, v in counts.items()))
    lines.append(f"  rater: {kind}; pairs to rate this run: {todo}")
    if kind == "live":
        lines.append(f"  estimated live cost: ${estimate_cost(cfg, todo):.2f} "
                     f"({cfg.rater.model}, ${cfg.rater.cost_per_request_usd}/request)")
    return "\n".join(lines)


def _correlate(cfg: RunConfig) -> None:
    paths = Paths(cfg.out)
    load_manifest(cfg)  # refuses a corpus built from another config
    if not paths.records.exists():
        raise StageError("no records yet; run 'measure' and 'rate' first")
    records = RecordStore(paths.records).load().values()
    strata = [(s, d) for s in cfg.corpus.grid.size_classes for d in cfg.corpus.grid.density_classes]
    table = correlation_table(records, strata)
    paths.correlations.write_bytes(table_to_csv(table))
    log.info("stage=correlate event=done cells=%d", len(table.cells))


def _report(cfg: RunConfig) -> None:
    paths = Paths(cfg.out)
    if not paths.correlations.exists():
        raise StageError("no correlations.csv; run 'correlate' first")
    table = table_from_csv(paths.correlations.read_bytes())
    paths.heatmap.write_bytes(heatmap_svg(table))
    paths.findings.write_text(findings_markdown(trend_report(table)), encoding="utf-8")
    log.info("stage=report event=done files=heatmap.svg,findings.md")


def run(args, transport=None) -> int:
    cfg = load_config(args.config)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = cfg.model_copy(update={"jobs": args.jobs})
    kind = getattr(args, "rater", None) or cfg.rater.kind
    max_pairs = getattr(args, "max_pairs", None)
    _setup_logging(cfg, args, args.dry_run)
    rater = None
    if args.command in ("rate", "run-all") and kind == "live":
        rater = _make_rater(cfg, kind, transport)  # credential check precedes everything
    if args.dry_run:
        print(_plan(cfg, args.command, kind, max_pairs))
        return 0
    cmd = args.command
    if cmd == "generate":
        generate_corpus(cfg)
    elif cmd == "render":
        render_corpus(cfg)
    elif cmd == "measure":
        manifest = load_manifest(cfg)
        extract_corpus_features(cfg, manifest)
        run_measures(cfg, manifest, enumerate_pairs(manifest, cfg.pairing))
    elif cmd == "rate":
        manifest = load_manifest(cfg)
        rater = rater or _make_rater(cfg, kind)
        counts = run_ratings(cfg, manifest, enumerate_pairs(manifest, cfg.pairing), rater,
                             max_pairs=max_pairs, confirm_cost=args.confirm_cost)
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
    elif cmd == "correlate":
        _correlate(cfg)
    elif cmd == "report":
        _report(cfg)
    elif cmd == "run-all":
        manifest = build_dataset(cfg)
        pairs = enumerate_pairs(manifest, cfg.pairing)
        run_measures(cfg, manifest, pairs)
        rater = rater or _make_rater(cfg, kind)
        counts = run_ratings(cfg, manifest, pairs, rater, max_pairs=max_pairs, confirm_cost=args.confirm_cost)
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
        _correlate(cfg)
        _report(cfg)
    return 0


def main(argv: Optional[Sequence[str]] = None, transport=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args, transport)
    except (ConfigError, ConfigurationError, CostNotConfirmed, ConfigMismatch) as exc:
        print(f"graphsim {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (StageError, CorpusCorruption, GenerationFailure, OSError, RuntimeError, ValueError) as exc:
        print(f"graphsim {args.command}: stage failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
