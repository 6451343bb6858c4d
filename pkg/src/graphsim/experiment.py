"""Corpus construction, pair enumeration, measure sweeps and rating runs.

Everything lives under the configured output directory::

    corpus/manifest.json        corpus inventory with file hashes
    corpus/graphs/<id>.json     graph files
    corpus/images/<id>.svg|png  rendered node-link diagrams
    corpus/features/<id>.json   cached feature profiles
    corpus/density_report.csv   target vs achieved linear density
    records.jsonl               append-only pair records (last line per pair wins)
    records.csv                 compacted export, sorted by pair id
    rater_log.jsonl             one line per rater call
    results_manifest.json       measure / prompt conventions of this run
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Optional

from . import __version__
from .config import RunConfig
from .features import FEATURE_VERSION, FeatureProfile, cached_features
from .generators import RNG_ALGORITHM, ClassGrid, GraphSpec, generate_connected, params_for_target
from .graph import Graph, GraphFile, dumps_graph_file, is_connected, load_graph, degree_sequence
from .layout import fr_layout, render_png, render_svg
from .rater import PROMPT_VERSION, Rater, RatingItem
from .similarity import CONVENTIONS, MEASURES, similarity_vector

log = logging.getLogger(__name__)

CORPUS_VERSION = "corpus-1"


class CorpusCorruption(RuntimeError):
    pass


class ConfigMismatch(RuntimeError):
    pass


class StageError(RuntimeError):
    """A stage was invoked before the artifacts it depends on exist."""


class CostNotConfirmed(RuntimeError):
    pass


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


@dataclass(frozen=True)
class Paths:
    root: Path

    @property
    def corpus(self) -> Path:
        return self.root / "corpus"

    @property
    def graphs(self) -> Path:
        return self.corpus / "graphs"

    @property
    def images(self) -> Path:
        return self.corpus / "images"

    @property
    def features(self) -> Path:
        return self.corpus / "features"

    @property
    def manifest(self) -> Path:
        return self.corpus / "manifest.json"

    @property
    def density_report(self) -> Path:
        return self.corpus / "density_report.csv"

    @property
    def records(self) -> Path:
        return self.root / "records.jsonl"

    @property
    def records_csv(self) -> Path:
        return self.root / "records.csv"

    @property
    def rater_log(self) -> Path:
        return self.root / "rater_log.jsonl"

    @property
    def results_manifest(self) -> Path:
        return self.root / "results_manifest.json"

    @property
    def correlations(self) -> Path:
        return self.root / "correlations.csv"

    @property
    def heatmap(self) -> Path:
        return self.root / "heatmap.svg"

    @property
    def findings(self) -> Path:
        return self.root / "findings.md"

    def graph_file(self, gid: str) -> Path:
        return self.graphs / f"{gid}.json"

    def svg(self, gid: str) -> Path:
        return self.images / f"{gid}.svg"

    def png(self, gid: str) -> Path:
        return self.images / f"{gid}.png"

    def feature_file(self, gid: str) -> Path:
        return self.features / f"{gid}.json"


# -- manifest ----------------------------------------------------------------


@dataclass
class ManifestEntry:
    id: str
    generator: str
    size_class: str
    density_class: str
    seed: int
    n: int
    m: int
    attempts: int
    repaired: bool
    graph_sha256: str
    svg_sha256: Optional[str] = None
    png_sha256: Optional[str] = None

    @property
    def stratum(self) -> tuple[str, str]:
        return (self.size_class, self.density_class)


@dataclass
class DatasetManifest:
    corpus_version: str
    fingerprint: str
    rng: str
    prompt_version: str
    grid: dict
    generators: list[str]
    instances_per_cell: int
    layout: dict
    style: dict
    entries: list[ManifestEntry] = field(default_factory=list)

    def to_json(self) -> bytes:
        doc = {
            "corpus_version": self.corpus_version,
            "fingerprint": self.fingerprint,
            "rng": self.rng,
            "prompt_version": self.prompt_version,
            "grid": self.grid,
            "generators": self.generators,
            "instances_per_cell": self.instances_per_cell,
            "layout": self.layout,
            "style": self.style,
            "entries": [e.__dict__ for e in self.entries],
        }
        return (json.dumps(doc, indent=1) + "\n").encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes) -> "DatasetManifest":
        doc = json.loads(data)
        entries = [ManifestEntry(**e) for e in doc.pop("entries")]
        return cls(**doc, entries=entries)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.id: e for e in self.entries}

    def expected_count(self) -> int:
        return (
            len(self.grid["size_classes"])
            * len(self.grid["density_classes"])
            * len(self.generators)
            * self.instances_per_cell
        )


def graph_seed(base_seed: int, gid: str) -> int:
    digest = hashlib.blake2b(f"{base_seed}:{gid}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def corpus_specs(cfg: RunConfig) -> list[GraphSpec]:
    c = cfg.corpus
    specs = []
    for size in c.grid.size_classes:
        for dens in c.grid.density_classes:
            for gen in c.generators:
                for i in range(c.instances_per_cell):
                    gid = f"{gen}_{size}_{dens}_{i:02d}"
                    specs.append(GraphSpec(gid, gen, size, dens, graph_seed(c.base_seed, gid)))
    return specs


def _empty_manifest(cfg: RunConfig) -> DatasetManifest:
    c = cfg.corpus
    return DatasetManifest(
        corpus_version=CORPUS_VERSION,
        fingerprint=c.fingerprint(),
        rng=RNG_ALGORITHM,
        prompt_version=PROMPT_VERSION,
        grid=c.grid.model_dump(),
        generators=list(c.generators),
        instances_per_cell=c.instances_per_cell,
        layout=c.layout.model_dump(),
        style=c.style.model_dump(),
    )


def load_manifest(cfg: RunConfig) -> DatasetManifest:
    p = Paths(cfg.out).manifest
    if not p.exists():
        raise StageError(f"no corpus manifest at {p}; run 'generate' first")
    m = DatasetManifest.from_json(p.read_bytes())
    if m.fingerprint != cfg.corpus.fingerprint():
        raise ConfigMismatch(f"corpus at {p.parent} was built from a different corpus config")
    return m


def _write_manifest(paths: Paths, manifest: DatasetManifest) -> None:
    _write_atomic(paths.manifest, manifest.to_json())


def _pmap(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _generate_one(args) -> tuple[GraphSpec, str, int, bool, int, int]:
    spec, grid, max_attempts, repair, sbm_ratio = args
    params = params_for_target(spec.generator, spec.size_class, spec.density_class, grid, sbm_ratio)
    out = generate_connected(spec, grid, max_attempts, repair=repair, params=params)
    gf = GraphFile(out.graph, spec.generator, spec.size_class, spec.density_class, spec.seed)
    return spec, dumps_graph_file(gf), out.attempts, out.repaired, out.graph.n, out.graph.m


def generate_corpus(cfg: RunConfig) -> DatasetManifest:
    """Write every graph file plus the manifest, or verify an existing corpus."""
    paths = Paths(cfg.out)
    if paths.manifest.exists():
        manifest = load_manifest(cfg)
        verify_graphs(paths, manifest)
        log.info("stage=generate event=verified graphs=%d", len(manifest.entries))
        return manifest
    paths.graphs.mkdir(parents=True, exist_ok=True)
    grid = cfg.corpus.grid.build()
    repair = cfg.corpus.connectivity == "resample_then_repair"
    specs = corpus_specs(cfg)
    t0 = time.monotonic()
    work = [(s, grid, cfg.corpus.max_attempts, repair, cfg.corpus.sbm_ratio) for s in specs]
    results = _pmap(_generate_one, work, cfg.jobs)
    manifest = _empty_manifest(cfg)
    report = io.StringIO()
    writer = csv.writer(report, lineterminator="\n")
    writer.writerow(["spec_id", "target_d", "achieved_d", "attempts", "repaired"])
    for spec, text, attempts, repaired, n, m in results:
        data = text.encode("utf-8")
        _write_atomic(paths.graph_file(spec.id), data)
        target = grid.density_classes[spec.density_class]
        achieved = m / n
        if not grid.within_tolerance(spec.density_class, achieved):
            raise CorpusCorruption(f"{spec.id}: achieved density {achieved:.3f} misses target {target}")
        writer.writerow([spec.id, repr(target), repr(achieved), attempts, int(repaired)])
        manifest.entries.append(
            ManifestEntry(spec.id, spec.generator, spec.size_class, spec.density_class, spec.seed, n, m, attempts, repaired, sha256(data))
        )
    _write_atomic(paths.density_report, report.getvalue().encode("utf-8"))
    _write_manifest(paths, manifest)
    log.info("stage=generate event=done graphs=%d seconds=%.1f", len(manifest.entries), time.monotonic() - t0)
    return manifest


def verify_graphs(paths: Paths, manifest: DatasetManifest) -> None:
    for e in manifest.entries:
        p = paths.graph_file(e.id)
        if not p.exists():
            raise CorpusCorruption(f"missing graph file {p}")
        if sha256(p.read_bytes()) != e.graph_sha256:
            raise CorpusCorruption(f"hash mismatch for {p}")


def load_graphs(cfg: RunConfig, manifest: DatasetManifest) -> dict[str, Graph]:
    paths = Paths(cfg.out)
    return {e.id: load_graph(paths.graph_file(e.id)).graph for e in manifest.entries}


def _render_one(args) -> tuple[str, bytes, bytes]:
    path, iterations, seed, style = args
    g = load_graph(path).graph
    layout = fr_layout(g, iterations, seed, style.margin)
    return g.id, render_svg(g, layout, style), render_png(g, layout, style)


def render_corpus(cfg: RunConfig, manifest: Optional[DatasetManifest] = None) -> DatasetManifest:
    paths = Paths(cfg.out)
    manifest = manifest or load_manifest(cfg)
    verify_graphs(paths, manifest)
    paths.images.mkdir(parents=True, exist_ok=True)
    style = cfg.corpus.style.build()
    todo = []
    for e in manifest.entries:
        if e.svg_sha256 and e.png_sha256:
            for p, h in ((paths.svg(e.id), e.svg_sha256), (paths.png(e.id), e.png_sha256)):
                if not p.exists() or sha256(p.read_bytes()) != h:
                    raise CorpusCorruption(f"image {p} is missing or does not match the manifest")
            continue
        todo.append((paths.graph_file(e.id), cfg.corpus.layout.iterations, e.seed, style))
    t0 = time.monotonic()
    by_id = manifest.by_id()
    for gid, svg, png in _pmap(_render_one, todo, cfg.jobs):
        _write_atomic(paths.svg(gid), svg)
        _write_atomic(paths.png(gid), png)
        by_id[gid].svg_sha256 = sha256(svg)
        by_id[gid].png_sha256 = sha256(png)
    if todo:
        _write_manifest(paths, manifest)
    log.info("stage=render event=done rendered=%d verified=%d seconds=%.1f",
             len(todo), len(manifest.entries) - len(todo), time.monotonic() - t0)
    return manifest


def _features_one(args) -> None:
    graph_path, feature_path = args
    cached_features(feature_path, load_graph(graph_path).graph)


def extract_corpus_features(cfg: RunConfig, manifest: DatasetManifest) -> dict[str, FeatureProfile]:
    paths = Paths(cfg.out)
    paths.features.mkdir(parents=True, exist_ok=True)
    graphs = load_graphs(cfg, manifest)
    todo = [(paths.graph_file(e.id), paths.feature_file(e.id)) for e in manifest.entries]
    _pmap(_features_one, todo, cfg.jobs)
    return {gid: cached_features(paths.feature_file(gid), g) for gid, g in graphs.items()}


def build_dataset(cfg: RunConfig) -> DatasetManifest:
    """Generate, render and featurise the corpus; idempotent over intact output."""
    manifest = generate_corpus(cfg)
    manifest = render_corpus(cfg, manifest)
    extract_corpus_features(cfg, manifest)
    return manifest


# -- pairs and records ---------------------------------------------------------


@dataclass(frozen=True)
class Pair:
    pair_id: str
    a: str
    b: str


def make_pair(x: str, y: str) -> Pair:
    a, b = sorted((x, y))
    return Pair(f"{a}|{b}", a, b)


def enumerate_pairs(manifest: DatasetManifest, policy: str = "within_stratum") -> list[Pair]:
    if policy == "within_stratum":
        groups: dict[tuple[str, str], list[str]] = {}
        for e in manifest.entries:
            groups.setdefault(e.stratum, []).append(e.id)
        pairs = [make_pair(x, y) for ids in groups.values() for x, y in combinations(ids, 2)]
    elif policy == "all_pairs":
        pairs = [make_pair(x, y) for x, y in combinations([e.id for e in manifest.entries], 2)]
    else:
        raise ValueError(f"unknown pairing policy {policy!r}")
    return sorted(pairs, key=lambda p: p.pair_id)


@dataclass
class SimilarityRecord:
    pair_id: str
    graph_a: str
    graph_b: str
    stratum_size: Optional[str]
    stratum_density: Optional[str]
    scores: Optional[dict[str, float]]
    status: str  # measured | rated | failed
    rater_score: Optional[float] = None
    rationale: Optional[dict[str, str]] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, separators=(",", ":"), sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "SimilarityRecord":
        return cls(**json.loads(line))


CSV_FIELDS = ["pair_id", "graph_a", "graph_b", "stratum_size", "stratum_density", *MEASURES, "rater_score", "status"]


class RecordStore:
    """Append-only JSON Lines store keyed by pair id; one writer at a time."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> dict[str, SimilarityRecord]:
        out: dict[str, SimilarityRecord] = {}
        if not self.path.exists():
            return out
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break  # torn final write from an interrupted run
                rec = SimilarityRecord.from_json(line)
                out[rec.pair_id] = rec
        return out

    def append(self, records: Iterable[SimilarityRecord]) -> None:
        with self._lock:
            self._heal()
            with self.path.open("a", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(rec.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def _heal(self) -> None:
        if not self.path.exists() or self.path.stat().st_size == 0:
            return
        with self.path.open("rb+") as fh:
            data = fh.read()
            if not data.endswith(b"\n"):
                fh.truncate(data.rfind(b"\n") + 1)

    def export_csv(self, path: Path) -> None:
        records = sorted(self.load().values(), key=lambda r: r.pair_id)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            scores = r.scores or {}
            w.writerow(
                [r.pair_id, r.graph_a, r.graph_b, r.stratum_size or "", r.stratum_density or ""]
                + [repr(scores[m]) if m in scores else "" for m in MEASURES]
                + ["" if r.rater_score is None else repr(r.rater_score), r.status]
            )
        _write_atomic(Path(path), buf.getvalue().encode("utf-8"))


def _stratum(ea: ManifestEntry, eb: ManifestEntry) -> tuple[Optional[str], Optional[str]]:
    if ea.stratum == eb.stratum:
        return ea.stratum
    return (None, None)


class Corpus:
    """Graphs, profiles and image paths of a built corpus, loaded on demand."""

    def __init__(self, cfg: RunConfig, manifest: DatasetManifest):
        self.cfg = cfg
        self.manifest = manifest
        self.paths = Paths(cfg.out)
        self.entries = manifest.by_id()
        self._graphs: dict[str, Graph] = {}
        self._profiles: dict[str, FeatureProfile] = {}

    def graph(self, gid: str) -> Graph:
        if gid not in self._graphs:
            self._graphs[gid] = load_graph(self.paths.graph_file(gid)).graph
        return self._graphs[gid]

    def profile(self, gid: str) -> FeatureProfile:
        if gid not in self._profiles:
            self.paths.features.mkdir(parents=True, exist_ok=True)
            self._profiles[gid] = cached_features(self.paths.feature_file(gid), self.graph(gid))
        return self._profiles[gid]

    def measure(self, pair: Pair) -> SimilarityRecord:
        ea, eb = self.entries[pair.a], self.entries[pair.b]
        size, dens = _stratum(ea, eb)
        try:
            vec = similarity_vector(
                self.graph(pair.a), self.graph(pair.b), self.profile(pair.a), self.profile(pair.b),
                bins=self.cfg.measures.bins,
            )
        except (ValueError, ArithmeticError) as exc:
            return SimilarityRecord(pair.pair_id, pair.a, pair.b, size, dens, None, "failed", error=f"measure: {exc}")
        return SimilarityRecord(pair.pair_id, pair.a, pair.b, size, dens, vec.as_dict(), "measured")

    def rating_item(self, pair: Pair) -> RatingItem:
        return RatingItem(
            pair.pair_id,
            self.graph(pair.a),
            self.graph(pair.b),
            self.paths.png(pair.a),
            self.paths.png(pair.b),
            self.profile(pair.a),
            self.profile(pair.b),
        )


def write_results_manifest(cfg: RunConfig, manifest: DatasetManifest, rater: Optional[Rater] = None) -> None:
    paths = Paths(cfg.out)
    doc = {
        "artifact_version": __version__,
        "corpus_fingerprint": manifest.fingerprint,
        "feature_version": FEATURE_VERSION,
        "pairing": cfg.pairing,
        "conventions": {**CONVENTIONS, "continuous_bins": cfg.measures.bins},
        "rng": manifest.rng,
    }
    if rater is not None:
        doc["rater"] = {"kind": rater.name, "prompt_version": rater.prompt_version}
        if rater.name == "live":
            doc["rater"]["model"] = cfg.rater.model
            doc["rater"]["temperature"] = cfg.rater.temperature
    _write_atomic(paths.results_manifest, (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode())


def run_measures(cfg: RunConfig, manifest: DatasetManifest, pairs: list[Pair], store: Optional[RecordStore] = None) -> dict[str, int]:
    """Measure every pair without a record yet; resumable, no duplicates."""
    paths = Paths(cfg.out)
    store = store or RecordStore(paths.records)
    done = store.load()
    corpus = Corpus(cfg, manifest)
    todo = [p for p in pairs if p.pair_id not in done]
    batch: list[SimilarityRecord] = []
    t0 = time.monotonic()
    for i, pair in enumerate(todo, 1):
        batch.append(corpus.measure(pair))
        if len(batch) >= 256:
            store.append(batch)
            batch = []
            log.debug("stage=measure progress=%d/%d", i, len(todo))
    if batch:
        store.append(batch)
    store.export_csv(paths.records_csv)
    write_results_manifest(cfg, manifest)
    counts = reconcile(store.load(), pairs)
    log.info("stage=measure event=done new=%d seconds=%.1f %s", len(todo), time.monotonic() - t0,
             " ".join(f"{k}={v}" for k, v in counts.items()))
    return counts


def reconcile(records: dict[str, SimilarityRecord], pairs: list[Pair]) -> dict[str, int]:
    counts = {"enumerated": len(pairs), "rated": 0, "failed": 0, "pending": 0}
    for p in pairs:
        r = records.get(p.pair_id)
        if r is None or r.status == "measured":
            counts["pending"] += 1
        else:
            counts[r.status] += 1
    return counts


def estimate_cost(cfg: RunConfig, n_requests: int) -> float:
    return n_requests * cfg.rater.cost_per_request_usd


def pending_pairs(records: dict[str, SimilarityRecord], pairs: list[Pair], max_pairs: Optional[int] = None) -> list[Pair]:
    todo = [p for p in pairs if p.pair_id not in records or records[p.pair_id].status == "measured"]
    return todo if max_pairs is None else todo[:max_pairs]


def run_ratings(
    cfg: RunConfig,
    manifest: DatasetManifest,
    pairs: list[Pair],
    rater: Rater,
    store: Optional[RecordStore] = None,
    max_pairs: Optional[int] = None,
    confirm_cost: bool = False,
    echo: Callable[[str], None] = print,
) -> dict[str, int]:
    """Attach rater scores to pending pairs and append the updated records."""
    paths = Paths(cfg.out)
    store = store or RecordStore(paths.records)
    records = store.load()
    todo = pending_pairs(records, pairs, max_pairs)
    if rater.name == "live":
        estimate = estimate_cost(cfg, len(todo))
        echo(f"live rating: {len(todo)} pairs, up to {len(todo) * (cfg.rater.max_retries + 1)} requests, "
             f"estimated cost ${estimate:.2f} (model {cfg.rater.model})")
        if todo and not confirm_cost:
            raise CostNotConfirmed("live rating needs --confirm-cost; no requests were sent")
    corpus = Corpus(cfg, manifest)
    write_results_manifest(cfg, manifest, rater)
    base: dict[str, SimilarityRecord] = {}
    for p in todo:
        rec = records.get(p.pair_id)
        if rec is None:
            rec = corpus.measure(p)
            store.append([rec])
        base[p.pair_id] = rec
    items = [corpus.rating_item(p) for p in todo if base[p.pair_id].status == "measured"]
    log_lock = threading.Lock()

    def on_result(item: RatingItem, rating, exc) -> None:
        rec = base[item.pair_id]
        if rating is not None:
            upd = SimilarityRecord(rec.pair_id, rec.graph_a, rec.graph_b, rec.stratum_size, rec.stratum_density,
                                   rec.scores, "rated", rating.similarity, rating.rationale)
            entry = {"pair_id": item.pair_id, "status": "rated", "attempts": rating.attempts,
                     "latency_s": round(rating.latency, 4)}
        else:
            upd = SimilarityRecord(rec.pair_id, rec.graph_a, rec.graph_b, rec.stratum_size, rec.stratum_density,
                                   rec.scores, "failed", error=f"rater: {exc}")
            entry = {"pair_id": item.pair_id, "status": "failed", "error": str(exc)}
        store.append([upd])
        with log_lock, paths.rater_log.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    t0 = time.monotonic()
    rater.rate_many(items, on_result)
    store.export_csv(paths.records_csv)
    counts = reconcile(store.load(), pairs)
    log.info("stage=rate event=done rater=%s attempted=%d seconds=%.1f %s", rater.name, len(items),
             time.monotonic() - t0, " ".join(f"{k}={v}" for k, v in counts.items()))
    return counts


def check_corpus(manifest: DatasetManifest, graphs: dict[str, Graph], grid: ClassGrid) -> list[str]:
    """Problems with a built corpus: counts, connectivity, density, degree sums."""
    problems = []
    if len(manifest.entries) != manifest.expected_count():
        problems.append(f"{len(manifest.entries)} entries, expected {manifest.expected_count()}")
    if len({e.id for e in manifest.entries}) != len(manifest.entries):
        problems.append("duplicate graph ids")
    for e in manifest.entries:
        g = graphs[e.id]
        if not is_connected(g):
            problems.append(f"{e.id} is disconnected")
        if sum(degree_sequence(g)) != 2 * g.m:
            problems.append(f"{e.id} degree sum mismatch")
        if not grid.within_tolerance(e.density_class, g.linear_density()):
            problems.append(f"{e.id} density {g.linear_density():.3f} off target")
        if g.n != grid.size_classes[e.size_class]:
            problems.append(f"{e.id} has {g.n} nodes")
    return problems
