"""Command-line pipeline: ingest, cluster, build consensus, evaluate, infer, report.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .agreement import (STATISTICS, agreement_stats, build_rating_matrix,
                        removal_sensitivity)
from .clustering import (ClusterConfig, Clustering, Method, cluster, clustering_statistics,
                         compare_clusterings, kneedle_epsilon, restrict_clusters)
from .consensus import ConsensusResult, EmConfig, run_em, select_consensus
from .core import (AnnotationSet, GroundTruth, GroundTruthKind, ScoreSeries, ValidationError,
                   ingest_annotations, ingest_scores, natural_key)
from .count_eval import CountConfig, CountMetrics, dispersion_summary
from .event_eval import (EventScores, MatchConfig, extract_reference_points, match_recordings,
                         score_against_consensus)
from .inference import (FactorialCell, factorial_contrasts, log_transform,
                        one_sample_comparison, paired_comparison, simple_effects)
from .regimes import StudyLayout, evaluate_regimes, regime_inference
from .scorepost import PostprocessConfig, fbeta_threshold_sweep, predict

log = logging.getLogger("eventcons")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
HASH_PREFIX = "# config_hash: "
WARD_EPSILON_MS = 19251  # merge threshold near the typical arousal duration
PATH_KEYS = ("annotations", "ground_truth", "ai_annotations", "train_ground_truth", "layout")
SERIES_KEYS = ("scores", "train_scores")


# --- serialization ---------------------------------------------------------------

def jsonable(obj: Any) -> Any:
    """Plain JSON types; NaN becomes null and infinities become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int, bool)):
        return obj.value
    return obj


def dumps(payload: Any) -> str:
    return json.dumps(jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class ArtifactWriter:
    """Writes artifacts that all carry the same config hash."""

    def __init__(self, out_dir: Path, config_hash: str):
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.written: list[str] = []
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, payload: dict) -> Path:
        body = dict(payload)
        body["config_hash"] = self.config_hash
        return self._write(name, dumps(body))

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        buf = io.StringIO()
        buf.write(f"{HASH_PREFIX}{self.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else _csv_cell(v) for v in row])
        return self._write(name, buf.getvalue())

    def text(self, name: str, content: str) -> Path:
        return self._write(name, content)

    def _write(self, name: str, content: str) -> Path:
        path = self.out_dir / name
        path.write_text(content, encoding="utf-8")
        if name not in self.written:
            self.written.append(name)
        return path

    def manifest(self, seed: int, extra: dict | None = None) -> Path:
        entries = [{"name": n, "sha256": _file_digest(self.out_dir / n)}
                   for n in sorted(self.written)]
        body = {"version": __version__, "seed": seed, "artifacts": entries, **(extra or {})}
        return self.json("manifest.json", body)


def _csv_cell(v: Any) -> str:
    v = jsonable(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


# --- configuration ---------------------------------------------------------------

@dataclass
class SeriesSpec:
    path: Path
    recording_id: str | None
    sample_interval_ms: int | float


@dataclass
class PipelineConfig:
    base_dir: Path
    raw: dict
    annotations: Path
    ground_truth: Path | None = None
    ai_annotations: Path | None = None
    train_ground_truth: Path | None = None
    layout: Path | None = None
    scores: list[SeriesSpec] = field(default_factory=list)
    train_scores: list[SeriesSpec] = field(default_factory=list)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    epsilon_auto: bool = False
    comparison_epsilon_ms: int | None = None
    em: EmConfig = field(default_factory=EmConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    count: CountConfig = field(default_factory=CountConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    seed: int = 0
    resamples: int = 10_000
    out: Path | None = None

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(raw) - set(PATH_KEYS) - set(SERIES_KEYS) - {
            "cluster", "em", "match", "count", "postprocess", "seed", "resamples", "out"}
        if unknown:
            raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
        if "annotations" not in raw:
            raise ValidationError("config needs an 'annotations' path")

        def path(key):
            if raw.get(key) is None:
                return None
            p = (base_dir / raw[key]).resolve()
            if not p.exists():
                raise ValidationError(f"{key}: no such file {p}")
            return p

        def series(key):
            out = []
            for i, s in enumerate(raw.get(key) or []):
                if "path" not in s or "sample_interval_ms" not in s:
                    raise ValidationError(f"{key}[{i}] needs 'path' and 'sample_interval_ms'")
                p = (base_dir / s["path"]).resolve()
                if not p.exists():
                    raise ValidationError(f"{key}[{i}]: no such file {p}")
                out.append(SeriesSpec(p, s.get("recording_id"), s["sample_interval_ms"]))
            return out

        try:
            cl = dict(raw.get("cluster") or {})
            auto = cl.get("epsilon_ms") == "auto"
            if auto:
                cl.pop("epsilon_ms")
            comparison_eps = cl.pop("comparison_epsilon_ms", None)
            if "kneedle_sensitivities" in cl:
                cl["kneedle_sensitivities"] = tuple(cl["kneedle_sensitivities"])
            seed = int(raw.get("seed", 0))
            if seed < 0:
                raise ValidationError("seed must be a non-negative integer")
            return cls(
                base_dir=base_dir, raw=raw,
                annotations=path("annotations"), ground_truth=path("ground_truth"),
                ai_annotations=path("ai_annotations"),
                train_ground_truth=path("train_ground_truth"), layout=path("layout"),
                scores=series("scores"), train_scores=series("train_scores"),
                cluster=ClusterConfig(**cl), epsilon_auto=auto,
                comparison_epsilon_ms=None if comparison_eps is None else int(comparison_eps),
                em=EmConfig(**(raw.get("em") or {})),
                match=MatchConfig(**(raw.get("match") or {})),
                count=CountConfig(**(raw.get("count") or {})),
                postprocess=PostprocessConfig(**(raw.get("postprocess") or {})),
                seed=seed, resamples=int(raw.get("resamples", 10_000)),
                out=None if raw.get("out") is None else (base_dir / raw["out"]),
            )
        except TypeError as e:
            raise ValidationError(f"bad config section: {e}") from None

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"no such config file: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from None
        return cls.from_dict(raw, path.parent.resolve())

    def input_files(self) -> dict[str, Path]:
        files = {k: getattr(self, k) for k in PATH_KEYS if getattr(self, k) is not None}
        for key in SERIES_KEYS:
            for i, s in enumerate(getattr(self, key)):
                files[f"{key}[{i}]"] = s.path
        return files

    def config_hash(self) -> str:
        """Hash of the settings, the seed and the contents of every input file."""
        settings = {k: v for k, v in self.raw.items() if k not in ("out", "seed")}
        body = {"settings": settings, "seed": self.seed,
                "inputs": {k: _file_digest(p) for k, p in sorted(self.input_files().items())}}
        return hashlib.sha256(dumps(body).encode()).hexdigest()[:16]

    def comparison_eps(self) -> int:
        """Radius for the method that is not primary, used only in the method comparison."""
        if self.comparison_epsilon_ms is not None:
            return self.comparison_epsilon_ms
        return (WARD_EPSILON_MS if self.cluster.method == Method.DBSCAN
                else ClusterConfig().epsilon_ms)

    def summary(self) -> dict:
        return {"cluster": {**self.cluster.to_dict(),
                            "epsilon_ms": "auto" if self.epsilon_auto else self.cluster.epsilon_ms,
                            "comparison_epsilon_ms": self.comparison_eps()},
                "em": self.em.to_dict(), "match": {"distance_threshold_ms":
                                                   self.match.distance_threshold_ms},
                "count": dict(self.count.__dict__), "postprocess": self.postprocess.to_dict(),
                "seed": self.seed, "resamples": self.resamples}


def toy_config_path() -> Path:
    return Path(str(resources.files("eventcons") / "data" / "toy" / "config.json"))


# --- pipeline stages -------------------------------------------------------------

@dataclass
class Context:
    cfg: PipelineConfig
    override_budget: bool = False
    _cache: dict = field(default_factory=dict)

    def memo(self, key: str, fn: Callable[[], Any]) -> Any:
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def annotations(self) -> AnnotationSet:
        def load():
            aset = ingest_annotations(self.cfg.annotations)
            aset.require_nonempty()
            return aset
        return self.memo("annotations", load)

    @property
    def cps(self) -> GroundTruth | None:
        if self.cfg.ground_truth is None:
            return None
        return self.memo("cps", lambda: GroundTruth.from_annotations(
            ingest_annotations(self.cfg.ground_truth), GroundTruthKind.CPS))

    def kneedle(self) -> list[tuple[float, int]]:
        return self.memo("kneedle", lambda: kneedle_epsilon(
            self.annotations, self.cfg.cluster.kneedle_sensitivities))

    @property
    def cluster_config(self) -> ClusterConfig:
        def build():
            if not self.cfg.epsilon_auto:
                return self.cfg.cluster
            cands = self.kneedle()
            if not cands:
                raise ValidationError("no knee found for any sensitivity; set epsilon_ms")
            # most frequent candidate radius; ties go to the higher sensitivity
            freq: dict[int, list[float]] = {}
            for s, e in cands:
                freq.setdefault(e, []).append(s)
            eps = max(freq, key=lambda e: (len(freq[e]), max(freq[e])))
            c = self.cfg.cluster
            return ClusterConfig(c.method, eps, c.min_cluster_annotators, c.kneedle_sensitivities)
        return self.memo("cluster_config", build)

    def clustering(self, method: Method | None = None) -> Clustering:
        base = self.cluster_config
        method = base.method if method is None else Method(method)
        eps = base.epsilon_ms if method == base.method else self.cfg.comparison_eps()
        c = ClusterConfig(method, eps, base.min_cluster_annotators, base.kneedle_sensitivities)
        return self.memo(f"clustering:{method.value}", lambda: cluster(self.annotations, c))

    def consensus(self, method: Method | None = None) -> ConsensusResult:
        method = self.cluster_config.method if method is None else Method(method)
        return self.memo(f"consensus:{method.value}",
                         lambda: run_em(self.clustering(method), self.cfg.em))

    @property
    def ai_times(self) -> dict[str, list[float]] | None:
        def build():
            if self.cfg.scores:
                return extract_reference_points(self.predicted_events())
            if self.cfg.ai_annotations is not None:
                return extract_reference_points(
                    ingest_annotations(self.cfg.ai_annotations).annotations)
            return None
        return self.memo("ai_times", build)

    def _series(self, specs: list[SeriesSpec]) -> list[ScoreSeries]:
        return [ingest_scores(s.path, s.sample_interval_ms, s.recording_id) for s in specs]

    def sweep(self):
        def build():
            if not self.cfg.train_scores or self.cfg.train_ground_truth is None:
                raise ValidationError(
                    "threshold 'auto-fbeta' needs train_scores and train_ground_truth")
            gt = GroundTruth.from_annotations(ingest_annotations(self.cfg.train_ground_truth))
            return fbeta_threshold_sweep(self._series(self.cfg.train_scores), gt,
                                         self.cfg.postprocess)
        return self.memo("sweep", build)

    def threshold(self) -> float:
        t = self.cfg.postprocess.threshold
        return self.sweep().best_threshold if isinstance(t, str) else float(t)

    def predicted_events(self):
        return self.memo("predicted", lambda: predict(
            self._series(self.cfg.scores), self.cfg.postprocess, self.threshold()))


def clustering_payload(ctx: Context) -> dict:
    c = ctx.clustering()
    payload = {"clustering": c.to_dict(), "statistics": clustering_statistics(c).to_dict(),
               "epsilon_ms": ctx.cluster_config.epsilon_ms,
               "epsilon_source": "kneedle" if ctx.cfg.epsilon_auto else "config"}
    if ctx.cfg.epsilon_auto:
        payload["kneedle"] = [{"sensitivity": s, "epsilon_ms": e} for s, e in ctx.kneedle()]
    payload["method_comparison"] = method_comparison(ctx)
    return payload


def method_comparison(ctx: Context) -> dict:
    """ARI/NMI between DBSCAN and Ward clusterings, before and after consensus selection."""
    a, b = ctx.clustering(Method.DBSCAN), ctx.clustering(Method.AGGLOMERATIVE)
    out = {"epsilon_ms": {"dbscan": a.config.epsilon_ms, "agglomerative": b.config.epsilon_ms}}
    ari, nmi = compare_clusterings(a, b)
    out["clusters"] = {"ari": ari, "nmi": nmi}
    if a.clusters and b.clusters:
        ca = restrict_clusters(a, set(ctx.consensus(Method.DBSCAN).consensus_ids))
        cb = restrict_clusters(b, set(ctx.consensus(Method.AGGLOMERATIVE).consensus_ids))
        ari, nmi = compare_clusterings(ca, cb)
        out["consensus"] = {"ari": ari, "nmi": nmi}
    return out


def agreement_payload(ctx: Context) -> tuple[dict, list[list]]:
    m = build_rating_matrix(ctx.clustering())
    st = agreement_stats(m)
    payload = {"statistics": st.to_dict(), "n_units": len(m.units)}
    n = len(m.raters)
    if n >= 4 and (n <= 20 or ctx.override_budget):
        dist = removal_sensitivity(m, override_budget=ctx.override_budget)
        payload["removal_sensitivity"] = {
            str(k): {"summaries": [d.summary(s) for s in STATISTICS],
                     "subsets": [list(x) for x in d.subsets], "values": d.values}
            for k, d in dist.items()}
    elif n > 20:
        payload["removal_sensitivity_skipped"] = "rater count exceeds budget; use --override-budget"
    rows = [[a] + list(st.pairwise_kappa[i]) for i, a in enumerate(st.raters)]
    return payload, rows


def _score_row(expert: str, gt: str, sc: EventScores) -> dict:
    return {"expert": expert, "ground_truth": gt, **sc.to_dict()}


def event_rows(ctx: Context) -> list[dict]:
    aset = ctx.annotations
    cons = select_consensus(ctx.consensus())
    thr = ctx.cfg.match.distance_threshold_ms
    experts = {a: {r: [float(t) for t in ts] for r, ts in aset.times(a).items()}
               for a in aset.annotators}
    if ctx.ai_times is not None:
        experts["AI"] = ctx.ai_times
    rows = []
    for name, times in experts.items():
        rows.append(_score_row(name, "consensus", score_against_consensus(times, cons, thr)))
        if ctx.cps is not None:
            rows.append(_score_row(name, "cps",
                                   match_recordings(times, ctx.cps.times(), ctx.cfg.match)))
    return rows


def count_rows(ctx: Context) -> list[dict]:
    gt = ctx.cps
    if gt is None:
        return []
    aset = ctx.annotations
    ai = ctx.ai_times
    recs = sorted(set(gt.times()) | set(aset.recordings), key=natural_key)
    rows = []
    for a in aset.annotators:
        counts = aset.counts(a)
        for r in recs:
            m = CountMetrics(gt.count(r), counts.get(r, 0),
                             None if ai is None else len(ai.get(r, [])), ctx.cfg.count)
            rows.append({"annotator": a, "recording_id": r, **m.to_dict()})
    for r in recs:
        cs = [row["c_x"] for row in rows if row["recording_id"] == r]
        cv, mae = dispersion_summary(cs, gt.count(r))
        rows.append({"annotator": "*dispersion*", "recording_id": r, "c_gt": gt.count(r),
                     "cv": cv, "mae": mae})
    return rows


EVENT_COLUMNS = ("expert", "ground_truth", "tp", "fp", "fn", "precision", "recall", "f1", "f2")
COUNT_COLUMNS = ("annotator", "recording_id", "c_gt", "c_x", "c_ai", "deviation", "accuracy",
                 "pe", "r_gt", "y_rgt", "cv", "mae")


# --- commands ----------------------------------------------------------------------

def _setup(args) -> tuple[Context, ArtifactWriter]:
    cfg_path = toy_config_path() if getattr(args, "toy", False) else args.config
    if cfg_path is None:
        raise ValidationError("--config is required")
    cfg = PipelineConfig.load(cfg_path)
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be non-negative")
        cfg.seed = args.seed
    out = Path(args.out) if args.out else cfg.out
    if out is None:
        raise ValidationError("no output directory: pass --out or set 'out' in the config")
    ctx = Context(cfg, override_budget=args.override_budget)
    return ctx, ArtifactWriter(out, cfg.config_hash())


def _print(lines: Sequence[str]) -> None:
    for line in lines:
        print(line)


def cmd_cluster(args) -> int:
    ctx, w = _setup(args)
    payload = clustering_payload(ctx)
    w.json("clustering.json", payload)
    st = payload["statistics"]
    _print([f"clusters: {st['n_clusters']}  clustered: {st['n_clustered']}  "
            f"noise: {st['n_noise']}  epsilon_ms: {payload['epsilon_ms']}"])
    return EXIT_OK


def cmd_consensus(args) -> int:
    ctx, w = _setup(args)
    res = ctx.consensus()
    w.json("consensus.json", res.to_dict())
    w.csv("annotator_quality.csv", ("annotator_id", "sensitivity", "specificity",
                                    "balanced_accuracy"),
          [[q.annotator_id, q.sensitivity, q.specificity, q.balanced_accuracy]
           for q in res.qualities])
    _print([f"consensus events: {len(res.consensus_ids)} of {len(res.cluster_probs)} clusters; "
            f"EM iterations {res.iterations_used} (converged={res.converged})"])
    return EXIT_OK


def cmd_agreement(args) -> int:
    ctx, w = _setup(args)
    payload, rows = agreement_payload(ctx)
    w.json("agreement.json", payload)
    w.csv("pairwise_kappa.csv", ["annotator"] + list(payload["statistics"]["raters"]), rows)
    st = payload["statistics"]
    _print([f"{k}: {st[k]}" for k in STATISTICS])
    return EXIT_OK


def cmd_eval_events(args) -> int:
    ctx, w = _setup(args)
    rows = event_rows(ctx)
    w.json("event_scores.json", {"rows": rows,
                                 "distance_threshold_ms": ctx.cfg.match.distance_threshold_ms})
    w.csv("event_scores.csv", EVENT_COLUMNS, [[r[c] for c in EVENT_COLUMNS] for r in rows])
    _print([f"{r['expert']:>8} vs {r['ground_truth']:<9} F1={r['f1']:.3f} F2={r['f2']:.3f}"
            for r in rows])
    return EXIT_OK


def cmd_eval_counts(args) -> int:
    ctx, w = _setup(args)
    if ctx.cps is None:
        raise ValidationError("count evaluation needs 'ground_truth' in the config")
    rows = count_rows(ctx)
    w.json("count_metrics.json", {"rows": rows})
    w.csv("count_metrics.csv", COUNT_COLUMNS, [[r.get(c) for c in COUNT_COLUMNS] for r in rows])
    _print([f"{len(rows)} count rows written"])
    return EXIT_OK


def run_stats(spec: dict, seed: int, resamples: int, override_budget: bool) -> dict:
    analyses = spec.get("analyses")
    if not isinstance(analyses, list) or not analyses:
        raise ValidationError("stats input needs a non-empty 'analyses' list")
    out = []
    for i, a in enumerate(analyses):
        kind = a.get("kind")
        name = a.get("name", f"analysis {i}")
        if kind == "paired":
            res = paired_comparison(name, a["a"], a["b"], resamples, seed, override_budget)
            out.append({"kind": kind, "name": name, "result": res.to_dict()})
        elif kind == "one_sample":
            res = one_sample_comparison(name, a["a"], float(a["mu0"]), resamples, seed,
                                        override_budget)
            out.append({"kind": kind, "name": name, "result": res.to_dict()})
        elif kind == "factorial":
            log_scale = bool(a.get("log_scale", False))
            cells = [FactorialCell(str(c["participant"]), c["timing"], c["transparency"],
                                   float(log_transform(c["value"])) if log_scale
                                   else float(c["value"]))
                     for c in a["cells"]]
            entry = {"kind": kind, "name": name, "log_scale": log_scale,
                     "contrasts": [r.to_dict() for r in factorial_contrasts(
                         cells, log_scale, resamples, seed, override_budget)]}
            if a.get("simple_effects", False):
                entry["simple_effects"] = [r.to_dict() for r in simple_effects(
                    cells, log_scale, resamples, seed, override_budget)]
            out.append(entry)
        else:
            raise ValidationError(f"analysis {i}: unknown kind {kind!r}")
    return {"seed": seed, "resamples": resamples, "analyses": out}


def cmd_stats(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"stats input is not valid JSON: {e}") from None
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    resamples = int(spec.get("resamples", 10_000))
    try:
        report = run_stats(spec, seed, resamples, args.override_budget)
    except KeyError as e:
        raise ValidationError(f"stats input lacks field {e}") from None
    h = hashlib.sha256(dumps({"input": spec, "seed": seed}).encode()).hexdigest()[:16]
    out = Path(args.out) if args.out else path.parent
    w = ArtifactWriter(out, h)
    w.json("stats.json", report)
    lines = []
    for a in report["analyses"]:
        for r in [a["result"]] if "result" in a else a["contrasts"] + a.get("simple_effects", []):
            lines.append(f"{r['name']}: estimate={r['estimate']:.4f} t({r['df']})={r['t']} "
                         f"p_perm={r['p_perm']:.4f}")
    _print(lines)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    ctx, w = _setup(args)
    cfg = ctx.cfg
    clus = clustering_payload(ctx)
    w.json("clustering.json", clus)
    cons = ctx.consensus()
    w.json("consensus.json", cons.to_dict())
    agree, kappa_rows = agreement_payload(ctx)
    w.json("agreement.json", agree)
    w.csv("pairwise_kappa.csv", ["annotator"] + list(agree["statistics"]["raters"]), kappa_rows)
    rows = event_rows(ctx)
    w.json("event_scores.json", {"rows": rows,
                                 "distance_threshold_ms": cfg.match.distance_threshold_ms})
    w.csv("event_scores.csv", EVENT_COLUMNS, [[r[c] for c in EVENT_COLUMNS] for r in rows])

    if ctx.cps is not None:
        crow = count_rows(ctx)
        w.csv("count_metrics.csv", COUNT_COLUMNS, [[r.get(c) for c in COUNT_COLUMNS]
                                                   for r in crow])
    if cfg.scores:
        events = ctx.predicted_events()
        w.json("predicted_events.json", {"threshold": ctx.threshold(),
                                         "events": [e.to_dict() for e in events]})
    if isinstance(cfg.postprocess.threshold, str) and cfg.train_scores:
        sw = ctx.sweep()
        w.csv("threshold_curve.csv", ("threshold", "f1", "f2", "event_count"),
              [[r["threshold"], r["f1"], r["f2"], r["event_count"]] for r in sw.rows()])
    if cfg.layout is not None:
        gt = ctx.cps or select_consensus(cons)
        ai = ctx.ai_times
        if ai is None:
            raise ValidationError("regime evaluation needs AI events (scores or ai_annotations)")
        table = evaluate_regimes(StudyLayout.load(cfg.layout), ctx.annotations, ai, gt,
                                 cfg.match, cfg.count)
        w.json("regimes.json", {"ground_truth": gt.kind.value, **table.to_dict(),
                                "summary": table.summary(cfg.resamples, cfg.seed)})
        w.json("inference.json", regime_inference(table, cfg.resamples, cfg.seed).to_dict())

    w.manifest(cfg.seed, {"config": cfg.summary()})
    cs = clus["statistics"]
    _print([
        f"config hash {w.config_hash}, seed {cfg.seed}",
        f"clusters {cs['n_clusters']}, noise {cs['n_noise']}, "
        f"consensus events {len(cons.consensus_ids)}",
        f"krippendorff_alpha {agree['statistics']['krippendorff_alpha']}",
        f"{len(w.written)} files written to {w.out_dir}",
    ])
    return EXIT_OK


# --- report -------------------------------------------------------------------------

def _read_artifacts(folder: Path) -> tuple[str, dict[str, Any]]:
    if not folder.is_dir():
        raise ValidationError(f"not a directory: {folder}")
    files = sorted(p for p in folder.iterdir() if p.suffix in (".json", ".csv") and p.is_file())
    if not files:
        raise ValidationError(f"no artifacts in {folder}")
    hashes: dict[str, str] = {}
    data: dict[str, Any] = {}
    for p in files:
        text = p.read_text(encoding="utf-8")
        if p.suffix == ".json":
            try:
                body = json.loads(text)
            except json.JSONDecodeError:
                raise ValidationError(f"{p.name} is not valid JSON") from None
            h = body.get("config_hash") if isinstance(body, dict) else None
            data[p.name] = body
        else:
            first, _, rest = text.partition("\n")
            h = first[len(HASH_PREFIX):].strip() if first.startswith(HASH_PREFIX) else None
            data[p.name] = list(csv.DictReader(io.StringIO(rest)))
        if h is None:
            raise ValidationError(f"{p.name} carries no config hash")
        hashes[p.name] = h
    distinct = sorted(set(hashes.values()))
    if len(distinct) > 1:
        raise ValidationError(f"artifacts come from different configurations: {distinct}")
    return distinct[0], data


def cmd_report(args) -> int:
    folder = Path(args.artifacts)
    h, data = _read_artifacts(folder)
    out = Path(args.out) if args.out else folder / "report"
    w = ArtifactWriter(out, h)

    if "event_scores.json" in data:
        rows = data["event_scores.json"]["rows"]
        w.csv("fig_event_scores.csv", EVENT_COLUMNS, [[r[c] for c in EVENT_COLUMNS] for r in rows])
    if "agreement.json" in data:
        ag = data["agreement.json"]
        w.csv("fig_agreement.csv", ("statistic", "value"),
              [[s, ag["statistics"][s]] for s in STATISTICS])
        rows = []
        for k, d in sorted(ag.get("removal_sensitivity", {}).items(), key=lambda kv: int(kv[0])):
            for s in STATISTICS:
                for subset, v in zip(d["subsets"], d["values"][s]):
                    rows.append([int(k), s, "|".join(subset), v])
        if rows:
            w.csv("fig_removal_sensitivity.csv", ("k", "statistic", "removed", "value"), rows)
    if "consensus.json" in data:
        qs = data["consensus.json"]["qualities"]
        w.csv("fig_annotator_quality.csv", ("annotator_id", "sensitivity", "specificity"),
              [[q["annotator_id"], q["sensitivity"], q["specificity"]] for q in qs])
    if "clustering.json" in data:
        st = data["clustering.json"]["statistics"]
        w.csv("fig_cluster_lengths.csv", ("length_ms",), [[x] for x in st["cluster_lengths_ms"]])
        w.csv("fig_centroid_distances.csv", ("kind", "distance_ms"),
              [["own", x] for x in st["own_centroid_distances_ms"]]
              + [["neighbor", x] for x in st["neighbor_centroid_distances_ms"]])
    if "threshold_curve.csv" in data:
        curve = sorted(data["threshold_curve.csv"], key=lambda r: float(r["threshold"]))
        w.csv("fig_threshold_curve.csv", ("threshold", "f1", "f2", "event_count"),
              [[float(r["threshold"]), float(r["f1"]), float(r["f2"]), int(r["event_count"])]
               for r in curve])
    regime_values: dict[str, list[float]] = {}
    if "regimes.json" in data:
        rows = []
        for r in data["regimes.json"]["rows"]:
            rel = r["comparison"]["relative_f1"]
            rows.append([r["regime"], r["composite"], r["participant"], r["team"]["f1"],
                         r["ai"]["f1"], rel])
            if rel is not None:
                regime_values.setdefault(r["regime"], []).append(rel)
        w.csv("fig_regime_values.csv",
              ("regime", "composite", "participant", "f1_team", "f1_ai", "relative_f1"), rows)
    if args.svg and regime_values:
        _boxplots(out, regime_values, w)
    _print([f"{len(w.written)} report files written to {out}"])
    return EXIT_OK


def _boxplots(out: Path, values: dict[str, list[float]], w: ArtifactWriter) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = w.config_hash
    for regime in sorted(values):
        fig, ax = plt.subplots(figsize=(3, 4))
        ax.boxplot(values[regime])
        ax.set_title(regime)
        ax.set_ylabel("relative F1")
        ax.set_xticks([])
        name = "boxplot_" + regime.replace("+", "-").replace(",", "_") + ".svg"
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        w.text(name, buf.getvalue())


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eventcons",
                                description="Consensus and evaluation for event annotations.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="pipeline config JSON")
            sp.add_argument("--toy", action="store_true", help="use the bundled toy fixture")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--override-budget", action="store_true",
                        help="allow exhaustive enumerations beyond the default size limits")

    for name, fn, helptext in (
            ("cluster", cmd_cluster, "cluster annotations"),
            ("consensus", cmd_consensus, "cluster and run EM consensus"),
            ("agreement", cmd_agreement, "inter-rater agreement statistics"),
            ("eval-events", cmd_eval_events, "event-level scores"),
            ("eval-counts", cmd_eval_counts, "count-level measures"),
            ("pipeline", cmd_pipeline, "run every stage and write a manifest")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("stats", help="paired, one-sample or factorial inference from JSON")
    sp.add_argument("--input", required=True)
    common(sp, config=False)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("report", help="plot-ready tables from an artifact directory")
    sp.add_argument("artifacts")
    sp.add_argument("--out")
    sp.add_argument("--svg", action="store_true", help="also write one boxplot SVG per regime")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
