"""
Configuration-driven experiment pipeline.

Stages (each reads the previous stage's files, so a run can be resumed or
driven stage by stage from the command line):

``generate``
    per replication ``train.csv``, ``val.csv``, ``test.csv``
``discover``
    per replication ``graph.txt`` (when a graph is involved) and
    ``grouping.yaml``
``train``
    per replication and model: snapshot under ``models/`` and
    ``pred_<model>_r<repeat>_<split>.csv``
``evaluate``
    per replication ``metrics.csv`` and the merged ``raw_report.csv``
``report``
    ``summary.csv`` and ``report.md``
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import bench, discovery, graph, metrics, models

log = logging.getLogger(__name__)

GRAPH_SOURCES = ("discover", "file", "forbidden", "full")
RAW_COLUMNS = (
    "dataset", "model", "mode", "replication", "repeat", "split",
    "n_eval", "sqrt_pehe", "ate_error", "att_error",
)
PRED_COLUMNS = ("y0_hat", "y1_hat", "g_hat", "ite_hat")
TRAINING_KEYS = (
    "trunk_width", "trunk_depth", "head_width", "head_depth", "learning_rate", "momentum",
    "batch_size", "max_epochs", "patience", "propensity_weight", "balance_weight", "l2",
)

# seed purposes
_DATA, _SPLIT, _DISCOVER, _MODEL = range(4)


class ConfigError(ValueError):
    pass


class MissingInputError(FileNotFoundError):
    pass


class AllReplicationsFailed(RuntimeError):
    pass


@dataclass
class ModelEntry:
    kind: str
    mode: str
    overrides: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.kind}_{self.mode}"


@dataclass
class ExperimentConfig:
    name: str
    data: dict
    graph: dict
    models: list[ModelEntry]
    training: dict
    replications: int = 1
    repeats: int = 1
    seed: int = 0
    base_dir: Path = Path(".")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


DEFAULT_TRAINING = {
    "trunk_width": 200,
    "trunk_depth": 3,
    "head_width": 100,
    "head_depth": 2,
    "momentum": 0.9,
    "learning_rate": None,
    "batch_size": None,
    "max_epochs": None,
    "patience": None,
    "propensity_weight": 1.0,
    "balance_weight": 1.0,
    "l2": 0.0,
}


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing key '{where}.{key}'")
    return d[key]


def parse_config(raw: Any, base_dir=".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    known = {"name", "seed", "replications", "repeats", "data", "graph", "models", "training"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown top-level key '{key}'")
    data = dict(_require(raw, "data", "config"))
    source = _require(data, "source", "data")
    if source == "synthetic":
        try:
            bench.SyntheticConfig(
                data.get("scenario", "A"), int(data.get("n", 500)), int(data.get("d", 6)),
                float(data.get("sigma", 0.5)), allow_off_grid=bool(data.get("allow_off_grid", False)),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"data: {exc}") from None
        data.setdefault("val_fraction", 0.2)
        if not 0 < float(data["val_fraction"]) < 1:
            raise ConfigError("key 'data.val_fraction' must lie in (0, 1)")
    elif source == "csv":
        _require(data, "path", "data")
        ratios = data.setdefault("ratios", [0.7, 0.2, 0.1])
        try:
            bench.split_sizes(10**6, ratios)
        except ValueError as exc:
            raise ConfigError(f"key 'data.ratios': {exc}") from None
        data.setdefault("schema", {})
    else:
        raise ConfigError(f"key 'data.source' must be 'synthetic' or 'csv', got {source!r}")

    g = dict(raw.get("graph", {"source": "full"}))
    if g.get("source", "full") not in GRAPH_SOURCES:
        raise ConfigError(f"key 'graph.source' must be one of {GRAPH_SOURCES}")
    g.setdefault("source", "full")
    if g["source"] == "file":
        _require(g, "path", "graph")
    if g["source"] == "forbidden":
        _require(g, "forbidden", "graph")
    g.setdefault("treatment", "t")
    g.setdefault("outcome", "y")
    g.setdefault("prune_threshold", 0.1)
    g.setdefault("attempts", 5)

    entries = raw.get("models")
    if not entries:
        raise ConfigError("key 'models' must list at least one model")
    model_list = []
    for i, m in enumerate(entries):
        if not isinstance(m, dict):
            raise ConfigError(f"key 'models[{i}]' must be a mapping")
        m = dict(m)
        kind, mode = m.pop("kind", None), m.pop("mode", "unconstrained")
        if kind not in models.KINDS:
            raise ConfigError(f"key 'models[{i}].kind' must be one of {models.KINDS}, got {kind!r}")
        if mode not in models.MODES:
            raise ConfigError(f"key 'models[{i}].mode' must be one of {models.MODES}, got {mode!r}")
        for k in m:
            if k not in TRAINING_KEYS:
                raise ConfigError(f"unknown key 'models[{i}].{k}'")
        model_list.append(ModelEntry(kind, mode, m))

    training = dict(DEFAULT_TRAINING)
    for k, v in (raw.get("training") or {}).items():
        if k not in TRAINING_KEYS:
            raise ConfigError(f"unknown key 'training.{k}'")
        training[k] = v

    reps = raw.get("replications", 1)
    repeats = raw.get("repeats", 1)
    for key, v in (("replications", reps), ("repeats", repeats)):
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"key '{key}' must be an integer >= 1")
    return ExperimentConfig(
        name=str(raw.get("name", "experiment")), data=data, graph=g, models=model_list,
        training=training, replications=reps, repeats=repeats, seed=int(raw.get("seed", 0)),
        base_dir=Path(base_dir),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(raw, path.parent)


# helpers ---------------------------------------------------------------------------

def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rep_dir(out: Path, k: int) -> Path:
    return Path(out) / f"rep_{k:03d}"


def _event(out_rep: Path, message: str):
    out_rep.mkdir(parents=True, exist_ok=True)
    with open(out_rep / "run.log", "a", encoding="utf-8") as fh:
        fh.write(message + "\n")
    log.info("%s: %s", out_rep.name, message)


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"missing {path}; run the `{stage}` stage first")
    return path


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _failed(out: Path, k: int) -> bool:
    return (rep_dir(out, k) / "FAILED").exists()


def _mark_failed(out: Path, k: int, stage: str, exc: BaseException):
    msg = f"{stage}: {type(exc).__name__}: {exc}\n"
    atomic_write(rep_dir(out, k) / "FAILED", msg)
    _event(rep_dir(out, k), f"failed in {stage}: {exc}")
    log.warning("replication %d failed in %s: %s", k, stage, exc)
    log.debug("%s", traceback.format_exc())


def _map(fn, args, jobs: int):
    if jobs <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


# generate ---------------------------------------------------------------------------

def _load_source(cfg: ExperimentConfig, k: int) -> bench.Dataset:
    data = cfg.data
    path = cfg.resolve(str(data["path"]).format(rep=k, rep1=k + 1))
    s = data.get("schema", {})
    schema = bench.CsvSchema(
        covariates=s.get("covariates"), t=s.get("t", "t"), y=s.get("y", "y"),
        mu0=s.get("mu0"), mu1=s.get("mu1"), e_true=s.get("e_true"), exp=s.get("exp"),
    )
    return bench.load_csv(path, schema)


def make_splits(cfg: ExperimentConfig, k: int):
    data = cfg.data
    if data["source"] == "synthetic":
        sc = bench.SyntheticConfig(
            data["scenario"], int(data["n"]), int(data["d"]), float(data["sigma"]),
            seed=derive_seed(cfg.seed, k, _DATA), allow_off_grid=bool(data.get("allow_off_grid", False)),
        )
        full_train, test = bench.generate(sc)
        n = len(full_train)
        n_val = math.floor(n * float(data["val_fraction"]))
        perm = np.random.default_rng(derive_seed(cfg.seed, k, _SPLIT)).permutation(n)
        return full_train.subset(perm[n_val:]), full_train.subset(perm[:n_val]), test
    ds = _load_source(cfg, k)
    return bench.split(ds, data["ratios"], derive_seed(cfg.seed, k, _SPLIT))


def _generate_one(cfg: ExperimentConfig, out: Path, k: int):
    d = rep_dir(out, k)
    if (d / "test.csv").exists():
        return
    try:
        parts = make_splits(cfg, k)
        d.mkdir(parents=True, exist_ok=True)
        for name, ds in zip(("train", "val", "test"), parts):
            tmp = d / f".{name}.csv.tmp"
            bench.write_csv(ds, tmp)
            os.replace(tmp, d / f"{name}.csv")
        _event(d, "generated splits " + " ".join(f"{n}={len(p)}" for n, p in zip(("train", "val", "test"), parts)))
    except Exception as exc:  # noqa: BLE001 - recorded per replication
        _mark_failed(out, k, "generate", exc)


def stage_generate(cfg: ExperimentConfig, out, jobs: int = 1):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _map(_generate_one, [(cfg, out, k) for k in range(cfg.replications)], jobs)


def read_split(out: Path, k: int, name: str) -> bench.Dataset:
    path = _need(rep_dir(out, k) / f"{name}.csv", "generate")
    return bench.load_csv(path, bench.standard_schema(path))


# discover ---------------------------------------------------------------------------

def _discover_one(cfg: ExperimentConfig, out: Path, k: int):
    """Run discovery for replication ``k``; returns the graph text or None on failure."""
    d = rep_dir(out, k)
    if _failed(out, k):
        return None
    cached = d / "discovered.txt"
    if cached.exists():
        return cached.read_text(encoding="utf-8")
    if (d / "discovery_failed").exists():
        return None
    train = read_split(out, k, "train")
    g = discover_graph(train, cfg.graph, derive_seed(cfg.seed, k, _DISCOVER))
    if isinstance(g, discovery.DiscoveryFailure):
        atomic_write(d / "discovery_failed", g.reason + "\n")
        _event(d, f"discover: failed ({g.reason})")
        return None
    text = graph.dumps(g)
    atomic_write(cached, text)
    _event(d, f"discover: found {len(g.edges)} edges")
    return text


def discover_graph(train: bench.Dataset, gcfg: dict, seed: int):
    """
    Discover a graph on ``train`` over covariates, treatment and outcome,
    retrying ICA from fresh seeds. Graphs whose outcome has no covariate
    parent count as failures.
    """
    names = list(train.columns) + [gcfg["treatment"], gcfg["outcome"]]
    data = np.column_stack([train.X, train.t, train.y])
    reason = "no attempts"
    for attempt in range(int(gcfg["attempts"])):
        try:
            g = discovery.ica_lingam(
                data, names, gcfg["treatment"], gcfg["outcome"],
                prune_threshold=float(gcfg["prune_threshold"]), seed=derive_seed(seed, attempt),
            )
        except (graph.GraphError, discovery.RankDeficiencyError) as exc:
            reason = str(exc)
            continue
        if isinstance(g, discovery.DiscoveryFailure):
            reason = g.reason
            continue
        try:
            graph.build_groups(g)
        except graph.DegenerateGroupingError as exc:
            reason = str(exc)
            continue
        return g
    return discovery.DiscoveryFailure(f"{gcfg['attempts']} attempts failed; last: {reason}")


def _grouping_for(cfg: ExperimentConfig, columns) -> tuple[graph.VariableGrouping, graph.CausalGraph | None]:
    g = cfg.graph
    if g["source"] == "full":
        return graph.fully_connected_grouping(columns), None
    if g["source"] == "forbidden":
        return graph.groups_from_forbidden(columns, g["forbidden"]), None
    if g["source"] == "file":
        cg = graph.read_graph(cfg.resolve(g["path"]))
        return graph.build_groups(cg, columns), cg
    raise ValueError("discovered groupings come from the discover stage")


def _write_grouping(d: Path, grouping: graph.VariableGrouping, cg, origin: str):
    if cg is not None:
        atomic_write(d / "graph.txt", graph.dumps(cg))
    payload = {"origin": origin, "groups": [list(x) for x in grouping.groups]}
    atomic_write(d / "grouping.yaml", yaml.safe_dump(payload, sort_keys=False))


def stage_discover(cfg: ExperimentConfig, out, jobs: int = 1):
    out = Path(out)
    ks = [k for k in range(cfg.replications) if not _failed(out, k)]
    for k in ks:
        _need(rep_dir(out, k) / "train.csv", "generate")
    if cfg.graph["source"] != "discover":
        for k in ks:
            d = rep_dir(out, k)
            if (d / "grouping.yaml").exists():
                continue
            try:
                columns = read_split(out, k, "train").columns
                grouping, cg = _grouping_for(cfg, columns)
                _write_grouping(d, grouping, cg, cfg.graph["source"])
            except Exception as exc:  # noqa: BLE001
                _mark_failed(out, k, "discover", exc)
        return

    texts = dict(zip(ks, _map(_discover_one, [(cfg, out, k) for k in ks], jobs)))
    successes: list[tuple[int, graph.CausalGraph]] = [
        (k, graph.loads(t)) for k, t in texts.items() if t is not None
    ]
    fallback_path = cfg.graph.get("fallback")
    for k in ks:
        d = rep_dir(out, k)
        if (d / "grouping.yaml").exists():
            continue
        try:
            columns = read_split(out, k, "train").columns
            if texts[k] is not None:
                cg, origin = graph.loads(texts[k]), "discovered"
            else:
                # discovery has finished for every replication, so all successes are prior runs
                if successes:
                    cg, origin = graph.mode_graph([g for _, g in successes]), "mode of successful replications"
                elif fallback_path:
                    cg, origin = graph.read_graph(cfg.resolve(fallback_path)), "fallback file"
                else:
                    raise discovery_error(k)
                _event(d, f"discover: using {origin}")
            _write_grouping(d, graph.build_groups(cg, columns), cg, origin)
        except Exception as exc:  # noqa: BLE001
            _mark_failed(out, k, "discover", exc)


def discovery_error(k: int) -> RuntimeError:
    return RuntimeError(f"discovery failed for replication {k} and no other replication or fallback file has a graph")


def read_grouping(out: Path, k: int) -> graph.VariableGrouping:
    path = _need(rep_dir(out, k) / "grouping.yaml", "discover")
    payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    return graph.VariableGrouping(tuple(tuple(g) for g in payload["groups"]))


# train ------------------------------------------------------------------------------

def model_spec(cfg: ExperimentConfig, entry: ModelEntry, grouping, seed: int) -> models.ModelSpec:
    params = {k: v for k, v in cfg.training.items()}
    params.update(entry.overrides)
    return models.ModelSpec(
        kind=entry.kind, mode=entry.mode, grouping=grouping if entry.mode == "cgc" else None,
        seed=seed, **params,
    )


def _write_predictions(path: Path, net: models.CausalNet, ds: bench.Dataset):
    y0, y1, g = models.predict(net, ds.X)
    g_col = [None] * len(y0) if g is None else g.tolist()
    rows = zip(y0.tolist(), y1.tolist(), g_col, (y1 - y0).tolist())
    atomic_write(path, _csv_text(PRED_COLUMNS, rows))


def _train_one(cfg: ExperimentConfig, out: Path, k: int):
    d = rep_dir(out, k)
    if _failed(out, k):
        return
    try:
        train, val, test = (read_split(out, k, s) for s in ("train", "val", "test"))
        needs_groups = any(m.mode == "cgc" for m in cfg.models)
        grouping = None
        if needs_groups:
            if not (d / "grouping.yaml").exists() and cfg.graph["source"] != "discover":
                stage_discover_one_static(cfg, out, k)
            grouping = read_grouping(out, k)
        for r in range(cfg.repeats):
            for entry in cfg.models:
                tag = f"{entry.label}_r{r}"
                if (d / f"pred_{tag}_test.csv").exists():
                    continue
                # paired design: constrained and unconstrained share the init seed
                spec = model_spec(cfg, entry, grouping, derive_seed(cfg.seed, k, _MODEL, r))
                net, report = models.fit(spec, train, val)
                (d / "models").mkdir(exist_ok=True)
                models.save_model(net, d / "models" / tag)
                _write_predictions(d / f"pred_{tag}_train.csv", net, train)
                _write_predictions(d / f"pred_{tag}_test.csv", net, test)
                _event(d, f"train: {tag} epochs={report.epochs_run} best_val={report.best_val_loss!r}")
    except Exception as exc:  # noqa: BLE001
        _mark_failed(out, k, "train", exc)


def stage_discover_one_static(cfg: ExperimentConfig, out: Path, k: int):
    columns = read_split(out, k, "train").columns
    grouping, cg = _grouping_for(cfg, columns)
    _write_grouping(rep_dir(out, k), grouping, cg, cfg.graph["source"])


def stage_train(cfg: ExperimentConfig, out, jobs: int = 1):
    out = Path(out)
    ks = [k for k in range(cfg.replications) if not _failed(out, k)]
    for k in ks:
        _need(rep_dir(out, k) / "train.csv", "generate")
        if cfg.graph["source"] == "discover" and any(m.mode == "cgc" for m in cfg.models):
            _need(rep_dir(out, k) / "grouping.yaml", "discover")
    _map(_train_one, [(cfg, out, k) for k in ks], jobs)


# evaluate ---------------------------------------------------------------------------

def read_predictions(path: Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["ite_hat"]) for r in rows])


def _evaluate_one(cfg: ExperimentConfig, out: Path, k: int):
    d = rep_dir(out, k)
    if _failed(out, k):
        return
    try:
        splits = {s: read_split(out, k, s) for s in ("train", "test")}
        rows = []
        for r in range(cfg.repeats):
            for entry in cfg.models:
                tag = f"{entry.label}_r{r}"
                for s, ds in splits.items():
                    ite = read_predictions(_need(d / f"pred_{tag}_{s}.csv", "train"))
                    rep = metrics.evaluate(ds, ite, s)
                    rows.append((cfg.name, entry.kind, entry.mode, k, r, s, rep.n_eval,
                                 rep.sqrt_pehe, rep.ate_error, rep.att_error))
        atomic_write(d / "metrics.csv", _csv_text(RAW_COLUMNS, rows))
    except Exception as exc:  # noqa: BLE001
        _mark_failed(out, k, "evaluate", exc)


def stage_evaluate(cfg: ExperimentConfig, out, jobs: int = 1) -> Path:
    out = Path(out)
    ks = [k for k in range(cfg.replications) if not _failed(out, k)]
    _map(_evaluate_one, [(cfg, out, k) for k in ks], jobs)
    rows = []
    for k in range(cfg.replications):
        p = rep_dir(out, k) / "metrics.csv"
        if not _failed(out, k) and p.exists():
            with open(p, newline="", encoding="utf-8") as fh:
                rows += list(csv.reader(fh))[1:]
    failed = [k for k in range(cfg.replications) if _failed(out, k)]
    raw = out / "raw_report.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RAW_COLUMNS)
    w.writerows(rows)
    atomic_write(raw, buf.getvalue())
    if failed:
        atomic_write(out / "failed_replications.txt", "".join(f"{k}\n" for k in failed))
    if not rows:
        raise AllReplicationsFailed(f"all {cfg.replications} replications failed")
    return raw


# report -----------------------------------------------------------------------------

def _read_raw(out: Path) -> list[dict]:
    paths = sorted(Path(out).glob("**/raw_report.csv")) if Path(out).is_dir() else []
    rows = []
    for p in paths:
        with open(p, newline="", encoding="utf-8") as fh:
            rows += list(csv.DictReader(fh))
    return rows


def stage_report(out) -> Path:
    """Aggregate every ``raw_report.csv`` under ``out`` into summary tables."""
    out = Path(out)
    rows = _read_raw(out)
    if not rows:
        raise MissingInputError(f"no raw_report.csv with data under {out}; run the `evaluate` stage first")
    groups: dict[tuple, dict[str, list[float]]] = {}
    for r in rows:
        key = (r["dataset"], r["model"], r["mode"], r["split"])
        bucket = groups.setdefault(key, {m: [] for m in metrics.METRICS})
        for m in metrics.METRICS:
            if r[m] != "":
                bucket[m].append(float(r[m]))
    summary = []
    for key in sorted(groups):
        for m in metrics.METRICS:
            vals = groups[key][m]
            if vals:
                mean, sd, sem = metrics.mean_sd_sem(vals)
                summary.append((*key, m, len(vals), mean, sd, sem))
    atomic_write(out / "summary.csv", _csv_text(
        ("dataset", "model", "mode", "split", "metric", "count", "mean", "sd", "sem"), summary))
    atomic_write(out / "report.md", render_markdown(summary))
    return out / "report.md"


def render_markdown(summary) -> str:
    stats = {(d, m, mode, s, met): (mean, sem) for d, m, mode, s, met, _, mean, _, sem in summary}
    datasets = sorted({k[0] for k in stats})
    kinds = [k for k in models.KINDS if any(key[1] == k for key in stats)]
    lines = []
    for split in ("test", "train"):
        for met in metrics.METRICS:
            present = [k for k in stats if k[3] == split and k[4] == met]
            if not present:
                continue
            lines += [f"## Ratio constrained / unconstrained: {met} ({split})", "",
                      "| dataset | " + " | ".join(kinds) + " |",
                      "|---" * (len(kinds) + 1) + "|"]
            for ds in datasets:
                cells = []
                for kind in kinds:
                    c = stats.get((ds, kind, "cgc", split, met))
                    u = stats.get((ds, kind, "unconstrained", split, met))
                    cells.append(f"{c[0] / u[0]:.3f}" if c and u and u[0] else "-")
                lines.append(f"| {ds} | " + " | ".join(cells) + " |")
            lines.append("")
    for ds in datasets:
        lines += [f"## {ds}: mean ± SEM", "", "| model | split | " + " | ".join(metrics.METRICS) + " |",
                  "|---" * (len(metrics.METRICS) + 2) + "|"]
        for kind in kinds:
            for mode in ("cgc", "unconstrained"):
                for split in ("train", "test"):
                    cells = []
                    for met in metrics.METRICS:
                        v = stats.get((ds, kind, mode, split, met))
                        cells.append("-" if v is None else (f"{v[0]:.3f}" if math.isnan(v[1]) else f"{v[0]:.3f} ± {v[1]:.3f}"))
                    if any(c != "-" for c in cells):
                        name = kind + (" + CGC" if mode == "cgc" else "")
                        lines.append(f"| {name} | {split} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)


# whole pipeline -------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out, jobs: int = 1) -> Path:
    """Generate, discover, train, evaluate and report; returns the raw report path."""
    out = Path(out)
    stage_generate(cfg, out, jobs)
    stage_discover(cfg, out, jobs)
    stage_train(cfg, out, jobs)
    raw = stage_evaluate(cfg, out, jobs)
    stage_report(out)
    return raw


# standalone discovery ----------------------------------------------------------------

def discover_mode_graph(
    ds: bench.Dataset, runs: int, out, seed: int = 0, ratios=(0.62, 0.18, 0.20),
    treatment: str = "t", outcome: str = "y", prune_threshold: float = 0.1, attempts: int = 1,
) -> graph.CausalGraph:
    """
    Discover on ``runs`` random training splits of ``ds`` and write each
    graph plus ``mode_graph.txt`` (the most common one) to ``out``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gcfg = {"treatment": treatment, "outcome": outcome, "prune_threshold": prune_threshold, "attempts": attempts}
    found = []
    for i in range(runs):
        train, _, _ = bench.split(ds, ratios, derive_seed(seed, i, _SPLIT))
        g = discover_graph(train, gcfg, derive_seed(seed, i, _DISCOVER))
        if isinstance(g, discovery.DiscoveryFailure):
            atomic_write(out / f"run_{i:03d}.failed", g.reason + "\n")
            continue
        atomic_write(out / f"run_{i:03d}.txt", graph.dumps(g))
        found.append(g)
    if not found:
        raise RuntimeError(f"discovery failed in all {runs} runs")
    mode = graph.mode_graph(found)
    atomic_write(out / "mode_graph.txt", graph.dumps(mode))
    return mode
