"""Configuration, stage runners and artifact bookkeeping behind the command-line interface.

Each stage reads earlier artifacts from the work directory, writes its own
directory atomically (staging dir, then rename) and records a ``manifest.json``
with content digests of every input and output plus the parameters used.  A
failing stage leaves its partial outputs under ``workdir/failed/<stage>``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import random
import shutil
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import __version__
from .annotate import AnnotatedSentence, TermMatcher, annotate_document, emit_annotation, write_conll
from .corpusprep import (ContextBlock, SplitScheme, build_blocks, filter_blocks, load_embeddings, read_blocks,
                         split_dataset, write_blocks)
from .errors import ConfigError, LexiforgeError, StateFileError
from .evaluation import (MetricCell, read_predictions, render_table3, render_table4, report_tsv,
                         sequence_entity_metrics, token_metrics)
from .extract import (acceptance_stats, accepted_terms, collect_candidates, read_candidates, read_decisions,
                      review_session, write_candidates)
from .ingest import CorpusStore, FilterRules, ingest, load_manifest
from .lexicon import (DEFAULT_SEED_KEYWORDS, LemmaTable, Lexicon, cvalue_candidates, format_candidates,
                      load_lexicon, merge_accepted)
from .tagger import TrainConfig, load_model, save_model, train
from .tagger.estimators import MODEL_KINDS

log = logging.getLogger(__name__)

STAGES = ("ingest", "lexicon", "annotate", "blocks", "split", "train", "tag", "extract", "review", "eval")
DEFAULT_LEARNING_RATES = {"linear_crf": 0.05, "cnn": 1e-3, "cnn_crf": 1e-3}

DEFAULTS = {
    "paths": {"manifest": None, "lexicon": None, "embeddings": None, "workdir": None, "lemmas": None},
    "filter": {"keywords": list(DEFAULT_SEED_KEYWORDS), "url_excludes": [], "max_depth": 1,
               "tags": ["p", "title", "h1", "h2"]},
    "threshold": 0.5,
    "seed": 0,
    "block_width": 2,
    "bootstrap": {"max_n": 4, "min_freq": 2},
    "split": {"schemes": [1]},
    "train": {"models": list(MODEL_KINDS), "max_epochs": 10, "batch_size": 32, "patience": 2,
              "learning_rate": dict(DEFAULT_LEARNING_RATES), "dev_fraction": 0.1, "cnn": {}},
    "review": {"replay": None, "reviewer": "expert"},
    "report": {"include_mac": True, "levels": ["token", "entity"]},
}


def _merge(base: dict, extra: dict, prefix="") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(prefix + k, "unknown configuration key")
        if isinstance(base[k], dict) and k not in ("cnn", "learning_rate"):
            if not isinstance(v, dict):
                raise ConfigError(prefix + k, "expected an object")
            out[k] = _merge(base[k], v, prefix + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class PipelineConfig:
    """Resolved settings; precedence is flag, then config file, then built-in default."""

    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def build(cls, config_path=None, overrides: dict | None = None, env=None) -> "PipelineConfig":
        env = os.environ if env is None else env
        data = copy.deepcopy(DEFAULTS)
        base = Path.cwd()
        if config_path is not None:
            p = Path(config_path)
            try:
                raw = json.loads(p.read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError("config", f"cannot read {p}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{p} is not valid JSON ({exc.msg}, line {exc.lineno})") from None
            if not isinstance(raw, dict):
                raise ConfigError("config", "top level must be a JSON object")
            split = raw.get("split")
            if isinstance(split, dict) and "scheme" in split:
                split = dict(split)
                split["schemes"] = [split.pop("scheme")]
                raw = dict(raw, split=split)
            data = _merge(data, raw)
            base = p.resolve().parent
        if not data["paths"]["workdir"] and env.get("LEXIFORGE_WORKDIR"):
            data["paths"]["workdir"] = str(Path(env["LEXIFORGE_WORKDIR"]).expanduser().resolve())
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node[key]
            node[leaf] = value
        return cls(data, base)

    def get(self, dotted: str):
        node = self.data
        for key in dotted.split("."):
            node = node[key]
        return node

    def path(self, name: str) -> Path | None:
        value = self.data["paths"].get(name)
        if not value:
            return None
        p = Path(value).expanduser()
        return (p if p.is_absolute() else self.base_dir / p).resolve()

    @property
    def workdir(self) -> Path:
        wd = self.path("workdir")
        if wd is None:
            raise ConfigError("paths.workdir", "no work directory (set it in the config, pass --workdir or "
                                               "export LEXIFORGE_WORKDIR)")
        return wd

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def stage_seed(self, stage: str) -> int:
        """Independent seed per stage derived from the master seed."""
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode()).hexdigest()
        return int(digest[:8], 16)

    def filter_rules(self) -> FilterRules:
        f = self.data["filter"]
        return FilterRules(tuple(f["keywords"]), tuple(f["url_excludes"]), frozenset(f["tags"]),
                           max_depth=int(f["max_depth"]))

    def learning_rate(self, kind: str) -> float:
        lr = self.data["train"]["learning_rate"]
        if isinstance(lr, dict):
            return float(lr.get(kind, DEFAULT_LEARNING_RATES[kind]))
        return float(lr)

    def lemmas(self) -> LemmaTable:
        p = self.path("lemmas")
        return LemmaTable.read(p) if p else LemmaTable.bundled()

    # -- validation ---------------------------------------------------------

    def validate(self, stages=STAGES) -> list[str]:
        """Raise :class:`ConfigError` naming the first bad field; return the checks performed."""
        checks = []
        need = {"manifest": {"ingest"}, "lexicon": {"lexicon"}, "embeddings": {"blocks", "extract"}}
        for name, users in need.items():
            if users & set(stages):
                p = self.path(name)
                if p is None:
                    raise ConfigError(f"paths.{name}", "required but not set")
                if not p.is_file():
                    raise ConfigError(f"paths.{name}", f"file not found: {p}")
                checks.append(f"paths.{name} -> {p}")
        lem = self.path("lemmas")
        if lem is not None and not lem.is_file():
            raise ConfigError("paths.lemmas", f"file not found: {lem}")
        self.workdir
        checks.append(f"paths.workdir -> {self.workdir}")
        t = self.data["threshold"]
        if not isinstance(t, (int, float)) or isinstance(t, bool) or not 0.0 <= t <= 1.0:
            raise ConfigError("threshold", f"must be a number in [0, 1], got {t!r}")
        if not isinstance(self.data["seed"], int) or isinstance(self.data["seed"], bool):
            raise ConfigError("seed", "must be an integer")
        schemes = self.data["split"]["schemes"]
        if not isinstance(schemes, list) or not schemes or any(s not in (1, 2, 3, 4) for s in schemes):
            raise ConfigError("split.schemes", f"expected a non-empty list drawn from 1..4, got {schemes!r}")
        models = self.data["train"]["models"]
        if not isinstance(models, list) or not models or any(m not in MODEL_KINDS for m in models):
            raise ConfigError("train.models", f"expected a non-empty list drawn from {MODEL_KINDS}, got {models!r}")
        tr = self.data["train"]
        for key in ("max_epochs", "batch_size"):
            if not isinstance(tr[key], int) or tr[key] < 1:
                raise ConfigError(f"train.{key}", "must be a positive integer")
        if not 0.0 <= float(tr["dev_fraction"]) < 1.0:
            raise ConfigError("train.dev_fraction", "must be in [0, 1)")
        for m in models:
            if self.learning_rate(m) <= 0:
                raise ConfigError("train.learning_rate", f"must be positive for {m}")
        if not self.data["filter"]["keywords"]:
            raise ConfigError("filter.keywords", "must not be empty")
        levels = self.data["report"]["levels"]
        if not levels or any(lv not in ("token", "entity") for lv in levels):
            raise ConfigError("report.levels", "expected a subset of [token, entity]")
        replay = self.data["review"]["replay"]
        if replay and not (self.base_dir / replay).is_file():
            raise ConfigError("review.replay", f"file not found: {replay}")
        checks.append("parameters ok")
        return checks


# ---------------------------------------------------------------------------
# artifact bookkeeping

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class WorkdirLock:
    """Exclusive per-workdir lock file; a lock left by a dead process is taken over."""

    def __init__(self, workdir: Path):
        self.path = Path(workdir) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise StateFileError(f"work directory is locked by another run ({self.path})") from None
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            return self
        raise StateFileError(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip() or "0")
        except (OSError, ValueError):
            return True
        if pid <= 0:
            return True
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


class StageRun:
    """Collects inputs, outputs and parameters of one stage execution."""

    def __init__(self, name: str, cfg: PipelineConfig, out_dir: Path, staging: Path):
        self.name = name
        self.cfg = cfg
        self.out_dir = out_dir
        self.dir = staging
        self.inputs: dict[str, str] = {}
        self.params: dict = {}
        self.notes: list[str] = []

    def _label(self, path: Path) -> str:
        path = Path(path).resolve()
        for root in (self.cfg.workdir, self.cfg.base_dir):
            try:
                return path.relative_to(root).as_posix()
            except ValueError:
                pass
        return path.as_posix()

    def input(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise LexiforgeError(f"{self.name}: missing input {path} (run the earlier stage first)")
        self.inputs[self._label(path)] = sha256_file(path)
        return path

    def write_manifest(self):
        outputs = {}
        for p in sorted(self.dir.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                outputs[p.relative_to(self.dir).as_posix()] = sha256_file(p)
        doc = {"stage": self.name, "lexiforge_version": __version__, "seed": self.cfg.seed,
               "stage_seed": self.cfg.stage_seed(self.name), "params": self.params,
               "inputs": dict(sorted(self.inputs.items())), "outputs": outputs}
        if self.notes:
            doc["notes"] = self.notes
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@contextmanager
def stage(name: str, cfg: PipelineConfig, out_dir: Path | None = None):
    """Run a stage into a staging directory; promote it on success, quarantine it on failure."""
    wd = cfg.workdir
    out_dir = Path(out_dir) if out_dir else wd / name
    staging = wd / ".staging" / name
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    run = StageRun(name, cfg, out_dir, staging)
    try:
        yield run
        run.write_manifest()
    except BaseException:
        failed = wd / "failed" / name
        if failed.exists():
            shutil.rmtree(failed)
        failed.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(staging), str(failed))
        log.error("stage %s failed; partial outputs moved to %s", name, failed)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    shutil.move(str(staging), str(out_dir))
    log.info("stage %s done -> %s", name, out_dir)


# ---------------------------------------------------------------------------
# shared loaders

def _lexicon(cfg: PipelineConfig, run: StageRun) -> Lexicon:
    return load_lexicon(run.input(cfg.workdir / "lexicon" / "lexicon.tsv"), cfg.lemmas())


def _blocks(cfg: PipelineConfig, run: StageRun) -> list[ContextBlock]:
    return read_blocks(run.input(cfg.workdir / "blocks" / "blocks.jsonl"))


def _ids(path: Path) -> list[str]:
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line]


def _split_sides(cfg, run, scheme: int):
    blocks = {b.block_id: b for b in _blocks(cfg, run)}
    d = cfg.workdir / "split" / f"scheme{scheme}"
    train_ids = _ids(run.input(d / "train.ids"))
    test_ids = _ids(run.input(d / "test.ids"))
    return [blocks[i] for i in train_ids], [blocks[i] for i in test_ids]


def _xy(blocks):
    seqs = [b.sequence() for b in blocks]
    return [s[0] for s in seqs], [s[1] for s in seqs], [s[2] for s in seqs]


def _schemes(cfg):
    return [int(s) for s in cfg.get("split.schemes")]


def _models(cfg):
    return [m.replace("-", "_") for m in cfg.get("train.models")]


# ---------------------------------------------------------------------------
# stages

def run_ingest(cfg: PipelineConfig, out_dir=None, workers: int = 1):
    with stage("ingest", cfg, out_dir) as run:
        manifest_path = run.input(cfg.path("manifest"))
        entries = load_manifest(manifest_path)
        for e in entries:
            if Path(e.path).exists():
                run.input(e.path)
        rules = cfg.filter_rules()
        run.params = {"filter": cfg.get("filter")}
        store = ingest(entries, rules, workers=workers)
        store.write(run.dir)
        log.info("ingest: %d passages, %d skipped documents", len(store.passages), len(store.skipped))
    return store


def run_lexicon(cfg: PipelineConfig, action: str = "load", out_dir=None):
    """``load`` normalizes the gold lexicon (and bootstraps C-value candidates when passages exist);
    ``bootstrap`` only scores candidates; ``merge`` folds accepted review verdicts into a new version."""
    wd = cfg.workdir
    lemmas = cfg.lemmas()
    if action == "merge":
        with stage("merge", cfg, out_dir) as run:
            lexicon = load_lexicon(run.input(wd / "lexicon" / "lexicon.tsv"), lemmas)
            cands = read_candidates(run.input(wd / "extract" / "candidates.jsonl"))
            decisions = read_decisions(run.input(wd / "review" / "decisions.jsonl"))
            accepted = accepted_terms(decisions, cands)
            merged = merge_accepted(lexicon, accepted, lemmas)
            (run.dir / "lexicon.tsv").write_text(merged.to_tsv(), encoding="utf-8")
            run.params = {"from_version": lexicon.version, "to_version": merged.version, "added": len(accepted)}
        return merged
    if action not in ("load", "bootstrap"):
        raise ConfigError("lexicon.action", f"expected load, bootstrap or merge, got {action!r}")
    with stage("lexicon", cfg, out_dir) as run:
        passages = wd / "ingest" / "passages.jsonl"
        lexicon = None
        if action == "load":
            lexicon = load_lexicon(run.input(cfg.path("lexicon")), lemmas)
            (run.dir / "lexicon.tsv").write_text(lexicon.to_tsv(), encoding="utf-8")
            run.params["version"] = lexicon.version
            run.params["terms"] = len(lexicon)
        if passages.exists() or action == "bootstrap":
            store = CorpusStore.read(run.input(passages).parent)
            bs = cfg.get("bootstrap")
            cands = cvalue_candidates([sp.passage.text for sp in store.passages], bs["max_n"], bs["min_freq"])
            (run.dir / "cvalue_candidates.tsv").write_text(format_candidates(cands), encoding="utf-8")
            run.params["bootstrap"] = bs
    return lexicon


def run_annotate(cfg: PipelineConfig, out_dir=None):
    wd = cfg.workdir
    with stage("annotate", cfg, out_dir) as run:
        lemmas = cfg.lemmas()
        lexicon = _lexicon(cfg, run)
        store = CorpusStore.read(run.input(wd / "ingest" / "passages.jsonl").parent)
        matcher = TermMatcher(lexicon, lemmas)
        n_sent = n_spans = 0
        with open(run.dir / "sentences.jsonl", "w", encoding="utf-8") as sj, \
                open(run.dir / "annotated.txt", "w", encoding="utf-8") as at:
            for doc_id, passages in store.documents().items():
                sents: list[AnnotatedSentence] = []
                for sp in passages:
                    source = "pdf" if sp.passage.source_kind == "pdf_text" else "web"
                    sents += annotate_document(sp.passage.text, doc_id, matcher, source, len(sents))
                for a in sents:
                    sj.write(json.dumps(a.to_dict(), ensure_ascii=False) + "\n")
                    n_sent += 1
                    if a.spans:
                        n_spans += len(a.spans)
                        at.write(f"{doc_id}\t{a.sentence.index}\t{emit_annotation(a.sentence, a.spans)}\n")
        run.params = {"lexicon_version": lexicon.version, "sentences": n_sent, "spans": n_spans}


def _read_sentences(path) -> dict[str, list[AnnotatedSentence]]:
    docs: dict[str, list[AnnotatedSentence]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                a = AnnotatedSentence.from_dict(json.loads(line))
                docs.setdefault(a.sentence.doc_id, []).append(a)
    return docs


def run_blocks(cfg: PipelineConfig, out_dir=None):
    wd = cfg.workdir
    threshold = float(cfg.get("threshold"))
    with stage("blocks", cfg, out_dir) as run:
        docs = _read_sentences(run.input(wd / "annotate" / "sentences.jsonl"))
        store = load_embeddings(run.input(cfg.path("embeddings")))
        blocks = [b for doc in docs.values() for b in build_blocks(doc, int(cfg.get("block_width")))]
        kept = filter_blocks(blocks, store, threshold)
        kept_ids = {b.block_id for b in kept}
        write_blocks(kept, run.dir / "blocks.jsonl")
        with open(run.dir / "similarity.tsv", "w", encoding="utf-8") as fh:
            fh.write("block_id\tsimilarity\tkept\n")
            for b in blocks:
                fh.write(f"{b.block_id}\t{b.similarity!r}\t{int(b.block_id in kept_ids)}\n")
        run.params = {"threshold": threshold, "width": cfg.get("block_width"), "built": len(blocks),
                      "kept": len(kept)}
        log.info("blocks: kept %d of %d at threshold %s", len(kept), len(blocks), threshold)


def run_split(cfg: PipelineConfig, out_dir=None):
    seed = cfg.stage_seed("split")
    with stage("split", cfg, out_dir) as run:
        blocks = _blocks(cfg, run)
        lexicon = _lexicon(cfg, run)
        web = [b for b in blocks if b.source == "web"]
        pdf = [b for b in blocks if b.source == "pdf"]
        run.params = {"schemes": _schemes(cfg), "seed": seed, "sizes": {}}
        for s in _schemes(cfg):
            scheme = SplitScheme.get(s, seed)
            tr, te = split_dataset(web, pdf, scheme, lexicon)
            d = run.dir / f"scheme{s}"
            d.mkdir()
            for name, side in (("train", tr), ("test", te)):
                (d / f"{name}.ids").write_text("".join(b.block_id + "\n" for b in side), encoding="utf-8")
                with open(d / f"{name}.conll", "w", encoding="utf-8") as fh:
                    write_conll([b.sequence()[:2] for b in side], fh)
            run.params["sizes"][str(s)] = {"train": len(tr), "test": len(te)}


def run_train(cfg: PipelineConfig, out_dir=None):
    tr_cfg = cfg.get("train")
    seed = cfg.stage_seed("train")
    with stage("train", cfg, out_dir or cfg.workdir / "models") as run:
        run.params = {"seed": seed, "train": tr_cfg, "histories": {}}
        for s in _schemes(cfg):
            train_blocks, _ = _split_sides(cfg, run, s)
            rng = random.Random(seed + s)
            dev_n = int(len(train_blocks) * float(tr_cfg["dev_fraction"]))
            order = list(range(len(train_blocks)))
            rng.shuffle(order)
            dev_idx = set(order[:dev_n])
            fit_blocks = [b for i, b in enumerate(train_blocks) if i not in dev_idx]
            dev_blocks = [b for i, b in enumerate(train_blocks) if i in dev_idx]
            X, y, _ = _xy(fit_blocks)
            dev = _xy(dev_blocks)[:2] if dev_blocks else None
            for kind in _models(cfg):
                tc = TrainConfig(cfg.learning_rate(kind), int(tr_cfg["batch_size"]), int(tr_cfg["max_epochs"]),
                                 int(tr_cfg["patience"]), seed)
                overrides = dict(tr_cfg.get("cnn") or {}) if kind != "linear_crf" else {}
                if "parallel_kernels" in overrides:
                    overrides["parallel_kernels"] = tuple(overrides["parallel_kernels"])
                log.info("train: %s on scheme %d (%d sequences, %d dev)", kind, s, len(X), len(dev_blocks))
                model = train(kind, (X, y), dev, tc, **overrides)
                save_model(model, run.dir / f"{kind}.scheme{s}.lxm", extra={"scheme": s})
                run.params["histories"][f"{kind}.scheme{s}"] = model.history_


def run_tag(cfg: PipelineConfig, out_dir=None, model_path=None, input_path=None):
    """Tag the held-out side of every (model, scheme), or an arbitrary CoNLL file with ``model_path``."""
    wd = cfg.workdir
    with stage("tag" if model_path is None else "tag-adhoc", cfg, out_dir or wd / "predictions") as run:
        if model_path is not None:
            from .annotate import read_conll

            model = load_model(run.input(model_path))
            with open(run.input(input_path), encoding="utf-8") as fh:
                seqs = read_conll(fh)
            X = [cols[0] for cols in seqs]
            gold = [cols[1] if len(cols) > 1 else ["O"] * len(cols[0]) for cols in seqs]
            pred = model.predict(X)
            with open(run.dir / (Path(model_path).stem + ".conll"), "w", encoding="utf-8") as fh:
                write_conll(zip(X, gold), fh, pred)
            return
        for s in _schemes(cfg):
            _, test_blocks = _split_sides(cfg, run, s)
            X, y, _ = _xy(test_blocks)
            for kind in _models(cfg):
                model = load_model(run.input(wd / "models" / f"{kind}.scheme{s}.lxm"))
                pred = model.predict(X)
                with open(run.dir / f"{kind}.scheme{s}.conll", "w", encoding="utf-8") as fh:
                    write_conll(zip(X, y), fh, pred)
                with open(run.dir / f"{kind}.scheme{s}.ids", "w", encoding="utf-8") as fh:
                    fh.write("".join(b.block_id + "\n" for b in test_blocks))


def _predictions(cfg, run, kind, s):
    path = run.input(cfg.workdir / "predictions" / f"{kind}.scheme{s}.conll")
    with open(path, encoding="utf-8") as fh:
        return read_predictions(fh)


def run_extract(cfg: PipelineConfig, out_dir=None):
    wd = cfg.workdir
    threshold = float(cfg.get("threshold"))
    with stage("extract", cfg, out_dir) as run:
        lexicon = _lexicon(cfg, run)
        store = load_embeddings(run.input(cfg.path("embeddings")))
        lemmas = cfg.lemmas()
        all_cands = []
        for s in _schemes(cfg):
            _, test_blocks = _split_sides(cfg, run, s)
            for kind in _models(cfg):
                _, _, pred = _predictions(cfg, run, kind, s)
                if len(pred) != len(test_blocks):
                    raise LexiforgeError(f"predictions for {kind}.scheme{s} do not match the test split")
                sentences, labels, seen = [], [], set()
                for block, p in zip(test_blocks, pred):
                    starts = block.sequence()[2] + [len(p)]
                    for a, lo, hi in zip(block.sentences, starts, starts[1:]):
                        key = (a.sentence.doc_id, a.sentence.index)
                        if key in seen:
                            continue
                        seen.add(key)
                        sentences.append(a.sentence)
                        labels.append(p[lo:hi])
                cands = collect_candidates(labels, sentences, lexicon, store, threshold, kind, s,
                                           tuple(cfg.get("filter.keywords")), lemmas)
                all_cands.extend(cands)
        write_candidates(all_cands, run.dir / "candidates.jsonl")
        run.params = {"threshold": threshold, "lexicon_version": lexicon.version, "candidates": len(all_cands),
                      "gate_reference": "mean(seed keywords + lexicon terms of the predicted category)"}


def run_review(cfg: PipelineConfig, candidates_path=None, replay=None, input_fn: Callable = input,
               output: Callable = print, reviewer=None):
    """Append verdicts to ``review/decisions.jsonl`` (kept across sessions) and refresh acceptance tables."""
    wd = cfg.workdir
    review_dir = wd / "review"
    review_dir.mkdir(parents=True, exist_ok=True)
    state = review_dir / "decisions.jsonl"
    cpath = Path(candidates_path) if candidates_path else wd / "extract" / "candidates.jsonl"
    if not cpath.exists():
        raise LexiforgeError(f"review: missing candidates file {cpath}")
    cands = read_candidates(cpath)
    replay = replay or cfg.get("review.replay")
    if replay is not None:
        replay = Path(replay)
        if not replay.is_absolute() and not replay.exists():
            replay = cfg.base_dir / replay
    contexts = _contexts(cands, wd / "annotate" / "sentences.jsonl")
    decisions = review_session(cands, state, replay, reviewer or cfg.get("review.reviewer"), contexts,
                               input_fn, output)
    rows = acceptance_stats(decisions, cands)
    with open(review_dir / "acceptance.tsv", "w", encoding="utf-8") as fh:
        fh.write("model_id\tscheme_id\tcount\taccepted\trejected\tdeferred\trate\n")
        for r in rows:
            fh.write(f"{r.model_id}\t{r.scheme_id}\t{r.count}\t{r.accepted}\t{r.rejected}\t{r.deferred}\t"
                     f"{r.rate!r}\n")
    (review_dir / "acceptance.md").write_text(render_table4(rows), encoding="utf-8")
    doc = {"stage": "review", "inputs": {"candidates": sha256_file(cpath)},
           "replay": sha256_file(replay) if replay is not None else None,
           "outputs": {p.name: sha256_file(p) for p in sorted(review_dir.iterdir())
                       if p.is_file() and p.name != "manifest.json"}}
    (review_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return rows


def _contexts(cands, sentences_path: Path, limit: int = 3) -> dict[str, list[str]]:
    """Up to ``limit`` occurrence sentences per candidate, the span bracketed."""
    if not sentences_path.exists():
        return {}
    wanted = {(o[0], o[1]) for c in cands for o in c.occurrences[:limit]}
    found = {}
    for doc in _read_sentences(sentences_path).values():
        for a in doc:
            key = (a.sentence.doc_id, a.sentence.index)
            if key in wanted:
                found[key] = a.sentence
    out = {}
    for c in cands:
        lines = []
        for doc_id, index, start, end in c.occurrences[:limit]:
            sent = found.get((doc_id, index))
            if sent is None or end > len(sent.tokens):
                continue
            toks = list(sent.tokens)
            toks[start] = "[" + toks[start]
            toks[end - 1] += "]"
            lines.append(" ".join(toks))
        out[c.ref] = lines
    return out


def run_eval(cfg: PipelineConfig, out_dir=None, external=None):
    """Score every (model, scheme) prediction file; ``external`` adds CoNLL files produced elsewhere."""
    include_mac = bool(cfg.get("report.include_mac"))
    levels = list(cfg.get("report.levels"))
    with stage("eval", cfg, out_dir) as run:
        cells = []
        for s in _schemes(cfg):
            _, test_blocks = _split_sides(cfg, run, s)
            bounds = [b.sequence()[2] for b in test_blocks]
            for kind in _models(cfg):
                _, gold, pred = _predictions(cfg, run, kind, s)
                cells += _score(kind, s, pred, gold, bounds, levels, include_mac)
        for spec in external or []:
            model_id, scheme, path = spec
            with open(run.input(path), encoding="utf-8") as fh:
                _, gold, pred = read_predictions(fh)
            cells += _score(model_id, int(scheme), pred, gold, None, levels, include_mac)
        (run.dir / "report.tsv").write_text(report_tsv(cells), encoding="utf-8")
        title = "# Tagger evaluation\n\n" + ("I-mac spans counted as a class.\n\n" if include_mac
                                              else "I-mac spans excluded.\n\n")
        (run.dir / "report.md").write_text(title + render_table3(cells), encoding="utf-8")
        run.params = {"include_mac": include_mac, "levels": levels}
    return cells


def _score(model_id, scheme, pred, gold, bounds, levels, include_mac):
    cells = []
    if "token" in levels:
        cells.append(MetricCell.from_scores(model_id, scheme, token_metrics(pred, gold, include_mac), "token"))
    if "entity" in levels:
        s = sequence_entity_metrics(pred, gold, include_mac, bounds)
        cells.append(MetricCell.from_scores(model_id, scheme, s, "entity"))
    return cells


def run_pipeline(cfg: PipelineConfig, workers: int = 1):
    """All stages in order; review runs only when a replay file is configured."""
    run_ingest(cfg, workers=workers)
    run_lexicon(cfg, "load")
    run_annotate(cfg)
    run_blocks(cfg)
    run_split(cfg)
    run_train(cfg)
    run_tag(cfg)
    run_extract(cfg)
    if cfg.get("review.replay"):
        run_review(cfg)
    else:
        log.info("review: no replay file configured; skipping the interactive session")
    return run_eval(cfg)
