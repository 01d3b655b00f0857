"""Command-line surface: stats, train, eval, report.

One flat JSON config file drives a full run; --set key=value flags override
individual entries. Every command writes byte-reproducible data files;
timestamps and wall times live only in the run manifest.

Exit codes: 0 success, 1 runtime error, 2 usage/config error. Errors are
emitted as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CorpusSplit, LabeledPost, corpus_stats, load_corpus, load_presplit, split_corpus
from .encoding import EncoderSpec
from .errors import ConfigError, FndetectError, SpecError
from .evaluation import (
    EvalReport,
    build_report,
    comparison_table,
    format_metrics_row,
    load_reference_rows,
    table_to_csv,
    table_to_markdown,
)
from .models import MODEL_VARIANTS, Classifier, ModelSpec, build_model, load_checkpoint
from .textprep import CleaningConfig, audit_no_loss, clean_posts, nearest_rank
from .training import TrainConfig, train

SCHEMA_VERSION = 1

# encoder width when the test family stands in for a pretrained backbone
_TEST_ENCODER_DIM = 32


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; see README for the key reference."""

    variant: str = "roberta"
    corpus: str | None = None
    corpus_train: str | None = None
    corpus_val: str | None = None
    corpus_test: str | None = None
    corpus_format: str = "csv"
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    encoder_family: str | None = None  # "test" forces the desk-scale encoder
    encoder_dim: int = 768
    encoder_seed: int = 0
    weights_bert: str | None = None
    weights_albert: str | None = None
    weights_roberta: str | None = None
    fine_tune: bool = True
    skip_cleaning: bool = False
    threshold: float = 0.5
    outdir: str = "runs/out"
    learning_rate: float = 2e-5
    batch_size: int = 32
    epochs: int = 3
    seed: int = 0
    shuffle: bool = True
    max_len: int = 56

    def __post_init__(self) -> None:
        if self.variant not in MODEL_VARIANTS:
            raise ConfigError(
                f"unknown variant {self.variant!r}; valid options: {sorted(MODEL_VARIANTS)}"
            )
        object.__setattr__(self, "split_fractions", tuple(self.split_fractions))

    @classmethod
    def from_file(cls, path: str | Path, overrides: list[str] | None = None) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys in {path}: {sorted(unknown)}")
        config = cls(**data)
        for item in overrides or []:
            config = config.with_override(item)
        return config

    def with_override(self, item: str) -> "RunConfig":
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        if key not in {f.name for f in fields(self)}:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        return replace(self, **{key: value})

    def to_json_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            shuffle=self.shuffle,
            max_len=self.max_len,
        )

    def encoder_specs(self) -> tuple[EncoderSpec, ...]:
        _, families = MODEL_VARIANTS[self.variant]
        specs = []
        for k, family in enumerate(families):
            if self.encoder_family == "test":
                dim = self.encoder_dim if self.encoder_dim else _TEST_ENCODER_DIM
                specs.append(EncoderSpec("test", hidden_width=dim, seed=self.encoder_seed + k))
                continue
            ref = getattr(self, f"weights_{family}")
            if not ref:
                raise ConfigError(
                    f"variant {self.variant!r} needs weights_{family} "
                    "(or encoder_family='test' for the desk-scale encoder)"
                )
            specs.append(
                EncoderSpec(family, hidden_width=self.encoder_dim, weights_ref=ref, fine_tune=self.fine_tune)
            )
        return tuple(specs)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_split(config: RunConfig) -> tuple[CorpusSplit, dict[str, str]]:
    """CorpusSplit plus sha256 checksums of the files it came from."""
    fmt = config.corpus_format
    if config.corpus_train or config.corpus_val or config.corpus_test:
        paths = (config.corpus_train, config.corpus_val, config.corpus_test)
        if not all(paths):
            raise ConfigError("corpus_train, corpus_val and corpus_test must all be set together")
        split = load_presplit(*paths, format=fmt)
        checksums = {p: _sha256_file(p) for p in paths}
    elif config.corpus:
        posts = load_corpus(config.corpus, fmt)
        split = split_corpus(posts, config.split_fractions, config.split_seed)
        checksums = {config.corpus: _sha256_file(config.corpus)}
    else:
        raise ConfigError("config needs either corpus or corpus_train/val/test paths")
    return split, checksums


def _cleaned(posts: list[LabeledPost], cleaning: CleaningConfig) -> list[LabeledPost]:
    cleaned = clean_posts(posts, cleaning)
    return [replace(p, text=c.clean_text) for p, c in zip(posts, cleaned)]


def _clean_split(split: CorpusSplit, config: RunConfig) -> tuple[CorpusSplit, dict]:
    if config.skip_cleaning:
        return split, {}
    cleaning = CleaningConfig()
    audits = {
        name: audit_no_loss(part, cleaning).to_json_dict()
        for name, part in split.parts().items()
    }
    return (
        CorpusSplit(
            train=_cleaned(split.train, cleaning),
            validation=_cleaned(split.validation, cleaning),
            test=_cleaned(split.test, cleaning),
        ),
        audits,
    )


# ---- commands ----------------------------------------------------------------


def cmd_stats(args: argparse.Namespace) -> int:
    from . import plots

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.train and args.val and args.test:
        split = load_presplit(args.train, args.val, args.test, format=args.format)
        posts = split.train + split.validation + split.test
    else:
        posts = load_corpus(args.corpus, args.format)
        split = split_corpus(posts, seed=args.seed) if len(posts) >= 5 else None

    stats = corpus_stats(posts)
    cleaning = None if args.no_clean else CleaningConfig()
    cleaned = clean_posts(posts if split is None else split.train, cleaning)
    counts = [c.word_count for c in cleaned]
    payload = {
        "schema_version": SCHEMA_VERSION,
        "stats": stats.to_json_dict(),
        "word_count_quantiles": {
            "q98": nearest_rank(counts, 0.98),
            "q99": nearest_rank(counts, 0.99),
            "max": max(counts),
        },
        "audit": audit_no_loss(posts, cleaning).to_json_dict() if not args.no_clean else None,
    }
    _write_json(out / "stats.json", payload)
    plots.save_word_count_histogram(counts, out / "word_counts.png")
    if split is not None:
        label_counts = {
            name: corpus_stats(part).per_class_counts for name, part in split.parts().items()
        }
        plots.save_label_distribution(label_counts, out / "label_distribution.png")
    print(json.dumps(payload["stats"], sort_keys=True))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config, args.set or [])
    out = Path(args.outdir or config.outdir)
    out.mkdir(parents=True, exist_ok=True)

    split, checksums = _load_split(config)
    split, audits = _clean_split(split, config)

    spec = ModelSpec.for_variant(config.variant, config.encoder_specs())
    model = build_model(spec, config.seed)
    model, history = train(model, split, config.train_config())

    model.save(out / "checkpoint")
    history.write_jsonl(out / "history.jsonl")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": "train",
        "config": config.to_json_dict(),
        "config_hash": config.config_hash(),
        "data_checksums": checksums,
        "cleaning_audits": audits,
        "best_epoch": history.best_epoch,
        "epoch_wall_times": list(history.wall_times),
        "timestamp": _utc_now(),
    }
    _write_json(out / "manifest.json", manifest)
    best = history.records[history.best_epoch]
    print(
        f"trained {config.variant}: best epoch {best.epoch} "
        f"val_loss {best.val_loss:.4f} val_acc {best.val_accuracy:.4f}"
    )
    return 0


def _predict_all(model: Classifier, texts: list[str], max_len: int, threshold: float, chunk: int = 256):
    probs = []
    for start in range(0, len(texts), chunk):
        batches = model.tokenize(texts[start : start + chunk], max_len)
        probs.append(model.forward(batches))
    probs = np.concatenate(probs) if probs else np.zeros(0)
    return (probs >= threshold).astype(np.int64)


def cmd_eval(args: argparse.Namespace) -> int:
    from . import plots

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(args.checkpoint)
    posts = load_corpus(args.corpus, args.format)
    if not args.no_clean:
        posts = _cleaned(posts, CleaningConfig())
    gold = np.array([p.label for p in posts], dtype=np.int64)
    predicted = _predict_all(model, [p.text for p in posts], args.max_len, args.threshold)

    name = model.spec.name or model.spec.variant
    report = build_report(name, gold, predicted, config_hash=model.spec.spec_hash())
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "confusion.csv").write_text(report.confusion.to_csv(), encoding="utf-8")
    plots.save_confusion_heatmap(report.confusion, out / "confusion.png", name)
    _write_json(
        out / "manifest.json",
        {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "command": "eval",
            "checkpoint": str(args.checkpoint),
            "corpus": str(args.corpus),
            "corpus_checksum": _sha256_file(args.corpus),
            "timestamp": _utc_now(),
        },
    )
    print(format_metrics_row(report))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.from_json(Path(path).read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError) as exc:
            raise FndetectError(f"malformed report {path}: {exc}") from exc
    references = load_reference_rows(args.references) if args.references else None
    rows = comparison_table(reports, references)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.md").write_text(table_to_markdown(rows), encoding="utf-8")
    (out / "comparison.csv").write_text(table_to_csv(rows), encoding="utf-8")
    print(table_to_markdown(rows), end="")
    return 0


# ---- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fndetect",
        description="Train and evaluate transformer-based fake-news claim classifiers.",
    )
    parser.add_argument("--version", action="version", version=f"fndetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="corpus statistics, quantiles and figures")
    p_stats.add_argument("--corpus", help="single corpus file")
    p_stats.add_argument("--train", help="pre-split train corpus")
    p_stats.add_argument("--val", help="pre-split validation corpus")
    p_stats.add_argument("--test", help="pre-split test corpus")
    p_stats.add_argument("--format", default="csv", choices=("csv", "tsv"))
    p_stats.add_argument("--seed", type=int, default=0, help="seed for the stats split")
    p_stats.add_argument("--no-clean", action="store_true", help="skip the cleaning pipeline")
    p_stats.add_argument("--out", default="runs/stats")
    p_stats.set_defaults(func=cmd_stats)

    p_train = sub.add_parser("train", help="fine-tune one classifier variant")
    p_train.add_argument("--config", required=True, help="flat JSON run config")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p_train.add_argument("--outdir", help="override the config outdir")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a labeled corpus")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--format", default="csv", choices=("csv", "tsv"))
    p_eval.add_argument("--max-len", type=int, default=56, dest="max_len")
    p_eval.add_argument("--threshold", type=float, default=0.5)
    p_eval.add_argument("--no-clean", action="store_true")
    p_eval.add_argument("--out", default="runs/eval")
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", help="comparison table from report files")
    p_report.add_argument("--reports", nargs="+", required=True)
    p_report.add_argument("--references", help="alternative reference-row JSON file")
    p_report.add_argument("--out", default="runs/report")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SpecError) as exc:
        _emit_error(exc)
        return 2
    except FndetectError as exc:
        _emit_error(exc)
        return 1
    except OSError as exc:
        _emit_error(exc)
        return 1


def _emit_error(exc: Exception) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
