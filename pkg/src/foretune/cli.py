"""Command-line pipeline driver.

Subcommands mirror the pipeline stages: ingest, fetch-news, selfplay, rank,
emit-dpo, train-toy, forecast, evaluate, plus make-corpus for regenerating
the bundled synthetic fixture.  Every stage reads the previous stage's
artifacts and writes its own with sidecar manifests; re-running a stage with
unchanged inputs and seed produces byte-identical files.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.  Errors are
logged as one structured JSON line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import dpo, kernels, news, rerank, selfplay, stats, synth
from .config import (
    MODE_LIVE,
    MODE_RECORD,
    MODE_REPLAY,
    PipelineConfig,
    load_config,
)
from .endpoints import HttpChatEndpoint, HttpNewsEndpoint, TranscriptStore
from .errors import ConfigurationError, ForetuneError, MissingArtifactError
from .questions import ingest as ingest_records
from .questions import load_questions, partition, read_csv_records, save_questions
from .storage import read_jsonl, read_manifest, write_jsonl, write_manifest

log = logging.getLogger(__name__)


def _require_artifact(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run `{producer}` first")
    return path


def _chat_endpoint(cfg: PipelineConfig):
    mode = cfg.transcripts.mode
    if mode == MODE_REPLAY:
        return TranscriptStore(cfg.transcripts.dir)
    live = HttpChatEndpoint(cfg.chat.base_url, cfg.chat.api_key_env)
    if mode == MODE_RECORD:
        return TranscriptStore(cfg.transcripts.dir, mode="record", chat=live)
    return live


def _news_endpoint(cfg: PipelineConfig):
    mode = cfg.transcripts.mode
    if mode == MODE_REPLAY:
        return TranscriptStore(cfg.transcripts.dir)
    live = HttpNewsEndpoint(cfg.news.base_url, cfg.news.api_key_env)
    if mode == MODE_RECORD:
        return TranscriptStore(cfg.transcripts.dir, mode="record", news=live)
    return live


def _load_split(cfg: PipelineConfig, split: str):
    path = _require_artifact(cfg.questions_path(split), "ingest")
    return load_questions(path)


def _load_news_map(cfg: PipelineConfig):
    _require_artifact(cfg.news_path, "fetch-news")
    return news.load_news(cfg.news_path)


def _load_prompts(cfg: PipelineConfig) -> dict[str, str]:
    path = selfplay.prompts_path(cfg.traces_path)
    _require_artifact(path, "selfplay")
    return {r["question_id"]: r["prompt"] for r in read_jsonl(path)}


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    raw = _require_artifact(cfg.raw_questions, "make-corpus (or provide raw questions)")
    if raw.suffix.lower() == ".csv":
        records = list(read_csv_records(raw))
    else:
        records = list(read_jsonl(raw))
    result = ingest_records(records)
    train, test, unassigned = partition(
        result.questions, cfg.train_window, cfg.test_window
    )
    cfg.work_dir.mkdir(parents=True, exist_ok=True)
    save_questions(cfg.questions_path("train"), train, split="train")
    save_questions(cfg.questions_path("test"), test, split="test")
    save_questions(cfg.questions_path("unassigned"), unassigned, split="unassigned")
    rejected = [
        {"index": r.index, "reason": r.reason, "record": r.record}
        for r in result.rejected
    ]
    write_jsonl(cfg.rejected_path, rejected)
    write_manifest(cfg.rejected_path, count=len(rejected))
    print(
        f"ingested {len(result.questions)} questions "
        f"(train {len(train)}, test {len(test)}, unassigned {len(unassigned)}, "
        f"rejected {len(result.rejected)})"
    )
    return 0


def cmd_fetch_news(cfg: PipelineConfig, args) -> int:
    questions = _load_split(cfg, "train") + _load_split(cfg, "test")
    endpoint = _news_endpoint(cfg)
    fetched = news.fetch_news(
        questions,
        endpoint,
        cfg.news_path,
        lookback_days=cfg.news.lookback_days,
        max_queries=cfg.news.max_queries,
        max_results=cfg.news.max_results,
        concurrency=cfg.concurrency,
    )
    print(f"fetched news for {fetched} questions ({len(questions)} total on file)")
    return 0


def cmd_selfplay(cfg: PipelineConfig, args) -> int:
    train = _load_split(cfg, "train")
    news_map = _load_news_map(cfg)
    endpoint = _chat_endpoint(cfg)
    counts = selfplay.run_selfplay(
        train,
        news_map,
        endpoint,
        model=cfg.chat.model,
        traces_path=cfg.traces_path,
        style=cfg.chat.style,
        concurrency=cfg.concurrency,
    )
    print(
        f"selfplay kept {counts['kept']} questions "
        f"(dropped {counts['dropped']}, failed {counts['generation_failed']})"
    )
    return 0


def cmd_rank(cfg: PipelineConfig, args) -> int:
    label_mode = args.label_mode or cfg.label_mode
    seed = cfg.seed if args.seed is None else args.seed
    traces = selfplay.load_traces(_require_artifact(cfg.traces_path, "selfplay"))
    train = _load_split(cfg, "train")
    pairs = rerank.build_pairs(traces, train, label_mode=label_mode, seed=seed)
    manifest = rerank.save_pairs(pairs, cfg.pairs_path(label_mode), seed=seed)
    print(f"ranked {manifest['count']} pairs ({label_mode}, seed {seed})")
    return 0


def cmd_emit_dpo(cfg: PipelineConfig, args) -> int:
    label_mode = args.label_mode or cfg.label_mode
    pairs_file = _require_artifact(cfg.pairs_path(label_mode), "rank")
    pairs = rerank.load_pairs(pairs_file)
    prompts = _load_prompts(cfg)
    seed = read_manifest(pairs_file).get("seed", cfg.seed)
    manifest = rerank.emit_dataset(pairs, prompts, cfg.dataset_path(label_mode), seed=seed)
    print(
        f"emitted {manifest['count']} examples to {cfg.dataset_path(label_mode)} "
        f"(sha256 {manifest['sha256'][:12]})"
    )
    return 0


def cmd_train_toy(cfg: PipelineConfig, args) -> int:
    label_mode = args.label_mode or cfg.label_mode
    dataset = args.dataset or cfg.dataset_path(label_mode)
    _require_artifact(Path(dataset), "emit-dpo")
    dpo_cfg = cfg.dpo
    if args.epochs is not None:
        dpo_cfg = dataclasses.replace(dpo_cfg, epochs=args.epochs)
    if args.seed is not None:
        dpo_cfg = dataclasses.replace(dpo_cfg, seed=args.seed)
    result = dpo.train_toy(dataset, dpo_cfg)
    policy_out = Path(args.policy_out) if args.policy_out else cfg.policy_path
    report_out = Path(args.report_out) if args.report_out else cfg.training_report_path
    policy_out.parent.mkdir(parents=True, exist_ok=True)
    result.policy.save(policy_out)
    dpo.write_training_report(result, report_out)
    for es in result.curve:
        val = f"{es.val_loss:.6f}" if es.val_loss is not None else "n/a"
        print(f"epoch {es.epoch}: train_loss {es.train_loss:.6f} val_loss {val}")
    print(
        f"trained on {result.usable_examples} pairs "
        f"(skipped {result.skipped_examples}, backend {result.backend}, "
        f"plateau epoch {result.plateau_epoch})"
    )
    return 0


def cmd_forecast(cfg: PipelineConfig, args) -> int:
    questions = _load_split(cfg, args.split)
    news_map = _load_news_map(cfg)
    style = cfg.chat.style or selfplay.style_for_model(cfg.chat.model)
    if args.init:
        policy = dpo.ToyPolicy(cfg.dpo.feature_dim)
    else:
        policy_file = Path(args.policy) if args.policy else cfg.policy_path
        _require_artifact(policy_file, "train-toy")
        policy = dpo.ToyPolicy.load(policy_file)
    prompts = {}
    outcomes = {}
    for q in questions:
        bundle = selfplay.build_bundle(q, news_map.get(q.question_id, []), style)
        prompts[q.question_id] = selfplay.render_prompt(bundle)
        outcomes[q.question_id] = q.outcome
    records = dpo.policy_forecasts(policy, prompts, outcomes, model_tag=args.tag)
    out = cfg.forecasts_path(args.tag)
    stats.save_forecasts(records, out, split=args.split, model_tag=args.tag)
    summary = stats.brier(records)
    print(f"forecast {summary.n} questions as {args.tag}: mean Brier {summary.mean:.4f}")
    return 0


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    models: dict[str, list[stats.ForecastRecord]] = {}
    for path in args.forecasts:
        for record in stats.load_forecasts(_require_artifact(Path(path), "forecast")):
            models.setdefault(record.model_tag, []).append(record)
    report = stats.write_report(models, cfg.eval_dir)
    print((cfg.eval_dir / "report.txt").read_text(encoding="utf-8"), end="")
    print(f"report written to {cfg.eval_dir}")
    return 0


def cmd_make_corpus(args) -> int:
    counts = synth.make_corpus(args.out, seed=args.seed)
    print(
        f"corpus written to {args.out} "
        f"(kept {counts['kept']}, dropped {counts['dropped']}, "
        f"failed {counts['generation_failed']})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foretune",
        description="Self-play preference pipeline for resolved forecasting questions.",
    )
    parser.add_argument("--config", default="pipeline.toml", help="TOML config path")
    parser.add_argument("--work-dir", default=None, help="override [paths].work_dir")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="validate, deduplicate, and partition raw questions")
    sub.add_parser("fetch-news", help="retrieve date-bounded articles per question")
    sub.add_parser("selfplay", help="generate forecast trace pairs for training questions")

    p = sub.add_parser("rank", help="rank trace pairs against resolved outcomes")
    p.add_argument("--label-mode", choices=["true_outcome", "randomized"], default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("emit-dpo", help="serialize preference pairs for DPO training")
    p.add_argument("--label-mode", choices=["true_outcome", "randomized"], default=None)

    p = sub.add_parser("train-toy", help="train the desk-scale policy on a dataset")
    p.add_argument("--label-mode", choices=["true_outcome", "randomized"], default=None)
    p.add_argument("--dataset", default=None, help="dataset path (default per label mode)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--policy-out", default=None)
    p.add_argument("--report-out", default=None)

    p = sub.add_parser("forecast", help="score questions with a trained policy")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--tag", required=True, help="model tag recorded in the output")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--policy", default=None, help="policy file (default from config)")
    group.add_argument("--init", action="store_true", help="use an untrained policy")

    p = sub.add_parser("evaluate", help="Brier summaries and pairwise tests over tags")
    p.add_argument("--forecasts", nargs="+", required=True, help="forecast files")

    p = sub.add_parser("make-corpus", help="regenerate the synthetic fixture corpus")
    p.add_argument("--out", default="corpus")
    p.add_argument("--seed", type=int, default=synth.CORPUS_SEED)

    return parser


_HANDLERS = {
    "ingest": cmd_ingest,
    "fetch-news": cmd_fetch_news,
    "selfplay": cmd_selfplay,
    "rank": cmd_rank,
    "emit-dpo": cmd_emit_dpo,
    "train-toy": cmd_train_toy,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        if args.command == "make-corpus":
            return cmd_make_corpus(args)
        cfg = load_config(args.config)
        if args.work_dir is not None:
            cfg = dataclasses.replace(cfg, work_dir=Path(args.work_dir))
        cfg.work_dir.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2
    except ForetuneError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io_failure", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
