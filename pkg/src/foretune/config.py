"""Pipeline configuration.

One TOML file drives every subcommand.  Relative paths resolve against the
config file's own directory, so a bundled corpus runs from any working
directory.  Secrets never appear in the file: endpoint sections name the
environment variable that holds the key, and the variable is only required
when the transcript mode actually reaches the network.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib  # type: ignore[no-redef]

from .dpo import DpoConfig
from .errors import ConfigurationError
from .questions import TRAIN_WINDOW, TEST_WINDOW

MODE_REPLAY = "replay"
MODE_RECORD = "record"
MODE_LIVE = "live"


@dataclass(frozen=True)
class ChatConfig:
    base_url: str = ""
    api_key_env: str = "FORETUNE_CHAT_API_KEY"
    model: str = "sim-forecaster"
    style: str | None = None


@dataclass(frozen=True)
class NewsConfig:
    base_url: str = ""
    api_key_env: str = "FORETUNE_NEWS_API_KEY"
    lookback_days: int = 14
    max_queries: int = 2
    max_results: int = 5


@dataclass(frozen=True)
class TranscriptConfig:
    mode: str = MODE_REPLAY
    dir: Path = Path("transcripts")


def _as_date(value, name: str) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigurationError(f"{name} is not an ISO date: {value!r}") from None


@dataclass(frozen=True)
class PipelineConfig:
    work_dir: Path = Path("work")
    raw_questions: Path = Path("questions_raw.jsonl")
    train_window: tuple[dt.date, dt.date] = TRAIN_WINDOW
    test_window: tuple[dt.date, dt.date] = TEST_WINDOW
    chat: ChatConfig = field(default_factory=ChatConfig)
    news: NewsConfig = field(default_factory=NewsConfig)
    transcripts: TranscriptConfig = field(default_factory=TranscriptConfig)
    dpo: DpoConfig = field(default_factory=DpoConfig)
    label_mode: str = "true_outcome"
    seed: int = 0
    concurrency: int = 8

    # Stage artifact paths, all under work_dir.
    def questions_path(self, split: str) -> Path:
        return self.work_dir / f"questions_{split}.jsonl"

    @property
    def rejected_path(self) -> Path:
        return self.work_dir / "rejected.jsonl"

    @property
    def news_path(self) -> Path:
        return self.work_dir / "news.jsonl"

    @property
    def traces_path(self) -> Path:
        return self.work_dir / "traces.jsonl"

    def pairs_path(self, label_mode: str) -> Path:
        return self.work_dir / f"pairs_{label_mode}.jsonl"

    def dataset_path(self, label_mode: str) -> Path:
        return self.work_dir / f"dataset_{label_mode}.jsonl"

    @property
    def policy_path(self) -> Path:
        return self.work_dir / "policy.json"

    @property
    def training_report_path(self) -> Path:
        return self.work_dir / "training_report.jsonl"

    def forecasts_path(self, tag: str) -> Path:
        return self.work_dir / f"forecasts_{tag}.jsonl"

    @property
    def eval_dir(self) -> Path:
        return self.work_dir / "eval"


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    return value


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from None
    base = path.resolve().parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    paths = _section(data, "paths")
    partition = _section(data, "partition")
    chat = _section(data, "chat")
    news = _section(data, "news")
    transcripts = _section(data, "transcripts")
    run = _section(data, "run")
    dpo = _section(data, "dpo")

    windows = {
        "train_start": TRAIN_WINDOW[0],
        "train_end": TRAIN_WINDOW[1],
        "test_start": TEST_WINDOW[0],
        "test_end": TEST_WINDOW[1],
    }
    for key in windows:
        if key in partition:
            windows[key] = _as_date(partition[key], f"partition.{key}")
    if windows["train_start"] > windows["train_end"]:
        raise ConfigurationError("partition.train window is reversed")
    if windows["test_start"] > windows["test_end"]:
        raise ConfigurationError("partition.test window is reversed")
    if (
        windows["train_start"] <= windows["test_end"]
        and windows["test_start"] <= windows["train_end"]
    ):
        raise ConfigurationError("partition windows overlap")

    mode = transcripts.get("mode", MODE_REPLAY)
    if mode not in (MODE_REPLAY, MODE_RECORD, MODE_LIVE):
        raise ConfigurationError(f"transcripts.mode {mode!r} is not replay, record, or live")

    try:
        dpo_cfg = DpoConfig(
            beta=float(dpo.get("beta", 0.1)),
            learning_rate=float(dpo.get("learning_rate", 5e-5)),
            epochs=int(dpo.get("epochs", 1)),
            batch_size=int(dpo.get("batch_size", 2)),
            grad_accumulation=int(dpo.get("grad_accumulation", 4)),
            seed=int(dpo.get("seed", run.get("seed", 0))),
            feature_dim=int(dpo.get("feature_dim", 64)),
            validation_fraction=float(dpo.get("validation_fraction", 0.1)),
            plateau_tolerance=float(dpo.get("plateau_tolerance", 0.005)),
            optimizer=str(dpo.get("optimizer", "sgd")),
        )
    except ValueError as exc:
        raise ConfigurationError(f"invalid [dpo] settings: {exc}") from None

    label_mode = run.get("label_mode", "true_outcome")
    if label_mode not in ("true_outcome", "randomized"):
        raise ConfigurationError(f"run.label_mode {label_mode!r} is invalid")

    return PipelineConfig(
        work_dir=resolve(paths.get("work_dir", "work")),
        raw_questions=resolve(paths.get("raw_questions", "questions_raw.jsonl")),
        train_window=(windows["train_start"], windows["train_end"]),
        test_window=(windows["test_start"], windows["test_end"]),
        chat=ChatConfig(
            base_url=str(chat.get("base_url", "")),
            api_key_env=str(chat.get("api_key_env", "FORETUNE_CHAT_API_KEY")),
            model=str(chat.get("model", "sim-forecaster")),
            style=chat.get("style"),
        ),
        news=NewsConfig(
            base_url=str(news.get("base_url", "")),
            api_key_env=str(news.get("api_key_env", "FORETUNE_NEWS_API_KEY")),
            lookback_days=int(news.get("lookback_days", 14)),
            max_queries=int(news.get("max_queries", 2)),
            max_results=int(news.get("max_results", 5)),
        ),
        transcripts=TranscriptConfig(
            mode=mode, dir=resolve(transcripts.get("dir", "transcripts"))
        ),
        dpo=dpo_cfg,
        label_mode=label_mode,
        seed=int(run.get("seed", 0)),
        concurrency=int(run.get("concurrency", 8)),
    )
