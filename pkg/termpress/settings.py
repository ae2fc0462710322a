from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


DEFAULT_COMPLAINT_PHRASES = [
    "full output",
    "truncated",
    "missing",
    "show the complete",
    "entire log",
    "re-run to see",
]


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="TERMPRESS_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    pool_path: str = Field(default="./termpress_pool.json")
    top_k: int = Field(default=30, ge=1)
    tau: float = Field(default=0.3, ge=0.0, le=1.0)
    alpha: float = Field(default=0.3, ge=0.0, le=1.0)
    pool_capacity: int = Field(default=500, ge=1)
    retention_k: int = Field(default=30, ge=1)
    batch_size: int = Field(default=4, ge=1)
    turns: int = Field(default=10, ge=1)
    retention_threshold: float = Field(default=90.0, ge=0.0, le=100.0)
    min_turns_before_stop: int = Field(default=2, ge=1)
    intra_task_evolution: bool = True
    global_evolution: bool = True

    spawn_char_threshold: int = Field(default=1500)
    spawn_line_threshold: int = Field(default=40)
    session_rule_cap: int = Field(default=12, ge=1)
    confidence_step: float = Field(default=0.05, ge=0.0, le=1.0)

    complaint_window: int = Field(default=3, ge=1)
    complaint_phrases: list[str] = Field(
        default_factory=lambda: list(DEFAULT_COMPLAINT_PHRASES)
    )

    llm_endpoint: str = Field(default="https://api.openai.com/v1")
    llm_api_key: str | None = None
    llm_model: str = Field(default="gpt-4o-mini")
    llm_timeout_seconds: float = Field(default=60.0)
    llm_temperature: float = Field(default=0.2)
    llm_max_tokens: int = Field(default=2048)
    llm_max_concurrency: int = Field(default=4, ge=1)
    llm_requests_per_second: float | None = None
    llm_retry_backoff_seconds: float = Field(default=1.0, ge=0.0)
    mock_transcript: str | None = None
    record_transcript: str | None = None

    command_label: str = ""
    rules_path: str | None = None
    category: str | None = None
    stats: bool = False

    log_level: str = Field(default="WARNING")


_settings: Settings | None = None


def get_settings() -> Settings:
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings
