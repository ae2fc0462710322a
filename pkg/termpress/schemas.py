from __future__ import annotations

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CompressionRule(BaseModel):
    """One structured compression rule.

    `confidence` is the global confidence while the rule lives in a pool and
    the task confidence while it lives in a session. Unknown document fields
    are kept as extras so they survive a round trip.
    """

    model_config = ConfigDict(frozen=True, extra="allow")

    rule_id: str
    trigger_regex: str
    description: str = ""
    keep_patterns: tuple[str, ...] = ()
    strip_patterns: tuple[str, ...] = ()
    keep_first_n: int = 5
    keep_last_n: int = 10
    max_lines: int | None = None
    summary_header: str = "[output compressed]"
    priority: int = 42
    confidence: float = 1.0
    times_applied: int = 0
    times_complained: int = 0
    category: str | None = None


class ProblemKind(str, Enum):
    BAD_REGEX = "bad-regex"
    UNSUPPORTED_CONSTRUCT = "unsupported-construct"
    OUT_OF_RANGE = "out-of-range"
    MISSING_FIELD = "missing-field"
    INEFFECTIVE = "ineffective"


FATAL_PROBLEMS = frozenset(
    {
        ProblemKind.BAD_REGEX,
        ProblemKind.UNSUPPORTED_CONSTRUCT,
        ProblemKind.OUT_OF_RANGE,
        ProblemKind.MISSING_FIELD,
    }
)


class Verdict(str, Enum):
    VALID = "valid"
    INVALID = "invalid"


class ValidationEntry(BaseModel):
    field: str
    kind: ProblemKind
    message: str

    @property
    def fatal(self) -> bool:
        return self.kind in FATAL_PROBLEMS


class RuleValidationReport(BaseModel):
    rule_id: str
    entries: list[ValidationEntry] = Field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        if any(entry.fatal for entry in self.entries):
            return Verdict.INVALID
        return Verdict.VALID

    @property
    def valid(self) -> bool:
        return self.verdict is Verdict.VALID


class OutputClass(str, Enum):
    CRITICAL = "Critical"
    NORMAL = "Normal"


class Coverage(str, Enum):
    COVERED = "covered"
    UNCOVERED = "uncovered"
    BYPASSED = "bypassed"


class CompressionResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    compressed_text: str
    lines_removed: int = 0
    chars_before: int
    chars_after: int
    ratio: float
    applied_rule_id: str | None = None


class ObservationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    step_index: int
    command: str
    raw_output: str
    output_class: OutputClass
    result: CompressionResult
    coverage: Coverage

    @property
    def compressed(self) -> bool:
        return self.result.lines_removed >= 1


class RuleOrigin(str, Enum):
    SELECTED = "selected"
    MODIFIED = "modified"
    NEW_PLAN = "new-plan"
    NEW_MIDTASK = "new-midtask"
    REPLACEMENT = "replacement"


class RuleOutcome(BaseModel):
    rule_id: str
    delta_applications: int = Field(default=0, ge=0)
    task_confidence: float = Field(ge=0.0, le=1.0)
    complained: bool = False
    rule_body: CompressionRule | None = None

    @model_validator(mode="after")
    def _complaint_zeroes_confidence(self) -> RuleOutcome:
        if self.complained and self.task_confidence != 0.0:
            raise ValueError("a complained outcome must carry task_confidence 0")
        return self


class GlobalRulePool(BaseModel):
    schema_version: int = 1
    generation: int = 0
    capacity: int = 500
    rules: list[CompressionRule] = Field(default_factory=list)
    last_written: dict[str, int] = Field(default_factory=dict)

    def get(self, rule_id: str) -> CompressionRule | None:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        return None

    @property
    def rule_ids(self) -> list[str]:
        return [rule.rule_id for rule in self.rules]


class RetentionReport(BaseModel):
    run_index: int = 0
    k: int
    retained_count: int
    retention_percent: float
    undersized: bool = False


class WriteBackResult(BaseModel):
    pool: GlobalRulePool
    inserted: list[str] = Field(default_factory=list)
    updated: list[str] = Field(default_factory=list)
    removed: list[str] = Field(default_factory=list)
    evicted: list[str] = Field(default_factory=list)
    diagnostics: list[str] = Field(default_factory=list)


class FollowupKind(str, Enum):
    NEXT_COMMAND = "next_command"
    AGENT_MESSAGE = "agent_message"


class FollowupEvent(BaseModel):
    kind: FollowupKind
    text: str
    at_step: int
    refers_to_step: int | None = None

    @model_validator(mode="after")
    def _refers_backwards(self) -> FollowupEvent:
        if self.refers_to_step is not None and self.refers_to_step >= self.at_step:
            raise ValueError("refers_to_step must precede the current step")
        return self


class ComplaintReason(str, Enum):
    REPEATED_COMMAND = "repeated-command"
    WIDENED_COMMAND = "widened-command"
    COMPLAINT_PHRASE = "complaint-phrase"


class Complaint(BaseModel):
    step_index: int
    reason: ComplaintReason
    evidence: str


class TemplateId(str, Enum):
    PROPOSAL_WITH_CACHE = "proposal_with_cache"
    PROPOSAL_NO_CACHE = "proposal_no_cache"
    SPAWN_NEW = "spawn_new"
    SPAWN_REPLACEMENT = "spawn_replacement"


class PromptRequest(BaseModel):
    template_id: TemplateId
    bindings: dict[str, str | int] = Field(default_factory=dict)
    temperature: float | None = None
    max_tokens: int | None = None
    repair_note: str | None = None


class RuleProposal(BaseModel):
    selected_rule_ids: list[str] = Field(default_factory=list)
    modified_rules: list[CompressionRule] = Field(default_factory=list)
    new_rules: list[CompressionRule] = Field(default_factory=list)
    diagnostics: list[str] = Field(default_factory=list)

    @property
    def rule_count(self) -> int:
        return len(self.selected_rule_ids) + len(self.modified_rules) + len(self.new_rules)


class TrajectoryStep(BaseModel):
    step_index: int
    command: str
    raw_output: str
    agent_message: str | None = None


class Trajectory(BaseModel):
    task_id: str
    instruction: str
    category: str | None = None
    terminal_state: str = ""
    steps: list[TrajectoryStep] = Field(default_factory=list)

    @model_validator(mode="after")
    def _strictly_increasing(self) -> Trajectory:
        previous: int | None = None
        for step in self.steps:
            if previous is not None and step.step_index <= previous:
                raise ValueError(
                    f"step indices must be strictly increasing (got {step.step_index} after {previous})"
                )
            previous = step.step_index
        return self


class TranscriptEntry(BaseModel):
    step_index: int
    command: str
    coverage: Coverage
    applied_rule_id: str | None
    lines_removed: int
    chars_before: int
    chars_after: int
    ratio: float


class RuleStats(BaseModel):
    entries: int = 0
    chars_saved: int = 0


class TaskCompressionReport(BaseModel):
    task_id: str
    episodes: int
    entries: int
    observed_chars: int = 0
    chars_before: int
    chars_after: int
    chars_saved: int
    overall_ratio: float
    best_ratio: float
    estimated_tokens_saved: int
    per_rule: dict[str, RuleStats] = Field(default_factory=dict)
    rule_origins: dict[str, int] = Field(default_factory=dict)
    complained_rules: list[str] = Field(default_factory=list)


class CompressionReport(BaseModel):
    tasks: list[TaskCompressionReport] = Field(default_factory=list)
    episodes: int = 0
    entries: int = 0
    observed_chars: int = 0
    chars_before: int = 0
    chars_after: int = 0
    chars_saved: int = 0
    overall_ratio: float = 1.0
    best_ratio: float = 1.0
    estimated_tokens_saved: int = 0
    failures: dict[str, str] = Field(default_factory=dict)


class EvolutionRunReport(BaseModel):
    turn: int
    retention: RetentionReport
    generation: int
    pool_size: int
    task_score: float
    rolling_std: float | None = None
    counter_total: int = 0
    compression: CompressionReport
    stopped_early: bool = False

