"""Report and record schemas."""

from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class EpochRecord(BaseModel):
    """Per-epoch training summary."""

    model_config = ConfigDict(frozen=True)

    epoch: int = Field(ge=1)
    loss_g: float
    loss_a: float
    loss_p: float
    loss_d: float
    d_real_accuracy: float = Field(ge=0.0, le=1.0)
    d_fake_accuracy: float = Field(ge=0.0, le=1.0)
    moment_distance: float = Field(ge=0.0)
    wall_time_s: float = Field(ge=0.0)


# TrainLog CSV column order
EPOCH_COLUMNS = list(EpochRecord.model_fields)


class EvalReport(BaseModel):
    """Accuracy and confusion matrix of one modality mode on one test set."""

    mode: str
    accuracy: float = Field(ge=0.0, le=1.0)
    confusion: List[List[int]]
    n_test: int = Field(ge=0)
    class_counts: List[int]
    seed: int
    ci_lower: float
    ci_upper: float
    config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_counts(self) -> "EvalReport":
        rows = [sum(row) for row in self.confusion]
        if rows != self.class_counts:
            raise ValueError(f"confusion rows {rows} disagree with class counts {self.class_counts}")
        if sum(rows) != self.n_test:
            raise ValueError(f"confusion total {sum(rows)} != n_test {self.n_test}")
        return self

    @property
    def correct(self) -> int:
        return sum(self.confusion[i][i] for i in range(len(self.confusion)))


class GradcheckEntry(BaseModel):
    """Finite-difference comparison for one parameter of one check."""

    check: str
    parameter: str
    max_scaled_error: float
    passed: bool


class RunManifest(BaseModel):
    """Everything needed to reproduce one command invocation."""

    command: str
    config: Dict[str, Any]
    sources: Dict[str, str]
    seed: Optional[int] = None
    artifacts: Dict[str, str] = Field(default_factory=dict)
    tool_version: str
    started_at: datetime
    wall_time_s: float = 0.0
    exit_code: int = 0
