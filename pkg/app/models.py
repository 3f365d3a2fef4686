from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from typing import Optional, List, Dict, Any, Literal, Type, TypeVar

from app.errors import SchemaError

SectionType = Literal["clause", "subclause", "header", "footer"]
RuleScope = Literal["document", "clauses"]

SECTION_TAGS = (
    "O",
    "B-clause", "I-clause",
    "B-subclause", "I-subclause",
    "B-header", "I-header",
    "B-footer", "I-footer",
)

ModelT = TypeVar("ModelT", bound=BaseModel)


class TokenSpan(BaseModel):
    first_token: int = Field(..., ge=0, description="Reading-order index of the first answer token")
    last_token: int = Field(..., ge=0, description="Reading-order index of the last answer token (inclusive)")

    @model_validator(mode="after")
    def _ordered(self) -> "TokenSpan":
        if self.last_token < self.first_token:
            raise ValueError("last_token precedes first_token")
        return self


class LineSpan(BaseModel):
    first_line: int = Field(..., ge=0)
    last_line: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _ordered(self) -> "LineSpan":
        if self.last_line < self.first_line:
            raise ValueError("last_line precedes first_line")
        return self


class GoldSection(LineSpan):
    type: SectionType


class GoldAttributes(BaseModel):
    expiration_date: Optional[TokenSpan] = None
    governing_law: Optional[TokenSpan] = None
    termination_for_convenience: bool = False
    anti_assignment: bool = False


class LabelsRecord(BaseModel):
    doc_id: str
    line_labels: List[str]
    sections: List[GoldSection]
    attributes: GoldAttributes
    evidence: Dict[str, LineSpan] = Field(default_factory=dict, description="Lines holding the gold evidence per attribute")

    @field_validator("line_labels")
    @classmethod
    def _known_tags(cls, tags: List[str]) -> List[str]:
        for position, tag in enumerate(tags):
            if tag not in SECTION_TAGS:
                raise ValueError(f"unknown section tag {tag!r} at line {position}")
        return tags


class SectionRecord(LineSpan):
    type: SectionType
    clean_text: str


class SectionsOutput(BaseModel):
    doc_id: str
    sections: List[SectionRecord]


class PredictionRecord(BaseModel):
    doc_id: str
    attribute: str
    span_text: Optional[str] = None
    answer: Optional[bool] = None
    confidence: float = Field(..., ge=0.0, le=1.0)
    no_relevant_section: bool = False


class RuleRecord(BaseModel):
    rule_id: str = Field(..., min_length=1)
    attribute: str
    pattern: str
    effect: Dict[str, Any]
    scope: RuleScope = "document"


class CorpusManifestEntry(BaseModel):
    doc: str
    labels: Optional[str] = None


class RunManifest(BaseModel):
    command: str
    config_fingerprint: str
    seed: Optional[int]
    inputs: List[str]
    outputs: List[str]
    toolkit_version: str
    started_at: str
    wall_clock_seconds: float


class ExampleRecord(BaseModel):
    doc_id: str
    attribute: str
    relevant_section_text: str
    correct_answer: str
    prediction: str
    correct: bool


def parse_record(model: Type[ModelT], data: Any, path: Optional[str] = None) -> ModelT:
    """Validate one wire record; the first pydantic error becomes a SchemaError"""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        where = f"{path}:{location}" if path and location else (path or location or None)
        raise SchemaError(first["msg"], path=where)
