"""
Seeded synthetic contracts with full ground truth.

Every document is a pure function of (seed, document index). Lines are laid
out the way a word processor would place them on a 612x792pt page: 72pt
margins, 11pt body text, bold or underlined clause headings, indented list
blocks for sub-clauses, fee tables, and optional page-periodic headers and
footers. Ground truth (line tags, sections, attribute spans) is derived from
the finished Document in reading order, so it always agrees with what the
OCR model reports.
"""

import re
import logging
import numpy as np

from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, TypeVar, Union
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import ConfigError, DuplicateId, EmptyCorpus, SchemaError
from app.storage import ensure_output_directory, read_json, read_jsonl, write_json, write_jsonl, write_text
from app.models import CorpusManifestEntry, GoldAttributes, GoldSection, LabelsRecord, LineSpan, TokenSpan, parse_record
from app.ocr_model import (
    Block, Document, Line, LineRef, Page, Token, TokenRef,
    line_text, load_document, serialize_document, validate_document,
)

# Configure logging
logger = logging.getLogger(__name__)

T = TypeVar("T")

MARGIN = 72.0
BODY_FONT = 11.0
TITLE_FONT = 14.0
MARGIN_FONT = 8.0
LEADING = 3.0
BLOCK_GAP = 7.0
CHAR_EM = 0.5
SPACE_EM = 0.25
WORD_TARGET_SHAPE = 4.0

T4C_YES_PROB = 0.35
ASSIGNMENT_CLAUSE_PROB = 0.85
ANTI_ASSIGNMENT_PROB = 0.7

MANIFEST_NAME = "corpus.jsonl"

# Contract statistics of the 510-document reference corpus
CUAD_REFERENCE = {
    "documents": 510,
    "train_documents": 408,
    "dev_test_documents": 51,
    "avg_characters": 52563,
    "min_characters": 645,
    "max_characters": 338211,
    "avg_words": 9594,
    "min_words": 109,
    "max_words": 103923,
}


class GenConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 7
    doc_count: int = 200
    mean_words_per_doc: int = 9594
    page_width: float = 612.0
    page_height: float = 792.0
    header_prob: float = 0.7
    footer_prob: float = 0.85
    broken_span_prob: float = 0.1
    style_noise: float = 0.02

    @model_validator(mode="after")
    def _check(self) -> "GenConfig":
        for name in ("header_prob", "footer_prob", "broken_span_prob", "style_noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}", path=name)
        if self.doc_count < 1:
            raise ConfigError(f"doc_count must be at least 1, got {self.doc_count}", path="doc_count")
        if self.mean_words_per_doc < 1:
            raise ConfigError(f"mean_words_per_doc must be positive, got {self.mean_words_per_doc}", path="mean_words_per_doc")
        if self.page_width < 4 * MARGIN or self.page_height < 4 * MARGIN:
            raise ConfigError(f"page {self.page_width}x{self.page_height} is too small for {MARGIN}pt margins", path="page_width")
        return self


class GoldLabels(LabelsRecord):
    """Ground truth for one document; indices are reading-order positions"""

    def span(self, attribute: str) -> Optional[TokenSpan]:
        return getattr(self.attributes, attribute)

    def answer(self, attribute: str) -> bool:
        return bool(getattr(self.attributes, attribute))

    def margin_lines(self) -> set:
        return {i for i, tag in enumerate(self.line_labels) if tag.endswith("header") or tag.endswith("footer")}

    def gold_tokens(self, doc: Document, attribute: str) -> List[TokenRef]:
        """Answer tokens in reading order, skipping any header/footer tokens inside the span"""
        span = self.span(attribute)
        if span is None:
            return []
        margin = self.margin_lines()
        stream = doc.token_stream()
        return [
            ref for ref in stream[span.first_token: span.last_token + 1]
            if doc.position_of[ref.line] not in margin
        ]

    def gold_text(self, doc: Document, attribute: str) -> Optional[str]:
        tokens = self.gold_tokens(doc, attribute)
        if not tokens:
            return None
        return " ".join(doc.token(ref).text for ref in tokens)


CorpusEntry = Tuple[Document, Optional[GoldLabels]]


class CorpusSplit(NamedTuple):
    train: List
    dev: List
    test: List


class CorpusStats(BaseModel):
    documents: int
    pages: int
    lines: int
    words_mean: float
    words_min: int
    words_max: int
    chars_mean: float
    chars_min: int
    chars_max: int
    label_distribution: Dict[str, int] = Field(default_factory=dict)
    section_counts: Dict[str, int] = Field(default_factory=dict)
    split_sizes: Dict[str, int] = Field(default_factory=dict)
    reference: Dict[str, int] = Field(default_factory=lambda: dict(CUAD_REFERENCE))


# ---------------------------------------------------------------------------
# Template text
# ---------------------------------------------------------------------------

AGREEMENT_TITLES = [
    "Master Services Agreement", "License Agreement", "Distribution Agreement",
    "Consulting Agreement", "Supply Agreement", "Development Agreement",
    "Reseller Agreement", "Marketing Agreement", "Hosting Agreement",
]

COMPANIES = [
    "Acme Holdings, Inc.", "Birch Analytics LLC", "Crescent Biologics Corp.", "Dunmore Logistics Ltd.",
    "Evergreen Software, Inc.", "Fairhaven Media LLC", "Granite Peak Systems, Inc.", "Harbor Light Capital LP",
    "Ironwood Therapeutics, Inc.", "Juniper Retail Group LLC", "Keystone Energy Partners LP", "Lakeside Data Corp.",
]

PARTY_NAMES = [
    ("Company", "Supplier"), ("Licensor", "Licensee"), ("Client", "Consultant"),
    ("Manufacturer", "Distributor"), ("Customer", "Provider"), ("Company", "Reseller"),
]

ENTITY_KINDS = ["corporation", "limited liability company", "limited partnership"]

GOVERNING_JURISDICTIONS = [
    "State of Massachusetts", "State of New York", "State of California", "State of Ohio",
    "State of Texas", "State of Illinois", "State of Washington", "State of Georgia",
    "State of Colorado", "State of New Jersey", "State of Louisiana", "Commonwealth of Pennsylvania",
    "Commonwealth of Virginia", "Province of Ontario", "England and Wales",
]

INCORPORATION_JURISDICTIONS = [
    "State of Delaware", "State of Nevada", "State of New York", "State of California",
    "State of Texas", "State of Florida", "Province of Ontario",
]

MONTHS = [
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
]

COUNTS = {
    5: "five", 10: "ten", 15: "fifteen", 30: "thirty", 45: "forty-five",
    60: "sixty", 90: "ninety", 120: "one hundred twenty", 180: "one hundred eighty",
}

YEAR_COUNTS = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 7: "seven", 10: "ten"}

GENERIC_SENTENCES = [
    "{A} shall perform the Services in a professional and workmanlike manner consistent with generally accepted industry standards.",
    "All invoices shall be paid by {B} within {n} days after receipt of a correct invoice.",
    "Each party shall maintain complete and accurate records relating to its performance under this Agreement for at least {n} months.",
    "{A} shall provide {B} with written reports describing the status of the Services on a monthly basis.",
    "No failure or delay by either party in exercising any right under this Agreement shall operate as a waiver of that right.",
    "Any amounts not paid when due shall accrue interest at the rate of one percent (1%) per month or the maximum rate permitted by law, whichever is less.",
    "The parties shall cooperate in good faith to resolve any questions regarding the scope of the Deliverables.",
    "{B} shall reimburse {A} for reasonable out-of-pocket expenses incurred in connection with the Services, provided that such expenses are approved in advance.",
    "Each party represents that it has full corporate power and authority to enter into and perform this Agreement.",
    "{A} shall ensure that its personnel comply with the security and safety policies of {B} while on its premises.",
    "The Receiving Party shall use the Confidential Information solely for the purpose of performing its obligations under this Agreement.",
    "Confidential Information does not include information that is or becomes generally available to the public through no fault of the Receiving Party.",
    "Neither party shall be liable for any indirect, incidental, consequential or punitive damages arising out of this Agreement.",
    "The total liability of {A} under this Agreement shall not exceed the fees paid by {B} during the {n} months preceding the claim.",
    "{A} shall indemnify and hold harmless {B} from any third party claims arising from the gross negligence or willful misconduct of {A}.",
    "All notices under this Agreement shall be in writing and delivered by hand, by courier or by certified mail to the addresses set forth above.",
    "If any provision of this Agreement is held invalid, the remaining provisions shall continue in full force and effect.",
    "This Agreement constitutes the entire agreement between the parties and supersedes all prior discussions and understandings.",
    "This Agreement may be executed in counterparts, each of which shall be deemed an original.",
    "No amendment to this Agreement shall be effective unless it is in writing and signed by both parties.",
    "{A} shall maintain commercial general liability insurance with limits of not less than {amount} per occurrence.",
    "Neither party shall be liable for any delay caused by events beyond its reasonable control, including fire, flood, strike or governmental action.",
    "The relationship of the parties is that of independent contractors and nothing herein creates a partnership or joint venture.",
    "{B} shall own all right, title and interest in the Deliverables upon payment in full of the applicable fees.",
    "{A} retains all rights in its pre-existing materials, tools and know-how used in performing the Services.",
    "During the Term and for {n} months thereafter, neither party shall solicit for employment any employee of the other party.",
    "{B} may audit the relevant records of {A} upon {n} days prior written notice, no more than once per calendar year.",
    "Each party shall comply with all applicable export control regulations in connection with its performance of this Agreement.",
    "{A} shall process personal data only on documented instructions from {B} and shall implement appropriate technical and organizational measures.",
    "Neither party shall issue any press release regarding this Agreement without the prior approval of the other party.",
    "The headings in this Agreement are for convenience only and shall not affect its interpretation.",
    "The fees set forth in the applicable Statement of Work are exclusive of all sales, use and similar taxes.",
    "{A} warrants that the Services will conform in all material respects to the specifications for a period of {n} days after delivery.",
    "{B} shall provide {A} with timely access to the information and facilities reasonably required to perform the Services.",
    "Any change to the scope of the Services shall be documented in a written change order signed by both parties.",
    "Price adjustments shall take effect no earlier than {date} and only after written notice to {B}.",
    "The obligations in this Section shall survive any expiration or termination of this Agreement.",
    "{A} shall deliver the initial Deliverables on or before {date}.",
    "Upon request, each party shall return or destroy all Confidential Information of the other party in its possession.",
    "{A} shall promptly notify {B} of any defect in the Deliverables that comes to its attention.",
    "Any dispute concerning an invoice shall be raised in writing within {n} days of the invoice date, and the undisputed portion shall be paid when due.",
    "Title to any equipment supplied by {A} shall remain with {A} at all times.",
]

FILLER_HEADINGS = [
    "Definitions", "Services", "Statements of Work", "Fees", "Payment Terms", "Expenses", "Taxes",
    "Confidentiality", "Intellectual Property", "Warranties", "Indemnification", "Limitation of Liability",
    "Insurance", "Force Majeure", "Independent Contractors", "Non-Solicitation", "Audit Rights",
    "Data Protection", "Publicity", "Records", "Acceptance", "Change Orders", "Personnel", "Deliverables",
    "Representations", "Equipment", "Reporting", "Security",
]

GOVERNING_LAW_HEADINGS = ["Governing Law", "Choice of Law", "Applicable Law"]

GOVERNING_LAW_TEMPLATES = [
    ("This Agreement shall be governed by and construed in accordance with the laws of the ", ", without regard to its conflict of laws principles."),
    ("This Agreement shall be construed and interpreted in accordance with the laws of the ", ", without recourse to any principles of law governing conflicts of law."),
    ("The validity, interpretation and performance of this Agreement shall be governed by the laws of the ", ", excluding its choice of law rules."),
    ("All matters arising out of or relating to this Agreement are governed by the internal laws of the ", ", without giving effect to any choice or conflict of law provision."),
    ("This Agreement and all matters pertaining hereto shall be governed by and construed under the laws of the ", ", and the parties agree that such laws shall apply."),
]

GOVERNING_LAW_EXTRAS = [
    "The United Nations Convention on Contracts for the International Sale of Goods shall not apply to this Agreement.",
    "Each party waives any right to a trial by jury in any action arising out of this Agreement.",
]

VENUE_TEMPLATES = [
    "Any legal action or proceeding arising under this Agreement shall be brought exclusively in the federal or state courts located in the {V}, and the parties consent to personal jurisdiction and venue therein.",
    "The parties irrevocably submit to the exclusive jurisdiction of the courts sitting in the {V} for any dispute arising out of this Agreement.",
]

COMPLIANCE_TEMPLATE = "Each party shall comply with all laws of the {V} applicable to its performance under this Agreement."

TERM_HEADINGS = ["Term", "Term of Agreement", "Term and Renewal"]

# (prefix, phrase kind, suffix)
TERM_TEMPLATES = [
    ("This Agreement shall commence on the Effective Date and shall remain in full force and effect until ", "date", ", unless earlier terminated in accordance with its terms."),
    ("The term of this Agreement shall begin on the Effective Date and continue for a period of ", "period", " unless terminated earlier as provided herein."),
    ("This Agreement shall have an initial term of ", "duration", " commencing on the Effective Date."),
    ("Unless sooner terminated, this Agreement will expire on ", "date", "."),
    ("The term of this Agreement is for a period of ", "period", ", unless terminated earlier in accordance with the termination provisions of this Agreement."),
]

TERM_DISTRACTORS = [
    "Thereafter, this Agreement shall automatically renew for successive one (1) year periods unless either party gives written notice of non-renewal at least {n} days prior to the end of the then-current term.",
    "Pricing for any renewal term shall be agreed by the parties no later than {date}.",
    "Each renewal term shall be subject to the terms and conditions of this Agreement then in effect.",
]

TERMINATION_HEADINGS = ["Termination", "Termination Rights", "Term and Termination"]

BREACH_SENTENCES = [
    "Either party may terminate this Agreement upon written notice if the other party materially breaches this Agreement and fails to cure such breach within {n} days after receiving notice thereof.",
    "This Agreement may be terminated by either party with cause upon {n} days written notice.",
]

INSOLVENCY_SENTENCES = [
    "{A} may terminate this Agreement immediately upon written notice if {B} becomes insolvent or makes an assignment for the benefit of creditors.",
    "Upon termination for any reason, {B} shall pay all amounts owed to {A} through the effective date of termination.",
]

CONVENIENCE_YES = [
    "Either party may terminate this Agreement at any time, with or without cause, upon {n} days' prior written notice to the other party.",
    "{A} may terminate this Agreement for convenience upon {n} days written notice to {B}.",
    "{A} may terminate at will upon notice to {B}.",
    "Either party may terminate this Agreement for any reason or no reason by giving the other party not less than {n} days prior written notice.",
    "{A} shall have the right to terminate this Agreement at any time after the Effective Date upon not less than {n} days' prior written notice to {B}.",
]

CONVENIENCE_NO = [
    "This Agreement may not be terminated by either party except as expressly provided in this Section.",
    "No party shall have the right to terminate this Agreement without cause.",
    "Termination of this Agreement shall not release {B} from paying all amounts owed to {A}.",
]

ASSIGNMENT_HEADINGS = ["Assignment", "Assignment; Successors", "Successors and Assigns"]

ANTI_ASSIGNMENT_YES = [
    "Neither Party shall assign this Agreement or the obligations contained herein without the express written consent of the other Party.",
    "{B} may not assign or transfer any of its rights or obligations under this Agreement without the prior written consent of {A}, which consent shall not be unreasonably withheld.",
    "This Agreement may not be assigned by either party, whether by operation of law or otherwise, without the prior written approval of the other party.",
    "Neither this Agreement nor any rights or obligations hereunder may be assigned, pledged or transferred by either party without the express prior written approval of the other party.",
]

ANTI_ASSIGNMENT_NO = [
    "Either party may assign this Agreement without the consent of the other party, provided that the assignee assumes all obligations hereunder in writing.",
    "This Agreement may be freely assigned by either party to any affiliate or successor in interest.",
    "{A} may assign this Agreement in whole or in part without notice to or consent of {B}.",
]

ASSIGNMENT_EXTRAS = [
    "Any attempted assignment in violation of this Section shall be null and void.",
]

SUCCESSORS_SENTENCE = "This Agreement shall be binding upon and inure to the benefit of the parties and their respective successors and permitted assigns."

GENERAL_PROVISIONS = [
    ("Notices", "All notices under this Agreement shall be in writing and delivered by hand, by courier or by certified mail to the addresses set forth above."),
    ("Severability", "If any provision of this Agreement is held invalid, the remaining provisions shall continue in full force and effect."),
    ("Entire Agreement", "This Agreement constitutes the entire agreement between the parties and supersedes all prior discussions and understandings."),
    ("Counterparts", "This Agreement may be executed in counterparts, each of which shall be deemed an original."),
    ("Waiver", "No failure or delay by either party in exercising any right under this Agreement shall operate as a waiver of that right."),
]

HEADER_STYLES = ["docusign", "confidential", "title", "docusign+confidential", "execution"]
FOOTER_STYLES = ["number", "page_of", "dashed", "code+number"]


# ---------------------------------------------------------------------------
# Layout plumbing
# ---------------------------------------------------------------------------

@dataclass
class _Word:
    text: str
    bold: bool = False
    italic: bool = False
    underline: bool = False
    mark: Optional[str] = None
    break_after: bool = False


@dataclass
class _LineSpec:
    words: List[_Word]
    font_size: float
    x0: float
    align: str
    block_id: int
    kind: str
    section_id: Optional[int]
    page_break_after: bool = False


@dataclass
class _Row:
    cells: List[_LineSpec]

    @property
    def height(self) -> float:
        return max(cell.font_size for cell in self.cells) + LEADING

    @property
    def block_id(self) -> int:
        return self.cells[0].block_id

    @property
    def section_id(self) -> Optional[int]:
        return self.cells[0].section_id

    @property
    def ends_sentence(self) -> bool:
        last = self.cells[-1].words[-1].text
        return last.endswith(".") or last.endswith(";")


@dataclass
class _Clause:
    heading: str
    paragraphs: List[List[_Word]] = field(default_factory=list)
    subclauses: List[Tuple[Optional[str], List[_Word]]] = field(default_factory=list)
    table: Optional[List[List[str]]] = None
    attributes: List[str] = field(default_factory=list)
    sub_attributes: Dict[int, List[str]] = field(default_factory=dict)

    @property
    def word_count(self) -> int:
        heading = len(self.heading.split()) + 1
        body = sum(len(p) for p in self.paragraphs) + sum(len(w) + 1 for _, w in self.subclauses)
        table = sum(len(row) for row in self.table) if self.table else 0
        return heading + body + table


def _compose(*segments: Union[str, Tuple[str, Optional[str]]]) -> List[_Word]:
    """Split text into words; a word carries the mark of any marked character in it"""
    parts: List[str] = []
    marks: List[Optional[str]] = []
    for segment in segments:
        text, mark = (segment, None) if isinstance(segment, str) else segment
        parts.append(text)
        marks.extend([mark] * len(text))
    full = "".join(parts)
    words = []
    for match in re.finditer(r"\S+", full):
        mark = next((marks[i] for i in range(match.start(), match.end()) if marks[i]), None)
        words.append(_Word(match.group(), mark=mark))
    return words


def _text_width(text: str, font_size: float) -> float:
    return len(text) * font_size * CHAR_EM


def _wrap(words: List[_Word], font_size: float, width: float) -> List[Tuple[List[_Word], bool]]:
    """Greedy wrap; the flag marks a line that must end its page"""
    lines: List[Tuple[List[_Word], bool]] = []
    current: List[_Word] = []
    used = 0.0
    space = font_size * SPACE_EM
    for word in words:
        w = _text_width(word.text, font_size)
        if current and used + space + w > width:
            lines.append((current, False))
            current, used = [], 0.0
        used = used + space + w if current else w
        current.append(word)
        if word.break_after:
            lines.append((current, True))
            current, used = [], 0.0
    if current:
        lines.append((current, False))
    return lines


class _ContractWriter:
    """Builds one contract; all randomness comes from the document's own stream"""

    def __init__(self, config: GenConfig, index: int):
        self.config = config
        self.index = index
        self.rng = np.random.default_rng([config.seed, index])
        self.rows: List[_Row] = []
        self.section_types: Dict[int, str] = {}
        self.evidence_sections: Dict[str, int] = {}
        self.next_block = 0
        self.right = config.page_width - MARGIN

        rng = self.rng
        self.title = self._pick(AGREEMENT_TITLES)
        first, second = rng.choice(len(COMPANIES), size=2, replace=False)
        self.company_a, self.company_b = COMPANIES[int(first)], COMPANIES[int(second)]
        self.party_a, self.party_b = self._pick(PARTY_NAMES)
        self.jurisdiction = self._pick(GOVERNING_JURISDICTIONS)
        self.venue = self._pick([j for j in GOVERNING_JURISDICTIONS if j != self.jurisdiction])
        self.t4c = bool(rng.random() < T4C_YES_PROB)
        self.has_assignment = bool(rng.random() < ASSIGNMENT_CLAUSE_PROB)
        self.anti_assignment = self.has_assignment and bool(rng.random() < ANTI_ASSIGNMENT_PROB)
        self.broken_span = bool(rng.random() < config.broken_span_prob)
        self.has_header = bool(rng.random() < config.header_prob)
        self.has_footer = self.broken_span or bool(rng.random() < config.footer_prob)

        self.numbering = self._pick(["decimal", "decimal", "decimal", "section", "section", "article", "none"])
        self.inline_headings = self.numbering != "article" and bool(rng.random() < 0.6)
        self.sub_marker = "decimal" if self.numbering == "article" else self._pick(["letter", "letter", "decimal"])
        self.heading_bold = bool(rng.random() < 0.85)
        self.heading_underline = bool(rng.random() < 0.5)
        self.caps_headings = bool(rng.random() < 0.3)
        self.header_style = self._pick(HEADER_STYLES)
        self.footer_style = self._pick(FOOTER_STYLES)
        self.footer_align = self._pick(["center", "right"])
        self.doc_code = f"{self.party_a[:3].upper()}-{self.index:04d}-{int(rng.integers(2015, 2024))} v{int(rng.integers(1, 6))}"
        self.envelope = "-".join(
            "".join(self._pick("0123456789ABCDEF") for _ in range(n)) for n in (8, 4, 4, 4, 12)
        )

    # -- randomness helpers -------------------------------------------------

    def _pick(self, options: Sequence[T]) -> T:
        return options[int(self.rng.integers(len(options)))]

    def _count(self) -> str:
        n = self._pick(list(COUNTS))
        return f"{COUNTS[n]} ({n})"

    def _date(self) -> str:
        return f"{self._pick(MONTHS)} {int(self.rng.integers(1, 29))}, {int(self.rng.integers(2018, 2031))}"

    def _amount(self) -> str:
        return f"${int(self.rng.integers(1, 50)) * 50000:,}"

    def _slots(self) -> Dict[str, str]:
        return {
            "A": self.party_a, "B": self.party_b, "n": self._count(),
            "date": self._date(), "amount": self._amount(),
        }

    def _sentence(self, template: str, **extra: str) -> List[_Word]:
        return _compose(template.format(**{**self._slots(), **extra}))

    def _expiration_phrase(self, kind: str) -> str:
        if kind == "date":
            return self._date()
        years = self._pick(list(YEAR_COUNTS))
        unit = "year" if years == 1 else "years"
        if kind == "period":
            return f"{YEAR_COUNTS[years]} ({years}) {unit} from the Effective Date"
        return f"{YEAR_COUNTS[years]} ({years}) {unit}"

    def _filler(self, low: int = 2, high: int = 6) -> List[_Word]:
        count = int(self.rng.integers(low, high))
        picks = self.rng.choice(len(GENERIC_SENTENCES), size=count, replace=False)
        words: List[_Word] = []
        for i in picks:
            words.extend(self._sentence(GENERIC_SENTENCES[int(i)]))
        return words

    # -- clause content -----------------------------------------------------

    def _filler_clause(self) -> _Clause:
        clause = _Clause(heading=self._pick(FILLER_HEADINGS))
        for _ in range(int(self.rng.integers(1, 3))):
            clause.paragraphs.append(self._filler())
        if self.rng.random() < 0.45:
            for _ in range(int(self.rng.integers(2, 6))):
                clause.subclauses.append((None, self._filler(1, 4)))
        if clause.heading in ("Fees", "Payment Terms") and self.rng.random() < 0.7:
            clause.table = self._fee_table()
        return clause

    def _fee_table(self) -> List[List[str]]:
        rows = [["Tier", "Units", "Fee"]]
        for tier in range(1, int(self.rng.integers(3, 7)) + 1):
            units = int(self.rng.integers(1, 40)) * 250
            rows.append([str(tier), f"{units:,}", f"${units * int(self.rng.integers(2, 9)):,}"])
        return rows

    def _governing_law_words(self) -> List[_Word]:
        prefix, suffix = self._pick(GOVERNING_LAW_TEMPLATES)
        words = _compose(prefix, (self.jurisdiction, "governing_law"), suffix)
        if self.broken_span:
            marked = [w for w in words if w.mark == "governing_law"]
            split = next(w for w in marked if w.text in ("of", "and"))
            split.break_after = True
        if self.rng.random() < 0.5:
            words.extend(_compose(self._pick(GOVERNING_LAW_EXTRAS)))
        return words

    def _governing_law_clause(self) -> _Clause:
        return _Clause(
            heading=self._pick(GOVERNING_LAW_HEADINGS),
            paragraphs=[self._governing_law_words()],
            attributes=["governing_law"],
        )

    def _general_provisions_clause(self) -> _Clause:
        clause = _Clause(heading=self._pick(["General Provisions", "Miscellaneous"]))
        picks = self.rng.choice(len(GENERAL_PROVISIONS), size=int(self.rng.integers(2, 5)), replace=False)
        for i in picks:
            heading, text = GENERAL_PROVISIONS[int(i)]
            clause.subclauses.append((heading, _compose(text)))
        slot = int(self.rng.integers(0, len(clause.subclauses) + 1))
        clause.subclauses.insert(slot, (self._pick(GOVERNING_LAW_HEADINGS), self._governing_law_words()))
        clause.sub_attributes[slot] = ["governing_law"]
        return clause

    def _term_clause(self) -> _Clause:
        prefix, kind, suffix = self._pick(TERM_TEMPLATES)
        words = _compose(prefix, (self._expiration_phrase(kind), "expiration_date"), suffix)
        for template in TERM_DISTRACTORS:
            if self.rng.random() < 0.5:
                words.extend(self._sentence(template))
        return _Clause(heading=self._pick(TERM_HEADINGS), paragraphs=[words], attributes=["expiration_date"])

    def _termination_clause(self) -> _Clause:
        clause = _Clause(heading=self._pick(TERMINATION_HEADINGS))
        decisive = self._sentence(self._pick(CONVENIENCE_YES if self.t4c else CONVENIENCE_NO))
        pieces = [self._sentence(self._pick(BREACH_SENTENCES)), decisive]
        if self.rng.random() < 0.5:
            pieces.append(self._sentence(self._pick(INSOLVENCY_SENTENCES)))
        if self.rng.random() < 0.5:
            # one sub-clause per termination right
            order = [int(i) for i in self.rng.permutation(len(pieces))]
            for slot, i in enumerate(order):
                clause.subclauses.append((None, pieces[i]))
                if i == 1:
                    clause.sub_attributes[slot] = ["termination_for_convenience"]
        else:
            clause.paragraphs.append([w for piece in pieces for w in piece])
            clause.attributes.append("termination_for_convenience")
        return clause

    def _assignment_clause(self) -> _Clause:
        words = self._sentence(self._pick(ANTI_ASSIGNMENT_YES if self.anti_assignment else ANTI_ASSIGNMENT_NO))
        if self.anti_assignment and self.rng.random() < 0.5:
            words.extend(_compose(self._pick(ASSIGNMENT_EXTRAS)))
        successors = _compose(("Subject to the foregoing, " if self.anti_assignment else "") + SUCCESSORS_SENTENCE)
        words = successors + words if self.rng.random() < 0.3 else words + successors
        return _Clause(heading=self._pick(ASSIGNMENT_HEADINGS), paragraphs=[words], attributes=["anti_assignment"])

    def _dispute_clause(self) -> _Clause:
        words = _compose("The parties shall first attempt to resolve any dispute through good faith negotiations between senior executives.")
        words.extend(self._sentence(self._pick(VENUE_TEMPLATES), V=self.venue))
        return _Clause(heading="Dispute Resolution", paragraphs=[words])

    def _compliance_clause(self) -> _Clause:
        words = self._sentence(COMPLIANCE_TEMPLATE, V=self._pick(INCORPORATION_JURISDICTIONS))
        words.extend(self._filler(1, 3))
        return _Clause(heading="Compliance with Laws", paragraphs=[words])

    def _plan(self, front_words: int) -> List[_Clause]:
        scale = self.config.mean_words_per_doc / WORD_TARGET_SHAPE
        target = float(self.rng.gamma(WORD_TARGET_SHAPE, scale))

        clauses = [self._term_clause(), self._termination_clause()]
        if self.has_assignment:
            clauses.append(self._assignment_clause())
        if self.rng.random() < 0.7:
            clauses.append(self._dispute_clause())
        if self.rng.random() < 0.4:
            clauses.append(self._compliance_clause())
        law_in_general = bool(self.rng.random() < 0.3)
        if not law_in_general:
            clauses.append(self._governing_law_clause())

        fillers: List[_Clause] = []
        total = front_words + sum(c.word_count for c in clauses)
        while total < target:
            clause = self._filler_clause()
            fillers.append(clause)
            total += clause.word_count

        # required clauses land at seeded positions among the fillers
        for clause in clauses:
            fillers.insert(int(self.rng.integers(0, len(fillers) + 1)), clause)
        if law_in_general:
            fillers.append(self._general_provisions_clause())
        return fillers

    # -- rows ---------------------------------------------------------------

    def _new_section(self, section_type: str) -> int:
        section_id = len(self.section_types)
        self.section_types[section_id] = section_type
        return section_id

    def _block(self) -> int:
        self.next_block += 1
        return self.next_block

    def _styled(self, text: str, bold: bool, underline: bool = False) -> List[_Word]:
        return [_Word(word, bold=bold, underline=underline) for word in text.split()]

    def _add_paragraph(
        self, words: List[_Word], kind: str, section_id: Optional[int],
        indent: float = 0.0, font_size: float = BODY_FONT, align: str = "left", block_id: Optional[int] = None,
    ) -> None:
        block = block_id if block_id is not None else self._block()
        x0 = MARGIN + indent
        for line_words, page_break in _wrap(words, font_size, self.right - x0):
            spec = _LineSpec(line_words, font_size, x0, align, block, kind, section_id, page_break)
            self.rows.append(_Row([spec]))

    def _heading_words(self, number: str, heading: str, inline: bool) -> List[_Word]:
        text = heading.upper() if self.caps_headings else heading
        if inline:
            text += "."
        words = self._styled(number, self.heading_bold, self.heading_underline) if number else []
        return words + self._styled(text, self.heading_bold, self.heading_underline)

    def _render_clause(self, number: int, clause: _Clause) -> None:
        section_id = self._new_section("clause")
        for attribute in clause.attributes:
            self.evidence_sections[attribute] = section_id

        label = {"decimal": f"{number}.", "section": f"Section {number}.", "article": f"ARTICLE {number}", "none": ""}[self.numbering]
        paragraphs = [list(p) for p in clause.paragraphs]
        if self.numbering == "article":
            block = self._block()
            self._add_paragraph(self._styled(label, True), "paragraph", section_id, align="center", block_id=block)
            self._add_paragraph(self._styled(clause.heading.upper(), True), "paragraph", section_id, align="center", block_id=block)
        elif self.inline_headings and paragraphs:
            paragraphs[0] = self._heading_words(label, clause.heading, True) + paragraphs[0]
        else:
            self._add_paragraph(self._heading_words(label, clause.heading, False), "paragraph", section_id)
        for words in paragraphs:
            self._add_paragraph(words, "paragraph", section_id)

        if clause.subclauses:
            block = self._block()
            indent = 36.0 if self.sub_marker == "letter" else 18.0
            for i, (heading, words) in enumerate(clause.subclauses):
                sub_id = self._new_section("subclause")
                for attribute in clause.sub_attributes.get(i, []):
                    self.evidence_sections[attribute] = sub_id
                marker = f"({chr(ord('a') + i % 26)})" if self.sub_marker == "letter" else f"{number}.{i + 1}"
                lead = [_Word(marker)]
                if heading:
                    lead += self._styled(heading + ".", self.heading_bold, self.heading_underline)
                self._add_paragraph(lead + words, "list", sub_id, indent=indent, block_id=block)

        if clause.table:
            block = self._block()
            columns = [MARGIN + 36.0, MARGIN + 180.0, MARGIN + 324.0]
            for r, row in enumerate(clause.table):
                cells = [
                    _LineSpec(self._styled(cell, r == 0), BODY_FONT, x, "left", block, "table", None)
                    for cell, x in zip(row, columns)
                ]
                self.rows.append(_Row(cells))

    def build_rows(self) -> None:
        title = self._styled(self.title.upper(), True)
        a_home = self._pick(INCORPORATION_JURISDICTIONS)
        b_home = self._pick(INCORPORATION_JURISDICTIONS)
        preamble = _compose(
            f'This {self.title} (the "Agreement") is entered into as of {self._date()} (the "Effective Date") by and between '
            f'{self.company_a}, a {self._pick(ENTITY_KINDS)} organized under the laws of the {a_home} ("{self.party_a}"), and '
            f'{self.company_b}, a {self._pick(ENTITY_KINDS)} organized under the laws of the {b_home} ("{self.party_b}").'
        )
        recital = _compose("NOW, THEREFORE, in consideration of the mutual covenants contained herein, the parties agree as follows:")
        closing = _compose(
            "IN WITNESS WHEREOF, the parties have caused this Agreement to be executed by their duly authorized representatives as of the Effective Date."
        )
        front = len(title) + len(preamble) + len(recital) + len(closing) + 12

        self._add_paragraph(title, "paragraph", None, font_size=TITLE_FONT, align="center")
        self._add_paragraph(preamble, "paragraph", None)
        self._add_paragraph(recital, "paragraph", None)
        for number, clause in enumerate(self._plan(front), start=1):
            self._render_clause(number, clause)
        self._add_paragraph(closing, "paragraph", None)

        block = self._block()
        half = self.config.page_width / 2
        for left, right in [(self.company_a, self.company_b), ("By: ____________", "By: ____________"), ("Name:", "Name:"), ("Title:", "Title:")]:
            self.rows.append(_Row([
                _LineSpec(self._styled(left, False), BODY_FONT, MARGIN, "left", block, "other", None),
                _LineSpec(self._styled(right, False), BODY_FONT, half, "left", block, "other", None),
            ]))

    # -- pagination ---------------------------------------------------------

    def paginate(self) -> List[List[_Row]]:
        """
        Fill pages top to bottom. A page never breaks inside a section right
        after a line that ends a sentence, so a section that straddles a page
        always continues from an unfinished sentence. When every row on the
        page ends a sentence inside one section, the rows after the break
        start a new section of the same type instead.
        """
        capacity = self.config.page_height - 2 * MARGIN
        pages: List[List[_Row]] = []
        i, n = 0, len(self.rows)
        while i < n:
            start, used = i, 0.0
            forced = False
            while i < n:
                row = self.rows[i]
                gap = BLOCK_GAP if i > start and row.block_id != self.rows[i - 1].block_id else 0.0
                if i > start and used + gap + row.height > capacity:
                    break
                used += gap + row.height
                i += 1
                if any(cell.page_break_after for cell in row.cells):
                    forced = True
                    break
            if not forced and i < n:
                j = i
                while j > start and self._breaks_after_sentence(j):
                    j -= 1
                if j > start:
                    i = j
                else:
                    self._restart_section(i)
            pages.append(self.rows[start:i])
        return pages

    def _breaks_after_sentence(self, i: int) -> bool:
        """True when a page break before row i would split a section after a finished sentence"""
        before, after = self.rows[i - 1], self.rows[i]
        return before.section_id is not None and before.section_id == after.section_id and before.ends_sentence

    def _restart_section(self, i: int) -> None:
        old = self.rows[i].section_id
        section_id = self._new_section(self.section_types[old])
        for row in self.rows[i:]:
            if row.section_id != old:
                break
            for cell in row.cells:
                cell.section_id = section_id

    # -- margins ------------------------------------------------------------

    def _header_lines(self) -> List[Tuple[str, str, float]]:
        style = self.header_style
        if style == "docusign":
            return [(f"DocuSign Envelope ID: {self.envelope}", "left", 30.0)]
        if style == "confidential":
            return [("CONFIDENTIAL", "right", 30.0)]
        if style == "title":
            return [(f"{self.party_a} - {self.title}", "center", 30.0)]
        if style == "execution":
            return [("Execution Version", "right", 30.0)]
        return [(f"DocuSign Envelope ID: {self.envelope}", "left", 26.0), ("CONFIDENTIAL", "right", 38.0)]

    def _footer_lines(self, page: int, total: int) -> List[Tuple[str, str, float]]:
        bottom = self.config.page_height - 44.0
        style = self.footer_style
        if style == "number":
            return [(str(page), "center", bottom)]
        if style == "page_of":
            return [(f"Page {page} of {total}", self.footer_align, bottom)]
        if style == "dashed":
            return [(f"- {page} -", "center", bottom)]
        return [(self.doc_code, "left", bottom - 6.0), (str(page), "center", bottom + 6.0)]

    # -- document -----------------------------------------------------------

    def _line(self, spec: _LineSpec, y0: float) -> Line:
        fs = spec.font_size
        space = fs * SPACE_EM
        width = sum(_text_width(w.text, fs) for w in spec.words) + space * (len(spec.words) - 1)
        if spec.align == "center":
            x = (self.config.page_width - width) / 2
        elif spec.align == "right":
            x = self.right - width
        else:
            x = spec.x0
        noise = self.config.style_noise
        tokens = []
        for word in spec.words:
            w = _text_width(word.text, fs)
            flips = self.rng.random(2) < noise if noise > 0 else (False, False)
            tokens.append(Token(
                text=word.text,
                bbox=(round(x, 2), round(y0, 2), round(x + w, 2), round(y0 + fs, 2)),
                bold=word.bold != bool(flips[0]),
                italic=word.italic,
                underline=word.underline != bool(flips[1]),
                font_size=fs,
            ))
            x += w + space
        bbox = (tokens[0].bbox[0], tokens[0].bbox[1], tokens[-1].bbox[2], tokens[-1].bbox[3])
        return Line(bbox=bbox, tokens=tuple(tokens))

    def build(self) -> Tuple[Document, GoldLabels]:
        self.build_rows()
        row_pages = self.paginate()
        total = len(row_pages)

        pages: List[Page] = []
        line_sections: Dict[LineRef, int] = {}
        token_marks: Dict[TokenRef, str] = {}

        for p, rows in enumerate(row_pages):
            block_order: List[int] = []
            block_kind: Dict[int, str] = {}
            block_lines: Dict[int, List[Tuple[Line, _LineSpec]]] = {}
            y = MARGIN
            for r, row in enumerate(rows):
                if r > 0 and row.block_id != rows[r - 1].block_id:
                    y += BLOCK_GAP
                for spec in row.cells:
                    if spec.block_id not in block_lines:
                        block_order.append(spec.block_id)
                        block_kind[spec.block_id] = spec.kind
                        block_lines[spec.block_id] = []
                    block_lines[spec.block_id].append((self._line(spec, y), spec))
                y += row.height

            blocks: List[Block] = []
            if self.has_header:
                blocks.append(self._margin_block("header", self._header_lines(), p, len(blocks), line_sections))
            for block_id in block_order:
                b = len(blocks)
                lines = []
                for l, (line, spec) in enumerate(block_lines[block_id]):
                    ref = LineRef(p, b, l)
                    if spec.section_id is not None:
                        line_sections[ref] = spec.section_id
                    for t, word in enumerate(spec.words):
                        if word.mark:
                            token_marks[TokenRef(ref, t)] = word.mark
                    lines.append(line)
                blocks.append(Block(kind=block_kind[block_id], lines=tuple(lines)))
            if self.has_footer:
                blocks.append(self._margin_block("footer", self._footer_lines(p + 1, total), p, len(blocks), line_sections))

            pages.append(Page(width=self.config.page_width, height=self.config.page_height, blocks=tuple(blocks)))

        doc = Document(doc_id=f"doc_{self.index:03d}", source_name=f"synthetic/{self.title}", pages=tuple(pages))
        validate_document(doc)
        return doc, self._labels(doc, line_sections, token_marks)

    def _margin_block(
        self, kind: str, specs: List[Tuple[str, str, float]], page: int, block_index: int,
        line_sections: Dict[LineRef, int],
    ) -> Block:
        section_id = self._new_section(kind)
        lines = []
        for l, (text, align, y0) in enumerate(specs):
            spec = _LineSpec(self._styled(text, False), MARGIN_FONT, MARGIN, align, -1, "other", section_id)
            lines.append(self._line(spec, y0))
            line_sections[LineRef(page, block_index, l)] = section_id
        return Block(kind="other", lines=tuple(lines))

    def _labels(self, doc: Document, line_sections: Dict[LineRef, int], token_marks: Dict[TokenRef, str]) -> GoldLabels:
        tags: List[str] = []
        spans: Dict[int, List[int]] = {}
        for position, (ref, _) in enumerate(doc.reading_order):
            section_id = line_sections.get(ref)
            if section_id is None:
                tags.append("O")
                continue
            kind = self.section_types[section_id]
            tags.append(("I-" if section_id in spans else "B-") + kind)
            spans.setdefault(section_id, []).append(position)

        sections = sorted(
            (GoldSection(type=self.section_types[sid], first_line=lines[0], last_line=lines[-1]) for sid, lines in spans.items()),
            key=lambda s: (s.first_line, s.last_line),
        )

        marked: Dict[str, List[int]] = {}
        for ref, attribute in token_marks.items():
            marked.setdefault(attribute, []).append(doc.token_index(ref))
        attributes = GoldAttributes(
            expiration_date=TokenSpan(first_token=min(marked["expiration_date"]), last_token=max(marked["expiration_date"])),
            governing_law=TokenSpan(first_token=min(marked["governing_law"]), last_token=max(marked["governing_law"])),
            termination_for_convenience=self.t4c,
            anti_assignment=self.anti_assignment,
        )
        evidence = {
            attribute: LineSpan(first_line=spans[sid][0], last_line=spans[sid][-1])
            for attribute, sid in sorted(self.evidence_sections.items())
        }
        return GoldLabels(doc_id=doc.doc_id, line_labels=tags, sections=sections, attributes=attributes, evidence=evidence)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def generate_document(config: GenConfig, index: int) -> CorpusEntry:
    """One contract from the substream (seed, index)"""
    return _ContractWriter(config, index).build()


def generate_corpus(config: GenConfig) -> List[CorpusEntry]:
    logger.info(f"🔧 Generating {config.doc_count} contracts (seed={config.seed}, mean words={config.mean_words_per_doc})")
    corpus = [generate_document(config, i) for i in range(config.doc_count)]
    logger.info(f"✅ Generated {len(corpus)} contracts")
    return corpus


def document_chars(doc: Document) -> int:
    return sum(len(line_text(line)) for _, line in doc.reading_order)


def split_corpus(items: Sequence[T], seed: int) -> CorpusSplit:
    """Seeded 80/10/10 split by document; each part keeps corpus order"""
    n = len(items)
    n_dev = int(round(0.1 * n))
    n_test = int(round(0.1 * n))
    if n >= 3:
        n_dev, n_test = max(1, n_dev), max(1, n_test)
    order = np.random.default_rng(seed).permutation(n)
    train_idx = sorted(int(i) for i in order[: n - n_dev - n_test])
    dev_idx = sorted(int(i) for i in order[n - n_dev - n_test: n - n_test])
    test_idx = sorted(int(i) for i in order[n - n_test:])
    return CorpusSplit(
        train=[items[i] for i in train_idx],
        dev=[items[i] for i in dev_idx],
        test=[items[i] for i in test_idx],
    )


def corpus_stats(corpus: Sequence[CorpusEntry], seed: Optional[int] = None) -> CorpusStats:
    """Exact counts over the corpus; word count is token count"""
    if not corpus:
        raise EmptyCorpus("corpus has no documents")

    words = [doc.token_count for doc, _ in corpus]
    chars = [document_chars(doc) for doc, _ in corpus]
    labels: Dict[str, int] = {}
    sections: Dict[str, int] = {}
    for _, gold in corpus:
        if gold is None:
            continue
        for tag in gold.line_labels:
            labels[tag] = labels.get(tag, 0) + 1
        for section in gold.sections:
            sections[section.type] = sections.get(section.type, 0) + 1

    split = split_corpus(list(range(len(corpus))), seed if seed is not None else 0)
    stats = CorpusStats(
        documents=len(corpus),
        pages=sum(len(doc.pages) for doc, _ in corpus),
        lines=sum(doc.line_count for doc, _ in corpus),
        words_mean=float(np.mean(words)),
        words_min=int(min(words)),
        words_max=int(max(words)),
        chars_mean=float(np.mean(chars)),
        chars_min=int(min(chars)),
        chars_max=int(max(chars)),
        label_distribution=dict(sorted(labels.items())),
        section_counts=dict(sorted(sections.items())),
        split_sizes={"train": len(split.train), "dev": len(split.dev), "test": len(split.test)},
    )
    logger.info(f"📊 Corpus: {stats.documents} docs, words mean={stats.words_mean:.1f} min={stats.words_min} max={stats.words_max}")
    return stats


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------

def write_corpus(corpus: Sequence[CorpusEntry], out_dir: Union[str, Path]) -> Path:
    """Documents, labels and a corpus.jsonl manifest; returns the manifest path"""
    directory = ensure_output_directory(out_dir)
    records = []
    for doc, gold in corpus:
        doc_name = f"{doc.doc_id}.json"
        write_text(directory / doc_name, serialize_document(doc) + "\n")
        labels_name = None
        if gold is not None:
            labels_name = f"{doc.doc_id}.labels.json"
            write_json(directory / labels_name, gold.model_dump(mode="json"))
        records.append(CorpusManifestEntry(doc=doc_name, labels=labels_name).model_dump())
    manifest = directory / MANIFEST_NAME
    write_jsonl(manifest, records)
    logger.info(f"💾 Wrote {len(records)} documents to {directory}")
    return manifest


def resolve_manifest(path: Union[str, Path]) -> Tuple[Path, List[CorpusManifestEntry]]:
    """A corpus directory or its manifest file -> (base directory, entries)"""
    target = Path(path)
    manifest = target / MANIFEST_NAME if target.is_dir() else target
    if not manifest.exists():
        raise SchemaError("corpus manifest not found", path=str(manifest))
    entries = [
        parse_record(CorpusManifestEntry, record, path=f"{manifest}:{i + 1}")
        for i, record in enumerate(read_jsonl(manifest))
    ]
    return manifest.parent, entries


def load_corpus_entry(base: Path, entry: CorpusManifestEntry) -> CorpusEntry:
    doc = load_document(base / entry.doc)
    if entry.labels is None:
        return doc, None
    labels_path = base / entry.labels
    gold = parse_record(GoldLabels, read_json(labels_path), path=str(labels_path))
    if len(gold.line_labels) != doc.line_count:
        raise SchemaError(
            f"{len(gold.line_labels)} line labels for a document with {doc.line_count} lines",
            path=f"{labels_path}:line_labels",
        )
    if gold.doc_id != doc.doc_id:
        raise SchemaError(f"labels are for {gold.doc_id!r}, document is {doc.doc_id!r}", path=f"{labels_path}:doc_id")
    return doc, gold


def check_unique_ids(corpus: Sequence[CorpusEntry]) -> None:
    seen = set()
    for doc, _ in corpus:
        if doc.doc_id in seen:
            raise DuplicateId(f"doc_id {doc.doc_id!r} appears more than once in the corpus")
        seen.add(doc.doc_id)


def load_corpus(path: Union[str, Path]) -> List[CorpusEntry]:
    base, entries = resolve_manifest(path)
    logger.debug(f"🔍 Loading {len(entries)} documents from {base}")
    corpus = [load_corpus_entry(base, entry) for entry in entries]
    check_unique_ids(corpus)
    return corpus
