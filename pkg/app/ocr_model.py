"""
OCR document model and its JSON interchange format.

Coordinates are points with the origin at the top-left corner of the page and
y increasing downward. Reading order is page-major, then top edge, then left
edge, then the order lines appear in the input.
"""

import logging

from pathlib import Path
from functools import cached_property
from typing import Dict, List, Literal, NamedTuple, Tuple, Union
from pydantic import BaseModel, ConfigDict, ValidationError

from app.errors import EmptyError, GeometryError, SchemaError

# Configure logging
logger = logging.getLogger(__name__)

BBox = Tuple[float, float, float, float]
BlockKind = Literal["paragraph", "list", "table", "other"]

# Token boxes may poke out of their line box by this much
TOKEN_TOLERANCE_PT = 1.0


class LineRef(NamedTuple):
    page_index: int
    block_index: int
    line_index: int


class TokenRef(NamedTuple):
    line: LineRef
    token_index: int


class Token(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    text: str
    bbox: BBox
    bold: bool
    italic: bool
    underline: bool
    font_size: float


class Line(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    bbox: BBox
    tokens: Tuple[Token, ...]


class Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: BlockKind
    lines: Tuple[Line, ...]


class Page(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    width: float
    height: float
    blocks: Tuple[Block, ...]


class Document(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    doc_id: str
    source_name: str
    pages: Tuple[Page, ...]

    def line(self, ref: LineRef) -> Line:
        return self.pages[ref.page_index].blocks[ref.block_index].lines[ref.line_index]

    @cached_property
    def reading_order(self) -> Tuple[Tuple[LineRef, Line], ...]:
        keyed = []
        counter = 0
        for p, page in enumerate(self.pages):
            for b, block in enumerate(page.blocks):
                for l, line in enumerate(block.lines):
                    keyed.append(((p, line.bbox[1], line.bbox[0], counter), LineRef(p, b, l), line))
                    counter += 1
        keyed.sort(key=lambda item: item[0])
        return tuple((ref, line) for _, ref, line in keyed)

    @cached_property
    def position_of(self) -> Dict[LineRef, int]:
        """Reading-order position of every line"""
        return {ref: position for position, (ref, _) in enumerate(self.reading_order)}

    @cached_property
    def token_offsets(self) -> Tuple[int, ...]:
        """Document token index of the first token of each reading-order line"""
        offsets = []
        total = 0
        for _, line in self.reading_order:
            offsets.append(total)
            total += len(line.tokens)
        return tuple(offsets)

    @property
    def line_count(self) -> int:
        return len(self.reading_order)

    @property
    def token_count(self) -> int:
        if not self.reading_order:
            return 0
        return self.token_offsets[-1] + len(self.reading_order[-1][1].tokens)

    def token_index(self, ref: TokenRef) -> int:
        """Reading-order index of a token within the whole document"""
        return self.token_offsets[self.position_of[ref.line]] + ref.token_index

    def token_stream(self) -> List[TokenRef]:
        """Every token of the document in reading order"""
        return [
            TokenRef(ref, index)
            for ref, line in self.reading_order
            for index in range(len(line.tokens))
        ]

    def token(self, ref: TokenRef) -> Token:
        return self.line(ref.line).tokens[ref.token_index]


def lines_in_reading_order(doc: Document) -> List[Tuple[LineRef, Line]]:
    """Every line exactly once: page order, then top edge, then left edge"""
    return list(doc.reading_order)


def line_text(line: Line) -> str:
    """Token texts joined by single spaces"""
    return " ".join(token.text for token in line.tokens)


def document_text(doc: Document) -> str:
    """Reading-order line texts, one per text line"""
    return "\n".join(line_text(line) for _, line in doc.reading_order)


def _format_loc(loc: Tuple[Union[str, int], ...]) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or "$"


def _check_box(bbox: BBox, page: Page, path: str) -> None:
    x0, y0, x1, y1 = bbox
    if not (x0 < x1 and y0 < y1):
        raise GeometryError(f"Degenerate box {list(bbox)}", path=path)
    if x0 < 0 or y0 < 0 or x1 > page.width or y1 > page.height:
        raise GeometryError(
            f"Box {list(bbox)} outside page [0,{page.width}]x[0,{page.height}]", path=path
        )


def validate_document(doc: Document) -> Document:
    """
    Check every type invariant and report the first violation with its path.
    Nothing is repaired.
    """
    if not doc.pages:
        raise EmptyError("Document has no pages", path="pages")

    for p, page in enumerate(doc.pages):
        page_path = f"pages[{p}]"
        if page.width <= 0 or page.height <= 0:
            raise GeometryError(f"Page size must be positive, got {page.width}x{page.height}", path=page_path)
        if not page.blocks:
            raise EmptyError("Page has no blocks", path=f"{page_path}.blocks")

        for b, block in enumerate(page.blocks):
            block_path = f"{page_path}.blocks[{b}]"
            if not block.lines:
                raise EmptyError("Block has no lines", path=f"{block_path}.lines")

            for l, line in enumerate(block.lines):
                line_path = f"{block_path}.lines[{l}]"
                _check_box(line.bbox, page, f"{line_path}.bbox")
                if not line.tokens:
                    raise EmptyError("Line has no tokens", path=f"{line_path}.tokens")

                lx0, ly0, lx1, ly1 = line.bbox
                for t, token in enumerate(line.tokens):
                    token_path = f"{line_path}.tokens[{t}]"
                    if not token.text or any(ch.isspace() for ch in token.text):
                        raise SchemaError(f"Token text must be non-empty without whitespace: {token.text!r}", path=f"{token_path}.text")
                    if token.font_size <= 0:
                        raise SchemaError(f"font_size must be positive, got {token.font_size}", path=f"{token_path}.font_size")
                    _check_box(token.bbox, page, f"{token_path}.bbox")
                    tx0, ty0, tx1, ty1 = token.bbox
                    if (
                        tx0 < lx0 - TOKEN_TOLERANCE_PT
                        or ty0 < ly0 - TOKEN_TOLERANCE_PT
                        or tx1 > lx1 + TOKEN_TOLERANCE_PT
                        or ty1 > ly1 + TOKEN_TOLERANCE_PT
                    ):
                        raise GeometryError(
                            f"Token box {list(token.bbox)} outside line box {list(line.bbox)}",
                            path=f"{token_path}.bbox",
                        )
    return doc


def parse_document(raw: Union[bytes, str]) -> Document:
    """Parse and validate one document in the interchange format"""
    try:
        doc = Document.model_validate_json(raw, strict=True)
    except ValidationError as e:
        first = e.errors()[0]
        path = _format_loc(tuple(first.get("loc", ())))
        logger.debug(f"❌ Schema violation at {path}: {first['msg']}")
        raise SchemaError(first["msg"], path=path)

    validate_document(doc)
    logger.debug(f"✅ Parsed document {doc.doc_id}: {len(doc.pages)} pages, {doc.line_count} lines")
    return doc


def serialize_document(doc: Document) -> str:
    """Compact interchange-format JSON"""
    return doc.model_dump_json()


def load_document(path: Union[str, Path]) -> Document:
    logger.debug(f"🔍 Loading document from: {path}")
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise SchemaError(f"Cannot read document: {e.strerror}", path=str(path))
    return parse_document(raw)
