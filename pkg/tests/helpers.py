from typing import Any, Dict, List, Sequence, Tuple, Union

from app.ocr_model import Block, Document, Line, Page, Token

PAGE_WIDTH = 612.0
PAGE_HEIGHT = 792.0

# (text, x0, y0) or (text, x0, y0, {"size": 8.0, "bold": True, ...})
LineSpec = Union[Tuple[str, float, float], Tuple[str, float, float, Dict[str, Any]]]


def make_line(text: str, x0: float, y0: float, size: float = 11.0, bold: bool = False, underline: bool = False) -> Line:
    tokens = []
    x = x0
    for word in text.split():
        width = len(word) * size * 0.5
        tokens.append(Token(
            text=word, bbox=(x, y0, x + width, y0 + size),
            bold=bold, italic=False, underline=underline, font_size=size,
        ))
        x += width + size * 0.25
    return Line(bbox=(x0, y0, tokens[-1].bbox[2], y0 + size), tokens=tuple(tokens))


def make_document(pages: Sequence[Sequence[Sequence[LineSpec]]], doc_id: str = "doc_test", block_kind: str = "paragraph") -> Document:
    """pages -> blocks -> line specs"""
    built = []
    for blocks in pages:
        page_blocks = []
        for lines in blocks:
            page_blocks.append(Block(kind=block_kind, lines=tuple(
                make_line(spec[0], spec[1], spec[2], **(spec[3] if len(spec) > 3 else {}))
                for spec in lines
            )))
        built.append(Page(width=PAGE_WIDTH, height=PAGE_HEIGHT, blocks=tuple(page_blocks)))
    return Document(doc_id=doc_id, source_name="test", pages=tuple(built))


def stacked_lines(texts: List[str], x0: float = 72.0, y0: float = 100.0, leading: float = 14.0) -> List[LineSpec]:
    return [(text, x0, y0 + i * leading) for i, text in enumerate(texts)]
