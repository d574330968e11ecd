"""Text format for structure equations.

    # comment
    n = 3
    family t in disc(0.5)        (optional; enables t and tbar in coefficients)
    d1 = 0
    d3 = -12 + t*21' + (1+2i)*11'

A term is an optional sign, optional coefficient factors joined by `*`, and a
monomial: a string of generator digits, each optionally followed by `'` for a
bar. Coefficient factors are numbers (`2`, `0.5`, `3i`, `i`), `t`, `tbar`,
powers `t^2`, and parenthesised sums of such products.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Union

from .errors import ParseError
from .models import FamilySpec, Pair, Poly, StructureSpec

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<mono>\d+'?(?:\d'?)*(?![\d.i]))
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?i?)
  | (?P<name>tbar|t|i)(?![A-Za-z0-9_])
  | (?P<op>[-+*^()])
  """,
    re.VERBOSE,
)
_HEADER_N = re.compile(r"^\s*n\s*=\s*(\S+)\s*$")
_HEADER_FAMILY = re.compile(r"^\s*family\s+(\w+)\s+in\s+disc\(\s*([^)]*)\)\s*$")
_EQUATION = re.compile(r"^(\s*d(\d+)\s*=)(.*)$")


def _tokenize(text: str, line: int, col0: int) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            bad = re.match(r"\S+?(?=[\s*+()^-]|$)", text[pos:])
            tok = bad.group(0) if bad else text[pos]
            raise ParseError(f"unexpected token {tok!r}", line, col0 + pos + 1, tok)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(0), col0 + pos + 1))
        pos = m.end()
    return out


def _padd(a: Poly, b: Poly, sign: int = 1) -> Poly:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + sign * v
    return {k: v for k, v in out.items() if v != 0}


def _pmul(a: Poly, b: Poly) -> Poly:
    out: dict = {}
    for (i, j), x in a.items():
        for (k, l), y in b.items():
            key = (i + k, j + l)
            out[key] = out.get(key, 0) + x * y
    return {k: v for k, v in out.items() if v != 0}


class _Parser:
    def __init__(self, tokens, line: int, end_col: int, n: int, family: bool):
        self.toks = tokens
        self.i = 0
        self.line = line
        self.end_col = end_col
        self.n = n
        self.family = family

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, msg: str, tok=None):
        if tok is None:
            raise ParseError(msg, self.line, self.end_col, "")
        raise ParseError(msg, self.line, tok[2], tok[1])

    def expect(self, value: str):
        tok = self.take()
        if tok is None or tok[1] != value:
            self.error(f"expected {value!r}", tok)

    # equation := '0' | term (('+'|'-') term)*
    def equation(self) -> dict[Pair, Poly]:
        toks = self.toks
        if len(toks) == 1 and toks[0][1] == "0":
            return {}
        out: dict[Pair, Poly] = {}
        sign = 1
        tok = self.peek()
        if tok is not None and tok[1] in "+-":
            self.take()
            sign = -1 if tok[1] == "-" else 1
        while True:
            coeff, mono = self.term()
            out[mono] = _padd(out.get(mono, {}), coeff, sign)
            tok = self.take()
            if tok is None:
                break
            if tok[1] not in "+-":
                self.error(f"unexpected token {tok[1]!r}", tok)
            sign = -1 if tok[1] == "-" else 1
        return out

    # term := (factor '*')* monomial
    def term(self) -> tuple[Poly, Pair]:
        coeff: Poly = {(0, 0): 1}
        while True:
            tok = self.peek()
            if tok is None:
                self.error("expected a monomial")
            if tok[0] == "mono":
                nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else None
                if nxt is None or nxt[1] in "+-":
                    self.take()
                    return coeff, self.monomial(tok)
            coeff = _pmul(coeff, self.factor())
            tok = self.peek()
            if tok is not None and tok[1] == "^":
                self.error("exponents apply to t or tbar only", tok)
            self.expect("*")

    def monomial(self, tok) -> Pair:
        text = tok[1]
        gens = []
        for m in re.finditer(r"(\d)('?)", text):
            g = int(m.group(1))
            if not 1 <= g <= self.n:
                raise ParseError(f"generator {g} outside 1..{self.n}", self.line, tok[2] + m.start(), text)
            gens.append(g - 1 + (self.n if m.group(2) else 0))
        if len(gens) != 2:
            self.error(f"monomial {text!r} must have exactly two generators", tok)
        if gens[0] == gens[1]:
            self.error(f"monomial {text!r} repeats a generator", tok)
        return tuple(gens)  # type: ignore[return-value]

    # factor := number | 'i' | ('t'|'tbar') ['^' int] | '(' sum ')'
    def factor(self) -> Poly:
        tok = self.take()
        if tok is None:
            self.error("expected a coefficient")
        kind, text, _ = tok
        if kind in ("num", "mono") and "'" not in text:
            return {(0, 0): complex(float(text[:-1]), 0) * 1j if text.endswith("i") else complex(float(text))}
        if text == "i":
            return {(0, 0): 1j}
        if text in ("t", "tbar"):
            if not self.family:
                self.error(f"{text!r} is only allowed after a family declaration", tok)
            power = 1
            if self.peek() is not None and self.peek()[1] == "^":
                self.take()
                exp = self.take()
                if exp is None or exp[0] not in ("num", "mono") or not exp[1].isdigit():
                    self.error("expected an integer exponent", exp)
                power = int(exp[1])
            return {(power, 0) if text == "t" else (0, power): 1}
        if text == "(":
            val = self.sum_expr()
            self.expect(")")
            return val
        self.error(f"unexpected token {text!r}", tok)

    def sum_expr(self) -> Poly:
        total: Poly = {}
        sign = 1
        tok = self.peek()
        if tok is not None and tok[1] in "+-":
            self.take()
            sign = -1 if tok[1] == "-" else 1
        while True:
            prod = self.factor()
            while self.peek() is not None and self.peek()[1] == "*":
                self.take()
                prod = _pmul(prod, self.factor())
            total = _padd(total, prod, sign)
            tok = self.peek()
            if tok is None or tok[1] not in "+-":
                return total
            self.take()
            sign = -1 if tok[1] == "-" else 1


def parse_model_text(text: str, name: str = "model") -> Union[StructureSpec, FamilySpec]:
    n = None
    family: tuple[str, float] | None = None
    raw: dict[int, tuple[int, str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if m := _HEADER_N.match(body):
            if n is not None:
                raise ParseError("n declared twice", lineno, 1, "n")
            try:
                n = int(m.group(1))
            except ValueError:
                raise ParseError(f"n must be an integer, got {m.group(1)!r}", lineno, m.start(1) + 1, m.group(1))
            if not 1 <= n <= 9:
                raise ParseError("n must be between 1 and 9", lineno, m.start(1) + 1, m.group(1))
            continue
        if m := _HEADER_FAMILY.match(body):
            if m.group(1) != "t":
                raise ParseError("the family parameter must be called t", lineno, m.start(1) + 1, m.group(1))
            try:
                radius = float(m.group(2))
            except ValueError:
                raise ParseError(f"bad radius {m.group(2)!r}", lineno, m.start(2) + 1, m.group(2))
            if radius <= 0:
                raise ParseError("radius must be positive", lineno, m.start(2) + 1, m.group(2))
            family = ("t", radius)
            continue
        if m := _EQUATION.match(body):
            i = int(m.group(2))
            if i in raw:
                raise ParseError(f"d{i} defined twice", lineno, 1, f"d{i}")
            raw[i] = (lineno, m.group(3), len(m.group(1)))
            continue
        tok = body.strip().split()[0]
        raise ParseError(f"unrecognised declaration {tok!r}", lineno, body.index(tok) + 1, tok)
    if n is None:
        raise ParseError("missing 'n = <int>' declaration", 1, 1, "")
    eqs: list[dict[Pair, Poly]] = [{} for _ in range(n)]
    for i, (lineno, rhs, col0) in sorted(raw.items()):
        if not 1 <= i <= n:
            raise ParseError(f"d{i} refers to a generator beyond n = {n}", lineno, 2, f"d{i}")
        toks = _tokenize(rhs, lineno, col0)
        if not toks:
            raise ParseError(f"empty right-hand side for d{i}", lineno, col0 + 1, "")
        eqs[i - 1] = _Parser(toks, lineno, col0 + len(rhs) + 1, n, family is not None).equation()
    if family is not None:
        return FamilySpec(name, n, tuple(eqs), family[1])
    return StructureSpec(n, tuple({pair: poly.get((0, 0), 0) for pair, poly in eq.items() if poly} for eq in eqs), name)


def parse_model_file(path: str | Path) -> Union[StructureSpec, FamilySpec]:
    p = Path(path)
    return parse_model_text(p.read_text(), name=p.stem)
