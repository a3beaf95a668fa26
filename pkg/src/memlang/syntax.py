"""Surface syntax, abstract syntax, and purely syntactic analyses.

The term language is layered into values and computations.  Computations are
sequenced with ``let val x <- u in t``; the effectful primitives are
``flip(RAT)`` (biased coin), ``fresh()`` (new atomic name), atom equality
``v == w``, memoized random boolean functions ``memfn x. u``, and
application ``v @ w``.  Source files are UTF-8 with ``#`` line comments.

Biases are exact rationals: ``flip(1/3)`` and ``flip(0.5)`` are stored as
``Fraction`` values, never floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Union

Ident = str

# ---------------------------------------------------------------------------
# Abstract syntax


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Var:
    name: Ident


@dataclass(frozen=True)
class PairVal:
    fst: "Val"
    snd: "Val"


Val = Union[BoolLit, Var, PairVal]


@dataclass(frozen=True)
class Return:
    value: Val


@dataclass(frozen=True)
class Let:
    name: Ident
    bound: "Comp"
    body: "Comp"


@dataclass(frozen=True)
class If:
    cond: Val
    then: "Comp"
    orelse: "Comp"


@dataclass(frozen=True)
class Match:
    subject: Val
    fst_name: Ident
    snd_name: Ident
    body: "Comp"


@dataclass(frozen=True)
class Flip:
    bias: Fraction


@dataclass(frozen=True)
class Fresh:
    pass


@dataclass(frozen=True)
class Eq:
    lhs: Val
    rhs: Val


@dataclass(frozen=True)
class MemFn:
    binder: Ident
    body: "Comp"


@dataclass(frozen=True)
class App:
    fn: Val
    arg: Val


Comp = Union[Return, Let, If, Match, Flip, Fresh, Eq, MemFn, App]


@dataclass(frozen=True)
class MemoCtx:
    """Pending memoization marker produced only by the evaluator.

    Wraps a computation whose boolean result must be written to the
    memo-table edge ``(fun_label, atom_label)``; afterwards the environment
    is restored to ``restore_env``.  The payload is opaque to the syntactic
    layer and to the typechecker.
    """

    inner: "ExtTerm"
    fun_label: int
    atom_label: int
    restore_env: Any


ExtTerm = Union[Comp, MemoCtx]

KEYWORDS = frozenset(
    [
        "return", "let", "val", "in", "if", "then", "else",
        "match", "as", "flip", "fresh", "memfn", "true", "false",
    ]
)


# ---------------------------------------------------------------------------
# Lexer


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected=(), found: Optional[str] = None):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col
        self.expected = frozenset(expected)
        self.found = found


@dataclass(frozen=True)
class Token:
    kind: str  # "kw" | "ident" | "number" | "sym" | "eof"
    text: str
    line: int
    col: int


_SYMBOLS = ("<-", "==", "(", ")", ",", ".", "@", "/")


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(text)

    def error(message: str) -> ParseError:
        return ParseError(message, line, col)

    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i, col = i + 1, col + 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(Token("number", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("sym", sym, start_line, start_col))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise error(f"unexpected character {c!r}")
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent; the grammar is LL(1) over this token stream)

_VAL_STARTERS = {("kw", "true"), ("kw", "false")}


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected) -> ParseError:
        tok = self.peek()
        found = tok.text or "end of input"
        exp = ", ".join(sorted(expected))
        return ParseError(
            f"expected {exp}, found {found!r}", tok.line, tok.col, expected, found
        )

    def expect_sym(self, sym: str) -> Token:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == sym:
            return self.advance()
        raise self.fail({sym})

    def expect_kw(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind == "kw" and tok.text == word:
            return self.advance()
        raise self.fail({word})

    def expect_ident(self) -> str:
        tok = self.peek()
        if tok.kind == "ident":
            return self.advance().text
        if tok.kind == "kw":
            raise ParseError(
                f"reserved word {tok.text!r} cannot be used as an identifier",
                tok.line, tok.col, {"identifier"}, tok.text,
            )
        raise self.fail({"identifier"})

    def starts_value(self) -> bool:
        tok = self.peek()
        return (
            tok.kind == "ident"
            or (tok.kind, tok.text) in _VAL_STARTERS
            or (tok.kind == "sym" and tok.text == "(")
        )

    def parse_val(self) -> Val:
        tok = self.peek()
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.advance()
            return BoolLit(tok.text == "true")
        if tok.kind == "ident":
            return Var(self.advance().text)
        if tok.kind == "sym" and tok.text == "(":
            self.advance()
            fst = self.parse_val()
            self.expect_sym(",")
            snd = self.parse_val()
            self.expect_sym(")")
            return PairVal(fst, snd)
        raise self.fail({"true", "false", "identifier", "("})

    def parse_rat(self) -> Fraction:
        tok = self.peek()
        if tok.kind != "number":
            raise self.fail({"number"})
        self.advance()
        if self.peek().kind == "sym" and self.peek().text == "/":
            if "." in tok.text:
                raise ParseError(
                    "decimal numerator not allowed in a fraction",
                    tok.line, tok.col, {"integer"}, tok.text,
                )
            self.advance()
            den = self.peek()
            if den.kind != "number" or "." in den.text:
                raise self.fail({"integer"})
            self.advance()
            if int(den.text) == 0:
                raise ParseError("zero denominator", den.line, den.col)
            value = Fraction(int(tok.text), int(den.text))
        else:
            value = Fraction(tok.text)
        if value < 0 or value > 1:
            raise ParseError(
                f"bias must be between 0 and 1, got {value}", tok.line, tok.col
            )
        return value

    def parse_comp(self) -> Comp:
        tok = self.peek()
        if tok.kind == "kw":
            if tok.text == "return":
                self.advance()
                return Return(self.parse_val())
            if tok.text == "let":
                self.advance()
                self.expect_kw("val")
                name = self.expect_ident()
                self.expect_sym("<-")
                bound = self.parse_comp()
                self.expect_kw("in")
                body = self.parse_comp()
                return Let(name, bound, body)
            if tok.text == "if":
                self.advance()
                cond = self.parse_val()
                self.expect_kw("then")
                then = self.parse_comp()
                self.expect_kw("else")
                orelse = self.parse_comp()
                return If(cond, then, orelse)
            if tok.text == "match":
                self.advance()
                subject = self.parse_val()
                self.expect_kw("as")
                self.expect_sym("(")
                fst = self.expect_ident()
                self.expect_sym(",")
                snd = self.expect_ident()
                self.expect_sym(")")
                self.expect_kw("in")
                body = self.parse_comp()
                return Match(subject, fst, snd, body)
            if tok.text == "flip":
                self.advance()
                self.expect_sym("(")
                bias = self.parse_rat()
                self.expect_sym(")")
                return Flip(bias)
            if tok.text == "fresh":
                self.advance()
                self.expect_sym("(")
                self.expect_sym(")")
                return Fresh()
            if tok.text == "memfn":
                self.advance()
                binder = self.expect_ident()
                self.expect_sym(".")
                return MemFn(binder, self.parse_comp())
        if self.starts_value():
            lhs = self.parse_val()
            op = self.peek()
            if op.kind == "sym" and op.text == "==":
                self.advance()
                return Eq(lhs, self.parse_val())
            if op.kind == "sym" and op.text == "@":
                self.advance()
                return App(lhs, self.parse_val())
            raise self.fail({"==", "@"})
        raise self.fail(
            {"return", "let", "if", "match", "flip", "fresh", "memfn",
             "true", "false", "identifier", "("}
        )


def parse_program(text: str) -> Comp:
    """Parse a whole program; raises ParseError on malformed input."""
    parser = _Parser(text)
    comp = parser.parse_comp()
    if parser.peek().kind != "eof":
        raise parser.fail({"end of input"})
    return comp


# ---------------------------------------------------------------------------
# Pretty-printer (the normative formatter; output reparses to the same tree)


def pretty_rat(q: Fraction) -> str:
    return str(q)


def pretty_val(v: Val) -> str:
    if isinstance(v, BoolLit):
        return "true" if v.value else "false"
    if isinstance(v, Var):
        return v.name
    if isinstance(v, PairVal):
        return f"({pretty_val(v.fst)}, {pretty_val(v.snd)})"
    raise TypeError(f"not a value: {v!r}")


def pretty(c: ExtTerm) -> str:
    if isinstance(c, Return):
        return f"return {pretty_val(c.value)}"
    if isinstance(c, Let):
        return f"let val {c.name} <- {pretty(c.bound)} in {pretty(c.body)}"
    if isinstance(c, If):
        return f"if {pretty_val(c.cond)} then {pretty(c.then)} else {pretty(c.orelse)}"
    if isinstance(c, Match):
        return (
            f"match {pretty_val(c.subject)} as ({c.fst_name}, {c.snd_name}) "
            f"in {pretty(c.body)}"
        )
    if isinstance(c, Flip):
        return f"flip({pretty_rat(c.bias)})"
    if isinstance(c, Fresh):
        return "fresh()"
    if isinstance(c, Eq):
        return f"{pretty_val(c.lhs)} == {pretty_val(c.rhs)}"
    if isinstance(c, MemFn):
        return f"memfn {c.binder}. {pretty(c.body)}"
    if isinstance(c, App):
        return f"{pretty_val(c.fn)} @ {pretty_val(c.arg)}"
    if isinstance(c, MemoCtx):
        # trace display only; not part of the surface grammar
        return f"{{{{{pretty(c.inner)}}}}}^(fun{c.fun_label},atom{c.atom_label})"
    raise TypeError(f"not a term: {c!r}")


# ---------------------------------------------------------------------------
# Free variables, alpha-equivalence, substitution


def free_vars_val(v: Val) -> frozenset[Ident]:
    if isinstance(v, BoolLit):
        return frozenset()
    if isinstance(v, Var):
        return frozenset([v.name])
    return free_vars_val(v.fst) | free_vars_val(v.snd)


def free_vars(c: Comp) -> frozenset[Ident]:
    if isinstance(c, Return):
        return free_vars_val(c.value)
    if isinstance(c, Let):
        return free_vars(c.bound) | (free_vars(c.body) - {c.name})
    if isinstance(c, If):
        return free_vars_val(c.cond) | free_vars(c.then) | free_vars(c.orelse)
    if isinstance(c, Match):
        return free_vars_val(c.subject) | (
            free_vars(c.body) - {c.fst_name, c.snd_name}
        )
    if isinstance(c, (Flip, Fresh)):
        return frozenset()
    if isinstance(c, Eq):
        return free_vars_val(c.lhs) | free_vars_val(c.rhs)
    if isinstance(c, MemFn):
        return free_vars(c.body) - {c.binder}
    if isinstance(c, App):
        return free_vars_val(c.fn) | free_vars_val(c.arg)
    raise TypeError(f"not a computation: {c!r}")


def alpha_canonical(c: Comp) -> Comp:
    """Rename bound variables to %0, %1, ... in binder-occurrence order.

    The % prefix cannot appear in source identifiers, so canonical forms of
    alpha-equivalent terms are structurally equal and never capture free
    variables.
    """
    counter = [0]

    def fresh() -> str:
        name = f"%{counter[0]}"
        counter[0] += 1
        return name

    def go_val(v: Val, env: dict[Ident, Ident]) -> Val:
        if isinstance(v, Var):
            return Var(env.get(v.name, v.name))
        if isinstance(v, PairVal):
            return PairVal(go_val(v.fst, env), go_val(v.snd, env))
        return v

    def go(c: Comp, env: dict[Ident, Ident]) -> Comp:
        if isinstance(c, Return):
            return Return(go_val(c.value, env))
        if isinstance(c, Let):
            bound = go(c.bound, env)
            name = fresh()
            return Let(name, bound, go(c.body, {**env, c.name: name}))
        if isinstance(c, If):
            return If(go_val(c.cond, env), go(c.then, env), go(c.orelse, env))
        if isinstance(c, Match):
            subject = go_val(c.subject, env)
            fst, snd = fresh(), fresh()
            return Match(
                subject, fst, snd,
                go(c.body, {**env, c.fst_name: fst, c.snd_name: snd}),
            )
        if isinstance(c, (Flip, Fresh)):
            return c
        if isinstance(c, Eq):
            return Eq(go_val(c.lhs, env), go_val(c.rhs, env))
        if isinstance(c, MemFn):
            binder = fresh()
            return MemFn(binder, go(c.body, {**env, c.binder: binder}))
        if isinstance(c, App):
            return App(go_val(c.fn, env), go_val(c.arg, env))
        raise TypeError(f"not a computation: {c!r}")

    return go(c, {})


def alpha_eq(a: Comp, b: Comp) -> bool:
    """Equality up to consistent renaming of bound variables."""
    return alpha_canonical(a) == alpha_canonical(b)


def _fresh_name(base: Ident, avoid: frozenset[Ident]) -> Ident:
    i = 1
    while f"{base}_{i}" in avoid:
        i += 1
    return f"{base}_{i}"


def substitute_val(v: Val, x: Ident, replacement: Val) -> Val:
    if isinstance(v, Var):
        return replacement if v.name == x else v
    if isinstance(v, PairVal):
        return PairVal(
            substitute_val(v.fst, x, replacement),
            substitute_val(v.snd, x, replacement),
        )
    return v


def substitute(c: Comp, x: Ident, replacement: Val) -> Comp:
    """Capture-avoiding substitution of a value for a free variable."""
    repl_fvs = free_vars_val(replacement)

    def freshen(binder: Ident, body: Comp) -> tuple[Ident, Comp]:
        if binder not in repl_fvs:
            return binder, body
        new = _fresh_name(binder, repl_fvs | free_vars(body) | {x})
        return new, substitute(body, binder, Var(new))

    if isinstance(c, Return):
        return Return(substitute_val(c.value, x, replacement))
    if isinstance(c, Let):
        bound = substitute(c.bound, x, replacement)
        if c.name == x:
            return Let(c.name, bound, c.body)
        name, body = freshen(c.name, c.body)
        return Let(name, bound, substitute(body, x, replacement))
    if isinstance(c, If):
        return If(
            substitute_val(c.cond, x, replacement),
            substitute(c.then, x, replacement),
            substitute(c.orelse, x, replacement),
        )
    if isinstance(c, Match):
        subject = substitute_val(c.subject, x, replacement)
        if x in (c.fst_name, c.snd_name):
            return Match(subject, c.fst_name, c.snd_name, c.body)
        fst, body = freshen(c.fst_name, c.body)
        snd, body = freshen(c.snd_name, body)
        return Match(subject, fst, snd, substitute(body, x, replacement))
    if isinstance(c, (Flip, Fresh)):
        return c
    if isinstance(c, Eq):
        return Eq(
            substitute_val(c.lhs, x, replacement),
            substitute_val(c.rhs, x, replacement),
        )
    if isinstance(c, MemFn):
        if c.binder == x:
            return c
        binder, body = freshen(c.binder, c.body)
        return MemFn(binder, substitute(body, x, replacement))
    if isinstance(c, App):
        return App(
            substitute_val(c.fn, x, replacement),
            substitute_val(c.arg, x, replacement),
        )
    raise TypeError(f"not a computation: {c!r}")


def syntactic_freshness_check(fn: MemFn) -> bool:
    """Sufficient check that a memoized function's bias on a new atom does
    not depend on the new atom's connections.

    Returns False iff some application subterm's argument variable is bound
    inside the abstraction (the memoized binder or a local binder); such an
    argument can name an atom the abstraction itself is being asked about.
    True guarantees the world-indexed evaluator accepts the function at
    every world; False only means the cheap check is inconclusive.
    """
    if not isinstance(fn, MemFn):
        raise TypeError(f"expected a memfn node, got {fn!r}")

    def ok(c: Comp, bound: frozenset[Ident]) -> bool:
        if isinstance(c, Return):
            return True
        if isinstance(c, Let):
            return ok(c.bound, bound) and ok(c.body, bound | {c.name})
        if isinstance(c, If):
            return ok(c.then, bound) and ok(c.orelse, bound)
        if isinstance(c, Match):
            return ok(c.body, bound | {c.fst_name, c.snd_name})
        if isinstance(c, (Flip, Fresh, Eq)):
            return True
        if isinstance(c, MemFn):
            return ok(c.body, bound | {c.binder})
        if isinstance(c, App):
            return not (isinstance(c.arg, Var) and c.arg.name in bound)
        raise TypeError(f"not a computation: {c!r}")

    return ok(fn.body, frozenset([fn.binder]))
