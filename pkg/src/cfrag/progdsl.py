"""Restricted answer-program language: parser and safe interpreter.

Answer programs are newline-separated assignments over float arithmetic,
string-keyed dict literals, list literals and three aggregation builtins
(``max_by_value``, ``min_by_value``, ``top_n``).  The subset is valid Python
syntax, so gold programs remain runnable elsewhere, but the interpreter here
accepts nothing outside the grammar: no imports, calls to unknown names,
loops, conditionals or comments.  Model-generated text that strays from the
grammar fails with :class:`ParseError` and is scored as an empty prediction
by the evaluation layer.

A program's result is the value of the variable ``answer`` after the last
statement, which must be a list of numbers and/or labeled pairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple, Union

BUILTINS = ("max_by_value", "min_by_value", "top_n")

#: Evaluated-node budget per program; generous for real answer programs,
#: bounds adversarial input (the grammar itself has no loops).
STEP_LIMIT = 10_000


class Labeled(NamedTuple):
    """A (name, value) answer item, e.g. the output of ``max_by_value``."""

    name: str
    value: float


AnswerItem = Union[float, Labeled]
AnswerList = list


class DslError(Exception):
    """Base class for every parse or execution failure."""


class ParseError(DslError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class ExecError(DslError):
    """Base class for runtime failures."""


class UndefinedVariableError(ExecError):
    def __init__(self, name: str):
        super().__init__(f"undefined variable '{name}'")
        self.name = name


class DivisionByZeroError(ExecError):
    pass


class MissingAnswerError(ExecError):
    pass


class DslTypeError(ExecError):
    pass


class StepLimitError(ExecError):
    pass


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class DictLit:
    items: tuple  # of (key, Expr)


@dataclass(frozen=True)
class ListLit:
    items: tuple  # of Expr


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple  # of Expr


Expr = Union[Num, Str, Var, Neg, BinOp, DictLit, ListLit, Call]


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr
    line: int


@dataclass(frozen=True)
class Program:
    statements: tuple  # of Assign


# --- Tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<newline>\r?\n)
  | (?P<number>\d+(\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\\\n]*"|'[^'\\\n]*')
  | (?P<punct>[=+\-*/(){}\[\],:])
    """,
    re.VERBOSE,
)


class _Token(NamedTuple):
    kind: str  # number | ident | string | punct | newline | eof
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "newline":
            tokens.append(_Token("newline", text, line, col))
            line += 1
            col = 1
        elif kind == "ws":
            col += len(text)
        else:
            tokens.append(_Token(kind, text, line, col))
            col += len(text)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --- Parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.kind != "eof" else "end of input"
            raise ParseError(f"expected {want!r}, found {got!r}", tok.line, tok.col)
        return self.advance()

    def skip_newlines(self) -> None:
        while self.peek().kind == "newline":
            self.advance()

    def parse_program(self) -> Program:
        statements = []
        self.skip_newlines()
        while self.peek().kind != "eof":
            statements.append(self.parse_statement())
            tok = self.peek()
            if tok.kind == "newline":
                self.skip_newlines()
            elif tok.kind != "eof":
                raise ParseError(
                    f"expected end of statement, found {tok.text!r}", tok.line, tok.col
                )
        if not statements:
            tok = self.peek()
            raise ParseError("empty program", tok.line, tok.col)
        return Program(tuple(statements))

    def parse_statement(self) -> Assign:
        name_tok = self.expect("ident")
        self.expect("punct", "=")
        expr = self.parse_expr()
        return Assign(name_tok.text, expr, name_tok.line)

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek().kind == "punct" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while self.peek().kind == "punct" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Expr:
        if self.peek().kind == "punct" and self.peek().text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "string":
            self.advance()
            return Str(tok.text[1:-1])
        if tok.kind == "ident":
            self.advance()
            if self.peek().kind == "punct" and self.peek().text == "(":
                return self.parse_call(tok)
            return Var(tok.text)
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect("punct", ")")
            return node
        if tok.kind == "punct" and tok.text == "{":
            return self.parse_dict()
        if tok.kind == "punct" and tok.text == "[":
            return self.parse_list()
        got = tok.text if tok.kind != "eof" else "end of input"
        raise ParseError(f"expected expression, found {got!r}", tok.line, tok.col)

    def parse_call(self, name_tok: _Token) -> Expr:
        if name_tok.text not in BUILTINS:
            raise ParseError(
                f"unknown function '{name_tok.text}'", name_tok.line, name_tok.col
            )
        self.expect("punct", "(")
        args = []
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            args.append(self.parse_expr())
            while self.peek().kind == "punct" and self.peek().text == ",":
                self.advance()
                args.append(self.parse_expr())
        self.expect("punct", ")")
        return Call(name_tok.text, tuple(args))

    def parse_dict(self) -> Expr:
        self.expect("punct", "{")
        items: list[tuple[str, Expr]] = []
        seen: set[str] = set()
        if not (self.peek().kind == "punct" and self.peek().text == "}"):
            while True:
                key_tok = self.expect("string")
                key = key_tok.text[1:-1]
                if key in seen:
                    raise ParseError(
                        f"duplicate dict key {key!r}", key_tok.line, key_tok.col
                    )
                seen.add(key)
                self.expect("punct", ":")
                items.append((key, self.parse_expr()))
                if self.peek().kind == "punct" and self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect("punct", "}")
        return DictLit(tuple(items))

    def parse_list(self) -> Expr:
        self.expect("punct", "[")
        items = []
        if not (self.peek().kind == "punct" and self.peek().text == "]"):
            items.append(self.parse_expr())
            while self.peek().kind == "punct" and self.peek().text == ",":
                self.advance()
                items.append(self.parse_expr())
        self.expect("punct", "]")
        return ListLit(tuple(items))


def parse(source: str) -> Program:
    """Parse DSL source into a Program, or raise ParseError (1-based positions)."""
    return _Parser(_tokenize(source)).parse_program()


# --- Interpreter -----------------------------------------------------------


def _type_name(value: object) -> str:
    if isinstance(value, float):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, dict):
        return "dict"
    if isinstance(value, Labeled):
        return "pair"
    if isinstance(value, list):
        return "list"
    return type(value).__name__


class _Interp:
    def __init__(self, step_limit: int):
        self.scope: dict[str, object] = {}
        self.steps = 0
        self.step_limit = step_limit

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.step_limit:
            raise StepLimitError(f"exceeded step limit of {self.step_limit} nodes")

    def eval(self, node: Expr) -> object:
        self.tick()
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Str):
            return node.value
        if isinstance(node, Var):
            if node.name not in self.scope:
                raise UndefinedVariableError(node.name)
            return self.scope[node.name]
        if isinstance(node, Neg):
            val = self.eval(node.operand)
            if not isinstance(val, float):
                raise DslTypeError(f"cannot negate a {_type_name(val)}")
            return -val
        if isinstance(node, BinOp):
            return self.eval_binop(node)
        if isinstance(node, DictLit):
            return {key: self.eval(expr) for key, expr in node.items}
        if isinstance(node, ListLit):
            return [self.eval(item) for item in node.items]
        if isinstance(node, Call):
            return self.eval_call(node)
        raise DslTypeError(f"cannot evaluate node {node!r}")

    def eval_binop(self, node: BinOp) -> float:
        left = self.eval(node.left)
        right = self.eval(node.right)
        if not isinstance(left, float) or not isinstance(right, float):
            raise DslTypeError(
                f"arithmetic '{node.op}' needs numbers, got "
                f"{_type_name(left)} and {_type_name(right)}"
            )
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if right == 0.0:
            raise DivisionByZeroError("division by zero")
        return left / right

    def eval_call(self, node: Call) -> object:
        args = [self.eval(arg) for arg in node.args]
        if node.name == "top_n":
            if len(args) != 2:
                raise DslTypeError("top_n takes (dict, n)")
            d, n = args
            if not isinstance(d, dict):
                raise DslTypeError("top_n needs a dict")
            if not isinstance(n, float) or not n.is_integer() or n < 1:
                raise DslTypeError("top_n count must be a positive integer")
            return builtin_top_n(d, int(n))
        # max_by_value / min_by_value
        if len(args) != 1 or not isinstance(args[0], dict):
            raise DslTypeError(f"{node.name} takes a single dict")
        d = args[0]
        if not d:
            raise DslTypeError(f"{node.name} of an empty dict")
        pairs = _numeric_pairs(d)
        if node.name == "max_by_value":
            best = max(pairs, key=lambda kv: kv[1])
        else:
            best = min(pairs, key=lambda kv: kv[1])
        return Labeled(best[0], best[1])


def _numeric_pairs(d: dict) -> list[tuple[str, float]]:
    pairs = []
    for key, value in d.items():
        if not isinstance(value, float):
            raise DslTypeError(f"dict value for {key!r} is not a number")
        pairs.append((key, value))
    return pairs


def builtin_top_n(d: dict, n: int) -> list[Labeled]:
    """The n largest entries by value, descending; ties keep insertion order.

    When n exceeds the dict size, all entries are returned.
    """
    pairs = _numeric_pairs(d)
    ranked = sorted(pairs, key=lambda kv: -kv[1])  # stable: ties by insertion
    return [Labeled(k, v) for k, v in ranked[:n]]


def _coerce_answer_item(value: object) -> AnswerItem:
    if isinstance(value, float):
        return value
    if isinstance(value, Labeled):
        return value
    if (
        isinstance(value, list)
        and len(value) == 2
        and isinstance(value[0], str)
        and isinstance(value[1], float)
    ):
        return Labeled(value[0], value[1])
    raise DslTypeError(f"answer item must be a number or pair, got {_type_name(value)}")


def execute(program: Program, step_limit: int = STEP_LIMIT) -> AnswerList:
    """Run a parsed program and return the final ``answer`` list.

    Statements evaluate in order in one scope.  Raises an ExecError subclass
    on undefined variables, division by zero, type misuse, a missing
    ``answer`` assignment, or exhaustion of the step limit.
    """
    interp = _Interp(step_limit)
    for stmt in program.statements:
        interp.scope[stmt.name] = interp.eval(stmt.expr)
    if "answer" not in interp.scope:
        raise MissingAnswerError("program never assigned 'answer'")
    answer = interp.scope["answer"]
    if not isinstance(answer, list):
        raise DslTypeError(f"'answer' must be a list, got {_type_name(answer)}")
    return [_coerce_answer_item(item) for item in answer]


def run_source(source: str, step_limit: int = STEP_LIMIT) -> AnswerList:
    """Parse and execute in one call."""
    return execute(parse(source), step_limit=step_limit)


# --- Answer serialization ---------------------------------------------------


def answers_to_json(answers: AnswerList) -> list:
    """AnswerList -> JSON-ready list (numbers and [name, value] pairs)."""
    return [[a.name, a.value] if isinstance(a, Labeled) else a for a in answers]


def answers_from_json(data: list) -> AnswerList:
    out: AnswerList = []
    for item in data:
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            out.append(float(item))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            out.append(Labeled(str(item[0]), float(item[1])))
        else:
            raise ValueError(f"malformed answer item: {item!r}")
    return out
