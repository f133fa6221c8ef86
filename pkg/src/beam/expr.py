"""Tiny boolean/arithmetic expression language.

One grammar serves three places: CEP pattern guards (operands are
``var.attr`` references and table membership), context conditions
(operands are context keys), and context-rule assignments (operands are
event attributes and prior context keys).  Clock-of-day literals are
written ``HH:MM`` and evaluate to minutes since midnight.

Key names may embed ``{var.attr}`` placeholders (e.g. ``fuel_{t.truck}``)
which are resolved against the triggering situation's bindings before the
key is looked up.
"""

from __future__ import annotations

from dataclasses import dataclass

_KEYWORDS = {"and", "or", "not", "in", "table", "true", "false"}
_CMP_OPS = {"==", "!=", "<=", ">=", "<", ">"}


class ExprError(ValueError):
    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} (at offset {pos})")


class MissingName(LookupError):
    """A name reference could not be resolved by the environment."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(name)


class EvalTypeError(TypeError):
    pass


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class Name:
    # parts: ("lit", text) and ("ref", (var, attr)) pieces of a key template
    parts: tuple[tuple[str, object], ...]

    @property
    def is_template(self) -> bool:
        return any(kind == "ref" for kind, _ in self.parts)

    @property
    def text(self) -> str:
        out = []
        for kind, val in self.parts:
            out.append(val if kind == "lit" else "{%s}" % val)
        return "".join(out)


@dataclass(frozen=True)
class Attr:
    var: str
    attr: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class InTable:
    member: object
    table: str
    key: object


@dataclass(frozen=True)
class _Token:
    kind: str
    value: object
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            # HH:MM clock-of-day literal
            if j + 2 < n and text[j] == ":" and text[j + 1].isdigit() and text[j + 2].isdigit():
                hours, minutes = int(text[i:j]), int(text[j + 1:j + 3])
                if hours > 23 or minutes > 59:
                    raise ExprError(f"bad clock literal {text[i:j+3]!r}", i)
                tokens.append(_Token("num", hours * 60 + minutes, i))
                i = j + 3
                continue
            k = j
            is_float = False
            if k < n and text[k] == ".":
                k += 1
                if k >= n or not text[k].isdigit():
                    raise ExprError("bad number", i)
                while k < n and text[k].isdigit():
                    k += 1
                is_float = True
            if k < n and text[k] in "eE":
                m = k + 1
                if m < n and text[m] in "+-":
                    m += 1
                if m < n and text[m].isdigit():
                    while m < n and text[m].isdigit():
                        m += 1
                    k = m
                    is_float = True
            if is_float:
                tokens.append(_Token("num", float(text[i:k]), i))
            else:
                tokens.append(_Token("num", int(text[i:k]), i))
            i = k
            continue
        if ch == '"' or ch == "'":
            j = text.find(ch, i + 1)
            if j < 0:
                raise ExprError("unterminated string", i)
            tokens.append(_Token("str", text[i + 1:j], i))
            i = j + 1
            continue
        if ch.isalpha() or ch == "_":
            parts: list[tuple[str, object]] = []
            j = i
            buf = []
            while j < n:
                c = text[j]
                if c.isalnum() or c == "_":
                    buf.append(c)
                    j += 1
                elif c == "{":
                    k = text.find("}", j)
                    if k < 0:
                        raise ExprError("unterminated placeholder", j)
                    ref = text[j + 1:k].strip()
                    if not ref:
                        raise ExprError("empty placeholder", j)
                    if buf:
                        parts.append(("lit", "".join(buf)))
                        buf = []
                    parts.append(("ref", ref))
                    j = k + 1
                else:
                    break
            if buf:
                parts.append(("lit", "".join(buf)))
            word = "".join(buf) if len(parts) == 1 and parts[0][0] == "lit" else None
            if word in _KEYWORDS:
                tokens.append(_Token(word, word, i))
            else:
                tokens.append(_Token("name", tuple(parts), i))
            i = j
            continue
        two = text[i:i + 2]
        if two in _CMP_OPS:
            tokens.append(_Token("cmp", two, i))
            i += 2
            continue
        if ch in "<>":
            tokens.append(_Token("cmp", ch, i))
            i += 1
            continue
        if ch in "()+-*/,.":
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        raise ExprError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise ExprError(f"expected {kind!r}, got {tok.kind!r}", tok.pos)
        return tok

    def parse(self):
        node = self.or_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprError(f"unexpected trailing {tok.kind!r}", tok.pos)
        return node

    def or_expr(self):
        node = self.and_expr()
        while self.peek().kind == "or":
            self.next()
            node = Binary("or", node, self.and_expr())
        return node

    def and_expr(self):
        node = self.not_expr()
        while self.peek().kind == "and":
            self.next()
            node = Binary("and", node, self.not_expr())
        return node

    def not_expr(self):
        if self.peek().kind == "not":
            self.next()
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self):
        node = self.additive()
        tok = self.peek()
        if tok.kind == "cmp":
            self.next()
            return Binary(tok.value, node, self.additive())
        if tok.kind == "in":
            self.next()
            self.expect("table")
            self.expect("(")
            name_tok = self.expect("name")
            if any(kind == "ref" for kind, _ in name_tok.value):
                raise ExprError("table name may not be templated", name_tok.pos)
            table_name = name_tok.value[0][1]
            self.expect(",")
            key = self.additive()
            self.expect(")")
            return InTable(node, table_name, key)
        return node

    def additive(self):
        node = self.mult()
        while self.peek().kind in ("+", "-"):
            op = self.next().kind
            node = Binary(op, node, self.mult())
        return node

    def mult(self):
        node = self.unary()
        while self.peek().kind in ("*", "/"):
            op = self.next().kind
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek().kind == "-":
            self.next()
            return Unary("neg", self.unary())
        return self.atom()

    def atom(self):
        tok = self.next()
        if tok.kind == "num":
            return Lit(tok.value)
        if tok.kind == "str":
            return Lit(tok.value)
        if tok.kind == "true":
            return Lit(True)
        if tok.kind == "false":
            return Lit(False)
        if tok.kind == "(":
            node = self.or_expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            if self.peek().kind == "." and len(tok.value) == 1 and tok.value[0][0] == "lit":
                self.next()
                attr_tok = self.expect("name")
                if any(kind == "ref" for kind, _ in attr_tok.value):
                    raise ExprError("attribute name may not be templated", attr_tok.pos)
                return Attr(tok.value[0][1], attr_tok.value[0][1])
            return Name(tok.value)
        raise ExprError(f"unexpected token {tok.kind!r}", tok.pos)


def parse(text: str):
    """Parse an expression; raises ExprError with the offending offset."""
    return _Parser(_tokenize(text)).parse()


def canon_str(value) -> str:
    """Canonical string form used for table keys and templated key pieces."""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render(node) -> str:
    """Source-like text for a node; used when auditing failed conditions."""
    if isinstance(node, Lit):
        if isinstance(node.value, bool):
            return "true" if node.value else "false"
        if isinstance(node.value, str):
            return repr(node.value)
        return str(node.value)
    if isinstance(node, Name):
        return node.text
    if isinstance(node, Attr):
        return f"{node.var}.{node.attr}"
    if isinstance(node, Unary):
        return f"not {render(node.operand)}" if node.op == "not" else f"-{render(node.operand)}"
    if isinstance(node, Binary):
        if node.op in ("and", "or"):
            return f"({render(node.left)} {node.op} {render(node.right)})"
        return f"{render(node.left)} {node.op} {render(node.right)}"
    if isinstance(node, InTable):
        return f"{render(node.member)} in table({node.table}, {render(node.key)})"
    return repr(node)


def walk(node):
    yield node
    for child in _children(node):
        yield from walk(child)


def _children(node):
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, InTable):
        return (node.member, node.key)
    return ()


def _numeric(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _compare(op: str, left, right, strict: bool):
    if op in ("==", "!="):
        if _numeric(left) and _numeric(right):
            eq = left == right
        elif type(left) is type(right):
            eq = left == right
        else:
            eq = False
        return eq if op == "==" else not eq
    if _numeric(left) and _numeric(right):
        return {"<": left < right, "<=": left <= right,
                ">": left > right, ">=": left >= right}[op]
    if isinstance(left, str) and isinstance(right, str):
        return {"<": left < right, "<=": left <= right,
                ">": left > right, ">=": left >= right}[op]
    if strict:
        raise EvalTypeError(f"cannot order {type(left).__name__} and {type(right).__name__}")
    return False


class Env:
    """Name resolution hooks for evaluation; subclass per call site."""

    strict_types = True

    def name(self, key: str):
        raise MissingName(key)

    def attr(self, var: str, attr: str):
        raise MissingName(f"{var}.{attr}")

    def placeholder(self, ref: str):
        raise MissingName(ref)

    def table(self, name: str):
        raise MissingName(f"table {name}")


def resolve_key(node: Name, env: Env) -> str:
    """Concrete key for a possibly templated Name."""
    pieces = []
    for kind, val in node.parts:
        pieces.append(val if kind == "lit" else canon_str(env.placeholder(val)))
    return "".join(pieces)


def evaluate(node, env: Env):
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Name):
        return env.name(resolve_key(node, env))
    if isinstance(node, Attr):
        return env.attr(node.var, node.attr)
    if isinstance(node, Unary):
        if node.op == "not":
            value = evaluate(node.operand, env)
            if not isinstance(value, bool):
                raise EvalTypeError("'not' needs a boolean")
            return not value
        value = evaluate(node.operand, env)
        if not _numeric(value):
            raise EvalTypeError("unary '-' needs a number")
        return -value
    if isinstance(node, Binary):
        if node.op in ("and", "or"):
            left = evaluate(node.left, env)
            if not isinstance(left, bool):
                raise EvalTypeError(f"{node.op!r} needs booleans")
            if node.op == "and" and not left:
                return False
            if node.op == "or" and left:
                return True
            right = evaluate(node.right, env)
            if not isinstance(right, bool):
                raise EvalTypeError(f"{node.op!r} needs booleans")
            return right
        left = evaluate(node.left, env)
        right = evaluate(node.right, env)
        if node.op in _CMP_OPS:
            return _compare(node.op, left, right, env.strict_types)
        if not (_numeric(left) and _numeric(right)):
            raise EvalTypeError(f"arithmetic {node.op!r} needs numbers")
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if right == 0:
            raise EvalTypeError("division by zero")
        return left / right
    if isinstance(node, InTable):
        member = canon_str(evaluate(node.member, env))
        key = canon_str(evaluate(node.key, env))
        return env.table(node.table).contains(key, member)
    raise TypeError(f"unknown node {node!r}")
