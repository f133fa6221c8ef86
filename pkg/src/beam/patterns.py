"""Declarative complex-event patterns: AST and compiler.

Grammar (one declaration, whitespace-insensitive):

    PATTERN <name> = <expr> WITHIN <ms> [PARTITION BY <attr>]
                     [WHERE <guard>] [POLICY first|every]

    expr  ::= SEQ(expr, expr, ...) | AND(expr, expr) | OR(expr, expr)
            | NOT(<etype>)                  # only directly inside SEQ
            | <var>:<etype> | <etype>       # leaf

Guards are boolean expressions over ``var.attr`` references, literals,
comparisons, and/or/not, and ``X in table(name, K)`` membership against
static lookup tables.  The compiler reports every violated invariant, not
just the first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr as exprlang

MAX_DEPTH = 8


@dataclass(frozen=True)
class Leaf:
    etype: str
    var: str | None = None
    slot: int = -1          # index in the pattern's in-order leaf list


@dataclass(frozen=True)
class NotRef:
    etype: str


@dataclass(frozen=True)
class Seq:
    operands: tuple              # positional sub-expressions, len >= 2
    nots: tuple[NotRef, ...] = ()


@dataclass(frozen=True)
class AndOp:
    left: object
    right: object


@dataclass(frozen=True)
class OrOp:
    left: object
    right: object


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    pos: int

    def __str__(self):
        return f"{self.code}: {self.message} (offset {self.pos})"


class PatternError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class Pattern:
    name: str
    expr: object
    window_ms: int
    partition_key: str | None = None
    guard: object | None = None
    guard_text: str | None = None
    policy: str = "first"
    leaves: list[Leaf] = field(default_factory=list)

    @property
    def not_etypes(self) -> set[str]:
        out = set()
        _collect_nots(self.expr, out)
        return out

    @property
    def leaf_etypes(self) -> set[str]:
        return {leaf.etype for leaf in self.leaves}


def _collect_nots(node, out: set[str]):
    if isinstance(node, Seq):
        for n in node.nots:
            out.add(n.etype)
        for op in node.operands:
            _collect_nots(op, out)
    elif isinstance(node, (AndOp, OrOp)):
        _collect_nots(node.left, out)
        _collect_nots(node.right, out)


def depth_of(node) -> int:
    if isinstance(node, Leaf):
        return 1
    if isinstance(node, Seq):
        return 1 + max(depth_of(op) for op in node.operands)
    if isinstance(node, (AndOp, OrOp)):
        return 1 + max(depth_of(node.left), depth_of(node.right))
    return 1


# --- tokenizer -------------------------------------------------------------

_PUNCT = "():,="


def _scan(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch.isalnum() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            tokens.append(("num" if word.isdigit() else "word", word, i))
            i = j
            continue
        tokens.append(("other", ch, i))
        i += 1
    tokens.append(("end", "", n))
    return tokens


class _Cursor:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok


def _parse_error(message: str, pos: int) -> PatternError:
    return PatternError([Diagnostic("ParseError", message, pos)])


def _expect(cur: _Cursor, kind: str, what: str):
    tok = cur.next()
    if tok[0] != kind:
        raise _parse_error(f"expected {what}, got {tok[1]!r}", tok[2])
    return tok


def _parse_expr(cur: _Cursor, diags: list[Diagnostic]):
    tok = cur.next()
    if tok[0] != "word":
        raise _parse_error(f"expected pattern expression, got {tok[1]!r}", tok[2])
    word, pos = tok[1], tok[2]
    if word in ("SEQ", "AND", "OR", "NOT") and cur.peek()[0] == "(":
        cur.next()
        args, nots = [], []
        while True:
            if word == "SEQ" and cur.peek()[0] == "word" and cur.peek()[1] == "NOT":
                ntok = cur.next()
                if cur.peek()[0] != "(":
                    raise _parse_error("NOT needs a parenthesized event type", ntok[2])
                cur.next()
                etype = _expect(cur, "word", "event type")[1]
                _expect(cur, ")", "')'")
                nots.append(NotRef(etype))
            else:
                args.append(_parse_expr(cur, diags))
            nxt = cur.next()
            if nxt[0] == ")":
                break
            if nxt[0] != ",":
                raise _parse_error(f"expected ',' or ')', got {nxt[1]!r}", nxt[2])
        if word == "NOT":
            # parsed as operator call: NOT(x) outside SEQ reaches here
            diags.append(Diagnostic("MisplacedNot", "NOT is only allowed directly inside SEQ", pos))
            return args[0] if args else Leaf("_invalid_")
        if word == "SEQ":
            if len(args) < 2:
                diags.append(Diagnostic("BadArity", "SEQ needs at least 2 positional operands", pos))
            return Seq(tuple(args), tuple(nots))
        if len(args) != 2:
            diags.append(Diagnostic("BadArity", f"{word} takes exactly 2 operands", pos))
            args = (args + [Leaf("_invalid_"), Leaf("_invalid_")])[:2]
        return AndOp(args[0], args[1]) if word == "AND" else OrOp(args[0], args[1])
    # leaf: var:etype or bare etype
    if cur.peek()[0] == ":":
        cur.next()
        etype = _expect(cur, "word", "event type")[1]
        return Leaf(etype, var=word)
    return Leaf(word)


def _index_leaves(node, leaves: list[Leaf]):
    if isinstance(node, Leaf):
        indexed = Leaf(node.etype, node.var, len(leaves))
        leaves.append(indexed)
        return indexed
    if isinstance(node, Seq):
        return Seq(tuple(_index_leaves(op, leaves) for op in node.operands), node.nots)
    if isinstance(node, AndOp):
        return AndOp(_index_leaves(node.left, leaves), _index_leaves(node.right, leaves))
    if isinstance(node, OrOp):
        return OrOp(_index_leaves(node.left, leaves), _index_leaves(node.right, leaves))
    raise TypeError(node)


def compile_pattern(source: str) -> Pattern:
    """Compile one PATTERN declaration; raises PatternError with all diagnostics."""
    text = source.strip()
    tokens = _scan(text)
    cur = _Cursor(tokens)
    diags: list[Diagnostic] = []

    head = _expect(cur, "word", "'PATTERN'")
    if head[1] != "PATTERN":
        raise _parse_error("declaration must start with PATTERN", head[2])
    name = _expect(cur, "word", "pattern name")[1]
    _expect(cur, "=", "'='")
    root = _parse_expr(cur, diags)

    window_ms = None
    partition_key = None
    guard = None
    guard_text = None
    policy = "first"
    while cur.peek()[0] != "end":
        tok = cur.next()
        if tok[0] != "word":
            raise _parse_error(f"expected clause keyword, got {tok[1]!r}", tok[2])
        if tok[1] == "WITHIN":
            num = _expect(cur, "num", "window in ms")
            window_ms = int(num[1])
            if window_ms <= 0:
                diags.append(Diagnostic("InvalidWindow", "window must be positive", num[2]))
        elif tok[1] == "PARTITION":
            by = _expect(cur, "word", "'BY'")
            if by[1] != "BY":
                raise _parse_error("expected BY after PARTITION", by[2])
            partition_key = _expect(cur, "word", "attribute name")[1]
        elif tok[1] == "WHERE":
            start = cur.peek()[2]
            depth = 0
            while cur.peek()[0] != "end":
                kind, val, _ = cur.peek()
                if kind == "(":
                    depth += 1
                elif kind == ")":
                    depth -= 1
                elif kind == "word" and depth == 0 and val in ("POLICY", "WITHIN", "PARTITION"):
                    break
                cur.next()
            guard_text = text[start:cur.peek()[2]].strip()
            try:
                guard = exprlang.parse(guard_text)
            except exprlang.ExprError as exc:
                raise _parse_error(f"bad guard: {exc}", start + exc.pos) from None
        elif tok[1] == "POLICY":
            pol = _expect(cur, "word", "'first' or 'every'")
            if pol[1] not in ("first", "every"):
                raise _parse_error("policy must be 'first' or 'every'", pol[2])
            policy = pol[1]
        else:
            raise _parse_error(f"unknown clause {tok[1]!r}", tok[2])

    if window_ms is None:
        diags.append(Diagnostic("InvalidWindow", "missing WITHIN clause", len(text)))
        window_ms = 0

    leaves: list[Leaf] = []
    root = _index_leaves(root, leaves)

    if depth_of(root) > MAX_DEPTH:
        diags.append(Diagnostic("DepthExceeded", f"expression depth exceeds {MAX_DEPTH}", 0))

    seen_vars: set[str] = set()
    for leaf in leaves:
        if leaf.var is not None:
            if leaf.var in seen_vars:
                diags.append(Diagnostic("DuplicateVariable", f"variable {leaf.var!r} bound twice", 0))
            seen_vars.add(leaf.var)

    if guard is not None:
        for node in exprlang.walk(guard):
            if isinstance(node, exprlang.Attr) and node.var not in seen_vars:
                diags.append(Diagnostic("UnboundVariable", f"guard references unbound variable {node.var!r}", 0))
            elif isinstance(node, exprlang.Name):
                diags.append(Diagnostic("UnboundVariable", f"guard references unknown name {node.text!r}", 0))

    if diags:
        raise PatternError(diags)
    return Pattern(name=name, expr=root, window_ms=window_ms, partition_key=partition_key,
                   guard=guard, guard_text=guard_text, policy=policy, leaves=leaves)
