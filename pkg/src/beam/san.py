"""Parser and validator for goal-model documents.

A model is one text file with four sections:

    SAN <name>                                # optional header
    CONTEXT {
        <key-template>: <type> [= <init>] [ON <etype> = <expr>]
    }
    TABLES {
        <table-name>: <relative path>
    }
    PATTERNS {
        PATTERN <name> = ...                  # pattern grammar, one per line
    }
    GOAL <name> [ACTIVATED BY <pattern>] [ACHIEVED BY <pattern>] {
        ACTION <name> [IF <condition>] [PRIORITY n] [MODE auto|manual]
                      [EXPIRY <minutes>] <KIND> <payload...>
        GOAL ...                              # nested subgoals
    }

Action kinds and payloads:
    NOTIFY <audience> "<message template>"
    COMMAND <target> <verb> [key=value ...]
    SUBSCRIBE <pattern> / UNSUBSCRIBE <pattern>

Message, argument, and condition-key templates may reference attributes
bound by the goal's activating situation as ``{var.attr}`` or context keys
as ``{key}``.  The parser reports every diagnostic it can find, each with
its line number.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from . import expr as exprlang
from .context import Condition, ContextRule, Assignment, KeyDecl, TYPES, coerce, TypeMismatch
from .patterns import Pattern, PatternError, compile_pattern
from .tables import Table, TableError, load_table

RESERVED = {"IF", "PRIORITY", "MODE", "EXPIRY", "NOTIFY", "COMMAND", "SUBSCRIBE", "UNSUBSCRIBE"}
KINDS = ("Notify", "Command", "Subscribe", "Unsubscribe")


@dataclass(frozen=True)
class ActionNode:
    name: str
    kind: str                   # Notify | Command | Subscribe | Unsubscribe
    payload: dict
    condition: Condition | None = None
    priority: int = 0
    mode: str = "auto"
    expiry_min: int | None = None
    decl_index: int = 0
    line: int = 0


@dataclass
class GoalNode:
    name: str
    activation: str | None = None
    achievement: str | None = None
    subgoals: list["GoalNode"] = field(default_factory=list)
    reactions: list[ActionNode] = field(default_factory=list)
    line: int = 0


@dataclass
class SanModel:
    name: str
    schema: list[KeyDecl]
    rules: list[ContextRule]
    tables: dict[str, Table]
    patterns: dict[str, Pattern]
    root: GoalNode

    def goals(self) -> list[GoalNode]:
        out = []
        def visit(g):
            out.append(g)
            for s in g.subgoals:
                visit(s)
        visit(self.root)
        return out

    def find_goal(self, name: str) -> GoalNode | None:
        for g in self.goals():
            if g.name == name:
                return g
        return None


@dataclass(frozen=True)
class SanDiagnostic:
    line: int
    code: str
    message: str

    def __str__(self):
        return f"line {self.line}: {self.code}: {self.message}"


class SanParseError(ValueError):
    def __init__(self, diagnostics: list[SanDiagnostic]):
        self.diagnostics = sorted(diagnostics, key=lambda d: d.line)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class _Lines:
    def __init__(self, text: str):
        self.raw = text.splitlines()
        self.i = 0

    def next_content(self):
        while self.i < len(self.raw):
            lineno = self.i + 1
            line = self.raw[self.i].strip()
            self.i += 1
            if line and not line.startswith("#"):
                return lineno, line
        return None, None

    def peek_content(self):
        j = self.i
        lineno, line = self.next_content()
        self.i = j
        return lineno, line


def _parse_literal(text: str):
    node = exprlang.parse(text)
    if not isinstance(node, exprlang.Lit):
        raise ValueError(f"expected a literal, got {text!r}")
    return node.value


def parse_san(document: str, base_dir: str | Path | None = None) -> SanModel:
    """Parse and validate a model document; raises SanParseError with all diagnostics."""
    base = Path(base_dir) if base_dir else Path.cwd()
    lines = _Lines(document)
    diags: list[SanDiagnostic] = []
    name = "unnamed"
    schema: list[KeyDecl] = []
    rules: list[ContextRule] = []
    tables: dict[str, Table] = {}
    patterns: dict[str, Pattern] = {}
    root: GoalNode | None = None
    decl_counter = [0]

    lineno, line = lines.peek_content()
    if line and line.startswith("SAN "):
        lines.next_content()
        name = line[4:].strip()

    while True:
        lineno, line = lines.next_content()
        if line is None:
            break
        if line.startswith("CONTEXT"):
            _parse_context(lines, schema, rules, diags)
        elif line.startswith("TABLES"):
            _parse_tables(lines, tables, base, diags)
        elif line.startswith("PATTERNS"):
            _parse_patterns(lines, patterns, diags)
        elif line.startswith("GOAL"):
            goal = _parse_goal(lineno, line, lines, diags, decl_counter)
            if root is None:
                root = goal
            else:
                diags.append(SanDiagnostic(lineno, "ParseError",
                                           "only one root goal is allowed"))
        else:
            diags.append(SanDiagnostic(lineno, "ParseError", f"unexpected line {line!r}"))

    if root is None:
        diags.append(SanDiagnostic(len(lines.raw) + 1, "ParseError", "model has no root GOAL"))
        raise SanParseError(diags)

    model = SanModel(name, schema, rules, tables, patterns, root)
    _validate(model, diags)
    if diags:
        raise SanParseError(diags)
    return model


def _section_lines(lines: _Lines, diags):
    """Yield (lineno, line) until the closing brace of a `X {` section."""
    while True:
        lineno, line = lines.next_content()
        if line is None:
            diags.append(SanDiagnostic(len(lines.raw), "ParseError", "unterminated section"))
            return
        if line == "}":
            return
        yield lineno, line


def _parse_context(lines, schema, rules, diags):
    for lineno, line in _section_lines(lines, diags):
        try:
            head, *on_part = line.split(" ON ", 1)
            key_part, type_part = head.split(":", 1)
            key_template = key_part.strip()
            init = None
            if "=" in type_part:
                type_text, init_text = type_part.split("=", 1)
                init = _parse_literal(init_text.strip())
            else:
                type_text = type_part
            ctype = type_text.strip()
            if ctype not in TYPES:
                diags.append(SanDiagnostic(lineno, "ParseError", f"unknown type {ctype!r}"))
                continue
            if init is not None:
                try:
                    init = coerce(init, ctype)
                except TypeMismatch as exc:
                    diags.append(SanDiagnostic(lineno, "TypeMismatch", str(exc)))
                    continue
            schema.append(KeyDecl(key_template, ctype, init))
            if on_part:
                etype_text, value_text = on_part[0].split("=", 1)
                rules.append(ContextRule(etype_text.strip(), (Assignment(
                    key_template, exprlang.parse(key_template),
                    exprlang.parse(value_text.strip()), value_text.strip()),)))
        except (ValueError, exprlang.ExprError) as exc:
            diags.append(SanDiagnostic(lineno, "ParseError", f"bad context entry: {exc}"))


def _parse_tables(lines, tables, base, diags):
    for lineno, line in _section_lines(lines, diags):
        if ":" not in line:
            diags.append(SanDiagnostic(lineno, "ParseError", f"bad table entry {line!r}"))
            continue
        tname, path_text = (s.strip() for s in line.split(":", 1))
        try:
            tables[tname] = load_table(tname, base / path_text)
        except (OSError, TableError) as exc:
            diags.append(SanDiagnostic(lineno, "UnknownTable", f"cannot load table {tname!r}: {exc}"))


def _parse_patterns(lines, patterns, diags):
    for lineno, line in _section_lines(lines, diags):
        try:
            pattern = compile_pattern(line)
        except PatternError as exc:
            for d in exc.diagnostics:
                diags.append(SanDiagnostic(lineno, d.code, d.message))
            continue
        if pattern.name in patterns:
            diags.append(SanDiagnostic(lineno, "DuplicateName",
                                       f"pattern {pattern.name!r} defined twice"))
        patterns[pattern.name] = pattern


def _parse_goal(lineno, header, lines, diags, decl_counter) -> GoalNode:
    head = header.rstrip()
    if not head.endswith("{"):
        diags.append(SanDiagnostic(lineno, "ParseError", "goal header must end with '{'"))
    head = head[:-1].strip() if head.endswith("{") else head
    words = head.split()
    goal = GoalNode(name=words[1] if len(words) > 1 else "?", line=lineno)
    i = 2
    while i < len(words):
        if words[i] == "ACTIVATED" and i + 2 < len(words) and words[i + 1] == "BY":
            goal.activation = words[i + 2]
            i += 3
        elif words[i] == "ACHIEVED" and i + 2 < len(words) and words[i + 1] == "BY":
            goal.achievement = words[i + 2]
            i += 3
        else:
            diags.append(SanDiagnostic(lineno, "ParseError", f"bad goal clause {words[i]!r}"))
            i += 1
    while True:
        sub_lineno, line = lines.next_content()
        if line is None:
            diags.append(SanDiagnostic(lineno, "ParseError", f"goal {goal.name!r} is unterminated"))
            return goal
        if line == "}":
            return goal
        if line.startswith("GOAL"):
            goal.subgoals.append(_parse_goal(sub_lineno, line, lines, diags, decl_counter))
        elif line.startswith("ACTION"):
            action = _parse_action(sub_lineno, line, diags, decl_counter)
            if action is not None:
                goal.reactions.append(action)
        else:
            diags.append(SanDiagnostic(sub_lineno, "ParseError", f"unexpected line {line!r}"))


def _action_tokens(line: str):
    """Whitespace tokens with offsets; double-quoted spans stay one token."""
    tokens = []
    i, n = 0, len(line)
    while i < n:
        if line[i].isspace():
            i += 1
            continue
        start = i
        quoted = False
        buf = []
        while i < n and (quoted or not line[i].isspace()):
            if line[i] == '"':
                quoted = not quoted
            else:
                buf.append(line[i])
            i += 1
        if quoted:
            raise ValueError("unterminated quote")
        tokens.append(("".join(buf), start, i))
    return tokens


def _parse_action(lineno, line, diags, decl_counter) -> ActionNode | None:
    try:
        tokens = _action_tokens(line)
    except ValueError as exc:
        diags.append(SanDiagnostic(lineno, "ParseError", f"bad action line: {exc}"))
        return None
    if len(tokens) < 2:
        diags.append(SanDiagnostic(lineno, "ParseError", "ACTION needs a name"))
        return None
    name = tokens[1][0]
    condition = None
    priority = 0
    mode = "auto"
    expiry = None
    i = 2
    while i < len(tokens) and tokens[i][0] not in ("NOTIFY", "COMMAND", "SUBSCRIBE", "UNSUBSCRIBE"):
        word = tokens[i][0]
        if word == "IF":
            j = i + 1
            while j < len(tokens) and tokens[j][0] not in RESERVED:
                j += 1
            if j == i + 1:
                diags.append(SanDiagnostic(lineno, "ParseError", "IF needs a condition"))
                return None
            cond_text = line[tokens[i + 1][1]:tokens[j - 1][2]]
            try:
                condition = Condition(cond_text, exprlang.parse(cond_text))
            except exprlang.ExprError as exc:
                diags.append(SanDiagnostic(lineno, "ParseError", f"bad condition: {exc}"))
            i = j
        elif word == "PRIORITY" and i + 1 < len(tokens):
            try:
                priority = int(tokens[i + 1][0])
            except ValueError:
                diags.append(SanDiagnostic(lineno, "ParseError", "PRIORITY needs an integer"))
            i += 2
        elif word == "MODE" and i + 1 < len(tokens):
            if tokens[i + 1][0] not in ("auto", "manual"):
                diags.append(SanDiagnostic(lineno, "ParseError", "MODE must be auto or manual"))
            else:
                mode = tokens[i + 1][0]
            i += 2
        elif word == "EXPIRY" and i + 1 < len(tokens):
            try:
                expiry = int(tokens[i + 1][0])
            except ValueError:
                diags.append(SanDiagnostic(lineno, "ParseError", "EXPIRY needs minutes"))
            i += 2
        else:
            diags.append(SanDiagnostic(lineno, "ParseError", f"bad action clause {word!r}"))
            return None
    if i >= len(tokens):
        diags.append(SanDiagnostic(lineno, "ParseError", "action has no kind"))
        return None
    kind_word = tokens[i][0]
    rest = [t[0] for t in tokens[i + 1:]]
    if kind_word == "NOTIFY":
        if len(rest) < 2:
            diags.append(SanDiagnostic(lineno, "ParseError", "NOTIFY needs audience and message"))
            return None
        payload = {"audience": rest[0], "message": " ".join(rest[1:])}
        kind = "Notify"
    elif kind_word == "COMMAND":
        if len(rest) < 2:
            diags.append(SanDiagnostic(lineno, "ParseError", "COMMAND needs target and verb"))
            return None
        args = {}
        for tok in rest[2:]:
            if "=" not in tok:
                diags.append(SanDiagnostic(lineno, "ParseError", f"bad command arg {tok!r}"))
                return None
            k, v = tok.split("=", 1)
            args[k] = v
        payload = {"target": rest[0], "verb": rest[1], "args": args}
        kind = "Command"
    else:
        if len(rest) != 1:
            diags.append(SanDiagnostic(lineno, "ParseError", f"{kind_word} takes one pattern name"))
            return None
        payload = {"pattern": rest[0]}
        kind = "Subscribe" if kind_word == "SUBSCRIBE" else "Unsubscribe"
    decl_counter[0] += 1
    return ActionNode(name=name, kind=kind, payload=payload, condition=condition,
                      priority=priority, mode=mode, expiry_min=expiry,
                      decl_index=decl_counter[0], line=lineno)


# --- validation --------------------------------------------------------------

def _validate(model: SanModel, diags: list[SanDiagnostic]):
    goal_names: set[str] = set()
    action_names: set[str] = set()

    def visit(goal: GoalNode, ancestors: tuple[str, ...]):
        if goal.name in ancestors:
            path = " -> ".join(ancestors + (goal.name,))
            diags.append(SanDiagnostic(goal.line, "CycleDetected",
                                       f"goal {goal.name!r} is its own descendant: {path}"))
            return
        if goal.name in goal_names:
            diags.append(SanDiagnostic(goal.line, "DuplicateName",
                                       f"goal {goal.name!r} defined twice"))
        goal_names.add(goal.name)
        for ref, label in ((goal.activation, "ACTIVATED BY"), (goal.achievement, "ACHIEVED BY")):
            if ref is not None and ref not in model.patterns:
                diags.append(SanDiagnostic(goal.line, "UnknownPattern",
                                           f"{label} references undefined pattern {ref!r}"))
        bound_vars = _situation_vars(model, goal.activation)
        for action in goal.reactions:
            if action.name in action_names:
                diags.append(SanDiagnostic(action.line, "DuplicateName",
                                           f"action {action.name!r} defined twice"))
            action_names.add(action.name)
            _validate_action(model, action, bound_vars, diags)
        for sub in goal.subgoals:
            visit(sub, ancestors + (goal.name,))

    visit(model.root, ())
    _check_pattern_cycles(model, diags)
    _check_tables(model, diags)


def _situation_vars(model: SanModel, situation: str | None) -> set[str]:
    if situation is None or situation not in model.patterns:
        return set()
    return {leaf.var for leaf in model.patterns[situation].leaves if leaf.var}


def _template_refs(text: str):
    return re.findall(r"\{([^}]+)\}", text)


def _check_ref(model, action, ref, bound_vars, diags):
    if "." in ref:
        var = ref.split(".", 1)[0]
        if var not in bound_vars:
            diags.append(SanDiagnostic(action.line, "TemplateUnbound",
                                       f"action {action.name!r} references {{{ref}}} but "
                                       f"{var!r} is not bound by the activating situation"))
    else:
        if not any(decl.pattern().match(ref) or decl.template == ref for decl in model.schema):
            diags.append(SanDiagnostic(action.line, "TemplateUnbound",
                                       f"action {action.name!r} references {{{ref}}} which is "
                                       "neither a bound attribute nor a declared context key"))


def _validate_action(model: SanModel, action: ActionNode, bound_vars, diags):
    if action.kind in ("Subscribe", "Unsubscribe"):
        if action.payload["pattern"] not in model.patterns:
            diags.append(SanDiagnostic(action.line, "UnknownPattern",
                                       f"action {action.name!r} references undefined pattern "
                                       f"{action.payload['pattern']!r}"))
    if action.kind == "Notify":
        for ref in _template_refs(action.payload["message"]):
            _check_ref(model, action, ref, bound_vars, diags)
    if action.kind == "Command":
        for value in action.payload["args"].values():
            for ref in _template_refs(value):
                _check_ref(model, action, ref, bound_vars, diags)
    if action.condition is not None:
        for node in exprlang.walk(action.condition.ast):
            if isinstance(node, exprlang.Name):
                key = "".join(p if k == "lit" else "\0" for k, p in node.parts)
                if "\0" in key:
                    # templated key: every placeholder must be resolvable
                    for _, ref in (p for p in node.parts if p[0] == "ref"):
                        if "." in ref and ref.split(".", 1)[0] not in bound_vars:
                            diags.append(SanDiagnostic(
                                action.line, "TemplateUnbound",
                                f"condition of {action.name!r} references {{{ref}}} but "
                                f"{ref.split('.', 1)[0]!r} is not bound"))
                    if not _template_matches_schema(model, node):
                        diags.append(SanDiagnostic(
                            action.line, "UndeclaredKey",
                            f"condition of {action.name!r} references undeclared key "
                            f"{node.text!r}"))
                elif not any(d.pattern().match(key) for d in model.schema):
                    diags.append(SanDiagnostic(
                        action.line, "UndeclaredKey",
                        f"condition of {action.name!r} references undeclared key {key!r}"))
            elif isinstance(node, exprlang.Attr):
                if node.var not in bound_vars:
                    diags.append(SanDiagnostic(
                        action.line, "TemplateUnbound",
                        f"condition of {action.name!r} references {node.var}.{node.attr} "
                        "but the variable is not bound"))


def _template_matches_schema(model: SanModel, node) -> bool:
    """Can a templated condition key possibly match a declared template?"""
    probe = "".join(p if k == "lit" else "X" for k, p in node.parts)
    return any(d.pattern().match(probe) for d in model.schema)


def _check_pattern_cycles(model: SanModel, diags):
    edges = {name: pattern.leaf_etypes & set(model.patterns)
             for name, pattern in model.patterns.items()}
    state: dict[str, int] = {}

    def dfs(node, stack):
        state[node] = 1
        for dep in sorted(edges.get(node, ())):
            if state.get(dep) == 1:
                diags.append(SanDiagnostic(0, "PatternCycle",
                                           "pattern dependency cycle: "
                                           + " -> ".join(stack + [dep])))
            elif state.get(dep) is None:
                dfs(dep, stack + [dep])
        state[node] = 2

    for name in model.patterns:
        if state.get(name) is None:
            dfs(name, [name])


def _check_tables(model: SanModel, diags):
    for pattern in model.patterns.values():
        if pattern.guard is None:
            continue
        for node in exprlang.walk(pattern.guard):
            if isinstance(node, exprlang.InTable) and node.table not in model.tables:
                diags.append(SanDiagnostic(0, "UnknownTable",
                                           f"pattern {pattern.name!r} uses undeclared table "
                                           f"{node.table!r}"))
