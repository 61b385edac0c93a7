"""
Combination of sub-test metrics into holistic target values and verdicts.

Grammar (left-associative, ``*``/``/`` bind tighter than ``+``/``-``)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "×" | "/" | "÷") unary)*
    unary   := "-" unary | primary
    primary := NUMBER | NAME "." NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Columns in error messages are 1-based.
"""

import math
import re
from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import structlog

from .diagnostics import Diagnostic, has_errors, warning
from .exceptions import ExpressionReferenceError, ExpressionSyntaxError, PoiMismatch
from .schemas import (
    BoundarySummary,
    CharacterizationRecord,
    HolisticTestCase,
    HolisticVerdict,
    QualityAttribute,
    ResultRecord,
)

log = structlog.get_logger(__name__)

FUNCTIONS = {"sum", "mean", "max", "min", "scale"}
OPERATORS = {"×": "*", "÷": "/"}

_TOKEN = re.compile(
    r"""
    (?P<space>\s+)
    |(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    |(?P<name>[A-Za-z][A-Za-z0-9_]*)
    |(?P<op>[-+*/×÷(),.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Ref:
    subtest: str
    metric: str
    column: int

    @property
    def path(self) -> str:
        return f"{self.subtest}.{self.metric}"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]


Node = Number | Ref | Neg | BinOp | Call


@dataclass(frozen=True)
class CombinationExpression:
    text: str
    tree: Node

    @property
    def references(self) -> tuple[Ref, ...]:
        found: list[Ref] = []
        _collect(self.tree, found)
        return tuple(found)

    @property
    def subtests(self) -> tuple[str, ...]:
        return tuple(sorted({ref.subtest for ref in self.references}))


def _collect(node: Node, found: list[Ref]) -> None:
    match node:
        case Ref():
            found.append(node)
        case Neg(operand):
            _collect(operand, found)
        case BinOp(_, left, right):
            _collect(left, found)
            _collect(right, found)
        case Call(_, args):
            for arg in args:
                _collect(arg, found)


def tokenize(text: str) -> list[Token]:
    tokens = []
    position = 0
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None:
            raise ExpressionSyntaxError(f"unexpected character {text[position]!r}", position + 1)
        if match.lastgroup != "space":
            value = match.group()
            tokens.append(Token(match.lastgroup or "", OPERATORS.get(value, value), position + 1))
        position = match.end()
    tokens.append(Token("eof", "", len(text) + 1))
    return tokens


def _divide(numerator: float, denominator: float) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.divide(np.float64(numerator), np.float64(denominator)))


def apply_function(name: str, args: Sequence[float]) -> float:
    match name:
        case "sum":
            return math.fsum(args)
        case "mean":
            return math.fsum(args) / len(args)
        case "max":
            return max(args)
        case "min":
            return min(args)
    x, k = args
    return x * k


def apply_operator(op: str, left: float, right: float) -> float:
    match op:
        case "+":
            return left + right
        case "-":
            return left - right
        case "*":
            return left * right
    return _divide(left, right)


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.token
        if token.kind != "eof":
            self.index += 1
        return token

    def peek(self, *texts: str) -> bool:
        return self.token.kind == "op" and self.token.text in texts

    def match(self, text: str) -> Token:
        if not self.peek(text):
            raise ExpressionSyntaxError(f"expected {text!r}, found {self._found()}", self.token.column)
        return self.advance()

    def _found(self) -> str:
        return "end of expression" if self.token.kind == "eof" else repr(self.token.text)

    def parse(self) -> Node:
        if self.token.kind == "eof":
            raise ExpressionSyntaxError("empty expression", 1)
        tree = self.parse_expression()
        if self.token.kind != "eof":
            raise ExpressionSyntaxError(f"unexpected {self._found()}", self.token.column)
        return tree

    def parse_expression(self) -> Node:
        node = self.parse_term()
        while self.peek("+", "-"):
            op = self.advance()
            node = _fold(BinOp(op.text, node, self.parse_term()), op.column)
        return node

    def parse_term(self) -> Node:
        node = self.parse_unary()
        while self.peek("*", "/"):
            op = self.advance()
            node = _fold(BinOp(op.text, node, self.parse_unary()), op.column)
        return node

    def parse_unary(self) -> Node:
        if self.peek("-"):
            self.advance()
            operand = self.parse_unary()
            return Number(-operand.value) if isinstance(operand, Number) else Neg(operand)
        return self.parse_primary()

    def parse_primary(self) -> Node:
        token = self.token
        if token.kind == "number":
            self.advance()
            return Number(float(token.text))
        if self.peek("("):
            self.advance()
            node = self.parse_expression()
            self.match(")")
            return node
        if token.kind != "name":
            raise ExpressionSyntaxError(f"unexpected {self._found()}", token.column)

        self.advance()
        if self.peek("("):
            return self.parse_call(token)
        self.match(".")
        metric = self.advance()
        if metric.kind != "name":
            raise ExpressionSyntaxError("expected a metric name after '.'", metric.column)
        return Ref(token.text, metric.text, token.column)

    def parse_call(self, name: Token) -> Node:
        if name.text not in FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function {name.text!r}", name.column)
        self.match("(")
        args = [self.parse_expression()]
        while self.peek(","):
            self.advance()
            args.append(self.parse_expression())
        self.match(")")
        if name.text == "scale" and len(args) != 2:
            raise ExpressionSyntaxError(f"scale takes 2 arguments, got {len(args)}", name.column)
        if all(isinstance(arg, Number) for arg in args):
            return Number(apply_function(name.text, [arg.value for arg in args]))  # type: ignore[union-attr]
        return Call(name.text, tuple(args))


def _fold(node: BinOp, column: int) -> Node:
    if node.op == "/" and isinstance(node.right, Number) and node.right.value == 0:
        raise ExpressionSyntaxError("division by zero", column)
    if isinstance(node.left, Number) and isinstance(node.right, Number):
        return Number(apply_operator(node.op, node.left.value, node.right.value))
    return node


def parse_expression(
    text: str, known_metrics: Mapping[str, Collection[str]] | None = None
) -> CombinationExpression:
    """
    Parse a combination expression.

    With ``known_metrics`` (sub-test id to declared metric ids) every
    reference must resolve, else ``ExpressionReferenceError``.
    """
    try:
        tree = Parser(text).parse()
    except RecursionError:
        raise ExpressionSyntaxError("expression is nested too deeply", 1) from None
    expression = CombinationExpression(text, tree)
    if known_metrics is not None:
        for ref in expression.references:
            if ref.metric not in known_metrics.get(ref.subtest, ()):
                raise ExpressionReferenceError(f"unknown metric {ref.path!r} (column {ref.column})")
    return expression


def evaluate_expression(node: Node, metrics: Mapping[str, Mapping[str, float]]) -> float:
    match node:
        case Number(value):
            return value
        case Ref():
            try:
                return float(metrics[node.subtest][node.metric])
            except KeyError:
                raise ExpressionReferenceError(f"no value for metric {node.path!r}") from None
        case Neg(operand):
            return -evaluate_expression(operand, metrics)
        case BinOp(op, left, right):
            return apply_operator(op, evaluate_expression(left, metrics), evaluate_expression(right, metrics))
        case Call(name, args):
            return apply_function(name, [evaluate_expression(arg, metrics) for arg in args])
    raise TypeError(f"unexpected node {node!r}")


@dataclass
class CombinedValues:
    values: dict[str, float] = field(default_factory=dict)
    unevaluable: list[str] = field(default_factory=list)
    provenance: dict[str, tuple[str, ...]] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)


def combine(exprs: Mapping[str, CombinationExpression], records: Sequence[ResultRecord]) -> CombinedValues:
    by_subtest = {record.subtest_id: record for record in records}
    combined = CombinedValues()
    limited: set[str] = set()
    for target_id, expression in exprs.items():
        contributors = expression.subtests
        combined.provenance[target_id] = contributors
        unusable = [s for s in contributors if s not in by_subtest or not by_subtest[s].usable]
        if unusable:
            combined.unevaluable.append(target_id)
            log.info("target unevaluable", target=target_id, missing=unusable)
            continue
        metrics = {s: by_subtest[s].metrics for s in contributors}
        value = evaluate_expression(expression.tree, metrics)
        if math.isnan(value):
            combined.unevaluable.append(target_id)
            combined.diagnostics.append(
                warning("W_UNDEFINED_VALUE", f"/targets/{target_id}", f"{expression.text!r} has no defined value")
            )
            continue
        combined.values[target_id] = value
        limited.update(s for s in contributors if by_subtest[s].status == "iteration_limit")
    for subtest_id in sorted(limited):
        combined.diagnostics.append(
            warning("W_ITERATION_LIMIT", f"/records/{subtest_id}", f"{subtest_id} stopped at its iteration limit")
        )
    combined.unevaluable.sort()
    return combined


def predicate_holds(value: float, quality: QualityAttribute) -> bool:
    threshold = quality.threshold.value
    if math.isnan(value):
        return False
    match quality.predicate:
        case "lt":
            return value < threshold
        case "le":
            return value <= threshold
        case "gt":
            return value > threshold
    return value >= threshold


def evaluate(
    tc: HolisticTestCase, combined: CombinedValues, sweeps: Sequence[CharacterizationRecord] = ()
) -> HolisticVerdict:
    if tc.poi.kind == "characterization" and not sweeps:
        raise PoiMismatch(f"{tc.id} is a characterization test but no sweep records are available")

    diagnostics = list(combined.diagnostics)
    if combined.unevaluable:
        diagnostics.append(
            warning("W_INCOMPLETE", "/values", f"targets without usable records: {', '.join(combined.unevaluable)}")
        )

    if tc.poi.kind != "characterization":
        quality = {
            q.id: ("pass" if predicate_holds(combined.values[q.target_ref], q) else "fail")
            for q in tc.criteria.quality
            if q.target_ref in combined.values
        }
        complete = not combined.unevaluable and not has_errors(diagnostics)
        overall = ("pass" if all(v == "pass" for v in quality.values()) else "fail") if complete else None
        return HolisticVerdict(
            test_case=tc.id,
            poi=tc.poi.kind,
            values=combined.values,
            unevaluable=tuple(combined.unevaluable),
            quality=quality,
            overall=overall,
            provenance=combined.provenance,
            diagnostics=tuple(diagnostics),
        )

    summary = []
    for variability in tc.criteria.variability:
        found = sorted((s for s in sweeps if s.variability_id == variability.id), key=lambda s: s.subtest_id)
        if not found:
            diagnostics.append(
                warning("W_NO_SWEEP", "/characterization", f"no sweep record for variability {variability.id!r}")
            )
            summary.append(BoundarySummary(variability_id=variability.id))
            continue
        record = found[0]
        diagnostics.extend(record.diagnostics)
        summary.append(
            BoundarySummary(variability_id=variability.id, subtest_id=record.subtest_id, boundary=record.boundary)
        )
    return HolisticVerdict(
        test_case=tc.id,
        poi=tc.poi.kind,
        values=combined.values,
        unevaluable=tuple(combined.unevaluable),
        characterization=tuple(summary),
        provenance=combined.provenance,
        diagnostics=tuple(diagnostics),
    )


def render_report(tc: HolisticTestCase, verdict: HolisticVerdict) -> str:
    lines = []
    for target in tc.criteria.target:
        contributors = ",".join(verdict.provenance.get(target.id, ()))
        value = repr(verdict.values[target.id]) if target.id in verdict.values else "UNEVALUABLE"
        lines.append(f"TARGET {target.id} = {value} [{contributors}]")
    if verdict.characterization is None:
        for quality in tc.criteria.quality:
            lines.append(f"QUALITY {quality.id} {verdict.quality.get(quality.id, 'unevaluable').upper()}")
    else:
        for entry in verdict.characterization:
            boundary = "none" if entry.boundary is None else repr(entry.boundary)
            lines.append(f"BOUNDARY {entry.variability_id} = {boundary}")

    if verdict.unevaluable:
        overall = "INCOMPLETE"
    elif verdict.characterization is not None:
        overall = "CHARACTERIZED"
    else:
        overall = (verdict.overall or "incomplete").upper()
    lines.append(f"OVERALL {overall}")
    return "\n".join(lines) + "\n"
