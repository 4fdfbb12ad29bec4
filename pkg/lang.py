"""
確率的 while 言語: 構文解析・ラベル付け・制御フロー

文法:
    var <name>:{v1,...,vk};            変数宣言（有限ドメイン）
    skip | x := e | x ?= {v1,...} | x ?= {(v1,p1),...}
    S1; S2
    choose p1: S1 or p2: S2 [or ...] ro
    if b then S1 else S2 fi
    while b do S od

ラベルはブロックの直後に @n で明示できます（while / if は条件の直後、
choose はキーワードの直後）。省略したラベルには、出現順に「明示ラベルにも
先行ブロックにも使われていない最小の正整数」を割り当てます。
そのため `skip@5; skip` の 2 つ目は 1 になり、ラベルの大小は出現順と一致しないことがあります。
choose の確率には #name（パラメータ）と 1-#name も書けます。
"""

import re
from dataclasses import dataclass
from typing import (
    Callable, Dict, FrozenSet, Iterator, List, Mapping, NamedTuple,
    Optional, Sequence, Set, Tuple, Union,
)

from los_errors import (
    DomainError, LosInputError, ParseError, ProbabilityError, UnboundParameterError,
)

PROB_TOL = 1e-9

PLAIN = "plain"
UNDERLINED = "underlined"


# =====================
# 式
# =====================
@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "AExpr"
    right: "AExpr"


@dataclass(frozen=True)
class Neg:
    operand: "AExpr"


AExpr = Union[Const, VarRef, BinOp, Neg]


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class Compare:
    op: str
    left: AExpr
    right: AExpr


@dataclass(frozen=True)
class Logic:
    op: str
    left: "BExpr"
    right: "BExpr"


@dataclass(frozen=True)
class Not:
    operand: "BExpr"


BExpr = Union[BoolConst, Compare, Logic, Not]


# =====================
# 確率式・分布
# =====================
@dataclass(frozen=True)
class ProbLiteral:
    value: float


@dataclass(frozen=True)
class ProbParam:
    name: str


@dataclass(frozen=True)
class ProbComplement:
    """1-#name"""
    name: str


ProbExpr = Union[ProbLiteral, ProbParam, ProbComplement]


@dataclass(frozen=True)
class Distribution:
    """
    ランダム代入の分布

    support は (値, 確率) の組。{v1,...} の省略形は uniform=True で保持し、
    整形出力で同じ形に戻します。
    """
    support: Tuple[Tuple[int, float], ...]
    uniform: bool = False

    @classmethod
    def uniform_over(cls, values: Sequence[int]) -> "Distribution":
        p = 1.0 / len(values)
        return cls(tuple((v, p) for v in values), uniform=True)


# =====================
# 文
# =====================
@dataclass(frozen=True)
class Skip:
    label: int


@dataclass(frozen=True)
class Assign:
    var: str
    expr: AExpr
    label: int


@dataclass(frozen=True)
class RandomAssign:
    var: str
    dist: Distribution
    label: int


@dataclass(frozen=True)
class Seq:
    first: "Stmt"
    second: "Stmt"


@dataclass(frozen=True)
class Choose:
    branches: Tuple[Tuple[ProbExpr, "Stmt"], ...]
    label: int


@dataclass(frozen=True)
class If:
    cond: BExpr
    then_branch: "Stmt"
    else_branch: "Stmt"
    label: int


@dataclass(frozen=True)
class While:
    cond: BExpr
    body: "Stmt"
    label: int


@dataclass(frozen=True)
class Stop:
    """P ≡ S; [stop]^ℓ* の仮想ブロック"""
    label: int


Stmt = Union[Skip, Assign, RandomAssign, Seq, Choose, If, While]
ATOMIC = (Skip, Assign, RandomAssign)


@dataclass(frozen=True)
class FlowEdge:
    source: int
    target: int
    polarity: str = PLAIN
    probability: Optional[ProbExpr] = None


@dataclass(frozen=True)
class Program:
    decls: Tuple[Tuple[str, Tuple[int, ...]], ...]
    body: Stmt
    stop_label: int
    init_label: int

    @property
    def variables(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.decls)

    @property
    def domains(self) -> Dict[str, Tuple[int, ...]]:
        return dict(self.decls)

    @property
    def labels(self) -> Tuple[int, ...]:
        """ℓ* を含む全ラベル（昇順）"""
        return tuple(sorted(set(_labels(self.body)) | {self.stop_label}))

    @property
    def label_count(self) -> int:
        return len(self.labels)

    def label_position(self, label: int) -> int:
        """テンソルのラベル因子での 1 始まりの位置"""
        try:
            return self.labels.index(label) + 1
        except ValueError:
            raise LosInputError(f"❌ プログラムに存在しないラベル: {label}")


def make_program(decls: Sequence[Tuple[str, Sequence[int]]], body: Stmt) -> Program:
    decls = tuple((name, tuple(values)) for name, values in decls)
    stop = max(_labels(body)) + 1
    return Program(decls=decls, body=body, stop_label=stop, init_label=init(body))


def _labels(stmt: Stmt) -> Iterator[int]:
    if isinstance(stmt, Seq):
        yield from _labels(stmt.first)
        yield from _labels(stmt.second)
    elif isinstance(stmt, Choose):
        yield stmt.label
        for _, branch in stmt.branches:
            yield from _labels(branch)
    elif isinstance(stmt, If):
        yield stmt.label
        yield from _labels(stmt.then_branch)
        yield from _labels(stmt.else_branch)
    elif isinstance(stmt, While):
        yield stmt.label
        yield from _labels(stmt.body)
    else:
        yield stmt.label


# =====================
# 字句解析
# =====================
class Token(NamedTuple):
    kind: str
    value: str
    line: int
    column: int


KEYWORDS = {
    "var", "skip", "choose", "or", "ro", "if", "then", "else", "fi",
    "while", "do", "od", "true", "false",
}
TERMINATORS = {"od", "fi", "else", "or", "ro"}
COMPARISONS = {"==", "!=", "<", "<=", ">", ">="}

_TOKEN_RE = re.compile(r"""
    (?P<COMMENT>//[^\n]*|\#(?![A-Za-z_])[^\n]*)
  | (?P<NEWLINE>\n)
  | (?P<WS>[ \t\r]+)
  | (?P<NUM>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)
  | (?P<PARAM>\#[A-Za-z_]\w*)
  | (?P<LABEL>@\d+)
  | (?P<NAME>[A-Za-z_]\w*)
  | (?P<OP>:=|\?=|==|!=|<=|>=|&&|\|\||[<>!+\-*%/(){},;:])
  | (?P<MISMATCH>.)
""", re.VERBOSE)


def tokenize(source: str) -> List[Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(source):
        kind = m.lastgroup
        value = m.group()
        column = m.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = m.end()
            continue
        if kind in ("WS", "COMMENT"):
            continue
        if kind == "MISMATCH":
            raise ParseError(f"予期しない文字 {value!r}", line, column)
        if kind == "NAME" and value in KEYWORDS:
            kind = "KW"
        tokens.append(Token(kind, value, line, column))
    tokens.append(Token("EOF", "", line, m.end() - line_start + 1 if tokens else 1))
    return tokens


# =====================
# 構文解析
# =====================
class _Parser:
    def __init__(self, source: str, decls: Optional[Sequence[Tuple[str, Sequence[int]]]] = None):
        self.tokens = tokenize(source)
        self.pos = 0
        self.decls: Dict[str, Tuple[int, ...]] = {n: tuple(v) for n, v in (decls or [])}
        self.explicit_labels = self._scan_labels()
        self.used_labels: Set[int] = set()
        self.next_auto = 1

    # ---- トークン操作
    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, kind: str, value: Optional[str] = None, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok.kind == kind and (value is None or tok.value == value)

    def advance(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind: str, value: Optional[str] = None) -> Token:
        if not self.at(kind, value):
            wanted = value or kind
            raise self.error(f"{wanted!r} が必要ですが {self.peek().value or 'EOF'!r} があります")
        return self.advance()

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.column)

    def _where(self, tok: Token) -> str:
        return f"{tok.line}行{tok.column}列"

    # ---- ラベル
    def _scan_labels(self) -> Set[int]:
        seen: Set[int] = set()
        for tok in self.tokens:
            if tok.kind != "LABEL":
                continue
            n = int(tok.value[1:])
            if n < 1:
                raise self.error("ラベルは 1 以上の整数です", tok)
            if n in seen:
                raise self.error(f"ラベル @{n} が重複しています", tok)
            seen.add(n)
        return seen

    def take_label(self) -> int:
        if self.at("LABEL"):
            n = int(self.advance().value[1:])
        else:
            while self.next_auto in self.explicit_labels or self.next_auto in self.used_labels:
                self.next_auto += 1
            n = self.next_auto
        self.used_labels.add(n)
        return n

    # ---- プログラム
    def parse_program(self) -> Program:
        while self.at("KW", "var"):
            self.parse_decl()
        if self.at("EOF"):
            raise self.error("プログラム本体がありません")
        body = self.parse_stmts()
        self.expect("EOF")
        return make_program(list(self.decls.items()), body)

    def parse_decl(self) -> None:
        self.expect("KW", "var")
        name_tok = self.expect("NAME")
        if name_tok.value in self.decls:
            raise self.error(f"変数 {name_tok.value} が二重に宣言されています", name_tok)
        self.expect("OP", ":")
        values = self.parse_int_set()
        self.expect("OP", ";")
        self.decls[name_tok.value] = tuple(values)

    def parse_int_set(self) -> List[int]:
        open_tok = self.expect("OP", "{")
        values: List[int] = []
        if not self.at("OP", "}"):
            values.append(self.parse_int())
            while self.at("OP", ","):
                self.advance()
                values.append(self.parse_int())
        self.expect("OP", "}")
        if len(set(values)) != len(values):
            raise self.error("値の集合に重複があります", open_tok)
        return values

    def parse_int(self) -> int:
        sign = 1
        if self.at("OP", "-"):
            self.advance()
            sign = -1
        tok = self.expect("NUM")
        if not tok.value.isdigit():
            raise self.error(f"整数が必要です: {tok.value}", tok)
        return sign * int(tok.value)

    # ---- 文
    def _at_terminator(self) -> bool:
        return self.at("EOF") or (self.peek().kind == "KW" and self.peek().value in TERMINATORS)

    def parse_stmts(self) -> Stmt:
        stmts = [self.parse_stmt()]
        while self.at("OP", ";"):
            self.advance()
            if self._at_terminator():
                break
            stmts.append(self.parse_stmt())
        return seq_of(stmts)

    def parse_stmt(self) -> Stmt:
        tok = self.peek()
        if self.at("KW", "skip"):
            self.advance()
            return Skip(self.take_label())
        if self.at("KW", "choose"):
            return self.parse_choose()
        if self.at("KW", "if"):
            self.advance()
            cond = self.parse_bexpr()
            label = self.take_label()
            self.expect("KW", "then")
            then_branch = self.parse_stmts()
            self.expect("KW", "else")
            else_branch = self.parse_stmts()
            self.expect("KW", "fi")
            return If(cond, then_branch, else_branch, label)
        if self.at("KW", "while"):
            self.advance()
            cond = self.parse_bexpr()
            label = self.take_label()
            self.expect("KW", "do")
            body = self.parse_stmts()
            self.expect("KW", "od")
            return While(cond, body, label)
        if self.at("NAME"):
            name = self.advance().value
            self._check_declared(name, tok)
            if self.at("OP", ":="):
                self.advance()
                expr = self.parse_aexpr()
                if not free_vars(expr):
                    value = eval_aexpr(expr, {})
                    if value not in self.decls[name]:
                        raise DomainError(
                            f"❌ {self._where(tok)}: 値 {value} は {name} のドメイン "
                            f"{set(self.decls[name])} の外です"
                        )
                return Assign(name, expr, self.take_label())
            if self.at("OP", "?="):
                self.advance()
                dist = self.parse_distribution(name, tok)
                return RandomAssign(name, dist, self.take_label())
            raise self.error(f"{name} の後に := または ?= が必要です")
        raise self.error(f"文が必要ですが {tok.value or 'EOF'!r} があります")

    def parse_choose(self) -> Choose:
        choose_tok = self.expect("KW", "choose")
        label = self.take_label()
        branches = []
        while True:
            prob = self.parse_prob()
            self.expect("OP", ":")
            branches.append((prob, self.parse_stmts()))
            if not self.at("KW", "or"):
                break
            self.advance()
        self.expect("KW", "ro")
        if len(branches) < 2:
            raise self.error("choose には 2 つ以上の分岐が必要です", choose_tok)
        if all(isinstance(p, ProbLiteral) for p, _ in branches):
            total = sum(p.value for p, _ in branches)
            if abs(total - 1.0) > PROB_TOL:
                raise ProbabilityError(
                    f"❌ {self._where(choose_tok)}: choose の確率の合計が 1 ではありません"
                    f"（合計 {total:g}）"
                )
        return Choose(tuple(branches), label)

    def parse_prob_number(self) -> float:
        tok = self.expect("NUM")
        value = float(tok.value)
        if self.at("OP", "/"):
            self.advance()
            den_tok = self.expect("NUM")
            den = float(den_tok.value)
            if den == 0:
                raise self.error("確率の分母が 0 です", den_tok)
            value /= den
        if not (0.0 <= value <= 1.0):
            raise ProbabilityError(
                f"❌ {self._where(tok)}: 確率 {value:g} は [0,1] の外です"
            )
        return value

    def parse_prob(self) -> ProbExpr:
        if self.at("OP", "("):
            self.advance()
            prob = self.parse_prob()
            self.expect("OP", ")")
            return prob
        if self.at("PARAM"):
            return ProbParam(self.advance().value[1:])
        if self.at("NUM") and self.at("OP", "-", 1) and self.at("PARAM", None, 2):
            one = self.advance()
            if float(one.value) != 1.0:
                raise self.error("パラメータの補数は 1-#name の形で書きます", one)
            self.advance()
            return ProbComplement(self.advance().value[1:])
        return ProbLiteral(self.parse_prob_number())

    def parse_distribution(self, var: str, tok: Token) -> Distribution:
        self.expect("OP", "{")
        if self.at("OP", "("):
            support = []
            while True:
                self.expect("OP", "(")
                value = self.parse_int()
                self.expect("OP", ",")
                prob = self.parse_prob_number()
                self.expect("OP", ")")
                support.append((value, prob))
                if not self.at("OP", ","):
                    break
                self.advance()
            self.expect("OP", "}")
            dist = Distribution(tuple(support))
        else:
            values = [self.parse_int()]
            while self.at("OP", ","):
                self.advance()
                values.append(self.parse_int())
            self.expect("OP", "}")
            dist = Distribution.uniform_over(values)

        values = [v for v, _ in dist.support]
        if len(set(values)) != len(values):
            raise self.error("分布の台に重複した値があります", tok)
        for v in values:
            if v not in self.decls[var]:
                raise DomainError(
                    f"❌ {self._where(tok)}: 値 {v} は {var} のドメイン {set(self.decls[var])} の外です"
                )
        total = sum(p for _, p in dist.support)
        if abs(total - 1.0) > PROB_TOL:
            raise ProbabilityError(
                f"❌ {self._where(tok)}: 分布の確率の合計が 1 ではありません（合計 {total:g}）"
            )
        return dist

    # ---- 算術式
    def _check_declared(self, name: str, tok: Token) -> None:
        if name not in self.decls:
            raise self.error(f"未宣言の変数 {name}", tok)

    def parse_aexpr(self) -> AExpr:
        left = self.parse_term()
        while self.at("OP", "+") or self.at("OP", "-"):
            op = self.advance().value
            left = BinOp(op, left, self.parse_term())
        return left

    def parse_term(self) -> AExpr:
        left = self.parse_factor()
        while self.at("OP", "*") or self.at("OP", "%"):
            op = self.advance().value
            left = BinOp(op, left, self.parse_factor())
        return left

    def parse_factor(self) -> AExpr:
        tok = self.peek()
        if self.at("OP", "-"):
            self.advance()
            return Neg(self.parse_factor())
        if self.at("NUM"):
            self.advance()
            if not tok.value.isdigit():
                raise self.error(f"式の中では整数のみ使えます: {tok.value}", tok)
            return Const(int(tok.value))
        if self.at("NAME"):
            self.advance()
            self._check_declared(tok.value, tok)
            return VarRef(tok.value)
        if self.at("OP", "("):
            self.advance()
            expr = self.parse_aexpr()
            self.expect("OP", ")")
            return expr
        raise self.error(f"式が必要ですが {tok.value or 'EOF'!r} があります")

    # ---- 論理式
    def parse_bexpr(self) -> BExpr:
        left = self.parse_band()
        while self.at("OP", "||"):
            self.advance()
            left = Logic("||", left, self.parse_band())
        return left

    def parse_band(self) -> BExpr:
        left = self.parse_bnot()
        while self.at("OP", "&&"):
            self.advance()
            left = Logic("&&", left, self.parse_bnot())
        return left

    def parse_bnot(self) -> BExpr:
        if self.at("OP", "!"):
            self.advance()
            return Not(self.parse_bnot())
        return self.parse_batom()

    def parse_batom(self) -> BExpr:
        if self.at("KW", "true") or self.at("KW", "false"):
            return BoolConst(self.advance().value == "true")
        if self.at("OP", "("):
            # (b) と (e) == e の曖昧さはバックトラックで解決
            saved = self.pos
            try:
                self.advance()
                inner = self.parse_bexpr()
                self.expect("OP", ")")
                if not (self.peek().kind == "OP" and self.peek().value in COMPARISONS):
                    return inner
            except ParseError:
                pass
            self.pos = saved
        left = self.parse_aexpr()
        tok = self.peek()
        if not (tok.kind == "OP" and tok.value in COMPARISONS):
            raise self.error(f"比較演算子が必要ですが {tok.value or 'EOF'!r} があります")
        self.advance()
        return Compare(tok.value, left, self.parse_aexpr())


def parse(source: str) -> Program:
    """プログラムのテキストを完全にラベル付けされた Program に変換"""
    return _Parser(source).parse_program()


def parse_file(path) -> Program:
    with open(path, "r", encoding="utf-8") as f:
        return parse(f.read())


def parse_statement(source: str, decls: Sequence[Tuple[str, Sequence[int]]]) -> Stmt:
    """宣言済みの変数の下で文（ブロックライブラリの要素など）を解析"""
    parser = _Parser(source, decls)
    stmt = parser.parse_stmts()
    parser.expect("EOF")
    return stmt


def parse_bexpr(source: str, decls: Sequence[Tuple[str, Sequence[int]]]) -> BExpr:
    parser = _Parser(source, decls)
    expr = parser.parse_bexpr()
    parser.expect("EOF")
    return expr


def seq_of(stmts: Sequence[Stmt]) -> Stmt:
    result = stmts[-1]
    for stmt in reversed(stmts[:-1]):
        result = Seq(stmt, result)
    return result


def flatten(stmt: Stmt) -> List[Stmt]:
    if isinstance(stmt, Seq):
        return flatten(stmt.first) + flatten(stmt.second)
    return [stmt]


# =====================
# 評価
# =====================
def eval_aexpr(expr: AExpr, env: Mapping[str, int]) -> int:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, VarRef):
        return env[expr.name]
    if isinstance(expr, Neg):
        return -eval_aexpr(expr.operand, env)
    left = eval_aexpr(expr.left, env)
    right = eval_aexpr(expr.right, env)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if right == 0:
        raise DomainError("❌ 0 による剰余が発生しました")
    return left % right


def eval_bexpr(expr: BExpr, env: Mapping[str, int]) -> bool:
    if isinstance(expr, BoolConst):
        return expr.value
    if isinstance(expr, Not):
        return not eval_bexpr(expr.operand, env)
    if isinstance(expr, Logic):
        if expr.op == "&&":
            return eval_bexpr(expr.left, env) and eval_bexpr(expr.right, env)
        return eval_bexpr(expr.left, env) or eval_bexpr(expr.right, env)
    left = eval_aexpr(expr.left, env)
    right = eval_aexpr(expr.right, env)
    return {
        "==": left == right, "!=": left != right,
        "<": left < right, "<=": left <= right,
        ">": left > right, ">=": left >= right,
    }[expr.op]


def free_vars(expr: Union[AExpr, BExpr]) -> FrozenSet[str]:
    if isinstance(expr, VarRef):
        return frozenset([expr.name])
    if isinstance(expr, (Const, BoolConst)):
        return frozenset()
    if isinstance(expr, (Neg, Not)):
        return free_vars(expr.operand)
    return free_vars(expr.left) | free_vars(expr.right)


def assigned_var(stmt: Stmt) -> Optional[str]:
    if isinstance(stmt, (Assign, RandomAssign)):
        return stmt.var
    return None


def read_vars(stmt: Stmt) -> FrozenSet[str]:
    """ブロックが読む変数（ランダム代入は何も読まない）"""
    if isinstance(stmt, Assign):
        return free_vars(stmt.expr)
    if isinstance(stmt, (If, While)):
        return free_vars(stmt.cond)
    return frozenset()


# =====================
# init / final / flow
# =====================
def init(node: Union[Program, Stmt]) -> int:
    if isinstance(node, Program):
        return node.init_label
    if isinstance(node, Seq):
        return init(node.first)
    return node.label


def final(node: Union[Program, Stmt]) -> FrozenSet[int]:
    if isinstance(node, Program):
        return final(node.body)
    if isinstance(node, Seq):
        return final(node.second)
    if isinstance(node, Choose):
        return frozenset().union(*(final(b) for _, b in node.branches))
    if isinstance(node, If):
        return final(node.then_branch) | final(node.else_branch)
    return frozenset([node.label])


def _flow(stmt: Stmt) -> Set[FlowEdge]:
    if isinstance(stmt, ATOMIC):
        return set()
    if isinstance(stmt, Seq):
        edges = _flow(stmt.first) | _flow(stmt.second)
        edges |= {FlowEdge(l, init(stmt.second)) for l in final(stmt.first)}
        return edges
    if isinstance(stmt, Choose):
        edges: Set[FlowEdge] = set()
        for prob, branch in stmt.branches:
            edges |= _flow(branch)
            edges.add(FlowEdge(stmt.label, init(branch), PLAIN, prob))
        return edges
    if isinstance(stmt, If):
        edges = _flow(stmt.then_branch) | _flow(stmt.else_branch)
        edges.add(FlowEdge(stmt.label, init(stmt.then_branch), UNDERLINED))
        edges.add(FlowEdge(stmt.label, init(stmt.else_branch), PLAIN))
        return edges
    # While: 真の分岐が本体へ、本体の出口がテストへ戻る。偽の出口は外側で付く
    edges = _flow(stmt.body)
    edges.add(FlowEdge(stmt.label, init(stmt.body), UNDERLINED))
    edges |= {FlowEdge(l, stmt.label) for l in final(stmt.body)}
    return edges


def flow(program: Program) -> FrozenSet[FlowEdge]:
    """前向き制御フロー F(P)（ℓ* の自己ループを含む）"""
    edges = _flow(program.body)
    edges |= {FlowEdge(l, program.stop_label) for l in final(program.body)}
    edges.add(FlowEdge(program.stop_label, program.stop_label))
    return frozenset(edges)


def sorted_flow(program: Program) -> List[FlowEdge]:
    return sorted(flow(program), key=lambda e: (e.source, e.target, e.polarity))


def blocks(program: Program) -> Dict[int, Union[Stmt, Stop]]:
    """ラベル → ブロック（原子文、テストを持つ if/while、choose、仮想 stop）"""
    result: Dict[int, Union[Stmt, Stop]] = {}

    def visit(stmt: Stmt) -> None:
        if isinstance(stmt, Seq):
            visit(stmt.first)
            visit(stmt.second)
            return
        result[stmt.label] = stmt
        if isinstance(stmt, Choose):
            for _, branch in stmt.branches:
                visit(branch)
        elif isinstance(stmt, If):
            visit(stmt.then_branch)
            visit(stmt.else_branch)
        elif isinstance(stmt, While):
            visit(stmt.body)

    visit(program.body)
    result[program.stop_label] = Stop(program.stop_label)
    return result


# =====================
# パラメータ
# =====================
def prob_value(prob: ProbExpr, values: Optional[Mapping[str, float]] = None) -> float:
    if isinstance(prob, ProbLiteral):
        return prob.value
    if values is None or prob.name not in values:
        raise UnboundParameterError(f"❌ パラメータ #{prob.name} に値が束縛されていません")
    value = float(values[prob.name])
    return 1.0 - value if isinstance(prob, ProbComplement) else value


def _map_stmt(stmt: Stmt, on_choose: Callable[[Choose], Stmt]) -> Stmt:
    if isinstance(stmt, Seq):
        return Seq(_map_stmt(stmt.first, on_choose), _map_stmt(stmt.second, on_choose))
    if isinstance(stmt, If):
        return If(stmt.cond, _map_stmt(stmt.then_branch, on_choose),
                  _map_stmt(stmt.else_branch, on_choose), stmt.label)
    if isinstance(stmt, While):
        return While(stmt.cond, _map_stmt(stmt.body, on_choose), stmt.label)
    if isinstance(stmt, Choose):
        mapped = Choose(tuple((p, _map_stmt(b, on_choose)) for p, b in stmt.branches), stmt.label)
        return on_choose(mapped)
    return stmt


def _choose_sites(stmt: Stmt) -> Iterator[Choose]:
    if isinstance(stmt, Seq):
        yield from _choose_sites(stmt.first)
        yield from _choose_sites(stmt.second)
    elif isinstance(stmt, Choose):
        yield stmt
        for _, branch in stmt.branches:
            yield from _choose_sites(branch)
    elif isinstance(stmt, If):
        yield from _choose_sites(stmt.then_branch)
        yield from _choose_sites(stmt.else_branch)
    elif isinstance(stmt, While):
        yield from _choose_sites(stmt.body)


def parametric_sites(program: Program) -> List[Choose]:
    return [c for c in _choose_sites(program.body)
            if any(not isinstance(p, ProbLiteral) for p, _ in c.branches)]


def parameters(program: Program) -> List[str]:
    names: List[str] = []
    for site in parametric_sites(program):
        for prob, _ in site.branches:
            if not isinstance(prob, ProbLiteral) and prob.name not in names:
                names.append(prob.name)
    return names


def bind_parameters(program: Program, values: Mapping[str, float], check: bool = True) -> Program:
    """#name を数値に置き換えたプログラムを返す（check=True なら正規化を検査）"""

    def bind(choose: Choose) -> Choose:
        probs = [prob_value(p, values) for p, _ in choose.branches]
        if check:
            for p in probs:
                if p < -PROB_TOL or p > 1.0 + PROB_TOL:
                    raise ProbabilityError(
                        f"❌ ラベル {choose.label} の choose に [0,1] 外の確率 {p:g}"
                    )
            total = sum(probs)
            if abs(total - 1.0) > PROB_TOL:
                raise ProbabilityError(
                    f"❌ ラベル {choose.label} の choose の確率の合計が 1 ではありません（合計 {total:g}）"
                )
        return Choose(tuple((ProbLiteral(p), b) for p, (_, b) in zip(probs, choose.branches)),
                      choose.label)

    body = _map_stmt(program.body, bind)
    return Program(program.decls, body, program.stop_label, program.init_label)


def specialize(program: Program, decisions: Mapping[int, Union[int, Sequence[Tuple[int, float]]]]) -> Program:
    """
    choose を決定に従って置き換える

    decisions[label] が整数なら該当分岐の文そのものに、
    (分岐番号, 確率) のリストならその分岐だけを持つリテラル確率の choose にします。
    """

    def apply(choose: Choose) -> Stmt:
        if choose.label not in decisions:
            return choose
        decision = decisions[choose.label]
        if isinstance(decision, int):
            return choose.branches[decision][1]
        kept = list(decision)
        if len(kept) == 1:
            return choose.branches[kept[0][0]][1]
        return Choose(tuple((ProbLiteral(p), choose.branches[j][1]) for j, p in kept), choose.label)

    return make_program(program.decls, _map_stmt(program.body, apply))


# =====================
# 整形出力
# =====================
_APREC = {"+": 1, "-": 1, "*": 2, "%": 2}
_BPREC = {"||": 1, "&&": 2}


def _aprec(expr: AExpr) -> int:
    if isinstance(expr, BinOp):
        return _APREC[expr.op]
    if isinstance(expr, Neg):
        return 3
    return 4


def format_aexpr(expr: AExpr) -> str:
    if isinstance(expr, Const):
        return str(expr.value)
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, Neg):
        inner = format_aexpr(expr.operand)
        return f"-{inner}" if _aprec(expr.operand) >= 3 else f"-({inner})"
    prec = _APREC[expr.op]
    left = format_aexpr(expr.left)
    right = format_aexpr(expr.right)
    if _aprec(expr.left) < prec:
        left = f"({left})"
    if _aprec(expr.right) <= prec:
        right = f"({right})"
    return f"{left}{expr.op}{right}"


def _bprec(expr: BExpr) -> int:
    if isinstance(expr, Logic):
        return _BPREC[expr.op]
    if isinstance(expr, Not):
        return 3
    return 4


def format_bexpr(expr: BExpr) -> str:
    if isinstance(expr, BoolConst):
        return "true" if expr.value else "false"
    if isinstance(expr, Compare):
        return f"{format_aexpr(expr.left)}{expr.op}{format_aexpr(expr.right)}"
    if isinstance(expr, Not):
        inner = format_bexpr(expr.operand)
        return f"!{inner}" if isinstance(expr.operand, (BoolConst, Not)) else f"!({inner})"
    prec = _BPREC[expr.op]
    left = format_bexpr(expr.left)
    right = format_bexpr(expr.right)
    # 比較は読みやすさのため常に括弧で囲む
    if isinstance(expr.left, Compare) or _bprec(expr.left) < prec:
        left = f"({left})"
    if isinstance(expr.right, Compare) or _bprec(expr.right) <= prec:
        right = f"({right})"
    return f"{left}{expr.op}{right}"


def format_prob(prob: ProbExpr) -> str:
    if isinstance(prob, ProbParam):
        return f"#{prob.name}"
    if isinstance(prob, ProbComplement):
        return f"1-#{prob.name}"
    return repr(float(prob.value))


def format_distribution(dist: Distribution) -> str:
    if dist.uniform:
        return "{" + ",".join(str(v) for v, _ in dist.support) + "}"
    return "{" + ",".join(f"({v},{p!r})" for v, p in dist.support) + "}"


def _pretty_lines(stmt: Stmt, labels: bool, indent: str) -> List[str]:
    def lab(label: int) -> str:
        return f" @{label}" if labels else ""

    def nested(body: Stmt) -> List[str]:
        return [indent + line for line in _pretty_lines(body, labels, indent)]

    if isinstance(stmt, Seq):
        parts = flatten(stmt)
        lines: List[str] = []
        for i, part in enumerate(parts):
            part_lines = _pretty_lines(part, labels, indent)
            if i < len(parts) - 1:
                part_lines[-1] += ";"
            lines.extend(part_lines)
        return lines
    if isinstance(stmt, Skip):
        return ["skip" + lab(stmt.label)]
    if isinstance(stmt, Assign):
        return [f"{stmt.var}:={format_aexpr(stmt.expr)}" + lab(stmt.label)]
    if isinstance(stmt, RandomAssign):
        return [f"{stmt.var}?={format_distribution(stmt.dist)}" + lab(stmt.label)]
    if isinstance(stmt, Choose):
        lines = ["choose" + lab(stmt.label)]
        for i, (prob, branch) in enumerate(stmt.branches):
            head = f"{format_prob(prob)}:" if i == 0 else f"or {format_prob(prob)}:"
            lines.append(head)
            lines.extend(nested(branch))
        lines.append("ro")
        return lines
    if isinstance(stmt, If):
        return ([f"if {format_bexpr(stmt.cond)}{lab(stmt.label)} then"]
                + nested(stmt.then_branch) + ["else"]
                + nested(stmt.else_branch) + ["fi"])
    if isinstance(stmt, While):
        return ([f"while {format_bexpr(stmt.cond)}{lab(stmt.label)} do"]
                + nested(stmt.body) + ["od"])
    raise LosInputError(f"❌ 整形できない文: {stmt!r}")


def pretty(node: Union[Program, Stmt], labels: bool = True, indent: str = "  ") -> str:
    """
    プログラム（または文）を言語の構文で出力

    parse(pretty(parse(src))) == parse(src) が成り立つように、
    ラベルを明示し、確率は repr で完全な精度を保ちます。
    """
    if isinstance(node, Program):
        lines = ["var " + name + ":{" + ",".join(str(v) for v in values) + "};"
                 for name, values in node.decls]
        lines.extend(_pretty_lines(node.body, labels, indent))
        return "\n".join(lines) + "\n"
    return "\n".join(_pretty_lines(node, labels, indent))


def pretty_inline(stmt: Stmt) -> str:
    """ラベル無しの 1 行表記（例: y:=(y+x)%2; x:=(x+y)%2）"""
    parts = []
    for part in flatten(stmt):
        if isinstance(part, ATOMIC):
            parts.append(_pretty_lines(part, False, "")[0])
        else:
            parts.append(" ".join(line.strip() for line in _pretty_lines(part, False, "")))
    return "; ".join(parts)
