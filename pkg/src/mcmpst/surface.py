"""Concrete syntax: parser and canonical printer for .mcp protocol files.

Grammar sketch (normative):

    file    := (typedef | ctxdef | procdef)*
    typedef := "type" NAME "=" type
    ctxdef  := "context" NAME "{" [bind ("," bind)*] "}" ; bind := chan ":" type
    procdef := "process" NAME "=" proc

    type    := atom ("+" atom)*
    atom    := "end" | NAME | "rec" NAME "." type | input | probsum | "(" type ")"
    input   := role "<-" role "?" label "(" basetype? ")" ["." atom]
    probsum := "(" pterm ("(+)" pterm)* ")"
    pterm   := prob ":" head ["." type]
    head    := role "->" role "!" label "(" basetype? ")" | "tau"

    proc    := pproc ("|" pproc)*
    pproc   := "0" | "new" NAME "." proc | "if" value "then" pproc "else" pproc
             | "def" decl ("and" decl)* "in" proc | "(" proc ")"
             | NAME "(" values ";" chans ")"       (process call)
             | NAME                                 (reference, inlined)
             | chan summands
    summands:= "{" psum ("+" psum)* "}" | psum-singleton
    psum    := role "<-" role "?" label "(" [NAME] ")" ["." pproc]
             | "(" prow ("(+)" prow)* ")"
    prow    := prob ":" paction ["." pproc]
    paction := role "->" role "!" label "(" [value] ")" | "tau"
    chan    := NAME "[" (role | "{" role ("," role)* "}") "]"

Line comments start with "#". Singleton sums need no braces; a bare
`chan a->b!l(v).P` abbreviates the probability-1 output sum.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .core import (
    BaseType, BoolV, Call, Channel, Choice, Cond, Decl, Def, End, HeadCont,
    Inact, InputT, LocalContext, Mixed, NatV, OutH, Par, PInput, POut, PRow,
    Plain, Active, ProbSum, Process, Rec, Res, SendA, SessionType, Summand,
    TauA, TauH, TypeVar, Value, VarV, rational_str,
)
from .errors import ParseError
from .typemeta import free_type_vars

KEYWORDS = {
    "end", "rec", "tau", "new", "if", "then", "else", "def", "in", "and",
    "true", "false", "type", "context", "process", "nat", "bool",
}

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+|\#[^\n]*)
      | (?P<number>\d+(?:\.\d+)?)
      | (?P<ident>[A-Za-z_]\w*)
      | (?P<op>\(\+\)|<-|->|[(){}\[\],:;.+|=?!/])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # number | ident | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    out = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        lexeme = m.group(0)
        if m.lastgroup != "ws":
            out.append(Token(m.lastgroup, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


@dataclass
class ProtocolFile:
    types: Dict[str, SessionType] = field(default_factory=dict)
    contexts: Dict[str, LocalContext] = field(default_factory=dict)
    processes: Dict[str, Process] = field(default_factory=dict)
    spans: Dict[str, Tuple[int, int]] = field(default_factory=dict)


class Parser:
    def __init__(self, text: str, types=None, processes=None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.types: Dict[str, SessionType] = dict(types or {})
        self.processes: Dict[str, Process] = dict(processes or {})

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead=0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}",
                             tok.line, tok.col)
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def ident(self, what="name") -> str:
        tok = self.next()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise ParseError(f"expected {what}, found {tok.text!r}", tok.line, tok.col)
        return tok.text

    def label(self) -> str:
        # labels live after ? or ! where no keyword can occur, so keywords
        # (e.g. the paper's label "new") are fine here
        tok = self.next()
        if tok.kind != "ident":
            raise ParseError(f"expected label, found {tok.text!r}", tok.line, tok.col)
        return tok.text

    def fail(self, message: str):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col)

    # -- shared pieces -----------------------------------------------------

    def parse_prob(self) -> Fraction:
        tok = self.next()
        if tok.kind != "number":
            raise ParseError(f"expected probability, found {tok.text!r}",
                             tok.line, tok.col)
        if self.at("/"):
            self.next()
            den = self.next()
            if den.kind != "number" or "." in den.text or "." in tok.text:
                raise ParseError("malformed fraction", tok.line, tok.col)
            q = Fraction(int(tok.text), int(den.text))
        else:
            q = Fraction(tok.text)
        if not (0 < q <= 1):
            raise ParseError(f"probability {rational_str(q)} outside (0,1]",
                             tok.line, tok.col)
        return q

    def parse_basetype_opt(self) -> Optional[BaseType]:
        if self.at("nat"):
            self.next()
            return BaseType.NAT
        if self.at("bool"):
            self.next()
            return BaseType.BOOL
        return None

    def parse_channel(self, first: Optional[str] = None) -> Channel:
        session = first if first is not None else self.ident("session")
        self.expect("[")
        roles = []
        if self.at("{"):
            self.next()
            roles.append(self.ident("role"))
            while self.at(","):
                self.next()
                roles.append(self.ident("role"))
            self.expect("}")
        else:
            roles.append(self.ident("role"))
        self.expect("]")
        return Channel(session, frozenset(roles))

    def parse_value(self) -> Value:
        tok = self.next()
        if tok.kind == "number":
            if "." in tok.text or int(tok.text) < 1:
                raise ParseError("naturals are 1,2,...", tok.line, tok.col)
            return NatV(int(tok.text))
        if tok.text == "true":
            return BoolV(True)
        if tok.text == "false":
            return BoolV(False)
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            return VarV(tok.text)
        raise ParseError(f"expected value, found {tok.text!r}", tok.line, tok.col)

    # -- types ---------------------------------------------------------------

    def parse_type(self) -> SessionType:
        branches = [self.parse_type_atom()]
        while self.at("+"):
            self.next()
            branches.append(self.parse_type_atom())
        if len(branches) == 1:
            return branches[0]
        flat = []
        for b in branches:
            if isinstance(b, Mixed):
                flat.extend(b.branches)
            else:
                self.fail("only inputs and probabilistic sums can be summands")
        return Mixed(tuple(flat))

    def parse_type_atom(self) -> SessionType:
        tok = self.peek()
        if tok.text == "end":
            self.next()
            return End()
        if tok.text == "rec":
            self.next()
            name = self.ident("recursion variable")
            self.expect(".")
            return Rec(name, self.parse_type())
        if tok.text == "(":
            # probsum if a probability follows, otherwise a grouped type
            if self.peek(1).kind == "number":
                return Mixed((self.parse_probsum(),))
            self.next()
            inner = self.parse_type()
            self.expect(")")
            return inner
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            name = self.ident()
            if self.at("<-"):
                return Mixed((self.parse_input_branch(name),))
            return TypeVar(name)  # alias or recursion variable; resolved later
        raise ParseError(f"expected a type, found {tok.text!r}", tok.line, tok.col)

    def parse_input_branch(self, receiver: str) -> InputT:
        self.expect("<-")
        sender = self.ident("role")
        self.expect("?")
        label = self.label()
        self.expect("(")
        payload = self.parse_basetype_opt()
        self.expect(")")
        cont: SessionType = End()
        if self.at("."):
            self.next()
            cont = self.parse_type_atom()
        return InputT(receiver, sender, label, payload, cont)

    def parse_probsum(self) -> ProbSum:
        self.expect("(")
        rows = [self.parse_pterm()]
        while self.at("(+)"):
            self.next()
            rows.append(self.parse_pterm())
        self.expect(")")
        return ProbSum(tuple(rows))

    def parse_pterm(self) -> Summand:
        prob = self.parse_prob()
        self.expect(":")
        if self.at("tau"):
            self.next()
            head = TauH()
        else:
            sender = self.ident("role")
            self.expect("->")
            receiver = self.ident("role")
            self.expect("!")
            label = self.label()
            self.expect("(")
            payload = self.parse_basetype_opt()
            self.expect(")")
            head = OutH(sender, receiver, label, payload)
        cont: SessionType = End()
        if self.at("."):
            self.next()
            cont = self.parse_type()
        return Summand(prob, head, cont)

    def resolve_type(self, t: SessionType, bound=frozenset(), stack=()) -> SessionType:
        if isinstance(t, TypeVar):
            if t.name in bound:
                return t
            if t.name in stack:
                raise ParseError(f"type alias cycle through {t.name!r}")
            alias = self.types.get(t.name)
            if alias is None:
                raise ParseError(f"unbound type name {t.name!r}")
            return self.resolve_type(alias, frozenset(), stack + (t.name,))
        if isinstance(t, Rec):
            return Rec(t.name, self.resolve_type(t.body, bound | {t.name}, stack))
        if isinstance(t, Mixed):
            out = []
            for b in t.branches:
                if isinstance(b, InputT):
                    out.append(InputT(b.receiver, b.sender, b.label, b.payload,
                                      self.resolve_type(b.cont, bound, stack)))
                else:
                    out.append(ProbSum(tuple(
                        Summand(s.prob, s.head, self.resolve_type(s.cont, bound, stack))
                        for s in b.summands)))
            return Mixed(tuple(out))
        if isinstance(t, HeadCont):
            return HeadCont(t.head, self.resolve_type(t.cont, bound, stack))
        return t

    # -- processes -----------------------------------------------------------

    def parse_proc(self) -> Process:
        proc = self.parse_pproc()
        while self.at("|"):
            self.next()
            proc = Par(proc, self.parse_pproc())
        return proc

    def parse_pproc(self) -> Process:
        tok = self.peek()
        if tok.text == "0":
            self.next()
            return Inact()
        if tok.text == "(":
            self.next()
            inner = self.parse_proc()
            self.expect(")")
            return inner
        if tok.text == "new":
            self.next()
            session = self.ident("session")
            self.expect(".")
            return Res(session, self.parse_proc())
        if tok.text == "if":
            self.next()
            cond = self.parse_value()
            self.expect("then")
            then_branch = self.parse_pproc()
            self.expect("else")
            return Cond(cond, then_branch, self.parse_pproc())
        if tok.text == "def":
            self.next()
            decls = [self.parse_decl()]
            while self.at("and"):
                self.next()
                decls.append(self.parse_decl())
            self.expect("in")
            return Def(tuple(decls), self.parse_proc())
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            name = self.ident()
            if self.at("["):
                channel = self.parse_channel(name)
                return self.parse_choice(channel)
            if self.at("("):
                return self.parse_call(name)
            ref = self.processes.get(name)
            if ref is None:
                raise ParseError(f"unbound process name {name!r}", tok.line, tok.col)
            return ref
        raise ParseError(f"expected a process, found {tok.text!r}", tok.line, tok.col)

    def parse_call(self, name: str) -> Call:
        self.expect("(")
        args: List[Value] = []
        if not self.at(";"):
            args.append(self.parse_value())
            while self.at(","):
                self.next()
                args.append(self.parse_value())
        self.expect(";")
        chans: List[Channel] = []
        if not self.at(")"):
            chans.append(self.parse_channel())
            while self.at(","):
                self.next()
                chans.append(self.parse_channel())
        self.expect(")")
        return Call(name, tuple(args), tuple(chans))

    def parse_choice(self, channel: Channel) -> Choice:
        if self.at("{"):
            self.next()
            summands = [self.parse_psummand()]
            while self.at("+"):
                self.next()
                summands.append(self.parse_psummand())
            self.expect("}")
            return Choice(channel, tuple(summands))
        return Choice(channel, (self.parse_psummand(),))

    def parse_psummand(self):
        tok = self.peek()
        if tok.text == "(":
            self.next()
            rows = [self.parse_prow()]
            while self.at("(+)"):
                self.next()
                rows.append(self.parse_prow())
            self.expect(")")
            return POut(tuple(rows))
        if tok.text == "tau":
            self.next()
            cont = self.parse_opt_cont()
            return POut((PRow(Fraction(1), TauA(), cont),))
        role = self.ident("role")
        if self.at("<-"):
            self.next()
            sender = self.ident("role")
            self.expect("?")
            label = self.label()
            self.expect("(")
            binder = None
            if not self.at(")"):
                binder = self.ident("variable")
            self.expect(")")
            return PInput(role, sender, label, binder, self.parse_opt_cont())
        # probability-1 output shorthand
        self.expect("->")
        receiver = self.ident("role")
        self.expect("!")
        label = self.label()
        self.expect("(")
        payload = None
        if not self.at(")"):
            payload = self.parse_value()
        self.expect(")")
        cont = self.parse_opt_cont()
        return POut((PRow(Fraction(1), SendA(role, receiver, label, payload), cont),))

    def parse_prow(self) -> PRow:
        prob = self.parse_prob()
        self.expect(":")
        if self.at("tau"):
            self.next()
            action = TauA()
        else:
            sender = self.ident("role")
            self.expect("->")
            receiver = self.ident("role")
            self.expect("!")
            label = self.label()
            self.expect("(")
            payload = None
            if not self.at(")"):
                payload = self.parse_value()
            self.expect(")")
            action = SendA(sender, receiver, label, payload)
        return PRow(prob, action, self.parse_opt_cont())

    def parse_opt_cont(self) -> Process:
        if self.at("."):
            self.next()
            return self.parse_pproc()
        return Inact()

    def parse_decl(self) -> Decl:
        name = self.ident("process variable")
        self.expect("(")
        params: List[Tuple[str, BaseType]] = []
        if not self.at(";"):
            while True:
                var = self.ident("variable")
                self.expect(":")
                ty = self.parse_basetype_opt()
                if ty is None:
                    self.fail("expected nat or bool")
                params.append((var, ty))
                if not self.at(","):
                    break
                self.next()
        self.expect(";")
        chans: List[Tuple[Channel, SessionType]] = []
        if not self.at(")"):
            while True:
                ch = self.parse_channel()
                self.expect(":")
                chans.append((ch, self.resolve_type(self.parse_type())))
                if not self.at(","):
                    break
                self.next()
        self.expect(")")
        self.expect("=")
        body = self.parse_pproc()
        return Decl(name, tuple(params), tuple(chans), body)

    # -- files ---------------------------------------------------------------

    def parse_file(self) -> ProtocolFile:
        pf = ProtocolFile()
        while not self.at(""):
            tok = self.peek()
            if tok.text == "type":
                self.next()
                name = self.ident("type name")
                if name in pf.types:
                    raise ParseError(f"duplicate type {name!r}", tok.line, tok.col)
                self.expect("=")
                ty = self.resolve_type(self.parse_type())
                pf.types[name] = self.types[name] = ty
                pf.spans[name] = (tok.line, tok.col)
            elif tok.text == "context":
                self.next()
                name = self.ident("context name")
                if name in pf.contexts:
                    raise ParseError(f"duplicate context {name!r}", tok.line, tok.col)
                self.expect("{")
                binds = []
                if not self.at("}"):
                    while True:
                        ch = self.parse_channel()
                        self.expect(":")
                        binds.append((ch, self.resolve_type(self.parse_type())))
                        if not self.at(","):
                            break
                        self.next()
                self.expect("}")
                pf.contexts[name] = LocalContext(binds)
                pf.spans[name] = (tok.line, tok.col)
            elif tok.text == "process":
                self.next()
                name = self.ident("process name")
                if name in pf.processes:
                    raise ParseError(f"duplicate process {name!r}", tok.line, tok.col)
                self.expect("=")
                proc = self.parse_proc()
                pf.processes[name] = self.processes[name] = proc
                pf.spans[name] = (tok.line, tok.col)
            else:
                raise ParseError(
                    f"expected type/context/process, found {tok.text!r}",
                    tok.line, tok.col)
        return pf


def parse_file(text: str) -> ProtocolFile:
    return Parser(text).parse_file()


def parse_type(text: str, types=None) -> SessionType:
    p = Parser(text, types=types)
    t = p.resolve_type(p.parse_type())
    p.expect("")
    return t


def parse_process(text: str, processes=None) -> Process:
    p = Parser(text, processes=processes)
    proc = p.parse_proc()
    p.expect("")
    return proc


def parse_context(text: str, types=None) -> LocalContext:
    p = Parser(f"context _C {{ {text} }}", types=types)
    return p.parse_file().contexts["_C"]


# ---------------------------------------------------------------------------
# printing

def _pp_basetype(ty: Optional[BaseType]) -> str:
    return ty.value if ty is not None else ""


def _pp_head(h) -> str:
    if isinstance(h, TauH):
        return "tau"
    return f"{h.sender}->{h.receiver}!{h.label}({_pp_basetype(h.payload)})"


def pp_type(t: SessionType) -> str:
    if isinstance(t, End):
        return "end"
    if isinstance(t, TypeVar):
        return t.name
    if isinstance(t, Rec):
        return f"rec {t.name}. {pp_type(t.body)}"
    if isinstance(t, HeadCont):
        return f"{_pp_head(t.head)}.{_pp_atom(t.cont)}"
    return " + ".join(_pp_branch(b) for b in t.branches)


def _pp_atom(t: SessionType) -> str:
    if isinstance(t, (Rec,)) or (isinstance(t, Mixed) and len(t.branches) > 1):
        return f"({pp_type(t)})"
    return pp_type(t)


def _pp_branch(b) -> str:
    if isinstance(b, InputT):
        return (f"{b.receiver}<-{b.sender}?{b.label}({_pp_basetype(b.payload)})"
                f".{_pp_atom(b.cont)}")
    rows = " (+) ".join(
        f"{rational_str(s.prob)}: {_pp_head(s.head)}.{pp_type(s.cont)}"
        for s in b.summands)
    return f"({rows})"


def pp_context(d: LocalContext) -> str:
    if not d:
        return "{}"
    return ", ".join(f"{c}: {pp_type(t)}" for c, t in d)


def pp_active(l) -> str:
    if isinstance(l, Plain):
        return pp_context(l.ctx)
    return f"{l.chan} * ({pp_context(l.ctx)})"


def _pp_value(v: Value) -> str:
    if isinstance(v, VarV):
        return v.name
    if isinstance(v, NatV):
        return str(v.value)
    return "true" if v.value else "false"


def _pp_paction(a) -> str:
    if isinstance(a, TauA):
        return "tau"
    payload = _pp_value(a.payload) if a.payload is not None else ""
    return f"{a.sender}->{a.receiver}!{a.label}({payload})"


def pp_process(p: Process) -> str:
    return _pp_par(p)


def _pp_par(p: Process) -> str:
    if isinstance(p, Par):
        return f"{_pp_par_left(p.left)} | {_pp_pproc(p.right)}"
    return _pp_pproc(p)


def _pp_par_left(p: Process) -> str:
    # left operands of | must not swallow the rest: parenthesise greedy forms
    if isinstance(p, Par):
        left = _pp_par_left(p.left)
        right = _pp_pproc_nongreedy(p.right)
        return f"{left} | {right}"
    return _pp_pproc_nongreedy(p)


def _ends_greedy(p: Process) -> bool:
    """Whether the printed form of p ends in a position that would absorb a
    following parallel bar when re-parsed."""
    if isinstance(p, (Res, Def)):
        return True
    if isinstance(p, Cond):
        return _ends_greedy(p.else_branch)
    if isinstance(p, Choice) and len(p.summands) == 1:
        s = p.summands[0]
        if isinstance(s, PInput):
            return _ends_greedy(s.cont)
        if len(s.rows) == 1 and s.rows[0].prob == 1:
            return _ends_greedy(s.rows[0].cont)
    return False


def _pp_pproc_nongreedy(p: Process) -> str:
    if _ends_greedy(p):
        return f"({_pp_pproc(p)})"
    return _pp_pproc(p)


def _pp_pproc(p: Process) -> str:
    if isinstance(p, Inact):
        return "0"
    if isinstance(p, Par):
        return f"({_pp_par(p)})"
    if isinstance(p, Res):
        return f"new {p.session}. {_pp_par(p.body)}"
    if isinstance(p, Cond):
        return (f"if {_pp_value(p.cond)} then {_pp_pproc(p.then_branch)} "
                f"else {_pp_pproc(p.else_branch)}")
    if isinstance(p, Def):
        decls = " and ".join(_pp_decl(d) for d in p.decls)
        return f"def {decls} in {_pp_par(p.body)}"
    if isinstance(p, Call):
        args = ",".join(_pp_value(v) for v in p.args)
        chans = ",".join(str(c) for c in p.chans)
        return f"{p.name}({args};{chans})"
    if isinstance(p, Choice):
        if len(p.summands) == 1:
            return f"{p.chan} {_pp_psummand(p.summands[0])}"
        inner = " + ".join(_pp_psummand(s) for s in p.summands)
        return f"{p.chan} {{ {inner} }}"
    raise TypeError(p)


def _pp_decl(d: Decl) -> str:
    params = ",".join(f"{x}:{t.value}" for x, t in d.params)
    chans = ",".join(f"{c}:{pp_type(t)}" for c, t in d.chans)
    return f"{d.name}({params};{chans}) = {_pp_pproc(d.body)}"


def _pp_psummand(s) -> str:
    if isinstance(s, PInput):
        binder = s.binder or ""
        return (f"{s.receiver}<-{s.sender}?{s.label}({binder})"
                f".{_pp_pproc(s.cont)}")
    if len(s.rows) == 1 and s.rows[0].prob == 1:
        row = s.rows[0]
        return f"{_pp_paction(row.action)}.{_pp_pproc(row.cont)}"
    rows = " (+) ".join(
        f"{rational_str(r.prob)}: {_pp_paction(r.action)}.{_pp_pproc(r.cont)}"
        for r in s.rows)
    return f"({rows})"


def pretty(x) -> str:
    """Canonical text for a process, session type or local context."""
    if isinstance(x, LocalContext):
        return pp_context(x)
    if isinstance(x, (Plain, Active)):
        return pp_active(x)
    if isinstance(x, (End, TypeVar, Rec, Mixed, HeadCont)):
        return pp_type(x)
    return pp_process(x)
