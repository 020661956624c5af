from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import regex

from ..errors import ParseError
from .model import (
    BINARY_OPS,
    COMPARE_OPS,
    I64_MAX,
    I64_MIN,
    OPCODES,
    VALUE_OPS,
    BasicBlock,
    Const,
    FuncRef,
    FunctionIR,
    GlobalDef,
    GlobalRef,
    Instruction,
    Label,
    Local,
    ModuleIR,
    Operand,
    Param,
    TypeTag,
)

TOKEN_RE = regex.compile(
    r"""
    (?P<ws>[ \t\r]+)
    | (?P<nl>\n)
    | (?P<comment>\#[^\n]*)
    | (?P<meta>![^\n]*)
    | (?P<arrow>->)
    | (?P<local>%[\w.$]+)
    | (?P<sym>@[\w.$]+)
    | (?P<int>-?\d+)
    | (?P<ident>[A-Za-z_.][\w.]*)
    | (?P<punct>[(){}\[\],:=])
    """,
    regex.VERBOSE,
)

TYPE_NAMES = {"i64": TypeTag.I64, "i1": TypeTag.I1, "ptr": TypeTag.PTR, "void": TypeTag.VOID}


@dataclass(slots=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    line_start = 0
    pos = 0
    while pos < len(text):
        match = TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = match.lastgroup
        column = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = match.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, match.group(), line, column))
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.pos = 0
        self.positions: dict[int, tuple[int, int]] = {}

    # token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message: str, token: Optional[Token] = None) -> ParseError:
        token = token or self.tok
        return ParseError(message, token.line, token.column)

    def advance(self) -> Token:
        token = self.tok
        self.pos += 1
        return token

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        return self.tok.kind == kind and (text is None or self.tok.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            wanted = text or kind
            got = self.tok.text or self.tok.kind
            raise self.error(f"expected {wanted!r}, found {got!r}")
        return self.advance()

    def integer(self) -> int:
        token = self.expect("int")
        value = int(token.text)
        if not I64_MIN <= value <= I64_MAX:
            raise self.error(f"integer literal {token.text} does not fit in i64", token)
        return value

    def accept(self, kind: str, text: Optional[str] = None) -> bool:
        if self.at(kind, text):
            self.advance()
            return True
        return False

    # grammar

    def parse_module(self) -> ModuleIR:
        module = ModuleIR()
        while not self.at("eof"):
            if self.at("ident", "global"):
                module.globals.append(self.parse_global())
            elif self.at("ident", "func"):
                module.functions.append(self.parse_function())
            elif self.at("meta"):
                module.metadata.append(self.parse_meta())
            else:
                raise self.error(f"unexpected {self.tok.text!r} at module level")
        return module

    def parse_meta(self) -> tuple[str, str]:
        token = self.advance()
        body = token.text[1:].rstrip()
        key, _, text = body.partition(" ")
        if not key:
            raise self.error("metadata entry without key", token)
        return key, text

    def parse_type(self, allow_void: bool = False) -> TypeTag:
        token = self.expect("ident")
        tag = TYPE_NAMES.get(token.text)
        if tag is None or (tag is TypeTag.VOID and not allow_void):
            raise self.error(f"unknown type {token.text!r}", token)
        return tag

    def parse_global(self) -> GlobalDef:
        self.expect("ident", "global")
        name = self.expect("sym").text[1:]
        self.expect("punct", ":")
        if self.parse_type() is not TypeTag.I64:
            raise self.error("globals must be i64 arrays")
        self.expect("punct", "[")
        cells_token = self.tok
        cells = self.integer()
        if cells <= 0:
            raise self.error("global cell count must be positive", cells_token)
        self.expect("punct", "]")
        init: list[int] = []
        if self.accept("punct", "="):
            self.expect("punct", "[")
            init.append(self.integer())
            while self.accept("punct", ","):
                init.append(self.integer())
            self.expect("punct", "]")
            if len(init) > cells:
                raise self.error(f"too many initializers for @{name}")
        return GlobalDef(name=name, cells=cells, init=init)

    def parse_function(self) -> FunctionIR:
        self.expect("ident", "func")
        name = self.expect("sym").text[1:]
        self.expect("punct", "(")
        params: list[Param] = []
        if not self.at("punct", ")"):
            params.append(self.parse_param())
            while self.accept("punct", ","):
                params.append(self.parse_param())
        self.expect("punct", ")")
        self.expect("arrow")
        return_type = self.parse_type(allow_void=True)
        self.expect("punct", "{")
        fn = FunctionIR(name=name, params=params, return_type=return_type)
        while not self.at("punct", "}"):
            fn.blocks.append(self.parse_block())
        self.expect("punct", "}")
        if not fn.blocks:
            raise self.error(f"function @{name} has no blocks")
        return fn

    def parse_param(self) -> Param:
        name = self.expect("local").text[1:]
        self.expect("punct", ":")
        return Param(name=name, type=self.parse_type())

    def at_label(self) -> bool:
        return self.at("ident") and self.peek().kind == "punct" and self.peek().text == ":"

    def parse_block(self) -> BasicBlock:
        if not self.at_label():
            raise self.error(f"expected block label, found {self.tok.text!r}")
        label = self.advance().text
        self.expect("punct", ":")
        block = BasicBlock(label=label)
        while not self.at_label() and not self.at("punct", "}"):
            if self.at("eof"):
                raise self.error("unterminated function body")
            block.instructions.append(self.parse_instruction())
        if not block.instructions:
            raise self.error(f"block {label} is empty")
        return block

    def parse_value(self) -> Operand:
        token = self.tok
        if token.kind == "local":
            self.advance()
            return Local(token.text[1:])
        if token.kind == "int":
            return Const(self.integer())
        if token.kind == "sym":
            self.advance()
            return GlobalRef(token.text[1:])
        raise self.error(f"expected value operand, found {token.text or token.kind!r}")

    def parse_label(self) -> Label:
        return Label(self.expect("ident").text)

    def parse_args(self) -> list[Operand]:
        self.expect("punct", "(")
        args: list[Operand] = []
        if not self.at("punct", ")"):
            args.append(self.parse_value())
            while self.accept("punct", ","):
                args.append(self.parse_value())
        self.expect("punct", ")")
        return args

    def parse_instruction(self) -> Instruction:
        start = self.tok
        result: Optional[str] = None
        if self.at("local"):
            result = self.advance().text[1:]
            self.expect("punct", "=")
        op_token = self.expect("ident")
        opcode = op_token.text
        if opcode not in OPCODES:
            raise self.error(f"unknown opcode {opcode!r}", op_token)

        operands: list[Operand]
        if opcode in BINARY_OPS or opcode in COMPARE_OPS or opcode in ("gep", "store"):
            first = self.parse_value()
            self.expect("punct", ",")
            operands = [first, self.parse_value()]
        elif opcode == "select":
            operands = [self.parse_value()]
            for _ in range(2):
                self.expect("punct", ",")
                operands.append(self.parse_value())
        elif opcode == "phi":
            operands = []
            while True:
                self.expect("punct", "[")
                operands.append(self.parse_label())
                self.expect("punct", ":")
                operands.append(self.parse_value())
                self.expect("punct", "]")
                if not self.accept("punct", ","):
                    break
        elif opcode == "br":
            operands = [self.parse_label()]
        elif opcode == "brcond":
            operands = [self.parse_value()]
            self.expect("punct", ",")
            operands.append(self.parse_label())
            self.expect("punct", ",")
            operands.append(self.parse_label())
        elif opcode == "alloca":
            operands = [Const(self.integer())]
        elif opcode in ("load", "print"):
            operands = [self.parse_value()]
        elif opcode == "call":
            callee = self.expect("sym").text[1:]
            operands = [FuncRef(callee), *self.parse_args()]
        elif opcode == "icall":
            target = self.parse_value()
            operands = [target, *self.parse_args()]
        elif opcode == "funcptr":
            operands = [FuncRef(self.expect("sym").text[1:])]
        else:  # ret
            operands = []
            if self.tok.kind in ("local", "int", "sym"):
                operands.append(self.parse_value())

        if result is not None and opcode not in VALUE_OPS and opcode not in ("call", "icall"):
            raise self.error(f"{opcode} does not produce a value", start)
        if result is None and opcode in VALUE_OPS:
            raise self.error(f"{opcode} result must be named", start)
        inst = Instruction(opcode=opcode, operands=operands, result=result)
        self.positions[id(inst)] = (start.line, start.column)
        return inst

    # semantic checks

    def resolve(self, module: ModuleIR) -> None:
        globals_seen: set[str] = set()
        for glob in module.globals:
            if glob.name in globals_seen:
                raise ParseError(f"duplicate global @{glob.name}", 1, 1)
            globals_seen.add(glob.name)
        functions_seen: set[str] = set()
        for fn in module.functions:
            if fn.name in functions_seen:
                raise self._fn_error(fn, f"duplicate function @{fn.name}")
            if fn.name in globals_seen:
                raise self._fn_error(fn, f"duplicate definition @{fn.name}")
            functions_seen.add(fn.name)

        for fn in module.functions:
            labels: set[str] = set()
            for block in fn.blocks:
                if block.label in labels:
                    raise self._fn_error(fn, f"duplicate block label {block.label} in @{fn.name}")
                labels.add(block.label)
            defined: set[str] = set()
            for param in fn.params:
                if param.name in defined:
                    raise self._fn_error(fn, f"duplicate definition %{param.name}")
                defined.add(param.name)
            for inst in fn.instructions():
                if inst.result is not None:
                    if inst.result in defined:
                        raise self._inst_error(inst, f"duplicate definition %{inst.result}")
                    defined.add(inst.result)
            for inst in fn.instructions():
                for op in inst.operands:
                    if isinstance(op, Local) and op.name not in defined:
                        raise self._inst_error(inst, f"unknown identifier %{op.name}")
                    if isinstance(op, Label) and op.name not in labels:
                        raise self._inst_error(inst, f"unknown label {op.name}")
                    if isinstance(op, GlobalRef) and op.name not in globals_seen:
                        raise self._inst_error(inst, f"unknown identifier @{op.name}")
                    if isinstance(op, FuncRef) and op.name not in functions_seen:
                        raise self._inst_error(inst, f"unknown identifier @{op.name}")
                if inst.opcode == "call" and inst.result is not None:
                    if module.function(inst.operands[0].name).return_type is TypeTag.VOID:  # type: ignore[union-attr]
                        raise self._inst_error(inst, "call of void function has no value")

    def _inst_error(self, inst: Instruction, message: str) -> ParseError:
        line, column = self.positions.get(id(inst), (1, 1))
        return ParseError(message, line, column)

    def _fn_error(self, fn: FunctionIR, message: str) -> ParseError:
        first = fn.blocks[0].instructions[0]
        line, column = self.positions.get(id(first), (1, 1))
        return ParseError(message, line, column)


def assign_types(module: ModuleIR) -> ModuleIR:
    """Infer result types; phis may need several rounds because of back-edge arms."""
    returns = {fn.name: fn.return_type for fn in module.functions}
    for fn in module.functions:
        known: dict[str, TypeTag] = {param.name: param.type for param in fn.params}

        def operand_type(op: Operand) -> Optional[TypeTag]:
            if isinstance(op, Const):
                return TypeTag.I64
            if isinstance(op, GlobalRef):
                return TypeTag.PTR
            if isinstance(op, Local):
                return known.get(op.name)
            return None

        for _ in range(len(fn.blocks) + 2):
            changed = False
            for inst in fn.instructions():
                if inst.result is None:
                    inst.type = TypeTag.VOID
                    continue
                tag: Optional[TypeTag]
                if inst.opcode in BINARY_OPS or inst.opcode == "load":
                    tag = TypeTag.I64
                elif inst.opcode in COMPARE_OPS:
                    tag = TypeTag.I1
                elif inst.opcode in ("alloca", "gep", "funcptr"):
                    tag = TypeTag.PTR
                elif inst.opcode == "select":
                    tag = _first_non_literal(operand_type, inst.operands[1:])
                elif inst.opcode == "phi":
                    tag = _first_non_literal(operand_type, [v for _, v in inst.phi_arms()])
                elif inst.opcode == "call":
                    tag = returns[inst.operands[0].name]  # type: ignore[union-attr]
                else:
                    tag = TypeTag.I64
                if tag is not None and known.get(inst.result) is not tag:
                    known[inst.result] = tag
                    changed = True
                if tag is not None:
                    inst.type = tag
            if not changed:
                break
    return module


def _first_non_literal(operand_type, operands: list[Operand]) -> Optional[TypeTag]:
    fallback: Optional[TypeTag] = None
    for op in operands:
        if isinstance(op, Const):
            fallback = TypeTag.I64
            continue
        tag = operand_type(op)
        if tag is not None:
            return tag
    return fallback


def parse_with_lines(text: str) -> tuple[ModuleIR, dict[int, int]]:
    """Parse ``text`` and also map every instruction ordinal to its source line."""
    parser = _Parser(text)
    module = parser.parse_module()
    parser.resolve(module)
    assign_types(module)
    module.renumber()
    lines = {
        inst.id: parser.positions[id(inst)][0]
        for _, _, inst in module.instructions()
        if id(inst) in parser.positions
    }
    return module, lines


def parse_module(text: str) -> ModuleIR:
    return parse_with_lines(text)[0]
