use thiserror::Error;

use super::validate::{validate, Violation, ViolationKind};
use super::{
    BasicBlock, Constant, Instruction, IrFunction, IrModule, IrType, MemoryDecl, Opcode, Operand,
    Param, Predicate,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{0}")]
    UndefinedValue(Violation),
    #[error("{0}")]
    DuplicateDefinition(Violation),
    #[error("{0}")]
    TypeMismatch(Violation),
    #[error("invalid module: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Local(String),
    Global(String),
    Int(i64),
    Float(f64),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        if c == '-' && chars[i + 1..].starts_with(&['i', 'n', 'f']) {
            advance(4, &mut i);
            out.push(Token { tok: Tok::Ident("-inf".into()), line: tl, col: tc });
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            advance(2, &mut i);
            out.push(Token { tok: Tok::Punct("->"), line: tl, col: tc });
            continue;
        }
        if let Some(p) = [":", ",", "(", ")", "{", "}", "[", "]", "="]
            .into_iter()
            .find(|p| p.starts_with(c))
        {
            advance(1, &mut i);
            out.push(Token { tok: Tok::Punct(p), line: tl, col: tc });
            continue;
        }
        if c == '%' || c == '@' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            if j == start {
                return Err(err(tl, tc, format!("expected name after '{c}'")));
            }
            let name: String = chars[start..j].iter().collect();
            advance(j - i, &mut i);
            let tok = if c == '%' { Tok::Local(name) } else { Tok::Global(name) };
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i + 1;
            let mut is_float = false;
            while j < chars.len() {
                let d = chars[j];
                if d.is_ascii_digit() {
                    j += 1;
                } else if d == '.' && !is_float {
                    is_float = true;
                    j += 1;
                } else if (d == 'e' || d == 'E')
                    && chars.get(j + 1).is_some_and(|n| n.is_ascii_digit() || *n == '-' || *n == '+')
                {
                    is_float = true;
                    j += 2;
                } else {
                    break;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let tok = if is_float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| err(tl, tc, format!("malformed float '{text}'")))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err(tl, tc, format!("malformed integer '{text}'")))?,
                )
            };
            advance(j - i, &mut i);
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if is_ident_char(c) {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            advance(j - i, &mut i);
            out.push(Token { tok: Tok::Ident(text), line: tl, col: tc });
            continue;
        }
        return Err(err(tl, tc, format!("unexpected character '{c}'")));
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn expect_punct(&mut self, p: &'static str) -> PResult<()> {
        if self.is_punct(p) {
            self.next();
            Ok(())
        } else {
            self.error(format!("expected '{p}', found {}", describe(self.peek())))
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn expect_keyword(&mut self, k: &str) -> PResult<()> {
        if self.is_keyword(k) {
            self.next();
            Ok(())
        } else {
            self.error(format!("expected '{k}', found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            t => self.error(format!("expected {what}, found {}", describe(&t))),
        }
    }

    fn local(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Local(s) => {
                self.next();
                Ok(s)
            }
            t => self.error(format!("expected %name, found {}", describe(&t))),
        }
    }

    fn global(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Global(s) => {
                self.next();
                Ok(s)
            }
            t => self.error(format!("expected @name, found {}", describe(&t))),
        }
    }

    fn ty(&mut self) -> PResult<IrType> {
        match self.peek().clone() {
            Tok::Ident(s) => match IrType::from_name(&s) {
                Some(t) => {
                    self.next();
                    Ok(t)
                }
                None => self.error(format!("unknown type '{s}'")),
            },
            t => self.error(format!("expected type, found {}", describe(&t))),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        let op = match self.peek().clone() {
            Tok::Local(s) => Operand::Value(s),
            Tok::Global(s) => Operand::Global(s),
            Tok::Int(v) => Operand::Const(Constant::Int(v)),
            Tok::Float(v) => Operand::Const(Constant::Float(v)),
            Tok::Ident(s) if s == "null" => Operand::Const(Constant::Null),
            Tok::Ident(s) if s == "inf" => Operand::Const(Constant::Float(f64::INFINITY)),
            Tok::Ident(s) if s == "-inf" => Operand::Const(Constant::Float(f64::NEG_INFINITY)),
            Tok::Ident(s) if s == "nan" => Operand::Const(Constant::Float(f64::NAN)),
            t => return self.error(format!("expected operand, found {}", describe(&t))),
        };
        self.next();
        Ok(op)
    }

    fn label(&mut self) -> PResult<Operand> {
        Ok(Operand::Label(self.ident("block label")?))
    }

    fn int_const(&mut self) -> PResult<Operand> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.next();
                Ok(Operand::int(v))
            }
            t => self.error(format!("expected integer constant, found {}", describe(&t))),
        }
    }

    fn module(&mut self) -> PResult<IrModule> {
        let mut m = IrModule::default();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "mem" => {
                    self.next();
                    let name = self.global()?;
                    self.expect_punct(":")?;
                    let elem_ty = self.ty()?;
                    self.expect_punct("[")?;
                    let len = match self.next() {
                        Tok::Int(n) if n > 0 => n as usize,
                        _ => return self.error("expected positive memory length"),
                    };
                    self.expect_punct("]")?;
                    m.memories.push(MemoryDecl { name, elem_ty, len });
                }
                Tok::Ident(k) if k == "func" => {
                    let f = self.function()?;
                    m.functions.push(f);
                }
                t => {
                    let d = describe(t);
                    return self.error(format!("expected 'func' or 'mem', found {d}"));
                }
            }
        }
        Ok(m)
    }

    fn function(&mut self) -> PResult<IrFunction> {
        self.expect_keyword("func")?;
        let name = self.global()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let p = self.local()?;
                self.expect_punct(":")?;
                let t = self.ty()?;
                params.push(Param::new(p, t));
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.expect_punct("->")?;
        let ret_ty = self.ty()?;
        self.expect_punct("{")?;
        let mut blocks = Vec::new();
        while !self.is_punct("}") {
            let label = self.ident("block label")?;
            self.expect_punct(":")?;
            let mut block = BasicBlock::new(label);
            while !self.is_punct("}") && !self.at_label() {
                block.instrs.push(self.instruction()?);
            }
            if block.instrs.is_empty() {
                return self.error(format!("block '{}' has no instructions", block.label));
            }
            blocks.push(block);
        }
        self.expect_punct("}")?;
        if blocks.is_empty() {
            return self.error(format!("function @{name} has no blocks"));
        }
        Ok(IrFunction {
            name,
            params,
            ret_ty,
            blocks,
        })
    }

    fn at_label(&self) -> bool {
        matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct(":"))
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        let result_name = if matches!(self.peek(), Tok::Local(_)) {
            let n = self.local()?;
            self.expect_punct("=")?;
            Some(n)
        } else {
            None
        };
        let opname = self.ident("opcode")?;
        let Some(opcode) = Opcode::from_name(&opname) else {
            self.pos -= 1;
            return self.error(format!("unknown opcode '{opname}'"));
        };
        let mut instr = Instruction::new(opcode, None, Vec::new());
        let result_ty: Option<IrType> = match opcode {
            op if op.is_int_binary() || op.is_float_binary() => {
                let t = self.ty()?;
                instr.ty = Some(t);
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.operand()?);
                Some(t)
            }
            Opcode::ICmp | Opcode::FCmp => {
                let pname = self.ident("predicate")?;
                let Some(p) = Predicate::from_name(&pname) else {
                    self.pos -= 1;
                    return self.error(format!("unknown predicate '{pname}'"));
                };
                instr.predicate = Some(p);
                instr.ty = Some(self.ty()?);
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.operand()?);
                Some(IrType::I1)
            }
            Opcode::SExt | Opcode::ZExt | Opcode::Trunc => {
                instr.ty = Some(self.ty()?);
                instr.operands.push(self.operand()?);
                self.expect_keyword("to")?;
                Some(self.ty()?)
            }
            Opcode::Select => {
                let t = self.ty()?;
                instr.ty = Some(t);
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.operand()?);
                Some(t)
            }
            Opcode::Load => {
                let t = self.ty()?;
                instr.ty = Some(t);
                instr.operands.push(self.operand()?);
                Some(t)
            }
            Opcode::Store => {
                instr.ty = Some(self.ty()?);
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.operand()?);
                None
            }
            Opcode::Alloca => {
                instr.ty = Some(self.ty()?);
                Some(IrType::Addr)
            }
            Opcode::Gep => {
                instr.ty = Some(self.ty()?);
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.operand()?);
                Some(IrType::Addr)
            }
            Opcode::Br => {
                instr.operands.push(self.label()?);
                None
            }
            Opcode::CondBr => {
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.label()?);
                self.expect_punct(",")?;
                instr.operands.push(self.label()?);
                None
            }
            Opcode::Switch => {
                instr.ty = Some(self.ty()?);
                instr.operands.push(self.operand()?);
                self.expect_punct(",")?;
                instr.operands.push(self.label()?);
                while self.eat_punct(",") {
                    self.expect_punct("[")?;
                    instr.operands.push(self.int_const()?);
                    self.expect_punct(",")?;
                    instr.operands.push(self.label()?);
                    self.expect_punct("]")?;
                }
                None
            }
            Opcode::Phi => {
                let t = self.ty()?;
                instr.ty = Some(t);
                let mut pairs = 0;
                loop {
                    self.expect_punct("[")?;
                    instr.operands.push(self.operand()?);
                    self.expect_punct(",")?;
                    instr.operands.push(self.label()?);
                    self.expect_punct("]")?;
                    pairs += 1;
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                if pairs < 2 {
                    return self.error("phi needs at least two incoming pairs");
                }
                Some(t)
            }
            Opcode::Ret => {
                instr.ty = Some(self.ty()?);
                instr.operands.push(self.operand()?);
                None
            }
            Opcode::Call => {
                let t = self.ty()?;
                instr.ty = Some(t);
                instr.callee = Some(self.global()?);
                self.expect_punct("(")?;
                if !self.is_punct(")") {
                    loop {
                        instr.operands.push(self.operand()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect_punct(")")?;
                Some(t)
            }
            _ => unreachable!("all opcodes handled"),
        };
        match (result_name, result_ty) {
            (Some(n), Some(t)) => instr.result = Some((n, t)),
            (None, None) => {}
            (Some(n), None) => {
                return self.error(format!("'{opname}' produces no value but is assigned to %{n}"))
            }
            (None, Some(_)) => return self.error(format!("'{opname}' result must be named")),
        }
        Ok(instr)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Local(s) => format!("'%{s}'"),
        Tok::Global(s) => format!("'@{s}'"),
        Tok::Int(v) => format!("'{v}'"),
        Tok::Float(v) => format!("'{v}'"),
        Tok::Punct(p) => format!("'{p}'"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parses and validates a module.
pub fn parse_module(text: &str) -> Result<IrModule, ParseError> {
    let module = parse_unvalidated(text)?;
    let violations = validate(&module);
    if violations.is_empty() {
        return Ok(module);
    }
    let first_of = |k: ViolationKind| violations.iter().find(|v| v.kind == k).cloned();
    if let Some(v) = first_of(ViolationKind::DuplicateDefinition) {
        return Err(ParseError::DuplicateDefinition(v));
    }
    if let Some(v) = first_of(ViolationKind::UndefinedValue) {
        return Err(ParseError::UndefinedValue(v));
    }
    if let Some(v) = first_of(ViolationKind::TypeMismatch) {
        return Err(ParseError::TypeMismatch(v));
    }
    Err(ParseError::Invalid(violations))
}

/// Parses without running the validator.
pub fn parse_unvalidated(text: &str) -> Result<IrModule, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    p.module()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_identity() {
        let m = parse_module("func @id(%a: i32) -> i32 { entry: ret i32 %a }").unwrap();
        assert_eq!(m.functions.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.blocks.len(), 1);
        assert_eq!(f.blocks[0].instrs.len(), 1);
        assert_eq!(f.blocks[0].instrs[0].opcode, Opcode::Ret);
    }

    #[test]
    fn undefined_value_is_reported() {
        let err = parse_module("func @bad() -> i32 { entry: %x = add i32 %y, 1 ret i32 %x }")
            .unwrap_err();
        assert!(matches!(err, ParseError::UndefinedValue(_)), "{err}");
        assert!(err.to_string().contains("undefined value %y"), "{err}");
    }

    #[test]
    fn duplicate_definition_is_reported() {
        let err = parse_module(
            "func @d(%a: i32) -> i32 { entry: %x = add i32 %a, 1 %x = add i32 %a, 2 ret i32 %x }",
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::DuplicateDefinition(_)), "{err}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = parse_module("func @t(%a: f64) -> i32 { entry: %x = add i32 %a, 1 ret i32 %x }")
            .unwrap_err();
        assert!(matches!(err, ParseError::TypeMismatch(_)), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_module("func @f() -> i32 {\n entry:\n  ret i32 ,\n}").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (3, 11)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn comments_and_memories() {
        let m = parse_module(
            "# header\nmem @buf: f64[16]\nfunc @f() -> f64 { entry: # tail\n %v = load f64 @buf ret f64 %v }",
        )
        .unwrap();
        assert_eq!(m.memories[0].len, 16);
        assert_eq!(m.memories[0].elem_ty, IrType::F64);
    }

    #[test]
    fn single_incoming_phi_is_a_syntax_error() {
        let err = parse_module(
            "func @p() -> i32 { entry: br next next: %x = phi i32 [1, entry] ret i32 %x }",
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
    }
}
