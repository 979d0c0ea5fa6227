use std::fmt::Write;

use super::{Constant, Instruction, IrFunction, IrModule, Opcode, Operand};

fn constant(c: &Constant) -> String {
    match c {
        Constant::Int(v) => v.to_string(),
        Constant::Float(v) if v.is_nan() => "nan".into(),
        Constant::Float(v) if v.is_infinite() => {
            if *v > 0.0 { "inf" } else { "-inf" }.into()
        }
        Constant::Float(v) => {
            // `{:?}` is the shortest round-tripping form and keeps a '.' or
            // an exponent, which the lexer needs to tell floats from ints.
            let s = format!("{v:?}");
            if s.contains(['.', 'e', 'E']) {
                s
            } else {
                format!("{s}.0")
            }
        }
        Constant::Null => "null".into(),
    }
}

fn operand(o: &Operand) -> String {
    match o {
        Operand::Value(v) => format!("%{v}"),
        Operand::Const(c) => constant(c),
        Operand::Label(l) => l.clone(),
        Operand::Global(g) => format!("@{g}"),
    }
}

fn join(ops: &[Operand]) -> String {
    ops.iter().map(operand).collect::<Vec<_>>().join(", ")
}

/// Renders one instruction in the textual syntax (no indentation).
pub fn print_instruction(i: &Instruction) -> String {
    let mut s = String::new();
    if let Some((n, _)) = &i.result {
        let _ = write!(s, "%{n} = ");
    }
    s.push_str(i.opcode.name());
    let ty = i.ty.map(|t| t.name()).unwrap_or("");
    match i.opcode {
        Opcode::ICmp | Opcode::FCmp => {
            let p = i.predicate.map(|p| p.name()).unwrap_or("?");
            let _ = write!(s, " {p} {ty} {}", join(&i.operands));
        }
        Opcode::SExt | Opcode::ZExt | Opcode::Trunc => {
            let to = i.result_type().map(|t| t.name()).unwrap_or("?");
            let _ = write!(s, " {ty} {} to {to}", join(&i.operands));
        }
        Opcode::Alloca => {
            let _ = write!(s, " {ty}");
        }
        Opcode::Br | Opcode::CondBr => {
            let _ = write!(s, " {}", join(&i.operands));
        }
        Opcode::Switch => {
            let _ = write!(s, " {ty} {}", join(&i.operands[..i.operands.len().min(2)]));
            for case in i.operands.get(2..).unwrap_or(&[]).chunks(2) {
                let _ = write!(s, ", [{}]", join(case));
            }
        }
        Opcode::Phi => {
            let pairs: Vec<String> = i
                .operands
                .chunks(2)
                .map(|c| format!("[{}]", join(c)))
                .collect();
            let _ = write!(s, " {ty} {}", pairs.join(", "));
        }
        Opcode::Call => {
            let callee = i.callee.as_deref().unwrap_or("?");
            let _ = write!(s, " {ty} @{callee}({})", join(&i.operands));
        }
        _ => {
            let _ = write!(s, " {ty} {}", join(&i.operands));
        }
    }
    s.trim_end().to_string()
}

pub fn print_function(f: &IrFunction) -> String {
    let mut s = String::new();
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| format!("%{}: {}", p.name, p.ty))
        .collect();
    let _ = writeln!(s, "func @{}({}) -> {} {{", f.name, params.join(", "), f.ret_ty);
    for b in &f.blocks {
        let _ = writeln!(s, "{}:", b.label);
        for i in &b.instrs {
            let _ = writeln!(s, "  {}", print_instruction(i));
        }
    }
    s.push_str("}\n");
    s
}

pub fn print_module(m: &IrModule) -> String {
    let mut s = String::new();
    for mem in &m.memories {
        let _ = writeln!(s, "mem @{}: {}[{}]", mem.name, mem.elem_ty, mem.len);
    }
    for (k, f) in m.functions.iter().enumerate() {
        if k > 0 || !m.memories.is_empty() {
            s.push('\n');
        }
        s.push_str(&print_function(f));
    }
    s
}
