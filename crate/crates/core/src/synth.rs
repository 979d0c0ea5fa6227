//! Random valid functions: straight-line arithmetic, memory traffic on a
//! global array, diamonds with phis and bounded loops.
//!
//! Pairs share one structural random stream; `similarity` is the chance
//! that each choice of the second function follows the first's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{
    BasicBlock, Constant, Instruction, IrFunction, IrModule, IrType, MemoryDecl, Opcode, Operand, Param, Predicate,
};

/// Name and length of the global array generated code reads and writes.
pub const GLOBAL: &str = "G";
pub const GLOBAL_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Statements per region.
    pub max_stmts: usize,
    /// Nesting depth of diamonds and loops.
    pub max_depth: usize,
    /// Probability that a choice of the second function of a pair follows
    /// the first.
    pub similarity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_stmts: 6,
            max_depth: 2,
            similarity: 0.8,
        }
    }
}

struct Gen {
    structure: ChaCha8Rng,
    noise: ChaCha8Rng,
    p_noise: f64,
    cfg: SynthConfig,
    next_value: usize,
    next_label: usize,
    blocks: Vec<BasicBlock>,
    cur: usize,
    ints: Vec<String>,
    floats: Vec<String>,
}

const INT_OPS: [Opcode; 6] = [Opcode::Add, Opcode::Sub, Opcode::Mul, Opcode::And, Opcode::Or, Opcode::Xor];
const SHIFTS: [Opcode; 3] = [Opcode::Shl, Opcode::AShr, Opcode::LShr];
const FLOAT_OPS: [Opcode; 3] = [Opcode::FAdd, Opcode::FSub, Opcode::FMul];
const PREDS: [Predicate; 4] = [Predicate::Slt, Predicate::Sgt, Predicate::Eq, Predicate::Ne];

fn v(name: &str) -> Operand {
    Operand::Value(name.to_string())
}

impl Gen {
    fn pick(&mut self, k: usize) -> usize {
        if self.noise.gen_bool(self.p_noise) {
            self.noise.gen_range(0..k)
        } else {
            self.structure.gen_range(0..k)
        }
    }

    fn chance(&mut self, percent: usize) -> bool {
        self.pick(100) < percent
    }

    fn value(&mut self) -> String {
        self.next_value += 1;
        format!("v{}", self.next_value)
    }

    fn label(&mut self) -> String {
        self.next_label += 1;
        format!("b{}", self.next_label)
    }

    fn emit(&mut self, i: Instruction) {
        self.blocks[self.cur].instrs.push(i);
    }

    fn def(&mut self, op: Opcode, ty: IrType, operands: Vec<Operand>, result_ty: IrType) -> String {
        let n = self.value();
        self.emit(Instruction::new(op, Some(ty), operands).with_result(n.clone(), result_ty));
        n
    }

    fn open_block(&mut self, label: String) {
        self.blocks.push(BasicBlock::new(label));
        self.cur = self.blocks.len() - 1;
    }

    fn label_of_cur(&self) -> String {
        self.blocks[self.cur].label.clone()
    }

    fn int_value(&mut self) -> String {
        let k = self.pick(self.ints.len());
        self.ints[k].clone()
    }

    fn int_operand(&mut self) -> Operand {
        if self.chance(20) {
            Operand::int(self.pick(17) as i64 - 8)
        } else {
            v(&self.int_value())
        }
    }

    fn region(&mut self, depth: usize) {
        let n = 1 + self.pick(self.cfg.max_stmts);
        for _ in 0..n {
            self.statement(depth);
        }
    }

    fn statement(&mut self, depth: usize) {
        let nested = depth < self.cfg.max_depth;
        match self.pick(if nested { 12 } else { 10 }) {
            0..=2 => {
                let op = INT_OPS[self.pick(INT_OPS.len())];
                let (a, b) = (self.int_value(), self.int_operand());
                let r = self.def(op, IrType::I32, vec![v(&a), b], IrType::I32);
                self.ints.push(r);
            }
            3 => {
                let op = SHIFTS[self.pick(SHIFTS.len())];
                let a = self.int_value();
                let k = Operand::int(self.pick(6) as i64);
                let r = self.def(op, IrType::I32, vec![v(&a), k], IrType::I32);
                self.ints.push(r);
            }
            4 => {
                let (a, b) = (self.int_value(), self.int_value());
                let d = self.def(Opcode::Or, IrType::I32, vec![v(&b), Operand::int(1)], IrType::I32);
                let r = self.def(Opcode::SDiv, IrType::I32, vec![v(&a), v(&d)], IrType::I32);
                self.ints.push(r);
            }
            5 => {
                let p = PREDS[self.pick(PREDS.len())];
                let (a, b) = (self.int_value(), self.int_operand());
                let n = self.value();
                self.emit(
                    Instruction::new(Opcode::ICmp, Some(IrType::I32), vec![v(&a), b])
                        .with_predicate(p)
                        .with_result(n.clone(), IrType::I1),
                );
                let (x, y) = (self.int_operand(), self.int_operand());
                let r = self.def(Opcode::Select, IrType::I32, vec![v(&n), x, y], IrType::I32);
                self.ints.push(r);
            }
            6 | 7 => {
                let a = self.int_value();
                let idx = self.def(Opcode::And, IrType::I32, vec![v(&a), Operand::int(GLOBAL_LEN as i64 - 1)], IrType::I32);
                let p = self.def(
                    Opcode::Gep,
                    IrType::I32,
                    vec![Operand::Global(GLOBAL.to_string()), v(&idx)],
                    IrType::Addr,
                );
                if self.chance(50) {
                    let r = self.def(Opcode::Load, IrType::I32, vec![v(&p)], IrType::I32);
                    self.ints.push(r);
                } else {
                    let x = self.int_operand();
                    self.emit(Instruction::new(Opcode::Store, Some(IrType::I32), vec![x, v(&p)]));
                }
            }
            8 => {
                if self.floats.is_empty() {
                    let a = self.int_value();
                    let w = self.def(Opcode::SExt, IrType::I32, vec![v(&a)], IrType::I64);
                    let m = self.def(Opcode::Mul, IrType::I64, vec![v(&w), Operand::Const(Constant::Int(3))], IrType::I64);
                    let t = self.def(Opcode::Trunc, IrType::I64, vec![v(&m)], IrType::I32);
                    self.ints.push(t);
                } else {
                    let op = FLOAT_OPS[self.pick(FLOAT_OPS.len())];
                    let k = self.pick(self.floats.len());
                    let a = self.floats[k].clone();
                    let b = if self.chance(30) {
                        Operand::Const(Constant::Float(self.pick(8) as f64 * 0.5))
                    } else {
                        let k = self.pick(self.floats.len());
                        v(&self.floats[k])
                    };
                    let r = self.def(op, IrType::F64, vec![v(&a), b], IrType::F64);
                    self.floats.push(r);
                }
            }
            9 => {
                if let Some(f) = self.floats.last().cloned() {
                    let n = self.value();
                    self.emit(
                        Instruction::new(Opcode::FCmp, Some(IrType::F64), vec![v(&f), Operand::Const(Constant::Float(0.0))])
                            .with_predicate(Predicate::Olt)
                            .with_result(n.clone(), IrType::I1),
                    );
                    let r = self.def(Opcode::ZExt, IrType::I1, vec![v(&n)], IrType::I32);
                    self.ints.push(r);
                } else {
                    let a = self.int_value();
                    let r = self.def(Opcode::Add, IrType::I32, vec![v(&a), Operand::int(1)], IrType::I32);
                    self.ints.push(r);
                }
            }
            10 => self.diamond(depth),
            _ => self.counted_loop(depth),
        }
    }

    fn diamond(&mut self, depth: usize) {
        let p = PREDS[self.pick(PREDS.len())];
        let (a, b) = (self.int_value(), self.int_operand());
        let c = self.value();
        self.emit(
            Instruction::new(Opcode::ICmp, Some(IrType::I32), vec![v(&a), b])
                .with_predicate(p)
                .with_result(c.clone(), IrType::I1),
        );
        let (t, f, j) = (self.label(), self.label(), self.label());
        self.emit(Instruction::new(Opcode::CondBr, None, vec![v(&c), Operand::label(&t), Operand::label(&f)]));
        let (ints, floats) = (self.ints.clone(), self.floats.clone());

        let mut arm_end = Vec::new();
        let mut arm_val = Vec::new();
        for (k, lab) in [t, f].into_iter().enumerate() {
            self.open_block(lab);
            if k == 0 || self.chance(70) {
                self.region(depth + 1);
            }
            arm_val.push(self.int_value());
            self.emit(Instruction::new(Opcode::Br, None, vec![Operand::label(&j)]));
            arm_end.push(self.label_of_cur());
            self.ints = ints.clone();
            self.floats = floats.clone();
        }
        self.open_block(j);
        let phi = self.value();
        self.emit(
            Instruction::new(
                Opcode::Phi,
                Some(IrType::I32),
                vec![v(&arm_val[0]), Operand::label(&arm_end[0]), v(&arm_val[1]), Operand::label(&arm_end[1])],
            )
            .with_result(phi.clone(), IrType::I32),
        );
        self.ints.push(phi);
    }

    fn counted_loop(&mut self, depth: usize) {
        let a = self.int_value();
        let bound = self.def(Opcode::And, IrType::I32, vec![v(&a), Operand::int(7)], IrType::I32);
        let init = self.int_value();
        let pre = self.label_of_cur();
        let head = self.label();
        self.emit(Instruction::new(Opcode::Br, None, vec![Operand::label(&head)]));
        let (ints, floats) = (self.ints.clone(), self.floats.clone());

        self.open_block(head.clone());
        let head_block = self.cur;
        let (i, acc) = (self.value(), self.value());
        self.ints.push(i.clone());
        self.ints.push(acc.clone());
        self.region(depth + 1);
        let step = self.int_value();
        let op = INT_OPS[self.pick(3)];
        let acc2 = self.def(op, IrType::I32, vec![v(&acc), v(&step)], IrType::I32);
        let i2 = self.def(Opcode::Add, IrType::I32, vec![v(&i), Operand::int(1)], IrType::I32);
        let c = self.value();
        self.emit(
            Instruction::new(Opcode::ICmp, Some(IrType::I32), vec![v(&i2), v(&bound)])
                .with_predicate(Predicate::Slt)
                .with_result(c.clone(), IrType::I1),
        );
        let exit = self.label();
        self.emit(Instruction::new(Opcode::CondBr, None, vec![v(&c), Operand::label(&head), Operand::label(&exit)]));
        let latch = self.label_of_cur();
        let phis = [
            Instruction::new(
                Opcode::Phi,
                Some(IrType::I32),
                vec![Operand::int(0), Operand::label(&pre), v(&i2), Operand::label(&latch)],
            )
            .with_result(i, IrType::I32),
            Instruction::new(
                Opcode::Phi,
                Some(IrType::I32),
                vec![v(&init), Operand::label(&pre), v(&acc2), Operand::label(&latch)],
            )
            .with_result(acc, IrType::I32),
        ];
        self.blocks[head_block].instrs.splice(0..0, phis);

        self.open_block(exit);
        self.ints = ints;
        self.floats = floats;
        self.ints.push(acc2);
        self.ints.push(i2);
    }
}

fn generate(name: &str, structure_seed: u64, noise_seed: u64, p_noise: f64, cfg: &SynthConfig) -> IrFunction {
    let mut g = Gen {
        structure: ChaCha8Rng::seed_from_u64(structure_seed),
        noise: ChaCha8Rng::seed_from_u64(noise_seed),
        p_noise,
        cfg: cfg.clone(),
        next_value: 0,
        next_label: 0,
        blocks: vec![BasicBlock::new("entry")],
        cur: 0,
        ints: Vec::new(),
        floats: Vec::new(),
    };
    let mut params = Vec::new();
    let n_int = 1 + g.pick(3);
    for k in 0..n_int {
        let n = format!("a{k}");
        params.push(Param::new(n.clone(), IrType::I32));
        g.ints.push(n);
    }
    if g.chance(30) {
        params.push(Param::new("x", IrType::F64));
        g.floats.push("x".into());
    }
    g.region(0);
    let r = g.int_value();
    g.emit(Instruction::new(Opcode::Ret, Some(IrType::I32), vec![v(&r)]));
    IrFunction {
        name: name.to_string(),
        params,
        ret_ty: IrType::I32,
        blocks: g.blocks,
    }
}

fn global() -> MemoryDecl {
    MemoryDecl {
        name: GLOBAL.to_string(),
        elem_ty: IrType::I32,
        len: GLOBAL_LEN,
    }
}

/// A single random function.
pub fn random_function(name: &str, seed: u64, cfg: &SynthConfig) -> IrFunction {
    generate(name, seed, 0, 0.0, cfg)
}

/// Two related functions `@a` and `@b` plus the global array they use.
pub fn random_pair(seed: u64, cfg: &SynthConfig) -> IrModule {
    let structure = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5151;
    IrModule {
        memories: vec![global()],
        functions: vec![
            generate("a", structure, seed, 0.0, cfg),
            generate("b", structure, seed ^ 0xA5A5_A5A5, 1.0 - cfg.similarity, cfg),
        ],
    }
}

/// `n` independent functions `@f0`, `@f1`, ...
pub fn random_module(seed: u64, n: usize, cfg: &SynthConfig) -> IrModule {
    IrModule {
        memories: vec![global()],
        functions: (0..n)
            .map(|k| random_function(&format!("f{k}"), seed.wrapping_add(k as u64).wrapping_mul(0x2545_F491_4F6C_DD1D), cfg))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate;

    #[test]
    fn generated_code_is_valid() {
        for seed in 0..200 {
            let m = random_pair(seed, &SynthConfig::default());
            let v = validate(&m);
            assert!(v.is_empty(), "seed {seed}: {}", v[0]);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        assert_eq!(random_pair(7, &cfg), random_pair(7, &cfg));
        assert_ne!(random_pair(7, &cfg), random_pair(8, &cfg));
    }

    #[test]
    fn full_similarity_gives_copies() {
        let cfg = SynthConfig { similarity: 1.0, ..SynthConfig::default() };
        let m = random_pair(3, &cfg);
        assert_eq!(m.functions[0].blocks, m.functions[1].blocks);
    }
}
