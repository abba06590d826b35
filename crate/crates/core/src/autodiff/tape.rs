use std::collections::HashMap;
use std::fmt::Write;

use nalgebra::DMatrix;

use crate::dsl::Span;
use crate::error::{NumericError, NumericSite};

use super::graph::{ComputationGraph, Node};
use super::ops::{BinaryOp, UnaryOp};

pub type Reg = u32;

/// One tape instruction. Instruction `i` writes register `num_params + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instr {
    Const(f64),
    Unary(UnaryOp, Reg),
    Binary(BinaryOp, Reg, Reg),
}

/// Flat single-assignment form of a computation graph. Registers
/// `0..num_params` hold the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    num_params: usize,
    instrs: Vec<Instr>,
    spans: Vec<Span>,
    vertex_outputs: Vec<[Reg; 3]>,
    constraint_outputs: Vec<Reg>,
}

/// Caller-owned buffers for evaluating a tape. Reusing one scratch across
/// calls avoids all allocation after the first use.
#[derive(Debug, Clone, Default)]
pub struct TapeScratch {
    vals: Vec<f64>,
    adj: Vec<f64>,
    tan: Vec<f64>,
}

impl TapeScratch {
    pub fn new(tape: &Tape) -> Self {
        let n = tape.num_registers();
        Self {
            vals: vec![0.0; n],
            adj: vec![0.0; n],
            tan: vec![0.0; n],
        }
    }

    fn fit(&mut self, n: usize) {
        if self.vals.len() != n {
            self.vals.resize(n, 0.0);
            self.adj.resize(n, 0.0);
            self.tan.resize(n, 0.0);
        }
    }
}

#[derive(Clone, Copy)]
enum Lowered {
    Reg(Reg),
    Const(f64),
}

#[derive(PartialEq, Eq, Hash)]
enum Key {
    Unary(UnaryOp, Reg),
    Binary(BinaryOp, Reg, Reg),
}

struct Lowerer {
    num_params: usize,
    instrs: Vec<Instr>,
    spans: Vec<Span>,
    consts: HashMap<u64, Reg>,
    cse: HashMap<Key, Reg>,
}

impl Lowerer {
    fn reg_instr(&self, r: Reg) -> Option<Instr> {
        (r as usize)
            .checked_sub(self.num_params)
            .map(|i| self.instrs[i])
    }

    fn emit(&mut self, instr: Instr, span: Span) -> Reg {
        let r = (self.num_params + self.instrs.len()) as Reg;
        self.instrs.push(instr);
        self.spans.push(span);
        r
    }

    fn materialize(&mut self, v: Lowered) -> Reg {
        match v {
            Lowered::Reg(r) => r,
            Lowered::Const(c) => {
                if let Some(&r) = self.consts.get(&c.to_bits()) {
                    return r;
                }
                let r = self.emit(Instr::Const(c), Span::default());
                self.consts.insert(c.to_bits(), r);
                r
            }
        }
    }

    fn unary(&mut self, op: UnaryOp, a: Lowered, span: Span) -> Lowered {
        let a = match a {
            Lowered::Const(c) => return Lowered::Const(op.apply(c)),
            Lowered::Reg(r) => r,
        };
        if op == UnaryOp::Neg {
            if let Some(Instr::Unary(UnaryOp::Neg, inner)) = self.reg_instr(a) {
                return Lowered::Reg(inner);
            }
        }
        if op == UnaryOp::PowI(1) {
            return Lowered::Reg(a);
        }
        let key = Key::Unary(op, a);
        if let Some(&r) = self.cse.get(&key) {
            return Lowered::Reg(r);
        }
        let r = self.emit(Instr::Unary(op, a), span);
        self.cse.insert(key, r);
        Lowered::Reg(r)
    }

    fn binary(&mut self, op: BinaryOp, a: Lowered, b: Lowered, span: Span) -> Lowered {
        use BinaryOp::*;
        use Lowered::{Const as C, Reg as R};
        match (op, a, b) {
            (_, C(x), C(y)) => return C(op.apply(x, y)),
            (Add, x, C(z)) | (Add, C(z), x) | (Sub, x, C(z)) if z == 0.0 => return x,
            (Sub, C(0.0), x) => return self.unary(UnaryOp::Neg, x, span),
            (Sub, R(x), R(y)) if x == y => return C(0.0),
            (Mul, x, C(o)) | (Mul, C(o), x) if o == 1.0 => return x,
            (Mul, _, C(z)) | (Mul, C(z), _) if z == 0.0 => return C(0.0),
            (Mul, x, C(m)) | (Mul, C(m), x) if m == -1.0 => {
                return self.unary(UnaryOp::Neg, x, span)
            }
            (Div, x, C(1.0)) => return x,
            (Pow, x, C(1.0)) => return x,
            _ => {}
        }
        let mut ra = self.materialize(a);
        let mut rb = self.materialize(b);
        if op.is_commutative() && ra > rb {
            std::mem::swap(&mut ra, &mut rb);
        }
        let key = Key::Binary(op, ra, rb);
        if let Some(&r) = self.cse.get(&key) {
            return Lowered::Reg(r);
        }
        let r = self.emit(Instr::Binary(op, ra, rb), span);
        self.cse.insert(key, r);
        Lowered::Reg(r)
    }
}

/// Lowers a graph to a tape: dead-node elimination, constant folding,
/// algebraic identities and common-subexpression merging.
pub fn lower(graph: &ComputationGraph) -> Tape {
    let nodes = graph.nodes();
    let mut live = vec![false; nodes.len()];
    for ids in graph.vertex_outputs() {
        ids.iter().for_each(|&i| live[i] = true);
    }
    graph
        .constraint_outputs()
        .iter()
        .for_each(|&i| live[i] = true);
    for id in (0..nodes.len()).rev() {
        if live[id] {
            for inp in nodes[id].inputs() {
                live[inp] = true;
            }
        }
    }

    let mut lw = Lowerer {
        num_params: graph.num_params(),
        instrs: Vec::new(),
        spans: Vec::new(),
        consts: HashMap::new(),
        cse: HashMap::new(),
    };
    let mut map: Vec<Lowered> = vec![Lowered::Const(0.0); nodes.len()];
    for (id, node) in nodes.iter().enumerate() {
        if !live[id] {
            continue;
        }
        let span = graph.span(id);
        map[id] = match *node {
            Node::Const(c) => Lowered::Const(c),
            Node::Param(s) => Lowered::Reg(s as Reg),
            Node::Unary(op, a) => lw.unary(op, map[a], span),
            Node::Binary(op, a, b) => lw.binary(op, map[a], map[b], span),
        };
    }
    let vertex_outputs: Vec<[Reg; 3]> = graph
        .vertex_outputs()
        .iter()
        .map(|ids| ids.map(|i| lw.materialize(map[i])))
        .collect();
    let constraint_outputs: Vec<Reg> = graph
        .constraint_outputs()
        .iter()
        .map(|&i| lw.materialize(map[i]))
        .collect();

    let tape = Tape {
        num_params: graph.num_params(),
        instrs: lw.instrs,
        spans: lw.spans,
        vertex_outputs,
        constraint_outputs,
    };
    tape.eliminate_dead()
}

impl Tape {
    /// Removes instructions that no output depends on. Identities such as
    /// `x * 0` can orphan work that was already emitted.
    fn eliminate_dead(self) -> Tape {
        let m = self.num_params;
        let mut live = vec![false; self.num_registers()];
        for ids in &self.vertex_outputs {
            ids.iter().for_each(|&r| live[r as usize] = true);
        }
        self.constraint_outputs
            .iter()
            .for_each(|&r| live[r as usize] = true);
        for i in (0..self.instrs.len()).rev() {
            if !live[m + i] {
                continue;
            }
            match self.instrs[i] {
                Instr::Const(_) => {}
                Instr::Unary(_, a) => live[a as usize] = true,
                Instr::Binary(_, a, b) => {
                    live[a as usize] = true;
                    live[b as usize] = true;
                }
            }
        }
        if live[m..].iter().all(|&l| l) {
            return self;
        }
        let mut remap: Vec<Reg> = (0..self.num_registers() as Reg).collect();
        let mut instrs = Vec::new();
        let mut spans = Vec::new();
        for (i, instr) in self.instrs.iter().enumerate() {
            if !live[m + i] {
                continue;
            }
            remap[m + i] = (m + instrs.len()) as Reg;
            instrs.push(match *instr {
                Instr::Const(c) => Instr::Const(c),
                Instr::Unary(op, a) => Instr::Unary(op, remap[a as usize]),
                Instr::Binary(op, a, b) => Instr::Binary(op, remap[a as usize], remap[b as usize]),
            });
            spans.push(self.spans[i]);
        }
        Tape {
            num_params: m,
            instrs,
            spans,
            vertex_outputs: self
                .vertex_outputs
                .iter()
                .map(|ids| ids.map(|r| remap[r as usize]))
                .collect(),
            constraint_outputs: self
                .constraint_outputs
                .iter()
                .map(|&r| remap[r as usize])
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_outputs.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_outputs.len()
    }

    pub fn num_registers(&self) -> usize {
        self.num_params + self.instrs.len()
    }

    pub fn instructions(&self) -> &[Instr] {
        &self.instrs
    }

    pub fn instruction_span(&self, i: usize) -> Span {
        self.spans[i]
    }

    pub fn vertex_outputs(&self) -> &[[Reg; 3]] {
        &self.vertex_outputs
    }

    pub fn constraint_outputs(&self) -> &[Reg] {
        &self.constraint_outputs
    }

    /// Number of arithmetic instructions (everything except constant loads).
    pub fn arithmetic_count(&self) -> usize {
        self.instrs
            .iter()
            .filter(|i| !matches!(i, Instr::Const(_)))
            .count()
    }

    /// Rebuilds a graph with one node per register.
    pub fn to_graph(&self) -> ComputationGraph {
        let mut nodes: Vec<Node> = (0..self.num_params).map(Node::Param).collect();
        let mut spans = vec![Span::default(); self.num_params];
        for (instr, span) in self.instrs.iter().zip(&self.spans) {
            nodes.push(match *instr {
                Instr::Const(c) => Node::Const(c),
                Instr::Unary(op, a) => Node::Unary(op, a as usize),
                Instr::Binary(op, a, b) => Node::Binary(op, a as usize, b as usize),
            });
            spans.push(*span);
        }
        ComputationGraph::from_parts(
            self.num_params,
            nodes,
            spans,
            self.vertex_outputs
                .iter()
                .map(|ids| ids.map(|r| r as usize))
                .collect(),
            self.constraint_outputs
                .iter()
                .map(|&r| r as usize)
                .collect(),
        )
    }

    fn numeric_error(&self, i: usize, detail: String) -> NumericError {
        NumericError {
            site: NumericSite::Instruction(i),
            span: self.spans[i],
            detail,
        }
    }

    /// Forward pass; leaves every register value in the scratch.
    pub fn forward(&self, params: &[f64], s: &mut TapeScratch) -> Result<(), NumericError> {
        assert_eq!(params.len(), self.num_params, "parameter count mismatch");
        s.fit(self.num_registers());
        let m = self.num_params;
        s.vals[..m].copy_from_slice(params);
        for (i, instr) in self.instrs.iter().enumerate() {
            let v = match *instr {
                Instr::Const(c) => c,
                Instr::Unary(op, a) => op.apply(s.vals[a as usize]),
                Instr::Binary(op, a, b) => op.apply(s.vals[a as usize], s.vals[b as usize]),
            };
            if !v.is_finite() {
                return Err(self.numeric_error(i, format!("{instr:?} evaluated to {v}")));
            }
            s.vals[m + i] = v;
        }
        Ok(())
    }

    /// Copies outputs of the last forward pass.
    pub fn read_outputs(&self, s: &TapeScratch, vertices: &mut [f64], constraints: &mut [f64]) {
        for (k, ids) in self.vertex_outputs.iter().enumerate() {
            for c in 0..3 {
                vertices[3 * k + c] = s.vals[ids[c] as usize];
            }
        }
        for (k, &r) in self.constraint_outputs.iter().enumerate() {
            constraints[k] = s.vals[r as usize];
        }
    }

    /// Vertex positions (flattened xyz) and constraint values at `params`.
    pub fn eval(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
    ) -> Result<(Vec<f64>, Vec<f64>), NumericError> {
        let mut v = vec![0.0; 3 * self.num_vertices()];
        let mut g = vec![0.0; self.num_constraints()];
        self.eval_into(params, s, &mut v, &mut g)?;
        Ok((v, g))
    }

    pub fn eval_into(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
        vertices: &mut [f64],
        constraints: &mut [f64],
    ) -> Result<(), NumericError> {
        self.forward(params, s)?;
        self.read_outputs(s, vertices, constraints);
        Ok(())
    }

    /// Vertex positions only.
    pub fn eval_vertices(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
    ) -> Result<Vec<f64>, NumericError> {
        self.forward(params, s)?;
        Ok(self
            .vertex_outputs
            .iter()
            .flat_map(|ids| ids.map(|r| s.vals[r as usize]))
            .collect())
    }

    /// Constraint values only.
    pub fn eval_constraints(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
    ) -> Result<Vec<f64>, NumericError> {
        self.forward(params, s)?;
        Ok(self
            .constraint_outputs
            .iter()
            .map(|&r| s.vals[r as usize])
            .collect())
    }

    /// `(∂V/∂P)ᵀ w_v + (∂g/∂P)ᵀ w_g`, running the forward pass first.
    pub fn vjp(
        &self,
        params: &[f64],
        w_v: &[f64],
        w_g: &[f64],
        s: &mut TapeScratch,
    ) -> Result<Vec<f64>, NumericError> {
        self.forward(params, s)?;
        let mut out = vec![0.0; self.num_params];
        self.vjp_prepared(w_v, w_g, s, &mut out)?;
        Ok(out)
    }

    /// Reverse sweep reusing the register values of the last forward pass.
    pub fn vjp_prepared(
        &self,
        w_v: &[f64],
        w_g: &[f64],
        s: &mut TapeScratch,
        out: &mut [f64],
    ) -> Result<(), NumericError> {
        assert_eq!(w_v.len(), 3 * self.num_vertices());
        assert_eq!(w_g.len(), self.num_constraints());
        let m = self.num_params;
        s.adj.iter_mut().for_each(|a| *a = 0.0);
        for (k, ids) in self.vertex_outputs.iter().enumerate() {
            for c in 0..3 {
                s.adj[ids[c] as usize] += w_v[3 * k + c];
            }
        }
        for (k, &r) in self.constraint_outputs.iter().enumerate() {
            s.adj[r as usize] += w_g[k];
        }
        for i in (0..self.instrs.len()).rev() {
            let a = s.adj[m + i];
            if a == 0.0 {
                continue;
            }
            match self.instrs[i] {
                Instr::Const(_) => {}
                Instr::Unary(op, x) => {
                    let x = x as usize;
                    let d = a * op.deriv(s.vals[x], s.vals[m + i]);
                    if !d.is_finite() {
                        return Err(self.numeric_error(i, "non-finite derivative".into()));
                    }
                    s.adj[x] += d;
                }
                Instr::Binary(op, x, y) => {
                    let (x, y) = (x as usize, y as usize);
                    let (dx, dy) = op.partials(s.vals[x], s.vals[y], s.vals[m + i]);
                    let (dx, dy) = (a * dx, a * dy);
                    if !(dx.is_finite() && dy.is_finite()) {
                        return Err(self.numeric_error(i, "non-finite derivative".into()));
                    }
                    s.adj[x] += dx;
                    s.adj[y] += dy;
                }
            }
        }
        out.copy_from_slice(&s.adj[..m]);
        Ok(())
    }

    /// Directional derivative `(∂V/∂P · dp, ∂g/∂P · dp)`.
    pub fn jvp(
        &self,
        params: &[f64],
        dp: &[f64],
        s: &mut TapeScratch,
    ) -> Result<(Vec<f64>, Vec<f64>), NumericError> {
        self.forward(params, s)?;
        let mut dv = vec![0.0; 3 * self.num_vertices()];
        let mut dg = vec![0.0; self.num_constraints()];
        self.jvp_prepared(dp, s, &mut dv, &mut dg)?;
        Ok((dv, dg))
    }

    /// Tangent sweep reusing the register values of the last forward pass.
    pub fn jvp_prepared(
        &self,
        dp: &[f64],
        s: &mut TapeScratch,
        dv: &mut [f64],
        dg: &mut [f64],
    ) -> Result<(), NumericError> {
        assert_eq!(dp.len(), self.num_params);
        let m = self.num_params;
        s.tan[..m].copy_from_slice(dp);
        for i in 0..self.instrs.len() {
            let t = match self.instrs[i] {
                Instr::Const(_) => 0.0,
                Instr::Unary(op, x) => {
                    let x = x as usize;
                    let tx = s.tan[x];
                    if tx == 0.0 {
                        0.0
                    } else {
                        tx * op.deriv(s.vals[x], s.vals[m + i])
                    }
                }
                Instr::Binary(op, x, y) => {
                    let (x, y) = (x as usize, y as usize);
                    let (tx, ty) = (s.tan[x], s.tan[y]);
                    if tx == 0.0 && ty == 0.0 {
                        0.0
                    } else {
                        let (px, py) = op.partials(s.vals[x], s.vals[y], s.vals[m + i]);
                        let mut t = 0.0;
                        if tx != 0.0 {
                            t += tx * px;
                        }
                        if ty != 0.0 {
                            t += ty * py;
                        }
                        t
                    }
                }
            };
            if !t.is_finite() {
                return Err(self.numeric_error(i, "non-finite tangent".into()));
            }
            s.tan[m + i] = t;
        }
        for (k, ids) in self.vertex_outputs.iter().enumerate() {
            for c in 0..3 {
                dv[3 * k + c] = s.tan[ids[c] as usize];
            }
        }
        for (k, &r) in self.constraint_outputs.iter().enumerate() {
            dg[k] = s.tan[r as usize];
        }
        Ok(())
    }

    /// Dense vertex Jacobian (3n × m) built from `m` forward-mode passes.
    /// Rows are ordered v0.x, v0.y, v0.z, v1.x, ...
    pub fn jacobian(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
    ) -> Result<DMatrix<f64>, NumericError> {
        Ok(self.jacobians(params, s)?.0)
    }

    /// Vertex Jacobian (3n × m) and constraint Jacobian (k × m).
    pub fn jacobians(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), NumericError> {
        let m = self.num_params;
        let rows = 3 * self.num_vertices();
        self.forward(params, s)?;
        let mut jv = DMatrix::zeros(rows, m);
        let mut jg = DMatrix::zeros(self.num_constraints(), m);
        let mut dp = vec![0.0; m];
        let mut dv = vec![0.0; rows];
        let mut dg = vec![0.0; self.num_constraints()];
        for j in 0..m {
            dp.iter_mut().for_each(|x| *x = 0.0);
            dp[j] = 1.0;
            self.jvp_prepared(&dp, s, &mut dv, &mut dg)?;
            jv.column_mut(j).copy_from_slice(&dv);
            jg.column_mut(j).copy_from_slice(&dg);
        }
        Ok((jv, jg))
    }

    /// `result[p][v]` is true when parameter `p` is an ancestor of any
    /// coordinate of vertex `v`.
    pub fn param_vertex_dependence(&self) -> Vec<Vec<bool>> {
        self.to_graph().param_vertex_dependence()
    }

    /// Constraint values and their Jacobian (k × m), using whichever sweep
    /// direction needs fewer passes.
    pub fn constraint_jacobian(
        &self,
        params: &[f64],
        s: &mut TapeScratch,
    ) -> Result<(Vec<f64>, DMatrix<f64>), NumericError> {
        let (m, k) = (self.num_params, self.num_constraints());
        if m <= k {
            let g = self.eval_constraints(params, s)?;
            return Ok((g, self.jacobians(params, s)?.1));
        }
        let g = self.eval_constraints(params, s)?;
        let w_v = vec![0.0; 3 * self.num_vertices()];
        let mut w_g = vec![0.0; k];
        let mut row = vec![0.0; m];
        let mut jac = DMatrix::zeros(k, m);
        for i in 0..k {
            w_g.iter_mut().for_each(|x| *x = 0.0);
            w_g[i] = 1.0;
            self.vjp_prepared(&w_v, &w_g, s, &mut row)?;
            for j in 0..m {
                jac[(i, j)] = row[j];
            }
        }
        Ok((g, jac))
    }

    /// Text listing, one instruction per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# tape params={} instructions={} arithmetic={} vertices={} constraints={}",
            self.num_params,
            self.instrs.len(),
            self.arithmetic_count(),
            self.num_vertices(),
            self.num_constraints()
        );
        for (i, instr) in self.instrs.iter().enumerate() {
            let dest = self.num_params + i;
            let _ = match *instr {
                Instr::Const(c) => writeln!(out, "r{dest} = const {c:?}"),
                Instr::Unary(op, a) => writeln!(out, "r{dest} = {} r{a}", op.mnemonic()),
                Instr::Binary(op, a, b) => writeln!(out, "r{dest} = {} r{a} r{b}", op.mnemonic()),
            };
        }
        for (k, ids) in self.vertex_outputs.iter().enumerate() {
            let _ = writeln!(out, "vertex {k} = r{} r{} r{}", ids[0], ids[1], ids[2]);
        }
        for (k, r) in self.constraint_outputs.iter().enumerate() {
            let _ = writeln!(out, "constraint {k} = r{r}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: Span = Span { line: 0, col: 0 };

    #[test]
    fn cse_merges_repeated_product() {
        let mut g = ComputationGraph::new(&[2.0, 3.0]);
        let a = g.mul(0, 1, S).unwrap();
        let b = g.mul(0, 1, S).unwrap();
        let sum = g.add(a, b, S).unwrap();
        g.set_vertex_outputs(vec![[sum, sum, sum]]);
        let t = lower(&g);
        let muls = t
            .instructions()
            .iter()
            .filter(|i| matches!(i, Instr::Binary(BinaryOp::Mul, ..)))
            .count();
        assert_eq!(muls, 1);
        assert_eq!(t.instructions().len(), 2);
        assert!(t.instructions().len() <= g.len());
    }

    #[test]
    fn commutative_operands_merge() {
        let mut g = ComputationGraph::new(&[2.0, 3.0]);
        let a = g.mul(0, 1, S).unwrap();
        let b = g.mul(1, 0, S).unwrap();
        let d = g.sub(a, b, S).unwrap();
        let e = g.add(a, d, S).unwrap();
        g.set_vertex_outputs(vec![[e, a, b]]);
        let t = lower(&g);
        assert_eq!(t.arithmetic_count(), 1);
    }

    #[test]
    fn orphans_are_dropped() {
        let mut g = ComputationGraph::new(&[2.0]);
        let orphan = g.unary(UnaryOp::Sin, 0, S).unwrap();
        let _orphan2 = g.mul(orphan, orphan, S).unwrap();
        let used = g.unary(UnaryOp::Exp, 0, S).unwrap();
        g.set_vertex_outputs(vec![[used, 0, 0]]);
        let t = lower(&g);
        assert_eq!(t.instructions(), &[Instr::Unary(UnaryOp::Exp, 0)]);
    }

    #[test]
    fn constants_fold_and_identities_apply() {
        let mut g = ComputationGraph::new(&[2.0]);
        let two = g.constant(2.0);
        let three = g.constant(3.0);
        let six = g.mul(two, three, S).unwrap();
        let one = g.constant(1.0);
        let x1 = g.mul(0, one, S).unwrap();
        let zero = g.constant(0.0);
        let x0 = g.add(x1, zero, S).unwrap();
        let n1 = g.unary(UnaryOp::Neg, x0, S).unwrap();
        let n2 = g.unary(UnaryOp::Neg, n1, S).unwrap();
        let y = g.mul(n2, six, S).unwrap();
        g.set_vertex_outputs(vec![[y, zero, six]]);
        let t = lower(&g);
        let mut s = TapeScratch::new(&t);
        let (v, _) = t.eval(&[2.0], &mut s).unwrap();
        assert_eq!(v, vec![12.0, 0.0, 6.0]);
        assert_eq!(t.arithmetic_count(), 1);
    }

    #[test]
    fn lowering_is_idempotent() {
        let mut g = ComputationGraph::new(&[2.0, 0.5]);
        let c = g.constant(0.0);
        let a = g.mul(0, c, S).unwrap();
        let b = g.add(a, 1, S).unwrap();
        let sb = g.unary(UnaryOp::Sin, b, S).unwrap();
        let k = g.constant(4.0);
        let d = g.div(sb, k, S).unwrap();
        let e = g.sub(d, 0, S).unwrap();
        let f = g.sub(k, e, S).unwrap();
        g.set_vertex_outputs(vec![[d, e, f], [k, c, sb]]);
        g.set_constraint_outputs(vec![f, c]);
        let t1 = lower(&g);
        let t2 = lower(&t1.to_graph());
        assert_eq!(t1, t2);
    }

    #[test]
    fn square_derivatives() {
        let mut g = ComputationGraph::new(&[3.0]);
        let sq = g.mul(0, 0, S).unwrap();
        g.set_vertex_outputs(vec![[sq, sq, sq]]);
        let t = lower(&g);
        let mut s = TapeScratch::new(&t);
        let dp = t.vjp(&[3.0], &[1.0, 0.0, 0.0], &[], &mut s).unwrap();
        assert_eq!(dp, vec![6.0]);
        let (dv, _) = t.jvp(&[3.0], &[1.0], &mut s).unwrap();
        assert_eq!(dv, vec![6.0; 3]);
        let (dv, _) = t.jvp(&[3.0], &[0.0], &mut s).unwrap();
        assert_eq!(dv, vec![0.0; 3]);
    }

    #[test]
    fn runtime_error_reports_instruction() {
        let mut g = ComputationGraph::new(&[1.0]);
        let l = g.unary(UnaryOp::Log, 0, Span::new(7, 3)).unwrap();
        g.set_vertex_outputs(vec![[l, l, l]]);
        let t = lower(&g);
        let mut s = TapeScratch::new(&t);
        let err = t.eval(&[0.0], &mut s).unwrap_err();
        assert_eq!(err.site, NumericSite::Instruction(0));
        assert_eq!(err.span.line, 7);
    }

    #[test]
    fn dump_lists_every_instruction() {
        let mut g = ComputationGraph::new(&[1.0, 2.0]);
        let a = g.add(0, 1, S).unwrap();
        let c = g.constant(2.5);
        let b = g.mul(a, c, S).unwrap();
        g.set_vertex_outputs(vec![[a, b, 0]]);
        let text = lower(&g).dump();
        assert!(text.contains("r2 = add r0 r1"));
        assert!(text.contains("r3 = const 2.5"));
        assert!(text.contains("r4 = mul r2 r3"));
        assert!(text.contains("vertex 0 = r2 r4 r0"));
    }
}
