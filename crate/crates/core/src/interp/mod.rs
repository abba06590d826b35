//! Executes a program, tracing every scalar operation into a computation
//! graph and recording which nodes hold vertex coordinates and constraints.

mod catalog;

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{BinaryOp, ComputationGraph, NodeId, UnaryOp};
use crate::dsl::{
    Axis, BinOp, Expr, ExprKind, Func, Program, ScaleFactors, SelectItem, Shape, Span, Statement,
    StatementKind, Target,
};
use crate::error::{InterpError, NumericError};
use crate::mesh::MeshTopology;

pub use catalog::{op_catalog, OpInfo};

/// Lower bound used by automatically emitted constraints unless overridden
/// with `pragma epsilon = ...`.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexMarker {
    pub vid: usize,
    pub nodes: [NodeId; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Auto,
    UserClamp,
}

/// A graph node whose value must stay non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    #[serde(skip)]
    pub node: NodeId,
    pub op: String,
    pub span: Span,
    pub description: String,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone)]
pub struct InterpResult {
    pub graph: ComputationGraph,
    pub markers: Vec<VertexMarker>,
    pub topology: MeshTopology,
    pub constraints: Vec<ConstraintRecord>,
    /// Vertex positions computed while tracing, indexed by vid.
    pub positions: Vec<[f64; 3]>,
    pub param_names: Vec<String>,
    pub initial_params: Vec<f64>,
    pub epsilon: f64,
}

/// Runs the program at its declared initial parameter values.
pub fn interpret(program: &Program) -> Result<InterpResult, InterpError> {
    interpret_at(program, &program.initial_params())
}

/// Runs the program with the given parameter values.
pub fn interpret_at(program: &Program, params: &[f64]) -> Result<InterpResult, InterpError> {
    assert_eq!(
        params.len(),
        program.params.len(),
        "parameter count mismatch"
    );
    let epsilon = program
        .pragmas
        .iter()
        .find(|p| p.name == "epsilon")
        .map_or(DEFAULT_EPSILON, |p| p.value);
    let mut it = Interp {
        graph: ComputationGraph::new(params),
        params: program
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect(),
        lets: HashMap::new(),
        loop_vars: Vec::new(),
        slots: Vec::new(),
        alive: Vec::new(),
        solids: Vec::new(),
        solid_names: HashMap::new(),
        constraints: Vec::new(),
        epsilon,
        eps_node: None,
    };
    for s in &program.statements {
        it.statement(s)?;
    }
    it.finish(program, params)
}

#[derive(Debug, Clone)]
struct Solid {
    /// Slot ids in local vertex order.
    verts: Vec<usize>,
    /// Polygons as slot ids.
    faces: Vec<Vec<usize>>,
    /// Set while the solid is a planar profile that can still be chamfered.
    is_profile: bool,
}

struct Interp {
    graph: ComputationGraph,
    params: HashMap<String, usize>,
    lets: HashMap<String, NodeId>,
    loop_vars: Vec<(String, i64)>,
    slots: Vec<[NodeId; 3]>,
    alive: Vec<bool>,
    solids: Vec<Solid>,
    solid_names: HashMap<String, usize>,
    constraints: Vec<ConstraintRecord>,
    epsilon: f64,
    eps_node: Option<NodeId>,
}

fn numeric(span: Span) -> impl Fn(NumericError) -> InterpError {
    move |e| {
        InterpError::new(
            span,
            format!(
                "expression is not finite at the given parameters ({})",
                e.detail
            ),
        )
    }
}

impl Interp {
    fn statement(&mut self, s: &Statement) -> Result<(), InterpError> {
        let span = s.span;
        match &s.kind {
            StatementKind::Let { name, value } => {
                let n = self.expr(value)?;
                self.lets.insert(name.clone(), n);
            }
            StatementKind::Solid { name, shape } => {
                let solid = match shape {
                    Shape::Box { w, h, d } => self.make_box(w, h, d, span)?,
                    Shape::Cylinder { r, h, sides } => self.make_cylinder(r, h, sides, span)?,
                    Shape::Rect { w, h } => self.make_rect(w, h, span)?,
                };
                self.solids.push(solid);
                self.solid_names.insert(name.clone(), self.solids.len() - 1);
            }
            StatementKind::Translate { target, offset } => {
                let d = [
                    self.expr(&offset[0])?,
                    self.expr(&offset[1])?,
                    self.expr(&offset[2])?,
                ];
                for slot in self.target_slots(target)? {
                    for (c, &dc) in d.iter().enumerate() {
                        self.slots[slot][c] = self
                            .graph
                            .add(self.slots[slot][c], dc, span)
                            .map_err(numeric(span))?;
                    }
                }
            }
            StatementKind::Rotate {
                target,
                axis,
                angle,
            } => {
                let a = self.expr(angle)?;
                let cos = self
                    .graph
                    .unary(UnaryOp::Cos, a, span)
                    .map_err(numeric(span))?;
                let sin = self
                    .graph
                    .unary(UnaryOp::Sin, a, span)
                    .map_err(numeric(span))?;
                // Right-handed rotation of the two remaining coordinates.
                let (i, j) = match axis {
                    Axis::X => (1, 2),
                    Axis::Y => (2, 0),
                    Axis::Z => (0, 1),
                };
                for slot in self.target_slots(target)? {
                    let (u, v) = (self.slots[slot][i], self.slots[slot][j]);
                    let g = &mut self.graph;
                    let uc = g.mul(u, cos, span).map_err(numeric(span))?;
                    let vs = g.mul(v, sin, span).map_err(numeric(span))?;
                    let us = g.mul(u, sin, span).map_err(numeric(span))?;
                    let vc = g.mul(v, cos, span).map_err(numeric(span))?;
                    self.slots[slot][i] = g.sub(uc, vs, span).map_err(numeric(span))?;
                    self.slots[slot][j] = g.add(us, vc, span).map_err(numeric(span))?;
                }
            }
            StatementKind::Scale { target, factors } => {
                let f = match factors {
                    ScaleFactors::Uniform(e) => {
                        let n = self.expr(e)?;
                        [n, n, n]
                    }
                    ScaleFactors::PerAxis(es) => {
                        [self.expr(&es[0])?, self.expr(&es[1])?, self.expr(&es[2])?]
                    }
                };
                for slot in self.target_slots(target)? {
                    for (c, &fc) in f.iter().enumerate() {
                        self.slots[slot][c] = self
                            .graph
                            .mul(self.slots[slot][c], fc, span)
                            .map_err(numeric(span))?;
                    }
                }
            }
            StatementKind::Extrude {
                solid,
                face,
                length,
            } => self.extrude(solid, face, length, span)?,
            StatementKind::Chamfer {
                solid,
                corner,
                radius,
            } => self.chamfer(solid, corner, radius, span)?,
            StatementKind::Clamp { lo, value, hi } => self.clamp(lo, value, hi, span)?,
            StatementKind::Loop {
                var,
                start,
                end,
                body,
            } => {
                let (a, b) = (self.index(start)?, self.index(end)?);
                for i in a..b {
                    self.loop_vars.push((var.clone(), i));
                    for st in body {
                        self.statement(st)?;
                    }
                    self.loop_vars.pop();
                }
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<NodeId, InterpError> {
        let span = e.span;
        Ok(match &e.kind {
            ExprKind::Num(v) => self.graph.constant(*v),
            ExprKind::Ident(name) => {
                if let Some(&(_, v)) = self.loop_vars.iter().rev().find(|(n, _)| n == name) {
                    self.graph.constant(v as f64)
                } else if let Some(&n) = self.lets.get(name) {
                    n
                } else if let Some(&p) = self.params.get(name) {
                    self.graph.param(p)
                } else {
                    return Err(InterpError::new(
                        span,
                        format!("unknown identifier `{name}`"),
                    ));
                }
            }
            ExprKind::Neg(a) => {
                let a = self.expr(a)?;
                self.graph
                    .unary(UnaryOp::Neg, a, span)
                    .map_err(numeric(span))?
            }
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (self.expr(a)?, self.expr(b)?);
                let op = match op {
                    BinOp::Add => BinaryOp::Add,
                    BinOp::Sub => BinaryOp::Sub,
                    BinOp::Mul => BinaryOp::Mul,
                    BinOp::Div => BinaryOp::Div,
                };
                self.graph.binary(op, a, b, span).map_err(numeric(span))?
            }
            ExprKind::Call(Func::Pow, args) => {
                let base = self.expr(&args[0])?;
                match self.integer_exponent(&args[1]) {
                    Some(n) => self
                        .graph
                        .unary(UnaryOp::PowI(n), base, span)
                        .map_err(numeric(span))?,
                    None => {
                        let ex = self.expr(&args[1])?;
                        self.graph
                            .binary(BinaryOp::Pow, base, ex, span)
                            .map_err(numeric(span))?
                    }
                }
            }
            ExprKind::Call(f, args) => {
                let a = self.expr(&args[0])?;
                let op = match f {
                    Func::Sin => UnaryOp::Sin,
                    Func::Cos => UnaryOp::Cos,
                    Func::Sqrt => UnaryOp::Sqrt,
                    Func::Exp => UnaryOp::Exp,
                    Func::Log => UnaryOp::Log,
                    Func::Pow => unreachable!(),
                };
                self.graph.unary(op, a, span).map_err(numeric(span))?
            }
            ExprKind::VertexCoord { solid, index, axis } => {
                let s = self.solid_id(solid, span)?;
                let i = self.index(index)?;
                let slot = self.local_vertex(s, i, span)?;
                self.slots[slot][axis.index()]
            }
        })
    }

    /// Exponents that are integer constants become `PowI`, which is defined
    /// for negative bases.
    fn integer_exponent(&self, e: &Expr) -> Option<i32> {
        let v = match crate::dsl::const_value(e) {
            Some(v) => v,
            None => self.index(e).ok()? as f64,
        };
        (v.fract() == 0.0 && v.abs() <= i32::MAX as f64).then_some(v as i32)
    }

    /// Evaluates a compile-time integer expression.
    fn index(&self, e: &Expr) -> Result<i64, InterpError> {
        let span = e.span;
        match &e.kind {
            ExprKind::Num(v) if v.fract() == 0.0 => Ok(*v as i64),
            ExprKind::Ident(name) => self
                .loop_vars
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|&(_, v)| v)
                .ok_or_else(|| {
                    InterpError::new(span, format!("`{name}` is not an integer constant"))
                }),
            ExprKind::Neg(a) => Ok(-self.index(a)?),
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (self.index(a)?, self.index(b)?);
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => Err(InterpError::new(span, "division in an index expression")),
                }
            }
            _ => Err(InterpError::new(span, "index must be an integer constant")),
        }
    }

    fn solid_id(&self, name: &str, span: Span) -> Result<usize, InterpError> {
        self.solid_names
            .get(name)
            .copied()
            .ok_or_else(|| InterpError::new(span, format!("undefined solid `{name}`")))
    }

    fn local_vertex(&self, solid: usize, i: i64, span: Span) -> Result<usize, InterpError> {
        let verts = &self.solids[solid].verts;
        usize::try_from(i)
            .ok()
            .and_then(|i| verts.get(i).copied())
            .ok_or_else(|| {
                InterpError::new(
                    span,
                    format!("vertex index {i} out of range (solid has {})", verts.len()),
                )
            })
    }

    fn target_slots(&self, t: &Target) -> Result<Vec<usize>, InterpError> {
        let s = self.solid_id(&t.solid, t.span)?;
        let Some(items) = &t.selection else {
            return Ok(self.solids[s].verts.clone());
        };
        let mut out = Vec::new();
        for it in items {
            match it {
                SelectItem::Index(e) => out.push(self.local_vertex(s, self.index(e)?, e.span)?),
                SelectItem::Range(a, b) => {
                    let (lo, hi) = (self.index(a)?, self.index(b)?);
                    for i in lo..hi {
                        out.push(self.local_vertex(s, i, a.span)?);
                    }
                }
            }
        }
        // A vertex listed twice is still transformed once.
        let mut seen = std::collections::HashSet::new();
        out.retain(|v| seen.insert(*v));
        Ok(out)
    }

    fn new_slot(&mut self, nodes: [NodeId; 3]) -> usize {
        self.slots.push(nodes);
        self.alive.push(true);
        self.slots.len() - 1
    }

    fn half(&mut self, e: &Expr, span: Span) -> Result<(NodeId, NodeId), InterpError> {
        let v = self.expr(e)?;
        let h = self.graph.constant(0.5);
        let pos = self.graph.mul(v, h, span).map_err(numeric(span))?;
        let neg = self
            .graph
            .unary(UnaryOp::Neg, pos, span)
            .map_err(numeric(span))?;
        Ok((neg, pos))
    }

    fn make_box(&mut self, w: &Expr, h: &Expr, d: &Expr, span: Span) -> Result<Solid, InterpError> {
        let x = self.half(w, span)?;
        let y = self.half(h, span)?;
        let z = self.half(d, span)?;
        let pick = |pair: (NodeId, NodeId), bit: bool| if bit { pair.1 } else { pair.0 };
        let verts: Vec<usize> = (0..8)
            .map(|k| {
                self.new_slot([
                    pick(x, k & 1 != 0),
                    pick(y, k & 2 != 0),
                    pick(z, k & 4 != 0),
                ])
            })
            .collect();
        let local = [
            [0, 4, 6, 2],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 2, 3, 1],
            [4, 5, 7, 6],
        ];
        let faces = local
            .iter()
            .map(|f| f.iter().map(|&i| verts[i]).collect())
            .collect();
        Ok(Solid {
            verts,
            faces,
            is_profile: false,
        })
    }

    fn make_cylinder(
        &mut self,
        r: &Expr,
        h: &Expr,
        sides: &Expr,
        span: Span,
    ) -> Result<Solid, InterpError> {
        let n = self.index(sides)?;
        if n < 3 {
            return Err(InterpError::new(
                sides.span,
                "cylinder needs at least 3 sides",
            ));
        }
        let n = n as usize;
        let r = self.expr(r)?;
        let (zlo, zhi) = self.half(h, span)?;
        let mut verts = Vec::with_capacity(2 * n);
        for z in [zlo, zhi] {
            for j in 0..n {
                let t = 2.0 * PI * j as f64 / n as f64;
                let (c, s) = (self.graph.constant(t.cos()), self.graph.constant(t.sin()));
                let x = self.graph.mul(r, c, span).map_err(numeric(span))?;
                let y = self.graph.mul(r, s, span).map_err(numeric(span))?;
                verts.push(self.new_slot([x, y, z]));
            }
        }
        let mut faces = vec![
            (0..n).rev().map(|j| verts[j]).collect(),
            (n..2 * n).map(|j| verts[j]).collect(),
        ];
        for j in 0..n {
            let k = (j + 1) % n;
            faces.push(vec![verts[j], verts[k], verts[n + k], verts[n + j]]);
        }
        Ok(Solid {
            verts,
            faces,
            is_profile: false,
        })
    }

    fn make_rect(&mut self, w: &Expr, h: &Expr, span: Span) -> Result<Solid, InterpError> {
        let (x0, x1) = self.half(w, span)?;
        let (y0, y1) = self.half(h, span)?;
        let z = self.graph.constant(0.0);
        let verts: Vec<usize> = [[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]]
            .into_iter()
            .map(|p| self.new_slot(p))
            .collect();
        let faces = vec![verts.clone(), verts.iter().rev().copied().collect()];
        Ok(Solid {
            verts,
            faces,
            is_profile: true,
        })
    }

    fn epsilon_node(&mut self) -> NodeId {
        if let Some(n) = self.eps_node {
            return n;
        }
        let n = self.graph.constant(self.epsilon);
        self.eps_node = Some(n);
        n
    }

    fn push_constraint(
        &mut self,
        node: NodeId,
        op: &str,
        span: Span,
        description: String,
        kind: ConstraintKind,
    ) {
        self.constraints.push(ConstraintRecord {
            node,
            op: op.into(),
            span,
            description,
            kind,
        });
    }

    fn extrude(
        &mut self,
        name: &str,
        face: &Expr,
        length: &Expr,
        span: Span,
    ) -> Result<(), InterpError> {
        let s = self.solid_id(name, span)?;
        let fi = self.index(face)?;
        let nfaces = self.solids[s].faces.len();
        let fi = usize::try_from(fi)
            .ok()
            .filter(|&f| f < nfaces)
            .ok_or_else(|| {
                InterpError::new(
                    face.span,
                    format!("face index {fi} out of range (solid has {nfaces})"),
                )
            })?;
        let len = self.expr(length)?;
        let ring = self.solids[s].faces[fi].clone();
        let normal = self.unit_normal(&ring, span)?;

        let mut top = Vec::with_capacity(ring.len());
        for &a in &ring {
            let mut p = self.slots[a];
            for c in 0..3 {
                let off = self
                    .graph
                    .mul(normal[c], len, span)
                    .map_err(numeric(span))?;
                p[c] = self.graph.add(p[c], off, span).map_err(numeric(span))?;
            }
            top.push(self.new_slot(p));
        }
        let k = ring.len();
        let solid = &mut self.solids[s];
        solid.faces[fi] = top.clone();
        for i in 0..k {
            let j = (i + 1) % k;
            solid.faces.push(vec![ring[i], ring[j], top[j], top[i]]);
        }
        solid.verts.extend(&top);
        solid.is_profile = false;

        let eps = self.epsilon_node();
        let g = self.graph.sub(len, eps, span).map_err(numeric(span))?;
        let desc =
            format!("extrude length of `{name}` face {fi} minus epsilon must be non-negative");
        self.push_constraint(g, "extrude", span, desc, ConstraintKind::Auto);
        Ok(())
    }

    /// Newell normal of a polygon, normalized.
    fn unit_normal(&mut self, ring: &[usize], span: Span) -> Result<[NodeId; 3], InterpError> {
        let g = &mut self.graph;
        let mut acc: [Option<NodeId>; 3] = [None; 3];
        for i in 0..ring.len() {
            let (p, q) = (self.slots[ring[i]], self.slots[ring[(i + 1) % ring.len()]]);
            for (c, (u, v)) in [(1, 2), (2, 0), (0, 1)].into_iter().enumerate() {
                // n_c += (p_u - q_u) * (p_v + q_v)
                let d = g.sub(p[u], q[u], span).map_err(numeric(span))?;
                let s = g.add(p[v], q[v], span).map_err(numeric(span))?;
                let t = g.mul(d, s, span).map_err(numeric(span))?;
                acc[c] = Some(match acc[c] {
                    None => t,
                    Some(a) => g.add(a, t, span).map_err(numeric(span))?,
                });
            }
        }
        let n = acc.map(|a| a.expect("faces have at least 3 vertices"));
        let mut sq = None;
        for &c in &n {
            let c2 = g.unary(UnaryOp::PowI(2), c, span).map_err(numeric(span))?;
            sq = Some(match sq {
                None => c2,
                Some(a) => g.add(a, c2, span).map_err(numeric(span))?,
            });
        }
        let len = g
            .unary(UnaryOp::Sqrt, sq.unwrap(), span)
            .map_err(numeric(span))?;
        if g.value(len) < 1e-300 {
            return Err(InterpError::new(
                span,
                "cannot extrude a face with zero area",
            ));
        }
        Ok([
            g.div(n[0], len, span).map_err(numeric(span))?,
            g.div(n[1], len, span).map_err(numeric(span))?,
            g.div(n[2], len, span).map_err(numeric(span))?,
        ])
    }

    fn distance(
        &mut self,
        a: [NodeId; 3],
        b: [NodeId; 3],
        span: Span,
    ) -> Result<NodeId, InterpError> {
        let g = &mut self.graph;
        let mut sum = None;
        for c in 0..3 {
            let d = g.sub(a[c], b[c], span).map_err(numeric(span))?;
            let d2 = g.unary(UnaryOp::PowI(2), d, span).map_err(numeric(span))?;
            sum = Some(match sum {
                None => d2,
                Some(s) => g.add(s, d2, span).map_err(numeric(span))?,
            });
        }
        g.unary(UnaryOp::Sqrt, sum.unwrap(), span)
            .map_err(numeric(span))
    }

    fn chamfer(
        &mut self,
        name: &str,
        corner: &Expr,
        radius: &Expr,
        span: Span,
    ) -> Result<(), InterpError> {
        let s = self.solid_id(name, span)?;
        if !self.solids[s].is_profile {
            return Err(InterpError::new(
                span,
                format!("chamfer requires a planar profile, but `{name}` is a solid"),
            ));
        }
        let k = self.index(corner)?;
        let nv = self.solids[s].verts.len();
        let k = usize::try_from(k).ok().filter(|&k| k < nv).ok_or_else(|| {
            InterpError::new(
                corner.span,
                format!("corner index {k} out of range (profile has {nv})"),
            )
        })?;
        let r = self.expr(radius)?;
        let verts = self.solids[s].verts.clone();
        let (prev, c, next) = (verts[(k + nv - 1) % nv], verts[k], verts[(k + 1) % nv]);
        let (pp, pc, pn) = (self.slots[prev], self.slots[c], self.slots[next]);
        let len_prev = self.distance(pp, pc, span)?;
        let len_next = self.distance(pn, pc, span)?;

        let cut = |this: &mut Self,
                   other: [NodeId; 3],
                   len: NodeId|
         -> Result<[NodeId; 3], InterpError> {
            let g = &mut this.graph;
            let t = g.div(r, len, span).map_err(numeric(span))?;
            let mut out = pc;
            for i in 0..3 {
                let d = g.sub(other[i], pc[i], span).map_err(numeric(span))?;
                let o = g.mul(t, d, span).map_err(numeric(span))?;
                out[i] = g.add(pc[i], o, span).map_err(numeric(span))?;
            }
            Ok(out)
        };
        let a = cut(self, pp, len_prev)?;
        let b = cut(self, pn, len_next)?;
        let (sa, sb) = (self.new_slot(a), self.new_slot(b));
        self.alive[c] = false;

        let solid = &mut self.solids[s];
        solid.verts.splice(k..=k, [sa, sb]);
        solid.faces = vec![
            solid.verts.clone(),
            solid.verts.iter().rev().copied().collect(),
        ];

        let g1 = self.graph.sub(len_prev, r, span).map_err(numeric(span))?;
        let g2 = self.graph.sub(len_next, r, span).map_err(numeric(span))?;
        let eps = self.epsilon_node();
        let g3 = self.graph.sub(r, eps, span).map_err(numeric(span))?;
        let what = format!("chamfer of `{name}` corner {k}");
        self.push_constraint(
            g1,
            "chamfer",
            span,
            format!("{what}: radius must not exceed the preceding edge"),
            ConstraintKind::Auto,
        );
        self.push_constraint(
            g2,
            "chamfer",
            span,
            format!("{what}: radius must not exceed the following edge"),
            ConstraintKind::Auto,
        );
        self.push_constraint(
            g3,
            "chamfer",
            span,
            format!("{what}: radius minus epsilon must be non-negative"),
            ConstraintKind::Auto,
        );
        Ok(())
    }

    fn clamp(&mut self, lo: &Expr, value: &Expr, hi: &Expr, span: Span) -> Result<(), InterpError> {
        let nodes = [self.expr(lo)?, self.expr(value)?, self.expr(hi)?];
        let (records, lo_v, hi_v) = emit_clamp(&mut self.graph, nodes, span)?;
        if lo_v >= hi_v {
            return Err(InterpError::new(
                span,
                format!(
                    "degenerate clamp band: lower bound {lo_v} is not below upper bound {hi_v}"
                ),
            ));
        }
        let text = crate::dsl::print_expr(value);
        let [g_lo, g_hi] = records;
        self.push_constraint(
            g_lo,
            "clamp",
            span,
            format!("`{text}` must be at least `{}`", crate::dsl::print_expr(lo)),
            ConstraintKind::UserClamp,
        );
        self.push_constraint(
            g_hi,
            "clamp",
            span,
            format!("`{text}` must be at most `{}`", crate::dsl::print_expr(hi)),
            ConstraintKind::UserClamp,
        );
        Ok(())
    }

    fn finish(self, program: &Program, params: &[f64]) -> Result<InterpResult, InterpError> {
        let mut vid_of_slot = vec![usize::MAX; self.slots.len()];
        let mut markers = Vec::new();
        for (slot, &alive) in self.alive.iter().enumerate() {
            if alive {
                vid_of_slot[slot] = markers.len();
                markers.push(VertexMarker {
                    vid: markers.len(),
                    nodes: self.slots[slot],
                });
            }
        }
        let faces: Vec<Vec<usize>> = self
            .solids
            .iter()
            .flat_map(|s| {
                s.faces
                    .iter()
                    .map(|f| f.iter().map(|&slot| vid_of_slot[slot]).collect())
            })
            .collect();
        let topology = MeshTopology::new(markers.len(), faces)
            .map_err(|e| InterpError::new(Span::default(), e.to_string()))?;
        let mut graph = self.graph;
        graph.set_vertex_outputs(markers.iter().map(|m| m.nodes).collect());
        graph.set_constraint_outputs(self.constraints.iter().map(|c| c.node).collect());
        let positions = markers
            .iter()
            .map(|m| m.nodes.map(|n| graph.value(n)))
            .collect();
        Ok(InterpResult {
            graph,
            markers,
            topology,
            constraints: self.constraints,
            positions,
            param_names: program.param_names(),
            initial_params: params.to_vec(),
            epsilon: self.epsilon,
        })
    }
}

/// Records the two constraints `value - lo >= 0` and `hi - value >= 0` for
/// already traced nodes `[lo, value, hi]`. Returns the constraint nodes and
/// the bound values at the tracing parameters.
pub fn emit_clamp(
    graph: &mut ComputationGraph,
    [lo, value, hi]: [NodeId; 3],
    span: Span,
) -> Result<([NodeId; 2], f64, f64), InterpError> {
    let g_lo = graph.sub(value, lo, span).map_err(numeric(span))?;
    let g_hi = graph.sub(hi, value, span).map_err(numeric(span))?;
    Ok(([g_lo, g_hi], graph.value(lo), graph.value(hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn run(src: &str) -> Result<InterpResult, InterpError> {
        interpret(&parse(src).unwrap())
    }

    #[test]
    fn box_corners_and_faces() {
        let r = run("solid b = box(2, 2, 2)").unwrap();
        assert_eq!(r.positions.len(), 8);
        for (k, p) in r.positions.iter().enumerate() {
            let expect = [k & 1, k & 2, k & 4].map(|b| if b != 0 { 1.0 } else { -1.0 });
            assert_eq!(*p, expect);
        }
        assert_eq!(r.topology.faces().len(), 6);
        assert!(r.topology.faces().iter().all(|f| f.len() == 4));
        assert!(r.constraints.is_empty());
    }

    #[test]
    fn box_faces_point_outward() {
        let r = run("solid b = box(2, 4, 6)").unwrap();
        for f in r.topology.faces() {
            let n = newell(&r.positions, f);
            let c = centroid(&r.positions, f);
            assert!(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] > 0.0);
        }
    }

    fn newell(pos: &[[f64; 3]], f: &[usize]) -> [f64; 3] {
        let mut n = [0.0; 3];
        for i in 0..f.len() {
            let (p, q) = (pos[f[i]], pos[f[(i + 1) % f.len()]]);
            n[0] += (p[1] - q[1]) * (p[2] + q[2]);
            n[1] += (p[2] - q[2]) * (p[0] + q[0]);
            n[2] += (p[0] - q[0]) * (p[1] + q[1]);
        }
        n
    }

    fn centroid(pos: &[[f64; 3]], f: &[usize]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for &i in f {
            for k in 0..3 {
                c[k] += pos[i][k] / f.len() as f64;
            }
        }
        c
    }

    #[test]
    fn cylinder_rings() {
        let r = run("solid c = cylinder(1, 1, 4)").unwrap();
        assert_eq!(r.positions.len(), 8);
        for k in 0..2 {
            for j in 0..4 {
                let t = 2.0 * PI * j as f64 / 4.0;
                let p = r.positions[k * 4 + j];
                assert!((p[0] - t.cos()).abs() < 1e-15 && (p[1] - t.sin()).abs() < 1e-15);
                assert_eq!(p[2], if k == 0 { -0.5 } else { 0.5 });
            }
        }
        assert_eq!(r.topology.faces().len(), 6);
        for f in r.topology.faces() {
            let n = newell(&r.positions, f);
            let c = centroid(&r.positions, f);
            assert!(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] > 0.0);
        }
    }

    #[test]
    fn extrude_adds_ring_and_constraint() {
        let r = run("param len = 0.5\nsolid b = box(1, 1, 1)\nextrude(b, 3, len)").unwrap();
        assert_eq!(r.positions.len(), 12);
        assert_eq!(r.constraints.len(), 1);
        let g = r.graph.value(r.constraints[0].node);
        assert!((g - (0.5 - DEFAULT_EPSILON)).abs() < 1e-15);
        // Face 3 is +y; the new ring sits at y = 0.5 + 0.5.
        for p in &r.positions[8..] {
            assert!((p[1] - 1.0).abs() < 1e-15);
        }
        assert_eq!(r.topology.faces().len(), 10);
    }

    #[test]
    fn chamfer_replaces_corner() {
        let r = run("param r = 0.25\nsolid p = rect(2, 1)\nchamfer(p, 2, r)").unwrap();
        assert_eq!(r.positions.len(), 5);
        assert_eq!(r.constraints.len(), 3);
        let vals: Vec<f64> = r
            .constraints
            .iter()
            .map(|c| r.graph.value(c.node))
            .collect();
        assert!((vals[0] - (1.0 - 0.25)).abs() < 1e-15);
        assert!((vals[1] - (2.0 - 0.25)).abs() < 1e-15);
        assert!((vals[2] - (0.25 - DEFAULT_EPSILON)).abs() < 1e-15);
        // Corner (1, 0.5) becomes (1, 0.25) and (0.75, 0.5). Global vertex ids
        // follow creation order, so the new pair comes last.
        assert_eq!(r.positions[2], [-1.0, 0.5, 0.0]);
        assert_eq!(r.positions[3], [1.0, 0.25, 0.0]);
        assert_eq!(r.positions[4], [0.75, 0.5, 0.0]);
        assert_eq!(r.topology.faces()[0], vec![0, 1, 3, 4, 2]);
        assert!(r.markers.iter().all(|m| m.vid < 5));
    }

    #[test]
    fn chamfer_needs_profile() {
        let e = run("solid b = box(1, 1, 1)\nchamfer(b, 0, 0.1)").unwrap_err();
        assert!(e.message.contains("planar profile"));
    }

    #[test]
    fn clamp_records() {
        let r = run("param w = 4\nparam h = 2\nclamp(0.5, w / h, 4.0)").unwrap();
        let vals: Vec<f64> = r
            .constraints
            .iter()
            .map(|c| r.graph.value(c.node))
            .collect();
        assert_eq!(vals, vec![1.5, 2.0]);
        assert!(r
            .constraints
            .iter()
            .all(|c| c.kind == ConstraintKind::UserClamp));
        let r = run("param p = 0\nclamp(0, p, 1)").unwrap();
        assert_eq!(r.graph.value(r.constraints[0].node), 0.0);
        let e = run("param p = 0\nclamp(1, p, 0)").unwrap_err();
        assert!(e.message.contains("degenerate"));
    }

    #[test]
    fn transforms() {
        let r = run("solid b = box(2, 2, 2)\nrotate(b[1], z, 1.5707963267948966)\nscale(b[0], 2)\ntranslate(b[7, 7], 1, 0, 0)").unwrap();
        let p = r.positions[1];
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        assert_eq!(r.positions[0], [-2.0, -2.0, -2.0]);
        assert_eq!(r.positions[7], [2.0, 1.0, 1.0]);
    }

    #[test]
    fn index_errors() {
        let e = run("solid b = box(1, 1, 1)\ntranslate(b[8], 1, 0, 0)").unwrap_err();
        assert!(e.message.contains("out of range"));
        assert_eq!(e.span.line, 2);
        let e = run("solid b = box(1, 1, 1)\nextrude(b, 6, 1)").unwrap_err();
        assert!(e.message.contains("out of range"));
        let e = run("translate(q, 1, 0, 0)").unwrap_err();
        assert!(e.message.contains("undefined solid"));
    }

    #[test]
    fn loops_replicate() {
        let r = run("for i in 0..3 {\n solid c = box(1, 1, 1)\n translate(c, 2 * i, 0, 0)\n}\nlet x = c[1].x").unwrap();
        assert_eq!(r.positions.len(), 24);
        assert_eq!(r.positions[17][0], 4.5);
    }

    #[test]
    fn pragma_sets_epsilon() {
        let r = run("pragma epsilon = 0.01\nsolid b = box(1, 1, 1)\nextrude(b, 5, 1)").unwrap();
        assert_eq!(r.epsilon, 0.01);
        assert!((r.graph.value(r.constraints[0].node) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn negative_base_integer_pow() {
        let r = run("param a = -2\nsolid b = box(pow(a, 2), 1, 1)").unwrap();
        assert_eq!(r.positions[1][0], 2.0);
    }
}
