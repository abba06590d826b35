use crate::dsl::Span;
use crate::error::{NumericError, NumericSite};

use super::ops::{BinaryOp, UnaryOp};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Const(f64),
    Param(usize),
    Unary(UnaryOp, NodeId),
    Binary(BinaryOp, NodeId, NodeId),
}

impl Node {
    pub fn inputs(&self) -> impl Iterator<Item = NodeId> {
        let (a, b) = match *self {
            Node::Const(_) | Node::Param(_) => (None, None),
            Node::Unary(_, a) => (Some(a), None),
            Node::Binary(_, a, b) => (Some(a), Some(b)),
        };
        a.into_iter().chain(b)
    }
}

/// Arena of traced operations. Every node's value at the tracing parameters
/// is computed as it is pushed, so the interpreter can read geometry while
/// it records.
#[derive(Debug, Clone, Default)]
pub struct ComputationGraph {
    nodes: Vec<Node>,
    values: Vec<f64>,
    spans: Vec<Span>,
    num_params: usize,
    vertex_outputs: Vec<[NodeId; 3]>,
    constraint_outputs: Vec<NodeId>,
}

impl ComputationGraph {
    /// Creates a graph whose first `params.len()` nodes are the parameters.
    pub fn new(params: &[f64]) -> Self {
        let mut g = Self {
            num_params: params.len(),
            ..Self::default()
        };
        for (i, &p) in params.iter().enumerate() {
            g.nodes.push(Node::Param(i));
            g.values.push(p);
            g.spans.push(Span::default());
        }
        g
    }

    /// Builds a graph from raw parts. The value cache is zeroed until
    /// [`update`](Self::update) is called.
    pub fn from_parts(
        num_params: usize,
        nodes: Vec<Node>,
        spans: Vec<Span>,
        vertex_outputs: Vec<[NodeId; 3]>,
        constraint_outputs: Vec<NodeId>,
    ) -> Self {
        assert_eq!(nodes.len(), spans.len());
        let values = vec![0.0; nodes.len()];
        Self {
            nodes,
            values,
            spans,
            num_params,
            vertex_outputs,
            constraint_outputs,
        }
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Node {
        self.nodes[id]
    }

    pub fn span(&self, id: NodeId) -> Span {
        self.spans[id]
    }

    /// Cached value of a node at the last evaluated parameters.
    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn param(&self, slot: usize) -> NodeId {
        assert!(slot < self.num_params);
        slot
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.nodes.push(Node::Const(v));
        self.values.push(v);
        self.spans.push(Span::default());
        self.nodes.len() - 1
    }

    pub fn unary(&mut self, op: UnaryOp, a: NodeId, span: Span) -> Result<NodeId, NumericError> {
        let v = op.apply(self.values[a]);
        self.push(Node::Unary(op, a), v, span)
    }

    pub fn binary(
        &mut self,
        op: BinaryOp,
        a: NodeId,
        b: NodeId,
        span: Span,
    ) -> Result<NodeId, NumericError> {
        let v = op.apply(self.values[a], self.values[b]);
        self.push(Node::Binary(op, a, b), v, span)
    }

    fn push(&mut self, node: Node, value: f64, span: Span) -> Result<NodeId, NumericError> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(NumericError {
                site: NumericSite::Node(id),
                span,
                detail: format!("{node:?} evaluated to {value}"),
            });
        }
        self.nodes.push(node);
        self.values.push(value);
        self.spans.push(span);
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId, span: Span) -> Result<NodeId, NumericError> {
        self.binary(BinaryOp::Add, a, b, span)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId, span: Span) -> Result<NodeId, NumericError> {
        self.binary(BinaryOp::Sub, a, b, span)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId, span: Span) -> Result<NodeId, NumericError> {
        self.binary(BinaryOp::Mul, a, b, span)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId, span: Span) -> Result<NodeId, NumericError> {
        self.binary(BinaryOp::Div, a, b, span)
    }

    pub fn set_vertex_outputs(&mut self, outputs: Vec<[NodeId; 3]>) {
        self.vertex_outputs = outputs;
    }

    pub fn set_constraint_outputs(&mut self, outputs: Vec<NodeId>) {
        self.constraint_outputs = outputs;
    }

    pub fn vertex_outputs(&self) -> &[[NodeId; 3]] {
        &self.vertex_outputs
    }

    pub fn constraint_outputs(&self) -> &[NodeId] {
        &self.constraint_outputs
    }

    /// Recomputes every node in creation order without touching the cache.
    pub fn eval(&self, params: &[f64]) -> Result<Vec<f64>, NumericError> {
        assert_eq!(params.len(), self.num_params, "parameter count mismatch");
        let mut vals = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let v = match *node {
                Node::Const(c) => c,
                Node::Param(s) => params[s],
                Node::Unary(op, a) => op.apply(vals[a]),
                Node::Binary(op, a, b) => op.apply(vals[a], vals[b]),
            };
            if !v.is_finite() {
                return Err(NumericError {
                    site: NumericSite::Node(id),
                    span: self.spans[id],
                    detail: format!("{node:?} evaluated to {v}"),
                });
            }
            vals.push(v);
        }
        Ok(vals)
    }

    /// Evaluates at `params` and stores the result in the value cache.
    pub fn update(&mut self, params: &[f64]) -> Result<(), NumericError> {
        self.values = self.eval(params)?;
        Ok(())
    }

    /// Vertex positions (flattened xyz) and constraint values from a node
    /// value vector produced by [`eval`](Self::eval).
    pub fn extract_outputs(&self, vals: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let v = self
            .vertex_outputs
            .iter()
            .flat_map(|ids| ids.map(|i| vals[i]))
            .collect();
        let g = self.constraint_outputs.iter().map(|&i| vals[i]).collect();
        (v, g)
    }

    /// For each node, whether parameter `slot` is among its ancestors,
    /// returned as one bit-set row per parameter over the vertex outputs:
    /// `result[p][v]` is true when any coordinate of vertex `v` depends on `p`.
    pub fn param_vertex_dependence(&self) -> Vec<Vec<bool>> {
        let words = self.num_params.div_ceil(64).max(1);
        let mut deps = vec![0u64; self.nodes.len() * words];
        for (id, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Const(_) => {}
                Node::Param(s) => deps[id * words + s / 64] |= 1 << (s % 64),
                _ => {
                    for inp in node.inputs() {
                        for w in 0..words {
                            deps[id * words + w] |= deps[inp * words + w];
                        }
                    }
                }
            }
        }
        let mut out = vec![vec![false; self.vertex_outputs.len()]; self.num_params];
        for (v, ids) in self.vertex_outputs.iter().enumerate() {
            for &node in ids {
                for (p, row) in out.iter_mut().enumerate() {
                    if deps[node * words + p / 64] >> (p % 64) & 1 == 1 {
                        row[v] = true;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let mut g = ComputationGraph::new(&[3.0]);
        let p = g.param(0);
        let sq = g.mul(p, p, Span::default()).unwrap();
        assert_eq!(g.eval(&[3.0]).unwrap()[sq], 9.0);
    }

    #[test]
    fn sin_at_zero() {
        let mut g = ComputationGraph::new(&[0.0]);
        let s = g.unary(UnaryOp::Sin, 0, Span::default()).unwrap();
        assert_eq!(g.eval(&[0.0]).unwrap()[s], 0.0);
    }

    #[test]
    fn non_finite_reports_node() {
        let mut g = ComputationGraph::new(&[1.0]);
        let l = g.unary(UnaryOp::Log, 0, Span::new(4, 2)).unwrap();
        let err = g.eval(&[-1.0]).unwrap_err();
        assert_eq!(err.site, NumericSite::Node(l));
        assert_eq!(err.span.line, 4);
        let neg = g.constant(-1.0);
        assert!(g.unary(UnaryOp::Sqrt, neg, Span::default()).is_err());
    }

    #[test]
    fn dependence_tracks_ancestors() {
        let mut g = ComputationGraph::new(&[1.0, 2.0]);
        let c = g.constant(0.0);
        let x = g.mul(0, c, Span::default()).unwrap();
        g.set_vertex_outputs(vec![[x, c, c], [1, 1, c]]);
        let d = g.param_vertex_dependence();
        assert_eq!(d, vec![vec![true, false], vec![false, true]]);
    }
}
