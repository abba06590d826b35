//! Computation graph, lowering to a flat register tape, and forward/reverse
//! mode differentiation over the tape.

mod graph;
mod ops;
mod tape;

pub use graph::{ComputationGraph, Node, NodeId};
pub use ops::{BinaryOp, UnaryOp};
pub use tape::{lower, Instr, Reg, Tape, TapeScratch};
