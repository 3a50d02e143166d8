//! An equality-saturation optimizer for a small typed SSA IR.
//!
//! The pipeline converts each function into an e-graph plus a CFG skeleton
//! (the control flow and effectful calls that must survive), saturates the
//! e-graph with user rules, extracts a program with an ILP that accounts for
//! values reused from dominating statements, and elaborates the result back
//! into SSA form.

pub mod census;
pub mod conversion;
pub mod egraph;
pub mod elaboration;
pub mod extraction;
pub mod ilp;
pub mod interp;
pub mod ir;
pub mod literal;
pub mod pipeline;
pub mod rules;
pub mod saturation;
pub mod types;

pub use conversion::{ir_to_egraph, CfgSkeleton, Converted, SkeletonKind, SkeletonStmt};
pub use egraph::{EClassId, EGraph, ENode, Head, Pattern};
pub use extraction::{CostModel, ExtractionMethod, ExtractionSolution};
pub use interp::{EffectTrace, Value};
pub use ir::{Block, FunctionIR, IRProgram, Statement, Terminator, ValueId};
pub use literal::Literal;
pub use pipeline::{optimize_function, optimize_program, FunctionStats, PipelineConfig};
pub use rules::{Rule, RuleSet};
pub use saturation::{saturate, SaturationLimits, SaturationReport, StopReason};
pub use types::{TypeInfo, TypeUniverse};
