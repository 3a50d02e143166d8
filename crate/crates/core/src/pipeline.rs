//! Convert, saturate, extract and elaborate, plus the differential check
//! of an optimized program against its original.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::conversion::{ir_to_egraph, ConversionError, Converted};
use crate::elaboration::{elaborate, ElaborationError};
use crate::extraction::{
    build_ilp, extract, CostModel, ExtractionError, ExtractionMethod, Instance,
};
use crate::interp::{run, EffectTrace, InterpError, Value};
use crate::ir::{FunctionIR, IRProgram};
use crate::rules::{inject_argument_constant, RuleError, RuleSet};
use crate::saturation::{
    saturate, SaturationError, SaturationLimits, SaturationReport, StopReason,
};
use crate::types::TypeUniverse;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub limits: SaturationLimits,
    pub extraction: ExtractionMethod,
    /// `None` lets the ILP run to optimality.
    pub ilp_budget: Option<Duration>,
    pub costs: CostModel,
    /// Keep the CPLEX-LP text of each function's model.
    pub dump_lp: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            limits: SaturationLimits::default(),
            extraction: ExtractionMethod::Ilp,
            ilp_budget: Some(Duration::from_secs(10)),
            costs: CostModel::default(),
            dump_lp: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FunctionStats {
    pub function: String,
    pub variables: usize,
    pub constraints: usize,
    pub e_classes: usize,
    pub e_nodes: usize,
    pub construction_ms: f64,
    pub solve_ms: f64,
    pub cycles: usize,
    pub method: ExtractionMethod,
    pub objective: i64,
    pub fallback: Option<String>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub detached: usize,
    pub conversion_ms: f64,
    pub saturation_ms: f64,
    pub elaboration_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FunctionResult {
    pub ir: FunctionIR,
    pub stats: FunctionStats,
    pub saturation: SaturationReport,
    pub lp: Option<String>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("{function}: {source}")]
    Conversion {
        function: String,
        #[source]
        source: ConversionError,
    },
    #[error("{function}: {source}")]
    Injection {
        function: String,
        #[source]
        source: RuleError,
    },
    #[error("{function}: saturation: {source}")]
    Saturation {
        function: String,
        #[source]
        source: SaturationError,
    },
    #[error("{function}: {source}")]
    Extraction {
        function: String,
        #[source]
        source: ExtractionError,
    },
    #[error("{function}: {source}")]
    Elaboration {
        function: String,
        #[source]
        source: ElaborationError,
    },
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Converts `f` and applies the argument injections aimed at it.
pub fn convert_function(
    f: &FunctionIR,
    universe: Arc<TypeUniverse>,
    rules: &RuleSet,
) -> Result<Converted, PipelineError> {
    let function = f.name.clone();
    let mut c = ir_to_egraph(f, universe).map_err(|source| PipelineError::Conversion {
        function: function.clone(),
        source,
    })?;
    let mut injected = false;
    for inj in rules.injections.iter().filter(|i| i.func == f.name) {
        inject_argument_constant(&mut c.egraph, &c.skeleton, inj).map_err(|source| {
            PipelineError::Injection {
                function: function.clone(),
                source,
            }
        })?;
        injected = true;
    }
    if injected {
        c.egraph
            .rebuild()
            .map_err(|source| PipelineError::Conversion {
                function,
                source: ConversionError::Analysis(source),
            })?;
        c.skeleton.canonicalize(&c.egraph);
    }
    Ok(c)
}

/// Converts and saturates `f`.
pub fn saturate_function(
    f: &FunctionIR,
    universe: Arc<TypeUniverse>,
    rules: &RuleSet,
    limits: &SaturationLimits,
) -> Result<(Converted, SaturationReport), PipelineError> {
    let mut c = convert_function(f, universe, rules)?;
    let report = saturate(&mut c.egraph, &mut c.skeleton, rules, limits).map_err(|source| {
        PipelineError::Saturation {
            function: f.name.clone(),
            source,
        }
    })?;
    Ok((c, report))
}

pub fn optimize_function(
    f: &FunctionIR,
    universe: Arc<TypeUniverse>,
    rules: &RuleSet,
    cfg: &PipelineConfig,
) -> Result<FunctionResult, PipelineError> {
    rules.check(&universe)?;
    let function = f.name.clone();
    let t = Instant::now();
    let mut c = convert_function(f, universe, rules)?;
    let conversion_ms = ms(t.elapsed());

    let t = Instant::now();
    let saturation =
        saturate(&mut c.egraph, &mut c.skeleton, rules, &cfg.limits).map_err(|source| {
            PipelineError::Saturation {
                function: function.clone(),
                source,
            }
        })?;
    let saturation_ms = ms(t.elapsed());

    let lp = cfg.dump_lp.then(|| {
        let inst = Instance::new(&c.egraph, &c.skeleton, &c.dom, &cfg.costs);
        match build_ilp(&inst) {
            Some((m, _)) => m.to_lp(),
            None => "\\ too many class cycles; no model built\n".to_string(),
        }
    });
    let sol = extract(
        &c.egraph,
        &c.skeleton,
        &c.dom,
        &cfg.costs,
        cfg.extraction,
        cfg.ilp_budget,
    )
    .map_err(|source| PipelineError::Extraction {
        function: function.clone(),
        source,
    })?;

    let t = Instant::now();
    let ir = elaborate(&c.egraph, &c.skeleton, &c.dom, &sol, f, &c.declared_types()).map_err(
        |source| PipelineError::Elaboration {
            function: function.clone(),
            source,
        },
    )?;
    let elaboration_ms = ms(t.elapsed());

    let stats = FunctionStats {
        function,
        variables: sol.stats.variables,
        constraints: sol.stats.constraints,
        e_classes: c.egraph.num_classes(),
        e_nodes: c.egraph.num_nodes(),
        construction_ms: sol.stats.construction_ms,
        solve_ms: sol.stats.solve_ms,
        cycles: sol.stats.cycles,
        method: sol.method,
        objective: sol.objective,
        fallback: sol.stats.fallback.clone(),
        iterations: saturation.iterations,
        stop_reason: saturation.stop_reason,
        detached: c.skeleton.stmts.iter().filter(|s| s.detached).count(),
        conversion_ms,
        saturation_ms,
        elaboration_ms,
    };
    Ok(FunctionResult {
        ir,
        stats,
        saturation,
        lp,
    })
}

/// Optimizes every function of `p`, in order.
pub fn optimize_program(
    p: &IRProgram,
    universe: Arc<TypeUniverse>,
    rules: &RuleSet,
    cfg: &PipelineConfig,
) -> Result<(IRProgram, Vec<FunctionResult>), PipelineError> {
    let mut out = IRProgram::default();
    let mut results = Vec::new();
    for (name, f) in &p.functions {
        let r = optimize_function(f, universe.clone(), rules, cfg)?;
        out.functions.insert(name.clone(), r.ir.clone());
        results.push(r);
    }
    Ok((out, results))
}

/// Tolerance for comparing floats produced by rewritten arithmetic.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceCheck {
    Identical,
    /// Relaxed runs only: the optimized trace dropped `dropped` entries.
    Reduced {
        dropped: usize,
    },
    /// First index at which the traces differ.
    Diverged {
        at: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub inputs: Vec<Value>,
    pub original: Result<(Value, EffectTrace), InterpError>,
    pub optimized: Result<(Value, EffectTrace), InterpError>,
    pub values_match: bool,
    pub trace: TraceCheck,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.values_match && !matches!(self.trace, TraceCheck::Diverged { .. })
    }
}

fn first_divergence(a: &EffectTrace, b: &EffectTrace) -> usize {
    let same = |x: &(String, Vec<Value>), y: &(String, Vec<Value>)| {
        x.0 == y.0
            && x.1.len() == y.1.len()
            && x.1
                .iter()
                .zip(&y.1)
                .all(|(p, q)| p.approx_eq(q, FLOAT_TOLERANCE))
    };
    a.0.iter()
        .zip(&b.0)
        .position(|(x, y)| !same(x, y))
        .unwrap_or(a.0.len().min(b.0.len()))
}

/// True when the function names of `b` occur in order within those of `a`.
fn names_subsequence(b: &EffectTrace, a: &EffectTrace) -> bool {
    let mut it = a.0.iter();
    b.0.iter().all(|(f, _)| it.by_ref().any(|(g, _)| f == g))
}

/// Runs `func` in both programs on one input vector. With `relaxed`, the
/// optimized trace only has to be an order-preserving subsequence of the
/// original by function name, since fusing calls changes their arguments.
pub fn compare_runs(
    original: &IRProgram,
    optimized: &IRProgram,
    func: &str,
    inputs: &[Value],
    universe: &TypeUniverse,
    relaxed: bool,
    fuel: u64,
) -> CaseOutcome {
    let a = run(original, func, inputs.to_vec(), universe, fuel);
    let b = run(optimized, func, inputs.to_vec(), universe, fuel);
    let (values_match, trace) = match (&a, &b) {
        (Ok((va, ta)), Ok((vb, tb))) => {
            let trace = if tb.approx_eq(ta, FLOAT_TOLERANCE) {
                TraceCheck::Identical
            } else if relaxed && names_subsequence(tb, ta) {
                TraceCheck::Reduced {
                    dropped: ta.0.len() - tb.0.len(),
                }
            } else {
                TraceCheck::Diverged {
                    at: first_divergence(ta, tb),
                }
            };
            (va.approx_eq(vb, FLOAT_TOLERANCE), trace)
        }
        // both failing the same way counts as agreement
        (Err(ea), Err(eb)) => (ea == eb, TraceCheck::Identical),
        _ => (false, TraceCheck::Diverged { at: 0 }),
    };
    CaseOutcome {
        inputs: inputs.to_vec(),
        original: a,
        optimized: b,
        values_match,
        trace,
    }
}
