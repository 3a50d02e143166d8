mod common;

use common::*;
use egsat_core::interp::DEFAULT_FUEL;
use egsat_core::pipeline::{compare_runs, FunctionResult, TraceCheck};
use egsat_core::{optimize_program, ExtractionMethod, IRProgram, PipelineConfig};

fn optimize(name: &str, method: ExtractionMethod) -> (IRProgram, IRProgram, Vec<FunctionResult>) {
    let p = program(name);
    let cfg = PipelineConfig {
        extraction: method,
        ilp_budget: None,
        costs: costs(name),
        ..Default::default()
    };
    let (q, results) = optimize_program(&p, universe(), &rules(name), &cfg).unwrap();
    (p, q, results)
}

fn body(q: &IRProgram, func: &str) -> String {
    q.functions[func].to_string()
}

fn calls(q: &IRProgram, func: &str, callee: &str) -> usize {
    body(q, func).matches(&format!("call {callee}(")).count()
}

#[test]
fn every_example_is_sound_on_its_inputs() {
    let u = universe();
    for &(name, func) in EXAMPLES {
        let relaxed = rules(name).rules.iter().any(|r| r.relaxed);
        for method in [ExtractionMethod::Ilp, ExtractionMethod::Greedy] {
            let (p, q, _) = optimize(name, method);
            for args in inputs(name) {
                let out = compare_runs(&p, &q, func, &args, &u, relaxed, DEFAULT_FUEL);
                assert!(
                    out.passed(),
                    "{name} ({method}) on {args:?}: {out:?}\n{}",
                    body(&q, func)
                );
                if !relaxed {
                    assert_eq!(out.trace, TraceCheck::Identical, "{name} on {args:?}");
                }
            }
        }
    }
}

#[test]
fn pow_shape_and_identity() {
    let (_, q, r) = optimize("pow", ExtractionMethod::Ilp);
    assert_eq!(r[0].stats.e_classes, 11);
    assert_eq!(q.functions["pow"].blocks.len(), 4);
    assert_eq!(calls(&q, "pow", "println"), 1);
    let text = body(&q, "pow");
    let loop_body = &text[text.find("bb2:").unwrap()..text.find("bb3:").unwrap()];
    assert!(loop_body.contains("call println("), "{text}");
}

#[test]
fn shift_simplifies_to_argument() {
    let (_, q, _) = optimize("shift", ExtractionMethod::Ilp);
    assert_eq!(body(&q, "f"), "fn f(%0: Int64) {\nbb0:\n  ret %0\n}\n");
}

#[test]
fn eigen_is_computed_once_and_reused() {
    let (_, q, ilp) = optimize("eigen", ExtractionMethod::Ilp);
    assert_eq!(calls(&q, "spectrum", "eigen"), 1);
    assert_eq!(calls(&q, "spectrum", "tr"), 0);
    assert_eq!(calls(&q, "spectrum", "det"), 0);
    let (_, g, greedy) = optimize("eigen", ExtractionMethod::Greedy);
    assert!(
        ilp[0].stats.objective < greedy[0].stats.objective,
        "{:?} vs {:?}",
        ilp[0].stats,
        greedy[0].stats
    );
    assert_eq!(calls(&g, "spectrum", "tr"), 1);
}

#[test]
fn transform_returns_its_argument() {
    let (_, q, _) = optimize("transform2d", ExtractionMethod::Ilp);
    assert_eq!(
        body(&q, "transform"),
        "fn transform(%0: Vec2D, %1: Float64) {\nbb0:\n  ret %0\n}\n"
    );
}

#[test]
fn broadcast_fuses_to_one_materialize() {
    let (p, q, _) = optimize("broadcast", ExtractionMethod::Ilp);
    assert_eq!(calls(&p, "fused", "materialize"), 2);
    assert_eq!(calls(&q, "fused", "materialize"), 1);
}

#[test]
fn eigen_optimum_matches_exhaustive_search() {
    use egsat_core::extraction::Instance;
    use egsat_core::pipeline::saturate_function;
    let p = program("eigen");
    let (c, _) = saturate_function(
        &p.functions["spectrum"],
        universe(),
        &rules("eigen"),
        &Default::default(),
    )
    .unwrap();
    let inst = Instance::new(&c.egraph, &c.skeleton, &c.dom, &costs("eigen"));
    assert!(inst.problem.nodes.len() <= 30);
    let (_, _, ilp) = optimize("eigen", ExtractionMethod::Ilp);
    assert_eq!(
        common::extraction::brute_force(&inst.problem),
        Some(ilp[0].stats.objective)
    );
}
