use std::fmt::Write as _;
use std::hint::black_box;
use std::path::PathBuf;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use egsat_core::extraction::{extract, CostModel};
use egsat_core::ir::parse_ir;
use egsat_core::pipeline::saturate_function;
use egsat_core::rules::parse_rules;
use egsat_core::{
    ir_to_egraph, optimize_function, ExtractionMethod, IRProgram, PipelineConfig, RuleSet,
    TypeUniverse,
};

fn testdata(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/testdata")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn universe() -> Arc<TypeUniverse> {
    Arc::new(TypeUniverse::from_json(&testdata("universe.json")).unwrap())
}

fn example(name: &str) -> (IRProgram, RuleSet, CostModel) {
    let costs = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join(format!("../core/testdata/{name}.costs.json")),
    )
    .map(|t| CostModel::from_json(&t).unwrap())
    .unwrap_or_default();
    (
        parse_ir(&testdata(&format!("{name}.ir"))).unwrap(),
        parse_rules(&testdata(&format!("{name}.rules"))).unwrap(),
        costs,
    )
}

/// Straight-line code with `n` multiply/divide pairs feeding a running sum.
fn chain(n: usize) -> IRProgram {
    let mut s = String::from("fn chain(%a: Int64) {\nbb0:\n  %two = const 2 : Int64\n  %acc0 = call add(%a, %a) : Int64\n");
    for k in 0..n {
        let _ = writeln!(s, "  %m{k} = call mul(%acc{k}, %two) : Int64");
        let _ = writeln!(s, "  %d{k} = call div(%m{k}, %two) : Int64");
        let _ = writeln!(s, "  %acc{} = call add(%d{k}, %a) : Int64", k + 1);
    }
    let _ = writeln!(s, "  ret %acc{n}\n}}");
    parse_ir(&s).unwrap()
}

fn examples(c: &mut Criterion) {
    let u = universe();
    let mut group = c.benchmark_group("examples");
    for name in ["pow", "shift", "eigen", "transform2d", "broadcast"] {
        let (p, rules, costs) = example(name);
        let f = p.functions.values().next().unwrap().clone();
        let cfg = PipelineConfig {
            costs,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::new("convert", name), &f, |b, f| {
            b.iter(|| ir_to_egraph(black_box(f), u.clone()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("optimize", name), &f, |b, f| {
            b.iter(|| optimize_function(black_box(f), u.clone(), &rules, &cfg).unwrap())
        });
    }
    group.finish();
}

fn extraction(c: &mut Criterion) {
    let u = universe();
    let rules = parse_rules(&testdata("shift.rules")).unwrap();
    let mut group = c.benchmark_group("extraction");
    for n in [4, 16, 64] {
        let p = chain(n);
        let (conv, _) = saturate_function(
            &p.functions["chain"],
            u.clone(),
            &rules,
            &Default::default(),
        )
        .unwrap();
        for method in [ExtractionMethod::Ilp, ExtractionMethod::Greedy] {
            group.bench_with_input(BenchmarkId::new(method.to_string(), n), &conv, |b, conv| {
                b.iter(|| {
                    extract(
                        &conv.egraph,
                        &conv.skeleton,
                        &conv.dom,
                        &CostModel::default(),
                        method,
                        None,
                    )
                    .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn saturation(c: &mut Criterion) {
    let u = universe();
    let rules = parse_rules(&testdata("shift.rules")).unwrap();
    let mut group = c.benchmark_group("saturation");
    for n in [4, 16, 64] {
        let p = chain(n);
        group.bench_with_input(
            BenchmarkId::from_parameter(n),
            &p.functions["chain"],
            |b, f| {
                b.iter(|| {
                    saturate_function(black_box(f), u.clone(), &rules, &Default::default()).unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, examples, extraction, saturation);
criterion_main!(benches);
