use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use egsat_core::census::census_dir;
use egsat_core::extraction::{build_ilp, Instance};
use egsat_core::interp::{Value, DEFAULT_FUEL};
use egsat_core::ir::{parse_ir, print_ir};
use egsat_core::pipeline::{compare_runs, saturate_function, FunctionResult, TraceCheck};
use egsat_core::rules::parse_rules;
use egsat_core::{
    optimize_program, CostModel, ExtractionMethod, FunctionIR, IRProgram, PipelineConfig, RuleSet,
    SaturationLimits, TypeUniverse,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "egsat",
    version,
    about = "Equality-saturation optimizer for a typed SSA IR"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize every function of an IR file
    Optimize(OptimizeArgs),
    /// Optimize, then run original and optimized programs on a list of inputs
    Verify(VerifyArgs),
    /// Count rule left-hand-side matches over a directory of IR files
    Census(CensusArgs),
    /// Write the e-graph and skeleton as DOT at a pipeline stage
    Dump(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input IR file
    #[arg(long)]
    ir: PathBuf,
    /// Rewrite rule file
    #[arg(long)]
    rules: PathBuf,
    /// Type universe JSON
    #[arg(long)]
    universe: PathBuf,
    /// JSON object of per-function node costs
    #[arg(long)]
    cost_file: Option<PathBuf>,
    /// Extraction method: ilp or greedy
    #[arg(long, default_value = "ilp")]
    extraction: ExtractionMethod,
    /// ILP time budget in milliseconds; 0 removes the limit
    #[arg(long, default_value_t = 10_000)]
    ilp_budget_ms: u64,
    /// Saturation iteration limit
    #[arg(long)]
    max_iters: Option<usize>,
    /// Saturation e-node limit
    #[arg(long)]
    max_enodes: Option<usize>,
    /// Saturation time limit in milliseconds
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the optimized IR here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print statistics as JSON on stdout
    #[arg(long)]
    json: bool,
    /// Write each function's ILP model as <dir>/<function>.lp
    #[arg(long, value_name = "DIR")]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// JSON array of argument vectors
    #[arg(long)]
    inputs: PathBuf,
    /// Function to call; defaults to the only function of the file
    #[arg(long)]
    func: Option<String>,
    /// Compare against this optimized IR file instead of optimizing
    #[arg(long)]
    optimized: Option<PathBuf>,
    /// Interpreter step budget per run
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
}

#[derive(Args)]
struct CensusArgs {
    /// Directory of .ir files
    dir: PathBuf,
    /// Rule file whose left-hand sides are counted
    #[arg(long)]
    rules: PathBuf,
    /// Print the report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Converted,
    Saturated,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Pipeline stage to render
    #[arg(long, value_enum)]
    stage: Stage,
    /// Function to render; defaults to all
    #[arg(long)]
    func: Option<String>,
    /// Write the DOT text here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write each function's ILP model as <dir>/<function>.lp
    #[arg(long, value_name = "DIR")]
    dump_lp: Option<PathBuf>,
}

/// Parsed inputs shared by every pipeline command.
struct Loaded {
    program: IRProgram,
    rules: RuleSet,
    universe: Arc<TypeUniverse>,
    config: PipelineConfig,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

impl RunArgs {
    fn load(&self) -> Result<Loaded> {
        let program =
            parse_ir(&read(&self.ir)?).with_context(|| format!("in {}", self.ir.display()))?;
        let rules = parse_rules(&read(&self.rules)?)
            .with_context(|| format!("in {}", self.rules.display()))?;
        let universe = TypeUniverse::from_json(&read(&self.universe)?)
            .with_context(|| format!("in {}", self.universe.display()))?;
        let costs = match &self.cost_file {
            Some(p) => {
                CostModel::from_json(&read(p)?).with_context(|| format!("in {}", p.display()))?
            }
            None => CostModel::default(),
        };
        let mut limits = SaturationLimits::default();
        if let Some(n) = self.max_iters {
            limits.max_iters = n;
        }
        if let Some(n) = self.max_enodes {
            limits.max_enodes = n;
        }
        if let Some(ms) = self.timeout_ms {
            limits.timeout = Duration::from_millis(ms);
        }
        let config = PipelineConfig {
            limits,
            extraction: self.extraction,
            ilp_budget: (self.ilp_budget_ms > 0).then(|| Duration::from_millis(self.ilp_budget_ms)),
            costs,
            dump_lp: false,
        };
        Ok(Loaded {
            program,
            rules,
            universe: Arc::new(universe),
            config,
        })
    }
}

fn stats_table(results: &[FunctionResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>9} {:>7} {:>9} {:>11} {:>6} {:>7} {:>9} {:>5} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "function",
        "e-classes",
        "e-nodes",
        "variables",
        "constraints",
        "cycles",
        "method",
        "objective",
        "iters",
        "convert-ms",
        "saturate-ms",
        "build-ms",
        "solve-ms",
        "elab-ms"
    );
    for r in results {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>7} {:>9} {:>11} {:>6} {:>7} {:>9} {:>5} {:>10.3} {:>10.3} {:>9.3} {:>9.3} {:>9.3}",
            s.function,
            s.e_classes,
            s.e_nodes,
            s.variables,
            s.constraints,
            s.cycles,
            s.method,
            s.objective,
            s.iterations,
            s.conversion_ms,
            s.saturation_ms,
            s.construction_ms,
            s.solve_ms,
            s.elaboration_ms
        );
        if let Some(why) = &s.fallback {
            let _ = writeln!(out, "  note: {}: {why}", s.function);
        }
        let _ = writeln!(
            out,
            "  saturation: {} after {} iterations",
            s.stop_reason, s.iterations
        );
    }
    out
}

fn write_lps(dir: &Path, results: &[FunctionResult]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for r in results {
        if let Some(lp) = &r.lp {
            write(&dir.join(format!("{}.lp", r.stats.function)), lp)?;
        }
    }
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<ExitCode> {
    let mut l = a.run.load()?;
    l.config.dump_lp = a.dump_lp.is_some();
    let (out, results) = optimize_program(&l.program, l.universe, &l.rules, &l.config)?;
    let text = print_ir(&out);
    if let Some(dir) = &a.dump_lp {
        write_lps(dir, &results)?;
    }
    if let Some(path) = &a.output {
        write(path, &text)?;
    }
    if a.json {
        let mut doc = json!({
            "functions": results.iter().map(|r| &r.stats).collect::<Vec<_>>(),
            "saturation": results.iter().map(|r| &r.saturation).collect::<Vec<_>>(),
        });
        if a.output.is_none() {
            doc["ir"] = json!(text);
        }
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else if a.output.is_none() {
        print!("{text}");
        eprint!("{}", stats_table(&results));
    } else {
        print!("{}", stats_table(&results));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_inputs(text: &str) -> Result<Vec<Vec<Value>>> {
    let json: serde_json::Value =
        serde_json::from_str(text).context("inputs are not valid JSON")?;
    let Some(rows) = json.as_array() else {
        bail!("inputs must be a JSON array of argument arrays")
    };
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            let Some(args) = row.as_array() else {
                bail!("input {} is not an array", k + 1)
            };
            args.iter()
                .map(Value::from_json)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| anyhow::anyhow!("input {}: {e}", k + 1))
        })
        .collect()
}

fn entry<'a>(p: &'a IRProgram, requested: Option<&str>) -> Result<&'a FunctionIR> {
    match requested {
        Some(name) => p
            .functions
            .get(name)
            .with_context(|| format!("no function `{name}`")),
        None if p.functions.len() == 1 => Ok(p.functions.values().next().unwrap()),
        None => bail!(
            "the program has {} functions; choose one with --func",
            p.functions.len()
        ),
    }
}

fn show_args(args: &[Value]) -> String {
    args.iter()
        .map(Value::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_verify(a: &VerifyArgs) -> Result<ExitCode> {
    let l = a.run.load()?;
    let inputs = parse_inputs(&read(&a.inputs)?)?;
    let func = entry(&l.program, a.func.as_deref())?.name.clone();
    let optimized = match &a.optimized {
        Some(p) => parse_ir(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => optimize_program(&l.program, l.universe.clone(), &l.rules, &l.config)?.0,
    };
    let relaxed = l.rules.rules.iter().any(|r| r.relaxed);
    let mut failed = 0;
    for (k, args) in inputs.iter().enumerate() {
        let out = compare_runs(
            &l.program,
            &optimized,
            &func,
            args,
            &l.universe,
            relaxed,
            a.fuel,
        );
        let label = format!("case {} ({})", k + 1, show_args(args));
        let show = |r: &Result<(Value, _), _>| match r {
            Ok((v, _)) => v.to_string(),
            Err(e) => format!("error: {e}"),
        };
        if !out.values_match {
            println!(
                "FAIL {label}: original {} but optimized {}",
                show(&out.original),
                show(&out.optimized)
            );
        }
        match (&out.trace, &out.original, &out.optimized) {
            (TraceCheck::Diverged { at }, Ok((_, ta)), Ok((_, tb))) => {
                let step = |t: &egsat_core::EffectTrace| match t.0.get(*at) {
                    Some((f, xs)) => format!("{f}({})", show_args(xs)),
                    None => "end of trace".to_string(),
                };
                println!(
                    "FAIL {label}: effect {} differs: original {} but optimized {}",
                    at + 1,
                    step(ta),
                    step(tb)
                );
            }
            (TraceCheck::Diverged { .. }, ..) => println!("FAIL {label}: only one program failed"),
            (TraceCheck::Reduced { dropped }, ..) if out.values_match => {
                println!(
                    "ok   {label}: {} (INFO: relaxed run dropped {dropped} effects)",
                    show(&out.original)
                )
            }
            _ if out.values_match => println!("ok   {label}: {}", show(&out.original)),
            _ => {}
        }
        failed += !out.passed() as usize;
    }
    println!("{}/{} cases passed", inputs.len() - failed, inputs.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_census(a: &CensusArgs) -> Result<ExitCode> {
    let rules =
        parse_rules(&read(&a.rules)?).with_context(|| format!("in {}", a.rules.display()))?;
    let report =
        census_dir(&a.dir, &rules).with_context(|| format!("cannot scan {}", a.dir.display()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "{} files, {} functions",
            report.files_scanned, report.functions_scanned
        );
        println!("{:<24} {:>8} {:>6}  pattern", "rule", "matches", "files");
        for r in &report.rows {
            println!(
                "{:<24} {:>8} {:>6}  {}",
                r.rule, r.matches, r.files, r.pattern
            );
        }
        for (name, e) in &report.errors {
            eprintln!("skipped {name}: {e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump(a: &DumpArgs) -> Result<ExitCode> {
    let l = a.run.load()?;
    l.rules.check(&l.universe)?;
    let funcs: Vec<&FunctionIR> = match &a.func {
        Some(_) => vec![entry(&l.program, a.func.as_deref())?],
        None => l.program.functions.values().collect(),
    };
    let mut dot = String::new();
    for f in funcs {
        let c = match a.stage {
            Stage::Converted => {
                egsat_core::pipeline::convert_function(f, l.universe.clone(), &l.rules)?
            }
            Stage::Saturated => {
                saturate_function(f, l.universe.clone(), &l.rules, &l.config.limits)?.0
            }
        };
        dot.push_str(&c.to_dot());
        if let Some(dir) = &a.dump_lp {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            let inst = Instance::new(&c.egraph, &c.skeleton, &c.dom, &l.config.costs);
            let lp = match build_ilp(&inst) {
                Some((m, _)) => m.to_lp(),
                None => "\\ too many class cycles; no model built\n".to_string(),
            };
            write(&dir.join(format!("{}.lp", f.name)), &lp)?;
        }
    }
    match &a.output {
        Some(p) => write(p, &dot)?,
        None => print!("{dot}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Optimize(a) => cmd_optimize(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Census(a) => cmd_census(a),
        Command::Dump(a) => cmd_dump(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
