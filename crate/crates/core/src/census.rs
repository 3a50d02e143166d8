//! Static pattern census: how often each rule's left-hand side matches
//! across a corpus of IR files, without rewriting anything.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::conversion::ir_to_egraph;
use crate::ir::parse_ir;
use crate::rules::{search, RuleSet};
use crate::types::TypeUniverse;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CensusRow {
    pub rule: String,
    pub pattern: String,
    pub matches: usize,
    /// Files with at least one match.
    pub files: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub struct CensusReport {
    pub files_scanned: usize,
    pub functions_scanned: usize,
    pub rows: Vec<CensusRow>,
    /// Files (or functions) that could not be read or converted.
    pub errors: Vec<(String, String)>,
}

/// Counts matches over `(name, text)` pairs. Calls are typed with the
/// permissive universe, so type constraints in patterns only admit `Any`.
pub fn census<'a>(
    files: impl IntoIterator<Item = (&'a str, &'a str)>,
    rules: &RuleSet,
) -> CensusReport {
    let universe = Arc::new(TypeUniverse::permissive());
    let mut report = CensusReport {
        rows: rules
            .rules
            .iter()
            .map(|r| CensusRow {
                rule: r.name.clone(),
                pattern: r.lhs.to_string(),
                matches: 0,
                files: 0,
            })
            .collect(),
        ..Default::default()
    };
    for (name, text) in files {
        report.files_scanned += 1;
        let prog = match parse_ir(text) {
            Ok(p) => p,
            Err(e) => {
                report.errors.push((name.to_string(), e.to_string()));
                continue;
            }
        };
        let mut per_file = vec![0usize; rules.rules.len()];
        for f in prog.functions.values() {
            report.functions_scanned += 1;
            let c = match ir_to_egraph(f, universe.clone()) {
                Ok(c) => c,
                Err(e) => {
                    report
                        .errors
                        .push((format!("{name}:{}", f.name), e.to_string()));
                    continue;
                }
            };
            for (k, r) in rules.rules.iter().enumerate() {
                per_file[k] += search(&c.egraph, r).len();
            }
        }
        for (row, n) in report.rows.iter_mut().zip(per_file) {
            row.matches += n;
            row.files += (n > 0) as usize;
        }
    }
    report
}

/// Runs [`census`] over the `.ir` files directly inside `dir`, in name order.
pub fn census_dir(dir: &Path, rules: &RuleSet) -> std::io::Result<CensusReport> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "ir"))
        .collect();
    paths.sort();
    let mut files = Vec::new();
    let mut unreadable = Vec::new();
    for p in &paths {
        let name = p
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        match std::fs::read_to_string(p) {
            Ok(text) => files.push((name, text)),
            Err(e) => unreadable.push((name, e.to_string())),
        }
    }
    let mut report = census(files.iter().map(|(n, t)| (n.as_str(), t.as_str())), rules);
    report.files_scanned += unreadable.len();
    report.errors.extend(unreadable);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rules;

    fn rules() -> RuleSet {
        parse_rules(
            "unary: materialize(broadcasted(~f, materialize(broadcasted(~g, ~x)))) -> materialize(broadcasted(~f, ~x))\n\
             left: broadcasted(~op, materialize(~x), ~y) -> broadcasted(~op, ~x, ~y)\n\
             both: broadcasted(~op, materialize(~x), materialize(~y)) -> broadcasted(~op, ~x, ~y)",
        )
        .unwrap()
    }

    #[test]
    fn empty_corpus() {
        let r = census(std::iter::empty(), &rules());
        assert_eq!(r.files_scanned, 0);
        assert!(r.rows.iter().all(|row| row.matches == 0 && row.files == 0));
    }

    #[test]
    fn counts_matches_and_files() {
        let a = "fn a(%x: Any) { bb0: %f = const 1 : Int64 %b = call broadcasted(%f, %x) : Any %m = call materialize(%b) : Any %b2 = call broadcasted(%f, %m) : Any %m2 = call materialize(%b2) : Any ret %m2 }";
        let b = "fn b(%x: Any, %y: Any) { bb0: %f = const 1 : Int64 %mx = call materialize(%x) : Any %my = call materialize(%y) : Any %r = call broadcasted(%f, %mx, %my) : Any ret %r }";
        let c = "fn c(%x: Any) { bb0: ret %x }";
        let r = census(
            [("a.ir", a), ("b.ir", b), ("c.ir", c), ("bad.ir", "fn (")],
            &rules(),
        );
        assert_eq!(r.files_scanned, 4);
        assert_eq!(r.errors.len(), 1);
        let counts: Vec<(usize, usize)> = r.rows.iter().map(|x| (x.matches, x.files)).collect();
        assert_eq!(counts, vec![(1, 1), (1, 1), (1, 1)]);
    }
}
