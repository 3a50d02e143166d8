//! Equality-saturation driver with a simple back-off scheduler.

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::conversion::CfgSkeleton;
use crate::egraph::EGraph;
use crate::rules::{apply_matches, search, RuleSet};
use crate::types::NoMethodError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaturationLimits {
    pub max_iters: usize,
    pub max_enodes: usize,
    pub timeout: Duration,
    /// A rule with more matches than this in one iteration is banned.
    pub match_limit: usize,
    /// Iterations a first ban lasts; doubles with every further ban.
    pub ban_length: usize,
}

impl Default for SaturationLimits {
    fn default() -> Self {
        SaturationLimits {
            max_iters: 30,
            max_enodes: 10_000,
            timeout: Duration::from_millis(5000),
            match_limit: 1000,
            ban_length: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Saturated,
    IterLimit,
    NodeLimit,
    Timeout,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Saturated => "saturated",
            StopReason::IterLimit => "iteration limit",
            StopReason::NodeLimit => "e-node limit",
            StopReason::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RuleStats {
    pub name: String,
    pub matches: usize,
    pub merges: usize,
    pub detached: usize,
    pub bans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SaturationReport {
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub rules: Vec<RuleStats>,
    pub e_classes: usize,
    pub e_nodes: usize,
    pub search_ms: f64,
    pub apply_ms: f64,
    pub rebuild_ms: f64,
}

impl SaturationReport {
    pub fn total_merges(&self) -> usize {
        self.rules.iter().map(|r| r.merges).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{source}")]
pub struct SaturationError {
    #[source]
    pub source: NoMethodError,
    /// State when the error occurred.
    pub report: Box<SaturationReport>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Runs match/apply/rebuild rounds until nothing changes or a limit trips.
pub fn saturate(
    g: &mut EGraph,
    sk: &mut CfgSkeleton,
    rules: &RuleSet,
    limits: &SaturationLimits,
) -> Result<SaturationReport, SaturationError> {
    let start = Instant::now();
    let mut report = SaturationReport {
        iterations: 0,
        stop_reason: StopReason::IterLimit,
        rules: rules
            .rules
            .iter()
            .map(|r| RuleStats {
                name: r.name.clone(),
                matches: 0,
                merges: 0,
                detached: 0,
                bans: 0,
            })
            .collect(),
        e_classes: 0,
        e_nodes: 0,
        search_ms: 0.0,
        apply_ms: 0.0,
        rebuild_ms: 0.0,
    };
    let mut banned_until = vec![0usize; rules.rules.len()];

    let fail = |source: NoMethodError, report: &SaturationReport, g: &EGraph| {
        let mut report = report.clone();
        report.e_classes = g.num_classes();
        report.e_nodes = g.num_nodes();
        SaturationError {
            source,
            report: Box::new(report),
        }
    };

    let stop = 'outer: {
        for iter in 1..=limits.max_iters {
            report.iterations = iter;
            let mut changes = 0;
            let mut any_banned = false;
            for (i, rule) in rules.rules.iter().enumerate() {
                if start.elapsed() >= limits.timeout {
                    break 'outer StopReason::Timeout;
                }
                if banned_until[i] > iter {
                    any_banned = true;
                    continue;
                }
                let t = Instant::now();
                let matches = search(g, rule);
                report.search_ms += ms(t.elapsed());
                let stats = &mut report.rules[i];
                let limit = limits.match_limit.saturating_mul(1 << stats.bans.min(20));
                if matches.len() > limit {
                    banned_until[i] = iter + 1 + (limits.ban_length << stats.bans.min(20));
                    stats.bans += 1;
                    any_banned = true;
                    continue;
                }
                let t = Instant::now();
                let out = apply_matches(g, sk, rule, &matches).map_err(|e| fail(e, &report, g))?;
                report.apply_ms += ms(t.elapsed());
                let stats = &mut report.rules[i];
                stats.matches += out.matches;
                stats.merges += out.merges;
                stats.detached += out.detached;
                changes += out.merges;
                if g.num_nodes() > limits.max_enodes {
                    break;
                }
            }
            let t = Instant::now();
            g.rebuild().map_err(|e| fail(e, &report, g))?;
            sk.canonicalize(g);
            report.rebuild_ms += ms(t.elapsed());
            if g.num_nodes() > limits.max_enodes {
                break 'outer StopReason::NodeLimit;
            }
            if changes == 0 && !any_banned {
                break 'outer StopReason::Saturated;
            }
        }
        StopReason::IterLimit
    };
    if g.needs_rebuild() {
        g.rebuild().map_err(|e| fail(e, &report, g))?;
        sk.canonicalize(g);
    }
    report.stop_reason = stop;
    report.e_classes = g.num_classes();
    report.e_nodes = g.num_nodes();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::ir_to_egraph;
    use crate::ir::parse_function;
    use crate::rules::parse_rules;
    use crate::types::tests::numeric_universe_with;
    use crate::types::MethodSig;
    use std::sync::Arc;

    fn setup(src: &str) -> (EGraph, CfgSkeleton) {
        let sig = |f: &str, args: &[&str], ret: &str| MethodSig {
            func: f.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            ret: ret.into(),
            effect_free: true,
        };
        let u = numeric_universe_with(
            4,
            vec![
                sig("div", &["Int64", "Int64"], "Int64"),
                sig("shl", &["Int64", "Int64"], "Int64"),
                sig("add", &["Int64", "Int64"], "Int64"),
                sig("add", &["Float64", "Float64"], "Float64"),
                sig("rot", &["Vec2D", "Float64"], "Vec2D"),
            ],
        );
        let c = ir_to_egraph(&parse_function(src).unwrap(), Arc::new(u)).unwrap();
        (c.egraph, c.skeleton)
    }

    const SHIFT: &str = "fn f(%a: Int64) { bb0: %two = const 2 : Int64 %m = call mul(%a, %two) : Int64 %d = call div(%m, %two) : Int64 ret %d }";

    #[test]
    fn empty_rule_set_saturates_immediately() {
        let (mut g, mut sk) = setup(SHIFT);
        let r = saturate(
            &mut g,
            &mut sk,
            &RuleSet::default(),
            &SaturationLimits::default(),
        )
        .unwrap();
        assert_eq!(
            (r.iterations, r.stop_reason, r.total_merges()),
            (1, StopReason::Saturated, 0)
        );
    }

    #[test]
    fn shift_saturates_in_two_iterations() {
        let (mut g, mut sk) = setup(SHIFT);
        let rs = parse_rules("mul(~a::Int64, 2) -> shl(~a, 1)").unwrap();
        let r = saturate(&mut g, &mut sk, &rs, &SaturationLimits::default()).unwrap();
        assert_eq!(
            (r.iterations, r.stop_reason, r.total_merges()),
            (2, StopReason::Saturated, 1)
        );
        assert_eq!((r.e_classes, r.e_nodes), (5, 6));
        let again = saturate(&mut g, &mut sk, &rs, &SaturationLimits::default()).unwrap();
        assert_eq!(again.total_merges(), 0);
    }

    #[test]
    fn rotation_composition_never_saturates() {
        let (mut g, mut sk) = setup(
            "fn f(%p: Vec2D) { bb0: %a = const 1.0 : Float64 %x = call rot(%p, %a) : Vec2D %y = call rot(%x, %a) : Vec2D ret %y }",
        );
        let rs = parse_rules(
            "rot(rot(~p, ~a), ~b) -> rot(~p, ~a + ~b)\n\
             ~a::Comptime{Float64} + ~b::Comptime{Float64} => ~a + ~b\n\
             rot(~p, 1.0) -> ~p",
        )
        .unwrap();
        let lim = SaturationLimits {
            max_enodes: 300,
            ..Default::default()
        };
        let r = saturate(&mut g, &mut sk, &rs, &lim).unwrap();
        assert_ne!(r.stop_reason, StopReason::Saturated);
    }

    #[test]
    fn busy_rules_get_banned() {
        let (mut g, mut sk) = setup(SHIFT);
        let rs = parse_rules("mul(~a::Int64, 2) -> shl(~a, 1)").unwrap();
        let lim = SaturationLimits {
            match_limit: 0,
            ..Default::default()
        };
        let r = saturate(&mut g, &mut sk, &rs, &lim).unwrap();
        assert!(r.rules[0].bans >= 1);
        assert_eq!(r.rules[0].merges, 0);
        assert_eq!(r.stop_reason, StopReason::IterLimit);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let (mut g, mut sk) = setup(SHIFT);
            let rs =
                parse_rules("mul(~a::Int64, 2) -> shl(~a, 1)\nshl(~a, 1) -> add(~a, ~a)").unwrap();
            let r = saturate(&mut g, &mut sk, &rs, &SaturationLimits::default()).unwrap();
            (r.iterations, r.rules, crate::egraph::egraph_dot(&g))
        };
        assert_eq!(run(), run());
    }
}
