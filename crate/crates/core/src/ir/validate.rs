use std::collections::BTreeMap;
use std::fmt;

use super::dom::{compute_idom, DomTree};
use super::{BlockId, FunctionIR, ValueId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Unreachable(BlockId),
    MissingTarget {
        block: BlockId,
        target: BlockId,
    },
    Arity {
        block: BlockId,
        target: BlockId,
        expected: usize,
        found: usize,
    },
    ArgType {
        block: BlockId,
        target: BlockId,
        index: usize,
        expected: String,
        found: String,
    },
    DuplicateDef(ValueId),
    Undefined {
        block: BlockId,
        value: ValueId,
    },
    NotDominated {
        block: BlockId,
        value: ValueId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unreachable(b) => write!(f, "bb{b} is unreachable"),
            Violation::MissingTarget { block, target } => {
                write!(f, "bb{block} jumps to missing bb{target}")
            }
            Violation::Arity {
                block,
                target,
                expected,
                found,
            } => write!(
                f,
                "bb{block} passes {found} arguments to bb{target}, which takes {expected}"
            ),
            Violation::ArgType {
                block,
                target,
                index,
                expected,
                found,
            } => write!(
                f,
                "bb{block} passes {found} as argument {index} of bb{target}, expected {expected}"
            ),
            Violation::DuplicateDef(v) => write!(f, "{v} is defined more than once"),
            Violation::Undefined { block, value } => write!(f, "bb{block} uses undefined {value}"),
            Violation::NotDominated { block, value } => {
                write!(
                    f,
                    "use of {value} in bb{block} is not dominated by its definition"
                )
            }
        }
    }
}

/// Where a value is defined: block plus position (`None` = block entry).
type DefSite = (BlockId, Option<usize>);

/// Checks the SSA invariants. An empty list means the function is valid.
pub fn validate(f: &FunctionIR) -> Vec<Violation> {
    let mut out = Vec::new();
    let nblocks = f.blocks.len();

    let mut succs = Vec::with_capacity(nblocks);
    for (b, block) in f.blocks.iter().enumerate() {
        let mut ss = Vec::new();
        for t in block.terminator.targets() {
            if t.block >= nblocks {
                out.push(Violation::MissingTarget {
                    block: b,
                    target: t.block,
                });
            } else {
                ss.push(t.block);
            }
        }
        succs.push(ss);
    }
    let (idom, unreachable) = compute_idom(&succs);
    out.extend(unreachable.iter().map(|b| Violation::Unreachable(*b)));
    let dt = DomTree::from_idom(idom);

    let mut defs: BTreeMap<ValueId, DefSite> = BTreeMap::new();
    let mut define = |v: ValueId, site: DefSite, out: &mut Vec<Violation>| {
        if defs.insert(v, site).is_some() {
            out.push(Violation::DuplicateDef(v));
        }
    };
    for (v, _) in &f.params {
        define(*v, (0, None), &mut out);
    }
    for (b, block) in f.blocks.iter().enumerate() {
        if b > 0 {
            for (v, _) in &block.args {
                define(*v, (b, None), &mut out);
            }
        }
        for (i, s) in block.statements.iter().enumerate() {
            define(s.dest, (b, Some(i)), &mut out);
        }
    }
    let types = f.value_types();

    let check_use =
        |v: ValueId, b: BlockId, pos: usize, out: &mut Vec<Violation>| match defs.get(&v) {
            None => out.push(Violation::Undefined { block: b, value: v }),
            Some(&(db, dpos)) => {
                let ok = if db == b {
                    dpos.is_none_or(|d| d < pos)
                } else {
                    dt.strictly_dominates(db, b)
                };
                if !ok {
                    out.push(Violation::NotDominated { block: b, value: v });
                }
            }
        };

    for (b, block) in f.blocks.iter().enumerate() {
        if unreachable.contains(&b) {
            continue;
        }
        for (i, s) in block.statements.iter().enumerate() {
            for &u in s.uses() {
                check_use(u, b, i, &mut out);
            }
        }
        let end = block.statements.len();
        for u in block.terminator.uses() {
            check_use(u, b, end, &mut out);
        }
        for t in block.terminator.targets() {
            let Some(target) = f.blocks.get(t.block) else {
                continue;
            };
            let params: Vec<&String> = if t.block == 0 {
                f.params.iter().map(|(_, ty)| ty).collect()
            } else {
                target.args.iter().map(|(_, ty)| ty).collect()
            };
            if params.len() != t.args.len() {
                out.push(Violation::Arity {
                    block: b,
                    target: t.block,
                    expected: params.len(),
                    found: t.args.len(),
                });
                continue;
            }
            for (index, (a, expected)) in t.args.iter().zip(params).enumerate() {
                if let Some(found) = types.get(a) {
                    if found != expected {
                        out.push(Violation::ArgType {
                            block: b,
                            target: t.block,
                            index,
                            expected: expected.clone(),
                            found: found.clone(),
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_function;

    #[test]
    fn sibling_use_is_not_dominated() {
        let f = parse_function(
            "fn f(%c: Bool, %a: Int64) {
             bb0: br %c, bb1, bb2
             bb1: %t = call neg(%a) : Int64
                  goto bb3
             bb2: ret %t
             bb3: ret %a }",
        )
        .unwrap();
        assert_eq!(
            validate(&f),
            vec![Violation::NotDominated {
                block: 2,
                value: ValueId(2)
            }]
        );
    }

    #[test]
    fn goto_arity_mismatch() {
        let f = parse_function(
            "fn f(%a: Int64) {
             bb0: goto bb1(%a)
             bb1(%x: Int64, %y: Int64): ret %x }",
        )
        .unwrap();
        assert_eq!(
            validate(&f),
            vec![Violation::Arity {
                block: 0,
                target: 1,
                expected: 2,
                found: 1
            }]
        );
    }

    #[test]
    fn use_before_def_in_block() {
        let f = parse_function(
            "fn f(%a: Int64) {
             bb0: %x = call neg(%y) : Int64
                  %y = call neg(%a) : Int64
                  ret %x }",
        )
        .unwrap();
        assert_eq!(
            validate(&f),
            vec![Violation::NotDominated {
                block: 0,
                value: ValueId(2)
            }]
        );
    }

    #[test]
    fn unreachable_block() {
        let f = parse_function("fn f(%a: Int64) { bb0: ret %a bb1: ret %a }").unwrap();
        assert_eq!(validate(&f), vec![Violation::Unreachable(1)]);
    }

    #[test]
    fn block_argument_type_mismatch() {
        let f = parse_function("fn f(%a: Int64) { bb0: goto bb1(%a) bb1(%x: Float64): ret %x }")
            .unwrap();
        assert!(matches!(validate(&f)[..], [Violation::ArgType { .. }]));
    }
}
