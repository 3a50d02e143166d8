//! Exhaustive extraction oracle and random instance generator.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use egsat_core::extraction::{build_model, find_cycles, greedy, Problem, ProblemNode, ProblemRoot};
use egsat_core::ilp::{solve, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let n_classes = rng.gen_range(1..=5);
    let n_nodes = rng.gen_range(n_classes..=10);
    let mut nodes = Vec::new();
    for k in 0..n_nodes {
        // every class gets a node first; later nodes land anywhere
        let class = if k < n_classes {
            k
        } else {
            rng.gen_range(0..n_classes)
        };
        let arity = if class == 0 { 0 } else { rng.gen_range(0..=2) };
        let children = (0..arity).map(|_| rng.gen_range(0..class)).collect();
        nodes.push(ProblemNode {
            class,
            cost: rng.gen_range(1..=5),
            children,
        });
    }
    // at most one back edge, which may close a cycle
    if n_classes > 1 && rng.gen_bool(0.5) {
        let n = rng.gen_range(0..nodes.len());
        let c = nodes[n].class;
        nodes[n].children.push(rng.gen_range(c..n_classes));
    }
    let mut classes = vec![Vec::new(); n_classes];
    for (k, n) in nodes.iter().enumerate() {
        classes[n.class].push(k);
    }
    let n_roots = rng.gen_range(1..=3);
    let mut roots: Vec<ProblemRoot> = Vec::new();
    for i in 0..n_roots {
        let mut dominators = Vec::new();
        if i > 0 && rng.gen_bool(0.7) {
            let parent = rng.gen_range(0..i);
            dominators = roots[parent].dominators.clone();
            dominators.push(parent);
            dominators.sort();
        }
        let needs: BTreeSet<usize> = (0..rng.gen_range(1..=2))
            .map(|_| rng.gen_range(0..n_classes))
            .collect();
        let forbidden = (0..nodes.len()).filter(|_| rng.gen_bool(0.1)).collect();
        roots.push(ProblemRoot {
            needs: needs.into_iter().collect(),
            dominators,
            pinned: None,
            forbidden,
        });
    }
    // occasionally an effect-like node: pinned at one root, forbidden elsewhere
    if rng.gen_bool(0.3) {
        let n = rng.gen_range(0..nodes.len());
        let at = rng.gen_range(0..n_roots);
        for (i, r) in roots.iter_mut().enumerate() {
            if i == at {
                // as for effect calls, the pinned node's class is what the root reads
                r.pinned = Some(n);
                r.forbidden.remove(&n);
                if !r.needs.contains(&nodes[n].class) {
                    r.needs.push(nodes[n].class);
                }
            } else {
                r.forbidden.insert(n);
            }
        }
    }
    Problem {
        classes,
        nodes,
        roots,
    }
}

fn acyclic(p: &Problem, sel: &BTreeSet<usize>) -> bool {
    // Kahn's algorithm over edges n -> m with class(m) a child class of n
    let list: Vec<usize> = sel.iter().copied().collect();
    let edges: Vec<Vec<usize>> = list
        .iter()
        .map(|&n| {
            (0..list.len())
                .filter(|&j| p.nodes[n].children.contains(&p.nodes[list[j]].class))
                .collect()
        })
        .collect();
    let mut indeg = vec![0; list.len()];
    for es in &edges {
        for &j in es {
            indeg[j] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..list.len()).filter(|&j| indeg[j] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &j in &edges[v] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(j);
            }
        }
    }
    seen == list.len()
}

/// A selection at root `i` is valid given the classes its dominators cover.
fn valid_at(p: &Problem, i: usize, sel: &BTreeSet<usize>, covered: &BTreeSet<usize>) -> bool {
    let root = &p.roots[i];
    if root.pinned.is_some_and(|n| !sel.contains(&n))
        || sel.iter().any(|n| root.forbidden.contains(n))
    {
        return false;
    }
    let here: BTreeSet<usize> = sel.iter().map(|&n| p.nodes[n].class).collect();
    let has = |c: &usize| here.contains(c) || covered.contains(c);
    if !root.needs.iter().all(has) {
        return false;
    }
    if !sel.iter().all(|&n| p.nodes[n].children.iter().all(has)) {
        return false;
    }
    let demanded = |n: usize| {
        let c = p.nodes[n].class;
        root.pinned == Some(n)
            || root.needs.contains(&c)
            || sel.iter().any(|&m| p.nodes[m].children.contains(&c))
    };
    sel.iter().all(|&n| demanded(n)) && acyclic(p, sel)
}

/// Minimum objective over all valid selections, by exhaustive search with
/// an exact cost bound.
pub fn brute_force(p: &Problem) -> Option<i64> {
    type Options = Vec<(i64, BTreeSet<usize>)>;
    struct Search<'a> {
        p: &'a Problem,
        order: Vec<usize>,
        memo: HashMap<(usize, BTreeSet<usize>), Rc<Options>>,
        best: Option<i64>,
    }
    impl Search<'_> {
        /// Valid selections at root `i`, cheapest first.
        fn options(&mut self, i: usize, covered: BTreeSet<usize>) -> Rc<Options> {
            let p = self.p;
            self.memo
                .entry((i, covered))
                .or_insert_with_key(|(i, covered)| {
                    let reach = p.reach(*i);
                    let cands: Vec<usize> = (0..p.nodes.len())
                        .filter(|&n| p.allowed(*i, n) && reach.contains(&p.nodes[n].class))
                        .collect();
                    assert!(
                        cands.len() <= 24,
                        "too many candidate nodes for exhaustive search"
                    );
                    let mut out: Options = (0u32..1 << cands.len())
                        .map(|mask| {
                            (0..cands.len())
                                .filter(|&k| mask >> k & 1 == 1)
                                .map(|k| cands[k])
                                .collect::<BTreeSet<usize>>()
                        })
                        .filter(|s| valid_at(p, *i, s, covered))
                        .map(|s| (s.iter().map(|&n| p.nodes[n].cost).sum(), s))
                        .collect();
                    out.sort();
                    Rc::new(out)
                })
                .clone()
        }

        fn go(&mut self, depth: usize, sel: &mut Vec<BTreeSet<usize>>, acc: i64) {
            let Some(&i) = self.order.get(depth) else {
                self.best = Some(self.best.map_or(acc, |b| b.min(acc)));
                return;
            };
            let p = self.p;
            let covered = p.roots[i]
                .dominators
                .iter()
                .flat_map(|&j| sel[j].iter().map(|&n| p.nodes[n].class))
                .collect();
            for (cost, s) in self.options(i, covered).iter() {
                if self.best.is_some_and(|b| acc + cost >= b) {
                    break;
                }
                sel[i] = s.clone();
                self.go(depth + 1, sel, acc + cost);
            }
            sel[i] = BTreeSet::new();
        }
    }
    let mut order: Vec<usize> = (0..p.roots.len()).collect();
    order.sort_by_key(|&i| p.roots[i].dominators.len());
    let mut search = Search {
        p,
        order,
        memo: HashMap::new(),
        best: None,
    };
    search.go(0, &mut vec![BTreeSet::new(); p.roots.len()], 0);
    search.best
}

/// Tally of [`ilp_suite`] over its instances.
#[derive(Debug, Default)]
pub struct SuiteStats {
    pub instances: usize,
    pub feasible: usize,
    pub with_cycle: usize,
}

/// Compares ILP extraction with exhaustive search on `count` random
/// instances with at most one class cycle.
pub fn ilp_suite(count: usize, seed: u64) -> Result<SuiteStats, String> {
    let mut stats = SuiteStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while stats.instances < count {
        let p = random_problem(&mut rng);
        let cycles = find_cycles(&p, 10).unwrap();
        if cycles.len() > 1 {
            continue;
        }
        stats.instances += 1;
        stats.with_cycle += cycles.len();
        let m = build_model(&p, &cycles);
        let sol = solve(&m.model, None, None);
        match (brute_force(&p), sol.status) {
            (None, Status::Infeasible) => {}
            (Some(opt), Status::Optimal) => {
                stats.feasible += 1;
                let sel = m.decode(sol.assignment.as_ref().unwrap(), p.roots.len());
                if p.check(&sel) != Ok(opt) {
                    return Err(format!(
                        "ILP selection {sel:?} is not optimal ({opt}) for {p:?}"
                    ));
                }
                if let Ok(g) = greedy(&p) {
                    if p.check(&g).map_or(true, |x| x < opt) {
                        return Err(format!(
                            "greedy selection {g:?} invalid or below optimum for {p:?}"
                        ));
                    }
                }
            }
            (expect, got) => {
                return Err(format!("exhaustive {expect:?} but ILP {got:?} for {p:?}"))
            }
        }
    }
    Ok(stats)
}
