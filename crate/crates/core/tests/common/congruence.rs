//! Naive congruence closure as an oracle for rebuilt e-graphs.

use std::sync::Arc;

use egsat_core::egraph::{EClassId, EGraph, ENode, Head};
use egsat_core::TypeUniverse;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Term `i` is `(head, children)` over earlier term indices.
type Term = (Head, Vec<usize>);

fn random_terms(rng: &mut ChaCha8Rng) -> Vec<Term> {
    let n = rng.gen_range(2..=20);
    let leaves = rng.gen_range(1..=4.min(n));
    let mut terms: Vec<Term> = (0..leaves)
        .map(|k| (Head::BlockArg(0, k), vec![]))
        .collect();
    while terms.len() < n {
        let f = ["f", "g", "h"][rng.gen_range(0..3)];
        let arity = rng.gen_range(1..=2);
        let kids = (0..arity).map(|_| rng.gen_range(0..terms.len())).collect();
        terms.push((Head::Call(f.into()), kids));
    }
    terms
}

fn find(uf: &mut [usize], mut x: usize) -> usize {
    while uf[x] != x {
        uf[x] = uf[uf[x]];
        x = uf[x];
    }
    x
}

/// Quadratic fixpoint: merge any two terms with equal heads and equivalent children.
fn oracle(terms: &[Term], merges: &[(usize, usize)]) -> Vec<usize> {
    let mut uf: Vec<usize> = (0..terms.len()).collect();
    for &(a, b) in merges {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        uf[ra] = rb;
    }
    loop {
        let mut changed = false;
        for i in 0..terms.len() {
            for j in i + 1..terms.len() {
                let (hi, ki) = &terms[i];
                let (hj, kj) = &terms[j];
                if hi != hj || ki.len() != kj.len() || find(&mut uf, i) == find(&mut uf, j) {
                    continue;
                }
                if ki
                    .iter()
                    .zip(kj)
                    .all(|(&x, &y)| find(&mut uf, x) == find(&mut uf, y))
                {
                    let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
                    uf[ri] = rj;
                    changed = true;
                }
            }
        }
        if !changed {
            return (0..terms.len()).map(|i| find(&mut uf, i)).collect();
        }
    }
}

/// Builds a random graph, applies random merges with interleaved rebuilds and
/// compares the resulting partition with the oracle.
pub fn check_seed(seed: u64) -> Result<(), String> {
    let universe = Arc::new(TypeUniverse::permissive());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = random_terms(&mut rng);
    let mut g = EGraph::new(universe);
    let mut ids: Vec<EClassId> = Vec::new();
    for (head, kids) in &terms {
        let node = ENode {
            head: head.clone(),
            children: kids.iter().map(|&k| ids[k]).collect(),
        };
        ids.push(g.add(node).unwrap());
    }
    let merges: Vec<(usize, usize)> = (0..rng.gen_range(0..=6))
        .map(|_| (rng.gen_range(0..terms.len()), rng.gen_range(0..terms.len())))
        .collect();
    for (k, &(a, b)) in merges.iter().enumerate() {
        g.merge(ids[a], ids[b]);
        // rebuild at irregular points so deferred work piles up
        if k % 2 == 1 {
            g.rebuild().unwrap();
        }
    }
    g.rebuild().unwrap();

    let expect = oracle(&terms, &merges);
    for i in 0..terms.len() {
        for j in 0..terms.len() {
            if (g.find(ids[i]) == g.find(ids[j])) != (expect[i] == expect[j]) {
                return Err(format!(
                    "seed {seed}: terms {i} and {j} of {terms:?} disagree after {merges:?}"
                ));
            }
        }
    }
    let mut classes: Vec<usize> = expect.clone();
    classes.sort();
    classes.dedup();
    if g.num_classes() != classes.len() {
        return Err(format!(
            "seed {seed}: {} classes, oracle has {}",
            g.num_classes(),
            classes.len()
        ));
    }
    for c in g.class_ids() {
        for n in g.nodes(c) {
            if &g.canonicalize(n) != n || g.lookup(n) != Some(c) {
                return Err(format!("seed {seed}: node {n:?} of class {c:?} is stale"));
            }
        }
    }
    Ok(())
}
