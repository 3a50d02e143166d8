use std::fmt::Write;

use super::{EGraph, Head};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Writes the class clusters of `g` as DOT statements (no surrounding graph).
pub(crate) fn write_clusters(g: &EGraph, out: &mut String) {
    for c in g.class_ids() {
        let _ = writeln!(out, "  subgraph cluster_{} {{", c.0);
        let _ = writeln!(
            out,
            "    style=dotted; label=\"{} : {}\";",
            c,
            escape(&g.info(c).to_string())
        );
        for (i, n) in g.nodes(c).iter().enumerate() {
            let label = match &n.head {
                Head::Const(l, t) => format!("{l} : {t}"),
                h => h.to_string(),
            };
            let _ = writeln!(out, "    n{}_{} [label=\"{}\"];", c.0, i, escape(&label));
        }
        out.push_str("  }\n");
    }
    for c in g.class_ids() {
        for (i, n) in g.nodes(c).iter().enumerate() {
            for (k, ch) in n.children.iter().enumerate() {
                let ch = g.find(*ch);
                let _ = writeln!(
                    out,
                    "  n{}_{} -> n{}_0 [lhead=cluster_{}, label=\"{}\"];",
                    c.0, i, ch.0, ch.0, k
                );
            }
        }
    }
}

/// DOT rendering with one cluster per e-class.
pub fn egraph_dot(g: &EGraph) -> String {
    let mut out = String::from("digraph egraph {\n  compound=true;\n");
    write_clusters(g, &mut out);
    out.push_str("}\n");
    out
}
