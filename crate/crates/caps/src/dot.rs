//! Graphviz rendering of the store denoted by a term.
//!
//! Shapes: `mut` circle, `imm` diamond, `capsule` box, `lent` dashed
//! circle, `read` dotted circle, `int` plain text. A right-value that is a
//! block becomes a cluster holding its local store; the anonymous object
//! of the block body is drawn as field edges leaving the declared node.
//! Aliases (`T x = y`) are dashed edges, declarations that are not yet
//! evaluated are grey, and the entry point is a bold edge.

use std::fmt::Write;

use caps_core::parser::pretty_print;
use caps_core::{ClassTable, Decl, Expr, ExprKind, Name, Qualifier, Type};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn shape(ty: Option<&Type>) -> (&'static str, Option<&'static str>) {
    match ty.and_then(Type::qualifier) {
        Some(Qualifier::Mut) => ("circle", None),
        Some(Qualifier::Imm) => ("diamond", None),
        Some(Qualifier::Capsule) => ("box", None),
        Some(Qualifier::Lent) => ("circle", Some("dashed")),
        Some(Qualifier::Read) => ("circle", Some("dotted")),
        None => ("plaintext", None),
    }
}

type Scope = Vec<(Name, String)>;

fn resolve(scope: &Scope, x: &Name) -> Option<String> {
    scope.iter().rev().find(|(n, _)| n == x).map(|(_, id)| id.clone())
}

struct Graph<'a> {
    ct: &'a ClassTable,
    body: String,
    edges: Vec<String>,
}

impl Graph<'_> {
    fn field_name(&self, class: &Name, i: usize) -> String {
        self.ct.fields(class).and_then(|fs| fs.get(i)).map_or_else(|| format!("#{i}"), |f| f.name.to_string())
    }

    /// Field edges of `new C(args)` from node `from`; integer fields are
    /// returned for the node label.
    fn object(&mut self, from: &str, class: &Name, args: &[Expr], scope: &Scope) -> Vec<String> {
        let mut ints = Vec::new();
        for (i, a) in args.iter().enumerate() {
            let f = self.field_name(class, i);
            match &a.kind {
                ExprKind::Var(y) => {
                    if let Some(to) = resolve(scope, y) {
                        self.edges.push(format!("{} -> {} [label={}];", quote(from), quote(&to), quote(&f)));
                    }
                }
                ExprKind::Int(n) => ints.push(format!("{f}={n}")),
                _ => {}
            }
        }
        ints
    }

    fn decls(&mut self, prefix: &str, ds: &[Decl], scope: &mut Scope, indent: usize) {
        for d in ds {
            scope.push((d.name.clone(), format!("{prefix}{}", d.name)));
        }
        let pad = "  ".repeat(indent);
        for d in ds {
            let id = format!("{prefix}{}", d.name);
            let (shape, style) = shape(d.ty.as_ref());
            let mut label = vec![d.name.to_string()];
            match &d.init.kind {
                ExprKind::New(c, args) => label.extend(self.object(&id, c, args, scope)),
                ExprKind::Int(n) => label.push(n.to_string()),
                ExprKind::Var(y) => {
                    if let Some(to) = resolve(scope, y) {
                        self.edges.push(format!("{} -> {} [style=dashed];", quote(&id), quote(&to)));
                    }
                }
                ExprKind::Block(inner, body) if d.init.is_right_value() => {
                    let _ = writeln!(self.body, "{pad}subgraph {} {{", quote(&format!("cluster_{id}")));
                    let _ = writeln!(self.body, "{pad}  label={};", quote(d.name.as_str()));
                    let mark = scope.len();
                    self.decls(&format!("{id}/"), inner, scope, indent + 1);
                    let _ = writeln!(self.body, "{pad}}}");
                    match &body.kind {
                        ExprKind::New(c, args) => label.extend(self.object(&id, c, args, scope)),
                        ExprKind::Var(y) => {
                            if let Some(to) = resolve(scope, y) {
                                self.edges.push(format!("{} -> {};", quote(&id), quote(&to)));
                            }
                        }
                        _ => {}
                    }
                    scope.truncate(mark);
                }
                _ => {}
            }
            let mut styles: Vec<&str> = style.into_iter().collect();
            let mut attrs = format!("shape={shape}, label={}", quote(&label.join("\n")));
            if !d.is_evaluated() {
                styles.push("filled");
                attrs.push_str(", fillcolor=lightgrey");
            }
            if !styles.is_empty() {
                let _ = write!(attrs, ", style={}", quote(&styles.join(",")));
            }
            let _ = writeln!(self.body, "{pad}{} [{attrs}];", quote(&id));
        }
    }
}

/// DOT digraph of the store of `e`. A term without declarations gives an
/// empty graph body.
pub fn store_graph(e: &Expr, ct: &ClassTable) -> String {
    let mut g = Graph { ct, body: String::new(), edges: Vec::new() };
    if let ExprKind::Block(ds, body) = &e.kind {
        if !ds.is_empty() {
            let mut scope = Scope::new();
            g.decls("", ds, &mut scope, 1);
            g.body.push_str("  \"entry\" [shape=point];\n");
            let target = match &body.kind {
                ExprKind::Var(y) => resolve(&scope, y),
                _ => None,
            };
            let target = target.unwrap_or_else(|| {
                let _ =
                    writeln!(g.body, "  \"body\" [shape=plaintext, label={}];", quote(&pretty_print(body)));
                "body".to_string()
            });
            g.edges.push(format!("\"entry\" -> {} [style=bold, penwidth=3];", quote(&target)));
        }
    }
    let mut out = String::from("digraph store {\n");
    out.push_str(&g.body);
    for e in &g.edges {
        let _ = writeln!(out, "  {e}");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::parser::parse;

    fn graph(src: &str) -> String {
        let p = parse(src).unwrap();
        store_graph(&p.main, &p.classes)
    }

    #[test]
    fn empty_store_has_empty_body() {
        assert_eq!(graph("class A { int v; } 0"), "digraph store {\n}\n");
        assert_eq!(graph("class A { int v; } new A(1)"), "digraph store {\n}\n");
    }

    #[test]
    fn shapes_follow_qualifiers() {
        let g = graph(
            "class A { int v; } mut A a = new A(0); imm A b = new A(1); capsule A c = new A(2);
             lent A d = new A(3); read A e = new A(4); a",
        );
        assert!(g.contains("\"a\" [shape=circle, label=\"a\\nv=0\"]"), "{g}");
        assert!(g.contains("\"b\" [shape=diamond"));
        assert!(g.contains("\"c\" [shape=box"));
        assert!(g.contains("\"d\" [shape=circle, label=\"d\\nv=3\", style=\"dashed\"]"), "{g}");
        assert!(g.contains("style=\"dotted\""));
        assert!(g.contains("\"entry\" -> \"a\" [style=bold, penwidth=3];"));
    }

    #[test]
    fn aliases_and_pending_declarations() {
        let g = graph("class A { mut A f; } mut A a = new A(a); mut A b = a; mut A c = b.f; c");
        assert!(g.contains("\"b\" -> \"a\" [style=dashed];"), "{g}");
        assert!(
            g.contains("\"c\" [shape=circle, label=\"c\", fillcolor=lightgrey, style=\"filled\"]"),
            "{g}"
        );
        assert!(g.contains("\"a\" -> \"a\" [label=\"f\"];"));
    }

    #[test]
    fn inner_names_shadow_outer_ones() {
        let g = graph("class A { mut A f; } mut A x = new A(x); imm A w = {mut A x = new A(x); new A(x)}; w");
        assert!(g.contains("\"w/x\" -> \"w/x\" [label=\"f\"];"), "{g}");
        assert!(g.contains("\"w\" -> \"w/x\" [label=\"f\"];"), "{g}");
        assert!(g.contains("\"x\" -> \"x\" [label=\"f\"];"), "{g}");
    }
}
