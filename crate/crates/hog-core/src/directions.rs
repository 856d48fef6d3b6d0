//! Direction-annotated trees and terms: path length, direction removal,
//! grammar annotation, path projection and path-word extraction.
//!
//! Directed alphabets are ordinary alphabets with composite names `a<i>`,
//! so all tree machinery applies unchanged.

use crate::grammar::{Grammar, GrammarError, RankedAlphabet, Rule};
use crate::term::{Term, TermNode};
use crate::tree::Tree;

/// The composite name `a<i>`.
pub fn directed_name(base: &str, dir: usize) -> String {
    format!("{}<{}>", base, dir)
}

/// Splits `a<i>` into (base, i).
pub fn split_directed(sym: &str) -> Option<(&str, usize)> {
    let open = sym.rfind('<')?;
    let close = sym.rfind('>')?;
    if close != sym.len() - 1 || open + 1 >= close {
        return None;
    }
    let dir: usize = sym[open + 1..close].parse().ok()?;
    Some((&sym[..open], dir))
}

/// Path length: 1 at direction-0 nodes, 1 + plen(child i) otherwise.
pub fn plen(t: &Tree) -> usize {
    match split_directed(&t.sym) {
        Some((_, 0)) | None => 1,
        Some((_, i)) => 1 + plen(&t.children[i - 1]),
    }
}

/// Removes all direction annotations.
pub fn rmd(t: &Tree) -> Tree {
    let sym = split_directed(&t.sym)
        .map(|(b, _)| b.to_string())
        .unwrap_or_else(|| t.sym.clone());
    Tree::new(sym, t.children.iter().map(rmd).collect())
}

/// Annotates every terminal occurrence in a term with the choice over its
/// directions 1..k (nullary terminals get direction 0).
pub fn annotate_term(t: &Term) -> Term {
    match t.node() {
        TermNode::Terminal(a, args) => {
            let args: Vec<Term> = args.iter().map(annotate_term).collect();
            let k = args.len();
            if k == 0 {
                Term::terminal(directed_name(a, 0), vec![])
            } else {
                let alts: Vec<Term> = (1..=k)
                    .map(|i| Term::terminal(directed_name(a, i), args.clone()))
                    .collect();
                alts.into_iter()
                    .rev()
                    .reduce(|acc, t| Term::choice(t, acc))
                    .unwrap()
            }
        }
        TermNode::App(f, a) => Term::app(annotate_term(f), annotate_term(a)),
        TermNode::Abs(x, ty, b) => Term::abs(x.clone(), ty.clone(), annotate_term(b)),
        TermNode::Choice(l, r) => Term::choice(annotate_term(l), annotate_term(r)),
        _ => t.clone(),
    }
}

/// The directed alphabet for an alphabet: `a<1>..a<k>` of arity k for each
/// k-ary terminal, `a<0>` for nullary ones.
pub fn annotate_alphabet(alpha: &RankedAlphabet) -> RankedAlphabet {
    let mut out = RankedAlphabet::default();
    for (a, &k) in &alpha.arities {
        if k == 0 {
            out.arities.insert(directed_name(a, 0), 0);
        } else {
            for i in 1..=k {
                out.arities.insert(directed_name(a, i), k);
            }
        }
    }
    out
}

/// Annotates a whole grammar; every rule body gets the direction choices.
pub fn annotate_grammar(g: &Grammar) -> Result<Grammar, GrammarError> {
    let alphabet = annotate_alphabet(&g.alphabet);
    let rules = g
        .rules
        .iter()
        .map(|r| Rule {
            nonterminal: r.nonterminal.clone(),
            binders: r.binders.clone(),
            body: annotate_term(&r.body),
        })
        .collect();
    Grammar::new(alphabet, g.nonterminals.clone(), rules, g.start.clone())
}

/// The name of the fresh unary path terminal for (a, i).
pub fn path_terminal(base: &str, dir: usize) -> String {
    format!("{}.{}", base, dir)
}

/// Path projection on terms: `a<i> t1...tl` becomes `a.i t_i` for i > 0 and
/// `e` for i = 0 (arguments other than the chosen one are dropped).
pub fn path_project_term(t: &Term) -> Term {
    match t.node() {
        TermNode::Terminal(sym, args) => match split_directed(sym) {
            Some((_, 0)) => Term::terminal("e", vec![]),
            Some((base, i)) => {
                Term::terminal(path_terminal(base, i), vec![path_project_term(&args[i - 1])])
            }
            None => Term::terminal(
                sym.clone(),
                args.iter().map(path_project_term).collect(),
            ),
        },
        TermNode::App(f, a) => Term::app(path_project_term(f), path_project_term(a)),
        TermNode::Abs(x, ty, b) => Term::abs(x.clone(), ty.clone(), path_project_term(b)),
        TermNode::Choice(l, r) => Term::choice(path_project_term(l), path_project_term(r)),
        _ => t.clone(),
    }
}

/// The path word of a directed tree: cp(a<i> pi1..pil) = a.i cp(pi_i),
/// cp(a<0> ...) = e.
pub fn cp(t: &Tree) -> Tree {
    match split_directed(&t.sym) {
        Some((_, 0)) | None => Tree::leaf("e"),
        Some((base, i)) => Tree::new(path_terminal(base, i), vec![cp(&t.children[i - 1])]),
    }
}

/// Annotates a plain tree along its deepest path: on-path nodes point at the
/// deepest child, everything else gets direction 1 (or 0 when nullary).
pub fn annotate_tree_deepest(t: &Tree) -> Tree {
    fn off_path(t: &Tree) -> Tree {
        let k = t.children.len();
        let dir = if k == 0 { 0 } else { 1 };
        Tree::new(
            directed_name(&t.sym, dir),
            t.children.iter().map(off_path).collect(),
        )
    }
    if t.children.is_empty() {
        return Tree::new(directed_name(&t.sym, 0), vec![]);
    }
    // deepest child, rightmost among ties
    let (best, _) = t
        .children
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.depth()))
        .max_by(|(i, d), (j, e)| d.cmp(e).then(i.cmp(j)))
        .unwrap();
    let children: Vec<Tree> = t
        .children
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == best {
                annotate_tree_deepest(c)
            } else {
                off_path(c)
            }
        })
        .collect();
    Tree::new(directed_name(&t.sym, best + 1), children)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree;

    #[test]
    fn plen_examples() {
        assert_eq!(plen(&tree!("a<0>")), 1);
        let t = tree!("a<1>", tree!("b<0>"), tree!("c<0>"));
        assert_eq!(plen(&t), 2);
        // a left spine of depth d, all direction 1
        let mut spine = tree!("a<0>");
        for _ in 0..5 {
            spine = tree!("a<1>", spine, tree!("e<0>"));
        }
        assert_eq!(plen(&spine), 6);
    }

    #[test]
    fn rmd_examples() {
        let t = tree!("a<2>", tree!("e<0>"), tree!("e<0>"));
        assert_eq!(rmd(&t), tree!("a", tree!("e"), tree!("e")));
        // rmd after deepest-annotation is the identity
        let pi = tree!("a", tree!("a", tree!("e"), tree!("e")), tree!("e"));
        assert_eq!(rmd(&annotate_tree_deepest(&pi)), pi);
    }

    #[test]
    fn annotate_term_choices() {
        let t = Term::terminal(
            "a",
            vec![Term::terminal("e", vec![]), Term::terminal("e", vec![])],
        );
        let ann = annotate_term(&t);
        // a<1> e<0> e<0> + a<2> e<0> e<0>
        assert!(ann.has_choice());
        assert_eq!(ann.to_string(), "a<1> e<0> e<0> + a<2> e<0> e<0>");
    }

    #[test]
    fn cp_examples() {
        assert_eq!(cp(&tree!("a<0>")), tree!("e"));
        let t = tree!("a<2>", tree!("e<0>"), tree!("b<0>"));
        assert_eq!(cp(&t), tree!("a.2", tree!("e")));
    }

    #[test]
    fn path_projection_term() {
        // a<1> x y  -->  a.1 x
        let t = Term::terminal("a<1>", vec![Term::var("x"), Term::var("y")]);
        let p = path_project_term(&t);
        assert_eq!(p.to_string(), "a.1 x");
    }

    #[test]
    fn plen_bounded_by_size() {
        let t = tree!("a<2>", tree!("e<0>"), tree!("a<1>", tree!("e<0>"), tree!("e<0>")));
        assert!(plen(&t) <= rmd(&t).size());
    }
}
