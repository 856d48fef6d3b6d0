//! Homeomorphic embedding on trees and words, embedded-pair scanning,
//! canonical term sets, and the order-2 comparator and period finder.

use crate::reduce::{self, ReduceError};
use crate::term::{Context, Term};
use crate::tree::Tree;
use crate::ty::SimpleType;
use std::collections::HashMap;
use thiserror::Error;

/// pi <= pi' by the two rules: same root with pointwise embedding of all
/// children, or embedding into one child.  Memoized over node pairs.
pub fn hom_embed(a: &Tree, b: &Tree) -> bool {
    let mut memo: HashMap<(usize, usize), bool> = HashMap::new();
    go(a, b, &mut memo)
}

fn go(a: &Tree, b: &Tree, memo: &mut HashMap<(usize, usize), bool>) -> bool {
    let key = (a.ptr_id(), b.ptr_id());
    if let Some(&r) = memo.get(&key) {
        return r;
    }
    let same_root = a.sym == b.sym
        && a.children.len() == b.children.len()
        && a.children
            .iter()
            .zip(&b.children)
            .all(|(x, y)| go(x, y, memo));
    let result = same_root || b.children.iter().any(|y| go(a, y, memo));
    memo.insert(key, result);
    result
}

/// pi < pi' : embeds one way but not the other.
pub fn strict_embed(a: &Tree, b: &Tree) -> bool {
    hom_embed(a, b) && !hom_embed(b, a)
}

/// Scattered subsequence on words.
pub fn word_subseq(a: &[String], b: &[String]) -> bool {
    let mut i = 0;
    for y in b {
        if i < a.len() && &a[i] == y {
            i += 1;
        }
    }
    i == a.len()
}

pub fn word_strict_subseq(a: &[String], b: &[String]) -> bool {
    word_subseq(a, b) && !word_subseq(b, a)
}

/// The first (by j ascending, then i ascending) pair i < j with
/// seq[i] embedded in seq[j].
pub fn find_embedded_pair(seq: &[Tree]) -> Option<(usize, usize)> {
    for j in 1..seq.len() {
        for i in 0..j {
            if hom_embed(&seq[i], &seq[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// The canonical terms for an l-ary terminal `a` and arity budget k:
/// { \x1...xk. a x_{i1} ... x_{il} | i1...il a subsequence of 1...k }.
#[derive(Debug, Clone)]
pub struct CanonicalTermSet {
    pub terminal: String,
    pub arity: usize,
    pub budget: usize,
    pub terms: Vec<Term>,
}

pub fn canonical_terms(terminal: &str, arity: usize, budget: usize) -> CanonicalTermSet {
    assert!(arity <= budget, "canonical terms require arity <= budget");
    let names: Vec<String> = (0..budget).map(|i| format!("x{}", i)).collect();
    let mut terms = Vec::new();
    for choice in subsequences(budget, arity) {
        let args: Vec<Term> = choice.iter().map(|&i| Term::var(names[i].clone())).collect();
        let mut t = Term::terminal(terminal.to_string(), args);
        for x in names.iter().rev() {
            t = Term::abs(x.clone(), SimpleType::Ground, t);
        }
        terms.push(t);
    }
    CanonicalTermSet {
        terminal: terminal.to_string(),
        arity,
        budget,
        terms,
    }
}

fn subsequences(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// All canonical terms for a family of fresh terminals a^j (arity j <= k),
/// 2^k terms in total.
pub fn canonical_union(name_for_arity: impl Fn(usize) -> String, k: usize) -> Vec<Term> {
    let mut out = Vec::new();
    for j in 0..=k {
        out.extend(canonical_terms(&name_for_arity(j), j, k).terms);
    }
    out
}

/// The shape (o^{k1} -> o) -> ... -> (o^{km} -> o) -> o of an order-<=2 type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order2Type {
    pub arg_arities: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("type has order {0} > 2")]
    OrderTooHigh(usize),
    #[error("type argument is not of the shape o^k -> o")]
    BadArgumentShape,
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error("period search budget of {0} iterations exhausted (diagnostic: order <= 2 must terminate)")]
    BudgetExhausted(usize),
}

impl Order2Type {
    pub fn from_simple(ty: &SimpleType) -> Result<Order2Type, EmbedError> {
        if ty.order() > 2 {
            return Err(EmbedError::OrderTooHigh(ty.order()));
        }
        let (args, _) = ty.uncurry();
        let mut arg_arities = Vec::new();
        for a in args {
            let (inner, _) = a.uncurry();
            if inner.iter().any(|t| !t.is_ground()) {
                return Err(EmbedError::BadArgumentShape);
            }
            arg_arities.push(inner.len());
        }
        Ok(Order2Type { arg_arities })
    }

    pub fn to_simple(&self) -> SimpleType {
        let args: Vec<SimpleType> = self
            .arg_arities
            .iter()
            .map(|&k| {
                SimpleType::from_args(&vec![SimpleType::Ground; k])
            })
            .collect();
        SimpleType::from_args(&args)
    }
}

/// Fresh argument terminal for slot i and arity j; the `$` namespace never
/// collides with user alphabets.
pub fn arg_terminal(slot: usize, arity: usize) -> String {
    format!("$arg_{}_{}", slot, arity)
}

/// All canonical argument tuples for the type. Tuple count is the product
/// of 2^{k_i}.
fn canonical_tuples(ty: &Order2Type) -> Vec<Vec<Term>> {
    let per_slot: Vec<Vec<Term>> = ty
        .arg_arities
        .iter()
        .enumerate()
        .map(|(i, &k)| canonical_union(|j| arg_terminal(i, j), k))
        .collect();
    let mut tuples = vec![Vec::new()];
    for slot in per_slot {
        let mut next = Vec::new();
        for t in &tuples {
            for u in &slot {
                let mut t2 = t.clone();
                t2.push(u.clone());
                next.push(t2);
            }
        }
        tuples = next;
    }
    tuples
}

/// Exact decision of the logical-relation embedding at order <= 2:
/// t <=_kappa t' iff for every tuple of canonical arguments u1..um,
/// tree(t u1..um) <= tree(t' u1..um).
pub fn order2_le(t: &Term, t2: &Term, ty: &Order2Type, fuel: usize) -> Result<bool, EmbedError> {
    for tuple in canonical_tuples(ty) {
        let a = reduce::tree_of(&Term::apps(t.clone(), tuple.clone()), None, fuel)?;
        let b = reduce::tree_of(&Term::apps(t2.clone(), tuple), None, fuel)?;
        if !hom_embed(&a, &b) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Searches for the least (i + j, then i) with
/// H^i[u] <=_kappa H^{i+j}[u], j > 0.  Termination within the budget is
/// guaranteed at order <= 2; running out is a diagnostic.
pub fn order2_find_period(
    h: &Context,
    u: &Term,
    ty: &Order2Type,
    budget: usize,
    fuel: usize,
) -> Result<(usize, usize), EmbedError> {
    let mut iterates: Vec<Term> = vec![u.clone()];
    let ensure = |iterates: &mut Vec<Term>, upto: usize| {
        while iterates.len() <= upto {
            let last = iterates.last().unwrap().clone();
            iterates.push(h.fill(&last));
        }
    };
    for total in 1..=budget {
        ensure(&mut iterates, total);
        for i in 0..total {
            let j = total - i;
            if order2_le(&iterates[i], &iterates[total], ty, fuel)? {
                return Ok((i, j));
            }
        }
    }
    Err(EmbedError::BudgetExhausted(budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree;

    #[test]
    fn embed_examples() {
        // br a b <= br (br a c) b
        let l = tree!("br", tree!("a"), tree!("b"));
        let r = tree!("br", tree!("br", tree!("a"), tree!("c")), tree!("b"));
        assert!(hom_embed(&l, &r));
        assert!(strict_embed(&l, &r));
        // reflexivity; label mismatch
        assert!(hom_embed(&l, &l));
        assert!(!strict_embed(&l, &l));
        assert!(!hom_embed(&tree!("a", tree!("e")), &tree!("b", tree!("e"))));
    }

    #[test]
    fn strict_examples() {
        let ae = tree!("a", tree!("e"));
        let aae = tree!("a", tree!("a", tree!("e")));
        assert!(strict_embed(&ae, &aae));
        let l = tree!("br", tree!("a"), tree!("b"));
        let r = tree!("br", tree!("br", tree!("a"), tree!("e")), tree!("b"));
        assert!(strict_embed(&l, &r));
    }

    #[test]
    fn word_subsequences() {
        let w = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(word_subseq(&w(&["a", "b"]), &w(&["a", "e", "b"])));
        assert!(word_subseq(&w(&[]), &w(&["a"])));
        assert!(!word_subseq(&w(&["b", "a"]), &w(&["a", "b"])));
    }

    #[test]
    fn embedded_pair_search() {
        let seq = vec![
            tree!("a", tree!("e")),
            tree!("b", tree!("e")),
            tree!("a", tree!("a", tree!("e"))),
        ];
        assert_eq!(find_embedded_pair(&seq), Some((0, 2)));
        assert_eq!(find_embedded_pair(&seq[..1]), None);
        // repeated tree found by reflexivity
        let seq2 = vec![tree!("a", tree!("e")), tree!("a", tree!("e"))];
        assert_eq!(find_embedded_pair(&seq2), Some((0, 1)));
    }

    #[test]
    fn canonical_counts() {
        // C(2,2) = 1
        assert_eq!(canonical_terms("a", 2, 2).terms.len(), 1);
        // C(2,0) = 1
        assert_eq!(canonical_terms("a", 0, 2).terms.len(), 1);
        // union over j <= 2 has 2^2 = 4 members
        assert_eq!(canonical_union(|j| format!("a{}", j), 2).len(), 4);
    }

    #[test]
    fn order2_le_examples() {
        // (\f. f e, \f. f (a e)) at (o -> o) -> o
        let oo = SimpleType::arrow(SimpleType::Ground, SimpleType::Ground);
        let t1 = Term::abs(
            "f",
            oo.clone(),
            Term::app(Term::var("f"), Term::terminal("e", vec![])),
        );
        let t2 = Term::abs(
            "f",
            oo.clone(),
            Term::app(
                Term::var("f"),
                Term::terminal("a", vec![Term::terminal("e", vec![])]),
            ),
        );
        let ty = Order2Type { arg_arities: vec![1] };
        assert!(order2_le(&t1, &t1, &ty, 1000).unwrap());
        assert!(order2_le(&t1, &t2, &ty, 1000).unwrap());
    }

    #[test]
    fn order2_le_asymmetric() {
        // \f. f e e  vs  \f. f e (a e)  at (o^2 -> o) -> o
        let o = SimpleType::Ground;
        let o2o = SimpleType::from_args(&[o.clone(), o.clone()]);
        let fee = Term::abs(
            "f",
            o2o.clone(),
            Term::apps(
                Term::var("f"),
                [Term::terminal("e", vec![]), Term::terminal("e", vec![])],
            ),
        );
        let fea = Term::abs(
            "f",
            o2o.clone(),
            Term::apps(
                Term::var("f"),
                [
                    Term::terminal("e", vec![]),
                    Term::terminal("a", vec![Term::terminal("e", vec![])]),
                ],
            ),
        );
        let ty = Order2Type { arg_arities: vec![2] };
        assert!(order2_le(&fee, &fea, &ty, 1000).unwrap());
        assert!(!order2_le(&fea, &fee, &ty, 1000).unwrap());
    }

    #[test]
    fn identity_iteration_period() {
        // H = [] gives H^0[u] <= H^1[u] immediately: (i, j) = (0, 1)
        let h = Context::hole();
        let u = Term::abs(
            "f",
            SimpleType::arrow(SimpleType::Ground, SimpleType::Ground),
            Term::app(Term::var("f"), Term::terminal("e", vec![])),
        );
        let ty = Order2Type { arg_arities: vec![1] };
        assert_eq!(order2_find_period(&h, &u, &ty, 8, 1000).unwrap(), (0, 1));
    }
}
