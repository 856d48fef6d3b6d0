//! Ranked trees, word views and frontiers.

use crate::term::{Term, TermNode};
use std::fmt;
use std::rc::Rc;
use thiserror::Error;

/// A finite ranked tree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tree {
    pub sym: String,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn new(sym: impl Into<String>, children: Vec<Tree>) -> Tree {
        Tree {
            sym: sym.into(),
            children,
        }
    }

    pub fn leaf(sym: impl Into<String>) -> Tree {
        Tree::new(sym, vec![])
    }

    /// Number of nodes, matching term size for applicative terminal terms.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Tree::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn to_term(&self) -> Term {
        Term::terminal(
            self.sym.clone(),
            self.children.iter().map(Tree::to_term).collect(),
        )
    }

    pub fn from_term(t: &Term) -> Option<Tree> {
        match t.node() {
            TermNode::Terminal(a, args) => {
                let children = args
                    .iter()
                    .map(Tree::from_term)
                    .collect::<Option<Vec<_>>>()?;
                Some(Tree::new(a.clone(), children))
            }
            _ => None,
        }
    }

    /// Frontier symbols left to right (leaves only).
    pub fn leaves(&self) -> Vec<String> {
        fn go(t: &Tree, out: &mut Vec<String>) {
            if t.children.is_empty() {
                out.push(t.sym.clone());
            } else {
                t.children.iter().for_each(|c| go(c, out));
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    pub fn contains_sym(&self, sym: &str) -> bool {
        self.sym == sym || self.children.iter().any(|c| c.contains_sym(sym))
    }

    /// Unique node identifier by address for memo tables.
    pub(crate) fn ptr_id(&self) -> usize {
        self as *const Tree as usize
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            write!(f, "{}", self.sym)
        } else {
            write!(f, "({}", self.sym)?;
            for c in &self.children {
                write!(f, " {}", c)?;
            }
            write!(f, ")")
        }
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WordError {
    #[error("tree is not word-shaped: node {0} has {1} children")]
    NotWordShaped(String, usize),
}

/// For a word-alphabet tree a1(a2(...(an e)...)), the word a1 a2 ... an.
pub fn word_of(t: &Tree) -> Result<Vec<String>, WordError> {
    let mut out = Vec::new();
    let mut cur = t;
    loop {
        match cur.children.len() {
            0 => return Ok(out),
            1 => {
                out.push(cur.sym.clone());
                cur = &cur.children[0];
            }
            n => return Err(WordError::NotWordShaped(cur.sym.clone(), n)),
        }
    }
}

/// Builds the word-shaped tree a1(...(an(end))...).
pub fn tree_of_word(word: &[String], end: &str) -> Tree {
    let mut cur = Tree::leaf(end);
    for a in word.iter().rev() {
        cur = Tree::new(a.clone(), vec![cur]);
    }
    cur
}

/// Drops every occurrence of `eps` from a word.
pub fn remove_eps(word: &[String], eps: &str) -> Vec<String> {
    word.iter().filter(|s| *s != eps).cloned().collect()
}

/// Shorthand used by tests: a tree from nested (sym, children) tuples.
#[macro_export]
macro_rules! tree {
    ($sym:expr) => { $crate::tree::Tree::leaf($sym) };
    ($sym:expr, $($child:expr),+) => {
        $crate::tree::Tree::new($sym, vec![$($child),+])
    };
}

// Rc-shared trees used inside memoized embeddings.
pub type RcTree = Rc<Tree>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_roundtrip() {
        let t = tree!("a", tree!("b", tree!("e")));
        assert_eq!(word_of(&t).unwrap(), vec!["a".to_string(), "b".into()]);
        assert_eq!(tree_of_word(&["a".into(), "b".into()], "e"), t);
        // length(word) + 1 = node count for word-shaped trees
        assert_eq!(word_of(&t).unwrap().len() + 1, t.size());
    }

    #[test]
    fn leaves_frontier() {
        let t = tree!("br", tree!("a"), tree!("b"));
        assert_eq!(t.leaves(), vec!["a".to_string(), "b".into()]);
        let t2 = tree!("br", tree!("br", tree!("a"), tree!("e")), tree!("b"));
        assert_eq!(t2.leaves(), vec!["a".to_string(), "e".into(), "b".into()]);
    }

    #[test]
    fn not_word_shaped() {
        let t = tree!("br", tree!("a"), tree!("b"));
        assert!(word_of(&t).is_err());
    }

    #[test]
    fn remove_eps_examples() {
        let w = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(remove_eps(&w(&["a", "e", "b"]), "e"), w(&["a", "b"]));
        assert_eq!(remove_eps(&w(&[]), "e"), w(&[]));
        assert_eq!(remove_eps(&w(&["e", "e", "e"]), "e"), w(&[]));
    }
}
