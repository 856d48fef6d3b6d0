//! S-expression exchange format for trees, types and terms.
//!
//! Trees: `(a t1 ... tk)`, nullary symbols as bare atoms.
//! Types: `o`, `(-> k1 k2)`.
//! Terms: `(lam (x kappa) body)`, `(app f a)`, `(+ t1 t2)`, terminal
//! application `(a t1 ... tk)`, bare atoms for variables / nonterminals /
//! nullary terminals, `[]` for the hole of a context.

use crate::term::{Signature, Term};
use crate::tree::Tree;
use crate::ty::SimpleType;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SexpError {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("unexpected closing parenthesis at byte {0}")]
    UnexpectedClose(usize),
    #[error("trailing input after expression")]
    TrailingInput,
    #[error("malformed {0}: {1}")]
    Malformed(&'static str, String),
}

pub fn parse_sexp(input: &str) -> Result<Sexp, SexpError> {
    let mut toks = tokenize(input);
    let e = parse_one(&mut toks)?;
    if toks.peek().is_some() {
        return Err(SexpError::TrailingInput);
    }
    Ok(e)
}

fn tokenize(input: &str) -> std::iter::Peekable<std::vec::IntoIter<(usize, String)>> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for (i, ch) in input.char_indices() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    toks.push((start, std::mem::take(&mut cur)));
                }
                toks.push((i, ch.to_string()));
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push((start, std::mem::take(&mut cur)));
                }
            }
            c => {
                if cur.is_empty() {
                    start = i;
                }
                cur.push(c);
            }
        }
    }
    if !cur.is_empty() {
        toks.push((start, cur));
    }
    toks.into_iter().peekable()
}

fn parse_one(
    toks: &mut std::iter::Peekable<std::vec::IntoIter<(usize, String)>>,
) -> Result<Sexp, SexpError> {
    match toks.next() {
        None => Err(SexpError::UnexpectedEof),
        Some((pos, t)) if t == ")" => Err(SexpError::UnexpectedClose(pos)),
        Some((_, t)) if t == "(" => {
            let mut items = Vec::new();
            loop {
                match toks.peek() {
                    None => return Err(SexpError::UnexpectedEof),
                    Some((_, t)) if t == ")" => {
                        toks.next();
                        return Ok(Sexp::List(items));
                    }
                    _ => items.push(parse_one(toks)?),
                }
            }
        }
        Some((_, atom)) => Ok(Sexp::Atom(atom)),
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => write!(f, "{}", a),
            Sexp::List(items) => {
                write!(f, "(")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{}", e)?;
                }
                write!(f, ")")
            }
        }
    }
}

pub fn tree_from_sexp(e: &Sexp) -> Result<Tree, SexpError> {
    match e {
        Sexp::Atom(a) => Ok(Tree::leaf(a.clone())),
        Sexp::List(items) => match items.split_first() {
            Some((Sexp::Atom(a), rest)) => {
                let children = rest.iter().map(tree_from_sexp).collect::<Result<_, _>>()?;
                Ok(Tree::new(a.clone(), children))
            }
            _ => Err(SexpError::Malformed("tree", e.to_string())),
        },
    }
}

pub fn parse_tree(input: &str) -> Result<Tree, SexpError> {
    tree_from_sexp(&parse_sexp(input)?)
}

pub fn tree_to_sexp(t: &Tree) -> Sexp {
    if t.children.is_empty() {
        Sexp::Atom(t.sym.clone())
    } else {
        let mut items = vec![Sexp::Atom(t.sym.clone())];
        items.extend(t.children.iter().map(tree_to_sexp));
        Sexp::List(items)
    }
}

pub fn type_from_sexp(e: &Sexp) -> Result<SimpleType, SexpError> {
    match e {
        Sexp::Atom(a) if a == "o" => Ok(SimpleType::Ground),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(arrow), d, c] if arrow == "->" => Ok(SimpleType::arrow(
                type_from_sexp(d)?,
                type_from_sexp(c)?,
            )),
            _ => Err(SexpError::Malformed("type", e.to_string())),
        },
        _ => Err(SexpError::Malformed("type", e.to_string())),
    }
}

pub fn parse_type(input: &str) -> Result<SimpleType, SexpError> {
    type_from_sexp(&parse_sexp(input)?)
}

pub fn type_to_sexp(t: &SimpleType) -> Sexp {
    match t {
        SimpleType::Ground => Sexp::Atom("o".into()),
        SimpleType::Arrow(d, c) => Sexp::List(vec![
            Sexp::Atom("->".into()),
            type_to_sexp(d),
            type_to_sexp(c),
        ]),
    }
}

/// Parses a term; the signature decides which atoms are terminals and
/// nonterminals, everything else is a variable.
pub fn term_from_sexp(sig: &dyn Signature, e: &Sexp) -> Result<Term, SexpError> {
    match e {
        Sexp::Atom(a) if a == "[]" => Ok(Term::hole()),
        Sexp::Atom(a) => {
            if sig.terminal_arity(a) == Some(0) {
                Ok(Term::terminal(a.clone(), vec![]))
            } else if sig.nonterminal_type(a).is_some() {
                Ok(Term::nonterminal(a.clone()))
            } else {
                Ok(Term::var(a.clone()))
            }
        }
        Sexp::List(items) => match items.split_first() {
            Some((Sexp::Atom(head), rest)) => match head.as_str() {
                "lam" => match rest {
                    [Sexp::List(binder), body] => match binder.as_slice() {
                        [Sexp::Atom(x), kappa] => Ok(Term::abs(
                            x.clone(),
                            type_from_sexp(kappa)?,
                            term_from_sexp(sig, body)?,
                        )),
                        _ => Err(SexpError::Malformed("lam binder", e.to_string())),
                    },
                    _ => Err(SexpError::Malformed("lam", e.to_string())),
                },
                "app" => {
                    if rest.len() < 2 {
                        return Err(SexpError::Malformed("app", e.to_string()));
                    }
                    let mut t = term_from_sexp(sig, &rest[0])?;
                    for a in &rest[1..] {
                        t = Term::app(t, term_from_sexp(sig, a)?);
                    }
                    Ok(t)
                }
                "+" => match rest {
                    [l, r] => Ok(Term::choice(
                        term_from_sexp(sig, l)?,
                        term_from_sexp(sig, r)?,
                    )),
                    _ => Err(SexpError::Malformed("+", e.to_string())),
                },
                a if sig.terminal_arity(a).is_some() => {
                    let args = rest
                        .iter()
                        .map(|u| term_from_sexp(sig, u))
                        .collect::<Result<_, _>>()?;
                    Ok(Term::terminal(a.to_string(), args))
                }
                _ => {
                    // application written as (f a1 a2 ...)
                    let mut t = term_from_sexp(sig, &items[0])?;
                    for a in rest {
                        t = Term::app(t, term_from_sexp(sig, a)?);
                    }
                    Ok(t)
                }
            },
            Some((head, rest)) => {
                let mut t = term_from_sexp(sig, head)?;
                for a in rest {
                    t = Term::app(t, term_from_sexp(sig, a)?);
                }
                Ok(t)
            }
            None => Err(SexpError::Malformed("term", e.to_string())),
        },
    }
}

pub fn parse_term(sig: &dyn Signature, input: &str) -> Result<Term, SexpError> {
    term_from_sexp(sig, &parse_sexp(input)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::MapSignature;

    #[test]
    fn parse_print_tree() {
        let t = parse_tree("(a (b e) e)").unwrap();
        assert_eq!(t.to_string(), "(a (b e) e)");
        assert_eq!(parse_tree("e").unwrap(), Tree::leaf("e"));
    }

    #[test]
    fn parse_types() {
        assert_eq!(parse_type("o").unwrap(), SimpleType::Ground);
        let t = parse_type("(-> (-> o o) o)").unwrap();
        assert_eq!(t.order(), 2);
    }

    #[test]
    fn parse_terms() {
        let mut sig = MapSignature::default();
        sig.terminals.insert("a".into(), 1);
        sig.terminals.insert("e".into(), 0);
        let t = parse_term(&sig, "(lam (x o) (a x))").unwrap();
        assert_eq!(t.to_string(), "\\x:o. a x");
        let u = parse_term(&sig, "(+ e (a e))").unwrap();
        assert!(u.has_choice());
        let v = parse_term(&sig, "(app (lam (x o) x) e)").unwrap();
        assert_eq!(v.size(), 4);
    }
}
