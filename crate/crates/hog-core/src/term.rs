//! Lambda-terms with terminals, nondeterministic choice and nonterminals,
//! together with typing, size, substitution and single-hole contexts.

use crate::ty::SimpleType;
use std::collections::BTreeSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

pub type Name = String;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermNode {
    /// A lambda- or rule-bound variable.
    Var(Name),
    /// A terminal fully applied to its arity.
    Terminal(Name, Vec<Term>),
    App(Term, Term),
    Abs(Name, SimpleType, Term),
    /// Ground-typed nondeterministic choice.
    Choice(Term, Term),
    NonTerminal(Name),
    /// The unique hole of a context.  Ordinary terms must not contain it.
    Hole,
}

/// A term; cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term(pub Rc<TermNode>);

impl Term {
    pub fn node(&self) -> &TermNode {
        &self.0
    }

    pub fn var(x: impl Into<Name>) -> Term {
        Term(Rc::new(TermNode::Var(x.into())))
    }
    pub fn terminal(a: impl Into<Name>, args: Vec<Term>) -> Term {
        Term(Rc::new(TermNode::Terminal(a.into(), args)))
    }
    pub fn app(f: Term, a: Term) -> Term {
        Term(Rc::new(TermNode::App(f, a)))
    }
    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }
    pub fn abs(x: impl Into<Name>, ty: SimpleType, body: Term) -> Term {
        Term(Rc::new(TermNode::Abs(x.into(), ty, body)))
    }
    pub fn choice(l: Term, r: Term) -> Term {
        Term(Rc::new(TermNode::Choice(l, r)))
    }
    pub fn nonterminal(a: impl Into<Name>) -> Term {
        Term(Rc::new(TermNode::NonTerminal(a.into())))
    }
    pub fn hole() -> Term {
        Term(Rc::new(TermNode::Hole))
    }

    /// |x| = 1, |a t1..tk| = 1 + sum, |s t| = |s|+|t|+1, |lam x.t| = |t|+1,
    /// |s+t| = |s|+|t|+1, |hole| = 0.
    pub fn size(&self) -> usize {
        match self.node() {
            TermNode::Var(_) | TermNode::NonTerminal(_) => 1,
            TermNode::Terminal(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            TermNode::App(f, a) => f.size() + a.size() + 1,
            TermNode::Abs(_, _, b) => b.size() + 1,
            TermNode::Choice(l, r) => l.size() + r.size() + 1,
            TermNode::Hole => 0,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        fn go(t: &Term, bound: &mut Vec<Name>, acc: &mut BTreeSet<Name>) {
            match t.node() {
                TermNode::Var(x) => {
                    if !bound.iter().any(|b| b == x) {
                        acc.insert(x.clone());
                    }
                }
                TermNode::Terminal(_, args) => args.iter().for_each(|a| go(a, bound, acc)),
                TermNode::App(f, a) => {
                    go(f, bound, acc);
                    go(a, bound, acc);
                }
                TermNode::Abs(x, _, b) => {
                    bound.push(x.clone());
                    go(b, bound, acc);
                    bound.pop();
                }
                TermNode::Choice(l, r) => {
                    go(l, bound, acc);
                    go(r, bound, acc);
                }
                TermNode::NonTerminal(_) | TermNode::Hole => {}
            }
        }
        let mut acc = BTreeSet::new();
        go(self, &mut Vec::new(), &mut acc);
        acc
    }

    pub fn contains_var(&self, x: &str) -> bool {
        match self.node() {
            TermNode::Var(y) => y == x,
            TermNode::Terminal(_, args) => args.iter().any(|a| a.contains_var(x)),
            TermNode::App(f, a) => f.contains_var(x) || a.contains_var(x),
            TermNode::Abs(y, _, b) => y != x && b.contains_var(x),
            TermNode::Choice(l, r) => l.contains_var(x) || r.contains_var(x),
            TermNode::NonTerminal(_) | TermNode::Hole => false,
        }
    }

    pub fn count_var(&self, x: &str) -> usize {
        match self.node() {
            TermNode::Var(y) => (y == x) as usize,
            TermNode::Terminal(_, args) => args.iter().map(|a| a.count_var(x)).sum(),
            TermNode::App(f, a) => f.count_var(x) + a.count_var(x),
            TermNode::Abs(y, _, b) => {
                if y == x {
                    0
                } else {
                    b.count_var(x)
                }
            }
            TermNode::Choice(l, r) => l.count_var(x) + r.count_var(x),
            TermNode::NonTerminal(_) | TermNode::Hole => 0,
        }
    }

    pub fn has_choice(&self) -> bool {
        match self.node() {
            TermNode::Choice(_, _) => true,
            TermNode::Var(_) | TermNode::NonTerminal(_) | TermNode::Hole => false,
            TermNode::Terminal(_, args) => args.iter().any(Term::has_choice),
            TermNode::App(f, a) => f.has_choice() || a.has_choice(),
            TermNode::Abs(_, _, b) => b.has_choice(),
        }
    }

    pub fn has_nonterminal(&self) -> bool {
        match self.node() {
            TermNode::NonTerminal(_) => true,
            TermNode::Var(_) | TermNode::Hole => false,
            TermNode::Terminal(_, args) => args.iter().any(Term::has_nonterminal),
            TermNode::App(f, a) => f.has_nonterminal() || a.has_nonterminal(),
            TermNode::Abs(_, _, b) => b.has_nonterminal(),
            TermNode::Choice(l, r) => l.has_nonterminal() || r.has_nonterminal(),
        }
    }

    pub fn has_hole(&self) -> bool {
        self.count_holes() > 0
    }

    pub fn count_holes(&self) -> usize {
        match self.node() {
            TermNode::Hole => 1,
            TermNode::Var(_) | TermNode::NonTerminal(_) => 0,
            TermNode::Terminal(_, args) => args.iter().map(Term::count_holes).sum(),
            TermNode::App(f, a) => f.count_holes() + a.count_holes(),
            TermNode::Abs(_, _, b) => b.count_holes(),
            TermNode::Choice(l, r) => l.count_holes() + r.count_holes(),
        }
    }

    /// Capture-avoiding substitution [s/x]self.
    pub fn subst(&self, x: &str, s: &Term) -> Term {
        match self.node() {
            TermNode::Var(y) => {
                if y == x {
                    s.clone()
                } else {
                    self.clone()
                }
            }
            TermNode::Terminal(a, args) => {
                Term::terminal(a.clone(), args.iter().map(|t| t.subst(x, s)).collect())
            }
            TermNode::App(f, a) => Term::app(f.subst(x, s), a.subst(x, s)),
            TermNode::Abs(y, ty, b) => {
                if y == x {
                    self.clone()
                } else if s.contains_var(y) && b.contains_var(x) {
                    // rename the binder away from the free variables of s
                    let fresh = fresh_name(y);
                    let b2 = b.subst(y, &Term::var(fresh.clone()));
                    Term::abs(fresh, ty.clone(), b2.subst(x, s))
                } else {
                    Term::abs(y.clone(), ty.clone(), b.subst(x, s))
                }
            }
            TermNode::Choice(l, r) => Term::choice(l.subst(x, s), r.subst(x, s)),
            TermNode::NonTerminal(_) | TermNode::Hole => self.clone(),
        }
    }

    /// Renames every binder to a globally fresh name.
    pub fn freshen(&self) -> Term {
        fn go(t: &Term, ren: &mut Vec<(Name, Name)>) -> Term {
            match t.node() {
                TermNode::Var(x) => {
                    for (old, new) in ren.iter().rev() {
                        if old == x {
                            return Term::var(new.clone());
                        }
                    }
                    t.clone()
                }
                TermNode::Terminal(a, args) => {
                    Term::terminal(a.clone(), args.iter().map(|u| go(u, ren)).collect())
                }
                TermNode::App(f, a) => Term::app(go(f, ren), go(a, ren)),
                TermNode::Abs(x, ty, b) => {
                    let nx = fresh_name(x);
                    ren.push((x.clone(), nx.clone()));
                    let b2 = go(b, ren);
                    ren.pop();
                    Term::abs(nx, ty.clone(), b2)
                }
                TermNode::Choice(l, r) => Term::choice(go(l, ren), go(r, ren)),
                TermNode::NonTerminal(_) | TermNode::Hole => t.clone(),
            }
        }
        go(self, &mut Vec::new())
    }

    /// Alpha-equivalence by parallel traversal with binder maps.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        fn go(a: &Term, b: &Term, m: &mut Vec<(Name, Name)>) -> bool {
            match (a.node(), b.node()) {
                (TermNode::Var(x), TermNode::Var(y)) => {
                    for (l, r) in m.iter().rev() {
                        if l == x || r == y {
                            return l == x && r == y;
                        }
                    }
                    x == y
                }
                (TermNode::Terminal(f, xs), TermNode::Terminal(g, ys)) => {
                    f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| go(x, y, m))
                }
                (TermNode::App(f, x), TermNode::App(g, y)) => go(f, g, m) && go(x, y, m),
                (TermNode::Abs(x, tx, bx), TermNode::Abs(y, ty, by)) => {
                    if tx != ty {
                        return false;
                    }
                    m.push((x.clone(), y.clone()));
                    let r = go(bx, by, m);
                    m.pop();
                    r
                }
                (TermNode::Choice(l1, r1), TermNode::Choice(l2, r2)) => {
                    go(l1, l2, m) && go(r1, r2, m)
                }
                (TermNode::NonTerminal(x), TermNode::NonTerminal(y)) => x == y,
                (TermNode::Hole, TermNode::Hole) => true,
                _ => false,
            }
        }
        go(self, other, &mut Vec::new())
    }

    /// A canonical string key, invariant under alpha-renaming.  Used for
    /// memoization of reduction states.
    pub fn alpha_key(&self) -> String {
        fn go(t: &Term, bound: &mut Vec<Name>, out: &mut String) {
            match t.node() {
                TermNode::Var(x) => {
                    match bound.iter().rposition(|b| b == x) {
                        Some(i) => {
                            out.push('#');
                            out.push_str(&(bound.len() - 1 - i).to_string());
                        }
                        None => {
                            out.push('!');
                            out.push_str(x);
                        }
                    };
                }
                TermNode::Terminal(a, args) => {
                    out.push('(');
                    out.push_str(a);
                    for u in args {
                        out.push(' ');
                        go(u, bound, out);
                    }
                    out.push(')');
                }
                TermNode::App(f, a) => {
                    out.push('@');
                    out.push('(');
                    go(f, bound, out);
                    out.push(' ');
                    go(a, bound, out);
                    out.push(')');
                }
                TermNode::Abs(x, ty, b) => {
                    out.push('\\');
                    out.push_str(&format!("{}", ty));
                    out.push('.');
                    bound.push(x.clone());
                    go(b, bound, out);
                    bound.pop();
                }
                TermNode::Choice(l, r) => {
                    out.push('+');
                    out.push('(');
                    go(l, bound, out);
                    out.push(' ');
                    go(r, bound, out);
                    out.push(')');
                }
                TermNode::NonTerminal(a) => {
                    out.push('$');
                    out.push_str(a);
                }
                TermNode::Hole => out.push('_'),
            }
        }
        let mut s = String::new();
        go(self, &mut Vec::new(), &mut s);
        s
    }

    pub fn subterm_at(&self, pos: &[usize]) -> Option<&Term> {
        let mut cur = self;
        for &i in pos {
            cur = match cur.node() {
                TermNode::Terminal(_, args) => args.get(i)?,
                TermNode::App(f, a) => match i {
                    0 => f,
                    1 => a,
                    _ => return None,
                },
                TermNode::Abs(_, _, b) => match i {
                    0 => b,
                    _ => return None,
                },
                TermNode::Choice(l, r) => match i {
                    0 => l,
                    1 => r,
                    _ => return None,
                },
                _ => return None,
            };
        }
        Some(cur)
    }

    pub fn replace_at(&self, pos: &[usize], new: Term) -> Term {
        if pos.is_empty() {
            return new;
        }
        let (i, rest) = (pos[0], &pos[1..]);
        match self.node() {
            TermNode::Terminal(a, args) => {
                let mut args = args.clone();
                args[i] = args[i].replace_at(rest, new);
                Term::terminal(a.clone(), args)
            }
            TermNode::App(f, a) => match i {
                0 => Term::app(f.replace_at(rest, new), a.clone()),
                _ => Term::app(f.clone(), a.replace_at(rest, new)),
            },
            TermNode::Abs(x, ty, b) => Term::abs(x.clone(), ty.clone(), b.replace_at(rest, new)),
            TermNode::Choice(l, r) => match i {
                0 => Term::choice(l.replace_at(rest, new), r.clone()),
                _ => Term::choice(l.clone(), r.replace_at(rest, new)),
            },
            _ => panic!("replace_at: invalid position"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn needs_parens(t: &Term) -> bool {
            matches!(
                t.node(),
                TermNode::App(_, _) | TermNode::Abs(_, _, _) | TermNode::Choice(_, _)
            ) || matches!(t.node(), TermNode::Terminal(_, a) if !a.is_empty())
        }
        match self.node() {
            TermNode::Var(x) => write!(f, "{}", x),
            TermNode::Terminal(a, args) => {
                write!(f, "{}", a)?;
                for t in args {
                    if needs_parens(t) {
                        write!(f, " ({})", t)?;
                    } else {
                        write!(f, " {}", t)?;
                    }
                }
                Ok(())
            }
            TermNode::App(g, a) => {
                if matches!(g.node(), TermNode::Abs(_, _, _) | TermNode::Choice(_, _)) {
                    write!(f, "({})", g)?;
                } else {
                    write!(f, "{}", g)?;
                }
                if needs_parens(a) {
                    write!(f, " ({})", a)
                } else {
                    write!(f, " {}", a)
                }
            }
            TermNode::Abs(x, ty, b) => write!(f, "\\{}:{}. {}", x, ty, b),
            TermNode::Choice(l, r) => write!(f, "{} + {}", l, r),
            TermNode::NonTerminal(a) => write!(f, "{}", a),
            TermNode::Hole => write!(f, "[]"),
        }
    }
}

static FRESH: AtomicU64 = AtomicU64::new(0);

/// Globally fresh variable name derived from a base name.
pub fn fresh_name(base: &str) -> Name {
    let n = FRESH.fetch_add(1, Ordering::Relaxed);
    let stem = base.split('%').next().unwrap_or(base);
    format!("{}%{}", stem, n)
}

/// An ordered type environment with distinct names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeEnv {
    binds: Vec<(Name, SimpleType)>,
}

impl TypeEnv {
    pub fn new() -> TypeEnv {
        TypeEnv::default()
    }

    pub fn bind(&self, x: impl Into<Name>, ty: SimpleType) -> TypeEnv {
        let x = x.into();
        let mut binds: Vec<_> = self
            .binds
            .iter()
            .filter(|(y, _)| *y != x)
            .cloned()
            .collect();
        binds.push((x, ty));
        TypeEnv { binds }
    }

    pub fn lookup(&self, x: &str) -> Option<&SimpleType> {
        self.binds
            .iter()
            .rev()
            .find(|(y, _)| y == x)
            .map(|(_, t)| t)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Name, SimpleType)>) -> TypeEnv {
        let mut env = TypeEnv::new();
        for (x, t) in pairs {
            env = env.bind(x, t);
        }
        env
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("unbound variable {0}")]
    UnboundVariable(Name),
    #[error("terminal {0} applied to {1} arguments, arity is {2}")]
    ArityMismatch(Name, usize, usize),
    #[error("choice branches must be ground")]
    ChoiceNotGround,
    #[error("cannot apply a term of type {0} to a term of type {1}")]
    ApplicationMismatch(SimpleType, SimpleType),
    #[error("non-ground argument of a terminal")]
    TerminalArgNotGround,
    #[error("unexpected hole")]
    UnexpectedHole,
    #[error("unknown terminal {0}")]
    UnknownTerminal(Name),
}

/// An arity oracle: terminals to arities, nonterminals to types.
pub trait Signature {
    fn terminal_arity(&self, a: &str) -> Option<usize>;
    fn nonterminal_type(&self, a: &str) -> Option<&SimpleType>;
}

/// A standalone signature for tests and closed terms.
#[derive(Clone, Debug, Default)]
pub struct MapSignature {
    pub terminals: std::collections::BTreeMap<Name, usize>,
    pub nonterminals: std::collections::BTreeMap<Name, SimpleType>,
}

impl Signature for MapSignature {
    fn terminal_arity(&self, a: &str) -> Option<usize> {
        self.terminals.get(a).copied()
    }
    fn nonterminal_type(&self, a: &str) -> Option<&SimpleType> {
        self.nonterminals.get(a)
    }
}

/// Computes the unique type of `t` under `env`, or reports why there is none.
pub fn type_check(sig: &dyn Signature, env: &TypeEnv, t: &Term) -> Result<SimpleType, TypeError> {
    match t.node() {
        TermNode::Var(x) => env
            .lookup(x)
            .cloned()
            .ok_or_else(|| TypeError::UnboundVariable(x.clone())),
        TermNode::Terminal(a, args) => {
            let k = sig
                .terminal_arity(a)
                .ok_or_else(|| TypeError::UnknownTerminal(a.clone()))?;
            if args.len() != k {
                return Err(TypeError::ArityMismatch(a.clone(), args.len(), k));
            }
            for u in args {
                if !type_check(sig, env, u)?.is_ground() {
                    return Err(TypeError::TerminalArgNotGround);
                }
            }
            Ok(SimpleType::Ground)
        }
        TermNode::App(f, a) => {
            let tf = type_check(sig, env, f)?;
            let ta = type_check(sig, env, a)?;
            match tf {
                SimpleType::Arrow(d, c) if *d == ta => Ok(*c),
                _ => Err(TypeError::ApplicationMismatch(tf, ta)),
            }
        }
        TermNode::Abs(x, ty, b) => {
            let tb = type_check(sig, &env.bind(x.clone(), ty.clone()), b)?;
            Ok(SimpleType::arrow(ty.clone(), tb))
        }
        TermNode::Choice(l, r) => {
            if type_check(sig, env, l)?.is_ground() && type_check(sig, env, r)?.is_ground() {
                Ok(SimpleType::Ground)
            } else {
                Err(TypeError::ChoiceNotGround)
            }
        }
        TermNode::NonTerminal(a) => sig
            .nonterminal_type(a)
            .cloned()
            .ok_or_else(|| TypeError::UnboundVariable(a.clone())),
        TermNode::Hole => Err(TypeError::UnexpectedHole),
    }
}

/// (internal order, external order): the largest order among subterm types,
/// and the order of the type of the whole term.
pub fn order_of_term(
    sig: &dyn Signature,
    env: &TypeEnv,
    t: &Term,
) -> Result<(usize, usize), TypeError> {
    fn go(
        sig: &dyn Signature,
        env: &TypeEnv,
        t: &Term,
        max: &mut usize,
    ) -> Result<SimpleType, TypeError> {
        let ty = match t.node() {
            TermNode::Terminal(a, args) => {
                for u in args {
                    go(sig, env, u, max)?;
                }
                let k = sig
                    .terminal_arity(a)
                    .ok_or_else(|| TypeError::UnknownTerminal(a.clone()))?;
                if args.len() != k {
                    return Err(TypeError::ArityMismatch(a.clone(), args.len(), k));
                }
                SimpleType::Ground
            }
            TermNode::App(f, a) => {
                let tf = go(sig, env, f, max)?;
                let ta = go(sig, env, a, max)?;
                match tf {
                    SimpleType::Arrow(d, c) if *d == ta => *c,
                    _ => return Err(TypeError::ApplicationMismatch(tf, ta)),
                }
            }
            TermNode::Abs(x, ty, b) => {
                let tb = go(sig, &env.bind(x.clone(), ty.clone()), b, max)?;
                SimpleType::arrow(ty.clone(), tb)
            }
            TermNode::Choice(l, r) => {
                go(sig, env, l, max)?;
                go(sig, env, r, max)?;
                SimpleType::Ground
            }
            _ => type_check(sig, env, t)?,
        };
        *max = (*max).max(ty.order());
        Ok(ty)
    }
    let mut max = 0;
    let ty = go(sig, env, t, &mut max)?;
    Ok((max, ty.order()))
}

/// A term with exactly one hole.
#[derive(Clone, PartialEq, Eq)]
pub struct Context(Term);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("context must contain exactly one hole, found {0}")]
    HoleCount(usize),
}

impl Context {
    pub fn new(t: Term) -> Result<Context, ContextError> {
        match t.count_holes() {
            1 => Ok(Context(t)),
            n => Err(ContextError::HoleCount(n)),
        }
    }

    /// The trivial context `[]`.
    pub fn hole() -> Context {
        Context(Term::hole())
    }

    pub fn term(&self) -> &Term {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.size()
    }

    /// Fills the hole, capturing binders of the context.
    pub fn fill(&self, t: &Term) -> Term {
        fn go(c: &Term, t: &Term) -> Term {
            match c.node() {
                TermNode::Hole => t.clone(),
                TermNode::Var(_) | TermNode::NonTerminal(_) => c.clone(),
                TermNode::Terminal(a, args) => {
                    Term::terminal(a.clone(), args.iter().map(|u| go(u, t)).collect())
                }
                TermNode::App(f, a) => Term::app(go(f, t), go(a, t)),
                TermNode::Abs(x, ty, b) => Term::abs(x.clone(), ty.clone(), go(b, t)),
                TermNode::Choice(l, r) => Term::choice(go(l, t), go(r, t)),
            }
        }
        go(&self.0, t)
    }

    /// Fills the hole with another context, yielding the composite context.
    pub fn compose(&self, inner: &Context) -> Context {
        Context(self.fill(inner.term()))
    }

    /// `self[inner^k[t]]`.
    pub fn fill_iterated(&self, inner: &Context, k: usize, t: &Term) -> Term {
        let mut cur = t.clone();
        for _ in 0..k {
            cur = inner.fill(&cur);
        }
        self.fill(&cur)
    }

    pub fn path_to_hole(&self) -> Vec<usize> {
        fn go(t: &Term, path: &mut Vec<usize>) -> bool {
            match t.node() {
                TermNode::Hole => true,
                TermNode::Terminal(_, args) => {
                    for (i, u) in args.iter().enumerate() {
                        path.push(i);
                        if go(u, path) {
                            return true;
                        }
                        path.pop();
                    }
                    false
                }
                TermNode::App(f, a) => {
                    path.push(0);
                    if go(f, path) {
                        return true;
                    }
                    path.pop();
                    path.push(1);
                    if go(a, path) {
                        return true;
                    }
                    path.pop();
                    false
                }
                TermNode::Abs(_, _, b) => {
                    path.push(0);
                    if go(b, path) {
                        return true;
                    }
                    path.pop();
                    false
                }
                TermNode::Choice(l, r) => {
                    path.push(0);
                    if go(l, path) {
                        return true;
                    }
                    path.pop();
                    path.push(1);
                    if go(r, path) {
                        return true;
                    }
                    path.pop();
                    false
                }
                _ => false,
            }
        }
        let mut path = Vec::new();
        go(&self.0, &mut path);
        path
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig_ae() -> MapSignature {
        let mut s = MapSignature::default();
        s.terminals.insert("a".into(), 2);
        s.terminals.insert("e".into(), 0);
        s
    }

    #[test]
    fn identity_types() {
        let sig = sig_ae();
        let id = Term::abs("x", SimpleType::Ground, Term::var("x"));
        let ty = type_check(&sig, &TypeEnv::new(), &id).unwrap();
        assert_eq!(ty, SimpleType::arrow(SimpleType::Ground, SimpleType::Ground));
    }

    #[test]
    fn identity_applied_orders() {
        // (\x:o.x) e has internal order 1 and external order 0
        let sig = sig_ae();
        let id = Term::abs("x", SimpleType::Ground, Term::var("x"));
        let t = Term::app(id, Term::terminal("e", vec![]));
        let (int, ext) = order_of_term(&sig, &TypeEnv::new(), &t).unwrap();
        assert_eq!((int, ext), (1, 0));
    }

    #[test]
    fn bare_binary_terminal_rejected() {
        let sig = sig_ae();
        let t = Term::terminal("a", vec![]);
        assert!(matches!(
            type_check(&sig, &TypeEnv::new(), &t),
            Err(TypeError::ArityMismatch(_, 0, 2))
        ));
    }

    #[test]
    fn order1_lambda() {
        // \f:(o->o). f e  has internal and external order 2
        let sig = sig_ae();
        let oo = SimpleType::arrow(SimpleType::Ground, SimpleType::Ground);
        let t = Term::abs(
            "f",
            oo,
            Term::app(Term::var("f"), Term::terminal("e", vec![])),
        );
        let (int, ext) = order_of_term(&sig, &TypeEnv::new(), &t).unwrap();
        assert_eq!((int, ext), (2, 2));
    }

    #[test]
    fn sizes() {
        let x = Term::var("x");
        assert_eq!(x.size(), 1);
        let aee = Term::terminal("a", vec![Term::terminal("e", vec![]), Term::terminal("e", vec![])]);
        assert_eq!(aee.size(), 3);
        let lam = Term::abs("x", SimpleType::Ground, Term::var("x"));
        assert_eq!(lam.size(), 2);
        assert_eq!(Context::hole().size(), 0);
    }

    #[test]
    fn capturing_fill() {
        // (\x.[])[x] = \x.x
        let c = Context::new(Term::abs("x", SimpleType::Ground, Term::hole())).unwrap();
        let filled = c.fill(&Term::var("x"));
        let id = Term::abs("x", SimpleType::Ground, Term::var("x"));
        assert!(filled.alpha_eq(&id));
        // and the filled occurrence is bound, not free
        assert!(filled.free_vars().is_empty());
    }

    #[test]
    fn size_of_fill_adds() {
        let c = Context::new(Term::abs(
            "x",
            SimpleType::Ground,
            Term::terminal("a", vec![Term::hole(), Term::terminal("e", vec![])]),
        ))
        .unwrap();
        let t = Term::var("x");
        assert_eq!(c.fill(&t).size(), c.size() + t.size());
    }

    #[test]
    fn iterated_fill() {
        // D = \x. a([] , e); D^2[t] nests
        let d = Context::new(Term::abs(
            "x",
            SimpleType::Ground,
            Term::terminal("a", vec![Term::hole(), Term::terminal("e", vec![])]),
        ))
        .unwrap();
        let t = Term::var("z");
        let d2t = d.fill(&d.fill(&t));
        assert_eq!(d2t, Context::hole().fill_iterated(&d, 2, &t));
        assert_eq!(d2t.size(), 2 * d.size() + 1);
    }

    #[test]
    fn alpha_equivalence() {
        let a = Term::abs("x", SimpleType::Ground, Term::var("x"));
        let b = Term::abs("y", SimpleType::Ground, Term::var("y"));
        assert!(a.alpha_eq(&b));
        assert_eq!(a.alpha_key(), b.alpha_key());
        let c = Term::abs("x", SimpleType::Ground, Term::var("z"));
        assert!(!a.alpha_eq(&c));
    }
}
