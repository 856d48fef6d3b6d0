//! Flag/marker intersection types, the flag-composition operation, checked
//! transformation derivations, their construction along stratified traces,
//! pumpable-derivation detection and pump-triple extraction, and the
//! direction-annotated variant.

use crate::directions::split_directed;
use crate::grammar::Grammar;
use crate::reduce::{self, ReductionTrace, Step, StepKind};
use crate::term::{fresh_name, type_check, Context, Name, Signature, Term, TermNode, TypeEnv};
use crate::tree::Tree;
use crate::ty::SimpleType;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

pub type FlagSet = BTreeSet<usize>;

/// A raw intersection type: ground, or an intersection of argument types
/// (kept sorted under the canonical order) to a raw result.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RawType {
    Ground,
    Arrow(Vec<FlagType>, Box<RawType>),
}

/// A type (F, M, rho) with disjoint flag and marker sets.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlagType {
    pub flags: FlagSet,
    pub markers: FlagSet,
    pub raw: RawType,
}

impl FlagType {
    pub fn new(flags: FlagSet, markers: FlagSet, raw: RawType) -> FlagType {
        debug_assert!(flags.is_disjoint(&markers), "flags and markers overlap");
        FlagType {
            flags,
            markers,
            raw,
        }
    }

    pub fn ground(flags: FlagSet, markers: FlagSet) -> FlagType {
        FlagType::new(flags, markers, RawType::Ground)
    }

    /// The simple type obtained by expanding every intersection member into
    /// its own argument.  This is the type of transformation outputs.
    pub fn erased(&self) -> SimpleType {
        erase_raw(&self.raw)
    }
}

pub fn erase_raw(raw: &RawType) -> SimpleType {
    match raw {
        RawType::Ground => SimpleType::Ground,
        RawType::Arrow(isect, rest) => {
            let mut t = erase_raw(rest);
            for entry in isect.iter().rev() {
                t = SimpleType::arrow(entry.erased(), t);
            }
            t
        }
    }
}

fn fmt_set(s: &FlagSet) -> String {
    let items: Vec<String> = s.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

impl fmt::Display for RawType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawType::Ground => write!(f, "o"),
            RawType::Arrow(isect, rest) => {
                write!(f, "(")?;
                for (i, t) in isect.iter().enumerate() {
                    if i > 0 {
                        write!(f, "^")?;
                    }
                    write!(f, "{}", t)?;
                }
                if isect.is_empty() {
                    write!(f, "T")?;
                }
                write!(f, ")->{}", rest)
            }
        }
    }
}

impl fmt::Debug for RawType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for FlagType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            fmt_set(&self.flags),
            fmt_set(&self.markers),
            self.raw
        )
    }
}

impl fmt::Debug for FlagType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Stable short identifier for a flag type, used to index output variables.
fn type_id(t: &FlagType) -> usize {
    static IDS: OnceLock<Mutex<BTreeMap<String, usize>>> = OnceLock::new();
    let ids = IDS.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut map = ids.lock().unwrap();
    let len = map.len();
    *map.entry(t.to_string()).or_insert(len)
}

/// The output variable standing for `x` used at type `t`.
pub fn output_var(x: &str, t: &FlagType) -> Name {
    let base = x.split('%').next().unwrap_or(x);
    format!("{}~{}", base, type_id(t))
}

/// A type environment: a set of bindings, possibly several per variable;
/// marker sets of distinct bindings are mutually disjoint.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlagTypeEnv {
    binds: Vec<(Name, FlagType)>, // sorted, deduplicated
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DerivationError {
    #[error("flag or marker out of range for level {0}: {1}")]
    OutOfRangeFlag(usize, usize),
    #[error("marker sets not disjoint in environment union")]
    MarkerClash,
    #[error("environment binding missing: {0}")]
    MissingBinding(Name),
    #[error("rule {0}: {1}")]
    RuleViolation(&'static str, String),
    #[error("counter is zero, cannot lift")]
    ZeroCounter,
    #[error("step does not match the derivation ({0})")]
    NotAReduct(String),
    #[error(transparent)]
    Reduce(#[from] reduce::ReduceError),
}

impl FlagTypeEnv {
    pub fn empty() -> FlagTypeEnv {
        FlagTypeEnv::default()
    }

    pub fn binds(&self) -> &[(Name, FlagType)] {
        &self.binds
    }

    pub fn is_empty(&self) -> bool {
        self.binds.is_empty()
    }

    pub fn singleton(x: impl Into<Name>, t: FlagType) -> FlagTypeEnv {
        FlagTypeEnv {
            binds: vec![(x.into(), t)],
        }
    }

    pub fn markers(&self) -> FlagSet {
        let mut m = FlagSet::new();
        for (_, t) in &self.binds {
            m.extend(t.markers.iter().copied());
        }
        m
    }

    /// Set union; shared bindings must be identical, and marker sets of
    /// distinct bindings must not overlap.
    pub fn union(&self, other: &FlagTypeEnv) -> Result<FlagTypeEnv, DerivationError> {
        let mut binds = self.binds.clone();
        for b in &other.binds {
            if !binds.contains(b) {
                binds.push(b.clone());
            }
        }
        binds.sort();
        binds.dedup();
        // mutual marker disjointness
        let mut seen = FlagSet::new();
        for (_, t) in &binds {
            for m in &t.markers {
                if !seen.insert(*m) {
                    return Err(DerivationError::MarkerClash);
                }
            }
        }
        Ok(FlagTypeEnv { binds })
    }

    pub fn insert(&self, x: impl Into<Name>, t: FlagType) -> Result<FlagTypeEnv, DerivationError> {
        self.union(&FlagTypeEnv::singleton(x, t))
    }

    pub fn remove_var(&self, x: &str) -> (FlagTypeEnv, Vec<FlagType>) {
        let mut kept = Vec::new();
        let mut removed = Vec::new();
        for (y, t) in &self.binds {
            if y == x {
                removed.push(t.clone());
            } else {
                kept.push((y.clone(), t.clone()));
            }
        }
        (FlagTypeEnv { binds: kept }, removed)
    }

    pub fn types_of(&self, x: &str) -> Vec<FlagType> {
        self.binds
            .iter()
            .filter(|(y, _)| y == x)
            .map(|(_, t)| t.clone())
            .collect()
    }

    pub fn contains(&self, x: &str, t: &FlagType) -> bool {
        self.binds.iter().any(|(y, u)| y == x && u == t)
    }
}

impl fmt::Display for FlagTypeEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (x, t)) in self.binds.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}", x, t)?;
        }
        Ok(())
    }
}

impl fmt::Debug for FlagTypeEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// The flag-composition operation at level n over a MULTISET of
/// (flag set, counter) items and a marker set M:
///
///   f'_0 = 0;  f'_l = f_{l-1} if l-1 in M else 0   (1 <= l <= n)
///   f_l  = f'_l + |{ i | l in F_i }|               (0 <= l <= n-1)
///   F    = { l < n | f_l > 0 } \ M
///   c    = f'_n + sum c_i
pub fn comp_n(
    items: &[(FlagSet, u64)],
    markers: &FlagSet,
    n: usize,
) -> Result<(FlagSet, u64), DerivationError> {
    for (fs, _) in items {
        if let Some(&max) = fs.iter().max() {
            if max >= n {
                return Err(DerivationError::OutOfRangeFlag(n, max));
            }
        }
    }
    if let Some(&max) = markers.iter().max() {
        if max >= n {
            return Err(DerivationError::OutOfRangeFlag(n, max));
        }
    }
    let mut f_prev: u64 = 0; // f_{l-1}
    let mut flags = FlagSet::new();
    for l in 0..n {
        let f_prime = if l > 0 && markers.contains(&(l - 1)) {
            f_prev
        } else {
            0
        };
        let f_l = f_prime + items.iter().filter(|(fs, _)| fs.contains(&l)).count() as u64;
        if f_l > 0 && !markers.contains(&l) {
            flags.insert(l);
        }
        f_prev = f_l;
    }
    let f_prime_n = if n > 0 && markers.contains(&(n - 1)) {
        f_prev
    } else {
        0
    };
    let c = f_prime_n + items.iter().map(|(_, c)| *c).sum::<u64>();
    Ok((flags, c))
}

/// Rule tags of the transformation system.  The same constructors serve the
/// direction-annotated variant (`directed` on the derivation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleTag {
    Weak,
    Mark,
    Var,
    Choice,
    Abs,
    App,
    Const,
    Nt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuleInfo {
    None,
    Weak { x: Name, ty: FlagType },
    Mark { added: FlagSet },
    Choice { side: usize },
    Abs { binder: Name },
    App { eorder: usize },
    Const { terminal: Name },
    Nt { name: Name },
}

/// One judgment `env |- subject : ty |> counter => output` at `level`,
/// derived by `rule` from `children`.
#[derive(Clone, PartialEq, Eq)]
pub struct Derivation {
    pub rule: RuleTag,
    pub info: RuleInfo,
    pub level: usize,
    pub directed: bool,
    pub env: FlagTypeEnv,
    pub subject: Term,
    pub ty: FlagType,
    pub counter: u64,
    pub output: Term,
    pub children: Vec<Rc<Derivation>>,
}

impl fmt::Debug for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:?}] {} |-{} {} : {} |> {}",
            self.rule, self.env, self.level, self.subject, self.ty, self.counter
        )
    }
}

impl Derivation {
    /// Indented dump, one judgment per line:
    /// `[rule] env |- term : (F,M,rho) |> c => output`.
    pub fn render(&self) -> String {
        fn go(d: &Derivation, depth: usize, out: &mut String) {
            out.push_str(&"  ".repeat(depth));
            out.push_str(&format!(
                "[{:?}] {} |-{} {} : {} |> {} => {}\n",
                d.rule, d.env, d.level, d.subject, d.ty, d.counter, d.output
            ));
            for c in &d.children {
                go(c, depth + 1, out);
            }
        }
        let mut s = String::new();
        go(self, 0, &mut s);
        s
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }
}

fn is_directed_zero(t: &Term) -> bool {
    matches!(t.node(), TermNode::Terminal(a, _) if matches!(split_directed(a), Some((_, 0))))
}

// ---------------------------------------------------------------------------
// Judgment builders.  Each recomputes the conclusion from its premises.
// ---------------------------------------------------------------------------

pub fn mk_var(level: usize, directed: bool, x: &str, ty: FlagType) -> Derivation {
    let output = Term::var(output_var(x, &ty));
    Derivation {
        rule: RuleTag::Var,
        info: RuleInfo::None,
        level,
        directed,
        env: FlagTypeEnv::singleton(x, ty.clone()),
        subject: Term::var(x),
        ty,
        counter: 0,
        output,
        children: vec![],
    }
}

pub fn mk_weak(child: Rc<Derivation>, x: Name, ty: FlagType) -> Result<Derivation, DerivationError> {
    if !ty.markers.is_empty() {
        return Err(DerivationError::RuleViolation(
            "Weak",
            "weakened binding must carry no markers".into(),
        ));
    }
    let env = child.env.insert(x.clone(), ty.clone())?;
    Ok(Derivation {
        rule: RuleTag::Weak,
        info: RuleInfo::Weak { x, ty },
        level: child.level,
        directed: child.directed,
        env,
        subject: child.subject.clone(),
        ty: child.ty.clone(),
        counter: child.counter,
        output: child.output.clone(),
        children: vec![child],
    })
}

/// eorder of the subject, needed for the Mark side condition.  Computed from
/// the erased type of the judgment.
fn subject_eorder(d_ty: &FlagType) -> usize {
    d_ty.erased().order()
}

pub fn mk_mark(child: Rc<Derivation>, added: FlagSet) -> Result<Derivation, DerivationError> {
    let n = child.level;
    if added.is_empty() {
        return Err(DerivationError::RuleViolation(
            "Mark",
            "no markers added".into(),
        ));
    }
    let eo = subject_eorder(&child.ty);
    for &j in &added {
        if j < eo || j >= n {
            return Err(DerivationError::RuleViolation(
                "Mark",
                format!("marker {} outside [eorder={}, {})", j, eo, n),
            ));
        }
    }
    if child.directed && added.contains(&0) && !is_directed_zero(&child.subject) {
        return Err(DerivationError::RuleViolation(
            "Mark",
            "direction-0 marker requires a direction-0 constructor".into(),
        ));
    }
    if !added.is_disjoint(&child.ty.markers) {
        return Err(DerivationError::RuleViolation(
            "Mark",
            "markers added twice".into(),
        ));
    }
    let mut all_markers = child.ty.markers.clone();
    all_markers.extend(added.iter().copied());
    let (flags, counter) = comp_n(
        &[(child.ty.flags.clone(), child.counter)],
        &all_markers,
        n,
    )?;
    let ty = FlagType::new(flags, all_markers, child.ty.raw.clone());
    Ok(Derivation {
        rule: RuleTag::Mark,
        info: RuleInfo::Mark { added },
        level: n,
        directed: child.directed,
        env: child.env.clone(),
        subject: child.subject.clone(),
        ty,
        counter,
        output: child.output.clone(),
        children: vec![child],
    })
}

pub fn mk_choice(
    child: Rc<Derivation>,
    side: usize,
    other: Term,
) -> Result<Derivation, DerivationError> {
    if !child.ty.raw.eq(&RawType::Ground) {
        return Err(DerivationError::RuleViolation(
            "Choice",
            "choice must be ground".into(),
        ));
    }
    let subject = if side == 0 {
        Term::choice(child.subject.clone(), other)
    } else {
        Term::choice(other, child.subject.clone())
    };
    Ok(Derivation {
        rule: RuleTag::Choice,
        info: RuleInfo::Choice { side },
        level: child.level,
        directed: child.directed,
        env: child.env.clone(),
        subject,
        ty: child.ty.clone(),
        counter: child.counter,
        output: child.output.clone(),
        children: vec![child],
    })
}

pub fn mk_abs(child: Rc<Derivation>, binder: &str) -> Result<Derivation, DerivationError> {
    let (env, isect) = child.env.remove_var(binder);
    // isect is sorted by the canonical order already (env is sorted)
    let isect_markers: FlagSet = isect
        .iter()
        .flat_map(|t| t.markers.iter().copied())
        .collect();
    let markers: FlagSet = child
        .ty
        .markers
        .difference(&isect_markers)
        .copied()
        .collect();
    let raw = RawType::Arrow(isect.clone(), Box::new(child.ty.raw.clone()));
    let ty = FlagType::new(child.ty.flags.clone(), markers, raw);
    let mut output = child.output.clone();
    for t in isect.iter().rev() {
        output = Term::abs(output_var(binder, t), t.erased(), output);
    }
    let subject_binder_ty = infer_binder_simple(&isect);
    let subject = Term::abs(binder, subject_binder_ty, child.subject.clone());
    Ok(Derivation {
        rule: RuleTag::Abs,
        info: RuleInfo::Abs {
            binder: binder.to_string(),
        },
        level: child.level,
        directed: child.directed,
        env,
        subject,
        ty,
        counter: child.counter,
        output,
        children: vec![child],
    })
}

/// The simple type recorded on the subject binder.  When no binding is
/// present the ground type is used; the subject is only compared up to
/// alpha-equivalence against the trace, which carries the true annotation.
fn infer_binder_simple(isect: &[FlagType]) -> SimpleType {
    isect
        .first()
        .map(|t| t.erased())
        .unwrap_or(SimpleType::Ground)
}

/// Variant of `mk_abs` that keeps the declared simple type of the binder
/// from the original abstraction.
pub fn mk_abs_with_subject(
    child: Rc<Derivation>,
    binder: &str,
    binder_ty: SimpleType,
) -> Result<Derivation, DerivationError> {
    let mut d = mk_abs(child, binder)?;
    if let TermNode::Abs(x, _, b) = d.subject.node() {
        d.subject = Term::abs(x.clone(), binder_ty, b.clone());
    }
    Ok(d)
}

pub fn mk_app(
    fun: Rc<Derivation>,
    args: Vec<Rc<Derivation>>,
    eorder: usize,
    arg_term: Term,
) -> Result<Derivation, DerivationError> {
    let n = fun.level;
    let (isect, result_raw) = match &fun.ty.raw {
        RawType::Arrow(isect, rest) => (isect.clone(), rest.as_ref().clone()),
        RawType::Ground => {
            return Err(DerivationError::RuleViolation(
                "App",
                "function judgment has ground type".into(),
            ))
        }
    };
    if isect.len() != args.len() {
        return Err(DerivationError::RuleViolation(
            "App",
            format!(
                "intersection has {} members but {} argument derivations",
                isect.len(),
                args.len()
            ),
        ));
    }
    for (entry, arg) in isect.iter().zip(&args) {
        if arg.ty.raw != entry.raw {
            return Err(DerivationError::RuleViolation(
                "App",
                format!("argument raw type mismatch: arg {} vs entry {} (fun {} @ {})",
                    arg.ty, entry, fun.ty, fun.subject),
            ));
        }
        let below = |s: &FlagSet| -> FlagSet { s.iter().copied().filter(|&i| i < eorder).collect() };
        if below(&arg.ty.flags) != entry.flags || below(&arg.ty.markers) != entry.markers {
            return Err(DerivationError::RuleViolation(
                "App",
                format!(
                    "argument restriction mismatch at eorder {}: arg {} vs entry {} (fun {} @ {})",
                    eorder, arg.ty, entry, fun.ty, fun.subject
                ),
            ));
        }
        if !arg.subject.alpha_eq(&arg_term) {
            return Err(DerivationError::RuleViolation(
                "App",
                "argument subjects differ".into(),
            ));
        }
    }
    // markers: function's plus the arguments' (full, not restricted)
    let mut markers = fun.ty.markers.clone();
    let mut seen = markers.clone();
    for arg in &args {
        for m in &arg.ty.markers {
            if !seen.insert(*m) {
                return Err(DerivationError::MarkerClash);
            }
            markers.insert(*m);
        }
    }
    let mut items: Vec<(FlagSet, u64)> = vec![(fun.ty.flags.clone(), fun.counter)];
    for arg in &args {
        let atleast: FlagSet = arg
            .ty
            .flags
            .iter()
            .copied()
            .filter(|&i| i >= eorder)
            .collect();
        items.push((atleast, arg.counter));
    }
    let (flags, counter) = comp_n(&items, &markers, n)?;
    let mut env = fun.env.clone();
    for arg in &args {
        env = env.union(&arg.env)?;
    }
    let subject = Term::app(fun.subject.clone(), arg_term);
    let output = Term::apps(fun.output.clone(), args.iter().map(|a| a.output.clone()));
    let mut children = vec![fun];
    children.extend(args);
    let directed = children[0].directed;
    Ok(Derivation {
        rule: RuleTag::App,
        info: RuleInfo::App { eorder },
        level: n,
        directed,
        env,
        subject,
        ty: FlagType::new(flags, markers, result_raw),
        counter,
        output,
        children,
    })
}

pub fn mk_const(
    level: usize,
    directed: bool,
    terminal: &str,
    children: Vec<Rc<Derivation>>,
) -> Result<Derivation, DerivationError> {
    let mut markers = FlagSet::new();
    let mut seen = FlagSet::new();
    for c in &children {
        if c.ty.raw != RawType::Ground {
            return Err(DerivationError::RuleViolation(
                "Const",
                "terminal argument not ground".into(),
            ));
        }
        for m in &c.ty.markers {
            if !seen.insert(*m) {
                return Err(DerivationError::MarkerClash);
            }
            markers.insert(*m);
        }
    }
    if directed {
        // the direction-0 marker may only sit in the direction child
        if let Some((_, dir)) = split_directed(terminal) {
            for (i, c) in children.iter().enumerate() {
                if c.ty.markers.contains(&0) && i + 1 != dir {
                    return Err(DerivationError::RuleViolation(
                        "Const",
                        "direction-0 marker in off-direction child".into(),
                    ));
                }
            }
        }
    }
    let mut items: Vec<(FlagSet, u64)> = vec![(FlagSet::from([0usize]), 0)];
    for c in &children {
        items.push((c.ty.flags.clone(), c.counter));
    }
    let (flags, counter) = comp_n(&items, &markers, level)?;
    let mut env = FlagTypeEnv::empty();
    for c in &children {
        env = env.union(&c.env)?;
    }
    let subject = Term::terminal(
        terminal,
        children.iter().map(|c| c.subject.clone()).collect(),
    );
    let output = Term::terminal(
        terminal,
        children.iter().map(|c| c.output.clone()).collect(),
    );
    Ok(Derivation {
        rule: RuleTag::Const,
        info: RuleInfo::Const {
            terminal: terminal.to_string(),
        },
        level,
        directed,
        env,
        subject,
        ty: FlagType::new(flags, markers, RawType::Ground),
        counter,
        output,
        children,
    })
}

pub fn mk_nt(child: Rc<Derivation>, name: &str) -> Derivation {
    Derivation {
        rule: RuleTag::Nt,
        info: RuleInfo::Nt {
            name: name.to_string(),
        },
        level: child.level,
        directed: child.directed,
        env: child.env.clone(),
        subject: Term::nonterminal(name),
        ty: child.ty.clone(),
        counter: child.counter,
        output: child.output.clone(),
        children: vec![child],
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Re-validates every node of a derivation: premises, side conditions,
/// composition equations, argument ordering, and output construction.
/// Returns the first violating node with the reason.
pub fn check_derivation(d: &Derivation, eqs: Option<&Grammar>) -> Result<(), DerivationError> {
    for c in &d.children {
        check_derivation(c, eqs)?;
        if c.level != d.level {
            return Err(DerivationError::RuleViolation(
                "level",
                "child at different level".into(),
            ));
        }
    }
    let rebuilt = match d.rule {
        RuleTag::Var => match d.subject.node() {
            TermNode::Var(x) => Ok(mk_var(d.level, d.directed, x, d.ty.clone())),
            _ => Err(DerivationError::RuleViolation("Var", "subject".into())),
        },
        RuleTag::Weak => match &d.info {
            RuleInfo::Weak { x, ty } => mk_weak(d.children[0].clone(), x.clone(), ty.clone()),
            _ => Err(DerivationError::RuleViolation("Weak", "info".into())),
        },
        RuleTag::Mark => match &d.info {
            RuleInfo::Mark { added } => mk_mark(d.children[0].clone(), added.clone()),
            _ => Err(DerivationError::RuleViolation("Mark", "info".into())),
        },
        RuleTag::Choice => match (&d.info, d.subject.node()) {
            (RuleInfo::Choice { side }, TermNode::Choice(l, r)) => {
                let other = if *side == 0 { r.clone() } else { l.clone() };
                mk_choice(d.children[0].clone(), *side, other)
            }
            _ => Err(DerivationError::RuleViolation("Choice", "shape".into())),
        },
        RuleTag::Abs => match (&d.info, d.subject.node()) {
            (RuleInfo::Abs { binder }, TermNode::Abs(_, bty, _)) => {
                mk_abs_with_subject(d.children[0].clone(), binder, bty.clone())
            }
            _ => Err(DerivationError::RuleViolation("Abs", "shape".into())),
        },
        RuleTag::App => match (&d.info, d.subject.node()) {
            (RuleInfo::App { eorder }, TermNode::App(_, arg)) => mk_app(
                d.children[0].clone(),
                d.children[1..].to_vec(),
                *eorder,
                arg.clone(),
            ),
            _ => Err(DerivationError::RuleViolation("App", "shape".into())),
        },
        RuleTag::Const => match &d.info {
            RuleInfo::Const { terminal } => mk_const(
                d.level,
                d.directed,
                terminal,
                d.children.clone(),
            ),
            _ => Err(DerivationError::RuleViolation("Const", "info".into())),
        },
        RuleTag::Nt => match &d.info {
            RuleInfo::Nt { name } => {
                if let Some(g) = eqs {
                    match g.equation(name) {
                        Some(body) if d.children[0].subject.alpha_eq(body) => {}
                        Some(_) => {
                            return Err(DerivationError::RuleViolation(
                                "Nt",
                                format!("child subject is not the equation of {}", name),
                            ))
                        }
                        None => {
                            return Err(DerivationError::RuleViolation(
                                "Nt",
                                format!("no equation for {}", name),
                            ))
                        }
                    }
                }
                Ok(mk_nt(d.children[0].clone(), name))
            }
            _ => Err(DerivationError::RuleViolation("Nt", "info".into())),
        },
    }?;
    // conclusion must agree (subject up to alpha; output up to alpha)
    if rebuilt.ty != d.ty
        || rebuilt.counter != d.counter
        || rebuilt.env != d.env
        || !rebuilt.subject.alpha_eq(&d.subject)
    {
        return Err(DerivationError::RuleViolation(
            "conclusion",
            format!(
                "recomputed {} : {} |> {} vs stored {} : {} |> {}",
                rebuilt.subject, rebuilt.ty, rebuilt.counter, d.subject, d.ty, d.counter
            ),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tree typing (the base of the completeness construction)
// ---------------------------------------------------------------------------

/// Derives `|- pi : ({0},{},o) |> 0` (unmarked) at the given level.
pub fn derive_tree_unmarked(
    pi: &Tree,
    level: usize,
    directed: bool,
) -> Result<Derivation, DerivationError> {
    let children = pi
        .children
        .iter()
        .map(|c| derive_tree_unmarked(c, level, directed).map(Rc::new))
        .collect::<Result<Vec<_>, _>>()?;
    mk_const(level, directed, &pi.sym, children)
}

/// Derives `|- pi : ({},{0},o) |> c` (marked) with c > 0 and 2^c >= |pi|;
/// the marker is routed through a maximal-counter child (rightmost among
/// ties).  In directed mode the marker follows the direction path instead.
pub fn derive_tree_marked(
    pi: &Tree,
    level: usize,
    directed: bool,
) -> Result<Derivation, DerivationError> {
    if pi.children.is_empty() {
        let base = derive_tree_unmarked(pi, level, directed)?;
        return mk_mark(Rc::new(base), FlagSet::from([0usize]));
    }
    if directed {
        match split_directed(&pi.sym) {
            Some((_, 0)) => {
                // mark the whole direction-0 node
                let base = derive_tree_unmarked(pi, level, directed)?;
                return mk_mark(Rc::new(base), FlagSet::from([0usize]));
            }
            Some((_, dir)) => {
                let mut children = Vec::new();
                for (i, c) in pi.children.iter().enumerate() {
                    let d = if i + 1 == dir {
                        derive_tree_marked(c, level, directed)?
                    } else {
                        derive_tree_unmarked(c, level, directed)?
                    };
                    children.push(Rc::new(d));
                }
                return mk_const(level, directed, &pi.sym, children);
            }
            None => {
                return Err(DerivationError::RuleViolation(
                    "Const",
                    format!("terminal {} carries no direction", pi.sym),
                ))
            }
        }
    }
    // choose the child with maximal marked counter, rightmost among ties
    let marked: Vec<Derivation> = pi
        .children
        .iter()
        .map(|c| derive_tree_marked(c, level, directed))
        .collect::<Result<_, _>>()?;
    let mut best = 0usize;
    for (i, d) in marked.iter().enumerate() {
        if d.counter >= marked[best].counter {
            best = i;
        }
    }
    let mut children = Vec::new();
    for (i, c) in pi.children.iter().enumerate() {
        if i == best {
            children.push(Rc::new(marked[i].clone()));
        } else {
            children.push(Rc::new(derive_tree_unmarked(c, level, directed)?));
        }
    }
    mk_const(level, directed, &pi.sym, children)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree;

    fn fs(xs: &[usize]) -> FlagSet {
        xs.iter().copied().collect()
    }

    #[test]
    fn comp_unit_values() {
        // Comp_1({({0},0),({0},0)},{0}) = (emptyset, 2)
        let (f, c) = comp_n(
            &[(fs(&[0]), 0), (fs(&[0]), 0)],
            &fs(&[0]),
            1,
        )
        .unwrap();
        assert_eq!((f, c), (fs(&[]), 2));
        // Comp_1({({0},0)},{0}) = (emptyset, 1)
        let (f, c) = comp_n(&[(fs(&[0]), 0)], &fs(&[0]), 1).unwrap();
        assert_eq!((f, c), (fs(&[]), 1));
        // no flags anywhere: counter passes through
        let (f, c) = comp_n(&[(fs(&[]), 7)], &fs(&[0]), 2).unwrap();
        assert_eq!((f, c), (fs(&[]), 7));
    }

    #[test]
    fn comp_emp_disj() {
        // empDisjComp: F0 disjoint from M, all other flag sets empty
        let (f, c) = comp_n(
            &[(fs(&[1]), 3), (fs(&[]), 2), (fs(&[]), 1)],
            &fs(&[0]),
            2,
        )
        .unwrap();
        assert_eq!(f, fs(&[1]));
        assert_eq!(c, 6);
    }

    #[test]
    fn comp_out_of_range() {
        assert!(comp_n(&[(fs(&[3]), 0)], &fs(&[]), 2).is_err());
    }

    #[test]
    fn derive_tree_values() {
        // marked e: c = 1 via Mark over Const
        let e = tree!("e");
        let d = derive_tree_marked(&e, 1, false).unwrap();
        assert_eq!(d.counter, 1);
        assert_eq!(d.ty, FlagType::ground(fs(&[]), fs(&[0])));
        check_derivation(&d, None).unwrap();

        // unmarked a e e: c = 0
        let aee = tree!("a", tree!("e"), tree!("e"));
        let d = derive_tree_unmarked(&aee, 1, false).unwrap();
        assert_eq!(d.counter, 0);
        assert_eq!(d.ty, FlagType::ground(fs(&[0]), fs(&[])));
        check_derivation(&d, None).unwrap();

        // marked a(a e e)(a e e): c = 5, 2^5 >= 9
        let pi = tree!("a", aee.clone(), aee.clone());
        let d = derive_tree_marked(&pi, 1, false).unwrap();
        assert_eq!(d.counter, 5);
        assert!(2u64.pow(d.counter as u32) as usize >= pi.size());
        check_derivation(&d, None).unwrap();
    }

    #[test]
    fn derive_tree_marked_bound_holds() {
        // 2^c >= |pi| across a few shapes
        let mut t = tree!("e");
        for _ in 0..4 {
            t = tree!("a", t.clone(), t);
        }
        let d = derive_tree_marked(&t, 1, false).unwrap();
        assert!(d.counter > 0);
        assert!(2f64.powi(d.counter as i32) >= t.size() as f64);
    }

    #[test]
    fn directed_tree_counters() {
        // single node a<0> marked: c = 1 = plen
        let d = derive_tree_marked(&tree!("a<0>"), 1, true).unwrap();
        assert_eq!(d.counter, 1);
        // path a<1>(a<0>): c = 2 = plen
        let t = tree!("a<1>", tree!("a<0>"));
        let d = derive_tree_marked(&t, 1, true).unwrap();
        assert_eq!(d.counter, 2);
        check_derivation(&d, None).unwrap();
    }

    #[test]
    fn perturbed_counter_rejected() {
        let aee = tree!("a", tree!("e"), tree!("e"));
        let pi = tree!("a", aee.clone(), aee);
        let mut d = derive_tree_marked(&pi, 1, false).unwrap();
        d.counter = 4;
        assert!(check_derivation(&d, None).is_err());
    }

    #[test]
    fn var_leaf_checks() {
        let t = FlagType::ground(fs(&[0]), fs(&[]));
        let d = mk_var(1, false, "x", t);
        assert_eq!(d.counter, 0);
        check_derivation(&d, None).unwrap();
    }
}

// ---------------------------------------------------------------------------
// Backward construction along a stratified trace
// ---------------------------------------------------------------------------

fn recompute_output(rule: RuleTag, info: &RuleInfo, env: &FlagTypeEnv, children: &[Rc<Derivation>]) -> Term {
    match rule {
        RuleTag::Weak | RuleTag::Mark | RuleTag::Choice | RuleTag::Nt => {
            children[0].output.clone()
        }
        RuleTag::Abs => {
            let binder = match info {
                RuleInfo::Abs { binder } => binder.clone(),
                _ => unreachable!(),
            };
            let mut out = children[0].output.clone();
            for t in children[0].env.types_of(&binder).iter().rev() {
                out = Term::abs(output_var(&binder, t), t.erased(), out);
            }
            let _ = env;
            out
        }
        RuleTag::App => Term::apps(
            children[0].output.clone(),
            children[1..].iter().map(|c| c.output.clone()),
        ),
        RuleTag::Const => {
            let terminal = match info {
                RuleInfo::Const { terminal } => terminal.clone(),
                _ => unreachable!(),
            };
            Term::terminal(terminal, children.iter().map(|c| c.output.clone()).collect())
        }
        RuleTag::Var => unreachable!("var has no children"),
    }
}

/// Applies `f` to the (sub)derivations sitting at term position `pos`,
/// rewriting the subjects of all ancestors; subterms without their own
/// derivation (discarded choice branches, arguments of empty intersections)
/// are rewritten textually.
fn expand_at(
    d: &Rc<Derivation>,
    pos: &[usize],
    new_sub: &Term,
    f: &mut dyn FnMut(&Rc<Derivation>) -> Result<Derivation, DerivationError>,
) -> Result<Derivation, DerivationError> {
    if pos.is_empty() {
        return f(d);
    }
    let new_subject = d.subject.replace_at(pos, new_sub.clone());
    let mut node = (**d).clone();
    node.subject = new_subject;
    match d.rule {
        RuleTag::Weak | RuleTag::Mark => {
            let child = Rc::new(expand_at(&d.children[0], pos, new_sub, f)?);
            node.counter = recompute_counter_shell(&node, &child)?;
            node.subject = child.subject.clone();
            node.output = child.output.clone();
            node.ty = recompute_ty_shell(&node, &child)?;
            node.env = child.env.clone();
            if let RuleInfo::Weak { x, ty } = &node.info {
                node.env = node.env.insert(x.clone(), ty.clone())?;
            }
            node.children = vec![child];
        }
        RuleTag::Choice => {
            let side = match &d.info {
                RuleInfo::Choice { side } => *side,
                _ => unreachable!(),
            };
            if pos[0] == side {
                let child = Rc::new(expand_at(&d.children[0], &pos[1..], new_sub, f)?);
                let other = match node.subject.node() {
                    TermNode::Choice(l, r) => {
                        if side == 0 {
                            r.clone()
                        } else {
                            l.clone()
                        }
                    }
                    _ => unreachable!(),
                };
                return mk_choice(child, side, other);
            }
            // expansion inside the discarded branch: textual only
        }
        RuleTag::Abs => {
            let (binder, bty) = match node.subject.node() {
                TermNode::Abs(x, t, _) => (x.clone(), t.clone()),
                _ => unreachable!(),
            };
            debug_assert_eq!(pos[0], 0);
            let child = Rc::new(expand_at(&d.children[0], &pos[1..], new_sub, f)?);
            return mk_abs_with_subject(child, &binder, bty);
        }
        RuleTag::App => {
            let eorder = match &d.info {
                RuleInfo::App { eorder } => *eorder,
                _ => unreachable!(),
            };
            let arg_term = match node.subject.node() {
                TermNode::App(_, a) => a.clone(),
                _ => unreachable!(),
            };
            if pos[0] == 0 {
                let fun = Rc::new(expand_at(&d.children[0], &pos[1..], new_sub, f)?);
                return mk_app(fun, d.children[1..].to_vec(), eorder, arg_term);
            }
            let mut args = Vec::new();
            for c in &d.children[1..] {
                args.push(Rc::new(expand_at(c, &pos[1..], new_sub, f)?));
            }
            if d.children.len() == 1 {
                // empty intersection: the argument has no derivations
                node.output = recompute_output(RuleTag::App, &node.info, &node.env, &node.children);
                return Ok(node);
            }
            return mk_app(d.children[0].clone(), args, eorder, arg_term);
        }
        RuleTag::Const => {
            let terminal = match &d.info {
                RuleInfo::Const { terminal } => terminal.clone(),
                _ => unreachable!(),
            };
            let mut children = d.children.clone();
            children[pos[0]] = Rc::new(expand_at(&d.children[pos[0]], &pos[1..], new_sub, f)?);
            return mk_const(d.level, d.directed, &terminal, children);
        }
        RuleTag::Var | RuleTag::Nt => {
            return Err(DerivationError::NotAReduct(format!(
                "cannot descend through {:?} node",
                d.rule
            )))
        }
    }
    Ok(node)
}

fn recompute_counter_shell(
    node: &Derivation,
    child: &Rc<Derivation>,
) -> Result<u64, DerivationError> {
    match node.rule {
        RuleTag::Weak => Ok(child.counter),
        RuleTag::Mark => {
            let added = match &node.info {
                RuleInfo::Mark { added } => added.clone(),
                _ => unreachable!(),
            };
            let mut all = child.ty.markers.clone();
            all.extend(added.iter().copied());
            let (_, c) = comp_n(&[(child.ty.flags.clone(), child.counter)], &all, node.level)?;
            Ok(c)
        }
        _ => unreachable!(),
    }
}

fn recompute_ty_shell(
    node: &Derivation,
    child: &Rc<Derivation>,
) -> Result<FlagType, DerivationError> {
    match node.rule {
        RuleTag::Weak => Ok(child.ty.clone()),
        RuleTag::Mark => {
            let added = match &node.info {
                RuleInfo::Mark { added } => added.clone(),
                _ => unreachable!(),
            };
            let mut all = child.ty.markers.clone();
            all.extend(added.iter().copied());
            let (flags, _) = comp_n(&[(child.ty.flags.clone(), child.counter)], &all, node.level)?;
            Ok(FlagType::new(flags, all, child.ty.raw.clone()))
        }
        _ => unreachable!(),
    }
}

/// De-substitution: splits a derivation of [t1/x]t0 into a derivation of t0
/// under x : {tau_1..tau_k} plus one argument derivation per tau_i, with the
/// counters summing to the original.
fn desubst(
    d: &Rc<Derivation>,
    x: &str,
    t0: &Term,
    t1: &Term,
    peels: &BTreeSet<FlagType>,
) -> Result<(Derivation, Vec<(FlagType, Rc<Derivation>)>), DerivationError> {
    if !t0.contains_var(x) {
        return Ok(((**d).clone(), vec![]));
    }
    if let TermNode::Var(y) = t0.node() {
        debug_assert_eq!(y, x);
        // Peel the outer Weak/Mark wrappers off the argument derivation:
        // weakenings belong to the enclosing scope and are replayed around
        // the variable; marks are replayed over the variable only when the
        // caller decided to peel this argument type.
        enum Wrap {
            W(Name, FlagType),
            M(FlagSet),
        }
        let peel_marks = peels.contains(&d.ty);
        let mut wraps: Vec<Wrap> = Vec::new();
        let mut cur = d.clone();
        loop {
            match (&cur.rule, &cur.info) {
                (RuleTag::Weak, RuleInfo::Weak { x: w, ty }) => {
                    wraps.push(Wrap::W(w.clone(), ty.clone()));
                    let next = cur.children[0].clone();
                    cur = next;
                }
                (RuleTag::Mark, RuleInfo::Mark { added }) => {
                    wraps.push(Wrap::M(added.clone()));
                    let next = cur.children[0].clone();
                    cur = next;
                }
                _ => break,
            }
        }
        let (arg_ty, arg, var_marks): (FlagType, Rc<Derivation>, Vec<FlagSet>) = if peel_marks {
            // all marks move to the variable side
            let marks = wraps
                .iter()
                .filter_map(|w| match w {
                    Wrap::M(a) => Some(a.clone()),
                    _ => None,
                })
                .collect();
            (cur.ty.clone(), cur, marks)
        } else {
            // marks stay on the argument: rebuild its mark chain over the
            // weak-stripped core
            let mut rebuilt = cur;
            for w in wraps.iter().rev() {
                if let Wrap::M(a) = w {
                    rebuilt = Rc::new(mk_mark(rebuilt, a.clone())?);
                }
            }
            (rebuilt.ty.clone(), rebuilt, Vec::new())
        };
        let mut v = mk_var(d.level, d.directed, x, arg_ty.clone());
        for added in var_marks.into_iter().rev() {
            v = mk_mark(Rc::new(v), added)?;
        }
        for w in &wraps {
            if let Wrap::W(name, ty) = w {
                v = mk_weak(Rc::new(v), name.clone(), ty.clone())?;
            }
        }
        debug_assert_eq!(v.ty, d.ty);
        return Ok((v, vec![(arg_ty, arg)]));
    }
    match d.rule {
        RuleTag::Weak => {
            let (y, ty) = match &d.info {
                RuleInfo::Weak { x: y, ty } => (y.clone(), ty.clone()),
                _ => unreachable!(),
            };
            let (d0, args) = desubst(&d.children[0], x, t0, t1, peels)?;
            Ok((mk_weak(Rc::new(d0), y, ty)?, args))
        }
        RuleTag::Mark => {
            let added = match &d.info {
                RuleInfo::Mark { added } => added.clone(),
                _ => unreachable!(),
            };
            let (d0, args) = desubst(&d.children[0], x, t0, t1, peels)?;
            Ok((mk_mark(Rc::new(d0), added)?, args))
        }
        RuleTag::Choice => {
            let side = match &d.info {
                RuleInfo::Choice { side } => *side,
                _ => unreachable!(),
            };
            let (l0, r0) = match t0.node() {
                TermNode::Choice(l, r) => (l.clone(), r.clone()),
                _ => {
                    return Err(DerivationError::NotAReduct(
                        "choice node over non-choice source".into(),
                    ))
                }
            };
            let (kept, other) = if side == 0 { (l0, r0) } else { (r0, l0) };
            let (d0, args) = desubst(&d.children[0], x, &kept, t1, peels)?;
            Ok((mk_choice(Rc::new(d0), side, other)?, args))
        }
        RuleTag::Abs => {
            let (y0, ty0, b0) = match t0.node() {
                TermNode::Abs(y, t, b) => (y.clone(), t.clone(), b.clone()),
                _ => {
                    return Err(DerivationError::NotAReduct(
                        "abs node over non-abs source".into(),
                    ))
                }
            };
            let (mut d0, args) = desubst(&d.children[0], x, &b0, t1, peels)?;
            for (_, a) in &args {
                debug_assert!(
                    a.env.types_of(&y0).is_empty(),
                    "argument derivation captured the binder"
                );
            }
            // the rebuilt intersection for the binder must match the original
            // arrow type; restore entries lost with erased occurrences
            if let RawType::Arrow(isect, _) = &d.ty.raw {
                let have = d0.env.types_of(&y0);
                for entry in isect {
                    if !have.contains(entry) {
                        if !entry.markers.is_empty() {
                            return Err(DerivationError::NotAReduct(
                                "marked binder entry vanished under de-substitution".into(),
                            ));
                        }
                        d0 = mk_weak(Rc::new(d0), y0.clone(), entry.clone())?;
                    }
                }
            }
            Ok((mk_abs_with_subject(Rc::new(d0), &y0, ty0)?, args))
        }
        RuleTag::App => {
            let eorder = match &d.info {
                RuleInfo::App { eorder } => *eorder,
                _ => unreachable!(),
            };
            let (t00, t01) = match t0.node() {
                TermNode::App(f, a) => (f.clone(), a.clone()),
                _ => {
                    return Err(DerivationError::NotAReduct(
                        "app node over non-app source".into(),
                    ))
                }
            };
            let (fun0, mut collected) = desubst(&d.children[0], x, &t00, t1, peels)?;
            let mut new_args = Vec::new();
            for c in &d.children[1..] {
                let (a0, args) = desubst(c, x, &t01, t1, peels)?;
                collected.extend(args);
                new_args.push(Rc::new(a0));
            }
            let args = dedupe_args(collected)?;
            let mut node = mk_app(Rc::new(fun0), new_args, eorder, t01)?;
            node = weaken_missing(node, &d.env, &args)?;
            Ok((node, args))
        }
        RuleTag::Const => {
            let terminal = match &d.info {
                RuleInfo::Const { terminal } => terminal.clone(),
                _ => unreachable!(),
            };
            let args0 = match t0.node() {
                TermNode::Terminal(_, args) => args.clone(),
                _ => {
                    return Err(DerivationError::NotAReduct(
                        "const node over non-terminal source".into(),
                    ))
                }
            };
            let mut collected = Vec::new();
            let mut children = Vec::new();
            for (c, src) in d.children.iter().zip(&args0) {
                let (c0, args) = desubst(c, x, src, t1, peels)?;
                collected.extend(args);
                children.push(Rc::new(c0));
            }
            let args = dedupe_args(collected)?;
            let mut node = mk_const(d.level, d.directed, &terminal, children)?;
            node = weaken_missing(node, &d.env, &args)?;
            Ok((node, args))
        }
        RuleTag::Var | RuleTag::Nt => Err(DerivationError::NotAReduct(
            "variable or nonterminal node cannot contain the redex variable".into(),
        )),
    }
}

/// Keeps one argument derivation per type; duplicates must be marker-free
/// with counter zero (their judgments are recoverable from the kept one).
fn dedupe_args(
    collected: Vec<(FlagType, Rc<Derivation>)>,
) -> Result<Vec<(FlagType, Rc<Derivation>)>, DerivationError> {
    let mut kept: Vec<(FlagType, Rc<Derivation>)> = Vec::new();
    for (ty, d) in collected {
        if let Some((_, first)) = kept.iter().find(|(t, _)| *t == ty) {
            if d.counter != 0 || first.counter != 0 {
                return Err(DerivationError::RuleViolation(
                    "App",
                    "duplicate argument type with positive counter".into(),
                ));
            }
        } else {
            kept.push((ty, d));
        }
    }
    kept.sort_by(|(a, _), (b, _)| a.cmp(b));
    Ok(kept)
}

/// Restores bindings of the original environment that are visible neither in
/// the rebuilt node nor in any kept argument derivation.
fn weaken_missing(
    mut node: Derivation,
    original: &FlagTypeEnv,
    kept_args: &[(FlagType, Rc<Derivation>)],
) -> Result<Derivation, DerivationError> {
    // plain bookkeeping set: which bindings remain visible somewhere
    let mut have: Vec<(Name, FlagType)> = node.env.binds().to_vec();
    for (_, a) in kept_args {
        have.extend(a.env.binds().iter().cloned());
    }
    for (y, ty) in original.binds() {
        if !have.iter().any(|(z, u)| z == y && u == ty) {
            node = mk_weak(Rc::new(node), y.clone(), ty.clone())?;
        }
    }
    Ok(node)
}

/// Expands one beta step: the node derives [t1/x]t0 and is rebuilt as the
/// application (\x.t0) t1.  The judgment is preserved exactly.
fn expand_beta_node(
    d: &Rc<Derivation>,
    x: &str,
    binder_ty: &SimpleType,
    t0: &Term,
    t1: &Term,
) -> Result<Derivation, DerivationError> {
    // decide which argument derivations to peel: those consisting of an
    // outer Mark chain whose peeled type collides with no other collected one
    let (_, no_peel_args) = desubst(d, x, t0, t1, &BTreeSet::new())?;
    let mut peels: BTreeSet<FlagType> = BTreeSet::new();
    for (ty, ad) in &no_peel_args {
        // only ground arguments have their outer marks replayed over the
        // variable; marked bindings of function arguments stay in the
        // intersection so the type chain of the nonterminal repeats
        if ty.raw != RawType::Ground {
            continue;
        }
        if ad.rule == RuleTag::Mark {
            let mut cur = ad.clone();
            while cur.rule == RuleTag::Mark {
                let next = cur.children[0].clone();
                cur = next;
            }
            let peeled = cur.ty.clone();
            let collides = no_peel_args
                .iter()
                .any(|(t, _)| t != ty && *t == peeled)
                || peels.contains(&peeled);
            if !collides {
                peels.insert(ty.clone());
            }
        }
    }
    let (mut d0, mut args) = if peels.is_empty() {
        let (d0, args) = desubst(d, x, t0, t1, &BTreeSet::new())?;
        (d0, args)
    } else {
        desubst(d, x, t0, t1, &peels)?
    };
    if args.is_empty() {
        // unused argument: when it is a tree or a ground variable, type it
        // flagged-unmarked so the abstraction keeps an inhabited intersection
        let unmarked_ground = FlagType::ground(FlagSet::from([0usize]), FlagSet::new());
        let arg_derivation = if let Some(tree) = Tree::from_term(t1) {
            Some(derive_tree_unmarked(&tree, d.level, d.directed)?)
        } else if let TermNode::Var(v) = t1.node() {
            if *binder_ty == SimpleType::Ground {
                Some(mk_var(d.level, d.directed, v, unmarked_ground.clone()))
            } else {
                None
            }
        } else {
            None
        };
        if let Some(ad) = arg_derivation {
            let ty = ad.ty.clone();
            d0 = mk_weak(Rc::new(d0), x.to_string(), ty.clone())?;
            args = vec![(ty, Rc::new(ad))];
        }
    }
    args.sort_by(|(a, _), (b, _)| a.cmp(b));
    let abs = mk_abs_with_subject(Rc::new(d0), x, binder_ty.clone())?;
    let arg_ds: Vec<Rc<Derivation>> = args.into_iter().map(|(_, a)| a).collect();
    let level = d.level;
    let app = mk_app(Rc::new(abs), arg_ds, level, t1.clone())?;
    if app.ty != d.ty || app.counter != d.counter {
        return Err(DerivationError::NotAReduct(format!(
            "beta expansion changed the judgment: {} |> {} vs {} |> {} (redex (\\{}. {}) {})",
            app.ty, app.counter, d.ty, d.counter, x, t0, t1
        )));
    }
    Ok(app)
}

// ---------------------------------------------------------------------------
// Order lifting
// ---------------------------------------------------------------------------

/// Lifts a derivation to level n+1 without adding the new marker: every
/// counter becomes 0 and flag n appears exactly where counters were positive.
pub fn lift_without_mark(d: &Rc<Derivation>) -> Result<Derivation, DerivationError> {
    let level = d.level + 1;
    match d.rule {
        RuleTag::Var => {
            let x = match d.subject.node() {
                TermNode::Var(x) => x.clone(),
                _ => unreachable!(),
            };
            Ok(mk_var(level, d.directed, &x, d.ty.clone()))
        }
        RuleTag::Weak => {
            let (y, ty) = match &d.info {
                RuleInfo::Weak { x, ty } => (x.clone(), ty.clone()),
                _ => unreachable!(),
            };
            mk_weak(Rc::new(lift_without_mark(&d.children[0])?), y, ty)
        }
        RuleTag::Mark => {
            let added = match &d.info {
                RuleInfo::Mark { added } => added.clone(),
                _ => unreachable!(),
            };
            mk_mark(Rc::new(lift_without_mark(&d.children[0])?), added)
        }
        RuleTag::Choice => {
            let side = match &d.info {
                RuleInfo::Choice { side } => *side,
                _ => unreachable!(),
            };
            let other = match d.subject.node() {
                TermNode::Choice(l, r) => {
                    if side == 0 {
                        r.clone()
                    } else {
                        l.clone()
                    }
                }
                _ => unreachable!(),
            };
            mk_choice(Rc::new(lift_without_mark(&d.children[0])?), side, other)
        }
        RuleTag::Abs => {
            let (binder, bty) = match d.subject.node() {
                TermNode::Abs(x, t, _) => (x.clone(), t.clone()),
                _ => unreachable!(),
            };
            mk_abs_with_subject(Rc::new(lift_without_mark(&d.children[0])?), &binder, bty)
        }
        RuleTag::App => {
            let eorder = match &d.info {
                RuleInfo::App { eorder } => *eorder,
                _ => unreachable!(),
            };
            let arg_term = match d.subject.node() {
                TermNode::App(_, a) => a.clone(),
                _ => unreachable!(),
            };
            let fun = Rc::new(lift_without_mark(&d.children[0])?);
            let args = d.children[1..]
                .iter()
                .map(|c| lift_without_mark(c).map(Rc::new))
                .collect::<Result<Vec<_>, _>>()?;
            mk_app(fun, args, eorder, arg_term)
        }
        RuleTag::Const => {
            let terminal = match &d.info {
                RuleInfo::Const { terminal } => terminal.clone(),
                _ => unreachable!(),
            };
            let children = d
                .children
                .iter()
                .map(|c| lift_without_mark(c).map(Rc::new))
                .collect::<Result<Vec<_>, _>>()?;
            mk_const(level, d.directed, &terminal, children)
        }
        RuleTag::Nt => {
            let name = match &d.info {
                RuleInfo::Nt { name } => name.clone(),
                _ => unreachable!(),
            };
            Ok(mk_nt(Rc::new(lift_without_mark(&d.children[0])?), &name))
        }
    }
}

/// Lifts a derivation with positive counter to level n+1, adding marker n;
/// the new counter c satisfies 2^c >= c_old and c > 0.
pub fn increase_order(d: &Rc<Derivation>) -> Result<Derivation, DerivationError> {
    let n = d.level;
    if d.counter == 0 {
        return Err(DerivationError::ZeroCounter);
    }
    // small counters at a nonterminal: lift flag-only and mark the
    // occurrence itself, so the marked type becomes an intersection member
    // at the surrounding application
    if d.counter <= 2 && d.rule == RuleTag::Nt {
        let base = lift_without_mark(d)?;
        return mk_mark(Rc::new(base), FlagSet::from([n]));
    }
    match d.rule {
        RuleTag::Var => Err(DerivationError::ZeroCounter),
        RuleTag::Weak => {
            let (y, ty) = match &d.info {
                RuleInfo::Weak { x, ty } => (x.clone(), ty.clone()),
                _ => unreachable!(),
            };
            mk_weak(Rc::new(increase_order(&d.children[0])?), y, ty)
        }
        RuleTag::Choice => {
            let side = match &d.info {
                RuleInfo::Choice { side } => *side,
                _ => unreachable!(),
            };
            let other = match d.subject.node() {
                TermNode::Choice(l, r) => {
                    if side == 0 {
                        r.clone()
                    } else {
                        l.clone()
                    }
                }
                _ => unreachable!(),
            };
            mk_choice(Rc::new(increase_order(&d.children[0])?), side, other)
        }
        RuleTag::Nt => {
            let name = match &d.info {
                RuleInfo::Nt { name } => name.clone(),
                _ => unreachable!(),
            };
            Ok(mk_nt(Rc::new(increase_order(&d.children[0])?), &name))
        }
        RuleTag::Abs => {
            let (binder, bty) = match d.subject.node() {
                TermNode::Abs(x, t, _) => (x.clone(), t.clone()),
                _ => unreachable!(),
            };
            mk_abs_with_subject(Rc::new(increase_order(&d.children[0])?), &binder, bty)
        }
        RuleTag::Mark => {
            let added = match &d.info {
                RuleInfo::Mark { added } => added.clone(),
                _ => unreachable!(),
            };
            let child = &d.children[0];
            if child.counter == 0 {
                let base = lift_without_mark(child)?;
                let mut marks = added.clone();
                marks.insert(n);
                mk_mark(Rc::new(base), marks)
            } else {
                let lifted = increase_order(child)?;
                mk_mark(Rc::new(lifted), added)
            }
        }
        RuleTag::App | RuleTag::Const => {
            let kids = &d.children;
            let all_zero = kids.iter().all(|c| c.counter == 0);
            let mut new_kids: Vec<Rc<Derivation>> = Vec::new();
            if all_zero {
                // c comes from the composition alone; mark the premise
                // carrying marker n-1
                let j = kids
                    .iter()
                    .position(|c| c.ty.markers.contains(&(n - 1)))
                    .ok_or(DerivationError::RuleViolation(
                        "lift",
                        "no premise carries the top marker".into(),
                    ))?;
                for (i, c) in kids.iter().enumerate() {
                    let lifted = lift_without_mark(c)?;
                    if i == j {
                        new_kids.push(Rc::new(mk_mark(Rc::new(lifted), FlagSet::from([n]))?));
                    } else {
                        new_kids.push(Rc::new(lifted));
                    }
                }
            } else {
                // rightmost maximal counter gets the marker
                let mut j = 0;
                for (i, c) in kids.iter().enumerate() {
                    if c.counter >= kids[j].counter {
                        j = i;
                    }
                }
                for (i, c) in kids.iter().enumerate() {
                    if i == j {
                        new_kids.push(Rc::new(increase_order(c)?));
                    } else {
                        new_kids.push(Rc::new(lift_without_mark(c)?));
                    }
                }
            }
            let rebuilt = match d.rule {
                RuleTag::App => {
                    let eorder = match &d.info {
                        RuleInfo::App { eorder } => *eorder,
                        _ => unreachable!(),
                    };
                    let arg_term = match d.subject.node() {
                        TermNode::App(_, a) => a.clone(),
                        _ => unreachable!(),
                    };
                    mk_app(
                        new_kids[0].clone(),
                        new_kids[1..].to_vec(),
                        eorder,
                        arg_term,
                    )?
                }
                _ => {
                    let terminal = match &d.info {
                        RuleInfo::Const { terminal } => terminal.clone(),
                        _ => unreachable!(),
                    };
                    mk_const(n + 1, d.directed, &terminal, new_kids)?
                }
            };
            if 2u128.saturating_pow(rebuilt.counter.min(127) as u32) < d.counter as u128 {
                return Err(DerivationError::RuleViolation(
                    "lift",
                    "exponential bound violated".into(),
                ));
            }
            Ok(rebuilt)
        }
    }
}

// ---------------------------------------------------------------------------
// Root derivation from a stratified trace
// ---------------------------------------------------------------------------

/// Builds a derivation of the start term with judgment
/// `{} |- t : ({}, {0..n-1}, o) |> c => s` by walking the trace backward:
/// typing of the final tree, subject expansion through each step, and order
/// lifts between the beta blocks.
pub fn build_root_derivation(
    grammar: &Grammar,
    trace: &ReductionTrace,
    target_level: usize,
    directed: bool,
) -> Result<Derivation, DerivationError> {
    let mut d = derive_tree_marked(&trace.result, 1, directed)?;
    let mut level = 1usize;
    for step in trace.steps.iter().rev() {
        let redex = step
            .before
            .subterm_at(&step.pos)
            .ok_or_else(|| DerivationError::NotAReduct("bad step position".into()))?
            .clone();
        match &step.kind {
            StepKind::Choice { side } => {
                let side = *side;
                let rc = Rc::new(d);
                d = expand_at(&rc, &step.pos, &redex, &mut |node| {
                    let other = match redex.node() {
                        TermNode::Choice(l, r) => {
                            if side == 0 {
                                r.clone()
                            } else {
                                l.clone()
                            }
                        }
                        _ => return Err(DerivationError::NotAReduct("not a choice".into())),
                    };
                    mk_choice(node.clone(), side, other)
                })?;
            }
            StepKind::Unfold { nt } => {
                let rc = Rc::new(d);
                d = expand_at(&rc, &step.pos, &redex, &mut |node| {
                    Ok(mk_nt(node.clone(), nt))
                })?;
            }
            StepKind::Beta { order } => {
                while level < *order {
                    d = increase_order(&Rc::new(d))?;
                    level += 1;
                }
                if *order < level {
                    return Err(DerivationError::NotAReduct(format!(
                        "beta of order {} after lifting to level {}",
                        order, level
                    )));
                }
                let (x, bty, t0, t1) = match redex.node() {
                    TermNode::App(f, a) => match f.node() {
                        TermNode::Abs(x, t, b) => {
                            (x.clone(), t.clone(), b.clone(), a.clone())
                        }
                        _ => {
                            return Err(DerivationError::NotAReduct(
                                "beta step without abstraction".into(),
                            ))
                        }
                    },
                    _ => {
                        return Err(DerivationError::NotAReduct(
                            "beta step without application".into(),
                        ))
                    }
                };
                let rc = Rc::new(d);
                d = expand_at(&rc, &step.pos, &redex, &mut |node| {
                    expand_beta_node(node, &x, &bty, &t0, &t1)
                })?;
            }
        }
    }
    while level < target_level {
        d = increase_order(&Rc::new(d))?;
        level += 1;
    }
    let _ = grammar;
    Ok(d)
}

// ---------------------------------------------------------------------------
// Pumpable scan and triple extraction
// ---------------------------------------------------------------------------

/// Rebuilds the output of the derivation with a hole in place of the output
/// contributed by the node at `path` (child indices).
pub fn output_with_hole(d: &Derivation, path: &[usize]) -> Result<Context, DerivationError> {
    let term = build_with_index(d, path);
    Context::new(term).map_err(|e| DerivationError::NotAReduct(e.to_string()))
}

fn build_with_index(d: &Derivation, path: &[usize]) -> Term {
    if path.is_empty() {
        return Term::hole();
    }
    let (i, rest) = (path[0], &path[1..]);
    match d.rule {
        RuleTag::Weak | RuleTag::Mark | RuleTag::Choice | RuleTag::Nt => {
            build_with_index(&d.children[0], rest)
        }
        RuleTag::Abs => {
            let binder = match &d.info {
                RuleInfo::Abs { binder } => binder,
                _ => unreachable!(),
            };
            let mut out = build_with_index(&d.children[0], rest);
            for t in d.children[0].env.types_of(binder).iter().rev() {
                out = Term::abs(output_var(binder, t), t.erased(), out);
            }
            out
        }
        RuleTag::App => {
            let fun = if i == 0 {
                build_with_index(&d.children[0], rest)
            } else {
                d.children[0].output.clone()
            };
            let args = d.children[1..].iter().enumerate().map(|(k, c)| {
                if k + 1 == i {
                    build_with_index(c, rest)
                } else {
                    c.output.clone()
                }
            });
            Term::apps(fun, args)
        }
        RuleTag::Const => {
            let terminal = match &d.info {
                RuleInfo::Const { terminal } => terminal.clone(),
                _ => unreachable!(),
            };
            let args = d.children.iter().enumerate().map(|(k, c)| {
                if k == i {
                    build_with_index(c, rest)
                } else {
                    c.output.clone()
                }
            });
            Term::terminal(terminal, args.collect())
        }
        RuleTag::Var => unreachable!(),
    }
}

pub fn node_at<'a>(d: &'a Derivation, path: &[usize]) -> &'a Derivation {
    let mut cur = d;
    for &i in path {
        cur = &cur.children[i];
    }
    cur
}

/// A pump triple (C, D, t) with its derivation provenance.
#[derive(Clone)]
pub struct PumpTriple {
    pub c: Context,
    pub d: Context,
    pub t: Term,
    pub order: usize,
    pub c1: u64,
    pub c2: u64,
    pub c3: u64,
    pub env: FlagTypeEnv,
    pub nonterminal: Name,
    pub ty: FlagType,
    pub root: Rc<Derivation>,
    pub anc_path: Vec<usize>,
    pub desc_path: Vec<usize>,
}

impl fmt::Debug for PumpTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C = {}\nD = {}\nt = {}\ncosts (c1,c2,c3) = ({},{},{})",
            self.c, self.d, self.t, self.c1, self.c2, self.c3
        )
    }
}

/// Collapses ancestor/descendant nodes carrying identical judgments,
/// keeping the outermost occurrence position (the descendant subtree).
pub fn shrink(d: Rc<Derivation>) -> Rc<Derivation> {
    // find a pair: DFS with a stack of (env, subject-key, ty, counter)
    fn find_pair(
        d: &Derivation,
        path: &mut Vec<usize>,
        stack: &mut Vec<(FlagTypeEnv, String, FlagType, u64, Vec<usize>)>,
    ) -> Option<(Vec<usize>, Vec<usize>)> {
        let key = (
            d.env.clone(),
            d.subject.alpha_key(),
            d.ty.clone(),
            d.counter,
        );
        for (env, sk, ty, c, p) in stack.iter() {
            if *env == key.0 && *sk == key.1 && *ty == key.2 && *c == key.3 {
                return Some((p.clone(), path.clone()));
            }
        }
        stack.push((key.0, key.1, key.2, key.3, path.clone()));
        for (i, c) in d.children.iter().enumerate() {
            path.push(i);
            if let Some(r) = find_pair(c, path, stack) {
                return Some(r);
            }
            path.pop();
        }
        stack.pop();
        None
    }
    let mut cur = d;
    for _ in 0..10_000 {
        let pair = find_pair(&cur, &mut Vec::new(), &mut Vec::new());
        match pair {
            None => break,
            Some((anc, desc)) => {
                let lower = Rc::new(node_at(&cur, &desc).clone());
                match graft(&cur, &anc, lower) {
                    Ok(next) => cur = Rc::new(next),
                    Err(_) => break,
                }
            }
        }
    }
    cur
}

/// Replaces the node at `path` and rebuilds every ancestor, recomputing
/// counters and outputs.
pub fn graft(
    d: &Derivation,
    path: &[usize],
    replacement: Rc<Derivation>,
) -> Result<Derivation, DerivationError> {
    if path.is_empty() {
        return Ok((*replacement).clone());
    }
    let (i, rest) = (path[0], &path[1..]);
    let new_child = Rc::new(graft(&d.children[i], rest, replacement)?);
    let mut children = d.children.clone();
    children[i] = new_child;
    rebuild(d, children)
}

/// Rebuilds a node from replacement children via the rule builders.
fn rebuild(d: &Derivation, children: Vec<Rc<Derivation>>) -> Result<Derivation, DerivationError> {
    match d.rule {
        RuleTag::Var => Ok(d.clone()),
        RuleTag::Weak => match &d.info {
            RuleInfo::Weak { x, ty } => mk_weak(children[0].clone(), x.clone(), ty.clone()),
            _ => unreachable!(),
        },
        RuleTag::Mark => match &d.info {
            RuleInfo::Mark { added } => mk_mark(children[0].clone(), added.clone()),
            _ => unreachable!(),
        },
        RuleTag::Choice => match (&d.info, d.subject.node()) {
            (RuleInfo::Choice { side }, TermNode::Choice(l, r)) => {
                let other = if *side == 0 { r.clone() } else { l.clone() };
                mk_choice(children[0].clone(), *side, other)
            }
            _ => unreachable!(),
        },
        RuleTag::Abs => match (&d.info, d.subject.node()) {
            (RuleInfo::Abs { binder }, TermNode::Abs(_, bty, _)) => {
                mk_abs_with_subject(children[0].clone(), binder, bty.clone())
            }
            _ => unreachable!(),
        },
        RuleTag::App => match (&d.info, d.subject.node()) {
            (RuleInfo::App { eorder }, TermNode::App(_, a)) => mk_app(
                children[0].clone(),
                children[1..].to_vec(),
                *eorder,
                a.clone(),
            ),
            _ => unreachable!(),
        },
        RuleTag::Const => match &d.info {
            RuleInfo::Const { terminal } => {
                mk_const(d.level, d.directed, terminal, children)
            }
            _ => unreachable!(),
        },
        RuleTag::Nt => match &d.info {
            RuleInfo::Nt { name } => Ok(mk_nt(children[0].clone(), name)),
            _ => unreachable!(),
        },
    }
}

/// Scans root-to-leaf paths for two judgments with the same environment,
/// bare-nonterminal subject and type, whose counters satisfy
/// 0 < c_inner < c_outer.  Candidates in deterministic order.
pub fn scan_pumpable_pairs(root: &Derivation) -> Vec<(Vec<usize>, Vec<usize>)> {
    type Entry = (Vec<usize>, String, FlagTypeEnv, FlagType, u64);
    fn walk(
        d: &Derivation,
        path: &mut Vec<usize>,
        stack: &mut Vec<Entry>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        let pushed = if let TermNode::NonTerminal(a) = d.subject.node() {
            for (p, name, env, ty, c) in stack.iter() {
                // the spliced segment must strictly increase the counter;
                // linearity of the cut is checked operationally afterwards
                if name == a && *env == d.env && *ty == d.ty && *c > d.counter {
                    out.push((p.clone(), path.clone()));
                }
            }
            stack.push((
                path.clone(),
                a.clone(),
                d.env.clone(),
                d.ty.clone(),
                d.counter,
            ));
            true
        } else {
            false
        };
        for (i, c) in d.children.iter().enumerate() {
            path.push(i);
            walk(c, path, stack, out);
            path.pop();
        }
        if pushed {
            stack.pop();
        }
    }
    let mut out = Vec::new();
    walk(root, &mut Vec::new(), &mut Vec::new(), &mut out);
    // wait for ancestors with larger counter: recorded as (anc, desc)
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Finding a pumpable derivation
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PumpableError {
    #[error("no pumpable derivation found; largest tree tried had size {0} (finite language or insufficient budget)")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Derivation(#[from] DerivationError),
    #[error(transparent)]
    Reduce(#[from] reduce::ReduceError),
    #[error(transparent)]
    Grammar(#[from] crate::grammar::GrammarError),
}

pub struct PumpableBudget {
    pub size_schedule: Vec<usize>,
    pub enum_steps: usize,
    pub max_candidates: usize,
    pub probe_depth: usize,
    pub fuel: usize,
}

impl Default for PumpableBudget {
    fn default() -> Self {
        PumpableBudget {
            size_schedule: vec![8, 16, 32, 64, 128, 256, 512],
            enum_steps: 300_000,
            max_candidates: 20,
            probe_depth: 4,
            fuel: reduce::DEFAULT_FUEL,
        }
    }
}

fn extract_triple(
    root: Rc<Derivation>,
    anc_path: &[usize],
    desc_path: &[usize],
    order: usize,
) -> Result<PumpTriple, DerivationError> {
    let anc = node_at(&root, anc_path);
    let desc = node_at(&root, desc_path);
    let c_ctx = output_with_hole(&root, anc_path)?;
    let rel = &desc_path[anc_path.len()..];
    let d_ctx = output_with_hole(anc, rel)?;
    let nonterminal = match anc.subject.node() {
        TermNode::NonTerminal(a) => a.clone(),
        _ => String::new(),
    };
    Ok(PumpTriple {
        c: c_ctx,
        d: d_ctx,
        t: desc.output.clone(),
        order,
        c1: desc.counter,
        c2: anc.counter - desc.counter,
        c3: root.counter - anc.counter,
        env: anc.env.clone(),
        nonterminal,
        ty: anc.ty.clone(),
        root: root.clone(),
        anc_path: anc_path.to_vec(),
        desc_path: desc_path.to_vec(),
    })
}

/// Searches candidate trees of growing size for a pumpable derivation and
/// returns the first linear triple.
pub fn find_pumpable(grammar: &Grammar, budget: &PumpableBudget) -> Result<PumpTriple, PumpableError> {
    let n = grammar.order().max(1);
    let mut tried: BTreeSet<Tree> = BTreeSet::new();
    let mut largest = 0usize;
    for &size_cap in &budget.size_schedule {
        let en = grammar.language(size_cap, budget.enum_steps)?;
        let mut candidates: Vec<&Tree> = en.trees.iter().filter(|t| !tried.contains(*t)).collect();
        candidates.sort_by_key(|t| (t.size(), (*t).clone()));
        for pi in candidates.into_iter().take(budget.max_candidates) {
            tried.insert(pi.clone());
            largest = largest.max(pi.size());
            let trace = match reduce::stratified_reduce(
                grammar,
                &grammar.start_term(),
                pi,
                &reduce::StratifiedOptions {
                    fuel: budget.fuel,
                    ..Default::default()
                },
            ) {
                Ok(t) => t,
                Err(_) => continue,
            };
            let d = match build_root_derivation(grammar, &trace, n, false) {
                Ok(d) => d,
                Err(_) => continue,
            };
            let root = shrink(Rc::new(d));
            for (anc, desc) in scan_pumpable_pairs(&root) {
                let triple = extract_triple(root.clone(), &anc, &desc, n)?;
                if reduce::is_linear_pair(&triple.c, &triple.d, budget.probe_depth, budget.fuel)?
                    .is_ok()
                {
                    return Ok(triple);
                }
            }
        }
    }
    Err(PumpableError::BudgetExhausted(largest))
}

/// Splices the D-segment of the triple k times; the result derives
/// C[D^k[t]]-like output with counter c1 + k*c2 + c3.
pub fn pump(triple: &PumpTriple, k: usize) -> Result<Derivation, DerivationError> {
    let anc = node_at(&triple.root, &triple.anc_path);
    let rel: Vec<usize> = triple.desc_path[triple.anc_path.len()..].to_vec();
    let desc = node_at(&triple.root, &triple.desc_path);
    let mut cur = Rc::new(desc.clone());
    for _ in 0..k {
        cur = Rc::new(graft(anc, &rel, cur)?);
    }
    graft(&triple.root, &triple.anc_path, cur)
}

/// Evaluates the output of a root derivation, checking the lower size bound
/// and bounded language membership.
pub fn verify_soundness(
    d: &Derivation,
    grammar: &Grammar,
    fuel: usize,
) -> Result<(Tree, bool), DerivationError> {
    let tree = reduce::tree_of(&d.output, None, fuel)?;
    let bound_ok = d.counter as usize <= tree.size();
    let member = grammar
        .language(tree.size(), 400_000)
        .map(|en| en.trees.contains(&tree))
        .unwrap_or(false);
    Ok((tree, bound_ok && member))
}

/// Path-length variant of the soundness bound, for direction-annotated
/// outputs.
pub fn verify_soundness_directed(d: &Derivation, fuel: usize) -> Result<(Tree, bool), DerivationError> {
    let tree = reduce::tree_of(&d.output, None, fuel)?;
    let ok = d.counter as usize <= crate::directions::plen(&tree);
    Ok((tree, ok))
}

// ---------------------------------------------------------------------------
// Direction-annotated pumpable extraction
// ---------------------------------------------------------------------------

/// Result of the directed extraction: annotated linear contexts G, H, term u
/// and constants p, q with rmd(tree(G[H^k[u]])) = tree(C[D^{pk+q}[t]]).
#[derive(Clone, Debug)]
pub struct DirectedTriple {
    pub g: Context,
    pub h: Context,
    pub u: Term,
    pub p: usize,
    pub q: usize,
}

/// Annotates (C, D, t) with directions, finds a pumpable derivation of the
/// annotated composite targeting a deepest-path tree, and extracts (G, H, u)
/// with the constants.  The correspondence is verified on a checked prefix.
pub fn find_pumpable_directed(
    c: &Context,
    d: &Context,
    t: &Term,
    order: usize,
    budget: &PumpableBudget,
) -> Result<DirectedTriple, PumpableError> {
    use crate::directions::{annotate_term, annotate_tree_deepest, rmd};
    let c_ann = Context::new(annotate_term(c.term())).expect("annotation keeps the hole");
    let d_ann = Context::new(annotate_term(d.term())).expect("annotation keeps the hole");
    let t_ann = annotate_term(t);
    let alphabet = crate::grammar::RankedAlphabet::from_terms([
        c_ann.term(),
        d_ann.term(),
        &t_ann,
    ]);
    let carrier = Grammar::closed(alphabet);

    let mut iterates: Vec<Term> = vec![t_ann.clone()];
    let mut largest = 0usize;
    for k_total in 1..=budget.max_candidates {
        while iterates.len() <= k_total {
            let last = iterates.last().unwrap().clone();
            iterates.push(d_ann.fill(&last));
        }
        let plain = c.fill_iterated(d, k_total, t);
        let pi = match reduce::tree_of(&plain, None, budget.fuel) {
            Ok(p) => p,
            Err(_) => continue,
        };
        largest = largest.max(pi.size());
        let pi_ann = annotate_tree_deepest(&pi);
        let start = c_ann.fill(&iterates[k_total]);
        let trace = match reduce::stratified_reduce(
            &carrier,
            &start,
            &pi_ann,
            &reduce::StratifiedOptions {
                fuel: budget.fuel,
                start_phase: Some(order),
                ..Default::default()
            },
        ) {
            Ok(tr) => tr,
            Err(_) => continue,
        };
        let droot = match build_root_derivation(&carrier, &trace, order, true) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let root = shrink(Rc::new(droot));
        // scan for judgment pairs whose subjects are iterates D'^i[t']
        let pairs = scan_iterate_pairs(&root, &iterates);
        for (anc_path, anc_i, desc_path, desc_i) in pairs {
            let p = anc_i - desc_i;
            if p == 0 {
                continue;
            }
            let q = k_total - p;
            let anc = node_at(&root, &anc_path);
            let desc = node_at(&root, &desc_path);
            let g_ctx = match output_with_hole(&root, &anc_path) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let rel = &desc_path[anc_path.len()..];
            let h_ctx = match output_with_hole(anc, rel) {
                Ok(h) => h,
                Err(_) => continue,
            };
            let u = desc.output.clone();
            // verify the correspondence on a short prefix
            let mut ok = true;
            for k in 1..=2usize {
                let lhs = match reduce::tree_of(&g_ctx.fill_iterated(&h_ctx, k, &u), None, budget.fuel) {
                    Ok(x) => x,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                };
                let rhs = match reduce::tree_of(&c.fill_iterated(d, p * k + q, t), None, budget.fuel)
                {
                    Ok(x) => x,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                };
                if rmd(&lhs) != rhs {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            if reduce::is_linear_pair(&g_ctx, &h_ctx, budget.probe_depth, budget.fuel)?.is_err() {
                continue;
            }
            return Ok(DirectedTriple {
                g: g_ctx,
                h: h_ctx,
                u,
                p,
                q,
            });
        }
    }
    Err(PumpableError::BudgetExhausted(largest))
}

/// Judgment pairs on a path whose subjects are D'^i[t'] iterates with empty
/// environments, equal types and 0 < c_desc < c_anc.
fn scan_iterate_pairs(
    root: &Derivation,
    iterates: &[Term],
) -> Vec<(Vec<usize>, usize, Vec<usize>, usize)> {
    type Entry = (Vec<usize>, usize, FlagType, u64);
    fn iterate_index(t: &Term, iterates: &[Term]) -> Option<usize> {
        iterates.iter().position(|u| u.alpha_eq(t))
    }
    fn walk(
        d: &Derivation,
        iterates: &[Term],
        path: &mut Vec<usize>,
        stack: &mut Vec<Entry>,
        out: &mut Vec<(Vec<usize>, usize, Vec<usize>, usize)>,
    ) {
        let pushed = if d.env.is_empty() {
            if let Some(i) = iterate_index(&d.subject, iterates) {
                for (p, anc_i, ty, c) in stack.iter() {
                    if *ty == d.ty && d.counter > 0 && *c > d.counter && *anc_i > i {
                        out.push((p.clone(), *anc_i, path.clone(), i));
                    }
                }
                stack.push((path.clone(), i, d.ty.clone(), d.counter));
                true
            } else {
                false
            }
        } else {
            false
        };
        for (i, c) in d.children.iter().enumerate() {
            path.push(i);
            walk(c, iterates, path, stack, out);
            path.pop();
        }
        if pushed {
            stack.pop();
        }
    }
    let mut out = Vec::new();
    walk(root, iterates, &mut Vec::new(), &mut Vec::new(), &mut out);
    out.sort();
    out
}
