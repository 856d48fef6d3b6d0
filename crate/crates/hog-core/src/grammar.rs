//! Higher-order grammars: representation, text format, equation view and
//! language enumeration.

use crate::reduce::{self, Enumeration, ReduceError};
use crate::term::{type_check, Name, Signature, Term, TermNode, TypeEnv, TypeError};
use crate::tree::{remove_eps, word_of, Tree};
use crate::ty::SimpleType;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// A ranked alphabet: terminal names with arities.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RankedAlphabet {
    pub arities: BTreeMap<Name, usize>,
}

impl RankedAlphabet {
    pub fn arity(&self, a: &str) -> Option<usize> {
        self.arities.get(a).copied()
    }

    /// Collects terminal arities from term occurrences.
    pub fn from_terms<'a>(terms: impl IntoIterator<Item = &'a Term>) -> RankedAlphabet {
        fn go(t: &Term, out: &mut RankedAlphabet) {
            match t.node() {
                TermNode::Terminal(a, args) => {
                    out.arities.insert(a.clone(), args.len());
                    args.iter().for_each(|u| go(u, out));
                }
                TermNode::App(f, a) => {
                    go(f, out);
                    go(a, out);
                }
                TermNode::Abs(_, _, b) => go(b, out),
                TermNode::Choice(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                _ => {}
            }
        }
        let mut out = RankedAlphabet::default();
        for t in terms {
            go(t, &mut out);
        }
        out
    }

    /// Contains nullary `e`, all other terminals unary.
    pub fn is_word_alphabet(&self) -> bool {
        self.arities.get("e") == Some(&0)
            && self
                .arities
                .iter()
                .all(|(a, k)| if a == "e" { *k == 0 } else { *k == 1 })
    }

    /// Contains binary `br`, nullary `e`, all other terminals nullary.
    pub fn is_br_alphabet(&self) -> bool {
        self.arities.get("br") == Some(&2)
            && self.arities.get("e") == Some(&0)
            && self
                .arities
                .iter()
                .all(|(a, k)| match a.as_str() {
                    "br" => *k == 2,
                    _ => *k == 0,
                })
    }
}

/// One rewriting rule `A x1 ... xl -> body` with an applicative body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub nonterminal: Name,
    pub binders: Vec<Name>,
    pub body: Term,
}

#[derive(Clone, Debug, Default)]
pub struct Grammar {
    pub alphabet: RankedAlphabet,
    pub nonterminals: BTreeMap<Name, SimpleType>,
    pub rules: Vec<Rule>,
    pub start: Name,
    equations: BTreeMap<Name, Term>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error at line {0}: {1}")]
    Syntax(usize, String),
    #[error("type error in rule for {0} (line {1}): {2}")]
    RuleType(Name, usize, TypeError),
    #[error("start symbol {0} is undeclared")]
    UndeclaredStart(Name),
    #[error("start symbol {0} must have ground type")]
    StartNotGround(Name),
    #[error("rule mentions undeclared nonterminal {0}")]
    UndeclaredNonterminal(Name),
    #[error("rule for {0} has {1} binders but the type admits {2}")]
    BinderCount(Name, usize, usize),
    #[error("nonterminal {0} has no rules")]
    MissingRules(Name),
    #[error("reserved name {0} (names with '$', '<' or '.' are internal)")]
    ReservedName(Name),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

impl Signature for Grammar {
    fn terminal_arity(&self, a: &str) -> Option<usize> {
        self.alphabet.arity(a)
    }
    fn nonterminal_type(&self, a: &str) -> Option<&SimpleType> {
        self.nonterminals.get(a)
    }
}

impl Grammar {
    /// A rule-less carrier for reducing closed terms over an alphabet.
    pub fn closed(alphabet: RankedAlphabet) -> Grammar {
        Grammar {
            alphabet,
            nonterminals: BTreeMap::new(),
            rules: Vec::new(),
            start: String::new(),
            equations: BTreeMap::new(),
        }
    }

    pub fn new(
        alphabet: RankedAlphabet,
        nonterminals: BTreeMap<Name, SimpleType>,
        rules: Vec<Rule>,
        start: Name,
    ) -> Result<Grammar, GrammarError> {
        let mut g = Grammar {
            alphabet,
            nonterminals,
            rules,
            start,
            equations: BTreeMap::new(),
        };
        g.validate()?;
        g.equations = g.build_equations();
        Ok(g)
    }

    fn validate(&self) -> Result<(), GrammarError> {
        let start_ty = self
            .nonterminals
            .get(&self.start)
            .ok_or_else(|| GrammarError::UndeclaredStart(self.start.clone()))?;
        if !start_ty.is_ground() {
            return Err(GrammarError::StartNotGround(self.start.clone()));
        }
        for (i, rule) in self.rules.iter().enumerate() {
            let ty = self
                .nonterminals
                .get(&rule.nonterminal)
                .ok_or_else(|| GrammarError::UndeclaredNonterminal(rule.nonterminal.clone()))?;
            let (args, _) = ty.uncurry();
            if rule.binders.len() != args.len() {
                return Err(GrammarError::BinderCount(
                    rule.nonterminal.clone(),
                    rule.binders.len(),
                    args.len(),
                ));
            }
            let env = TypeEnv::from_pairs(
                rule.binders
                    .iter()
                    .cloned()
                    .zip(args.iter().map(|t| (*t).clone())),
            );
            match type_check(self, &env, &rule.body) {
                Ok(t) if t.is_ground() => {}
                Ok(t) => {
                    return Err(GrammarError::RuleType(
                        rule.nonterminal.clone(),
                        i,
                        TypeError::ApplicationMismatch(t, SimpleType::Ground),
                    ))
                }
                Err(e) => return Err(GrammarError::RuleType(rule.nonterminal.clone(), i, e)),
            }
        }
        Ok(())
    }

    /// The largest order among nonterminal types.
    pub fn order(&self) -> usize {
        self.nonterminals
            .values()
            .map(SimpleType::order)
            .max()
            .unwrap_or(0)
    }

    fn build_equations(&self) -> BTreeMap<Name, Term> {
        let mut eqs = BTreeMap::new();
        for (name, ty) in &self.nonterminals {
            let rules: Vec<&Rule> = self
                .rules
                .iter()
                .filter(|r| &r.nonterminal == name)
                .collect();
            if rules.is_empty() {
                continue;
            }
            let (args, _) = ty.uncurry();
            // unify binder names across alternatives
            let binders: Vec<Name> = rules[0].binders.clone();
            let mut alts: Vec<Term> = Vec::new();
            for r in &rules {
                let mut body = r.body.clone();
                for (old, new) in r.binders.iter().zip(&binders) {
                    if old != new {
                        body = body.subst(old, &Term::var(new.clone()));
                    }
                }
                alts.push(body);
            }
            // right-nested choice of the alternatives
            let body = alts
                .into_iter()
                .rev()
                .reduce(|acc, t| Term::choice(t, acc))
                .unwrap();
            let eq = binders
                .iter()
                .zip(args.iter())
                .rev()
                .fold(body, |acc, (x, ty)| {
                    Term::abs(x.clone(), (*ty).clone(), acc)
                });
            eqs.insert(name.clone(), eq);
        }
        eqs
    }

    /// The single-equation view `A = \x1...xk. (t1 + ... + tp)`.
    pub fn equation(&self, nt: &str) -> Option<&Term> {
        self.equations.get(nt)
    }

    /// Per-nonterminal equations; errors if some nonterminal has no rules.
    pub fn as_equations(&self) -> Result<BTreeMap<Name, Term>, GrammarError> {
        for name in self.nonterminals.keys() {
            if !self.equations.contains_key(name) {
                return Err(GrammarError::MissingRules(name.clone()));
            }
        }
        Ok(self.equations.clone())
    }

    pub fn start_term(&self) -> Term {
        Term::nonterminal(self.start.clone())
    }

    /// All trees reachable from the start symbol within the budgets.
    pub fn language(
        &self,
        max_tree_size: usize,
        max_steps: usize,
    ) -> Result<Enumeration, GrammarError> {
        Ok(reduce::enumerate_language(
            &self.start_term(),
            Some(self),
            max_tree_size,
            max_steps,
        )?)
    }

    /// Frontier words with the bare-e tree mapped to the empty word.
    /// Requires a br-alphabet.
    pub fn frontier_language_eps(
        &self,
        max_tree_size: usize,
        max_steps: usize,
    ) -> Result<(Vec<Vec<String>>, bool), GrammarError> {
        if !self.alphabet.is_br_alphabet() {
            return Err(GrammarError::Syntax(0, "not a br-alphabet".into()));
        }
        let en = self.language(max_tree_size, max_steps)?;
        let mut words: Vec<Vec<String>> = Vec::new();
        for t in &en.trees {
            let leaves = t.leaves();
            let w = if leaves == vec!["e".to_string()] {
                Vec::new()
            } else {
                remove_eps(&leaves, "e")
            };
            if !words.contains(&w) {
                words.push(w);
            }
        }
        words.sort();
        Ok((words, en.truncated))
    }

    /// The word language of a word grammar, within budgets.
    pub fn word_language(
        &self,
        max_tree_size: usize,
        max_steps: usize,
    ) -> Result<(Vec<Vec<String>>, bool), GrammarError> {
        let en = self.language(max_tree_size, max_steps)?;
        let mut words = Vec::new();
        for t in &en.trees {
            let w = word_of(t).map_err(|_| GrammarError::Syntax(0, "not word-shaped".into()))?;
            if !words.contains(&w) {
                words.push(w);
            }
        }
        words.sort();
        Ok((words, en.truncated))
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, k) in &self.alphabet.arities {
            writeln!(f, "terminal {} {}.", a, k)?;
        }
        for (n, ty) in &self.nonterminals {
            writeln!(f, "nonterminal {} : {}.", n, format_type(ty))?;
        }
        for r in &self.rules {
            write!(f, "{}", r.nonterminal)?;
            for b in &r.binders {
                write!(f, " {}", b)?;
            }
            writeln!(f, " -> {}.", format_rule_term(&r.body))?;
        }
        writeln!(f, "start {}.", self.start)
    }
}

fn format_type(t: &SimpleType) -> String {
    match t {
        SimpleType::Ground => "o".into(),
        SimpleType::Arrow(d, c) => {
            let ds = match d.as_ref() {
                SimpleType::Ground => "o".into(),
                other => format!("({})", format_type(other)),
            };
            format!("{} -> {}", ds, format_type(c))
        }
    }
}

fn format_rule_term(t: &Term) -> String {
    fn atom(t: &Term) -> String {
        match t.node() {
            TermNode::Var(x) => x.clone(),
            TermNode::NonTerminal(a) => a.clone(),
            TermNode::Terminal(a, args) if args.is_empty() => a.clone(),
            _ => format!("({})", format_rule_term(t)),
        }
    }
    match t.node() {
        TermNode::Terminal(a, args) => {
            let mut s = a.clone();
            for u in args {
                s.push(' ');
                s.push_str(&atom(u));
            }
            s
        }
        TermNode::App(f, a) => format!("{} {}", format_rule_term(f), atom(a)),
        _ => atom(t),
    }
}

/// Parses the line-oriented grammar format:
/// ```text
/// terminal a 2. terminal e 0.
/// nonterminal S : o.  nonterminal A : o -> o.
/// S -> A e.
/// A x -> a x x.
/// start S.
/// ```
/// `#` comments run to end of line; whitespace is insignificant;
/// `->` in types is right-associative; application left-associative.
pub fn parse_grammar(input: &str) -> Result<Grammar, GrammarError> {
    // strip comments, keep line numbers per statement
    let mut cleaned = String::new();
    for line in input.lines() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        cleaned.push_str(line);
        cleaned.push('\n');
    }
    let mut alphabet = RankedAlphabet::default();
    let mut nonterminals: BTreeMap<Name, SimpleType> = BTreeMap::new();
    let mut raw_rules: Vec<(usize, Vec<String>)> = Vec::new(); // tokenized rule statements
    let mut start: Option<Name> = None;

    // statements are '.'-terminated
    for (stmt_no, stmt) in cleaned.split('.').enumerate() {
        let toks = tokenize_stmt(stmt);
        if toks.is_empty() {
            continue;
        }
        match toks[0].as_str() {
            "terminal" => {
                if toks.len() != 3 {
                    return Err(GrammarError::Syntax(stmt_no, "expected: terminal NAME ARITY".into()));
                }
                let arity: usize = toks[2]
                    .parse()
                    .map_err(|_| GrammarError::Syntax(stmt_no, "bad arity".into()))?;
                check_name(&toks[1])?;
                alphabet.arities.insert(toks[1].clone(), arity);
            }
            "nonterminal" => {
                if toks.len() < 4 || toks[2] != ":" {
                    return Err(GrammarError::Syntax(
                        stmt_no,
                        "expected: nonterminal NAME : TYPE".into(),
                    ));
                }
                check_name(&toks[1])?;
                let ty = parse_type_tokens(&toks[3..])
                    .ok_or_else(|| GrammarError::Syntax(stmt_no, "bad type".into()))?;
                nonterminals.insert(toks[1].clone(), ty);
            }
            "start" => {
                if toks.len() != 2 {
                    return Err(GrammarError::Syntax(stmt_no, "expected: start NAME".into()));
                }
                start = Some(toks[1].clone());
            }
            _ => raw_rules.push((stmt_no, toks)),
        }
    }
    let start = start.ok_or(GrammarError::Syntax(0, "missing start declaration".into()))?;

    let mut rules = Vec::new();
    for (stmt_no, toks) in raw_rules {
        let arrow = toks
            .iter()
            .position(|t| t == "->")
            .ok_or_else(|| GrammarError::Syntax(stmt_no, "rule needs ->".into()))?;
        if arrow == 0 {
            return Err(GrammarError::Syntax(stmt_no, "rule needs a nonterminal".into()));
        }
        let nonterminal = toks[0].clone();
        let binders: Vec<Name> = toks[1..arrow].to_vec();
        let body = parse_applicative(
            &toks[arrow + 1..],
            &alphabet,
            &nonterminals,
            &binders,
            stmt_no,
        )?;
        rules.push(Rule {
            nonterminal,
            binders,
            body,
        });
    }
    Grammar::new(alphabet, nonterminals, rules, start)
}

fn check_name(name: &str) -> Result<(), GrammarError> {
    // '$'-, '<'- and '.'-carrying names are reserved for generated alphabets
    if name.contains('$') || name.contains('<') || name.contains('.') {
        return Err(GrammarError::ReservedName(name.to_string()));
    }
    Ok(())
}

fn tokenize_stmt(stmt: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    let mut chars = stmt.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' | ')' | ':' | '+' => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push(c.to_string());
            }
            '-' if chars.peek() == Some(&'>') => {
                chars.next();
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push("->".into());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

/// Right-associative arrow types over `o` with parentheses.
fn parse_type_tokens(toks: &[String]) -> Option<SimpleType> {
    fn parse(toks: &[String], i: &mut usize) -> Option<SimpleType> {
        let lhs = parse_atom(toks, i)?;
        if *i < toks.len() && toks[*i] == "->" {
            *i += 1;
            let rhs = parse(toks, i)?;
            Some(SimpleType::arrow(lhs, rhs))
        } else {
            Some(lhs)
        }
    }
    fn parse_atom(toks: &[String], i: &mut usize) -> Option<SimpleType> {
        match toks.get(*i)?.as_str() {
            "o" => {
                *i += 1;
                Some(SimpleType::Ground)
            }
            "(" => {
                *i += 1;
                let t = parse(toks, i)?;
                if toks.get(*i)? != ")" {
                    return None;
                }
                *i += 1;
                Some(t)
            }
            _ => None,
        }
    }
    let mut i = 0;
    let t = parse(toks, &mut i)?;
    if i == toks.len() {
        Some(t)
    } else {
        None
    }
}

/// Applicative rule bodies with `+` at ground level, application
/// left-associative, terminals applied to their full arity.
fn parse_applicative(
    toks: &[String],
    alphabet: &RankedAlphabet,
    nonterminals: &BTreeMap<Name, SimpleType>,
    binders: &[Name],
    line: usize,
) -> Result<Term, GrammarError> {
    fn parse_choice(
        toks: &[String],
        i: &mut usize,
        ctx: &Ctx,
    ) -> Result<Term, GrammarError> {
        let lhs = parse_app(toks, i, ctx)?;
        if *i < toks.len() && toks[*i] == "+" {
            *i += 1;
            let rhs = parse_choice(toks, i, ctx)?;
            Ok(Term::choice(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }
    fn parse_app(toks: &[String], i: &mut usize, ctx: &Ctx) -> Result<Term, GrammarError> {
        let mut t = parse_atom(toks, i, ctx)?;
        while *i < toks.len() && toks[*i] != ")" && toks[*i] != "+" {
            let arg = parse_atom(toks, i, ctx)?;
            t = apply(t, arg, ctx)?;
        }
        Ok(t)
    }
    // terminals collect arguments until their arity is reached
    fn apply(f: Term, arg: Term, ctx: &Ctx) -> Result<Term, GrammarError> {
        match f.node() {
            TermNode::Terminal(a, args) => {
                let k = ctx.alphabet.arity(a).unwrap();
                if args.len() >= k {
                    return Err(GrammarError::Syntax(
                        ctx.line,
                        format!("terminal {} over-applied", a),
                    ));
                }
                let mut args = args.clone();
                args.push(arg);
                Ok(Term::terminal(a.clone(), args))
            }
            _ => Ok(Term::app(f, arg)),
        }
    }
    fn parse_atom(toks: &[String], i: &mut usize, ctx: &Ctx) -> Result<Term, GrammarError> {
        let tok = toks
            .get(*i)
            .ok_or_else(|| GrammarError::Syntax(ctx.line, "unexpected end of rule".into()))?;
        match tok.as_str() {
            "(" => {
                *i += 1;
                let t = parse_choice(toks, i, ctx)?;
                match toks.get(*i) {
                    Some(t2) if t2 == ")" => {
                        *i += 1;
                        Ok(t)
                    }
                    _ => Err(GrammarError::Syntax(ctx.line, "missing )".into())),
                }
            }
            name => {
                *i += 1;
                if ctx.alphabet.arity(name).is_some() {
                    Ok(Term::terminal(name.to_string(), vec![]))
                } else if ctx.binders.contains(&name.to_string()) {
                    Ok(Term::var(name.to_string()))
                } else if ctx.nonterminals.contains_key(name) {
                    Ok(Term::nonterminal(name.to_string()))
                } else {
                    Err(GrammarError::Syntax(
                        ctx.line,
                        format!("unknown name {}", name),
                    ))
                }
            }
        }
    }
    struct Ctx<'a> {
        alphabet: &'a RankedAlphabet,
        nonterminals: &'a BTreeMap<Name, SimpleType>,
        binders: &'a [Name],
        line: usize,
    }
    let ctx = Ctx {
        alphabet,
        nonterminals,
        binders,
        line,
    };
    let mut i = 0;
    let t = parse_choice(toks, &mut i, &ctx)?;
    if i != toks.len() {
        return Err(GrammarError::Syntax(line, "trailing tokens in rule".into()));
    }
    Ok(t)
}

/// The second-order doubling grammar used throughout the tests:
/// S -> R A;  R f -> f e | R (T f);  A x -> a x x;  T f x -> f (f x).
pub fn doubling_grammar_text() -> &'static str {
    "terminal a 2. terminal e 0.\n\
     nonterminal S : o. nonterminal R : (o -> o) -> o.\n\
     nonterminal A : o -> o. nonterminal T : (o -> o) -> o -> o.\n\
     S -> R A.\n\
     R f -> f e.\n\
     R f -> R (T f).\n\
     A x -> a x x.\n\
     T f x -> f (f x).\n\
     start S.\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree;

    #[test]
    fn parse_doubling_grammar() {
        let g = parse_grammar(doubling_grammar_text()).unwrap();
        assert_eq!(g.order(), 2);
        assert_eq!(g.rules.len(), 5);
        let eq = g.equation("R").unwrap();
        // R = \f. (f e + R (T f))
        assert!(eq.has_choice());
        assert_eq!(eq.to_string(), "\\f:o -> o. f e + R (T f)");
    }

    #[test]
    fn start_must_be_ground() {
        let bad = "terminal e 0. nonterminal S : o -> o. S x -> e. start S.";
        assert!(matches!(
            parse_grammar(bad),
            Err(GrammarError::StartNotGround(_))
        ));
    }

    #[test]
    fn empty_rules_accepted_language_empty() {
        let g = parse_grammar("terminal e 0. nonterminal S : o. start S.").unwrap();
        let en = g.language(100, 1000).unwrap();
        assert!(en.trees.is_empty());
        assert!(matches!(
            g.as_equations(),
            Err(GrammarError::MissingRules(_))
        ));
    }

    #[test]
    fn doubling_language_prefix() {
        let g = parse_grammar(doubling_grammar_text()).unwrap();
        let en = g.language(32, 100_000).unwrap();
        let pi1 = tree!("a", tree!("e"), tree!("e"));
        let pi2 = tree!("a", pi1.clone(), pi1.clone());
        let pi3 = tree!("a", pi2.clone(), pi2.clone());
        let pi4 = tree!("a", pi3.clone(), pi3.clone());
        assert!(en.trees.contains(&pi1));
        assert!(en.trees.contains(&pi2));
        assert!(en.trees.contains(&pi4));
        assert_eq!(en.trees.len(), 3);
    }

    #[test]
    fn word_grammar_astar() {
        let g = parse_grammar(
            "terminal u 1. terminal e 0.\n\
             nonterminal S : o.\n\
             S -> e.\n\
             S -> u S.\n\
             start S.",
        )
        .unwrap();
        assert!(g.alphabet.is_word_alphabet());
        let (words, _) = g.word_language(5, 10_000).unwrap();
        assert!(words.contains(&vec![]));
        assert!(words.contains(&vec!["u".to_string()]));
        assert!(words.contains(&vec!["u".to_string(), "u".into()]));
    }

    #[test]
    fn frontier_eps() {
        // grammar generating only the tree e: frontier language is { ε }
        let g = parse_grammar(
            "terminal br 2. terminal e 0.\n\
             nonterminal S : o.\n\
             S -> e.\n\
             start S.",
        )
        .unwrap();
        let (words, _) = g.frontier_language_eps(100, 1000).unwrap();
        assert_eq!(words, vec![Vec::<String>::new()]);
    }

    #[test]
    fn frontier_eps_mixed() {
        // generating {e, br a e} -> {ε, "a"}
        let g = parse_grammar(
            "terminal br 2. terminal e 0. terminal a 0.\n\
             nonterminal S : o.\n\
             S -> e.\n\
             S -> br a e.\n\
             start S.",
        )
        .unwrap();
        let (words, _) = g.frontier_language_eps(100, 1000).unwrap();
        assert_eq!(
            words,
            vec![Vec::<String>::new(), vec!["a".to_string()]]
        );
    }

    #[test]
    fn equation_language_agrees_with_grammar_language() {
        let g = parse_grammar(doubling_grammar_text()).unwrap();
        let en1 = g.language(10, 100_000).unwrap();
        let en2 =
            reduce::enumerate_language(&g.start_term(), Some(&g), 10, 100_000).unwrap();
        assert_eq!(en1.trees, en2.trees);
    }
}
