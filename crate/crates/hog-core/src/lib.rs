//! Higher-order grammar analysis toolkit.
//!
//! Decides language infiniteness constructively via a flag/marker
//! intersection type system, extracts linear pump triples (C, D, t),
//! lowers word generators to frontier generators, decides homeomorphic
//! embedding of tree functions up to order 2, and emits certified
//! strictly-increasing pumping chains with size bounds.

pub mod ty;
pub mod term;
pub mod tree;
pub mod sexp;
pub mod reduce;
pub mod grammar;
pub mod embed;
pub mod directions;
pub mod flagtypes;
pub mod lower;
pub mod pump;

pub use grammar::{parse_grammar, Grammar};
pub use term::{Context, Term, TypeEnv};
pub use tree::Tree;
pub use ty::SimpleType;
