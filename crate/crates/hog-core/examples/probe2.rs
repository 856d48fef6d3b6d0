use hog_core::grammar::{parse_grammar, doubling_grammar_text, Grammar, RankedAlphabet};
use hog_core::flagtypes::*;
use hog_core::reduce::*;
use hog_core::directions::{annotate_term, annotate_tree_deepest};
use hog_core::term::Context;

fn main() {
    let g2 = parse_grammar(doubling_grammar_text()).unwrap();
    let triple = find_pumpable(&g2, &PumpableBudget::default()).unwrap();
    let (c, d, t) = (&triple.c, &triple.d, &triple.t);
    let c_ann = Context::new(annotate_term(c.term())).unwrap();
    let d_ann = Context::new(annotate_term(d.term())).unwrap();
    let t_ann = annotate_term(t);
    let plain = c.fill_iterated(d, 1, t);
    let pi = tree_of(&plain, None, 2_000_000).unwrap();
    let pi_ann = annotate_tree_deepest(&pi);
    let start = c_ann.fill(&d_ann.fill(&t_ann));
    let carrier = Grammar::closed(RankedAlphabet::from_terms([c_ann.term(), d_ann.term(), &t_ann]));
    // run the debug stepper
    debug_strategy(&carrier, &start, &pi_ann, 2, 700);
}
