use hog_core::grammar::{parse_grammar, doubling_grammar_text, Grammar, RankedAlphabet};
use hog_core::flagtypes::*;
use hog_core::reduce::*;
use hog_core::directions::{annotate_term, annotate_tree_deepest};
use hog_core::term::Context;
use std::time::Instant;

fn main() {
    let g2 = parse_grammar(doubling_grammar_text()).unwrap();
    let triple = find_pumpable(&g2, &PumpableBudget::default()).unwrap();
    let (c, d, t) = (&triple.c, &triple.d, &triple.t);
    // manual: k_total = 1
    let c_ann = Context::new(annotate_term(c.term())).unwrap();
    let d_ann = Context::new(annotate_term(d.term())).unwrap();
    let t_ann = annotate_term(t);
    let plain = c.fill_iterated(d, 1, t);
    let t0 = Instant::now();
    let pi = tree_of(&plain, None, 2_000_000).unwrap();
    println!("pi size {} ({:?})", pi.size(), t0.elapsed());
    let pi_ann = annotate_tree_deepest(&pi);
    let start = c_ann.fill(&d_ann.fill(&t_ann));
    let carrier = Grammar::closed(RankedAlphabet::from_terms([c_ann.term(), d_ann.term(), &t_ann]));
    let t1 = Instant::now();
    let trace = stratified_reduce(&carrier, &start, &pi_ann,
        &StratifiedOptions { fuel: 500_000, start_phase: Some(2), ..Default::default() });
    match &trace {
        Ok(tr) => println!("trace ok: {} steps ({:?})", tr.steps.len(), t1.elapsed()),
        Err(e) => println!("trace err {:?} ({:?})", e, t1.elapsed()),
    }
    if let Ok(tr) = trace {
        let t2 = Instant::now();
        match build_root_derivation(&carrier, &tr, 2, true) {
            Ok(droot) => println!("build ok: {:?} nodes {} ({:?})", droot, droot.node_count(), t2.elapsed()),
            Err(e) => println!("build err {} ({:?})", e, t2.elapsed()),
        }
    }
}
