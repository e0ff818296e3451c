//! Labels a synthetic right tree and a synthetic left tree and compares the
//! result with the generator's answer.

use coronary_pcat::geometry::{classify_tree, ClassifyOptions, Side};
use coronary_pcat::phantom::{gen_coronary_tree, TreeSpec, TreeTemplate};

fn main() -> coronary_pcat::Result<()> {
    let opts = ClassifyOptions::default();
    for (side, template) in [(Side::Right, TreeTemplate::LeftDominant), (Side::Left, TreeTemplate::RightDominant)] {
        let (tree, truth) = gen_coronary_tree(&TreeSpec::new(7, side, template))?;
        let c = classify_tree(&tree, &opts)?;
        println!("{side:?} tree, {} centerlines", tree.len());
        for (label, idx) in c.major_branches() {
            println!("  {label}: centerline {idx} ({})", truth.names[idx]);
        }
        println!("  dominance {:?} (truth {:?})", c.dominance, truth.dominance);
        println!("  matches truth: {}", c.labels == truth.labels);
    }
    Ok(())
}
