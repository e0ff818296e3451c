//! Generates one synthetic case and prints its ground truth.

use coronary_pcat::geometry::Side;
use coronary_pcat::phantom::{gen_case, CaseSpec, TreeTemplate};

fn main() -> coronary_pcat::Result<()> {
    let case = gen_case(&CaseSpec::new(21, Side::Right, TreeTemplate::Codominant))?;
    let t = &case.truth;
    println!("{} centerlines: {:?}", case.tree.len(), t.tree.names);
    println!("volume {:?} voxels, lumen voxels {}", case.volume.grid.dims, case.lumen.count());
    println!("expected FAI {:.2} HU", t.expected_fai.unwrap_or(f64::NAN));
    for l in &t.lesions {
        println!(
            "{} lesion at {:.1} mm, depth {:.2}, width {:.1} mm, vFFR {:.3?}",
            l.branch, l.lesion.center_mm, l.lesion.depth, l.lesion.width_mm, l.functional.vffr
        );
    }
    Ok(())
}
