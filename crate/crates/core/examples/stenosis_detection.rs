//! Fits the healthy-radius regression to a phantom vessel with one lesion
//! and reports the detected lesion next to the planted one.

use coronary_pcat::phantom::{gen_radius_profile, ProfileSpec};
use coronary_pcat::stenosis::{
    detect_lesions, healthy_radius, optimize_params, stenosis_degree, LesionCriteria, OptimizeOptions, ParamBounds,
};

fn main() -> coronary_pcat::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let (profile, truth) = gen_radius_profile(&ProfileSpec::random_single_lesion(seed))?;
    let fit = optimize_params(&profile, &ParamBounds::default(), &OptimizeOptions::default())?;
    let p = fit.params;
    println!(
        "sigma_x {:.2}, sigma_max {:.2}, sigma_r {:.3}, kappa {:.3}, loss {:.2e}",
        p.sigma_x, p.sigma_max, p.sigma_r, p.kappa, fit.loss
    );
    let rh = healthy_radius(&profile, &p)?.r_h;
    let sd = stenosis_degree(&profile, &rh)?;
    let s = profile.abscissa();
    let planted = &truth.lesions[0];
    let (a, b) = planted.sd10.unwrap_or_default();
    println!("planted: {a:.1}-{b:.1} mm, max SD {:.3}", planted.max_sd);
    for iv in detect_lesions(&sd, &profile, &LesionCriteria::default()) {
        println!("found:   {:.1}-{:.1} mm, max SD {:.3}", s[iv.start], s[iv.end], sd.sd[iv.peak]);
    }
    Ok(())
}
