//! Compares two groups: normality check first, then t test or Mann-Whitney.

use coronary_pcat::stats::{compare_groups, mann_whitney_u, shapiro_wilk, students_t};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

fn main() -> coronary_pcat::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(-80.0, 8.0).unwrap();
    let a: Vec<f64> = (0..40).map(|_| normal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..40).map(|_| normal.sample(&mut rng) + 5.0).collect();
    let skew = Exp::new(0.1).unwrap();
    let c: Vec<f64> = (0..40).map(|_| -90.0 + skew.sample(&mut rng)).collect();

    println!("Shapiro-Wilk a: {:?}", shapiro_wilk(&a)?);
    println!("t test a vs b: {:?}", students_t(&a, &b)?);
    println!("Mann-Whitney a vs b: {:?}", mann_whitney_u(&a, &b)?);
    println!("a vs b: {:?}", compare_groups(&a, &b, 0.05)?.test);
    println!("a vs c: {:?}", compare_groups(&a, &c, 0.05)?.test);
    Ok(())
}
