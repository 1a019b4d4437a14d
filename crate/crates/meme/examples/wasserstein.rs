//! The 2-Wasserstein distance between diagonal Gaussians: closed form vs a
//! full-covariance matrix oracle, plus the metric axioms on random triples.
//!
//! Run with: cargo run --example wasserstein

use meme::distributions::{w2_gaussian_diag, DiagGaussian};
use meme::linalg::w2_gaussian_full;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_gauss(rng: &mut ChaCha20Rng, d: usize) -> DiagGaussian {
    let mean = Array1::from_shape_fn(d, |_| rng.gen::<f64>() * 4.0 - 2.0);
    let scale = Array1::from_shape_fn(d, |_| rng.gen::<f64>() * 2.0 + 0.1);
    DiagGaussian::new(mean, scale).unwrap()
}

fn main() -> Result<(), meme::MemeError> {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let d = 5;

    let a = random_gauss(&mut rng, d);
    let b = random_gauss(&mut rng, d);
    let closed = w2_gaussian_diag(&a, &b)?;
    let full = w2_gaussian_full(
        &a.mean,
        &Array2::from_diag(&a.scale.mapv(|s| s * s)),
        &b.mean,
        &Array2::from_diag(&b.scale.mapv(|s| s * s)),
    );
    println!("closed form d² = {closed:.12}");
    println!("matrix oracle d² = {full:.12}");
    println!("difference     = {:.3e}", (closed - full).abs());

    // metric axioms on random triples (on d = sqrt of the squared distance)
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, y, z) = (
            random_gauss(&mut rng, d),
            random_gauss(&mut rng, d),
            random_gauss(&mut rng, d),
        );
        let dxy = w2_gaussian_diag(&x, &y)?.sqrt();
        let dyx = w2_gaussian_diag(&y, &x)?.sqrt();
        let dxz = w2_gaussian_diag(&x, &z)?.sqrt();
        let dzy = w2_gaussian_diag(&z, &y)?.sqrt();
        assert!((dxy - dyx).abs() < 1e-12, "symmetry");
        assert!(w2_gaussian_diag(&x, &x)? < 1e-18, "identity");
        worst = worst.max(dxy - (dxz + dzy));
    }
    println!("worst triangle-inequality slack over 1000 triples: {worst:.3e} (≤ 0 holds)");
    Ok(())
}
