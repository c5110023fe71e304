//! Scratch probe: where does the desk-scale PSD failure come from?

use nalgebra::DMatrix;
use pcl_core::graphcore::sample_null;
use pcl_core::pseudomoments::*;
use pcl_core::rng::trial_seed;

fn mineig_normalized(m: &MomentMatrix) -> f64 {
    let mut a = m.to_f64();
    let e1 = a[(0, 0)];
    a /= e1;
    a.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn main() {
    for (alpha, tau) in [(0.3, 4), (0.2, 4), (0.1, 4), (0.3, 5)] {
        let p = PEParams::with_exponent(60, alpha, 100, 2, tau).unwrap();
        let mut mins = Vec::new();
        for t in 0..6u64 {
            let g = sample_null(60, trial_seed(9, t)).unwrap();
            let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Float).unwrap();
            mins.push(mineig_normalized(&m));
        }
        println!("calibrated alpha={alpha} tau={tau}: mineigs {mins:?}");
    }
    // FK backend at d=2
    for alpha in [0.3, 0.2] {
        let p = PEParams::with_exponent(60, alpha, 100, 2, 4).unwrap();
        let mut mins = Vec::new();
        for t in 0..6u64 {
            let g = sample_null(60, trial_seed(9, t)).unwrap();
            let m = build_moment_matrix(&g, &p, Backend::Fk, MatrixMode::Float).unwrap();
            mins.push(mineig_normalized(&m));
        }
        println!("fk         alpha={alpha}: mineigs {mins:?}");
    }
    // d=1 sub-block only (1 + n dims) at the criterion-5 parameters
    let p = PEParams::with_exponent(60, 0.3, 100, 1, 4).unwrap();
    let mut mins = Vec::new();
    for t in 0..6u64 {
        let g = sample_null(60, trial_seed(9, t)).unwrap();
        let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Float).unwrap();
        mins.push(mineig_normalized(&m));
    }
    println!("calibrated d=1 block:      mineigs {mins:?}");
    // pair-diagonal magnitude reference
    let theta: f64 = 3.42 / 60.0;
    println!("reference: theta={theta:.4}, 2 theta^2 = {:.3e}", 2.0 * theta * theta);

    // larger n at fixed alpha: does the violation shrink?
    for n in [40usize, 60, 80, 100] {
        let p = PEParams::with_exponent(n, 0.3, 100, 2, 4).unwrap();
        let g = sample_null(n, trial_seed(10, n as u64)).unwrap();
        let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Float).unwrap();
        let me = mineig_normalized(&m);
        let d = DMatrix::<f64>::zeros(1, 1);
        let _ = d;
        println!("n={n}: mineig {me:.3e}");
    }
}
