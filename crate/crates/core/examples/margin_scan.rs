//! Scratch margin scan for the concentration and PSD experiments.

use nalgebra::DMatrix;
use num_traits::ToPrimitive;
use pcl_core::graphcore::sample_null;
use pcl_core::pseudomoments::*;
use pcl_core::rng::trial_seed;

fn main() {
    // --- criterion 4 scale: n=100, d=2, tau=4, omega = n^0.3
    let p = PEParams::with_exponent(100, 0.3, 100, 2, 4).unwrap();
    println!("omega = {} (~{:.4})", p.omega, p.omega.to_f64().unwrap());
    let trials = 100u64;
    let mut ok_e1 = 0;
    let mut ok_size = 0;
    let mut e1_devs = Vec::new();
    let mut size_devs = Vec::new();
    let omega_f = p.omega.to_f64().unwrap();
    for t in 0..trials {
        let g = sample_null(p.n, trial_seed(1, t)).unwrap();
        let table = MomentTable::build(&g, &p, 1).unwrap();
        let e1 = table.e1.to_f64().unwrap();
        let mut sum = 0f64;
        for i in 0..p.n {
            sum += table.moment(1u128 << i).to_f64().unwrap();
        }
        let d1 = (e1 - 1.0).abs();
        let d2 = (sum / omega_f - 1.0).abs();
        e1_devs.push(d1);
        size_devs.push(d2);
        if d1 <= 0.1 {
            ok_e1 += 1;
        }
        if d2 <= 0.1 {
            ok_size += 1;
        }
    }
    e1_devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    size_devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "criterion4 n=100 omega=n^0.3: |E1-1|<=0.1 in {ok_e1}/100, |sum/omega-1|<=0.1 in {ok_size}/100"
    );
    println!(
        "  |E1-1| median {:.4} p90 {:.4}; |size-1| median {:.4} p90 {:.4}",
        e1_devs[50], e1_devs[90], size_devs[50], size_devs[90]
    );

    // --- criterion 5 scale: n=60, d=2, tau=4, omega = n^0.3
    let p = PEParams::with_exponent(60, 0.3, 100, 2, 4).unwrap();
    let omega_f = p.omega.to_f64().unwrap();
    println!("n=60 omega ~{omega_f:.4}, omega^2/n = {:.5}", omega_f * omega_f / 60.0);
    let mut psd_ok = 0;
    let trials5 = 20u64;
    for t in 0..trials5 {
        let g = sample_null(p.n, trial_seed(2, t)).unwrap();
        let m = build_moment_matrix(&g, &p, Backend::Calibrated, MatrixMode::Float).unwrap();
        let mut a = m.to_f64();
        let e1 = a[(0, 0)];
        a /= e1;
        let dim = a.nrows();
        // Cholesky with tolerance shift
        let shifted = &a + DMatrix::identity(dim, dim) * 1e-9;
        let chol_ok = shifted.clone().cholesky().is_some();
        let min_eig = if chol_ok {
            f64::NAN
        } else {
            let eig = a.symmetric_eigenvalues();
            eig.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        if chol_ok {
            psd_ok += 1;
            println!("  seed {t}: PSD (cholesky ok), E1={e1:.4}");
        } else {
            println!("  seed {t}: NOT PSD, min_eig = {min_eig:.3e}, E1={e1:.4}");
        }
    }
    println!("criterion5 psd pass {psd_ok}/{trials5}");

    // singleton block of FK backend at same scale: top eig vs omega^2/n
    let mut ratios = Vec::new();
    for t in 0..10u64 {
        let g = sample_null(p.n, trial_seed(3, t)).unwrap();
        let n = p.n;
        let mut block = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let set = if i == j { vec![i] } else { vec![i, j] };
                block[(i, j)] = evaluate_fk(&set, &g, &p).to_f64().unwrap();
            }
        }
        let eig = block.symmetric_eigenvalues();
        let top = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ratios.push(top / (omega_f * omega_f / 60.0));
    }
    println!("fk singleton top-eig ratios to omega^2/n: {ratios:?}");
}
