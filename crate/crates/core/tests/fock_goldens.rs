//! Stored number-basis exponents against the closed-form Gaussian engine.
//! The data file comes from the gen_fock_goldens example, which never
//! touches the closed forms; agreement here is a genuine cross-check.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use subray::chernoff::qcb_general;
use subray::cov::{BasisTag, CovMatrix};
use subray::fock::{mode_rotation_fock, qcb_fock, read_goldens_csv, two_mode_thermal, uniform_s_grid};

fn mode_cov(entries: DMatrix<f64>) -> CovMatrix {
    CovMatrix {
        i0: entries.trace(),
        basis: BasisTag::HermiteGauss {
            pairs: vec![(1, 0), (0, 1)],
        },
        psd_slack: 0.0,
        chi: None,
        entries,
    }
}

fn golden_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fock_goldens.csv")
}

#[test]
fn goldens_match_the_gaussian_engine() {
    let rows = read_goldens_csv(&golden_path()).unwrap();
    assert_eq!(rows.len(), 20, "family size changed; regenerate the goldens");
    let mut worst = 0.0_f64;
    for row in &rows {
        let d = DVector::from_row_slice(&[row.mean1, row.mean2]);
        let g1 = DMatrix::from_diagonal(&d);
        let (sin, cos) = row.angle.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[cos, -sin, sin, cos]);
        let g2 = &r * &g1 * r.transpose();
        let res = qcb_general(&mode_cov(g1), &mode_cov(g2)).unwrap();
        let dev = (res.exponent - row.exponent).abs();
        worst = worst.max(dev);
        assert!(
            dev <= 1e-5,
            "means ({}, {}) angle {}: closed {} vs golden {}",
            row.mean1,
            row.mean2,
            row.angle,
            res.exponent,
            row.exponent
        );
    }
    eprintln!("worst |closed - golden| = {worst:.3e}");
}

#[test]
fn goldens_file_is_current() {
    // recompute one anisotropic row end to end so a stale or hand-edited
    // data file cannot pass silently
    let rows = read_goldens_csv(&golden_path()).unwrap();
    let row = rows
        .iter()
        .find(|r| r.angle == 0.7 && r.mean1 == 0.3)
        .expect("expected family member missing");
    let rho1 = two_mode_thermal(row.mean1, row.mean2, row.cutoff).unwrap();
    let u = mode_rotation_fock(row.angle, row.cutoff);
    let rho2 = &u * &rho1 * u.transpose();
    let (exponent, _) = qcb_fock(&rho1, &rho2, &uniform_s_grid(row.s_points)).unwrap();
    assert!(
        (exponent - row.exponent).abs() <= 1e-12 * row.exponent.abs(),
        "stored {} vs recomputed {exponent}",
        row.exponent
    );
}
