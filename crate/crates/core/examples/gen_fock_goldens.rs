//! Regenerates tests/data/fock_goldens.csv: brute-force exponents for the
//! preregistered thermal-pair family, computed in the truncated number
//! basis with no input from the closed-form engine.

use subray::fock::{
    acceptance_family, mode_rotation_fock, qcb_fock, two_mode_thermal, uniform_s_grid,
    write_goldens_csv, GoldenRow,
};

fn main() {
    let cutoff = 25;
    let s_points = 1001;
    let grid = uniform_s_grid(s_points);
    let mut rows = Vec::new();
    for (mean1, mean2, angle) in acceptance_family() {
        let rho1 = two_mode_thermal(mean1, mean2, cutoff).expect("cutoff too small for family");
        let u = mode_rotation_fock(angle, cutoff);
        let rho2 = &u * &rho1 * u.transpose();
        let (exponent, s_star) = qcb_fock(&rho1, &rho2, &grid).expect("oracle evaluation failed");
        eprintln!("means ({mean1}, {mean2}) angle {angle}: xi = {exponent:.12e} at s = {s_star}");
        rows.push(GoldenRow {
            mean1,
            mean2,
            angle,
            cutoff,
            s_points,
            exponent,
        });
    }
    let path =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fock_goldens.csv");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_goldens_csv(&path, &rows).unwrap();
    println!("wrote {}", path.display());
}
