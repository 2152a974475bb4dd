//! The block SDP solver on a small problem, with an independent KKT check.
//!
//! Finds the smallest t with [[t, 1, 0], [1, t, 1], [0, 1, t]] PSD, i.e. the
//! largest eigenvalue magnitude sqrt(2) of the path-graph adjacency.

use sos_corridor::conic::{solve, verify_kkt, LinearForm, SdpInstance, SolverSettings};

fn main() -> sos_corridor::Result<()> {
    let mut inst = SdpInstance::new(1, vec![3]);
    inst.objective.scalar(0, 1.0);
    for i in 0..3 {
        for j in i..3 {
            let mut row = LinearForm::default();
            row.entry(0, i, j, 1.0);
            let rhs = if i == j {
                row.scalar(0, -1.0);
                0.0
            } else if j == i + 1 {
                1.0
            } else {
                0.0
            };
            inst.push_row(row, rhs);
        }
    }
    let sol = solve(&inst, &SolverSettings::default())?;
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    println!("t = {:.9} (sqrt 2 = {:.9})", sol.scalars[0], 2f64.sqrt());
    let kkt = verify_kkt(&inst, &sol);
    println!(
        "primal residual {:.1e}, dual residual {:.1e}, gap {:.1e}, min eigenvalue {:.1e}",
        kkt.primal_res, kkt.dual_res, kkt.gap, kkt.psd_min_eig
    );
    println!("{}", inst.to_dump());
    Ok(())
}
