//! Define a model by a noise-driven dynamics callback instead of kernel
//! tables, solve it with the same DPs, and show the realized mean-field
//! update built from the empirical noise distribution.

use meanfield_teams::dp::{solve_decentralized_grid, solve_sharing, Caps};
use meanfield_teams::lift::{factorized_update, lift_dynamics, LocalPolicy};
use meanfield_teams::model::{kernel_from_functional, FunctionalModel};
use meanfield_teams::simplex::{linf, DistVector};

fn main() {
    // two-state congestion toy: action 1 moves toward state 1 but the
    // attempt fails with probability growing in the crowd there
    let fm = FunctionalModel::new(
        2,
        2,
        3,
        vec![0.8, 0.2],
        vec![0.7, 0.3],
        |_t, x, u, w, z| {
            if u == 1 && w == 0 && z[1] < 0.6 {
                1
            } else if u == 0 && w == 0 {
                0
            } else {
                x
            }
        },
        |_t, x, u, z| if x == 1 { 0.2 + z[1] } else { 1.0 + 0.1 * u as f64 },
    )
    .unwrap();

    let caps = Caps::default();
    let grid = solve_decentralized_grid(&fm, 64, &caps).unwrap();
    println!("decentralized value (nu = 64): {}", grid.value);
    let sharing = solve_sharing(&fm, 8, &caps).unwrap();
    println!("sharing J* (n = 8): {}", sharing.j_star);

    let z = DistVector::simplex(vec![0.8, 0.2]).unwrap();
    let row = kernel_from_functional(&fm, 0, 0, 1, &z);
    println!("\nkernel row induced by the dynamics at x=0, u=1: {:?}", row.values());

    // realized update when 5 of 8 agents draw noise 0
    let gamma = LocalPolicy::new(vec![1, 0], 2);
    let m = DistVector::empirical(vec![0.75, 0.25], 8).unwrap();
    let noise_emp = DistVector::empirical(vec![0.625, 0.375], 8).unwrap();
    let realized = factorized_update(&fm, 0, &m, &gamma, &noise_emp).unwrap();
    let flow = lift_dynamics(&fm, 0, &m, &gamma);
    println!("\nlifted flow      : {:?}", flow.values());
    println!("realized update  : {:?}", realized.values());
    println!("deviation (linf) : {:.6}", linf(&realized, &flow));
}
