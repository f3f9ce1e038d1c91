use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdvectionProblem, Side};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    UniformRandom,
    Grid,
}

/// Training points for the residual, initial and boundary terms.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub pde_points: Vec<(f64, f64)>,
    pub ic_points: Vec<f64>,
    pub bc_points: Vec<(Side, f64)>,
    pub seed: u64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Factor pair `nx · nt = n` whose aspect best matches the domain.
fn grid_shape(n: usize, aspect: f64) -> (usize, usize) {
    let mut best = (n, 1);
    let mut best_err = f64::INFINITY;
    for nt in 1..=n {
        if n.is_multiple_of(nt) {
            let nx = n / nt;
            let err = ((nx as f64 / nt as f64) / aspect).ln().abs();
            if err < best_err {
                best_err = err;
                best = (nx, nt);
            }
        }
    }
    best
}

pub fn sample_collocation(
    problem: &AdvectionProblem,
    n_pde: usize,
    n_ic: usize,
    n_bc: usize,
    seed: u64,
    strategy: Strategy,
) -> Result<CollocationSet> {
    if n_pde == 0 || n_ic == 0 || n_bc == 0 {
        return Err(Error::InvalidArgument("collocation counts must be at least 1".into()));
    }
    let [a, b] = problem.domain.x;
    let t_max = problem.t_max();
    let sides: Vec<Side> = problem.bc.iter().map(|bc| bc.side).collect();
    if sides.is_empty() {
        return Err(Error::InvalidConfig("problem declares no boundary".into()));
    }

    let (pde_points, ic_points, bc_points) = match strategy {
        Strategy::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pde = (0..n_pde).map(|_| (rng.gen_range(a..=b), rng.gen_range(0.0..=t_max))).collect();
            let ic = (0..n_ic).map(|_| rng.gen_range(a..=b)).collect();
            let bc = (0..n_bc).map(|j| (sides[j % sides.len()], rng.gen_range(0.0..=t_max))).collect();
            (pde, ic, bc)
        }
        Strategy::Grid => {
            let (nx, nt) = grid_shape(n_pde, (b - a) / t_max);
            let xs = linspace(a, b, nx);
            let ts = linspace(0.0, t_max, nt);
            let pde = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (x, t))).collect();
            let ic = linspace(a, b, n_ic);
            let mut bc = Vec::with_capacity(n_bc);
            for (k, &side) in sides.iter().enumerate() {
                let count = n_bc / sides.len() + usize::from(k < n_bc % sides.len());
                bc.extend(linspace(0.0, t_max, count).into_iter().map(|t| (side, t)));
            }
            (pde, ic, bc)
        }
    };
    Ok(CollocationSet { pde_points, ic_points, bc_points, seed })
}
