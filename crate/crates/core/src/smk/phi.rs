use crate::error::Result;
use crate::smk::{prepare_origin, Kernel, RowCache, Scenario};

/// Transition probabilities with initial and final backward,
/// `φ_ij(u, s; u′, t)`, for one origin and horizon.
///
/// Cells are stored densely over `u′ ∈ 0..=t−s+u`; larger final backwards
/// are impossible.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable {
    origin: Scenario,
    horizon: i64,
    states: usize,
    width: usize,
    values: Vec<f64>,
}

impl PhiTable {
    pub fn origin(&self) -> &Scenario {
        &self.origin
    }

    pub fn horizon(&self) -> i64 {
        self.horizon
    }

    /// Largest final backward with possibly positive mass.
    pub fn max_backward(&self) -> u32 {
        (self.width - 1) as u32
    }

    pub fn get(&self, state: usize, backward: u32) -> f64 {
        let b = backward as usize;
        if state >= self.states || b >= self.width {
            0.0
        } else {
            self.values[state * self.width + b]
        }
    }

    /// All cells `(state, backward, probability)`, including zeros.
    pub fn cells(&self) -> impl Iterator<Item = (usize, u32, f64)> + '_ {
        (0..self.states)
            .flat_map(move |j| (0..self.width).map(move |b| (j, b as u32, self.values[j * self.width + b])))
    }

    /// Cells with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (usize, u32, f64)> + '_ {
        self.cells().filter(|c| c.2 > 0.0)
    }

    /// Probability of being in `state` at the horizon, any backward.
    pub fn marginal(&self, state: usize) -> f64 {
        (0..self.width).map(|b| self.get(state, b as u32)).sum()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Computes `φ_ij(u, s; u′, t)` for every target `(j, u′)` by the renewal
/// recursion over fresh-start tables.
///
/// For each final backward `u′` the fresh-start values
/// `ψ_k(θ) = φ_kj(0, θ; u′, t)` are swept backward from `θ = t−u′` (where
/// only the no-jump term survives) down to `s+1`; the origin's conditional
/// increments `q_ik(s−u; θ) / H̄_i(s−u; s)` then combine them, and the
/// no-jump term `H̄_i(s−u; t) / H̄_i(s−u; s)` lands on `(i, t−s+u)`.
pub fn compute_phi(kernel: &Kernel, origin: &Scenario, t: i64) -> Result<PhiTable> {
    let prepared = prepare_origin(kernel, origin, t)?;
    let n = kernel.states().len();
    let s = origin.time;
    let u = origin.backward as i64;
    let width = (t - s + u + 1) as usize;
    let mut values = vec![0.0; n * width];

    let Some((origin_row, h0)) = prepared else {
        values[origin.state * width + width - 1] = 1.0;
        return Ok(PhiTable {
            origin: *origin,
            horizon: t,
            states: n,
            width,
            values,
        });
    };

    let entry = origin.entry_time();
    values[origin.state * width + (t - entry) as usize] = origin_row.tail((t - entry) as usize) / h0;

    if t > s {
        let m = kernel.max_sojourn() as i64;
        let death = kernel.death();
        let mut rows = RowCache::new(kernel, origin.base_age(), s + 1, t);
        // psi[(θ - s - 1) * n * n + k * n + j]
        let mut psi = vec![0.0; (t - s) as usize * n * n];
        for final_backward in 0..(t - s) {
            let end = t - final_backward;
            let span = (end - s) as usize;
            psi[..span * n * n].fill(0.0);
            for theta in (s + 1..=end).rev() {
                let base = (theta - s - 1) as usize * n * n;
                if theta == end {
                    for k in 0..n {
                        psi[base + k * n + k] = if k == death {
                            1.0
                        } else {
                            rows.get(k, theta)?.tail((t - theta) as usize)
                        };
                    }
                    continue;
                }
                let last = end.min(theta + m);
                for k in 0..n {
                    if k == death {
                        continue;
                    }
                    let row = rows.get(k, theta)?;
                    for next in 0..n {
                        for later in theta + 1..=last {
                            let q = row.q(next, (later - theta) as usize);
                            if q == 0.0 {
                                continue;
                            }
                            let src = (later - s - 1) as usize * n * n + next * n;
                            for j in 0..n {
                                psi[base + k * n + j] += q * psi[src + j];
                            }
                        }
                    }
                }
            }
            for k in 0..n {
                for theta in s + 1..=end {
                    let q = origin_row.q(k, (theta - entry) as usize);
                    if q == 0.0 {
                        continue;
                    }
                    let w = q / h0;
                    let src = (theta - s - 1) as usize * n * n + k * n;
                    for j in 0..n {
                        values[j * width + final_backward as usize] += w * psi[src + j];
                    }
                }
            }
        }
    }

    Ok(PhiTable {
        origin: *origin,
        horizon: t,
        states: n,
        width,
        values,
    })
}
