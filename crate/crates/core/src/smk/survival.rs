use crate::error::{ModelError, Result};
use crate::smk::{prepare_origin, Kernel, RowCache, Scenario};

/// Survival function `S_i(u, s; t)` over `t ∈ s..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    origin: Scenario,
    horizon: i64,
    values: Vec<f64>,
}

impl SurvivalCurve {
    /// Wraps externally obtained values (e.g. re-imported exports).
    pub fn from_values(origin: Scenario, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ModelError::InvalidInput("empty survival curve".into()));
        }
        let horizon = origin.time + values.len() as i64 - 1;
        Ok(Self {
            origin,
            horizon,
            values,
        })
    }

    pub fn origin(&self) -> &Scenario {
        &self.origin
    }

    pub fn horizon(&self) -> i64 {
        self.horizon
    }

    pub fn start(&self) -> i64 {
        self.origin.time
    }

    /// `S(t)`; zero past the horizon is *not* assumed, so `t` must lie in range.
    pub fn at(&self, t: i64) -> Result<f64> {
        self.index(t).map(|k| self.values[k])
    }

    fn index(&self, t: i64) -> Result<usize> {
        if t < self.origin.time || t > self.horizon {
            Err(ModelError::InvalidInput(format!(
                "time {t} outside survival range {}..={}",
                self.origin.time, self.horizon
            )))
        } else {
            Ok((t - self.origin.time) as usize)
        }
    }

    /// `ΔS(t−1) = S(t−1) − S(t)`, the probability of death at exactly `t`.
    pub fn death_pmf(&self, t: i64) -> Result<f64> {
        if t <= self.origin.time {
            return Err(ModelError::InvalidInput(format!(
                "death time {t} must exceed the origin time {}",
                self.origin.time
            )));
        }
        let k = self.index(t)?;
        Ok(self.values[k - 1] - self.values[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(t, S(t))` pairs in time order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let s = self.origin.time;
        self.values.iter().enumerate().map(move |(k, v)| (s + k as i64, *v))
    }
}

/// Probability of death at exactly `t` along `curve`.
pub fn death_pmf(curve: &SurvivalCurve, t: i64) -> Result<f64> {
    curve.death_pmf(t)
}

/// Survival curve from `origin` up to `horizon`.
///
/// Runs forward over entry densities: `r_m(θ)` is the probability that a
/// transition into `m` happens at time `θ`, obtained from the origin's
/// conditional increments plus renewals out of earlier entries. The alive
/// mass at `t` is the no-jump term plus `Σ_k Σ_θ r_k(θ) H̄_k(θ; t)`. One
/// pass yields the whole curve; the value is kept non-increasing by a
/// running minimum, which only absorbs rounding.
pub fn survival(kernel: &Kernel, origin: &Scenario, horizon: i64) -> Result<SurvivalCurve> {
    let Some((origin_row, h0)) = prepare_origin(kernel, origin, horizon)? else {
        return Err(ModelError::DeadScenario);
    };
    let n = kernel.states().len();
    let death = kernel.death();
    let s = origin.time;
    let entry = origin.entry_time();
    let m = kernel.max_sojourn() as i64;
    let len = (horizon - s) as usize;
    let mut rows = RowCache::new(kernel, origin.base_age(), s + 1, horizon.max(s + 1));
    // density[(θ - s - 1) * n + k]
    let mut density = vec![0.0; len * n];
    let mut values = Vec::with_capacity(len + 1);
    values.push(1.0);

    for theta in s + 1..=horizon {
        let at = (theta - s - 1) as usize * n;
        for to in 0..n {
            density[at + to] = origin_row.q(to, (theta - entry) as usize) / h0;
        }
        for earlier in (theta - m).max(s + 1)..theta {
            let src = (earlier - s - 1) as usize * n;
            for k in 0..n {
                let r = density[src + k];
                if k == death || r == 0.0 {
                    continue;
                }
                let row = rows.get(k, earlier)?;
                for to in 0..n {
                    density[at + to] += r * row.q(to, (theta - earlier) as usize);
                }
            }
        }

        let mut alive = if origin.state == death {
            0.0
        } else {
            origin_row.tail((theta - entry) as usize) / h0
        };
        for earlier in (theta - m).max(s + 1)..=theta {
            let src = (earlier - s - 1) as usize * n;
            for k in 0..n {
                let r = density[src + k];
                if k == death || r == 0.0 {
                    continue;
                }
                alive += r * rows.get(k, earlier)?.tail((theta - earlier) as usize);
            }
        }
        let prev = *values.last().expect("curve starts at 1");
        values.push(alive.clamp(0.0, prev));
    }

    Ok(SurvivalCurve {
        origin: *origin,
        horizon,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::geometric_kernel;

    #[test]
    fn geometric_survival_is_memoryless() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        for u in [0, 1, 5] {
            let c = survival(&k, &Scenario::new(0, u, 50, 0), 30).unwrap();
            for (t, v) in c.iter() {
                assert!((v - 0.8f64.powi(t as i32)).abs() < 1e-12, "u={u} t={t}");
            }
            assert!((c.death_pmf(1).unwrap() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_reaches_zero_at_max_age() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        let c = survival(&k, &Scenario::new(0, 0, 130, 0), 10).unwrap();
        assert_eq!(c.at(10).unwrap(), 0.0);
        let total: f64 = (1..=10).map(|t| c.death_pmf(t).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dead_origin_is_rejected() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        assert_eq!(
            survival(&k, &Scenario::new(1, 0, 50, 0), 3),
            Err(ModelError::DeadScenario)
        );
    }

    #[test]
    fn death_pmf_range() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        let c = survival(&k, &Scenario::new(0, 0, 50, 2), 6).unwrap();
        assert!(c.death_pmf(2).is_err());
        assert!(c.death_pmf(7).is_err());
        assert!(death_pmf(&c, 3).unwrap() > 0.0);
    }
}
