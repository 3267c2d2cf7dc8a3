#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiconv::io::{build_parametric_kernel, load_kernel, ParametricSpec};
use semiconv::{CalendarModifier, DiscountCurve, Kernel, KernelBuilder, Scenario, StateSpace};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn geo02() -> Kernel {
    load_kernel(fixture("geo02.kernel")).unwrap()
}

pub fn age2() -> Kernel {
    load_kernel(fixture("age2.kernel")).unwrap()
}

pub fn age2r() -> Kernel {
    load_kernel(fixture("age2r.kernel")).unwrap()
}

pub fn spec(name: &str) -> ParametricSpec {
    toml::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn spec_kernel(name: &str) -> Kernel {
    build_parametric_kernel(&spec(name)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sojourn survival `1 − Σ_j Σ_{d ≤ elapsed} q`, straight from the public
/// increments.
pub fn hbar(kernel: &Kernel, state: usize, age: i64, entry: i64, elapsed: i64) -> f64 {
    if kernel.states().is_death(state) {
        return 1.0;
    }
    let mut left = 1.0;
    for d in 1..=elapsed.min(kernel.max_sojourn() as i64) {
        for to in 0..kernel.states().len() {
            left -= kernel.increment(state, to, age, entry, d as u32).unwrap();
        }
    }
    left
}

/// `φ` by enumerating every jump sequence in `(s, t]`.
pub fn brute_force_phi(kernel: &Kernel, origin: &Scenario, t: i64) -> BTreeMap<(usize, u32), f64> {
    let mut out = BTreeMap::new();
    let base_age = origin.base_age();
    let entry = origin.entry_time();
    if kernel.states().is_death(origin.state) {
        out.insert((origin.state, (t - entry) as u32), 1.0);
        return out;
    }
    let h0 = hbar(kernel, origin.state, base_age + entry, entry, origin.backward as i64);
    let mut paths = 0usize;
    walk(kernel, base_age, origin.state, entry, origin.time, t, 1.0 / h0, &mut out, &mut paths);
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    kernel: &Kernel,
    base_age: i64,
    state: usize,
    entry: i64,
    now: i64,
    t: i64,
    weight: f64,
    out: &mut BTreeMap<(usize, u32), f64>,
    paths: &mut usize,
) {
    *paths += 1;
    assert!(*paths < 1_000_000, "too many paths to enumerate");
    let age = base_age + entry;
    let stay = hbar(kernel, state, age, entry, t - entry);
    *out.entry((state, (t - entry) as u32)).or_insert(0.0) += weight * stay;
    if kernel.states().is_death(state) {
        return;
    }
    for theta in now + 1..=t {
        let d = (theta - entry) as u32;
        for to in 0..kernel.states().len() {
            let q = kernel.increment(state, to, age, entry, d).unwrap();
            if q == 0.0 {
                continue;
            }
            if kernel.states().is_death(to) {
                *out.entry((to, (t - theta) as u32)).or_insert(0.0) += weight * q;
            } else {
                walk(kernel, base_age, to, theta, theta, t, weight * q, out, paths);
            }
        }
    }
}

/// `φ` by propagating `P(state, entry time)` forward one period at a time
/// with the one-step exit probabilities `q / H̄`.
pub fn lifted_phi(kernel: &Kernel, origin: &Scenario, t: i64) -> BTreeMap<(usize, u32), f64> {
    let base_age = origin.base_age();
    let n = kernel.states().len();
    let mut mass: BTreeMap<(usize, i64), f64> = BTreeMap::new();
    mass.insert((origin.state, origin.entry_time()), 1.0);
    for now in origin.time..t {
        let mut next: BTreeMap<(usize, i64), f64> = BTreeMap::new();
        for (&(state, entry), &p) in &mass {
            if p == 0.0 {
                continue;
            }
            if kernel.states().is_death(state) {
                *next.entry((state, entry)).or_insert(0.0) += p;
                continue;
            }
            let age = base_age + entry;
            let alive = hbar(kernel, state, age, entry, now - entry);
            let d = (now + 1 - entry) as u32;
            let mut left = p;
            for to in 0..n {
                let q = kernel.increment(state, to, age, entry, d).unwrap();
                if q == 0.0 {
                    continue;
                }
                let moved = p * q / alive;
                left -= moved;
                *next.entry((to, now + 1)).or_insert(0.0) += moved;
            }
            *next.entry((state, entry)).or_insert(0.0) += left;
        }
        mass = next;
    }
    mass.into_iter()
        .map(|((j, e), p)| ((j, (t - e) as u32), p))
        .fold(BTreeMap::new(), |mut acc, (k, p)| {
            *acc.entry(k).or_insert(0.0) += p;
            acc
        })
}

/// Survival `S(t)` for `t ∈ s..=horizon` from the lifted chain.
pub fn lifted_survival(kernel: &Kernel, origin: &Scenario, horizon: i64) -> Vec<f64> {
    (origin.time..=horizon)
        .map(|t| {
            lifted_phi(kernel, origin, t)
                .into_iter()
                .filter(|((j, _), _)| !kernel.states().is_death(*j))
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct KernelShape {
    pub max_states: usize,
    pub max_span: u32,
    pub max_sojourn: u32,
    /// Adds a calendar modifier and explicit rows.
    pub calendar: bool,
}

impl Default for KernelShape {
    fn default() -> Self {
        Self {
            max_states: 4,
            max_span: 25,
            max_sojourn: 10,
            calendar: true,
        }
    }
}

/// A random valid kernel with forced absorption. The death state sits at a
/// random index; some rows leave mass for the top-up, some are sparse.
pub fn random_kernel(rng: &mut ChaCha8Rng, shape: KernelShape) -> Kernel {
    let n = rng.random_range(2..=shape.max_states);
    let labels: Vec<String> = (0..n).map(|k| format!("S{k}")).collect();
    let death = rng.random_range(0..n);
    let states = StateSpace::new(labels.clone(), &labels[death]).unwrap();
    let min_age = rng.random_range(20..=60);
    let span = rng.random_range(4..=shape.max_span);
    let max_age = min_age + span;
    let m = rng.random_range(1..=shape.max_sojourn.min(span));
    let mut b = KernelBuilder::new(states, min_age, max_age, m).unwrap().force_absorption(true);

    let fill = |rng: &mut ChaCha8Rng, age: u32| -> Vec<(usize, u32, f64)> {
        let target = if rng.random_bool(0.25) { 1.0 } else { rng.random_range(0.2..1.0) };
        let mut cells = Vec::new();
        for to in 0..n {
            for d in 1..=m {
                let end = age + d;
                let ok = end < max_age || (to == death && end == max_age);
                if ok && rng.random_bool(0.6) {
                    cells.push((to, d, rng.random_range(0.0..1.0)));
                }
            }
        }
        let total: f64 = cells.iter().map(|c| c.2).sum();
        if total > 0.0 {
            for c in &mut cells {
                c.2 *= target / total;
            }
        }
        cells
    };

    for from in (0..n).filter(|&i| i != death) {
        for age in min_age..max_age {
            for (to, d, p) in fill(rng, age) {
                b.set(from, to, age, d, p).unwrap();
            }
        }
    }
    if shape.calendar && rng.random_bool(0.5) {
        let factors = (0..rng.random_range(1..=4)).map(|_| rng.random_range(0.5..=1.0)).collect();
        b = b.calendar_modifier(CalendarModifier::new(rng.random_range(0..4), factors).unwrap());
        let mut used = Vec::new();
        for _ in 0..rng.random_range(0..=3) {
            let living: Vec<usize> = (0..n).filter(|&i| i != death).collect();
            let from = living[rng.random_range(0..living.len())];
            let age = rng.random_range(min_age..max_age);
            let time = rng.random_range(0..6);
            let cells = fill(rng, age);
            if cells.is_empty() || used.contains(&(from, age, time)) {
                continue;
            }
            used.push((from, age, time));
            for (to, d, p) in cells {
                b.set_at_time(from, to, age, time, d, p).unwrap();
            }
        }
    }
    b.build().unwrap()
}

/// A random living origin with positive conditioning probability, or a
/// death origin with probability `p_death`.
pub fn random_origin(rng: &mut ChaCha8Rng, kernel: &Kernel, p_death: f64) -> Scenario {
    let death = kernel.death();
    loop {
        let state = if rng.random_bool(p_death) {
            death
        } else {
            let living: Vec<usize> = kernel.states().living().collect();
            living[rng.random_range(0..living.len())]
        };
        let age = rng.random_range(kernel.min_age()..kernel.max_age());
        let max_u = (age - kernel.min_age()).min(kernel.max_sojourn());
        let u = rng.random_range(0..=max_u);
        let time = rng.random_range(0..5);
        let s = Scenario::new(state, u, age, time);
        if state == death {
            return s;
        }
        let h0 = hbar(kernel, state, s.entry_age() as i64, s.entry_time(), u as i64);
        if h0 > 1e-6 {
            return s;
        }
    }
}

/// Relabels states by `perm` (new index of old state `k` is `perm[k]`).
pub fn permute_kernel(kernel: &Kernel, perm: &[usize]) -> Kernel {
    let n = kernel.states().len();
    let mut labels = vec![String::new(); n];
    for (old, &new) in perm.iter().enumerate() {
        labels[new] = kernel.states().label(old).to_string();
    }
    let death = kernel.states().label(kernel.death()).to_string();
    let states = StateSpace::new(labels, &death).unwrap();
    let m = kernel.max_sojourn();
    let mut b = KernelBuilder::new(states, kernel.min_age(), kernel.max_age(), m)
        .unwrap()
        .force_absorption(kernel.force_absorption());
    if let Some(c) = kernel.calendar_modifier() {
        b = b.calendar_modifier(c.clone());
    }
    for from in 0..n {
        for age in kernel.min_age()..=kernel.max_age() {
            let row = kernel.base_row(from, age);
            for to in 0..n {
                for d in 1..=m {
                    let p = row[to * m as usize + d as usize - 1];
                    if p != 0.0 {
                        b.set(perm[from], perm[to], age, d, p).unwrap();
                    }
                }
            }
        }
    }
    for (&(from, age, time), row) in kernel.explicit_rows() {
        for to in 0..n {
            for d in 1..=m {
                let p = row[to * m as usize + d as usize - 1];
                b.set_at_time(perm[from], perm[to], age, time, d, p).unwrap();
            }
        }
    }
    b.build().unwrap()
}

/// A constant or per-period discount curve with factors in `[0.85, 1]`.
pub fn random_discount(rng: &mut ChaCha8Rng) -> DiscountCurve {
    if rng.random_bool(0.5) {
        DiscountCurve::constant(rng.random_range(0.85..=1.0)).unwrap()
    } else {
        let factors = (0..rng.random_range(1..=12)).map(|_| rng.random_range(0.85..=1.0)).collect();
        DiscountCurve::per_period(factors).unwrap()
    }
}

/// Two-state kernel whose one-period death probability is
/// `min(1, base(age) + slope·(d − 1))` with `base` non-decreasing in attained
/// age, so the hazard never decreases with age or duration.
pub fn increasing_hazard_kernel(rng: &mut ChaCha8Rng, min_age: u32, max_age: u32) -> Kernel {
    let span = (max_age - min_age) as usize;
    let mut base = Vec::with_capacity(span);
    let mut h: f64 = rng.random_range(0.0..0.1);
    for _ in 0..span {
        base.push(h.min(1.0));
        h += rng.random_range(0.0..0.05);
    }
    let slope = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.02) };
    let states = StateSpace::new(vec!["H", "D"], "D").unwrap();
    let mut b = KernelBuilder::new(states, min_age, max_age, max_age - min_age)
        .unwrap()
        .force_absorption(true);
    for age in min_age..max_age {
        let mut stay = 1.0;
        for d in 1..=max_age - age {
            let attained = (age + d - 1 - min_age) as usize;
            let hazard = (base[attained] + slope * (d - 1) as f64).min(1.0);
            if stay * hazard > 0.0 {
                b.set(0, 1, age, d, stay * hazard).unwrap();
            }
            stay *= 1.0 - hazard;
        }
    }
    b.build().unwrap()
}

/// Homogeneous kernel with constant one-period exit probabilities
/// `p[i][j]`: `q_ij(d) = (1 − r_i)^(d−1) p_ij`.
pub fn geometric_chain(p: &[Vec<f64>], death: usize, min_age: u32, max_age: u32) -> Kernel {
    let n = p.len();
    let labels: Vec<String> = (0..n).map(|k| format!("S{k}")).collect();
    let states = StateSpace::new(labels.clone(), &labels[death]).unwrap();
    let m = max_age - min_age;
    let mut b = KernelBuilder::new(states, min_age, max_age, m).unwrap().force_absorption(true);
    for i in (0..n).filter(|&i| i != death) {
        let exit: f64 = p[i].iter().sum();
        for age in min_age..max_age {
            let mut stay = 1.0;
            for d in 1..=max_age - age {
                for j in 0..n {
                    let ok = j == death || age + d < max_age;
                    if ok && p[i][j] > 0.0 {
                        b.set(i, j, age, d, stay * p[i][j]).unwrap();
                    }
                }
                stay *= 1.0 - exit;
            }
        }
    }
    b.build().unwrap()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}
