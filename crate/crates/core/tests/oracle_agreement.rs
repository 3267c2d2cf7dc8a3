mod support;

use rand::Rng;
use semiconv::oracle::{agreement_report, estimate_phi, estimate_survival, sample_paths};
use semiconv::{compute_phi, survival, ConversionInputs, DiscountCurve, Scenario};
use support::{random_kernel, random_origin, rng, KernelShape};

#[test]
fn random_kernel_paths_are_well_formed() {
    let mut r = rng(5);
    for _ in 0..20 {
        let kernel = random_kernel(&mut r, KernelShape::default());
        let origin = random_origin(&mut r, &kernel, 0.1);
        let horizon = origin.time + (kernel.max_age() - origin.age) as i64;
        for p in sample_paths(&kernel, &origin, horizon, 2_000, r.random()).unwrap() {
            p.check(kernel.death()).unwrap();
            // everyone is dead by the maximum age
            assert!(p.death_time.is_some_and(|d| d <= horizon));
            assert!(p.jumps.iter().all(|j| j.age <= kernel.max_age() as i64));
        }
    }
}

#[test]
fn random_kernel_phi_and_survival_agree() {
    let mut r = rng(17);
    for case in 0..20 {
        let kernel = random_kernel(&mut r, KernelShape::default());
        let origin = random_origin(&mut r, &kernel, 0.0);
        let room = (kernel.max_age() - origin.age) as i64;
        let t = origin.time + r.random_range(0..=room);
        let seed = r.random();
        let phi = compute_phi(&kernel, &origin, t).unwrap();
        let est = estimate_phi(&kernel, &origin, t, 20_000, seed).unwrap();
        // binomial errors are unusable for rare cells, which may have no hits
        for (j, u, p) in phi.cells().filter(|c| c.2 >= 0.01) {
            let e = est.get(j, u);
            assert!(e.agrees(p, 5.0), "case {case} cell ({j}, {u}): {p} vs {e:?}");
        }
        for ((j, u), _) in est.cells() {
            assert!(phi.get(j, u) > 0.0, "case {case}: simulated cell ({j}, {u}) is impossible");
        }
        let curve = survival(&kernel, &origin, origin.time + room).unwrap();
        let est = estimate_survival(&kernel, &origin, origin.time + room, 20_000, seed).unwrap();
        for ((t, s), e) in curve.iter().zip(&est).filter(|c| c.0 .1 >= 0.01) {
            assert!(e.agrees(s, 5.0), "case {case} t = {t}: {s} vs {e:?}");
        }
    }
}

#[test]
fn report_is_reproducible_and_ordered() {
    let kernel = support::age2();
    let inputs = ConversionInputs::new(&kernel, Scenario::new(0, 0, 60, 0), 5, DiscountCurve::constant(0.95).unwrap()).unwrap();
    let a = agreement_report(&inputs, 3_000, 9, 0.01).unwrap();
    let b = agreement_report(&inputs, 3_000, 9, 0.01).unwrap();
    assert_eq!(a, b);
    assert!(a[0].quantity.starts_with("phi["));
    let tail: Vec<&str> = a.iter().rev().take(7).map(|x| x.quantity.as_str()).collect();
    assert_eq!(
        tail,
        ["vco", "pvp_no_conversion", "pvp_conversion", "expected_cash_value", "premium_value", "annuity", "assurance"]
    );
    assert_ne!(a, agreement_report(&inputs, 3_000, 10, 0.01).unwrap());
}
