//! Reference values on the AGE2 fixture. Each table is checked against an
//! independent route (path enumeration or the lifted chain) and against
//! numbers frozen from that route.

// frozen values keep all 17 significant digits
#![allow(clippy::excessive_precision)]

mod support;

use semiconv::{
    compute_phi, embedded_probability, survival, value_conversion_option, ConversionInputs,
    DiscountCurve, Scenario,
};
use support::{age2, brute_force_phi, lifted_survival};

const PHI_I_1_50_3_AT_6: [(usize, u32, f64); 9] = [
    (0, 0, 6.07570672580507176e-2),
    (0, 1, 7.77890391067452419e-2),
    (0, 2, 1.06187922223171888e-1),
    (1, 0, 1.41786982411510054e-2),
    (1, 1, 4.88489865389501836e-3),
    (1, 4, 4.72759141939587735e-1),
    (2, 0, 7.50367824479074158e-2),
    (2, 1, 8.77571980791047451e-2),
    (2, 2, 1.00649252050386370e-1),
];

#[test]
fn phi_table_from_disabled_state() {
    let kernel = age2();
    let origin = Scenario::new(1, 1, 50, 3);
    let phi = compute_phi(&kernel, &origin, 6).unwrap();
    let brute = brute_force_phi(&kernel, &origin, 6);
    for (j, u, p) in phi.cells() {
        let b = brute.get(&(j, u)).copied().unwrap_or(0.0);
        assert!((p - b).abs() < 1e-12, "({j}, {u}): {p} vs {b}");
    }
    assert_eq!(phi.support().count(), PHI_I_1_50_3_AT_6.len());
    for (j, u, expected) in PHI_I_1_50_3_AT_6 {
        assert!((phi.get(j, u) - expected).abs() < 1e-12, "({j}, {u})");
    }
}

#[test]
fn survival_from_healthy_entry() {
    let kernel = age2();
    let origin = Scenario::new(0, 0, 45, 0);
    let curve = survival(&kernel, &origin, 45).unwrap();
    let lifted = lifted_survival(&kernel, &origin, 45);
    for (t, s) in curve.iter() {
        assert!((s - lifted[t as usize]).abs() < 1e-12, "t = {t}");
    }
    let frozen = [
        (1, 9.88407259257000015e-1),
        (5, 9.08841113296150027e-1),
        (10, 7.48807955369199529e-1),
        (20, 4.25269862485284422e-1),
        (30, 2.06804703983441335e-1),
        (44, 5.81930226187044181e-2),
        (45, 0.0),
    ];
    for (t, s) in frozen {
        assert!((curve.at(t).unwrap() - s).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn embedded_chain_at_fifty() {
    let kernel = age2();
    let frozen = [
        (0, 1, 8.88960907697296743e-1),
        (0, 2, 1.11039092302703229e-1),
        (1, 0, 5.21232476103619002e-1),
        (1, 2, 4.78767523896380665e-1),
    ];
    for (i, j, p) in frozen {
        assert!((embedded_probability(&kernel, i, j, 50, 0).unwrap() - p).abs() < 1e-12);
    }
}

#[test]
fn conversion_quote_regression() {
    let kernel = age2();
    let inputs = ConversionInputs::new(
        &kernel,
        Scenario::new(0, 0, 45, 0),
        10,
        DiscountCurve::constant(0.96).unwrap(),
    )
    .unwrap();
    let q = value_conversion_option(&inputs).unwrap();
    let frozen = [
        (q.tip.premium, 0.027098655732758364),
        (q.unchanged_pip.premium, 0.053634791674750895),
        (q.conversion_tip.premium, 0.038389663362163526),
        (q.expected_cash_value, 0.005573448557402981),
        (q.pvp_no_conversion, 0.4915100542948665),
        (q.pvp_conversion, 0.32155963644167607),
        (q.vco_difference, 0.16995041785319043),
        (q.vco_closed_form, 0.16995041785319046),
    ];
    for (k, (got, want)) in frozen.iter().enumerate() {
        assert!((got - want).abs() < 1e-12, "value {k}: {got} vs {want}");
    }
    assert_eq!(q.exercise_set.members().count(), 20);
}
