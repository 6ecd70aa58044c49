use proptest::prelude::*;
use soiling::optics::{acceptance_factor, mie_efficiencies, mie_q, RefractiveIndex};

/// (x, Re m, Im m, q_ext, q_sca) from an independent arbitrary-precision
/// evaluation of the Mie series (python/oracles/mie_reference.py).
fn reference() -> Vec<(f64, f64, f64, f64, f64)> {
    include_str!("data/mie_reference.csv")
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
            (v[0], v[1], v[2], v[3], v[4])
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn efficiencies_match_reference_series() {
    for (x, re, im, qe, qs) in reference() {
        let (e, s) = mie_q(x, RefractiveIndex::new(re, im).unwrap()).unwrap();
        assert!(rel(e, qe) < 1e-6, "q_ext x={x} m={re}+{im}i: {e} vs {qe}");
        assert!(rel(s, qs) < 1e-6, "q_sca x={x} m={re}+{im}i: {s} vs {qs}");
    }
}

#[test]
fn large_spheres_approach_extinction_paradox() {
    let (e, _) = mie_q(5000.0, RefractiveIndex::QUARTZ).unwrap();
    assert!((e - 2.0).abs() < 0.01, "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scattering_never_exceeds_extinction(x in 1e-3f64..200.0, re in 1.1f64..2.0, im in 0.0f64..0.5) {
        let (e, s) = mie_q(x, RefractiveIndex::new(re, im).unwrap()).unwrap();
        prop_assert!(s > 0.0);
        prop_assert!(s <= e * (1.0 + 1e-9));
    }

    #[test]
    fn acceptance_grows_with_cone(x in 0.05f64..60.0, a in 1e-3f64..0.5, b in 1e-3f64..0.5) {
        let r = mie_efficiencies(x, RefractiveIndex::QUARTZ).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f_lo = acceptance_factor(&r.phase_function, lo).unwrap();
        let f_hi = acceptance_factor(&r.phase_function, hi).unwrap();
        prop_assert!(f_hi <= f_lo + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f_lo));
    }
}
