use bbmmi_core::models::{bd_killed_make, benchmark, BdState};
use bbmmi_core::oracle::{
    leading_triple, leading_triple_dense, semigroup_apply, semigroup_apply_left, tilted_generator, TiltedGenerator,
};
use nalgebra::DVector;

fn generator(cap: u32) -> TiltedGenerator<BdState> {
    let m = benchmark(Some(cap)).unwrap();
    tilted_generator(&m, &m.enumerate().unwrap(), &()).unwrap()
}

fn x(s: &BdState) -> f64 {
    f64::from(s[0])
}

#[test]
fn semigroup_property() {
    let g = generator(10);
    let f = g.vector(&x);
    let (s, t) = (0.3, 0.7);
    let whole = semigroup_apply(&g, &f, s + t).unwrap();
    let split = semigroup_apply(&g, &semigroup_apply(&g, &f, t).unwrap(), s).unwrap();
    assert!((&whole - &split).amax() <= 1e-9 * whole.amax());
    let mu = DVector::from_element(g.len(), 1.0 / g.len() as f64);
    let left = semigroup_apply_left(&g, &mu, s + t).unwrap();
    assert!((left.dot(&f) - mu.dot(&whole)).abs() <= 1e-9 * mu.dot(&whole));
}

#[test]
fn tilt_identity_for_the_killed_chain() {
    let m = 5;
    let t = 0.3;
    let killed = bd_killed_make(Some(m)).unwrap();
    let gk = tilted_generator(&killed, &killed.enumerate().unwrap(), &()).unwrap();
    let g = generator(m);
    let one = DVector::from_element(g.len(), 1.0);
    let psi = semigroup_apply(&g, &one, t).unwrap();
    let psi_k = semigroup_apply(&gk, &one, t).unwrap() * (f64::from(m) * t).exp();
    assert!((&psi - &psi_k).amax() <= 1e-8 * psi.amax());
}

#[test]
fn eigen_triple_is_consistent() {
    for cap in [3, 10, 40] {
        let g = generator(cap);
        let a = leading_triple(&g).unwrap();
        let b = leading_triple_dense(&g).unwrap();
        assert!(a.residual(g.matrix()) <= 1e-10, "cap {cap}");
        assert!(
            (a.lambda - b.lambda).abs() <= 1e-10 * a.lambda.abs().max(1.0),
            "cap {cap}"
        );
        let f = g.vector(&x);
        assert!((a.nu_of(&f) - b.nu_of(&f)).abs() <= 1e-8);
        assert!((a.nu.sum() - 1.0).abs() < 1e-12);
        assert!((a.eta.max() - 1.0).abs() < 1e-12);
        assert!(a.eta.min() > 0.0 && a.nu.min() > 0.0);
    }
}

#[test]
fn pinned_benchmark_values() {
    let g = generator(10);
    let t = leading_triple(&g).unwrap();
    assert!((t.lambda - 1.452_617_162_922_252_4).abs() < 1e-11, "{}", t.lambda);
    assert!((t.nu_of(&g.vector(&x)) - 1.452_617_162_922_252_4).abs() < 1e-9);
    let t100 = leading_triple(&generator(100)).unwrap();
    assert!((t100.lambda - 1.452_617_910_103_230_4).abs() < 1e-9, "{}", t100.lambda);
}

#[test]
fn normalized_semigroup_converges_to_nu() {
    let g = generator(10);
    let t = leading_triple(&g).unwrap();
    let mut mu = DVector::zeros(g.len());
    mu[0] = 1.0;
    let evolved = semigroup_apply_left(&g, &mu, 20.0).unwrap();
    let normalized = &evolved / evolved.sum();
    let tv = 0.5 * (&normalized - &t.nu).abs().sum();
    assert!(tv < 1e-6, "{tv}");
}

#[test]
fn identity_at_time_zero() {
    let g = generator(5);
    let f = g.vector(&x);
    assert_eq!(semigroup_apply(&g, &f, 0.0).unwrap(), f);
}
