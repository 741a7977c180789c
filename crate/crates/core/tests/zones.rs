use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use pwduffing::{PerturbedSystem, ZonePartition};

fn linear_scan(a: &[f64], x: f64) -> usize {
    let mut zone = 0;
    for (i, &ai) in a.iter().enumerate() {
        if x > ai {
            zone = i + 1;
        }
    }
    zone
}

#[test]
fn zone_index_matches_linear_scan_on_random_points() {
    let mut rng = StdRng::seed_from_u64(2024);
    let p = ZonePartition::new(vec![0.3, 1.0, 1.7, 2.0, 3.5], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let mut xs: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-2.0..5.0)).collect();
    xs.extend_from_slice(p.breakpoints());
    xs.sort_by(f64::total_cmp);
    let mut last = 0;
    for &x in &xs {
        let z = p.zone_index(x).unwrap();
        assert_eq!(z, linear_scan(p.breakpoints(), x), "x = {x}");
        assert!(z >= last);
        last = z;
    }
    for (i, &a) in p.breakpoints().iter().enumerate() {
        assert_eq!(p.zone_index(a).unwrap(), i);
        assert_eq!(p.zone_index(f64::from_bits(a.to_bits() + 1)).unwrap(), i + 1);
    }
}

#[test]
fn field_examples() {
    let sys = PerturbedSystem::example();
    assert_eq!(sys.eval_g(1.5, 0.0, 0.0).unwrap(), 3.0);
    assert_eq!(sys.vector_field([3.0, 4.0], 0.0).unwrap(), [4.0, -3.0]);
    let v = sys.vector_field([1.5, 0.0], 0.1).unwrap();
    assert_eq!(v[0], 0.0);
    assert!((v[1] + 1.2).abs() < 1e-15);
    assert!((sys.eval_g(0.0, 5.0, 0.1).unwrap() - 0.5).abs() < 1e-15);
    assert!(sys.eval_g(f64::NAN, 0.0, 0.0).is_err());
}
