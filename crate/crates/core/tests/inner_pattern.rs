use rdic_core::channel::{gen_generic, gen_ula, UlaGeometry};
use rdic_core::dof::{Regime, SystemParams};
use rdic_core::inner::*;
use rdic_core::linalg::{max_abs, numerical_rank, spectral_norm, CMatrix};
use rdic_core::rng::{complex_gaussian_matrix, substream};

fn params(t: (u32, u32, u32, u32, u32)) -> SystemParams {
    SystemParams::new(t.0, t.1, t.2, t.3, t.4).unwrap()
}

const LOW: [(u32, u32, u32, u32, u32); 4] = [(2, 4, 2, 1, 1), (3, 4, 3, 2, 1), (4, 2, 2, 1, 1), (3, 3, 3, 2, 0)];
const HIGH: [(u32, u32, u32, u32, u32); 5] = [(4, 6, 4, 3, 3), (3, 4, 3, 2, 2), (6, 4, 4, 3, 3), (4, 4, 4, 3, 3), (3, 5, 3, 3, 2)];

fn check_all(tuples: &[(u32, u32, u32, u32, u32)], regime: Regime, trials: u64) {
    for &t in tuples {
        for seed in 0..trials {
            let cs = gen_generic(&params(t), seed);
            let it = build(&cs).unwrap();
            assert_eq!(it.regime, regime);
            let rep = verify_pattern(&equivalent_channel(&cs, &it), 1e-9);
            assert!(rep.pass, "{t:?} seed {seed}: {:?}", rep.failures().collect::<Vec<_>>());
            assert!(rep.worst_zero_residual() <= 1e-9);
        }
    }
}

#[test]
fn low_regime_pattern_over_many_trials() {
    check_all(&LOW, Regime::Low, 200);
}

#[test]
fn high_regime_pattern_over_many_trials() {
    check_all(&HIGH, Regime::High, 200);
}

#[test]
fn ula_channels_follow_the_pattern() {
    for t in LOW.iter().chain(HIGH.iter()) {
        let p = params(*t);
        for seed in 0..20 {
            let cs = gen_ula(&p, &UlaGeometry::random(&p, 0.5, seed), seed).unwrap();
            let rep = verify_pattern(&equivalent_channel(&cs, &build(&cs).unwrap()), 1e-9);
            assert!(rep.pass, "{t:?} seed {seed}");
        }
    }
}

#[test]
fn randomized_receive_transform_breaks_pattern() {
    for t in LOW.iter().chain(HIGH.iter()) {
        for seed in 0..20 {
            let cs = gen_generic(&params(*t), seed);
            let mut it = build(&cs).unwrap();
            let mut rng = substream(seed, &["control".into()]);
            // Oriented receive transforms live transposed in `t`.
            let target = if it.reciprocal_applied { &mut it.t[0] } else { &mut it.r[0] };
            *target = complex_gaussian_matrix(target.nrows(), target.ncols(), &mut rng);
            let rep = verify_pattern(&equivalent_channel(&cs, &it), 1e-9);
            assert!(!rep.pass, "{t:?} seed {seed}: control passed");
        }
    }
}

#[test]
fn transforms_are_well_conditioned_and_invertible() {
    for t in LOW.iter().chain(HIGH.iter()) {
        let cs = gen_generic(&params(*t), 4);
        let it = build(&cs).unwrap();
        for m in it.r.iter().chain(it.t.iter()) {
            assert_eq!(numerical_rank(m, None).unwrap(), m.nrows());
        }
        assert!(it.worst_condition_ratio() > INVERTIBILITY_TOL);
    }
}

#[test]
fn reciprocal_construction_is_consistent() {
    // mt > mr is built on the reciprocal network and transposed back.
    for t in [(4, 2, 2, 1, 1), (6, 4, 4, 3, 3), (5, 3, 3, 2, 3)] {
        let cs = gen_generic(&params(t), 8);
        let it = build(&cs).unwrap();
        assert!(it.reciprocal_applied);
        let dual = build(&cs.reciprocal()).unwrap();
        assert!(!dual.reciprocal_applied);
        for k in 0..3 {
            assert!(max_abs(&(&it.r[k] - dual.t[k].transpose())) < 1e-12);
            assert!(max_abs(&(&it.t[k] - dual.r[k].transpose())) < 1e-12);
        }
        let eq = equivalent_channel(&cs, &it);
        let eq_dual = equivalent_channel(&cs.reciprocal(), &dual);
        for k in 0..3 {
            for i in 0..3 {
                let diff = &eq.oriented_link(k, i) - eq_dual.oriented_link(k, i);
                assert!(max_abs(&diff) <= 1e-10 * spectral_norm(&eq.oriented_link(k, i)).max(1.0));
            }
        }
    }
}

#[test]
fn block_sizes_partition_the_antennas() {
    for t in LOW.iter().chain(HIGH.iter()) {
        let p = params(*t);
        let it = build(&gen_generic(&p, 0)).unwrap();
        assert_eq!(it.rx_blocks.total(), p.mr as usize);
        assert_eq!(it.tx_blocks.total(), p.mt as usize);
        let eq = equivalent_channel(&gen_generic(&p, 0), &it);
        let (rb, tb) = eq.oriented_blocks();
        assert!(rb.total() >= tb.total());
        let pm = eq.p_matrices();
        assert_eq!(pm[0][1].shape(), (rb.middle, tb.middle));
        assert_eq!(pm[0][0], CMatrix::zeros(rb.middle, tb.middle));
    }
}
