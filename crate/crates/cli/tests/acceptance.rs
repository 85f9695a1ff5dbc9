//! One line per acceptance criterion; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::process::Command;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdic_core::channel::gen_generic;
use rdic_core::dof::{derive, spatial_extension_factor, SystemParams};
use rdic_core::example;
use rdic_core::exec::Executor;
use rdic_core::inner::{build, equivalent_channel, verify_pattern, CheckKind};
use rdic_core::linalg::{intersect_subspaces, null_space_basis, numerical_rank, CMatrix, SubspaceBasis};
use rdic_core::outer::Branch;
use rdic_core::rng::{complex_gaussian_matrix, substream};
use rdic_core::verify::{build_scheme, monte_carlo, run_trial, ChannelSource, VerifyOptions};

type Outcome = Result<String, String>;

fn params(t: (u32, u32, u32, u32, u32)) -> SystemParams {
    SystemParams::new(t.0, t.1, t.2, t.3, t.4).unwrap()
}

fn r(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn small_tuples() -> Vec<SystemParams> {
    let mut out = Vec::new();
    for mt in 1..=8 {
        for mr in 1..=8 {
            let m = u32::min(mt, mr);
            for d0 in 0..=m {
                for d1 in 0..=m {
                    for d2 in 0..=m {
                        out.push(params((mt, mr, d0, d1, d2)));
                    }
                }
            }
        }
    }
    out
}

fn formula_fidelity() -> Outcome {
    let tuples = small_tuples();
    for p in &tuples {
        let d = derive(p).unwrap();
        let (m, n) = (d.m as i64, d.n as i64);
        let dt = d.dt as i64;
        let d0 = r(p.d0 as i64, 1);
        if m == n {
            let expected = d0.clone().min(r(m, 2).max(r(2 * m - dt, 2)));
            ensure(d.dbar == expected, || format!("{p:?}: equal-antenna reduction"))?;
        }
        if p.d0 == d.m && p.d1 == d.m && p.d2 == d.m {
            let expected = if m == n {
                r(m, 2)
            } else {
                let pp = (m + n - m - 1) / (n - m);
                r(pp * m, 2 * pp - 1).min(r(pp * n, 2 * pp + 1))
            };
            ensure(d.dbar == expected, || format!("{p:?}: full-rank reduction"))?;
        }
        if dt == 0 {
            ensure(d.dbar == d0, || format!("{p:?}: no interference"))?;
        }
        for d1 in 0..=d.dt.min(d.m) {
            let d2 = d.dt - d1;
            if d2 <= d.m {
                let other = derive(&params((p.mt, p.mr, p.d0, d1, d2))).unwrap();
                ensure(other.dbar == d.dbar, || format!("{p:?}: sum-rank symmetry with ({d1},{d2})"))?;
            }
        }
        for q in 1..=6u32 {
            let scaled = derive(&p.scale(q).unwrap()).unwrap();
            ensure(scaled.dbar == &d.dbar * r(q as i64, 1), || format!("{p:?}: scaling by {q}"))?;
        }
    }
    Ok(format!("{} tuples, exact", tuples.len()))
}

fn worked_example() -> Outcome {
    let rep = example::run(example::DEFAULT_DELTA, 0).map_err(|e| e.to_string())?;
    ensure(rep.dbar == "2", || format!("dbar {}", rep.dbar))?;
    ensure(rep.trial.streams_per_user == 2, || format!("{} streams", rep.trial.streams_per_user))?;
    let dec = rep.trial.receivers.iter().map(|x| x.decode_error).fold(0.0, f64::max);
    let leak = rep.trial.receivers.iter().map(|x| x.interference_residual).fold(0.0, f64::max);
    ensure(dec <= 1e-8, || format!("decode error {dec:e}"))?;
    ensure(leak <= 1e-9, || format!("interference residual {leak:e}"))?;
    ensure(rep.pass, || format!("{:?}", rep.trial.failure_reason()))?;
    Ok(format!("dbar=2, decode error {dec:.1e}, residual {leak:.1e}"))
}

const SWEEP: [(u32, u32, u32, u32, u32); 46] = [
    (2, 4, 2, 1, 1),
    (3, 4, 3, 2, 2),
    (2, 3, 2, 2, 2),
    (4, 6, 4, 3, 3),
    (2, 3, 2, 1, 2),
    (4, 7, 4, 4, 4),
    (4, 4, 2, 2, 2),
    (4, 6, 4, 2, 1),
    (5, 5, 5, 3, 2),
    (5, 7, 5, 3, 1),
    (6, 8, 6, 2, 2),
    (7, 8, 4, 7, 0),
    (8, 8, 8, 2, 1),
    (4, 2, 2, 1, 1),
    (2, 6, 2, 1, 0),
    (3, 5, 2, 2, 1),
    (4, 5, 1, 1, 1),
    (4, 8, 1, 3, 0),
    (6, 6, 3, 4, 1),
    (5, 8, 0, 3, 2),
    (8, 8, 6, 2, 1),
    (6, 3, 2, 2, 1),
    (2, 2, 1, 2, 1),
    (5, 5, 4, 4, 3),
    (6, 7, 5, 4, 4),
    (7, 8, 4, 6, 3),
    (5, 8, 1, 3, 3),
    (7, 7, 3, 4, 4),
    (8, 8, 6, 8, 2),
    (1, 2, 1, 1, 1),
    (4, 6, 1, 3, 3),
    (3, 6, 0, 2, 2),
    (4, 8, 2, 4, 3),
    (6, 4, 4, 3, 3),
    (2, 3, 1, 2, 2),
    (3, 4, 2, 3, 2),
    (5, 7, 5, 5, 4),
    (6, 7, 6, 5, 5),
    (6, 7, 3, 6, 4),
    (3, 2, 2, 2, 2),
    (3, 5, 3, 3, 3),
    (4, 7, 2, 4, 4),
    (5, 7, 5, 5, 5),
    (5, 8, 5, 5, 4),
    (5, 7, 2, 5, 5),
    (7, 4, 4, 4, 4),
];

fn achievability_sweep() -> Outcome {
    let mut branches: BTreeMap<String, usize> = BTreeMap::new();
    let mut bad = Vec::new();
    for t in SWEEP {
        let p = params(t);
        let d = derive(&p).unwrap();
        let q = spatial_extension_factor(&d);
        let rep = monte_carlo(&p, &ChannelSource::Generic, 50, 2024, &VerifyOptions::default(), Executor::Parallel);
        if let Some(b) = rep.branch {
            *branches.entry(format!("{b:?}")).or_default() += 1;
        }
        let streams = &d.dbar * r(q as i64, 1);
        let mut ok = rep.pass_rate == 1.0 && streams == r(rep.streams_per_user as i64, 1);
        ok &= rep.z_measured.iter().all(|&z| Some(z) == rep.z_predicted);
        if rep.branch.is_some_and(|b| b.is_tight()) && !rep.direct_limited {
            ok &= rep.z_measured.iter().all(|&z| z + rep.streams_per_user == rep.receive_dims);
        }
        if !ok {
            bad.push(format!("{t:?} pass rate {} ({:?})", rep.pass_rate, rep.failures.first().map(|f| &f.reason)));
        }
    }
    let needed = [Branch::LowFull, Branch::LowDirectLimited, Branch::HighHalfN, Branch::HighP1, Branch::HighChainN, Branch::HighChainM];
    for b in needed {
        if !branches.contains_key(&format!("{b:?}")) {
            bad.push(format!("branch {b:?} not covered"));
        }
    }
    ensure(bad.is_empty(), || bad.join("; "))?;
    let cover: Vec<String> = branches.iter().map(|(b, n)| format!("{b}:{n}")).collect();
    Ok(format!("{} tuples x 50 trials, {}", SWEEP.len(), cover.join(" ")))
}

fn equivalent_pattern() -> Outcome {
    let regimes = [
        ("low", vec![(2, 4, 2, 1, 1), (3, 4, 3, 2, 1), (4, 2, 2, 1, 1)]),
        ("high", vec![(4, 6, 4, 3, 3), (3, 4, 3, 2, 2), (6, 4, 4, 3, 3)]),
    ];
    let mut summary = Vec::new();
    for (name, tuples) in regimes {
        let (mut trials, mut worst, mut controls_caught) = (0, 0.0f64, 0);
        for t in tuples {
            for seed in 0..200u64 {
                let cs = gen_generic(&params(t), seed);
                let mut it = build(&cs).map_err(|e| format!("{t:?} seed {seed}: {e}"))?;
                let rep = verify_pattern(&equivalent_channel(&cs, &it), 1e-9);
                ensure(rep.pass, || format!("{t:?} seed {seed}: {:?}", rep.failures().next()))?;
                ensure(rep.checks.iter().any(|c| c.kind == CheckKind::FullRank), || format!("{t:?}: no rank checks"))?;
                worst = worst.max(rep.worst_zero_residual());
                trials += 1;
                if seed < 20 {
                    let mut rng = substream(seed, &["control".into()]);
                    let target = if it.reciprocal_applied { &mut it.t[0] } else { &mut it.r[0] };
                    *target = complex_gaussian_matrix(target.nrows(), target.ncols(), &mut rng);
                    ensure(!verify_pattern(&equivalent_channel(&cs, &it), 1e-9).pass, || format!("{t:?}: control passed"))?;
                    controls_caught += 1;
                }
            }
        }
        summary.push(format!("{name}: {trials} trials, worst zero {worst:.1e}, {controls_caught} controls rejected"));
    }
    Ok(summary.join("; "))
}

fn chain_certificate() -> Outcome {
    let cs = gen_generic(&params((10, 15, 10, 10, 10)), 0);
    let s = build_scheme(&cs, 0).map_err(|e| e.to_string())?;
    let ps = &s.precoders;
    ensure(ps.alloc.branch == Branch::HighChainN, || format!("branch {:?}", ps.alloc.branch))?;
    ensure(ps.chain_null_dims == vec![5], || format!("null dims {:?}", ps.chain_null_dims))?;
    ensure(ps.alignment_residual <= 1e-9, || format!("chain residual {:e}", ps.alignment_residual))?;
    let cs = gen_generic(&params((12, 21, 12, 12, 12)), 0);
    let s = build_scheme(&cs, 0).map_err(|e| e.to_string())?;
    let groups = s.precoders.alloc.r_prime_hat();
    ensure(groups == Some((3, 2)), || format!("groups {groups:?}"))?;
    let rep = run_trial(&cs, 0, &VerifyOptions::default());
    ensure(rep.pass, || format!("{:?}", rep.failure_reason()))?;
    let zs: Vec<usize> = rep.receivers.iter().map(|x| x.z_measured).collect();
    ensure(zs == vec![13; 3] && rep.streams_per_user + 13 == 21, || format!("Z {zs:?}"))?;
    Ok(format!("null dim 5, residual {:.1e}; (r',r^)=(3,2), Z=13, 8+13=21", ps.alignment_residual))
}

fn sweep_points() -> Outcome {
    let dir = std::env::temp_dir().join(format!("rdic-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join("fig.csv");
    let mut checked = 0;
    for n in [6u32, 8, 12] {
        let status = Command::new(env!("CARGO_BIN_EXE_rdic"))
            .args(["sweep", "--n", &n.to_string(), "--grid", &n.to_string(), "--out", path.to_str().unwrap()])
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("sweep exited with {status}"))?;
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let (x, spec, y) = (f[0], f[1], f[2]);
            if spec == "0" {
                ensure(y == x, || format!("N={n}: {line}"))?;
                checked += 1;
            } else if x == "1" && ["M", "3M/2", "2M"].contains(&spec) {
                ensure(y == "0.5", || format!("N={n}: {line}"))?;
                checked += 1;
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{checked} rows checked"))
}

fn exact_rank(a: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = a.iter().map(|row| row.iter().map(|&v| r(v, 1)).collect()).collect();
    let (rows, cols) = (m.len(), m[0].len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..rows).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(rank, pivot);
        let inv = BigRational::one() / &m[rank][c];
        for i in 0..rows {
            if i != rank && !m[i][c].is_zero() {
                let f = &m[i][c] * &inv;
                for j in c..cols {
                    let v = &f * &m[rank][j];
                    m[i][j] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn subspace_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = 1200;
    for s in 0..samples {
        let (rows, cols, inner) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(0..=6));
        let l: Vec<Vec<i64>> = (0..rows).map(|_| (0..inner).map(|_| rng.random_range(-4..=4)).collect()).collect();
        let rt: Vec<Vec<i64>> = (0..inner).map(|_| (0..cols).map(|_| rng.random_range(-4..=4)).collect()).collect();
        let a: Vec<Vec<i64>> =
            (0..rows).map(|i| (0..cols).map(|j| (0..inner).map(|k| l[i][k] * rt[k][j]).sum()).collect()).collect();
        let m = DMatrix::from_fn(rows, cols, |i, j| Complex64::new(a[i][j] as f64, 0.0));
        let num = numerical_rank(&m, None).map_err(|e| e.to_string())?;
        ensure(num == exact_rank(&a), || format!("sample {s}: {a:?}"))?;
    }
    let mut generic = 0;
    for seed in 0..100u64 {
        let mut g = substream(seed, &["oracle".into()]);
        let n = g.random_range(2..=10);
        let (a, b) = (g.random_range(1..=n), g.random_range(1..=n));
        let (ua, ub): (CMatrix, CMatrix) = (complex_gaussian_matrix(n, a, &mut g), complex_gaussian_matrix(n, b, &mut g));
        let sa = SubspaceBasis::span_of(&ua, None).map_err(|e| e.to_string())?;
        let sb = SubspaceBasis::span_of(&ub, None).map_err(|e| e.to_string())?;
        let inter = intersect_subspaces(&sa, &sb).map_err(|e| e.to_string())?.dim();
        ensure(inter == (a + b).saturating_sub(n), || format!("n={n} a={a} b={b}: intersection {inter}"))?;
        let rank = g.random_range(0..=a.min(b));
        let prod = complex_gaussian_matrix(n, rank, &mut g) * complex_gaussian_matrix(rank, b, &mut g);
        let null = null_space_basis(&prod, None).map_err(|e| e.to_string())?.dim();
        ensure(null == b - rank, || format!("nullity {null} != {}", b - rank))?;
        generic += 1;
    }
    Ok(format!("{samples} integer matrices, {generic} generic constructions"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("formula fidelity", formula_fidelity),
        ("worked example", worked_example),
        ("achievability sweep", achievability_sweep),
        ("equivalent-channel pattern", equivalent_pattern),
        ("alignment-chain certificate", chain_certificate),
        ("Fig. 2 data points", sweep_points),
        ("subspace oracle equivalence", subspace_oracle),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("[PASS] {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
