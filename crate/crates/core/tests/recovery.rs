//! Generate-and-check recovery harnesses for the classical solvers and the
//! greedy baselines. These are statistical, but every stream is seeded, so
//! the outcomes are fixed.

use lsbl_core::baselines::{self, GreedyConfig};
use lsbl_core::bayes::{self, PcSblConfig, SblConfig};
use lsbl_core::datagen::{self, AmplitudeSpec, GenConfig, StructureKind, StructureSpec};
use lsbl_core::mat::{self, Mat};
use lsbl_core::metrics::{self, SupportRule};
use lsbl_core::rng::Rng;

fn shell() -> AmplitudeSpec {
    AmplitudeSpec::UniformShell { lo: 0.75, hi: 1.0 }
}

#[test]
fn sbl_recovers_single_spike_support() {
    // noiseless K=1: the largest recovered entry must sit on the true support
    let mut successes = 0;
    for seed in 0..100u64 {
        let mut rng = Rng::new(1000 + seed);
        let a = rng.gaussian(30, 50);
        let k_idx = rng.next_index(50);
        let mut x = Mat::zeros(50, 1);
        x.set(k_idx, 0, if rng.next_f64() < 0.5 { -1.0 } else { 1.0 });
        let y = mat::matmul(&a, &x).unwrap();
        let est = bayes::run_sbl(&a, &y, 1e-6, &SblConfig::with_iterations(20)).unwrap();
        let best = (0..50)
            .max_by(|&i, &j| {
                est.xhat
                    .get(i, 0)
                    .abs()
                    .partial_cmp(&est.xhat.get(j, 0).abs())
                    .unwrap()
            })
            .unwrap();
        if best == k_idx {
            successes += 1;
        }
    }
    assert!(successes >= 99, "only {successes}/100 recoveries");
}

#[test]
fn msbl_beats_columnwise_sbl_on_joint_sparse() {
    let cfg = GenConfig {
        m: 30,
        n: 50,
        l: 3,
        structure: StructureSpec {
            kind: StructureKind::JointSparse,
            k_min: 10,
            k_max: 10,
        },
        amplitude: shell(),
        noise_var: 0.0,
        per_sample_matrix: false,
        count: 500,
    };
    let ds = datagen::generate(&cfg, &Rng::new(2)).unwrap();
    let solver_cfg = SblConfig::with_iterations(20);
    let mut msbl_probs = Vec::new();
    let mut sbl_probs = Vec::new();
    for s in &ds.samples {
        let est = bayes::run_msbl(&s.a, &s.y, 1e-6, &solver_cfg).unwrap();
        let truth_rows = metrics::row_magnitudes(&s.x);
        let est_rows = metrics::row_magnitudes(&est.xhat);
        msbl_probs.push(metrics::support_prob(&truth_rows, &est_rows, SupportRule::TopK).unwrap());

        // column-wise SBL on the same sample, support judged per column
        let mut col_probs = Vec::new();
        for c in 0..3 {
            let yc = Mat::col_vec(&s.y.col(c));
            let xc = s.x.col(c);
            let est_c = bayes::run_sbl(&s.a, &yc, 1e-6, &solver_cfg).unwrap();
            col_probs.push(
                metrics::support_prob(&xc, est_c.xhat.as_slice(), SupportRule::TopK).unwrap(),
            );
        }
        // the sample counts as recovered only if every column is
        sbl_probs.push(if col_probs.iter().all(|&p| p == 1.0) {
            1.0
        } else {
            0.0
        });
    }
    let msbl_fr = metrics::failure_rate(&msbl_probs).unwrap();
    let sbl_fr = metrics::failure_rate(&sbl_probs).unwrap();
    assert!(
        msbl_fr <= sbl_fr,
        "M-SBL failure rate {msbl_fr} vs column-wise SBL {sbl_fr}"
    );
}

#[test]
fn pcsbl_beats_sbl_on_block_sparse() {
    let cfg = GenConfig {
        m: 40,
        n: 100,
        l: 1,
        structure: StructureSpec {
            kind: StructureKind::BlockSparse { blocks: 3 },
            k_min: 25,
            k_max: 25,
        },
        amplitude: shell(),
        noise_var: 0.0,
        per_sample_matrix: false,
        count: 500,
    };
    let ds = datagen::generate(&cfg, &Rng::new(3)).unwrap();
    let mut truth = Vec::new();
    let mut pcsbl_est = Vec::new();
    let mut sbl_est = Vec::new();
    for s in &ds.samples {
        let pc = bayes::run_pcsbl(&s.a, &s.y, 1e-6, &PcSblConfig::with_iterations(25)).unwrap();
        let sb = bayes::run_sbl(&s.a, &s.y, 1e-6, &SblConfig::with_iterations(25)).unwrap();
        truth.push(s.x.clone());
        pcsbl_est.push(pc.xhat);
        sbl_est.push(sb.xhat);
    }
    let pc_rmse = metrics::rmse(&truth, &pcsbl_est).unwrap().value;
    let sbl_rmse = metrics::rmse(&truth, &sbl_est).unwrap().value;
    assert!(
        pc_rmse < sbl_rmse,
        "PC-SBL rmse {pc_rmse} vs SBL {sbl_rmse}"
    );
}

fn normalized_gaussian(rng: &mut Rng, m: usize, n: usize) -> Mat {
    let mut a = rng.gaussian(m, n);
    for j in 0..n {
        let norm: f64 = (0..m).map(|i| a.get(i, j) * a.get(i, j)).sum::<f64>().sqrt();
        for i in 0..m {
            a.set(i, j, a.get(i, j) / norm);
        }
    }
    a
}

#[test]
fn omp_exact_recovery_rate_at_k3() {
    let mut hits = 0;
    for seed in 0..1000u64 {
        let mut rng = Rng::new(4000 + seed);
        let a = normalized_gaussian(&mut rng, 30, 50);
        let support = rng.subset(50, 3);
        let mut x = Mat::zeros(50, 1);
        for &i in &support {
            let mag = 0.75 + 0.25 * rng.next_f64();
            x.set(i, 0, if rng.next_f64() < 0.5 { -mag } else { mag });
        }
        let y = mat::matmul(&a, &x).unwrap();
        let est = baselines::omp(
            &a,
            &y,
            &GreedyConfig {
                max_nonzeros: 3,
                residual_tol: 1e-10,
            },
        )
        .unwrap();
        let got: Vec<usize> = (0..50).filter(|&i| est[i] != 0.0).collect();
        if got == support {
            hits += 1;
        }
    }
    assert!(hits >= 950, "OMP exact recovery {hits}/1000");
}

#[test]
fn cosamp_exact_recovery_rate_at_k3() {
    let mut hits = 0;
    for seed in 0..1000u64 {
        let mut rng = Rng::new(5000 + seed);
        let a = normalized_gaussian(&mut rng, 30, 50);
        let support = rng.subset(50, 3);
        let mut x = Mat::zeros(50, 1);
        for &i in &support {
            let mag = 0.75 + 0.25 * rng.next_f64();
            x.set(i, 0, if rng.next_f64() < 0.5 { -mag } else { mag });
        }
        let y = mat::matmul(&a, &x).unwrap();
        let est = baselines::cosamp(&a, &y, 3, 20).unwrap();
        let prob = metrics::support_prob(x.as_slice(), &est, SupportRule::TopK).unwrap();
        if prob == 1.0 {
            hits += 1;
        }
    }
    assert!(hits >= 950, "CoSaMP recovery {hits}/1000");
}
