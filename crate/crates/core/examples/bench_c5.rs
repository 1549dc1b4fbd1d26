use lsbl_core::baselines::{self, GreedyConfig};
use lsbl_core::bayes::{self, SblConfig};
use lsbl_core::datagen::{self, AmplitudeSpec, GenConfig, StructureKind, StructureSpec};
use lsbl_core::lsbl::{self, Variant};
use lsbl_core::mat::Mat;
use lsbl_core::metrics;
use lsbl_core::rng::Rng;
use lsbl_core::train::{self, ModelSpec, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let r: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let m: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(32);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let cfg = GenConfig {
        m: 30, n: 50, l: 1,
        structure: StructureSpec { kind: StructureKind::Unstructured, k_min: 1, k_max: 15 },
        amplitude: AmplitudeSpec::UniformShell { lo: 0.75, hi: 1.0 },
        noise_var: 0.0, per_sample_matrix: false, count: 20_000,
    };
    let ds = datagen::generate(&cfg, &Rng::new(1)).unwrap();
    let spec = ModelSpec::new(Variant::Nw1, 8);
    let tcfg = TrainConfig {
        steps_per_phase: r,
        batch_size: m,
        seed: 2,
        optimizer: lsbl_core::train::OptimizerConfig::Adam {
            rate: lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        ..Default::default()
    };
    let t1 = Instant::now();
    let out = train::train_layerwise(&ds, &spec, &tcfg).unwrap();
    println!("train R={r} m={m}: {:?}, first {:.4} last {:.4}", t1.elapsed(),
             out.log.first().unwrap().loss, out.log.last().unwrap().loss);
    let model = out.model;
    let eval_rng = Rng::new(99);
    for k in [4usize, 8, 12] {
        let mut tcfg2 = cfg.clone();
        tcfg2.structure.k_min = k; tcfg2.structure.k_max = k; tcfg2.count = 500;
        let test = datagen::generate(&tcfg2, &eval_rng.split(k as u64)).unwrap();
        let mut truth = Vec::new(); let mut lsbl_est = Vec::new(); let mut sbl_est = Vec::new(); let mut omp_est = Vec::new();
        for s in &test.samples {
            truth.push(s.x.clone());
            lsbl_est.push(lsbl::forward_x(&model, &s.a, &s.y, 1e-6).unwrap());
            sbl_est.push(bayes::run_sbl(&s.a, &s.y, 1e-6, &SblConfig::with_iterations(8)).unwrap().xhat);
            let o = baselines::omp(&s.a, &s.y, &GreedyConfig { max_nonzeros: k, residual_tol: 1e-9 }).unwrap();
            omp_est.push(Mat::col_vec(&o));
        }
        println!("K={k}: lsbl {:.4} sbl8 {:.4} omp {:.4}",
            metrics::rmse(&truth, &lsbl_est).unwrap().value,
            metrics::rmse(&truth, &sbl_est).unwrap().value,
            metrics::rmse(&truth, &omp_est).unwrap().value);
    }
}
