use lsbl_core::datagen::{self, AmplitudeSpec, GenConfig, StructureKind, StructureSpec};
use lsbl_core::lsbl::Variant;
use lsbl_core::rng::Rng;
use lsbl_core::train::{self, ModelSpec, TrainConfig};
use std::time::Instant;

fn main() {
    let cfg = GenConfig {
        m: 30, n: 50, l: 1,
        structure: StructureSpec { kind: StructureKind::Unstructured, k_min: 1, k_max: 15 },
        amplitude: AmplitudeSpec::UniformShell { lo: 0.75, hi: 1.0 },
        noise_var: 0.0, per_sample_matrix: false, count: 10_000,
    };
    let t0 = Instant::now();
    let ds = datagen::generate(&cfg, &Rng::new(1)).unwrap();
    println!("gen 10k samples: {:?}", t0.elapsed());
    let spec = ModelSpec::new(Variant::Nw1, 8);
    let tcfg = TrainConfig { steps_per_phase: 10, batch_size: 32, seed: 2, ..Default::default() };
    let t1 = Instant::now();
    let out = train::train_layerwise(&ds, &spec, &tcfg).unwrap();
    let dt = t1.elapsed();
    println!("8-layer, R=10, m=32 -> {} steps in {:?}", out.log.len(), dt);
    // cost model: total sample-layer passes = sum_k 2*R*m*k = 2*R*m*36
    let passes = 2.0 * 10.0 * 32.0 * 36.0;
    println!("us per sample-layer pass: {:.1}", dt.as_micros() as f64 / passes);
    println!("first loss {:.4} last loss {:.4}", out.log.first().unwrap().loss, out.log.last().unwrap().loss);
}
