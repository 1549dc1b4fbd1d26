//! The five subcommands. Every command is a pure function of
//! (config, seed): data, training, and evaluation draw from independent
//! named streams of the global seed, outputs carry no timestamps, and all
//! float formatting goes through `Display`, so reruns are byte-identical.

use crate::config::{DataSection, ExperimentConfig, SweepJson};
use crate::error::CliError;
use crate::solvers::{self, SolverSpec};
use lsbl_core::data::{Dataset, Sample};
use lsbl_core::datagen::{self, GenConfig};
use lsbl_core::lsbl::{self, LsblModel};
use lsbl_core::metrics::SupportRule;
use lsbl_core::radar::{self, RadarScene, TargetSpec};
use lsbl_core::rng::Rng;
use lsbl_core::train::{self, ModelSpec, TrainEvent};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub serial: bool,
}

impl Context {
    pub fn new(
        config: ExperimentConfig,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
        serial: bool,
    ) -> Self {
        let seed = seed_override.unwrap_or(config.seed);
        let out_dir = out_override.unwrap_or_else(|| config.out_dir.clone());
        Context {
            config,
            seed,
            out_dir,
            serial,
        }
    }

    fn ensure_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    fn root_rng(&self) -> Rng {
        Rng::new(self.seed)
    }
}

pub fn dataset_path(out_dir: &Path) -> PathBuf {
    out_dir.join("dataset.lsblds")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn cmd_generate(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let path = dataset_path(&ctx.out_dir);
    let data_rng = ctx.root_rng().named("data");
    match &ctx.config.data {
        DataSection::Synthetic(json) => {
            let cfg = json.to_gen_config()?;
            let ds = datagen::generate_with(&cfg, &data_rng, !ctx.serial)?;
            datagen::write_dataset(&ds, &path)?;
            print_dataset_digest(&ds, &cfg, &path);
        }
        DataSection::Radar(json) => {
            let count = json.count.ok_or_else(|| {
                CliError::Schema("radar generate needs `count` in the data section".into())
            })?;
            if count == 0 {
                return Err(CliError::Schema("count must be >= 1".into()));
            }
            let scene = radar::build_dictionary(&json.to_radar_config()?)?;
            let target = json.to_target_spec();
            let power =
                radar::estimate_signal_power(&scene, &target, &data_rng.split(0), 512)?;
            let samples: Result<Vec<Sample>, CliError> = (0..count)
                .map(|i| {
                    let mut stream = data_rng.split(i as u64 + 1);
                    Ok(radar::synthesize_sweeps(
                        &scene,
                        &target,
                        json.snr_db,
                        power,
                        &mut stream,
                    )?)
                })
                .collect();
            let ds = Dataset::new(samples?, true)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            datagen::write_dataset(&ds, &path)?;
            let (m, n, l) = ds.dims();
            println!(
                "wrote {} | radar sweeps {}x{} L={} count={} snr_db={}",
                path.display(),
                m,
                n,
                l,
                ds.len(),
                json.snr_db.map_or("noiseless".into(), |v| v.to_string()),
            );
        }
    }
    Ok(())
}

fn print_dataset_digest(ds: &Dataset, cfg: &GenConfig, path: &Path) {
    let (m, n, l) = ds.dims();
    println!(
        "wrote {} | {}x{} L={} count={} structure={:?} k=[{}, {}] shared_matrix={} noise_var={}",
        path.display(),
        m,
        n,
        l,
        ds.len(),
        cfg.structure.kind,
        cfg.structure.k_min,
        cfg.structure.k_max,
        ds.shared_matrix,
        cfg.noise_var,
    );
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainSink {
    log: BufWriter<File>,
    checkpoint_every: usize,
    out_dir: PathBuf,
}

impl TrainSink {
    fn handle(&mut self, ev: &TrainEvent<'_>) {
        match ev {
            TrainEvent::Step(rec) => {
                let _ = writeln!(
                    self.log,
                    "{},{},{},{}",
                    rec.phase, rec.layer, rec.step, rec.loss
                );
            }
            TrainEvent::LayerDone { layer, model } => {
                if self.checkpoint_every > 0 && layer % self.checkpoint_every == 0 {
                    let path = self.out_dir.join(format!("checkpoint_layer_{layer}.lsbl"));
                    let _ = lsbl::save_model(model, &path);
                }
            }
            TrainEvent::PhaseStart { .. } => {}
        }
    }
}

fn run_training(
    ctx: &Context,
    dataset: &Dataset,
    resume: Option<&LsblModel>,
) -> Result<LsblModel, CliError> {
    let model_section = ctx
        .config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Schema("training needs a `model` section".into()))?;
    let train_section = ctx
        .config
        .train
        .as_ref()
        .ok_or_else(|| CliError::Schema("training needs a `train` section".into()))?;
    let spec = ModelSpec {
        variant: model_section.variant()?,
        depth: model_section.layers,
        gamma_floor: model_section.gamma_floor,
        gamma_cap: model_section.gamma_cap,
    };
    if spec.depth == 0 {
        return Err(CliError::Schema("model needs layers >= 1".into()));
    }
    let train_seed = ctx.root_rng().named("train").next_u64();
    let cfg = train_section.to_train_config(train_seed, !ctx.serial)?;
    let log_path = ctx.out_dir.join("training_log.csv");
    let mut sink = TrainSink {
        log: BufWriter::new(File::create(&log_path)?),
        checkpoint_every: train_section.checkpoint_every_layers,
        out_dir: ctx.out_dir.clone(),
    };
    writeln!(sink.log, "phase,layer,step,loss")?;
    let outcome =
        train::train_layerwise_observed(dataset, &spec, &cfg, resume, |ev| sink.handle(&ev))?;
    sink.log.flush()?;
    let final_loss = outcome.log.last().map(|r| r.loss);
    let model_path = ctx.config.model_path()?;
    lsbl::save_model(&outcome.model, &model_path)?;
    println!(
        "trained {} layers | final batch loss {} | model {} | log {}",
        outcome.model.depth(),
        final_loss.map_or("n/a".into(), |v| v.to_string()),
        model_path.display(),
        log_path.display(),
    );
    Ok(outcome.model)
}

pub fn cmd_train(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let train_section = ctx
        .config
        .train
        .as_ref()
        .ok_or_else(|| CliError::Schema("train needs a `train` section".into()))?;
    let ds_path = train_section
        .dataset
        .clone()
        .unwrap_or_else(|| dataset_path(&ctx.out_dir));
    let dataset = datagen::read_dataset(&ds_path)?;
    let resume = match &train_section.resume_from {
        Some(p) => Some(lsbl::load_model(p)?),
        None => None,
    };
    run_training(ctx, &dataset, resume.as_ref())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn support_rule(threshold: Option<f64>) -> SupportRule {
    match threshold {
        Some(f) => SupportRule::RelativeThreshold(f),
        None => SupportRule::TopK,
    }
}

pub fn cmd_eval(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let eval = ctx
        .config
        .eval
        .as_ref()
        .ok_or_else(|| CliError::Schema("eval needs an `eval` section".into()))?;
    if eval.samples == 0 {
        return Err(CliError::Schema("eval needs samples >= 1".into()));
    }
    let DataSection::Synthetic(data) = &ctx.config.data else {
        return Err(CliError::Schema(
            "eval sweeps synthetic data; use the radar command for SNR sweeps".into(),
        ));
    };
    let SweepJson::Sparsity(levels) = &eval.sweep else {
        return Err(CliError::Schema(
            "eval sweeps sparsity; use the radar command for SNR sweeps".into(),
        ));
    };
    if levels.is_empty() {
        return Err(CliError::Schema("sweep needs at least one level".into()));
    }
    let specs: Result<Vec<SolverSpec>, CliError> = eval
        .solvers
        .iter()
        .map(SolverSpec::from_json)
        .collect();
    let specs = specs?;
    if specs.is_empty() {
        return Err(CliError::Schema("eval needs at least one solver".into()));
    }
    let rule = support_rule(eval.support_threshold);
    let eval_rng = ctx.root_rng().named("eval");
    let base = data.to_gen_config()?;
    let mut rows = Vec::new();
    for &k in levels {
        let mut cfg = base.clone();
        cfg.structure.k_min = k;
        cfg.structure.k_max = k;
        cfg.count = eval.samples;
        cfg.validate().map_err(|e| CliError::Schema(e.to_string()))?;
        let test = datagen::generate_with(&cfg, &eval_rng.split(k as u64), !ctx.serial)?;
        for spec in &specs {
            let point = solvers::evaluate_solver(
                spec,
                &test.samples,
                eval.solver_noise_var,
                rule,
                !ctx.serial,
            )?;
            rows.push(vec![
                k.to_string(),
                spec.label().to_string(),
                point.rmse.to_string(),
                point.failure_rate.to_string(),
                point.samples.to_string(),
            ]);
        }
    }
    let path = ctx.out_dir.join("results.csv");
    write_csv(&path, "sweep,solver,rmse,failure_rate,p", &rows)?;
    println!(
        "wrote {} | {} sweep points x {} solvers, P={}",
        path.display(),
        levels.len(),
        specs.len(),
        eval.samples
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// dump-weights
// ---------------------------------------------------------------------------

pub fn cmd_dump_weights(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let model_path = ctx.config.model_path()?;
    let model = lsbl::load_model(&model_path)?;
    let sq_len = model.n * model.l;
    let phi_len = model.variant.feature_len(model.n, model.l) - sq_len;
    let mut header: Vec<String> = Vec::new();
    header.extend((0..sq_len).map(|i| format!("sq_{i}")));
    header.extend((0..phi_len).map(|i| format!("phi_{i}")));
    header.push("bias".into());
    for (idx, layer) in model.layers.iter().enumerate() {
        let path = ctx.out_dir.join(format!("weights_layer_{}.csv", idx + 1));
        let rows: Vec<Vec<String>> = (0..layer.w.rows())
            .map(|r| {
                let mut row: Vec<String> =
                    layer.w.row(r).iter().map(|v| v.to_string()).collect();
                row.push(layer.b[r].to_string());
                row
            })
            .collect();
        write_csv(&path, &header.join(","), &rows)?;
    }
    println!(
        "wrote {} weight files to {}",
        model.depth(),
        ctx.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// radar
// ---------------------------------------------------------------------------

fn radar_training_set(
    scene: &RadarScene,
    target: &TargetSpec,
    snr_range: [f64; 2],
    count: usize,
    power: f64,
    rng: &Rng,
) -> Result<Dataset, CliError> {
    let samples: Result<Vec<Sample>, CliError> = (0..count)
        .map(|i| {
            let mut stream = rng.split(i as u64);
            let snr = snr_range[0] + (snr_range[1] - snr_range[0]) * stream.next_f64();
            Ok(radar::synthesize_sweeps(
                scene,
                target,
                Some(snr),
                power,
                &mut stream,
            )?)
        })
        .collect();
    Dataset::new(samples?, true).map_err(|e| CliError::Numerical(e.to_string()))
}

pub fn cmd_radar(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let DataSection::Radar(json) = &ctx.config.data else {
        return Err(CliError::Schema("radar needs radar data".into()));
    };
    let eval = ctx
        .config
        .eval
        .as_ref()
        .ok_or_else(|| CliError::Schema("radar needs an `eval` section".into()))?;
    let SweepJson::SnrDb(points) = &eval.sweep else {
        return Err(CliError::Schema("radar sweeps snr_db".into()));
    };
    if points.is_empty() || eval.samples == 0 {
        return Err(CliError::Schema(
            "radar needs sweep points and samples >= 1".into(),
        ));
    }
    let scene = radar::build_dictionary(&json.to_radar_config()?)?;
    let target = json.to_target_spec();
    let data_rng = ctx.root_rng().named("data");
    let power = radar::estimate_signal_power(&scene, &target, &data_rng.split(0), 512)?;

    // load an existing model, otherwise train one on randomly-SNR'd sweeps
    let model_path = ctx.config.model_path()?;
    let model = if model_path.exists() {
        let m = lsbl::load_model(&model_path)?;
        println!("loaded model {}", model_path.display());
        m
    } else {
        let train_section = ctx.config.train.as_ref().ok_or_else(|| {
            CliError::Schema("radar needs a `train` section when no model file exists".into())
        })?;
        let training = radar_training_set(
            &scene,
            &target,
            json.train_snr_db,
            train_section.train_samples,
            power,
            &data_rng.split(1),
        )?;
        run_training(ctx, &training, None)?
    };
    let n_real = 2 * scene.config.n_c();
    if model.n != n_real || model.l != scene.config.sweeps {
        return Err(CliError::Schema(format!(
            "model dims ({}, {}) do not match scene ({}, {})",
            model.n,
            model.l,
            n_real,
            scene.config.sweeps
        )));
    }

    let specs: Result<Vec<SolverSpec>, CliError> = eval
        .solvers
        .iter()
        .map(|json| {
            if json.kind == "lsbl" && json.model.is_none() {
                // the model trained or loaded above
                Ok(SolverSpec::Lsbl {
                    model: model.clone(),
                    label: json.name.clone().unwrap_or_else(|| "lsbl".into()),
                })
            } else {
                SolverSpec::from_json(json)
            }
        })
        .collect();
    let specs = specs?;
    let rule = support_rule(eval.support_threshold);
    let eval_rng = ctx.root_rng().named("eval");

    let mut rows = Vec::new();
    let mut sweep: Vec<Option<f64>> = points.iter().map(|&p| Some(p)).collect();
    if eval.include_noiseless {
        sweep.push(None);
    }
    for (pt_idx, snr) in sweep.iter().enumerate() {
        let stream = eval_rng.split(pt_idx as u64);
        let samples: Result<Vec<Sample>, CliError> = (0..eval.samples)
            .map(|i| {
                let mut s = stream.split(i as u64);
                Ok(radar::synthesize_sweeps(&scene, &target, *snr, power, &mut s)?)
            })
            .collect();
        let samples = samples?;
        let label = snr.map_or("inf".to_string(), |v| v.to_string());
        for spec in &specs {
            let point = solvers::evaluate_solver(
                spec,
                &samples,
                eval.solver_noise_var,
                rule,
                !ctx.serial,
            )?;
            rows.push(vec![
                label.clone(),
                spec.label().to_string(),
                point.rmse.to_string(),
                point.failure_rate.to_string(),
                point.samples.to_string(),
            ]);
        }
    }
    let path = ctx.out_dir.join("results.csv");
    write_csv(&path, "sweep,solver,rmse,failure_rate,p", &rows)?;
    println!(
        "wrote {} | {} SNR points x {} solvers, P={}",
        path.display(),
        sweep.len(),
        specs.len(),
        eval.samples
    );
    Ok(())
}
