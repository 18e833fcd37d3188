use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gencsi_core::channel::{
    build_dataset, clean_dataset, generate_channel_with, load_dataset, make_pilot_observation, save_dataset,
    ChannelSample, CleanPolicy, Environment, ImbalanceRatio, ScenarioClass, DEFAULT_ZSCORE_THRESHOLD, IQR_FENCE,
};
use gencsi_core::diffusion::{estimate_posterior_mean, sampling_seed, train_denoiser, DiffusionEstimator};
use gencsi_core::eval::{emit_report, mean_std, nmse, sweep, EvalError, EvalResult, RunConfig, RESULT_FILE};
use gencsi_core::gan::{balance_dataset, load_discriminator, save_discriminator, train_gan, TrainedGenerator};
use gencsi_core::moe::{
    llm_gate, make_client, random_gate, rule_gate, ExpertRegistry, GateDecision, StateEnvironment, UserState,
};
use gencsi_core::rng::{derive_seed, tag};
use gencsi_core::validate::{
    calibrate, validate_estimate, write_report_log, HallucinationSummary, ValidationRecord, ValidatorConfig,
};

#[derive(Parser)]
#[command(name = "gencsi", version, about = "Generative channel estimation with hallucination mitigation")]
struct Cli {
    /// Run configuration (TOML). Built-in desk-scale defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed. For `sweep` it replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Zscore,
    Iqr,
    HashDedup,
}

#[derive(Clone, Copy, ValueEnum)]
enum GateKind {
    Rule,
    Llm,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an imbalanced synthetic dataset into <out>/dataset.
    GenData {
        #[arg(long)]
        total: Option<usize>,
        /// NLoS:LoS ratio, e.g. 1:4.
        #[arg(long)]
        ratio: Option<String>,
    },
    /// Remove outliers or duplicates; writes <out>/dataset-clean.
    Clean {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "zscore")]
        policy: Policy,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train the NLoS GAN on a dataset; writes <out>/gan.
    TrainGan {
        #[arg(long)]
        data: PathBuf,
    },
    /// Top up NLoS with GAN samples until it matches LoS; writes <out>/dataset-balanced.
    Balance {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        generator: PathBuf,
    },
    /// Train diffusion experts on their covered classes; writes <out>/experts.
    TrainDiffusion {
        #[arg(long)]
        data: PathBuf,
        /// Registry describing the experts; the default four otherwise.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Train only these expert ids.
        #[arg(long)]
        expert: Vec<String>,
        #[arg(long)]
        no_attention: bool,
    },
    /// Route one user state to an expert and print the decision as JSON.
    Gate {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, default_value = "unknown")]
        environment: String,
        #[arg(long)]
        carrier_ghz: f64,
        #[arg(long)]
        speed_kmh: f64,
        #[arg(long, value_enum, default_value = "llm")]
        kind: GateKind,
    },
    /// Estimate fresh test channels of one class through the gate.
    Estimate {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        class: ScenarioClass,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, value_enum, default_value = "llm")]
        kind: GateKind,
    },
    /// Run the hallucination checks over a dataset with its own labels.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        discriminator: PathBuf,
        /// Stored thresholds. Without it they are calibrated and written to <out>/validator.json.
        #[arg(long)]
        validator: Option<PathBuf>,
    },
    /// Full strategy x SNR sweep; writes CSV and SVG files into <out>.
    Sweep,
    /// Re-render CSV and SVG files from a sweep's result.json.
    Report {
        #[arg(long)]
        from: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn parse_ratio(s: &str) -> Result<ImbalanceRatio> {
    let (a, b) = s.split_once(':').context("ratio must look like NLOS:LOS, e.g. 1:4")?;
    Ok(ImbalanceRatio {
        nlos: a.trim().parse()?,
        los: b.trim().parse()?,
    })
}

fn registry_or_default(path: Option<&Path>, dir: &Path) -> Result<ExpertRegistry> {
    Ok(match path {
        Some(p) => ExpertRegistry::load(p)?,
        None => ExpertRegistry::default_four(dir),
    })
}

fn decide(kind: GateKind, state: &UserState, registry: &ExpertRegistry, cfg: &RunConfig, seed: u64) -> Result<GateDecision> {
    Ok(match kind {
        GateKind::Rule => rule_gate(state, registry)?,
        GateKind::Llm => {
            let client = make_client(&cfg.llm, registry);
            llm_gate(state, registry, client.as_ref(), cfg.llm.timeout_ms)?
        }
        GateKind::Random => random_gate(state, registry, seed)?,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli)?;
    let seed = cfg.seeds[0];
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::GenData { total, ratio } => {
            let mut gen = cfg.dataset.clone();
            if let Some(t) = total {
                gen.total = t;
            }
            if let Some(r) = ratio {
                gen.ratio = parse_ratio(&r)?;
            }
            let ds = build_dataset(&gen, seed)?;
            let dir = out.join("dataset");
            save_dataset(&ds, &dir)?;
            println!(
                "wrote {} samples ({} LoS, {} NLoS) to {}",
                ds.len(),
                ds.count_environment(Environment::Los),
                ds.count_environment(Environment::Nlos),
                dir.display()
            );
        }
        Command::Clean { data, policy, threshold } => {
            let ds = load_dataset(&data)?;
            let (policy, default) = match policy {
                Policy::Zscore => (CleanPolicy::Zscore, DEFAULT_ZSCORE_THRESHOLD),
                Policy::Iqr => (CleanPolicy::Iqr, IQR_FENCE),
                Policy::HashDedup => (CleanPolicy::HashDedup, 0.0),
            };
            let (clean, removed) = clean_dataset(&ds, policy, threshold.unwrap_or(default))?;
            let dir = out.join("dataset-clean");
            save_dataset(&clean, &dir)?;
            println!("removed {} of {} samples; wrote {}", removed.len(), ds.len(), dir.display());
        }
        Command::TrainGan { data } => {
            let ds = load_dataset(&data)?;
            let nlos: Vec<ChannelSample> = ds
                .samples()
                .iter()
                .filter(|s| s.scenario.environment == Environment::Nlos)
                .cloned()
                .collect();
            let mut gan = cfg.gan.clone();
            gan.train.seed = derive_seed(seed, &[tag("gan")]);
            let (generator, disc, history) = train_gan(&nlos, &gan)?;
            let dir = out.join("gan");
            fs::create_dir_all(&dir)?;
            generator.save(&dir.join("generator.ckpt"))?;
            save_discriminator(&disc, &dir.join("discriminator.ckpt"))?;
            write_json(&dir.join("history.json"), &history)?;
            println!(
                "trained on {} NLoS samples; final diversity {:.3}; wrote {}",
                nlos.len(),
                history.diversity.last().copied().unwrap_or(f64::NAN),
                dir.display()
            );
        }
        Command::Balance { data, generator } => {
            let ds = load_dataset(&data)?;
            let gen = TrainedGenerator::load(&generator)?;
            let balanced = balance_dataset(&ds, &gen, derive_seed(seed, &[tag("balance")]))?;
            let dir = out.join("dataset-balanced");
            save_dataset(&balanced, &dir)?;
            println!(
                "{} -> {} samples ({} LoS, {} NLoS); wrote {}",
                ds.len(),
                balanced.len(),
                balanced.count_environment(Environment::Los),
                balanced.count_environment(Environment::Nlos),
                dir.display()
            );
        }
        Command::TrainDiffusion { data, registry, expert, no_attention } => {
            let ds = load_dataset(&data)?;
            let dir = out.join("experts");
            let reg = registry_or_default(registry.as_deref(), &dir)?;
            for id in &expert {
                if !reg.contains(id) {
                    bail!("unknown expert `{id}`");
                }
            }
            let mut denoiser = cfg.diffusion.denoiser;
            denoiser.attention = !no_attention;
            let mut pilots = cfg.diffusion.pilots;
            pilots.spacing = cfg.pilot_spacing;
            fs::create_dir_all(&dir)?;
            let mut losses = std::collections::BTreeMap::new();
            for e in reg.experts().iter().filter(|e| expert.is_empty() || expert.contains(&e.id)) {
                let samples: Vec<ChannelSample> =
                    ds.samples().iter().filter(|s| e.coverage.contains(&s.scenario)).cloned().collect();
                if samples.is_empty() {
                    bail!("expert `{}` covers no sample in {}", e.id, data.display());
                }
                let mut train = cfg.diffusion.train.clone();
                train.seed = derive_seed(seed, &[tag("expert"), tag(&e.id)]);
                let (model, loss) = train_denoiser(
                    &e.id,
                    &samples,
                    denoiser,
                    &train,
                    &pilots,
                    cfg.diffusion.schedule,
                    e.coverage.iter().copied().collect(),
                )?;
                let path = dir.join(format!("{}.ckpt", e.id));
                model.save(&path)?;
                println!("{}: {} samples, final loss {:.4}", e.id, samples.len(), loss.last().copied().unwrap_or(f64::NAN));
                losses.insert(e.id.clone(), loss);
            }
            let trained = ExpertRegistry::new(
                reg.experts()
                    .iter()
                    .map(|e| {
                        let mut e = e.clone();
                        e.checkpoint = PathBuf::from(format!("{}.ckpt", e.id));
                        e
                    })
                    .collect(),
            )?;
            trained.save(&dir.join("registry.toml"))?;
            write_json(&dir.join("losses.json"), &losses)?;
            println!("wrote {}", dir.display());
        }
        Command::Gate {
            registry,
            environment,
            carrier_ghz,
            speed_kmh,
            kind,
        } => {
            let reg = registry_or_default(registry.as_deref(), &out.join("experts"))?;
            let env = StateEnvironment::parse(&environment).context("environment must be los, nlos or unknown")?;
            let state = UserState::new(env, carrier_ghz, speed_kmh)?;
            let decision = decide(kind, &state, &reg, &cfg, seed)?;
            println!("{}", serde_json::to_string(&decision)?);
        }
        Command::Estimate {
            registry,
            class,
            snr,
            count,
            kind,
        } => {
            let reg = ExpertRegistry::load(&registry)?;
            let state = UserState::of_class(class);
            let decision = decide(kind, &state, &reg, &cfg, seed)?;
            let expert = reg.get(&decision.expert_id).expect("gate returns registered ids");
            let model = DiffusionEstimator::load(&expert.checkpoint)?;
            println!("expert {} ({:?})", expert.id, decision.source);
            let mut values = Vec::with_capacity(count);
            for k in 0..count as u64 {
                let h = generate_channel_with(class, derive_seed(seed, &[tag("cli-channel"), k]), &cfg.dataset.multipath).h;
                let obs = make_pilot_observation(&h, cfg.pilot_spacing, snr, derive_seed(seed, &[tag("cli-noise"), k]))?;
                let est = estimate_posterior_mean(&obs, &model, sampling_seed(seed, k), cfg.diffusion.draws)?;
                let v = nmse(&est, &h)?;
                println!("{k}\t{v}");
                values.push(v);
            }
            let (mean, std) = mean_std(&values);
            println!("mean NMSE {mean:.4} (std {std:.4}, n {count}) at {snr} dB");
        }
        Command::Validate {
            data,
            discriminator,
            validator,
        } => {
            let ds = load_dataset(&data)?;
            let disc = load_discriminator(&discriminator)?;
            fs::create_dir_all(&out)?;
            let vcfg = match validator {
                Some(p) => ValidatorConfig::from_json(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => {
                    let classes = ScenarioClass::all();
                    let held_out: Vec<ChannelSample> = (0..cfg.validator.calibration_samples)
                        .map(|k| {
                            generate_channel_with(
                                classes[k % classes.len()],
                                derive_seed(seed, &[tag("calibration"), k as u64]),
                                &cfg.dataset.multipath,
                            )
                        })
                        .collect();
                    let mut v = calibrate(&disc, ds.samples(), &held_out)?;
                    v.p_lo = cfg.validator.p_lo;
                    v.p_hi = cfg.validator.p_hi;
                    v.magnitude_cap = cfg.validator.magnitude_cap;
                    v.validate()?;
                    let path = out.join("validator.json");
                    fs::write(&path, v.to_json())?;
                    println!("calibrated thresholds written to {}", path.display());
                    v
                }
            };
            let mut records = Vec::with_capacity(ds.len());
            for (k, s) in ds.samples().iter().enumerate() {
                records.push(ValidationRecord {
                    id: k.to_string(),
                    declared: s.scenario,
                    report: validate_estimate(&s.h, s.scenario, Some(&disc), &vcfg)?,
                });
            }
            let log_path = out.join("validation.jsonl");
            write_report_log(&log_path, &records)?;
            let reports: Vec<_> = records.into_iter().map(|r| r.report).collect();
            let summary = HallucinationSummary::from_reports(&reports)?;
            println!("{}", serde_json::to_string(&summary)?);
            println!("wrote {}", log_path.display());
        }
        Command::Sweep => match sweep(&cfg) {
            Ok(r) => println!("{} cells complete; report in {}", r.cell_count(), out.display()),
            Err(EvalError::Partial { completed, failures }) => {
                eprintln!("{} cells complete, {} failed:", completed.cell_count(), failures.len());
                for f in &failures {
                    eprintln!("  {f}");
                }
                return Ok(ExitCode::from(2));
            }
            Err(e) => return Err(e.into()),
        },
        Command::Report { from } => {
            let result = EvalResult::load(&from.join(RESULT_FILE))?;
            emit_report(&result, &out)?;
            println!("wrote report for {} cells to {}", result.cell_count(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
