use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikeq::dataset::Dataset;
use spikeq::equalizer::{EqualizerKind, EqualizerSettings, Model};
use spikeq::error::{Error, Result};
use spikeq::files::read_json;
use spikeq::histogram::export_histogram;
use spikeq::link::{reference_variance, sigma2_from_db, LinkConfig};
use spikeq::sweep::{run_sweep, workers_from_env, write_artifacts, SweepConfig};
use spikeq_core::receiver::SnnConfig;
use spikeq_core::stats::{ber_confidence, count_bit_errors};
use spikeq_core::train::TrainConfig;

#[derive(Parser)]
#[command(version, about = "Spiking and conventional PAM4 equalizers over a simulated IM/DD link")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Simulate the link and write a labeled dataset.
    Generate(GenerateArgs),
    /// Train a neural equalizer on a dataset.
    Train(TrainCmd),
    /// Fit the LMMSE equalizer and its decision thresholds.
    FitLmmse(FitLmmseArgs),
    /// Measure the bit error rate of a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Run a BER sweep over a noise grid.
    Sweep(SweepArgs),
    /// Export per-class histograms of the LMMSE filter output.
    Histogram(HistogramArgs),
}

#[derive(Args, Default)]
struct LinkArgs {
    /// Symbol rate in Bd.
    #[arg(long)]
    baud_rate: Option<f64>,
    /// Wavelength in m.
    #[arg(long)]
    wavelength: Option<f64>,
    /// Dispersion in ps/(nm km).
    #[arg(long, allow_hyphen_values = true)]
    dispersion: Option<f64>,
    /// Fiber length in m.
    #[arg(long)]
    fiber_length: Option<f64>,
    #[arg(long)]
    oversampling: Option<usize>,
    #[arg(long)]
    rrc_rolloff: Option<f64>,
    /// RRC span in symbols.
    #[arg(long)]
    rrc_span: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    bias: Option<f64>,
    #[arg(long)]
    guard_symbols: Option<usize>,
    /// Seed of the guard symbols and the noise.
    #[arg(long)]
    link_seed: Option<u64>,
}

impl LinkArgs {
    fn apply(&self, mut c: LinkConfig) -> LinkConfig {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = self.$f { c.$g = v; })*};
        }
        set!(baud_rate => baud_rate, wavelength => wavelength, dispersion => dispersion_ps_nm_km,
             fiber_length => fiber_length, oversampling => oversampling, rrc_rolloff => rrc_rolloff,
             rrc_span => rrc_span, bias => bias, guard_symbols => guard_symbols, link_seed => rng_seed);
        c
    }
}

#[derive(Args, Default)]
struct TrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    adam_beta1: Option<f64>,
    #[arg(long)]
    adam_beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    surrogate_steepness: Option<f64>,
    /// Shuffling seed.
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Differentiate through the membrane reset.
    #[arg(long)]
    through_reset: bool,
}

impl TrainArgs {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = self.$f { c.$g = v; })*};
        }
        set!(lr => learning_rate, adam_beta1 => adam_beta1, adam_beta2 => adam_beta2, adam_eps => adam_eps,
             batch_size => batch_size, epochs => epochs, surrogate_steepness => surrogate_steepness,
             train_seed => rng_seed, validation_fraction => validation_fraction);
        if self.through_reset {
            c.detach_reset = false;
        }
        c
    }
}

#[derive(Args, Default)]
struct ModelArgs {
    /// Window length in samples.
    #[arg(long)]
    n_tap: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    neurons_per_sample: Option<usize>,
    /// Encoder cutoff as a fraction of A.
    #[arg(long)]
    beta_ratio: Option<f64>,
    /// Encoder log-scale multiplier.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tau_mem: Option<f64>,
    #[arg(long)]
    tau_syn: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    v_leak: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    v_reset: Option<f64>,
    /// Gain on the input weight initialization scale.
    #[arg(long)]
    input_gain: Option<f64>,
    #[arg(long)]
    output_gain: Option<f64>,
    #[arg(long)]
    init_seed: Option<u64>,
}

impl ModelArgs {
    fn apply(&self, s: &mut EqualizerSettings) {
        if let Some(n) = self.n_tap {
            s.n_tap = n;
            s.snn.n_tap = n;
        }
        if let Some(seed) = self.init_seed {
            s.ann_init_seed = seed;
            s.snn.init_seed = seed;
        }
        let c: &mut SnnConfig = &mut s.snn;
        macro_rules! set {
            ($($f:ident => $($g:ident).+),*) => {$(if let Some(v) = self.$f { c.$($g).+ = v; })*};
        }
        set!(hidden => n_hidden, neurons_per_sample => neurons_per_sample, beta_ratio => beta_ratio,
             kappa => kappa, n_steps => n_steps, dt => dt, tau_mem => hidden.tau_mem,
             tau_syn => hidden.tau_syn, threshold => hidden.threshold, v_leak => hidden.v_leak,
             v_reset => hidden.v_reset, input_gain => init_gain.input, output_gain => init_gain.output);
        if let Some(v) = self.tau_mem {
            c.readout.tau_mem = v;
        }
        if let Some(v) = self.tau_syn {
            c.readout.tau_syn = v;
        }
        if let Some(v) = self.v_leak {
            c.readout.v_leak = v;
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    symbols: usize,
    /// Noise variance relative to the noiseless photodiode output, in dB.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "noise_sigma2")]
    noise_db: Option<f64>,
    /// Absolute noise variance after the photodiode.
    #[arg(long)]
    noise_sigma2: Option<f64>,
    /// Seed of the transmitted bits.
    #[arg(long, default_value_t = 0)]
    bit_seed: u64,
    /// Symbols used to calibrate the dB scale.
    #[arg(long, default_value_t = 100_000)]
    calibration_symbols: usize,
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NetKind {
    Snn,
    Ann1,
    Ann2,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(value_enum)]
    kind: NetKind,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Line-delimited JSON training log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct FitLmmseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 17)]
    n_tap: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated noise levels in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    noise_db: Option<Vec<f64>>,
    #[arg(long)]
    train_symbols: Option<usize>,
    #[arg(long)]
    test_symbols: Option<usize>,
    #[arg(long)]
    calibration_symbols: Option<usize>,
    /// Comma-separated subset of lmmse, ann1, ann2, snn.
    #[arg(long, value_delimiter = ',')]
    equalizers: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel grid points; defaults to the environment setting, then the CPU count.
    #[arg(long, env = spikeq::sweep::WORKERS_ENV)]
    workers: Option<usize>,
    #[command(flatten)]
    link: LinkArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct HistogramArgs {
    /// LMMSE checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut link = a.link.apply(LinkConfig::default());
    link.noise_sigma2 = match (a.noise_db, a.noise_sigma2) {
        (Some(db), _) => sigma2_from_db(db, reference_variance(&link, a.calibration_symbols, link.rng_seed)?),
        (None, Some(s)) => s,
        (None, None) => 0.0,
    };
    let data = Dataset::generate(&link, a.symbols, a.bit_seed, a.noise_db)?;
    data.save(&a.out)?;
    println!("wrote {} symbols to {} (noise variance {:.6e})", data.len(), a.out.display(), link.noise_sigma2);
    Ok(())
}

fn train(a: TrainCmd) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let mut settings = EqualizerSettings::default();
    a.model.apply(&mut settings);
    let kind = match a.kind {
        NetKind::Snn => EqualizerKind::Snn,
        NetKind::Ann1 => EqualizerKind::Ann1,
        NetKind::Ann2 => EqualizerKind::Ann2,
    };
    let cfg = match kind {
        EqualizerKind::Snn => &mut settings.snn_train,
        _ => &mut settings.ann_train,
    };
    *cfg = a.train.apply(*cfg);
    let mut log = match &a.log {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(Error::io(p))?)),
        None => None,
    };
    let mut log_err = None;
    let trained = Model::fit(kind, &data.y, &data.labels(), &settings, |r| {
        println!("epoch {:>3}  loss {:.5}  ser {:.3e}  ber {:.3e}", r.epoch, r.loss, r.ser, r.ber);
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(r).expect("record serializes");
            if let Err(e) = writeln!(w, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let (Some(e), Some(p)) = (log_err, &a.log) {
        return Err(Error::io(p)(e));
    }
    if let (Some(mut w), Some(p)) = (log, &a.log) {
        w.flush().map_err(Error::io(p))?;
    }
    trained.model.save(&a.out)?;
    println!("wrote {} checkpoint to {}", kind, a.out.display());
    Ok(())
}

fn fit_lmmse(a: FitLmmseArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let settings = EqualizerSettings {
        n_tap: a.n_tap,
        ..EqualizerSettings::default()
    };
    let trained = Model::fit(EqualizerKind::Lmmse, &data.y, &data.labels(), &settings, |_| {})?;
    if let Model::Lmmse(m) = &trained.model {
        println!("boundaries {:?}", m.boundaries);
    }
    trained.model.save(&a.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let data = Dataset::load(&a.data)?;
    let errors = count_bit_errors(&model.decide(&data.y)?, &data.labels());
    let bits = 2 * data.len() as u64;
    let (lo, hi) = ber_confidence(errors, bits)?;
    println!(
        "{}: {errors} errors / {bits} bits, BER {:.4e} [{lo:.3e}, {hi:.3e}]",
        model.kind(),
        errors as f64 / bits as f64
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SweepConfig::default(),
    };
    cfg.link = a.link.apply(cfg.link);
    a.model.apply(&mut cfg.settings);
    cfg.settings.snn_train = a.train.apply(cfg.settings.snn_train);
    if let Some(v) = a.noise_db {
        cfg.noise_db = v;
    }
    if let Some(v) = a.train_symbols {
        cfg.train_symbols = v;
    }
    if let Some(v) = a.test_symbols {
        cfg.test_symbols = v;
    }
    if let Some(v) = a.calibration_symbols {
        cfg.calibration_symbols = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.equalizers {
        cfg.equalizers = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    let workers = match a.workers {
        Some(0) => return Err(Error::Config("workers must be positive".into())),
        Some(n) => n,
        None => workers_from_env()?.unwrap_or_else(rayon::current_num_threads),
    };
    let records = run_sweep(&cfg, workers)?;
    let (csv, manifest) = write_artifacts(&a.out_dir, &cfg, &records)?;
    for r in &records {
        if r.failed() {
            println!("{:>6.1} dB  {:<5}  failed: {}", r.noise_db, r.equalizer.name(), r.failure);
        } else {
            println!(
                "{:>6.1} dB  {:<5}  BER {:.3e}  [{:.2e}, {:.2e}]",
                r.noise_db,
                r.equalizer.name(),
                r.ber,
                r.ber_low,
                r.ber_high
            );
        }
    }
    println!("wrote {} and {}", csv.display(), manifest.display());
    Ok(())
}

fn histogram(a: HistogramArgs) -> Result<()> {
    let Model::Lmmse(m) = Model::load(&a.model)? else {
        return Err(Error::Config("histogram needs an lmmse checkpoint".into()));
    };
    let data = Dataset::load(&a.data)?;
    let h = export_histogram(&m.filter.equalize(&data.y), &data.labels(), a.bins)?;
    h.save(&a.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::FitLmmse(a) => fit_lmmse(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Histogram(a) => histogram(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
