use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vgcdm::checkpoint::Checkpoint;
use vgcdm::config::RunConfig;
use vgcdm::diffusion::{
    ancestral_sample, chain_rng, loss_history_csv, sample_batch, score, with_pool, Trainer,
};
use vgcdm::guidance::{extract_attention_map, AttentionDump, DumpKind};
use vgcdm::metrics::magnitude_spectrum;
use vgcdm::nn::Act;
use vgcdm::schedule::{ScheduleConfig, ScheduleKind};
use vgcdm::signal::{read_dataset, read_f32le, write_dataset, write_f32le, Dataset, PairedSample, Split};
use vgcdm::synth::SynthSpec;
use vgcdm::Error;

const CHECKPOINT_FILE: &str = "checkpoint.vgc";
const LOSS_FILE: &str = "loss_history.csv";
const DIVERGED_MARKER: &str = ".diverged";

#[derive(Parser)]
#[command(name = "vgcdm", version, about = "Voltage-guided diffusion workbench for vibration signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset from a TOML spec.
    Synth(SynthArgs),
    /// Train a denoiser from a run config.
    Train(TrainArgs),
    /// Draw samples from a trained checkpoint.
    Sample(SampleArgs),
    /// Score generated signals against a dataset's test split.
    Eval(EvalArgs),
    /// Dump attention maps of the guidance branch.
    InspectAttn(InspectArgs),
    /// Write the cumulative signal-retention table of a noise schedule.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset spec file.
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Train the unconditional baseline.
    #[arg(long)]
    no_condition: bool,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint up to the configured number of epochs.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset whose voltages condition the samples.
    #[arg(long, conflicts_with = "voltage")]
    dataset: Option<PathBuf>,
    /// Raw little-endian f32 voltage file holding one or more conditions.
    #[arg(long)]
    voltage: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(short, long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write time-series and spectrum plot data.
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score the ground truth against itself instead of sampling.
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Raw little-endian f32 voltage file holding one or more conditions.
    #[arg(long)]
    voltage: PathBuf,
    /// Names for the conditions, in file order.
    #[arg(long, value_delimiter = ',')]
    names: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Linear)]
    kind: KindArg,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Cosine,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MissingManifest(_) => 2,
            Error::Diverged { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn fail<T>(code: u8, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code,
        message: message.into(),
    })
}

type CliResult = Result<(), Failure>;

fn require_file(path: &Path, what: &str) -> CliResult {
    if !path.is_file() {
        return fail(2, format!("{what} not found: {}", path.display()));
    }
    Ok(())
}

/// Creates `dir`, refusing to reuse a nonempty directory without `force`.
fn prepare_dir(dir: &Path, force: bool) -> CliResult {
    if dir.exists() {
        let nonempty = dir.is_file() || fs::read_dir(dir)?.next().is_some();
        if nonempty && !force {
            return fail(
                1,
                format!("output {} already exists; pass --force to overwrite", dir.display()),
            );
        }
        if force && dir.is_dir() {
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn prepare_file(path: &Path, force: bool) -> CliResult {
    if path.exists() && !force {
        return fail(
            1,
            format!("output {} already exists; pass --force to overwrite", path.display()),
        );
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    require_file(&a.spec, "spec")?;
    let mut spec = SynthSpec::load(&a.spec).map_err(|e| Failure {
        code: 1,
        message: format!("invalid spec {}: {e}", a.spec.display()),
    })?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let ds = spec.generate()?;
    prepare_dir(&a.out, a.force)?;
    write_dataset(&ds, &a.out)?;
    let train = ds.split().iter().filter(|s| **s == Split::Train).count();
    println!(
        "wrote {} samples (labels: {}; train {}, test {}) to {}",
        ds.len(),
        ds.labels().join(","),
        train,
        ds.len() - train,
        a.out.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset, Failure> {
    if !dir.is_dir() {
        return fail(2, format!("dataset not found: {}", dir.display()));
    }
    Ok(read_dataset(dir)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    require_file(path, "checkpoint")?;
    Ok(Checkpoint::load(path)?)
}

fn cmd_train(a: TrainArgs) -> CliResult {
    require_file(&a.config, "config")?;
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.no_condition {
        cfg.model.condition_enabled = false;
    }
    if let Some(out) = a.out {
        cfg.out_dir = out;
    }
    let dataset = load_dataset(&cfg.dataset)?;
    if dataset.length() != cfg.model.length {
        return fail(
            1,
            format!(
                "dataset length {} does not match model.length {}",
                dataset.length(),
                cfg.model.length
            ),
        );
    }
    let tcfg = cfg.train_config();
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let mut mismatched = ck.mismatched_fields(&cfg.model);
            if ck.train.schedule != tcfg.schedule {
                mismatched.push("train.schedule".into());
            }
            if !mismatched.is_empty() {
                return Err(Error::ConfigMismatch(mismatched).into());
            }
            ck.into_trainer(Some(tcfg))?
        }
        None => Trainer::new(cfg.model.clone(), tcfg)?,
    };
    prepare_dir(&cfg.out_dir, a.force)?;
    fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml()?)?;
    let ckpt_path = cfg.out_dir.join(CHECKPOINT_FILE);
    let mut losses = Vec::new();
    let train = dataset.train();
    println!(
        "training {} model on {} samples from epoch {} (step {})",
        if cfg.model.condition_enabled { "conditional" } else { "unconditional" },
        train.len(),
        trainer.epochs_done,
        trainer.global_step
    );
    while trainer.epochs_done < trainer.config.epochs {
        match trainer.run_epoch(&train) {
            Ok(s) => {
                println!(
                    "epoch {:>4}  loss {:.6}  step {:>7}  {:.1}s",
                    s.epoch, s.mean_loss, s.global_step, s.seconds
                );
                losses.push((s.epoch, s.mean_loss));
            }
            Err(e @ Error::Diverged { .. }) => {
                Checkpoint::from_trainer(&trainer).save(&ckpt_path)?;
                fs::write(cfg.out_dir.join(DIVERGED_MARKER), format!("{e}\n"))?;
                fs::write(cfg.out_dir.join(LOSS_FILE), loss_csv(&losses))?;
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Checkpoint::from_trainer(&trainer).save(&ckpt_path)?;
    fs::write(cfg.out_dir.join(LOSS_FILE), loss_csv(&losses))?;
    println!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

fn loss_csv(losses: &[(usize, f64)]) -> String {
    match losses.first() {
        Some(&(0, _)) | None => loss_history_csv(&losses.iter().map(|l| l.1).collect::<Vec<_>>()),
        Some(_) => {
            let mut s = String::from("epoch,mean_loss\n");
            for (e, l) in losses {
                let _ = writeln!(s, "{e},{l}");
            }
            s
        }
    }
}

/// Splits a raw voltage file into conditions of `len` points.
fn read_conditions(path: &Path, len: usize) -> Result<Vec<Vec<f32>>, Failure> {
    require_file(path, "voltage file")?;
    let values = read_f32le(path)?;
    if values.is_empty() || values.len() % len != 0 {
        return fail(
            1,
            format!(
                "voltage file holds {} values, not a multiple of the model length {len}",
                values.len()
            ),
        );
    }
    if values.iter().any(|v| !v.is_finite()) {
        return fail(1, "voltage file contains non-finite values");
    }
    Ok(values.chunks_exact(len).map(<[f32]>::to_vec).collect())
}

#[derive(Serialize)]
struct SampleManifest {
    n: usize,
    length: usize,
    sample_rate_hz: f64,
    seed: u64,
    conditional: bool,
    condition_source: Option<String>,
    condition_index: Vec<usize>,
    labels: Vec<String>,
}

fn two_column(rows: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (a, b) in rows {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

fn write_plot(dir: &Path, stem: &str, x: &[f32], rate: f64) -> CliResult {
    let n = x.len();
    fs::write(
        dir.join(format!("{stem}_time.txt")),
        two_column(x.iter().enumerate().map(|(i, v)| (i as f64 / rate, *v as f64))),
    )?;
    fs::write(
        dir.join(format!("{stem}_spectrum.txt")),
        two_column(
            magnitude_spectrum(x)
                .into_iter()
                .enumerate()
                .map(|(k, m)| (k as f64 * rate / n as f64, m)),
        ),
    )?;
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> CliResult {
    let ck = load_checkpoint(&a.checkpoint)?;
    let model = ck.denoiser()?;
    let sched = ck.train.schedule.build()?;
    let len = model.config().length;
    if a.n == 0 {
        return fail(1, "-n must be at least 1");
    }
    let conditional = model.config().condition_enabled;

    let mut rate = 1.0;
    let mut truths: Vec<Option<Vec<f32>>> = Vec::new();
    let mut labels = Vec::new();
    let mut source = None;
    let conditions: Vec<Vec<f32>> = if let Some(dir) = &a.dataset {
        let ds = load_dataset(dir)?;
        if ds.length() != len {
            return Err(Error::ConfigMismatch(vec!["model.length".into()]).into());
        }
        rate = ds.sample_rate_hz();
        let which = match a.split {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        };
        let pool: Vec<&PairedSample> = ds.subset(which);
        if pool.is_empty() {
            return fail(1, "the selected split is empty");
        }
        source = Some(dir.display().to_string());
        for p in &pool {
            truths.push(Some(p.vibration.values().to_vec()));
            labels.push(p.condition_label.clone());
        }
        pool.iter().map(|p| p.voltage.values().to_vec()).collect()
    } else if let Some(path) = &a.voltage {
        source = Some(path.display().to_string());
        let c = read_conditions(path, len)?;
        truths = vec![None; c.len()];
        labels = vec![String::new(); c.len()];
        c
    } else {
        Vec::new()
    };
    if conditional && conditions.is_empty() {
        return fail(1, "conditional checkpoint needs --dataset or --voltage");
    }
    let index: Vec<usize> = (0..a.n)
        .map(|i| if conditions.is_empty() { 0 } else { i % conditions.len() })
        .collect();

    let idx: Vec<usize> = (0..a.n).collect();
    let chunks = with_pool(|| {
        use rayon::prelude::*;
        idx.par_chunks(vgcdm::diffusion::SAMPLE_CHUNK)
            .map(|chunk| {
                let seeds: Vec<(u64, u64)> = chunk.iter().map(|&i| (a.seed, i as u64)).collect();
                let conds: Vec<&[f32]> = chunk.iter().map(|&i| &conditions[index[i]][..]).collect();
                sample_batch(&model, &sched, conditional.then_some(&conds[..]), &seeds)
            })
            .collect::<Vec<_>>()
    })?;
    let mut generated = Vec::with_capacity(a.n);
    for c in chunks {
        generated.extend(c?);
    }

    prepare_dir(&a.out, a.force)?;
    let flat: Vec<f32> = generated.iter().flatten().copied().collect();
    write_f32le(&a.out.join("generated.f32le"), &flat)?;
    let manifest = SampleManifest {
        n: a.n,
        length: len,
        sample_rate_hz: rate,
        seed: a.seed,
        conditional,
        condition_source: source,
        condition_index: if conditions.is_empty() { Vec::new() } else { index.clone() },
        labels: if labels.is_empty() {
            Vec::new()
        } else {
            index.iter().map(|&i| labels[i].clone()).collect()
        },
    };
    fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(Error::from)?,
    )?;
    if a.plot {
        for (i, g) in generated.iter().enumerate() {
            write_plot(&a.out, &format!("sample_{i:04}"), g, rate)?;
            if let Some(Some(t)) = truths.get(index[i]) {
                write_plot(&a.out, &format!("truth_{i:04}"), t, rate)?;
            }
        }
    }
    println!("wrote {} samples of length {len} to {}", a.n, a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let ds = load_dataset(&a.dataset)?;
    let test = ds.test();
    if test.is_empty() {
        return fail(1, "test split is empty");
    }
    let generated: Vec<Vec<f32>> = if a.identity {
        test.iter().map(|p| p.vibration.values().to_vec()).collect()
    } else {
        let Some(path) = &a.checkpoint else {
            return fail(1, "--checkpoint is required unless --identity is given");
        };
        let ck = load_checkpoint(path)?;
        if ck.model.length != ds.length() {
            return Err(Error::ConfigMismatch(vec!["model.length".into()]).into());
        }
        let model = ck.denoiser()?;
        let sched = ck.train.schedule.build()?;
        vgcdm::diffusion::generate_for(&model, &sched, &test, a.seed)?
    };
    let report = score(&test, &generated, ds.labels(), &Default::default())?;
    prepare_file(&a.out, a.force)?;
    fs::write(&a.out, report.to_csv())?;
    for r in &report.rows {
        println!(
            "{:<8} n={:<4} rmse {:.4}±{:.4}  psnr {:.2}±{:.2}  fscs {:.4}±{:.4}",
            r.label, r.count, r.rmse.mean, r.rmse.std, r.psnr.mean, r.psnr.std, r.fscs.mean, r.fscs.std
        );
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    let ck = load_checkpoint(&a.checkpoint)?;
    if !ck.model.condition_enabled {
        return fail(1, "checkpoint has no condition branch");
    }
    let model = ck.denoiser()?;
    let sched = ck.train.schedule.build()?;
    let len = model.config().length;
    let conditions = read_conditions(&a.voltage, len)?;
    if !a.names.is_empty() && a.names.len() != conditions.len() {
        return fail(
            1,
            format!("{} names for {} conditions", a.names.len(), conditions.len()),
        );
    }
    let flat: Vec<f32> = conditions.iter().flatten().copied().collect();
    let c = Act::from_vec(1, conditions.len(), len, flat);
    let latent = model.encode_condition(&c)?;
    // Run each chain to its last step and capture the input of that step.
    let mut rngs: Vec<_> = (0..conditions.len()).map(|i| chain_rng(a.seed, i as u64)).collect();
    let mut last = None;
    ancestral_sample(&sched, len, &mut rngs, |x, t| {
        if t[0] == 0 {
            last = Some(x.clone());
        }
        model.forward_with_latent(x, t, Some(&latent))
    })?;
    let x_last = last.expect("chain reaches step 0");

    prepare_dir(&a.out, a.force)?;
    for (i, cond) in conditions.iter().enumerate() {
        let name = a.names.get(i).cloned().unwrap_or_else(|| format!("condition_{i}"));
        let x = Act::from_vec(1, 1, len, x_last.row(0, i).to_vec());
        let ci = Act::from_vec(1, 1, len, cond.clone());
        let s = extract_attention_map(&model, &x, 0, &ci)?;
        let attn_shape = vec![s.heads, s.query_len, s.key_len];
        for (kind, shape, values) in [
            (DumpKind::Logits, attn_shape.clone(), s.logits),
            (DumpKind::Softmax, attn_shape, s.scores),
            (DumpKind::Summary, vec![s.summary_channels, s.summary_len], s.channel_summary),
        ] {
            AttentionDump {
                kind,
                shape,
                t: 0,
                condition: name.clone(),
                values,
            }
            .write(&a.out.join(format!("{name}.{}.attn", kind.as_str())))?;
        }
    }
    println!(
        "wrote attention dumps for {} conditions to {}",
        conditions.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_schedule(a: ScheduleArgs) -> CliResult {
    let cfg = ScheduleConfig {
        kind: match a.kind {
            KindArg::Linear => ScheduleKind::Linear,
            KindArg::Cosine => ScheduleKind::Cosine,
        },
        steps: a.steps,
        ..Default::default()
    };
    let sched = cfg.build()?;
    prepare_file(&a.out, a.force)?;
    fs::write(&a.out, sched.alpha_bar_table())?;
    println!("wrote {} rows to {}", a.steps, a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Eval(a) => cmd_eval(a),
        Command::InspectAttn(a) => cmd_inspect(a),
        Command::Schedule(a) => cmd_schedule(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
