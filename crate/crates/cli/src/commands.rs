use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use medthink::data::synth::{synth_corpus, synth_manifest};
use medthink::data::{build_vocab, dataset_stats, load_images, Image, Manifest, Split, StatsReport, VqaSample};
use medthink::evalmetrics::evaluate;
use medthink::strategies::{generate, two_stage_generate, GenerationOutput, Strategy};
use medthink::training::{prepare_examples, Checkpoint, Phase, TrainConfig, Trainer};
use medthink::Model;
use medthink_annotate::{
    detect_inconsistencies, export_annotated, group_by_image, AppState, ExportMode, Generator, HttpGenerator,
    MockGenerator, ServiceConfig, Store,
};

use crate::config::CliConfig;
use crate::error::{CliError, CliResult, Exit};
use crate::{Command, Common, GeneratorArgs, ModeArg};

const STAGE1_FILE: &str = "stage1.ckpt";
const STAGE2_FILE: &str = "stage2.ckpt";

fn effective_config(common: &Common) -> CliResult<CliConfig> {
    let mut cfg = match &common.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.train.seed = cfg.seed;
    Ok(cfg)
}

pub(crate) fn dispatch(command: Command) -> CliResult<()> {
    let mut cfg = effective_config(command.common())?;
    if let Command::Train { epochs, lr, batch_size, .. } = &command {
        if let Some(e) = epochs {
            cfg.train.epochs = *e;
        }
        if let Some(lr) = lr {
            cfg.train.learning_rate = *lr;
        }
        if let Some(b) = batch_size {
            cfg.train.batch_size = *b;
        }
    }
    eprintln!("{}", cfg.echo_line(command.name()));

    match command {
        Command::Synth { out, .. } => synth(&cfg, &out),
        Command::Stats { manifest, out, .. } => stats(&manifest, out.as_deref()),
        Command::Train { manifest, strategy, out, .. } => train(&cfg, &manifest, strategy.into(), &out),
        Command::Eval { manifest, checkpoint, strategy, out, .. } => {
            eval(&manifest, &checkpoint, strategy.map(Into::into), out.as_deref())
        }
        Command::Generate { manifest, checkpoint, item, .. } => generate_one(&manifest, &checkpoint, item.as_deref()),
        Command::AnnotateClean { manifest, out, generator, .. } => clean(&cfg, &manifest, out.as_deref(), &generator),
        Command::Serve { manifest, port, events, out, generator, .. } => {
            serve(&cfg, &manifest, port, events, out, &generator)
        }
        Command::Export { manifest, events, out, mode, .. } => export(&manifest, &events, &out, mode),
    }
}

/// Directory that file image references are resolved against.
fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| {
        let exit = if e.kind() == std::io::ErrorKind::NotFound { Exit::MissingFile } else { Exit::Failure };
        CliError::new(exit, format!("{}: {e}", path.display()))
    })
}

fn synth(cfg: &CliConfig, out: &Path) -> CliResult<()> {
    let s = &cfg.synth;
    let samples = synth_corpus(cfg.seed, s.n_train, s.n_test, &s.options()).map_err(|e| CliError::new(Exit::BadConfig, e.to_string()))?;
    let n = samples.len();
    let manifest = synth_manifest(samples)?;
    write_file(out, &manifest.to_jsonl())?;
    println!("wrote {n} samples ({} train, {} test) to {}", s.n_train, s.n_test, out.display());
    Ok(())
}

fn stats(manifests: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    let mut report = StatsReport::default();
    for path in manifests {
        report = report.merge(dataset_stats(&Manifest::load(path)?));
    }
    print!("{report}");
    if let Some(out) = out {
        write_file(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(())
}

fn split_with_images(manifest_path: &Path, split: Split) -> CliResult<(Manifest, Vec<VqaSample>, Vec<Image>)> {
    let manifest = Manifest::load(manifest_path)?;
    let samples: Vec<VqaSample> = manifest.split(split).cloned().collect();
    if samples.is_empty() {
        return Err(CliError::new(Exit::Dataset, format!("{} has no {split:?} samples", manifest_path.display()).to_lowercase()));
    }
    let images = load_images(&samples, &base_dir(manifest_path))?;
    Ok((manifest, samples, images))
}

fn train_phase(
    model: &mut Model,
    vocab: &medthink::data::Vocab,
    phase: Phase,
    samples: &[VqaSample],
    images: &[Image],
    config: TrainConfig,
    label: &str,
) -> CliResult<Trainer<f64>> {
    let examples = prepare_examples(model, vocab, phase, samples, images)?;
    let total = config.epochs;
    let mut trainer = Trainer::new(model, config)?;
    let mut stdout = std::io::stdout();
    trainer.run(model, &examples, |epoch, loss| {
        let _ = writeln!(stdout, "{label}epoch {epoch}/{total} loss {loss:.6}");
        let _ = stdout.flush();
    })?;
    Ok(trainer)
}

fn train(cfg: &CliConfig, manifest: &Path, strategy: Strategy, out: &Path) -> CliResult<()> {
    cfg.train.validate()?;
    let (_, samples, images) = split_with_images(manifest, Split::Train)?;
    let vocab = build_vocab(&samples, 1)?;
    let model_config = cfg.model.model_config(vocab.len(), images[0].height(), cfg.seed);
    model_config.validate()?;
    println!("strategy {} ({}), {} training samples, vocabulary {}", strategy.name(), strategy.label(), samples.len(), vocab.len());
    let start = Instant::now();

    if strategy == Strategy::TwoStageReasoning {
        let mut stage1 = Model::new(model_config.clone())?;
        let mut stage2 = Model::new(model_config)?;
        let t1 = train_phase(&mut stage1, &vocab, Phase::Stage1, &samples, &images, cfg.train.clone(), "stage1 ")?;
        let t2 = train_phase(&mut stage2, &vocab, Phase::Stage2, &samples, &images, cfg.train.stage2(), "stage2 ")?;
        std::fs::create_dir_all(out).map_err(|e| CliError::new(Exit::Failure, format!("{}: {e}", out.display())))?;
        for (model, phase, trainer, file) in [(stage1, Phase::Stage1, t1, STAGE1_FILE), (stage2, Phase::Stage2, t2, STAGE2_FILE)] {
            let ckpt = Checkpoint { model, vocab: vocab.clone(), phase, trainer: Some(trainer) };
            ckpt.save(&out.join(file))?;
        }
    } else {
        let mut model = Model::new(model_config)?;
        let trainer = train_phase(&mut model, &vocab, Phase::Single(strategy), &samples, &images, cfg.train.clone(), "")?;
        Checkpoint { model, vocab, phase: Phase::Single(strategy), trainer: Some(trainer) }.save(out)?;
    }
    println!("saved {} in {:.1}s", out.display(), start.elapsed().as_secs_f64());
    Ok(())
}

/// Anything unreadable inside a checkpoint file is a checkpoint error, not a dataset one.
fn read_checkpoint(path: &Path) -> CliResult<Checkpoint<f64>> {
    Checkpoint::load(path).map_err(|e| match e {
        medthink::Error::Io { .. } => CliError::from(e),
        e => CliError::new(Exit::Checkpoint, e.to_string()),
    })
}

// Built once per command, so variant size does not matter.
#[allow(clippy::large_enum_variant)]
enum Loaded {
    Single(Checkpoint<f64>),
    TwoStage(Checkpoint<f64>, Checkpoint<f64>),
}

impl Loaded {
    fn open(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::new(Exit::MissingFile, format!("{}: no such checkpoint", path.display())));
        }
        if path.is_dir() {
            let s1 = read_checkpoint(&path.join(STAGE1_FILE))?;
            let s2 = read_checkpoint(&path.join(STAGE2_FILE))?;
            if s1.phase != Phase::Stage1 || s2.phase != Phase::Stage2 {
                return Err(CliError::new(Exit::Checkpoint, format!("{}: stage files hold the wrong phases", path.display())));
            }
            if s1.vocab != s2.vocab {
                return Err(CliError::new(Exit::Checkpoint, format!("{}: stages use different vocabularies", path.display())));
            }
            return Ok(Loaded::TwoStage(s1, s2));
        }
        let c = read_checkpoint(path)?;
        match c.phase {
            Phase::Single(_) => Ok(Loaded::Single(c)),
            _ => Err(CliError::new(
                Exit::Checkpoint,
                format!("{} is one stage of a two-stage model; pass its directory", path.display()),
            )),
        }
    }

    fn strategy(&self) -> Strategy {
        match self {
            Loaded::Single(c) => c.phase.strategy(),
            Loaded::TwoStage(..) => Strategy::TwoStageReasoning,
        }
    }

    fn answer(&self, question: &str, image: &Image) -> CliResult<(GenerationOutput, Option<String>)> {
        Ok(match self {
            Loaded::Single(c) => {
                let max_len = c.model.config().n_max;
                (generate(&c.model, &c.vocab, c.phase.strategy(), question, image, max_len)?, None)
            }
            Loaded::TwoStage(s1, s2) => {
                let max_len = s2.model.config().n_max;
                let out = two_stage_generate(&s1.model, &s2.model, &s1.vocab, question, image, max_len)?;
                (out.output, Some(out.stage2_input))
            }
        })
    }
}

fn eval(manifest: &Path, checkpoint: &Path, expected: Option<Strategy>, out: Option<&Path>) -> CliResult<()> {
    let loaded = Loaded::open(checkpoint)?;
    let strategy = loaded.strategy();
    if let Some(e) = expected.filter(|e| *e != strategy) {
        return Err(CliError::usage(format!(
            "checkpoint was trained for {}, not {}",
            strategy.name(),
            e.name()
        )));
    }
    let (_, samples, images) = split_with_images(manifest, Split::Test)?;
    let outputs = samples
        .iter()
        .zip(&images)
        .map(|(s, img)| loaded.answer(&s.question, img).map(|o| o.0))
        .collect::<CliResult<Vec<_>>>()?;
    let report = evaluate(&samples, &outputs, strategy)?;
    print!("{}", report.to_table());
    if let Some(out) = out {
        write_file(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(())
}

fn generate_one(manifest_path: &Path, checkpoint: &Path, item: Option<&str>) -> CliResult<()> {
    let loaded = Loaded::open(checkpoint)?;
    let manifest = Manifest::load(manifest_path)?;
    let sample = match item {
        Some(id) => manifest.samples.iter().find(|s| s.id == id),
        None => manifest.split(Split::Test).next().or(manifest.samples.first()),
    }
    .ok_or_else(|| CliError::new(Exit::Dataset, format!("no item {:?} in {}", item.unwrap_or("(first)"), manifest_path.display())))?;
    let image = sample.image.load(&base_dir(manifest_path))?;
    let (out, stage2_input) = loaded.answer(&sample.question, &image)?;
    println!("item: {}", sample.id);
    println!("strategy: {}", loaded.strategy().name());
    println!("question: {}", sample.question);
    if let Some(input) = stage2_input {
        println!("stage2_input: {input}");
    }
    println!("answer: {}", out.answer);
    println!("rationale: {}", out.rationale.as_deref().unwrap_or(""));
    println!("parse_ok: {}", out.parse_ok);
    println!("raw: {}", out.raw);
    Ok(())
}

fn generator(cfg: &CliConfig, args: &GeneratorArgs) -> Option<Arc<dyn Generator>> {
    let url = args.generator_url.clone().or_else(|| Some(cfg.generator.url.clone()).filter(|u| !u.is_empty()));
    match url {
        Some(url) if !args.generator_mock => {
            let mut g = HttpGenerator::new(url, cfg.generator.model.clone()).with_env_token();
            g.timeout = std::time::Duration::from_secs(cfg.generator.timeout_secs);
            Some(Arc::new(g))
        }
        _ if args.generator_mock => Some(Arc::new(MockGenerator::new(cfg.seed))),
        _ => None,
    }
}

fn clean(cfg: &CliConfig, manifest: &Path, out: Option<&Path>, args: &GeneratorArgs) -> CliResult<()> {
    let m = Manifest::load(manifest)?;
    let client = generator(cfg, args);
    let report = detect_inconsistencies(&group_by_image(&m.samples), &cfg.cleaning, client.as_deref())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(path) => {
            write_file(path, &json)?;
            println!(
                "{} conflicts in {} image groups (degraded: {}) written to {}",
                report.conflicts.len(),
                report.groups,
                report.degraded,
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn serve(
    cfg: &CliConfig,
    manifest_path: &Path,
    port: u16,
    events: Option<PathBuf>,
    out: Option<PathBuf>,
    args: &GeneratorArgs,
) -> CliResult<()> {
    let manifest = Manifest::load(manifest_path)?;
    let events = events.unwrap_or_else(|| {
        let mut p = manifest_path.as_os_str().to_owned();
        p.push(".events.jsonl");
        PathBuf::from(p)
    });
    let store = Store::open(&events, Some(&manifest))?;
    let client: Arc<dyn Generator> = generator(cfg, args).unwrap_or_else(|| Arc::new(MockGenerator::new(cfg.seed)));
    let conflicts = detect_inconsistencies(&group_by_image(&manifest.samples), &cfg.cleaning, Some(client.as_ref()))?;
    let config = ServiceConfig {
        base_dir: base_dir(manifest_path),
        template: cfg.generator.prompt.clone(),
        export_path: out,
    };
    let state = Arc::new(AppState::new(store, manifest, client, config)?.with_conflicts(conflicts));

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(Exit::Failure, e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| CliError::new(Exit::Failure, format!("bind 127.0.0.1:{port}: {e}")))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr} (events {})", events.display());
        std::io::stdout().flush()?;
        medthink_annotate::serve(listener, state).await?;
        Ok(())
    })
}

fn export(manifest: &Path, events: &Path, out: &Path, mode: ModeArg) -> CliResult<()> {
    let m = Manifest::load(manifest)?;
    let text = std::fs::read_to_string(events).map_err(|e| {
        let exit = if e.kind() == std::io::ErrorKind::NotFound { Exit::MissingFile } else { Exit::Failure };
        CliError::new(exit, format!("{}: {e}", events.display()))
    })?;
    let store = Store::replay(&text)?;
    let mode = match mode {
        ModeArg::Strict => ExportMode::Strict,
        ModeArg::Permissive => ExportMode::Permissive,
    };
    let outcome = export_annotated(store.records(), &m, mode)?;
    write_file(out, &outcome.manifest.to_jsonl())?;
    println!("exported {} rationales, skipped {}", outcome.exported.len(), outcome.skipped.len());
    for id in &outcome.skipped {
        println!("skipped {id}");
    }
    Ok(())
}
