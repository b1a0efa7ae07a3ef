//! `bannerforge` command-line interface.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bannerforge_core::annotation::{parse_annotation, validate, ElementLibrary};
use bannerforge_core::calibration::{fit_weights, read_records_csv, write_records_csv};
use bannerforge_core::compositor::{compose, ComposeOptions, Raster};
use bannerforge_core::energy::Layout;
use bannerforge_core::features::{
    attach_external, extract, parse_external, read_matrix_csv, write_matrix_csv, FeatureSchema,
    DEFAULT_K_SCENE,
};
use bannerforge_core::ga::{brute_force_layout, evolve, GAConfig, LayoutProblem};
use bannerforge_core::pipeline::{
    load_annotations, output_hashes, run_pipeline, write_demo_corpus, PipelineConfig, PipelineError,
};
use bannerforge_core::ranker::{
    evaluate, rank, read_labels_csv, split, train, Dataset, ModelSpec, TrainedModel,
};
use bannerforge_core::synth::{generate_synthetic, SynthSpec};

#[derive(Parser)]
#[command(
    name = "bannerforge",
    version,
    about = "Banner layout, compositing and CTR ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lr,
    Tree,
    Forest,
}

#[derive(Subcommand)]
enum Command {
    /// Check annotation documents (a file or a directory) and an element library.
    Validate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Optimise a layout problem with the genetic algorithm.
    Layout {
        #[arg(long)]
        problem: PathBuf,
        /// GA configuration (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for run.json and history.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive lattice search for a small layout problem.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 16)]
        steps: usize,
    },
    /// Compose one banner from an image, annotation, layout, logo and callout.
    Compose {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        logo: PathBuf,
        #[arg(long, default_value = "")]
        callout: String,
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the feature matrix of annotated banners.
    Features {
        #[arg(long)]
        annotations: PathBuf,
        /// Existing schema artifact; without it a schema is built and written here.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_SCENE)]
        k: usize,
        /// External features keyed by banner id.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit energy weights from historical banner records (CSV).
    Calibrate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a CTR model.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Model spec (JSON); overrides --kind.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "forest")]
        kind: Kind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model (AUC, NDCG); with --split, train-side rows are skipped.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Evaluate on the test side of a seeded split with this train fraction.
        #[arg(long)]
        split: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank banners by predicted CTR.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Run the end-to-end generation pipeline.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Also write a JSON map of output file name to sha256.
        #[arg(long)]
        hashes: Option<PathBuf>,
    },
    /// Generate a synthetic corpus, or the demo corpus with --demo.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 12.0)]
        signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        noiseless: bool,
        #[arg(long)]
        demo: bool,
    },
}

/// A categorised failure: `<category> error: <message>`.
struct CliError {
    category: &'static str,
    message: String,
}

impl CliError {
    fn data(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            category: "data",
            message: format!("{}: {e}", path.display()),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            category: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self {
            category: "config",
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category {
            "config" => 3,
            "io" => 4,
            _ => 1,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let category = match e {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            _ => "data",
        };
        Self {
            category,
            message: e.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::data(path, format!("field `{}`: {}", e.path(), e.inner())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn load_schema(path: &Path) -> Result<FeatureSchema> {
    FeatureSchema::from_json(&read(path)?).map_err(|e| CliError::data(path, e))
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    TrainedModel::from_json(&read(path)?).map_err(|e| CliError::data(path, e))
}

fn load_dataset(features: &Path, labels: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let vectors = read_matrix_csv(read(features)?.as_slice(), schema)
        .map_err(|e| CliError::data(features, e))?;
    let labels_rows =
        read_labels_csv(read(labels)?.as_slice()).map_err(|e| CliError::data(labels, e))?;
    Dataset::join(schema, &vectors, &labels_rows).map_err(|e| CliError::data(features, e))
}

#[derive(Serialize)]
struct ViolationLine {
    file: String,
    kind: String,
    location: String,
}

fn cmd_validate(annotations: &Path, library: Option<&Path>) -> Result<()> {
    let docs: Vec<(PathBuf, Vec<u8>)> = if annotations.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(annotations)
            .map_err(|e| CliError::io(annotations, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| read(&p).map(|b| (p, b)))
            .collect::<Result<_>>()?
    } else {
        vec![(annotations.to_path_buf(), read(annotations)?)]
    };
    let mut report = Vec::new();
    for (p, bytes) in &docs {
        let ann = parse_annotation(bytes).map_err(|e| CliError::data(p, e))?;
        for v in validate(&ann) {
            report.push(ViolationLine {
                file: p.display().to_string(),
                kind: format!("{:?}", v.kind),
                location: v.location,
            });
        }
    }
    if let Some(lib) = library {
        ElementLibrary::parse(&read(lib)?).map_err(|e| CliError::data(lib, e))?;
    }
    print!(
        "{}",
        pretty(&serde_json::json!({ "files": docs.len(), "violations": report }))
    );
    if report.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            category: "data",
            message: format!("{} violation(s)", report.len()),
        })
    }
}

fn cmd_layout(
    problem: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let prob: LayoutProblem = read_json(problem)?;
    let mut cfg: GAConfig = match config {
        Some(p) => read_json(p)?,
        None => GAConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let run = evolve(&prob, &cfg).map_err(|e| CliError::data(problem, e))?;
    if let Some(dir) = out {
        write(&dir.join("run.json"), pretty(&run).as_bytes())?;
        write(&dir.join("history.csv"), run.history_csv().as_bytes())?;
    }
    print!(
        "{}",
        pretty(&serde_json::json!({
            "best_energy": run.best_energy,
            "breakdown": run.best_breakdown,
            "evaluations": run.evaluations,
            "layout": run.best_layout,
        }))
    );
    Ok(())
}

fn cmd_oracle(problem: &Path, steps: usize) -> Result<()> {
    let prob: LayoutProblem = read_json(problem)?;
    let (layout, energy) =
        brute_force_layout(&prob, steps).map_err(|e| CliError::data(problem, e))?;
    print!(
        "{}",
        pretty(
            &serde_json::json!({ "best_energy": energy.total, "breakdown": energy, "layout": layout })
        )
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compose(
    image: &Path,
    annotation: &Path,
    layout: &Path,
    logo: &Path,
    callout: &str,
    options: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let img = Raster::read_png(image).map_err(|e| CliError::data(image, e))?;
    let ann = parse_annotation(&read(annotation)?).map_err(|e| CliError::data(annotation, e))?;
    let lay: Layout = read_json(layout)?;
    let logo_r = Raster::read_png(logo).map_err(|e| CliError::data(logo, e))?;
    let opts: ComposeOptions = match options {
        Some(p) => read_json(p)?,
        None => ComposeOptions::default(),
    };
    let comp = compose(&img, &ann, &lay, &logo_r, callout, &opts)
        .map_err(|e| CliError::data(layout, e))?;
    let png = comp
        .banner
        .encode_png()
        .map_err(|e| CliError::data(out, e))?;
    write(out, &png)
}

fn cmd_features(
    annotations: &Path,
    schema_path: &Path,
    k: usize,
    external: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let catalog = load_annotations(annotations)?;
    let anns: Vec<_> = catalog.into_iter().map(|(_, a)| a).collect();
    let schema = if schema_path.exists() {
        load_schema(schema_path)?
    } else {
        let s = FeatureSchema::build(&anns, k).map_err(|e| CliError::data(annotations, e))?;
        write(schema_path, pretty(&s).as_bytes())?;
        s
    };
    let ext = match external {
        Some(p) => parse_external(&read(p)?).map_err(|e| CliError::data(p, e))?,
        None => BTreeMap::new(),
    };
    let mut rows = Vec::with_capacity(anns.len());
    for a in &anns {
        let v = extract(a, &Layout::from_annotation(a), &schema)
            .map_err(|e| CliError::data(annotations, e))?;
        let v = match ext.get(&a.image_id) {
            Some(r) => attach_external(v, r.vgg.clone(), r.nima).map_err(|e| {
                CliError::data(
                    external.unwrap_or(annotations),
                    format!("{}: {e}", a.image_id),
                )
            })?,
            None => v,
        };
        rows.push((a.image_id.clone(), v));
    }
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, &schema, &rows).map_err(|e| CliError::data(out, e))?;
    write(out, &buf)
}

fn cmd_calibrate(records: &Path, out: Option<&Path>) -> Result<()> {
    let recs =
        read_records_csv(read(records)?.as_slice()).map_err(|e| CliError::data(records, e))?;
    let fit = fit_weights(&recs).map_err(|e| CliError::data(records, e))?;
    let json = pretty(&fit);
    if let Some(p) = out {
        write(p, json.as_bytes())?;
    }
    print!("{json}");
    Ok(())
}

fn cmd_pipeline(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    top_k: Option<usize>,
    hashes: Option<&Path>,
) -> Result<()> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(s) = seed {
        cfg.generation.ga.rng_seed = s;
    }
    if let Some(o) = out {
        cfg.paths.output = o;
    }
    if let Some(k) = top_k {
        cfg.generation.top_k = k;
    }
    let manifest = run_pipeline(&cfg)?;
    if let Some(p) = hashes {
        let map = output_hashes(&cfg.paths.output, &manifest)?;
        write(p, pretty(&map).as_bytes())?;
    }
    println!(
        "{} banner(s), {} failure(s), ordered by {}; manifest at {}",
        manifest.banners.len(),
        manifest.failures.len(),
        manifest.ordered_by,
        cfg.paths.output.join("manifest.json").display()
    );
    Ok(())
}

fn cmd_synth(
    out: &Path,
    n: usize,
    signal: f64,
    seed: u64,
    noiseless: bool,
    demo: bool,
) -> Result<()> {
    if demo {
        write_demo_corpus(out, seed)?;
        println!("demo corpus written to {}", out.display());
        return Ok(());
    }
    let spec = SynthSpec {
        n,
        signal,
        seed,
        noiseless,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec).map_err(|e| CliError::config(e.to_string()))?;
    for a in &data.annotations {
        write(
            &out.join("annotations").join(format!("{}.json", a.image_id)),
            bannerforge_core::annotation::to_json(a).as_bytes(),
        )?;
    }
    write(&out.join("schema.json"), pretty(&data.schema).as_bytes())?;
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, &data.schema, &data.vectors).map_err(|e| CliError::data(out, e))?;
    write(&out.join("features.csv"), &buf)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for l in &data.labels {
        wtr.serialize(l).map_err(|e| CliError::data(out, e))?;
    }
    write(
        &out.join("labels.csv"),
        &wtr.into_inner().map_err(|e| CliError::data(out, e))?,
    )?;
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &data.records).map_err(|e| CliError::data(out, e))?;
    write(&out.join("records.csv"), &buf)?;
    write(
        &out.join("summary.json"),
        pretty(&serde_json::json!({ "spec": spec, "bayes_auc": data.bayes_auc })).as_bytes(),
    )?;
    println!("{} banners, bayes-optimal auc {:.4}", n, data.bayes_auc);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate {
            annotations,
            library,
        } => cmd_validate(&annotations, library.as_deref()),
        Command::Layout {
            problem,
            config,
            seed,
            out,
        } => cmd_layout(&problem, config.as_deref(), seed, out.as_deref()),
        Command::Oracle { problem, steps } => cmd_oracle(&problem, steps),
        Command::Compose {
            image,
            annotation,
            layout,
            logo,
            callout,
            options,
            out,
        } => cmd_compose(
            &image,
            &annotation,
            &layout,
            &logo,
            &callout,
            options.as_deref(),
            &out,
        ),
        Command::Features {
            annotations,
            schema,
            k,
            external,
            out,
        } => cmd_features(&annotations, &schema, k, external.as_deref(), &out),
        Command::Calibrate { records, out } => cmd_calibrate(&records, out.as_deref()),
        Command::Train {
            features,
            labels,
            schema,
            spec,
            kind,
            seed,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let ds = load_dataset(&features, &labels, &schema)?;
            let mut spec = match spec {
                Some(p) => read_json::<ModelSpec>(&p)?,
                None => match kind {
                    Kind::Lr => ModelSpec::logistic(),
                    Kind::Tree => ModelSpec::tree(),
                    Kind::Forest => ModelSpec::forest(),
                },
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let model = train(&ds, &spec).map_err(|e| CliError::data(&features, e))?;
            write(&out, model.to_json().as_bytes())
        }
        Command::Evaluate {
            model,
            features,
            labels,
            schema,
            split: frac,
            seed,
            out,
        } => {
            let m = load_model(&model)?;
            let schema = load_schema(&schema)?;
            let mut ds = load_dataset(&features, &labels, &schema)?;
            if let Some(f) = frac {
                ds = split(&ds, f, seed)
                    .map_err(|e| CliError::config(e.to_string()))?
                    .1;
            }
            let report = evaluate(&m, &ds).map_err(|e| CliError::data(&features, e))?;
            let json = pretty(&report);
            if let Some(p) = out {
                write(&p, json.as_bytes())?;
            }
            print!("{json}");
            Ok(())
        }
        Command::Rank {
            model,
            features,
            schema,
        } => {
            let m = load_model(&model)?;
            let schema = load_schema(&schema)?;
            let items = read_matrix_csv(read(&features)?.as_slice(), &schema)
                .map_err(|e| CliError::data(&features, e))?;
            let ranked = rank(&m, &items).map_err(|e| CliError::data(&features, e))?;
            println!("banner_id,predicted_ctr");
            for (id, s) in ranked {
                println!("{id},{s}");
            }
            Ok(())
        }
        Command::Pipeline {
            config,
            seed,
            out,
            top_k,
            hashes,
        } => cmd_pipeline(&config, seed, out, top_k, hashes.as_deref()),
        Command::Synth {
            out,
            n,
            signal,
            seed,
            noiseless,
            demo,
        } => cmd_synth(&out, n, signal, seed, noiseless, demo),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BANNERFORGE_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{} error: {}", e.category, e.message);
            ExitCode::from(e.exit_code())
        }
    }
}
