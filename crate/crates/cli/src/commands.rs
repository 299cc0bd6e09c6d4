use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fnd_core::artifact::{load_model, save_model};
use fnd_core::corpus::{write_labeled_csv, SplitSpec};
use fnd_core::pipeline::{
    self, fit_featurizer, fit_with_progress, KernelChoice, ModelBundle, TrainConfig,
};
use fnd_core::preprocess::{preprocess_corpus, StopwordList};
use fnd_core::projection::{tsne as project, TsneConfig};
use fnd_core::rng::stage;
use fnd_core::svm::SolverConfig;
use fnd_core::vectorize::{CbowParams, FeatureSpace};

use crate::data::{DataSource, TEST_FILE, TRAIN_FILE};
use crate::error::{CliError, StageExt};
use crate::settings::Settings;
use crate::{CbowArgs, CommonArgs, EvalArgs, OutArgs, PredictArgs, SplitArgs, TrainArgs, TsneArgs};

const DEFAULT_OUT: &str = "fnd-out";
pub const MODEL_FILE: &str = "model.fnd";

pub fn log(msg: impl AsRef<str>) {
    eprintln!("fnd: {}", msg.as_ref());
}

fn io_error(path: &Path, source: io::Error) -> CliError {
    CliError::Stage {
        stage: "write",
        source: fnd_core::Error::Io {
            path: path.to_path_buf(),
            source,
        },
    }
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_error(path, e))
}

fn settings(common: &CommonArgs) -> Result<Settings, CliError> {
    Settings::load(common.config.as_deref())
}

fn threads(s: &mut Settings, common: &CommonArgs) -> Result<usize, CliError> {
    let n = s.value("threads", common.threads, 1usize)?;
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    Ok(n)
}

fn start_threads(n: usize) {
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

fn out_dir(s: &mut Settings, out: &OutArgs) -> Result<PathBuf, CliError> {
    Ok(s.path("out", out.out.clone())?.unwrap_or_else(|| {
        let p = PathBuf::from(DEFAULT_OUT);
        s.record("out", p.display());
        p
    }))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn echo_config(s: &Settings, dir: &Path, name: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    write_file(&path, |w| w.write_all(s.render().as_bytes()))
}

fn stopwords(s: &mut Settings, flag: Option<PathBuf>) -> Result<StopwordList, CliError> {
    match s.path("stopwords", flag)? {
        Some(p) => StopwordList::from_file(p).stage("config"),
        None => Ok(StopwordList::english()),
    }
}

fn cbow_params(s: &mut Settings, a: &CbowArgs) -> Result<CbowParams, CliError> {
    let d = CbowParams::default();
    let p = CbowParams {
        dim: s.value("cbow-dim", a.cbow_dim, d.dim)?,
        window: s.value("cbow-window", a.cbow_window, d.window)?,
        negatives: s.value("cbow-negatives", a.cbow_negatives, d.negatives)?,
        epochs: s.value("cbow-epochs", a.cbow_epochs, d.epochs)?,
        initial_lr: s.value("cbow-lr", a.cbow_lr, d.initial_lr)?,
        min_count: s.value("cbow-min-count", a.cbow_min_count, d.min_count)?,
        seed: d.seed,
    };
    p.validate().stage("config")?;
    Ok(p)
}

fn split_spec(test_fraction: f64, seed: u64) -> Result<SplitSpec, CliError> {
    SplitSpec::new(test_fraction, seed.wrapping_add(stage::SPLIT)).stage("config")
}

fn check_kind(
    bundle: &ModelBundle,
    vectorizer: Option<FeatureSpace>,
    kernel: Option<KernelChoice>,
) -> Result<(), CliError> {
    if let Some(v) = vectorizer {
        bundle.check_space(v).stage("load")?;
    }
    if let Some(k) = kernel {
        if k != bundle.kind.kernel {
            return Err(fnd_core::Error::Pipeline(format!(
                "model uses the {} kernel but {} was requested",
                bundle.kind.kernel, k
            )))
            .stage("load");
        }
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let wall = Instant::now();
    let mut s = settings(&a.common)?;
    let data = DataSource::resolve(&mut s, &a.data)?;
    let seed = s.value("seed", a.seed, 42u64)?;
    let split = split_spec(s.value("test-fraction", a.test_fraction, 0.2)?, seed)?;
    let solver_defaults = SolverConfig::default();
    let cfg = TrainConfig {
        vectorizer: s.value("vectorizer", a.vectorizer, FeatureSpace::Bow)?,
        kernel: s.value("kernel", a.kernel, KernelChoice::Linear)?,
        r: s.value("r", a.r, 1.0)?,
        alpha: s.optional("alpha", a.alpha)?,
        min_df: s.value("min-df", a.min_df, 2u64)?,
        cbow: cbow_params(&mut s, &a.cbow)?,
        solver: SolverConfig {
            tolerance: s.value("tolerance", a.tolerance, solver_defaults.tolerance)?,
            max_iter: s.value("max-iter", a.max_iter, solver_defaults.max_iter)?,
            progress_every: s.value(
                "progress-every",
                a.progress_every,
                solver_defaults.progress_every,
            )?,
            ..solver_defaults
        },
        seed,
        threads: threads(&mut s, &a.common)?,
        split,
        stopwords: stopwords(&mut s, a.stopwords.clone())?,
    };
    cfg.validate().stage("config")?;
    let out = out_dir(&mut s, &a.out)?;

    start_threads(cfg.threads);
    prepare_out(&out)?;
    let (train, _) = data.halves(&cfg.split)?;
    let mut lines = vec![
        format!("pipeline {}", cfg.kind()),
        format!("train_documents {}", train.len()),
    ];
    let started = Instant::now();
    let mut on_progress = |p: fnd_core::svm::Progress| {
        let line = format!(
            "iteration {} objective {:.10e} max_violation {:.3e} elapsed_secs {:.3}",
            p.iteration,
            p.objective,
            p.max_violation,
            started.elapsed().as_secs_f64()
        );
        log(&line);
        lines.push(line);
    };
    let (bundle, report) = fit_with_progress(&train, &cfg, &mut on_progress).stage("train")?;
    let model_path = out.join(MODEL_FILE);
    save_model(&bundle, &model_path).stage("save")?;

    lines.push(format!("documents {}", report.documents));
    lines.push(format!("dropped_empty {}", report.dropped_empty));
    lines.push(format!("feature_dim {}", report.feature_dim));
    if let Some(alpha) = report.alpha {
        lines.push(format!("alpha {alpha:e}"));
    }
    lines.push(format!("support_vectors {}", report.support_vectors));
    lines.push(format!("objective {:.10e}", report.objective));
    lines.push(format!("featurize_secs {:.3}", report.featurize_secs));
    lines.push(format!("train_secs {:.3}", report.train_secs));
    lines.push(format!("wall_secs {:.3}", wall.elapsed().as_secs_f64()));
    write_file(&out.join("train.log"), |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    echo_config(&s, &out, "train.conf")?;
    log(format!(
        "trained {} on {} documents ({} features, {} support vectors) in {:.2}s; wrote {}",
        cfg.kind(),
        report.documents,
        report.feature_dim,
        report.support_vectors,
        report.featurize_secs + report.train_secs,
        model_path.display()
    ));
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mut s = settings(&a.common)?;
    let model_path = s
        .path("model", a.model.clone())?
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let data = DataSource::resolve(&mut s, &a.data)?;
    let vectorizer = s.optional("vectorizer", a.vectorizer)?;
    let kernel = s.optional("kernel", a.kernel)?;
    let all = s.switch("all", a.all)?;
    let test_fraction = s.optional("test-fraction", a.test_fraction)?;
    let seed = s.optional("seed", a.seed)?;
    if let Some(f) = test_fraction {
        split_spec(f, 0)?;
    }
    let n_threads = threads(&mut s, &a.common)?;
    let out = out_dir(&mut s, &a.out)?;

    start_threads(n_threads);
    let bundle = load_model(&model_path).stage("load")?;
    check_kind(&bundle, vectorizer, kernel)?;
    let recorded = bundle.provenance.split;
    let spec = SplitSpec {
        test_fraction: test_fraction.unwrap_or(recorded.test_fraction),
        seed: seed
            .map(|v| v.wrapping_add(stage::SPLIT))
            .unwrap_or(recorded.seed),
    };
    prepare_out(&out)?;
    let test = if all {
        data.load_all()?
    } else {
        data.halves(&spec)?.1
    };
    let (report, preds) = pipeline::evaluate(&bundle, &test).stage("eval")?;
    let empty = preds.iter().filter(|p| p.empty).count();
    if empty > 0 {
        log(format!(
            "warning: {empty} documents were empty after cleaning and scored as the zero vector"
        ));
    }
    for w in &report.summary.warnings {
        log(format!("warning: {w}"));
    }
    let model_name = bundle.kind.to_string();
    let json = report.to_json(Some(&model_name)).stage("eval")?;
    write_file(&out.join("metrics.json"), |w| w.write_all(json.as_bytes()))?;
    write_file(&out.join("confusion.tsv"), |w| {
        report.write_confusion_tsv(w)
    })?;
    write_file(&out.join("roc.tsv"), |w| report.write_roc_tsv(w))?;
    echo_config(&s, &out, "eval.conf")?;
    let m = &report.summary.macro_avg;
    println!(
        "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
        bundle.kind.vectorizer,
        bundle.kind.kernel,
        report.accuracy(),
        m.precision,
        m.recall,
        m.f1
    );
    log(format!(
        "evaluated {model_name} on {} documents; AUC {:.6}",
        test.len(),
        report.auc()
    ));
    Ok(())
}

fn read_lines(input: &Path) -> Result<Vec<String>, CliError> {
    let mut text = String::new();
    if input == Path::new("-") {
        io::stdin()
            .lock()
            .read_to_string(&mut text)
            .map_err(|e| io_error(input, e))?;
    } else {
        let f = File::open(input).map_err(|e| CliError::Stage {
            stage: "ingest",
            source: fnd_core::Error::Io {
                path: input.to_path_buf(),
                source: e,
            },
        })?;
        for line in io::BufReader::new(f).lines() {
            let line = line.map_err(|e| io_error(input, e))?;
            text.push_str(&line);
            text.push('\n');
        }
    }
    Ok(text.lines().map(str::to_string).collect())
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    let mut s = settings(&a.common)?;
    let model_path = s
        .path("model", a.model.clone())?
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let input = s.path("input", a.input.clone())?;
    let vectorizer = s.optional("vectorizer", a.vectorizer)?;
    let kernel = s.optional("kernel", a.kernel)?;
    let n_threads = threads(&mut s, &a.common)?;
    let docs = match (a.text.is_empty(), input) {
        (false, None) => a.text.clone(),
        (true, Some(p)) => read_lines(&p)?,
        (true, None) => return Err(CliError::Usage("give --text or --input".into())),
        (false, Some(_)) => {
            return Err(CliError::Usage(
                "--text and --input are mutually exclusive".into(),
            ))
        }
    };

    start_threads(n_threads);
    let bundle = load_model(&model_path).stage("load")?;
    check_kind(&bundle, vectorizer, kernel)?;
    let preds = bundle.predict_texts(&docs).stage("predict")?;
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    let stdout_path = Path::new("<stdout>");
    for (i, p) in preds.iter().enumerate() {
        let flag = if p.empty { "empty" } else { "ok" };
        writeln!(w, "{}\t{:.6}\t{flag}", p.label, p.decision)
            .map_err(|e| io_error(stdout_path, e))?;
        if p.empty {
            log(format!(
                "warning: document {} is empty after cleaning; scored as the zero vector",
                i + 1
            ));
        }
    }
    w.flush().map_err(|e| io_error(stdout_path, e))
}

pub fn tsne(a: TsneArgs) -> Result<(), CliError> {
    let mut s = settings(&a.common)?;
    let data = DataSource::resolve(&mut s, &a.data)?;
    let model_path = s.path("model", a.model.clone())?;
    let vectorizer = match &model_path {
        Some(_) => s.optional("vectorizer", a.vectorizer)?,
        None => Some(s.value("vectorizer", a.vectorizer, FeatureSpace::Tfidf)?),
    };
    let d = TsneConfig::default();
    let seed = s.value("seed", a.seed, d.seed)?;
    let cfg = TsneConfig {
        out_dims: s.value("dims", a.dims, d.out_dims)?,
        perplexity: s.value("perplexity", a.perplexity, d.perplexity)?,
        iterations: s.value("iterations", a.iterations, d.iterations)?,
        learning_rate: s.value("learning-rate", a.learning_rate, d.learning_rate)?,
        subsample: s.value("subsample", a.subsample, d.subsample)?,
        seed,
        ..d
    };
    cfg.validate().stage("config")?;
    let min_df = s.value("min-df", a.min_df, 2u64)?;
    if min_df == 0 {
        return Err(CliError::Usage("--min-df must be at least 1".into()));
    }
    let cbow = CbowParams {
        seed: seed.wrapping_add(stage::EMBEDDING),
        ..cbow_params(&mut s, &a.cbow)?
    };
    let sw = stopwords(&mut s, a.stopwords.clone())?;
    let n_threads = threads(&mut s, &a.common)?;
    let out = out_dir(&mut s, &a.out)?;

    start_threads(n_threads);
    let bundle = match &model_path {
        Some(p) => {
            let b = load_model(p).stage("load")?;
            check_kind(&b, vectorizer, None)?;
            Some(b)
        }
        None => None,
    };
    prepare_out(&out)?;
    let corpus = data.load_all()?;
    let stopwords = bundle.as_ref().map(|b| &b.stopwords).unwrap_or(&sw);
    let (docs, summary) = preprocess_corpus(&corpus, stopwords);
    if summary.dropped_empty > 0 {
        log(format!(
            "dropped {} documents that were empty after cleaning",
            summary.dropped_empty
        ));
    }
    let features = match &bundle {
        Some(b) => b.featurizer.transform_all(&docs),
        None => {
            let space = vectorizer.unwrap_or(FeatureSpace::Tfidf);
            fit_featurizer(space, &docs, min_df, &cbow, n_threads)
                .stage("vectorize")?
                .transform_all(&docs)
        }
    };
    let labels: Vec<u8> = docs.iter().map(|d| d.label.class()).collect();
    let started = Instant::now();
    let emb = project(&features, &labels, &cfg).stage("project")?;
    let mut trace = vec![
        format!("points {}", emb.len()),
        format!("initial_kl {:.6}", emb.initial_kl),
    ];
    for (it, kl) in &emb.kl_trace {
        trace.push(format!("iteration {it} kl {kl:.6}"));
    }
    trace.push(format!("final_kl {:.6}", emb.final_kl));
    trace.push(format!(
        "project_secs {:.3}",
        started.elapsed().as_secs_f64()
    ));
    for l in &trace {
        log(l);
    }
    write_file(&out.join("tsne.tsv"), |w| emb.write_tsv(w))?;
    write_file(&out.join("tsne.log"), |w| {
        for l in &trace {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    echo_config(&s, &out, "tsne.conf")
}

pub fn split(a: SplitArgs) -> Result<(), CliError> {
    let mut s = settings(&a.common)?;
    let data = DataSource::resolve(&mut s, &a.data)?;
    if matches!(data, DataSource::SplitDir(_)) {
        return Err(CliError::Usage(
            "split needs raw data (--data-real/--data-fake or --fixture)".into(),
        ));
    }
    let seed = s.value("seed", a.seed, 42u64)?;
    let spec = split_spec(s.value("test-fraction", a.test_fraction, 0.2)?, seed)?;
    threads(&mut s, &a.common)?;
    let out = out_dir(&mut s, &a.out)?;

    prepare_out(&out)?;
    let (train, test) = data.halves(&spec)?;
    write_labeled_csv(&train, out.join(TRAIN_FILE)).stage("write")?;
    write_labeled_csv(&test, out.join(TEST_FILE)).stage("write")?;
    echo_config(&s, &out, "split.conf")?;
    log(format!(
        "wrote {} train and {} test documents to {}",
        train.len(),
        test.len(),
        out.display()
    ));
    Ok(())
}
