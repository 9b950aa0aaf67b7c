use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use imprecise::check;
use imprecise::eval::{self, Method};
use imprecise::inference::PosteriorTables;
use imprecise::sweep::run_sweep;
use imprecise::synth::{gen_sessions, inject_noise_dataset};
use imprecise::{load_dataset, save_dataset, Error, ModelFile};
use log::{info, warn};

use crate::config::RunConfig;
use crate::{CliError, VERSION};

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config(format!("missing --{name} (or paths.{name} in the config)")))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

/// `<path>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn manifest(command: &str, cfg: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut out = format!("# run manifest\ncommand = {command:?}\nversion = {VERSION:?}\n");
    for (k, v) in extra {
        let _ = writeln!(out, "{k} = {v:?}");
    }
    let _ = writeln!(out, "\n[config]");
    // Nest the full configuration under [config.*] so the manifest is valid TOML.
    let body = cfg.to_toml();
    let mut top = String::new();
    let mut tables = String::new();
    let mut in_table = false;
    for line in body.lines() {
        if let Some(name) = line.strip_prefix('[') {
            in_table = true;
            let _ = writeln!(tables, "[config.{}", name.trim_start_matches('['));
        } else if in_table {
            let _ = writeln!(tables, "{line}");
        } else {
            let _ = writeln!(top, "{line}");
        }
    }
    out.push_str(&top);
    out.push_str(&tables);
    out
}

pub fn synth(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let dir = required(out, &cfg.paths.out, "out")?;
    let clean = gen_sessions(&cfg.generator)?;
    let noisy = inject_noise_dataset(&clean, &cfg.noise)?;
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    save_dataset(&noisy, &dir)?;
    write(
        &dir.join("manifest.toml"),
        &manifest("synth", cfg, &[("sessions", noisy.len().to_string())]),
    )?;
    let (pos, neg) = noisy.label_counts();
    println!(
        "wrote {} sessions to {} ({pos} positives, {neg} negatives, {} events)",
        noisy.len(),
        dir.display(),
        noisy.total_events()
    );
    Ok(())
}

pub fn train(
    cfg: &RunConfig,
    data: Option<PathBuf>,
    method: Method,
    out: Option<PathBuf>,
    dump_tables: Option<PathBuf>,
) -> Result<(), CliError> {
    let data_dir = required(data, &cfg.paths.data, "data")?;
    let model_path = required(out, &cfg.paths.model, "out")?;
    let dataset = load_dataset(&data_dir)?;
    let spec = cfg.train_spec();
    let trained = eval::train(method, &dataset, &spec)?;
    write(&model_path, &trained.model.to_text())?;

    let mut log = format!("method {method}\nsessions {}\n", dataset.len());
    match trained.alternations {
        Some(n) => {
            let _ = writeln!(log, "alternations {n}\nconverged {}", trained.converged);
            for (k, v) in trained.trace.iter().enumerate() {
                let _ = writeln!(log, "alternation {} penalized_nll {v}", k + 1);
            }
        }
        None => {
            let _ = writeln!(log, "converged {}", trained.converged);
            for (k, v) in trained.trace.iter().enumerate() {
                let _ = writeln!(log, "iteration {k} objective {v}");
            }
        }
    }
    write(&sibling(&model_path, "log"), &log)?;
    write(
        &sibling(&model_path, "manifest.toml"),
        &manifest(
            "train",
            cfg,
            &[
                ("method", method.to_string()),
                ("data", data_dir.display().to_string()),
            ],
        ),
    )?;
    info!("trained {method} on {} sessions", dataset.len());

    if let Some(dir) = dump_tables {
        match trained.model.clone().into_params() {
            Some(params) => {
                for s in dataset.sessions() {
                    let tables = PosteriorTables::compute(s, &params)?;
                    let m = tables.marginals();
                    let mut text = tables.to_text();
                    let _ = writeln!(text, "label_marginals");
                    for q in &m.label {
                        let _ = writeln!(text, "{q}");
                    }
                    let _ = writeln!(text, "assignment_marginals {} {}", m.assignment.rows(), m.assignment.cols());
                    text.push_str(&m.assignment.to_text());
                    write(&dir.join(format!("{}.tables", s.id())), &text)?;
                }
            }
            None => warn!("--dump-tables ignored: {method} has no observation model"),
        }
    }
    println!("wrote {}", model_path.display());
    Ok(())
}

pub fn eval(
    cfg: &RunConfig,
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    threshold: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let data_dir = required(data, &cfg.paths.data, "data")?;
    let model_path = required(model, &cfg.paths.model, "model")?;
    let threshold = threshold.unwrap_or(cfg.model.threshold);
    let dataset = load_dataset(&data_dir)?;
    let model = ModelFile::read(&model_path, cfg.model.prior_variance)?;
    let e = eval::evaluate(&model.classifier, &dataset, threshold)?;
    let mut csv = String::from("session,threshold,precision,recall,f1,tp,fp,fn\n");
    let rows = e
        .per_session
        .iter()
        .map(|(id, s)| (id.as_str(), s))
        .chain(std::iter::once(("pooled", &e.pooled)));
    for (id, s) in rows {
        let _ = writeln!(
            csv,
            "{id},{threshold},{},{},{},{},{},{}",
            s.precision, s.recall, s.f1, s.true_positives, s.false_positives, s.false_negatives
        );
    }
    match out {
        Some(path) => {
            write(&path, &csv)?;
            println!(
                "pooled precision {:.4} recall {:.4} f1 {:.4}",
                e.pooled.precision, e.pooled.recall, e.pooled.f1
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let path = required(out, &cfg.paths.out, "out")?;
    let output = run_sweep(&cfg.sweep_config())?;
    write(&path, &output.report.to_csv()?)?;
    write(&sibling(&path, "naive_recall.csv"), &output.naive_recall_csv()?)?;
    let flagged: Vec<String> = output
        .report
        .zero_positive_folds
        .iter()
        .map(|(m, f)| format!("{m}:{f}"))
        .collect();
    write(
        &sibling(&path, "manifest.toml"),
        &manifest(
            "sweep",
            cfg,
            &[
                ("rows", output.report.rows.len().to_string()),
                ("zero_positive_folds", flagged.join(" ")),
            ],
        ),
    )?;
    println!("wrote {} rows to {}", output.report.rows.len(), path.display());
    Ok(())
}

pub fn check(seed: u64, quick: bool) -> Result<(), CliError> {
    let results = if quick {
        vec![
            check::oracle_suite(60, 6, 3, seed),
            check::forward_backward_suite(10, Some((1_000, 20)), seed),
            check::gradient_suite(4, seed),
            check::conservation_suite(20, seed),
            check::monotone_trace_suite(seed),
            check::permutation_suite(seed),
        ]
    } else {
        check::run_all(seed)
    };
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!("{r}");
    }
    if failed > 0 {
        Err(CliError::ChecksFailed(failed))
    } else {
        println!("all {} checks passed", results.len());
        Ok(())
    }
}
