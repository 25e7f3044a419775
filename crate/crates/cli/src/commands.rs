use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use graphnorm::evaluation::{
    baseline_template, centeredness_score, classification_protocol, subject_biased_centeredness, BaselineMethod, ClassificationSettings,
    Integrator, default_grid,
};
use graphnorm::gnn::{ModelParams, Template};
use graphnorm::netdata::{load_dataset, read_matrix_csv, save_dataset, simulate_population, split_folds, write_matrix_csv, FoldAssignment, Population};
use graphnorm::report::{self, CenterednessRow, TopologyRow};
use graphnorm::topology::{ground_truth_profile, profile, topology_divergence, Measure};
use graphnorm::trainer::run_cv_with_folds;
use serde::{Deserialize, Serialize};

use crate::config::{file_has_seed, parse_k_values, parse_measures, resolve_seed, IntegratorKind, RunConfig};

pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn load_population(dir: &Path) -> CmdResult<Population> {
    if !dir.is_dir() {
        return Err(Failure::Usage(anyhow!("dataset directory {} does not exist", dir.display())));
    }
    load_dataset(dir).with_context(|| format!("cannot load dataset {}", dir.display())).usage()
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).runtime()
}

fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold_{fold}"))
}

pub fn simulate(spec_path: &Path, out: &Path, seed: Option<u64>) -> CmdResult {
    let run = RunConfig::load(spec_path).usage()?;
    let mut spec = run.synthetic.ok_or_else(|| anyhow!("{} has no `synthetic` section", spec_path.display())).usage()?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let population = simulate_population(&spec).usage()?;
    save_dataset(&population, out).runtime()?;
    println!("wrote {} subjects ({} nodes, {} views) to {}", population.len(), population.n_r(), population.n_v(), out.display());
    Ok(())
}

/// Fold assignment together with the subject order it refers to.
#[derive(Debug, Serialize, Deserialize)]
struct FoldsFile {
    k: usize,
    subjects: Vec<String>,
    assignment: Vec<usize>,
}

impl FoldsFile {
    fn new(population: &Population, folds: &FoldAssignment) -> Self {
        Self { k: folds.k, subjects: population.samples().iter().map(|s| s.subject_id().to_string()).collect(), assignment: folds.assignment.clone() }
    }

    fn check(&self, population: &Population) -> anyhow::Result<FoldAssignment> {
        let ids: Vec<&str> = population.samples().iter().map(|s| s.subject_id()).collect();
        if ids != self.subjects.iter().map(String::as_str).collect::<Vec<_>>() {
            bail!("fold file lists different subjects than the dataset");
        }
        if self.assignment.len() != ids.len() || self.assignment.iter().any(|&f| f >= self.k) {
            bail!("fold file is malformed");
        }
        Ok(FoldAssignment { k: self.k, assignment: self.assignment.clone() })
    }
}

#[derive(Debug, Serialize)]
struct FoldSummary {
    fold: usize,
    n_train: usize,
    n_test: usize,
    stopped_epoch: usize,
    best_epoch: usize,
    best_test_loss: f64,
    centeredness: f64,
    centeredness_per_view: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CvReport {
    folds: Vec<FoldSummary>,
    mean_centeredness: f64,
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub beta: Option<f64>,
    pub jobs: usize,
    pub seed: Option<u64>,
}

pub fn train(args: &TrainArgs) -> CmdResult {
    let run = RunConfig::load_or_default(args.config.as_deref()).usage()?;
    let seed = resolve_seed(args.seed, &run, file_has_seed(args.config.as_deref())).usage()?;
    let population = load_population(&args.data)?;
    let mut cfg = run.train_config(population.n_v());
    cfg.seed = seed;
    if let Some(b) = args.beta {
        cfg.beta = b;
    }
    cfg.validate().usage()?;
    if args.jobs == 0 {
        return Err(Failure::Usage(anyhow!("--jobs must be ≥ 1")));
    }
    let folds = split_folds(&population, run.folds, seed).usage()?;
    let cv = run_cv_with_folds(&population, &folds, &cfg, args.jobs).runtime()?;

    create_dir(&args.out)?;
    report::write_json(&args.out.join("folds.json"), &FoldsFile::new(&population, &folds)).runtime()?;
    report::write_json(&args.out.join("config.json"), &RunConfig { train: Some(cfg), folds: run.folds, ..run.clone() }).runtime()?;
    let mut summaries = Vec::new();
    for (fold, (result, score)) in cv.results.iter().zip(&cv.centeredness).enumerate() {
        let dir = fold_dir(&args.out, fold);
        create_dir(&dir)?;
        result.model.save(&dir.join("checkpoint.json")).runtime()?;
        write_matrix_csv(&dir.join("template.csv"), result.refined_template.matrix()).runtime()?;
        report::write_train_log(&dir.join("train_log.csv"), &result.history).runtime()?;
        report::write_timing(&dir.join("timing.csv"), &result.elapsed_ms).runtime()?;
        summaries.push(FoldSummary {
            fold,
            n_train: folds.train_indices(fold).len(),
            n_test: folds.test_indices(fold).len(),
            stopped_epoch: result.stopped_epoch,
            best_epoch: result.best_epoch,
            best_test_loss: result.best_test_loss(),
            centeredness: score.mean,
            centeredness_per_view: score.per_view.clone(),
        });
        println!("fold {fold}: {} epochs, best {}, centeredness {:.6}", result.stopped_epoch, result.best_epoch, score.mean);
    }
    let mean = cv.mean_centeredness();
    report::write_json(&args.out.join("cv_report.json"), &CvReport { folds: summaries, mean_centeredness: mean }).runtime()?;
    println!("mean centeredness {mean:.6}; outputs in {}", args.out.display());
    Ok(())
}

pub fn evaluate(data: &Path, templates: &Path, out: &Path, measures: Option<&str>, config: Option<&Path>) -> CmdResult {
    let run = RunConfig::load_or_default(config).usage()?;
    let measures = match measures {
        Some(list) => parse_measures(list).usage()?,
        None => run.evaluation.measures.clone(),
    };
    let population = load_population(data)?;
    let folds_path = templates.join("folds.json");
    let folds_text = fs::read_to_string(&folds_path).with_context(|| format!("cannot read {}", folds_path.display())).usage()?;
    let folds_file: FoldsFile = serde_json::from_str(&folds_text).with_context(|| format!("invalid {}", folds_path.display())).usage()?;
    let folds = folds_file.check(&population).usage()?;

    let mut centeredness_rows = Vec::new();
    let mut topology_rows = Vec::new();
    let mut biased_csv = String::from("fold,template,centeredness\n");
    let mut profiles: Vec<(Measure, Vec<(String, Vec<f64>)>)> = measures.iter().map(|&m| (m, Vec::new())).collect();
    for fold in 0..folds.k {
        let train = population.select(&folds.train_indices(fold));
        let test = population.select(&folds.test_indices(fold));
        let path = fold_dir(templates, fold).join("template.csv");
        let learned = read_matrix_csv(&path).usage()?;
        if learned.rows() != population.n_r() {
            return Err(Failure::Usage(anyhow!("{} has {} nodes but the dataset has {}", path.display(), learned.rows(), population.n_r())));
        }
        let learned = Template::new(learned).with_context(|| format!("invalid template {}", path.display())).usage()?;
        let methods = [
            ("mgn".to_string(), learned),
            ("mean".to_string(), baseline_template(&train, BaselineMethod::Mean).runtime()?),
            ("median".to_string(), baseline_template(&train, BaselineMethod::Median).runtime()?),
        ];
        for (name, template) in &methods {
            let score = centeredness_score(template.matrix(), &test).runtime()?;
            centeredness_rows.push(CenterednessRow { fold, method: name.clone(), per_view: score.per_view, overall: score.mean });
            for &m in &measures {
                let kl = topology_divergence(template.matrix(), &test, m).with_context(|| format!("{m} divergence of {name} in fold {fold}")).runtime()?;
                topology_rows.push(TopologyRow { fold, measure: m, method: name.clone(), kl });
            }
        }
        if fold == 0 {
            for (m, series) in &mut profiles {
                series.push(("ground truth".into(), ground_truth_profile(&test, *m).runtime()?.p));
                for (name, template) in &methods {
                    series.push((name.clone(), profile(template.matrix(), *m).runtime()?.p));
                }
            }
        }
        let checkpoint = fold_dir(templates, fold).join("checkpoint.json");
        if run.evaluation.subject_biased && checkpoint.is_file() {
            let model = ModelParams::load(&checkpoint).usage()?;
            let scores = subject_biased_centeredness(&model, &train, &test).runtime()?;
            for (id, c) in scores.subject_ids.iter().zip(&scores.per_subject) {
                biased_csv.push_str(&format!("{fold},{id},{}\n", graphnorm::netdata::format_float(*c)));
            }
            biased_csv.push_str(&format!("{fold},refined,{}\n", graphnorm::netdata::format_float(scores.refined)));
        }
    }

    create_dir(out)?;
    report::write_centeredness_csv(&out.join("centeredness.csv"), population.view_names(), &centeredness_rows).runtime()?;
    report::write_topology_csv(&out.join("topology.csv"), &topology_rows).runtime()?;
    report::write_svg(&out.join("centeredness.svg"), report::centeredness_svg(&centeredness_rows)).runtime()?;
    for (m, series) in &profiles {
        report::write_svg(&out.join(format!("topology_{m}.svg")), report::profile_svg(&format!("{m} (fold 0)"), series)).runtime()?;
    }
    if biased_csv.lines().count() > 1 {
        fs::write(out.join("subject_biased.csv"), biased_csv).context("cannot write subject_biased.csv").runtime()?;
    }
    for method in ["mgn", "mean", "median"] {
        let rows: Vec<f64> = centeredness_rows.iter().filter(|r| r.method == method).map(|r| r.overall).collect();
        println!("{method}: mean centeredness {:.6}", rows.iter().sum::<f64>() / rows.len() as f64);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct KSummary {
    k: usize,
    mean_accuracy: f64,
}

#[derive(Debug, Serialize)]
struct CompareSummary<'a> {
    task: &'a str,
    method: &'a str,
    mean_accuracy: f64,
    std_accuracy: f64,
    per_k: Vec<KSummary>,
}

pub fn compare(data_a: &Path, data_b: &Path, config: Option<&Path>, k: Option<&str>, out: &Path, seed: Option<u64>) -> CmdResult {
    let run = RunConfig::load_or_default(config).usage()?;
    let seed = resolve_seed(seed, &run, file_has_seed(config)).usage()?;
    let k_values = match k {
        Some(list) => parse_k_values(list).usage()?,
        None => run.k_values.clone(),
    };
    let pop_a = load_population(data_a)?;
    let pop_b = load_population(data_b)?;
    if pop_a.n_r() != pop_b.n_r() || pop_a.n_v() != pop_b.n_v() {
        return Err(Failure::Usage(anyhow!(
            "populations are incompatible: {} nodes × {} views vs {} nodes × {} views",
            pop_a.n_r(),
            pop_a.n_v(),
            pop_b.n_r(),
            pop_b.n_v()
        )));
    }
    let max_edges = pop_a.n_r() * (pop_a.n_r() - 1) / 2;
    if let Some(&k) = k_values.iter().find(|&&k| k > max_edges) {
        return Err(Failure::Usage(anyhow!("k = {k} exceeds the {max_edges} available edges")));
    }
    let integrator = match run.evaluation.integrator {
        IntegratorKind::Mean => Integrator::Mean,
        IntegratorKind::Median => Integrator::Median,
        IntegratorKind::Mgn => {
            let mut cfg = run.train_config(pop_a.n_v());
            cfg.seed = seed;
            cfg.validate().usage()?;
            Integrator::Mgn(cfg)
        }
    };
    let settings = ClassificationSettings { k_values: k_values.clone(), folds: run.folds, inner_folds: run.evaluation.inner_folds, seed, residual: run.evaluation.residual, grid: default_grid() };
    let result = classification_protocol(&pop_a, &pop_b, &integrator, &settings).runtime()?;

    let label = |p: &Population| p.samples()[0].label().to_string();
    let task = format!("{}_vs_{}", label(&pop_a), label(&pop_b));
    create_dir(out)?;
    report::write_classification_csv(&out.join("classification.csv"), &task, &result).runtime()?;
    report::write_json(&out.join("selected_edges.json"), &result.selections).runtime()?;
    let top5: Vec<_> = result.selections[0].edges.iter().take(5).cloned().collect();
    report::write_svg(&out.join("top_edges.svg"), report::circular_edges_svg(pop_a.n_r(), &top5)).runtime()?;
    let per_k = k_values
        .iter()
        .map(|&k| {
            let accs: Vec<f64> = result.rows.iter().filter(|r| r.k == k).map(|r| r.accuracy).collect();
            KSummary { k, mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64 }
        })
        .collect();
    let summary = CompareSummary { task: &task, method: &result.method, mean_accuracy: result.mean_accuracy, std_accuracy: result.std_accuracy, per_k };
    report::write_json(&out.join("summary.json"), &summary).runtime()?;
    println!("{task} ({}): mean accuracy {:.4} ± {:.4}", result.method, result.mean_accuracy, result.std_accuracy);
    Ok(())
}
