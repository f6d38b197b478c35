//! Subcommand bodies. Each writes its manifest before any training starts
//! and rewrites it with the output list once everything is on disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gib_core::case_study::{run_case_study, trace_csv};
use gib_core::eval::{fmt_mean_std, spearman, ResultsTable};
use gib_core::experiments::{
    cross_validate, denoise_table, interpret_table, prepare_denoise, run_denoise, run_interpret, Variant,
};
use gib_core::graph_io::{
    gen_planted_motif_dataset, load_tu_dataset_with, noisy_dataset, read_mask_sidecar, write_mask_sidecar,
    write_subgraph_dump, write_tu_dataset, Dataset, LoadOptions, MotifConfig, MotifKind, Target,
};
use gib_core::trainer::{prepare, train as train_gib, validation_metric, TrainConfig};

use crate::config::RunConfig;
use crate::manifest::{DatasetIdentity, RunManifest};
use crate::{DataArgs, RunArgs};

/// Effective configuration and the seed list of a run.
fn setup(run: &RunArgs) -> Result<(RunConfig, Vec<u64>)> {
    let cfg = RunConfig::load(run.config.as_deref())?;
    let root = run.seed.unwrap_or(cfg.train.seed);
    Ok((cfg.with_seed(root), (root..root + run.seeds).collect()))
}

fn load(data: &DataArgs, target: Target) -> Result<(Dataset, DatasetIdentity)> {
    let name = data.name()?;
    let ds = load_tu_dataset_with(&data.data, &name, LoadOptions { target, ..LoadOptions::default() })
        .with_context(|| format!("loading {name} from {}", data.data.display()))?;
    Ok((ds, DatasetIdentity::of(&data.data, &name)?))
}

fn write(path: PathBuf, body: &str, outputs: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(path);
    Ok(())
}

fn write_table(out: &Path, table: &ResultsTable, outputs: &mut Vec<PathBuf>) -> Result<()> {
    write(out.join("results.csv"), &table.to_csv(), outputs)?;
    write(out.join("results.txt"), &table.to_text(), outputs)?;
    print!("{}", table.to_text());
    Ok(())
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn train(run: &RunArgs, data: &DataArgs, continuous: bool, folds: Option<usize>) -> Result<()> {
    let (cfg, seeds) = setup(run)?;
    let target = if continuous { Target::Continuous } else { Target::Categorical };
    let (ds, identity) = load(data, target)?;
    let manifest = RunManifest::new(&cfg, &seeds, Some(identity));
    manifest.write(&run.out)?;

    let mut outputs = Vec::new();
    let mut table = ResultsTable::new(&["seed", "best_epoch", "val_metric", "test_metric"]);
    let mut cv = ResultsTable::new(&["seed", "fold", "test_metric"]);
    let (mut vals, mut tests) = (Vec::new(), Vec::new());
    for &seed in &seeds {
        let config = TrainConfig { seed, ..cfg.train.clone() };
        let ds = ds.clone().with_split(cfg.split.split(ds.len(), seed)?)?;
        let outcome = train_gib(&ds, &config)?;
        let dir = seed_dir(&run.out, seed);
        outcome.write_artifacts(&dir)?;
        outputs.extend(["checkpoint.txt", "metrics.csv", "mi_trace.csv"].map(|f| dir.join(f)));
        let test = if ds.split.test.is_empty() {
            f64::NAN
        } else {
            validation_metric(&outcome.model, &prepare(&ds), &ds.split.test)?
        };
        vals.push(outcome.best_val);
        tests.push(test);
        table.push(vec![
            seed.to_string(),
            outcome.best_epoch.to_string(),
            outcome.best_val.to_string(),
            test.to_string(),
        ]);
        if let Some(k) = folds {
            for (f, m) in cross_validate(&ds, &config, k)?.into_iter().enumerate() {
                cv.push(vec![seed.to_string(), f.to_string(), m.to_string()]);
            }
        }
    }
    table.push(vec!["mean ± std".into(), String::new(), fmt_mean_std(&vals), fmt_mean_std(&tests)]);
    write_table(&run.out, &table, &mut outputs)?;
    if folds.is_some() {
        write(run.out.join("cross_validation.csv"), &cv.to_csv(), &mut outputs)?;
    }
    manifest.finish(&run.out, outputs)
}

pub fn gen_noise(run: &RunArgs, data: &DataArgs, fraction: f64) -> Result<()> {
    let (cfg, seeds) = setup(run)?;
    let name = data.name()?;
    let (ds, identity) = load(data, Target::Categorical)?;
    let manifest = RunManifest::new(&cfg, &seeds[..1], Some(identity));
    manifest.write(&run.out)?;
    let (noisy, real) = noisy_dataset(&ds, fraction, seeds[0])?;
    write_tu_dataset(&run.out, &name, &noisy)?;
    write_mask_sidecar(&run.out, &name, &real)?;
    println!(
        "wrote {} graphs with {} noise edges to {}",
        noisy.len(),
        noisy.graphs.iter().map(|g| g.num_edges()).sum::<usize>() - ds.graphs.iter().map(|g| g.num_edges()).sum::<usize>(),
        run.out.display()
    );
    manifest.finish(&run.out, written_dataset(&run.out, &name)?)
}

fn written_dataset(dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let prefix = format!("{name}_");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.starts_with(&prefix)))
        .collect();
    files.sort();
    Ok(files)
}

pub fn gen_motif(run: &RunArgs, name: &str, continuous: Option<MotifKind>) -> Result<()> {
    let (mut cfg, seeds) = setup(run)?;
    if let Some(kind) = continuous {
        cfg.motif.labeling = MotifConfig::continuous(kind, seeds[0]).labeling;
    }
    let manifest = RunManifest::new(&cfg, &seeds[..1], None);
    manifest.write(&run.out)?;
    let ds = gen_planted_motif_dataset(&cfg.motif)?;
    write_tu_dataset(&run.out, name, &ds)?;
    write_mask_sidecar(&run.out, name, ds.ground_truth.as_deref().unwrap_or_default())?;
    println!("wrote {} graphs to {}", ds.len(), run.out.display());
    manifest.finish(&run.out, written_dataset(&run.out, name)?)
}

pub fn denoise(run: &RunArgs, data: &DataArgs) -> Result<()> {
    let (cfg, seeds) = setup(run)?;
    let (ds, identity) = load(data, Target::Categorical)?;
    let real = read_mask_sidecar(&data.data, &data.name()?).context("denoising needs the real-edge sidecar written by gen-noise")?;
    let manifest = RunManifest::new(&cfg, &seeds, Some(identity));
    manifest.write(&run.out)?;

    let mut per_seed = Vec::new();
    let mut rows = ResultsTable::new(&["seed", "method", "recall", "precision", "acc", "empty"]);
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for &seed in &seeds {
        let ds = ds.clone().with_split(cfg.split.split(ds.len(), seed)?)?;
        let setup = prepare_denoise(&ds, &real)?;
        let result = run_denoise(&setup, &TrainConfig { seed, ..cfg.train.clone() })?;
        for r in &result {
            rows.push(vec![
                seed.to_string(),
                r.method.clone(),
                cell(r.recall),
                cell(r.precision),
                cell(r.accuracy),
                r.empty.to_string(),
            ]);
        }
        per_seed.push(result);
    }
    let mut outputs = Vec::new();
    write(run.out.join("per_seed.csv"), &rows.to_csv(), &mut outputs)?;
    write_table(&run.out, &denoise_table(&per_seed), &mut outputs)?;
    manifest.finish(&run.out, outputs)
}

pub fn interpret(
    run: &RunArgs,
    data: &DataArgs,
    kind: MotifKind,
    no_con: bool,
    no_mi: bool,
    ablations: bool,
    baselines: bool,
) -> Result<()> {
    let (cfg, seeds) = setup(run)?;
    let name = data.name()?;
    // A dataset without graph attributes loads as categorical and is then
    // rejected by the experiment with a config error.
    let target = if data.data.join(format!("{name}_graph_attributes.txt")).exists() {
        Target::Continuous
    } else {
        Target::Categorical
    };
    let (mut ds, identity) = load(data, target)?;
    ds.ground_truth = Some(read_mask_sidecar(&data.data, &name).context("interpretation needs the motif-node sidecar")?);
    let variants = if ablations {
        vec![Variant::FULL, Variant { con: false, mi: true }, Variant { con: true, mi: false }]
    } else {
        vec![Variant { con: !no_con, mi: !no_mi }]
    };
    let manifest = RunManifest::new(&cfg, &seeds, Some(identity));
    manifest.write(&run.out)?;

    let mut outputs = Vec::new();
    let mut per_seed = Vec::new();
    let mut rows = ResultsTable::new(&["seed", "method", "bias_mean", "bias_var", "components_per_graph", "degenerate_rate", "empty"]);
    for &seed in &seeds {
        let ds = ds.clone().with_split(cfg.split.split(ds.len(), seed)?)?;
        let outcome = run_interpret(&ds, kind, &TrainConfig { seed, ..cfg.train.clone() }, &variants, baselines)?;
        let dump = seed_dir(&run.out, seed).join("subgraphs.jsonl");
        fs::create_dir_all(seed_dir(&run.out, seed))?;
        write_subgraph_dump(&dump, &outcome.records)?;
        outputs.push(dump);
        for r in &outcome.rows {
            let s = r.score;
            rows.push(vec![
                seed.to_string(),
                r.method.clone(),
                s.bias_mean.to_string(),
                s.bias_var.to_string(),
                s.components_per_graph.to_string(),
                s.degenerate_rate.to_string(),
                s.empty_count.to_string(),
            ]);
        }
        per_seed.push(outcome.rows);
    }
    write(run.out.join("per_seed.csv"), &rows.to_csv(), &mut outputs)?;
    write_table(&run.out, &interpret_table(&per_seed), &mut outputs)?;
    manifest.finish(&run.out, outputs)
}

pub fn case_study(run: &RunArgs, sigma2_fixed: Option<f64>, epochs: Option<usize>) -> Result<()> {
    let (mut cfg, seeds) = setup(run)?;
    if sigma2_fixed.is_some() {
        cfg.case_study.fixed_sigma2 = sigma2_fixed;
    }
    if let Some(e) = epochs {
        cfg.case_study.epochs = e;
    }
    cfg.case_study.validate()?;
    let manifest = RunManifest::new(&cfg, &seeds, None);
    manifest.write(&run.out)?;

    let mut outputs = Vec::new();
    let mut table = ResultsTable::new(&[
        "seed",
        "first_oracle_mi",
        "final_oracle_mi",
        "final_l_mi",
        "final_sigma2",
        "spearman_l_mi_oracle",
    ]);
    for &seed in &seeds {
        let trace = run_case_study(&gib_core::case_study::CaseStudyConfig { seed, ..cfg.case_study.clone() })?;
        write(seed_dir(&run.out, seed).join("trace.csv"), &trace_csv(&trace), &mut outputs)?;
        let (first, last) = (trace[0], trace[trace.len() - 1]);
        let rho = if trace.len() > 1 {
            let l: Vec<f64> = trace.iter().map(|r| r.l_mi).collect();
            let o: Vec<f64> = trace.iter().map(|r| r.oracle_mi).collect();
            spearman(&l, &o).map(|r| r.to_string()).unwrap_or_default()
        } else {
            String::new()
        };
        table.push(vec![
            seed.to_string(),
            first.oracle_mi.to_string(),
            last.oracle_mi.to_string(),
            last.l_mi.to_string(),
            last.sigma2.to_string(),
            rho,
        ]);
    }
    write_table(&run.out, &table, &mut outputs)?;
    manifest.finish(&run.out, outputs)
}
