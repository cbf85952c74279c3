use std::fs;
use std::path::Path;

use serde::Serialize;

use super::args::{AblateArgs, CommonArgs, DataFormat, GridArgs, SynthArgs, TrainArgs};
use super::CliError;
use crate::data::{load_dense, load_sparse, make_synthetic, save_dense, DomainDataset, SplitSpec, SyntheticSpec};
use crate::error::HandaError;
use crate::eval::pca_2d;
use crate::experiment::{evaluate, Experiment};
use crate::numerics::Matrix;
use crate::trainer::{ablate, grid_search, train, train_target_only, AblationMode, ModelState};

type CliResult<T> = Result<T, CliError>;

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| {
        CliError::Lib(HandaError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| {
        CliError::Lib(HandaError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn write_snapshot<T: Serialize>(dir: &Path, args: &T) -> CliResult<()> {
    let text = toml::to_string(args)
        .map_err(|e| CliError::Lib(HandaError::contract(format!("cannot serialize config: {e}"))))?;
    write_file(&dir.join("config.toml"), &text)
}

fn load(path: &Path, format: DataFormat) -> CliResult<DomainDataset> {
    Ok(match format {
        DataFormat::Dense => load_dense(path, true)?,
        DataFormat::Sparse => load_sparse(path)?,
    })
}

/// Loads, splits and standardizes the data named by `common`.
pub fn load_experiment(common: &CommonArgs, subcommand: &str) -> CliResult<Experiment> {
    let source = common
        .source
        .as_deref()
        .ok_or_else(|| CliError::usage(subcommand, "missing required --source"))?;
    let target = common
        .target
        .as_deref()
        .ok_or_else(|| CliError::usage(subcommand, "missing required --target"))?;
    let source = load(source, common.format)?;
    let target = load(target, common.format)?;
    let split = SplitSpec {
        labeled_per_class: common.target_labeled_per_class,
        seed: common.seed,
        test_fraction: common.test_fraction,
    };
    Ok(Experiment::prepare(&source, &target, &split, !common.no_standardize)?)
}

/// `dim1,dim2,label,split` rows for all target samples.
fn embeddings_csv(state: &ModelState, exp: &Experiment) -> crate::Result<String> {
    let parts: [(&str, &DomainDataset, &[usize]); 3] = [
        ("labeled", &exp.labeled, exp.labeled.require_labels()?),
        ("unlabeled", &exp.unlabeled, &exp.unlabeled_truth),
        ("test", &exp.test, exp.test.require_labels()?),
    ];
    let mut all: Option<Matrix> = None;
    for (_, ds, _) in &parts {
        let e = state.embed_target(ds.features())?;
        all = Some(match all {
            None => e,
            Some(a) => a.hcat(&e)?,
        });
    }
    let projected = pca_2d(&all.expect("three parts"))?;
    let mut out = String::from("dim1,dim2,label,split\n");
    let mut col = 0;
    for (name, _, labels) in &parts {
        for &y in labels.iter() {
            out.push_str(&format!("{},{},{y},{name}\n", projected[(0, col)], projected[(1, col)]));
            col += 1;
        }
    }
    Ok(out)
}

fn final_losses(state: &ModelState) -> String {
    let t = &state.traces;
    match t.len() {
        0 => String::new(),
        n => format!(
            "final_l_sdl: {}\nfinal_l_adv: {}\nfinal_l_c: {}\n",
            t.l_sdl[n - 1],
            t.l_adv[n - 1],
            t.l_c[n - 1]
        ),
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let common = &args.common;
    let exp = load_experiment(common, "train")?;
    let cfg = common.train_config();
    let state = train(&exp.source, &exp.labeled, &exp.unlabeled, &cfg)?;
    let (metrics, _) = evaluate(&state, &exp, "train")?;

    create_dir(&common.out)?;
    write_snapshot(&common.out, args)?;
    write_file(&common.out.join("traces.csv"), &state.traces.to_csv())?;
    let mut text = metrics.to_text();
    text.push_str(&final_losses(&state));
    write_file(&common.out.join("metrics.txt"), &text)?;
    match embeddings_csv(&state, &exp) {
        Ok(csv) => write_file(&common.out.join("embeddings.csv"), &csv)?,
        Err(e) => log::warn!("embeddings.csv not written: {e}"),
    }
    log::info!("accuracy {} written to {}", metrics.accuracy, common.out.display());
    Ok(())
}

pub fn cmd_gridsearch(args: &GridArgs) -> CliResult<()> {
    let common = &args.common;
    let exp = load_experiment(common, "gridsearch")?;
    let cfg = common.train_config();
    let result = grid_search(
        &exp,
        &args.beta_grid,
        &args.gamma_grid,
        &cfg,
        args.scorer.scorer(),
        args.jobs,
    )?;
    create_dir(&common.out)?;
    write_snapshot(&common.out, args)?;
    write_file(&common.out.join("results.csv"), &result.to_csv())?;
    let best = result.best();
    write_file(
        &common.out.join("metrics.txt"),
        &format!(
            "cells: {}\nbest_beta: {}\nbest_gamma: {}\nbest_score: {}\n",
            result.cells.len(),
            best.beta,
            best.gamma,
            best.score
        ),
    )?;
    Ok(())
}

enum Row {
    Mode(AblationMode),
    TargetOnly,
}

pub fn cmd_ablate(args: &AblateArgs) -> CliResult<()> {
    let rows = args
        .modes
        .iter()
        .map(|m| match m.trim() {
            "target-only" | "targetonly" => Ok(Row::TargetOnly),
            other => other
                .parse::<AblationMode>()
                .map(Row::Mode)
                .map_err(|e| CliError::usage("ablate", e.to_string())),
        })
        .collect::<CliResult<Vec<Row>>>()?;
    if rows.is_empty() {
        return Err(CliError::usage("ablate", "no modes given"));
    }
    let common = &args.common;
    let exp = load_experiment(common, "ablate")?;
    let cfg = common.train_config();
    create_dir(&common.out)?;
    write_snapshot(&common.out, args)?;
    let mut csv = String::from("mode,accuracy,auc,iterations,converged_at\n");
    for row in rows {
        let (name, state, metrics) = match row {
            Row::Mode(mode) => {
                let out = ablate(mode, &exp, &cfg)?;
                (mode.to_string(), out.state, out.metrics)
            }
            Row::TargetOnly => {
                let (state, metrics) = train_target_only(&exp, &cfg)?;
                ("target-only".to_string(), state, metrics)
            }
        };
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            metrics.accuracy,
            metrics.auc.map(|a| a.to_string()).unwrap_or_default(),
            metrics.iterations,
            metrics.converged_at.map(|i| i.to_string()).unwrap_or_default()
        ));
        write_file(&common.out.join(format!("traces_{name}.csv")), &state.traces.to_csv())?;
        log::info!("{name}: accuracy {}", metrics.accuracy);
    }
    write_file(&common.out.join("results.csv"), &csv)?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        classes: args.classes,
        latent_dim: args.latent_dim,
        m_s: args.ms,
        m_t: args.mt,
        n_per_class: args.n_per_class,
        noise: args.noise,
        shift: args.shift,
        seed: args.seed,
        share_mixing: args.share_mixing,
    };
    let (source, target) = make_synthetic(&spec)?;
    create_dir(&args.out)?;
    save_dense(&source, args.out.join("source.csv"))?;
    save_dense(&target, args.out.join("target.csv"))?;
    Ok(())
}
