//! Experiment pipelines driven by a single configuration file: parameter
//! resolution, resource ceilings, a private worker pool and checksummed
//! outputs.

pub mod config;
pub mod decoherence;
pub mod experiments;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use decoherence::apply_dephasing_decay;
pub use output::{OutputEntry, RunManifest};

use crate::error::{Error, Result};
use config::LimitsSection;

/// Command-line overrides of the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; falls back to `experiment.output`.
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    /// Lifts every resource ceiling.
    pub allow_large: bool,
}

/// Settings shared by every pipeline of one run.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub limits: LimitsSection,
}

/// Runs the configured experiment, writes its tables and `manifest.json`
/// into the output directory and returns the manifest.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    let out = opts.out.clone().or_else(|| cfg.experiment.output.clone()).ok_or_else(|| Error::Config {
        line: None,
        key: Some("experiment.output".into()),
        message: "no output directory; set experiment.output or pass --out".into(),
    })?;
    let threads = match opts.threads {
        Some(0) => return Err(Error::param("threads", "need at least one worker thread")),
        Some(k) => k,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = Context {
        seed: opts.seed.unwrap_or(cfg.experiment.seed),
        limits: if opts.allow_large {
            LimitsSection {
                max_dim: usize::MAX,
                max_sparse_dim: usize::MAX,
                max_trajectories: usize::MAX,
            }
        } else {
            cfg.limits
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let started = Instant::now();
    let mut dir = output::OutputDir::create(&out)?;
    let results = pool.install(|| experiments::dispatch(cfg, &ctx, &mut dir))?;
    let manifest = RunManifest {
        kind: cfg.experiment.kind.name().to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seed: ctx.seed,
        threads,
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: dir.into_entries(),
        results,
    };
    manifest.write(&out)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: &str, extra: &str) -> ExperimentConfig {
        parse_config(&format!(
            "[experiment]\nkind = \"{kind}\"\n\n[model]\nn_spins = 4\nfield_ratio = 0.2\nn_max = 64\n\n[time]\nend_ms = 2.0\npoints = 21\n{extra}"
        ))
        .unwrap()
    }

    fn run_in(cfg: &ExperimentConfig, dir: &std::path::Path, threads: usize) -> Result<RunManifest> {
        run(
            cfg,
            &RunOptions {
                out: Some(dir.to_path_buf()),
                threads: Some(threads),
                ..RunOptions::default()
            },
        )
    }

    fn tables(m: &RunManifest) -> Vec<(String, String)> {
        m.outputs.iter().map(|e| (e.file.clone(), e.sha256.clone())).collect()
    }

    #[test]
    fn same_seed_gives_identical_tables() {
        let cfg = config("twa", "\n[twa]\ntrajectories = 200\nblocks = 10\n");
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run_in(&cfg, a.path(), 1).unwrap();
        let mb = run_in(&cfg, b.path(), 2).unwrap();
        assert_eq!(tables(&ma), tables(&mb));
        for e in &ma.outputs {
            assert_eq!(
                std::fs::read(a.path().join(&e.file)).unwrap(),
                std::fs::read(b.path().join(&e.file)).unwrap()
            );
        }
        RunManifest::read(a.path()).unwrap().verify(a.path()).unwrap();
    }

    #[test]
    fn ceilings_refuse_large_runs() {
        let cfg = config("fotoc", "\n[limits]\nmax_dim = 10\nmax_sparse_dim = 10\n");
        let dir = tempfile::tempdir().unwrap();
        let err = run_in(&cfg, dir.path(), 1).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
        let ok = run(
            &cfg,
            &RunOptions {
                out: Some(dir.path().to_path_buf()),
                threads: Some(1),
                allow_large: true,
                ..RunOptions::default()
            },
        );
        assert!(ok.is_ok(), "{ok:?}");
    }

    #[test]
    fn trajectory_ceiling() {
        let cfg = config("twa", "\n[twa]\ntrajectories = 200\nblocks = 10\n\n[limits]\nmax_trajectories = 100\n");
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_in(&cfg, dir.path(), 1), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn output_directory_is_required() {
        let cfg = config("twa", "");
        match run(&cfg, &RunOptions::default()) {
            Err(Error::Config { key, .. }) => assert_eq!(key.as_deref(), Some("experiment.output")),
            other => panic!("{other:?}"),
        }
    }
}
