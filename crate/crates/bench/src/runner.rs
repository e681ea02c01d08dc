//! The per-run pipeline and the multi-seed drivers built on it.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{info, warn};
use rambo_core::acquisition::run_acquisition;
use rambo_core::baselines::{self, Strategy};
use rambo_core::classifier::{self, TrainConfig};
use rambo_core::config::{RamboConfig, Toggles};
use rambo_core::datasets::{make_split, ActivePool, Dataset, LabelSource, PoolSplit};
use rambo_core::pretraining::run_pretraining;
use rambo_core::rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method, Timing, SCHEMA_VERSION};
use crate::records::{save_csv, RunRecord};
use crate::summary::{save_summary_tsv, summarize};
use crate::{io_err, BenchError, Result};

/// One unit of work: a method at one setting for one seed, evaluated at
/// every budget. RAMBO pretraining does not depend on the budget, so it runs
/// once per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub seed: u64,
    pub method: Method,
    pub rambo: RamboConfig,
    pub budgets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub seed: u64,
    pub method: String,
    pub budget: usize,
    pub error: String,
}

/// Labels bought by one run, as counted by the query gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueryAudit {
    pub seed: u64,
    pub budget: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    /// Parallel to `records`.
    pub audits: Vec<QueryAudit>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    fn extend(&mut self, other: ExperimentOutcome) {
        self.records.extend(other.records);
        self.audits.extend(other.audits);
        self.failures.extend(other.failures);
    }
}

/// Shared state of one benchmark: the dataset and the fixed evaluation sizes.
pub struct Bench {
    pub dataset: Arc<Dataset>,
    pub val_size: usize,
    pub test_size: usize,
    pub timing: Timing,
}

impl Bench {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            dataset: Arc::new(cfg.dataset.load()?),
            val_size: cfg.val_size,
            test_size: cfg.test_size,
            timing: cfg.timing,
        })
    }

    pub fn split(&self, k: usize, seed: u64) -> Result<PoolSplit> {
        Ok(make_split(
            &self.dataset,
            k,
            self.val_size,
            self.test_size,
            rng::derive(seed, rng::tag("split")),
        )?)
    }

    fn seconds(&self, start: Instant) -> f64 {
        match self.timing {
            Timing::Wall => start.elapsed().as_secs_f64(),
            Timing::Off => 0.0,
        }
    }

    /// Runs one unit; each budget yields a record or a failure.
    pub fn run(
        &self,
        spec: &RunSpec,
    ) -> Vec<std::result::Result<(RunRecord, QueryAudit), RunFailure>> {
        let fail = |budget: usize, e: BenchError| RunFailure {
            seed: spec.seed,
            method: spec.method.name().to_string(),
            budget,
            error: e.to_string(),
        };
        let split = match self.split(spec.rambo.k, spec.seed) {
            Ok(s) => s,
            Err(e) => {
                return spec
                    .budgets
                    .iter()
                    .map(|&b| Err(fail(b, clone_err(&e))))
                    .collect()
            }
        };
        match spec.method.strategy() {
            None => self.run_rambo(spec, &split, fail),
            Some(strategy) => spec
                .budgets
                .iter()
                .map(|&budget| {
                    self.run_baseline(spec, strategy, &split, budget)
                        .map_err(|e| fail(budget, e))
                })
                .collect(),
        }
    }

    fn run_rambo(
        &self,
        spec: &RunSpec,
        split: &PoolSplit,
        fail: impl Fn(usize, BenchError) -> RunFailure,
    ) -> Vec<std::result::Result<(RunRecord, QueryAudit), RunFailure>> {
        let gate = match ActivePool::new(self.dataset.clone(), split.clone()) {
            Ok(p) => p,
            Err(e) => {
                let e = BenchError::from(e);
                return spec
                    .budgets
                    .iter()
                    .map(|&b| Err(fail(b, clone_err(&e))))
                    .collect();
            }
        };
        let start = Instant::now();
        let pre = match run_pretraining(&gate, split, &spec.rambo, spec.seed) {
            Ok(p) => p,
            Err(e) => {
                let e = BenchError::from(e);
                return spec
                    .budgets
                    .iter()
                    .map(|&b| Err(fail(b, clone_err(&e))))
                    .collect();
            }
        };
        let pretrain_seconds = self.seconds(start);
        info!(
            "seed {} {}: pretraining accuracies {:?}, lambdas {:?}",
            spec.seed,
            toggle_name(spec.rambo.toggles),
            pre.trace.accuracies,
            pre.trace.lambdas
        );
        spec.budgets
            .iter()
            .map(|&budget| {
                let run = || -> Result<(RunRecord, QueryAudit)> {
                    let cfg = RamboConfig {
                        budget,
                        ..spec.rambo.clone()
                    };
                    let mut pool = gate.clone();
                    let start = Instant::now();
                    let out = run_acquisition(&pre.encoder, &mut pool, &cfg, spec.seed)?;
                    let acquire_seconds = self.seconds(start);
                    let audit = check_budget(&pool, spec.seed, budget)?;
                    let (val, test) =
                        final_accuracy(&pool, split, &out.labeled, spec.seed, &cfg.classifier)?;
                    let t = cfg.toggles;
                    Ok((
                        RunRecord {
                            lambda_ot: Some(cfg.effective_lambda_ot()),
                            bilevel: Some(t.bilevel),
                            ot: Some(t.ot),
                            ranknet: Some(t.ranknet),
                            val_accuracy: val,
                            test_accuracy: test,
                            pretrain_seconds,
                            acquire_seconds,
                            ..self.blank_record(spec, budget)
                        },
                        audit,
                    ))
                };
                run().map_err(|e| fail(budget, e))
            })
            .collect()
    }

    fn run_baseline(
        &self,
        spec: &RunSpec,
        strategy: Strategy,
        split: &PoolSplit,
        budget: usize,
    ) -> Result<(RunRecord, QueryAudit)> {
        let mut pool = ActivePool::new(self.dataset.clone(), split.clone())?;
        let start = Instant::now();
        let cls_seed = rng::derive(spec.seed, rng::tag("baseline-classifier"));
        let tc = &spec.rambo.classifier;
        let (clf, _) = classifier::train(
            &split.pretrain,
            &pool,
            classifier::init_seed(cls_seed, &split.pretrain),
            tc,
        )?;
        let mut sel_rng = rng::stream(spec.seed, rng::tag(strategy.name()));
        let chosen = baselines::select(
            strategy,
            &clf,
            pool.features(),
            &pool.remaining_pool(),
            &split.pretrain,
            budget,
            &mut sel_rng,
        )?;
        pool.query_batch(&chosen)?;
        let acquire_seconds = self.seconds(start);
        let audit = check_budget(&pool, spec.seed, budget)?;
        let labeled: Vec<usize> = split.pretrain.iter().chain(&chosen).copied().collect();
        let (val, test) = final_accuracy(&pool, split, &labeled, spec.seed, tc)?;
        Ok((
            RunRecord {
                val_accuracy: val,
                test_accuracy: test,
                acquire_seconds,
                ..self.blank_record(spec, budget)
            },
            audit,
        ))
    }

    fn blank_record(&self, spec: &RunSpec, budget: usize) -> RunRecord {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            seed: spec.seed,
            method: spec.method.name().to_string(),
            dataset: self.dataset.name().to_string(),
            k: spec.rambo.k,
            budget,
            lambda_ot: None,
            bilevel: None,
            ot: None,
            ranknet: None,
            val_accuracy: 0.0,
            test_accuracy: 0.0,
            pretrain_seconds: 0.0,
            acquire_seconds: 0.0,
        }
    }

    /// Runs units on `threads` workers; results come back in unit order.
    pub fn run_all(&self, specs: &[RunSpec], threads: usize) -> ExperimentOutcome {
        let threads = match threads {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
        .min(specs.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<_>>> = Mutex::new(vec![None; specs.len()]);
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(spec) = specs.get(i) else { break };
                    let out = self.run(spec);
                    slots.lock().expect("result lock")[i] = Some(out);
                });
            }
        });
        let mut outcome = ExperimentOutcome::default();
        for unit in slots
            .into_inner()
            .expect("result lock")
            .into_iter()
            .flatten()
        {
            for r in unit {
                match r {
                    Ok((rec, audit)) => {
                        outcome.records.push(rec);
                        outcome.audits.push(audit);
                    }
                    Err(f) => {
                        warn!(
                            "run failed: seed {} {} B={}: {}",
                            f.seed, f.method, f.budget, f.error
                        );
                        outcome.failures.push(f);
                    }
                }
            }
        }
        outcome
    }
}

fn toggle_name(t: Toggles) -> String {
    format!("bilevel={} ot={} ranknet={}", t.bilevel, t.ot, t.ranknet)
}

/// Errors are not `Clone`; failures only keep the message.
fn clone_err(e: &BenchError) -> BenchError {
    BenchError::Config(e.to_string())
}

fn check_budget(pool: &ActivePool, seed: u64, budget: usize) -> Result<QueryAudit> {
    let queries = pool.queries();
    if queries != budget {
        return Err(BenchError::BudgetViolation { queries, budget });
    }
    Ok(QueryAudit {
        seed,
        budget,
        queries,
    })
}

/// Validation and test accuracy of a classifier trained on `labeled`.
pub fn final_accuracy<D: LabelSource>(
    data: &D,
    split: &PoolSplit,
    labeled: &[usize],
    seed: u64,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let final_seed = rng::derive(seed, rng::tag("final-classifier"));
    let (clf, _) = classifier::train(
        labeled,
        data,
        classifier::init_seed(final_seed, labeled),
        cfg,
    )?;
    Ok((
        clf.accuracy(data, &split.val)?,
        clf.accuracy(data, &split.test)?,
    ))
}

/// Every seed x method unit of `cfg`.
pub fn experiment_specs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for &seed in &cfg.seeds {
        for &method in &cfg.methods {
            specs.push(RunSpec {
                seed,
                method,
                rambo: cfg.rambo.clone(),
                budgets: cfg.budgets.clone(),
            });
        }
    }
    specs
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let bench = Bench::new(cfg)?;
    Ok(bench.run_all(&experiment_specs(cfg), cfg.threads))
}

/// The eight toggle combinations of RAMBO plus the random baseline, per seed.
pub fn ablation_specs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for &seed in &cfg.seeds {
        for toggles in cfg.ablation_toggles() {
            specs.push(RunSpec {
                seed,
                method: Method::Rambo,
                rambo: RamboConfig {
                    toggles,
                    ..cfg.rambo.clone()
                },
                budgets: cfg.budgets.clone(),
            });
        }
        specs.push(RunSpec {
            seed,
            method: Method::Random,
            rambo: cfg.rambo.clone(),
            budgets: cfg.budgets.clone(),
        });
    }
    specs
}

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let bench = Bench::new(cfg)?;
    Ok(bench.run_all(&ablation_specs(cfg), cfg.threads))
}

/// RAMBO at each `lambda_ot` of the config grid.
pub fn sweep_lambda_ot(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if cfg.lambda_ot_grid.is_empty() {
        return Err(BenchError::Config(
            "lambda_ot_grid must not be empty".into(),
        ));
    }
    let bench = Bench::new(cfg)?;
    let mut specs = Vec::new();
    for &seed in &cfg.seeds {
        for &lambda_ot in &cfg.lambda_ot_grid {
            let rambo = RamboConfig {
                lambda_ot,
                ..cfg.rambo.clone()
            };
            rambo.validate()?;
            specs.push(RunSpec {
                seed,
                method: Method::Rambo,
                rambo,
                budgets: cfg.budgets.clone(),
            });
        }
    }
    Ok(bench.run_all(&specs, cfg.threads))
}

/// Every configured method at each initial pool size of the config grid.
pub fn sweep_k(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if cfg.k_grid.is_empty() {
        return Err(BenchError::Config("k_grid must not be empty".into()));
    }
    let bench = Bench::new(cfg)?;
    let mut outcome = ExperimentOutcome::default();
    for &k in &cfg.k_grid {
        let sub = ExperimentConfig {
            rambo: RamboConfig {
                k,
                ..cfg.rambo.clone()
            },
            ..cfg.clone()
        };
        sub.validate()?;
        outcome.extend(bench.run_all(&experiment_specs(&sub), cfg.threads));
    }
    Ok(outcome)
}

/// Writes `<stem>.csv`, `<stem>_summary.tsv`, `<stem>_failures.jsonl` and a
/// manifest carrying the config and its hash into `dir`.
pub fn write_outputs(
    outcome: &ExperimentOutcome,
    cfg: &ExperimentConfig,
    dir: &Path,
    stem: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_csv(&outcome.records, dir.join(format!("{stem}.csv")))?;
    save_summary_tsv(
        &summarize(&outcome.records),
        dir.join(format!("{stem}_summary.tsv")),
    )?;
    let mut failures = String::new();
    for f in &outcome.failures {
        failures.push_str(&serde_json::to_string(f)?);
        failures.push('\n');
    }
    let path = dir.join(format!("{stem}_failures.jsonl"));
    std::fs::write(&path, failures).map_err(io_err(&path))?;
    let manifest = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.hash(),
        "config": cfg,
        "runs": outcome.records.len(),
        "failures": outcome.failures.len(),
    });
    let path = dir.join(format!("{stem}_manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(())
}
