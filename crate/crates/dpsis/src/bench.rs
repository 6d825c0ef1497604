//! Experiment harness: seeded trial grids over (method, epsilon, k),
//! parallel execution, CSV emission, and a self-contained SVG accuracy
//! plot.
//!
//! ```
//! use dpsis::bench::{run_experiment, DatasetSource, ExperimentConfig, Method};
//! use dpsis::data::SynthSpec;
//!
//! let cfg = ExperimentConfig {
//!     dataset_name: "demo".into(),
//!     source: DatasetSource::Synthetic(SynthSpec::new(30, 12, 5)),
//!     methods: vec![Method::Sis, Method::DpSis],
//!     epsilons: vec![0.5, 5.0],
//!     ks: vec![3],
//!     trials: 2,
//!     master_seed: 1,
//!     lambda: 0.1,
//!     gamma: 0.5,
//!     record_timing: false,
//! };
//! let rows = run_experiment(&cfg).unwrap();
//! // sis runs once per trial; dp-sis once per (epsilon, trial).
//! assert_eq!(rows.len(), 2 + 2 * 2);
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::data::{
    gen_instability_w1, gen_instability_w1w2, gen_synth_fan, load_csv, Dataset, SynthSpec, Target,
};
use crate::error::{Error, Result};
use crate::metrics::{tgg_flags, topk_accuracy, RankedReference};
use crate::seed::mix;
use crate::selectors::{dp_sis, lasso_ranking, pearson_sis, sis, two_stage_select, LassoParams, TwoStageParams};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "DPSIS_WORKERS";

/// Where the experiment's data comes from.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    Csv { path: PathBuf, target: Target },
    Synthetic(SynthSpec),
    InstabilityW1 { seed: u64 },
    InstabilityW1W2 { seed: u64 },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        let ds = match self {
            DatasetSource::Csv { path, target } => load_csv(path, target)?,
            DatasetSource::Synthetic(spec) => gen_synth_fan(spec),
            DatasetSource::InstabilityW1 { seed } => gen_instability_w1(*seed),
            DatasetSource::InstabilityW1W2 { seed } => gen_instability_w1w2(*seed),
        };
        if ds.is_preprocessed() {
            Ok(ds)
        } else {
            let support = ds.true_support.clone();
            let mut out = ds.preprocess()?;
            out.true_support = support;
            Ok(out)
        }
    }
}

/// Selection methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Sis,
    DpSis,
    TwoStage,
    DpTwoStage,
    LassoTopk,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sis,
        Method::DpSis,
        Method::TwoStage,
        Method::DpTwoStage,
        Method::LassoTopk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sis => "sis",
            Method::DpSis => "dp-sis",
            Method::TwoStage => "two-stage",
            Method::DpTwoStage => "dp-two-stage",
            Method::LassoTopk => "lasso-topk",
        }
    }

    pub fn is_private(self) -> bool {
        matches!(self, Method::DpSis | Method::DpTwoStage)
    }

    fn id(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::BadConfig(format!("unknown method {s:?}")))
    }
}

/// Full description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    pub source: DatasetSource,
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub lambda: f64,
    pub gamma: f64,
    /// When false, wall times are recorded as zero so output is
    /// byte-reproducible across runs and worker counts.
    pub record_timing: bool,
}

/// Default epsilon grid: 15 log-spaced points spanning [0.1, 20].
pub fn default_epsilon_grid() -> Vec<f64> {
    let lo = 0.1f64.ln();
    let hi = 20f64.ln();
    (0..15)
        .map(|i| (lo + (hi - lo) * i as f64 / 14.0).exp())
        .collect()
}

/// One scored trial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset_name: String,
    pub method: Method,
    /// None for deterministic (non-private) methods; written as "NA".
    pub epsilon: Option<f64>,
    pub k: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub top: bool,
    pub great: bool,
    pub good: bool,
    pub wall_time_ms: f64,
}

fn worker_count() -> usize {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Reference ranking for scoring: known signal features first (strongest
/// correlation first), then the rest by correlation; datasets without a
/// known support fall back to the LASSO magnitude ranking.
fn reference_ranking(ds: &Dataset, lambda: f64) -> Result<Vec<usize>> {
    match &ds.true_support {
        Some(support) => {
            let scores = ds.abs_correlations();
            let by_score = |idx: &mut Vec<usize>| {
                idx.sort_by(|&a, &b| {
                    scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b))
                });
            };
            let mut head: Vec<usize> = support.iter().copied().collect();
            let mut rest: Vec<usize> = (0..ds.d()).filter(|j| !support.contains(j)).collect();
            by_score(&mut head);
            by_score(&mut rest);
            head.extend(rest);
            Ok(head)
        }
        None => lasso_ranking(ds, &LassoParams::new(lambda)),
    }
}

struct Cell {
    method: Method,
    epsilon: Option<f64>,
    k: usize,
    trial: usize,
    seed: u64,
}

/// Runs the full (method, epsilon, k, trial) grid.
///
/// The dataset and per-k reference rankings are computed once and shared
/// read-only. Cells execute on a bounded worker pool (size from
/// `DPSIS_WORKERS`, default available parallelism) and each cell derives
/// its own seed from (master seed, method, epsilon, k, trial), so output
/// is independent of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.trials < 1 {
        return Err(Error::BadConfig("trials must be at least 1".into()));
    }
    if cfg.ks.is_empty() {
        return Err(Error::BadConfig("at least one k is required".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::BadConfig("at least one method is required".into()));
    }
    if cfg.methods.iter().any(|m| m.is_private()) && cfg.epsilons.is_empty() {
        return Err(Error::BadConfig(
            "private methods require a non-empty epsilon grid".into(),
        ));
    }
    let ds = cfg.source.load()?;
    for &k in &cfg.ks {
        if k < 1 || k >= ds.d() {
            return Err(Error::BadK { k, d: ds.d() });
        }
        if 3 * k / 2 > ds.d() {
            return Err(Error::BadConfig(format!(
                "k = {k} too large for order-statistic metrics at d = {}",
                ds.d()
            )));
        }
    }

    let ranking = reference_ranking(&ds, cfg.lambda)?;
    let references: Vec<(usize, RankedReference, BTreeSet<usize>)> = cfg
        .ks
        .iter()
        .map(|&k| {
            let r = RankedReference::new(ranking.clone(), k)?;
            let top = r.top_set();
            Ok((k, r, top))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &method in &cfg.methods {
        let eps_list: Vec<Option<f64>> = if method.is_private() {
            cfg.epsilons.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for &epsilon in &eps_list {
            for &k in &cfg.ks {
                for trial in 0..cfg.trials {
                    let eps_bits = epsilon.map_or(u64::MAX, f64::to_bits);
                    let seed = mix(&[cfg.master_seed, method.id(), eps_bits, k as u64, trial as u64]);
                    cells.push(Cell { method, epsilon, k, trial, seed });
                }
            }
        }
    }

    let slots: Vec<Mutex<Option<ResultRow>>> = (0..cells.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let workers = worker_count().min(cells.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() || failure.lock().unwrap().is_some() {
                    return;
                }
                let cell = &cells[i];
                match run_cell(cfg, &ds, &references, cell) {
                    Ok(row) => *slots[i].lock().unwrap() = Some(row),
                    Err(e) => {
                        let mut f = failure.lock().unwrap();
                        if f.is_none() {
                            *f = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut rows: Vec<ResultRow> = slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("cell completed"))
        .collect();
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.epsilon.partial_cmp(&b.epsilon).unwrap())
            .then(a.k.cmp(&b.k))
            .then(a.trial_index.cmp(&b.trial_index))
    });
    Ok(rows)
}

fn run_cell(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    references: &[(usize, RankedReference, BTreeSet<usize>)],
    cell: &Cell,
) -> Result<ResultRow> {
    let start = Instant::now();
    let selected: BTreeSet<usize> = match cell.method {
        Method::Sis => sis(ds, cell.k)?,
        Method::DpSis => {
            dp_sis(ds, cell.k, cell.epsilon.unwrap(), cfg.gamma, cell.seed)?.indices
        }
        Method::LassoTopk => {
            crate::selectors::lasso_topk(ds, &LassoParams::new(cfg.lambda), cell.k)?.0
        }
        Method::TwoStage | Method::DpTwoStage => {
            let params = TwoStageParams {
                k: cell.k,
                block_count: None,
                lasso: LassoParams::new(cfg.lambda),
                private_selection: cell.method == Method::DpTwoStage,
                epsilon: cell.epsilon.unwrap_or(0.0),
                gamma: cfg.gamma,
            };
            two_stage_select(ds, &params, cell.seed)?
        }
    };
    let elapsed_ms = if cfg.record_timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };

    let (_, reference, top_set) = references
        .iter()
        .find(|(k, _, _)| *k == cell.k)
        .expect("reference prepared for every k");
    let accuracy = topk_accuracy(&selected, top_set)?;
    let (top, great, good) = tgg_flags(&selected, reference)?;

    Ok(ResultRow {
        dataset_name: cfg.dataset_name.clone(),
        method: cell.method,
        epsilon: cell.epsilon,
        k: cell.k,
        trial_index: cell.trial,
        seed: cell.seed,
        accuracy,
        top,
        great,
        good,
        wall_time_ms: elapsed_ms,
    })
}

/// Formats with 6 significant digits, trimming trailing zeros.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let trimmed = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            &s
        };
        if trimmed == "-0" {
            "0".to_string()
        } else {
            trimmed.to_string()
        }
    } else {
        format!("{x:.5e}")
    }
}

/// Writes rows as CSV: a header, then one line per row with fields in the
/// `ResultRow` declaration order. Floats carry 6 significant digits.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut out = String::from("dataset,method,epsilon,k,trial,seed,accuracy,top,great,good,wall_time_ms\n");
    for r in rows {
        let eps = r.epsilon.map_or("NA".to_string(), fmt_sig6);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.dataset_name,
            r.method,
            eps,
            r.k,
            r.trial_index,
            r.seed,
            fmt_sig6(r.accuracy),
            r.top,
            r.great,
            r.good,
            fmt_sig6(r.wall_time_ms),
        );
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const DASHES: [&str; 3] = ["none", "6 3", "2 2"];

/// Writes a standalone SVG: mean top-k accuracy against epsilon (log
/// scale), one polyline per (method, k) group, with a legend. Rows without
/// an epsilon (deterministic methods) are skipped.
pub fn emit_accuracy_plot(rows: &[ResultRow], path: &Path) -> Result<()> {
    // Mean accuracy per (method, k, epsilon).
    let mut groups: std::collections::BTreeMap<(Method, usize), std::collections::BTreeMap<u64, (f64, usize)>> =
        std::collections::BTreeMap::new();
    for r in rows {
        let Some(eps) = r.epsilon else { continue };
        let entry = groups
            .entry((r.method, r.k))
            .or_default()
            .entry(eps.to_bits())
            .or_insert((0.0, 0));
        entry.0 += r.accuracy;
        entry.1 += 1;
    }
    if groups.is_empty() {
        return Err(Error::NothingToPlot);
    }

    let (width, height) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 160.0, 30.0, 55.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);
    let all_eps: Vec<f64> = groups
        .values()
        .flat_map(|m| m.keys().map(|b| f64::from_bits(*b)))
        .collect();
    let min_e = all_eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_e = all_eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (min_e.ln(), max_e.ln());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_of = |e: f64| ml + (e.ln() - lo) / span * pw;
    let y_of = |a: f64| mt + (1.0 - a) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        mt + ph,
        ml + pw,
        mt + ph
    );
    let _ = writeln!(svg, "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>", mt + ph);
    for tick in 0..=5 {
        let a = tick as f64 / 5.0;
        let y = y_of(a);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{a:.1}</text>",
            ml - 6.0,
            y + 4.0
        );
        let _ = writeln!(svg, "<line x1=\"{}\" y1=\"{y}\" x2=\"{ml}\" y2=\"{y}\" stroke=\"black\"/>", ml - 4.0);
    }
    let mut eps_ticks: Vec<f64> = all_eps.clone();
    eps_ticks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eps_ticks.dedup();
    let tick_stride = (eps_ticks.len() / 6).max(1);
    for e in eps_ticks.iter().step_by(tick_stride) {
        let x = x_of(*e);
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            mt + ph + 18.0,
            fmt_sig6((*e * 1e3).round() / 1e3)
        );
        let _ = writeln!(svg, "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>", mt + ph, mt + ph + 4.0);
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">epsilon (log scale)</text>",
        ml + pw / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">mean top-k accuracy</text>",
        mt + ph / 2.0,
        mt + ph / 2.0
    );

    for (gi, ((method, k), series)) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let dash = DASHES[gi % DASHES.len()];
        let mut points: Vec<(f64, f64)> = series
            .iter()
            .map(|(bits, (sum, n))| (f64::from_bits(*bits), sum / *n as f64))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path_points: Vec<String> = points
            .iter()
            .map(|(e, a)| format!("{:.2},{:.2}", x_of(*e), y_of(*a)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" stroke-dasharray=\"{dash}\" points=\"{}\"/>",
            path_points.join(" ")
        );
        // Legend entry.
        let ly = mt + 14.0 + gi as f64 * 18.0;
        let lx = ml + pw + 12.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\" stroke-dasharray=\"{dash}\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{method} k={k}</text>",
            lx + 28.0,
            ly + 4.0
        );
    }
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Which instability construction to replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstabilityExperiment {
    W1,
    W1W2,
}

impl InstabilityExperiment {
    pub fn name(self) -> &'static str {
        match self {
            InstabilityExperiment::W1 => "w1",
            InstabilityExperiment::W1W2 => "w1w2",
        }
    }
}

/// Replicates the instability comparison: over `reps` freshly generated
/// datasets, counts how often SIS and the non-private two-stage method
/// select each feature. Returns `(sis_counts, two_stage_counts)`, each of
/// length d = 100.
pub fn instability_counts(
    experiment: InstabilityExperiment,
    reps: usize,
    master_seed: u64,
    k: usize,
    lambda: f64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let exp_id = match experiment {
        InstabilityExperiment::W1 => 1u64,
        InstabilityExperiment::W1W2 => 2u64,
    };
    let sis_counts = Mutex::new(vec![0u32; 100]);
    let two_stage_counts = Mutex::new(vec![0u32; 100]);
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let workers = worker_count().min(reps).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, Ordering::Relaxed);
                if rep >= reps || failure.lock().unwrap().is_some() {
                    return;
                }
                let seed = mix(&[master_seed, exp_id, rep as u64]);
                let run = || -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
                    let raw = match experiment {
                        InstabilityExperiment::W1 => gen_instability_w1(seed),
                        InstabilityExperiment::W1W2 => gen_instability_w1w2(seed),
                    };
                    // Screening is scale-free here: this comparison is
                    // non-private, so no bounding preprocessing applies.
                    let by_sis = pearson_sis(&raw, k)?;
                    let ds = raw.preprocess()?;
                    let params = TwoStageParams {
                        k,
                        block_count: None,
                        lasso: LassoParams::new(lambda),
                        private_selection: false,
                        epsilon: 0.0,
                        gamma: 0.5,
                    };
                    let by_two_stage = two_stage_select(&ds, &params, seed)?;
                    Ok((by_sis, by_two_stage))
                };
                match run() {
                    Ok((a, b)) => {
                        let mut s = sis_counts.lock().unwrap();
                        for j in a {
                            s[j] += 1;
                        }
                        drop(s);
                        let mut t = two_stage_counts.lock().unwrap();
                        for j in b {
                            t[j] += 1;
                        }
                    }
                    Err(e) => {
                        let mut f = failure.lock().unwrap();
                        if f.is_none() {
                            *f = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok((
        sis_counts.into_inner().unwrap(),
        two_stage_counts.into_inner().unwrap(),
    ))
}
