//! Noise sweeps for both mechanisms, producing utility-vs-attack tradeoff
//! tables, their CSV form and a scatter plot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{DatasetShape, RdpAccountant};
use crate::attacks::{self, AttackOptions, AttackRun};
use crate::error::{Error, Result};
use crate::mechanisms::{NoiseKind, NoiseSpec};
use crate::stats::{self, Trend, TrendTest};
use crate::textmetrics::EmbeddingTable;
use crate::trainer::{Dataset, TrainConfig};

pub const CSV_HEADER: [&str; 13] = [
    "mechanism",
    "noise_param",
    "target_epsilon",
    "utility_name",
    "utility",
    "auc",
    "leakage",
    "jaccard",
    "cosine",
    "meteor",
    "rouge_l",
    "n_seeds",
    "wall_time_s",
];

pub const AUX_HEADER: [&str; 14] = [
    "mechanism",
    "noise_param",
    "utility_min",
    "utility_max",
    "auc_min",
    "auc_max",
    "auc_reference",
    "leakage_fixed",
    "rouge_l_min",
    "rouge_l_max",
    "gap",
    "converged_probes",
    "zero_seed_utility",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityMetric {
    #[default]
    Accuracy,
    Mcc,
}

impl UtilityMetric {
    pub fn name(self) -> &'static str {
        match self {
            UtilityMetric::Accuracy => "accuracy",
            UtilityMetric::Mcc => "mcc",
        }
    }

    fn of(self, run: &AttackRun) -> f64 {
        let m = run.validation.unwrap_or(run.test);
        match self {
            UtilityMetric::Accuracy => m.accuracy,
            UtilityMetric::Mcc => m.mcc,
        }
    }
}

impl std::str::FromStr for UtilityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "mcc" => Ok(Self::Mcc),
            _ => Err(Error::InvalidParameter(format!("unknown utility metric `{s}`"))),
        }
    }
}

/// Everything a calibration run needs besides the data.
#[derive(Debug, Clone)]
pub struct CalibrationPlan {
    /// Training settings; `noise` and `seed` are replaced per grid point.
    pub train: TrainConfig,
    pub gaussian_sigmas: Vec<f64>,
    /// Resolved to σ through the accountant using the training shape.
    pub gaussian_epsilons: Vec<f64>,
    /// Defaults to `1/N`.
    pub delta: Option<f64>,
    pub vmf_kappas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub utility: UtilityMetric,
    pub attack: AttackOptions,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Record wall time per row. Off by default so output is reproducible.
    pub timing: bool,
}

impl CalibrationPlan {
    pub fn new(train: TrainConfig, seeds: Vec<u64>) -> Self {
        Self {
            train,
            gaussian_sigmas: Vec::new(),
            gaussian_epsilons: Vec::new(),
            delta: None,
            vmf_kappas: Vec::new(),
            seeds,
            utility: UtilityMetric::Accuracy,
            attack: AttackOptions::default(),
            jobs: None,
            timing: false,
        }
    }
}

/// One row's noise setting, or why it could not be set up.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub mechanism: NoiseKind,
    pub noise: std::result::Result<NoiseSpec, String>,
    pub noise_param: Option<f64>,
    pub target_epsilon: Option<f64>,
}

/// Baseline, then Gaussian σ values, then Gaussian target ε values, then VMF κ values.
pub fn grid(data: &Dataset, plan: &CalibrationPlan) -> Result<Vec<GridPoint>> {
    let mut out = vec![GridPoint {
        mechanism: NoiseKind::None,
        noise: Ok(NoiseSpec::none()),
        noise_param: None,
        target_epsilon: None,
    }];
    for &s in &plan.gaussian_sigmas {
        out.push(GridPoint {
            mechanism: NoiseKind::Gaussian,
            noise: NoiseSpec::gaussian(s).map_err(|e| e.to_string()),
            noise_param: Some(s),
            target_epsilon: None,
        });
    }
    if !plan.gaussian_epsilons.is_empty() {
        let shape = DatasetShape::new(
            data.train.len() as u64,
            plan.train.lot_size as u64,
            plan.train.epochs as u64,
        )?;
        let acc = RdpAccountant::default();
        for &eps in &plan.gaussian_epsilons {
            let sigma = shape
                .budget(eps, plan.delta)
                .and_then(|b| acc.sigma_for_target_epsilon(&b));
            out.push(GridPoint {
                mechanism: NoiseKind::Gaussian,
                noise_param: sigma.as_ref().ok().copied(),
                noise: sigma.and_then(NoiseSpec::gaussian).map_err(|e| e.to_string()),
                target_epsilon: Some(eps),
            });
        }
    }
    for &k in &plan.vmf_kappas {
        out.push(GridPoint {
            mechanism: NoiseKind::Vmf,
            noise: NoiseSpec::vmf(k).map_err(|e| e.to_string()),
            noise_param: Some(k),
            target_epsilon: None,
        });
    }
    Ok(out)
}

/// One CSV row. Missing metrics are `None` and serialize as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub mechanism: NoiseKind,
    pub noise_param: Option<f64>,
    pub target_epsilon: Option<f64>,
    pub utility_name: String,
    pub utility: Option<f64>,
    pub auc: Option<f64>,
    pub leakage: Option<f64>,
    pub jaccard: Option<f64>,
    pub cosine: Option<f64>,
    pub meteor: Option<f64>,
    pub rouge_l: Option<f64>,
    pub n_seeds: usize,
    pub wall_time_s: Option<f64>,
}

/// Spread and diagnostics kept next to each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxRow {
    pub mechanism: NoiseKind,
    pub noise_param: Option<f64>,
    pub utility_min: Option<f64>,
    pub utility_max: Option<f64>,
    pub auc_min: Option<f64>,
    pub auc_max: Option<f64>,
    pub auc_reference: Option<f64>,
    pub leakage_fixed: Option<f64>,
    pub rouge_l_min: Option<f64>,
    pub rouge_l_max: Option<f64>,
    pub gap: Option<f64>,
    pub converged_probes: Option<f64>,
    /// Utility of this row's first seed, for baseline comparisons.
    pub zero_seed_utility: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    pub rows: Vec<TradeoffRow>,
}

/// Result of [`run_calibration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub table: TradeoffTable,
    pub aux: Vec<AuxRow>,
    /// Share of (noised row, seed) pairs where the baseline utility is at
    /// least the noised one. Reported, not enforced.
    pub baseline_dominance: Option<f64>,
}

/// Trains, evaluates and attacks every grid point for every seed and
/// aggregates seed medians. Failures are kept in the row and the run goes on.
pub fn run_calibration(data: &Dataset, plan: &CalibrationPlan, emb: &EmbeddingTable) -> Result<Calibration> {
    if plan.seeds.is_empty() {
        return Err(Error::EmptyInput("seed list".into()));
    }
    let points = grid(data, plan)?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| plan.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let work = || -> Vec<(std::result::Result<AttackRun, String>, f64)> {
        jobs.par_iter()
            .map(|&(p, seed)| {
                let start = Instant::now();
                let res = points[p].noise.clone().and_then(|noise| {
                    let cfg = TrainConfig {
                        noise,
                        seed,
                        ..plan.train.clone()
                    };
                    attacks::attack_run(data, &cfg, emb, &plan.attack).map_err(|e| e.to_string())
                });
                (res, start.elapsed().as_secs_f64())
            })
            .collect()
    };
    let results = match plan.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let per_point = plan.seeds.len();
    let mut rows = Vec::with_capacity(points.len());
    let mut aux = Vec::with_capacity(points.len());
    let mut seed_utils: Vec<Vec<Option<f64>>> = Vec::with_capacity(points.len());
    for (point, chunk) in points.iter().zip(results.chunks(per_point)) {
        let runs: Vec<&AttackRun> = chunk.iter().filter_map(|(r, _)| r.as_ref().ok()).collect();
        let error = chunk.iter().find_map(|(r, _)| r.as_ref().err().cloned());
        let col = |f: &dyn Fn(&AttackRun) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let med = |f: &dyn Fn(&AttackRun) -> f64| stats::median(&col(f));
        let lo = |f: &dyn Fn(&AttackRun) -> f64| col(f).into_iter().reduce(f64::min);
        let hi = |f: &dyn Fn(&AttackRun) -> f64| col(f).into_iter().reduce(f64::max);
        let util = |r: &AttackRun| plan.utility.of(r);
        let refs: Vec<f64> = runs.iter().filter_map(|r| r.auc_reference).collect();
        rows.push(TradeoffRow {
            mechanism: point.mechanism,
            noise_param: point.noise_param,
            target_epsilon: point.target_epsilon,
            utility_name: plan.utility.name().to_string(),
            utility: med(&util),
            auc: med(&|r| r.mia.auc),
            leakage: med(&|r| r.mia.leakage),
            jaccard: med(&|r| r.reconstruction.jaccard),
            cosine: med(&|r| r.reconstruction.cosine),
            meteor: med(&|r| r.reconstruction.meteor),
            rouge_l: med(&|r| r.reconstruction.rouge_l),
            n_seeds: runs.len(),
            wall_time_s: plan.timing.then(|| chunk.iter().map(|c| c.1).sum()),
        });
        aux.push(AuxRow {
            mechanism: point.mechanism,
            noise_param: point.noise_param,
            utility_min: lo(&util),
            utility_max: hi(&util),
            auc_min: lo(&|r| r.mia.auc),
            auc_max: hi(&|r| r.mia.auc),
            auc_reference: stats::median(&refs),
            leakage_fixed: med(&|r| r.mia.leakage_fixed),
            rouge_l_min: lo(&|r| r.reconstruction.rouge_l),
            rouge_l_max: hi(&|r| r.reconstruction.rouge_l),
            gap: med(&|r| r.gap),
            converged_probes: med(&|r| r.converged_probes as f64),
            zero_seed_utility: chunk[0].0.as_ref().ok().map(util),
            error,
        });
        seed_utils.push(chunk.iter().map(|(r, _)| r.as_ref().ok().map(util)).collect());
    }

    let mut wins = 0usize;
    let mut total = 0usize;
    for noised in &seed_utils[1..] {
        for (b, n) in seed_utils[0].iter().zip(noised) {
            if let (Some(b), Some(n)) = (b, n) {
                total += 1;
                wins += usize::from(b >= n);
            }
        }
    }
    Ok(Calibration {
        table: TradeoffTable { rows },
        aux,
        baseline_dominance: (total > 0).then(|| wins as f64 / total as f64),
    })
}

/// Table columns a trend can be computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Utility,
    Auc,
    Leakage,
    RougeL,
}

impl TradeoffTable {
    pub fn rows_for(&self, kind: NoiseKind) -> impl Iterator<Item = &TradeoffRow> {
        self.rows.iter().filter(move |r| r.mechanism == kind)
    }

    /// Spearman trend of `column` against the noise parameter over this
    /// mechanism's rows that have both values.
    pub fn trend(&self, kind: NoiseKind, column: Column, dir: Trend) -> Option<TrendTest> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .rows_for(kind)
            .filter_map(|r| {
                let v = match column {
                    Column::Utility => r.utility,
                    Column::Auc => r.auc,
                    Column::Leakage => r.leakage,
                    Column::RougeL => r.rouge_l,
                }?;
                Some((r.noise_param?, v))
            })
            .unzip();
        (x.len() >= 3).then(|| stats::spearman_trend(&x, &y, dir))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_records(path.as_ref(), &CSV_HEADER, &self.rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != CSV_HEADER {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<TradeoffRow>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { rows })
    }
}

fn write_records<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Files written by [`emit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitted {
    pub csv: PathBuf,
    pub aux: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

/// Writes `<stem>.csv`, and optionally `<stem>.aux.csv` and `<stem>.svg`
/// next to it. `path` may carry any extension; it is replaced.
pub fn emit(cal: &Calibration, path: impl AsRef<Path>, plot: bool) -> Result<Emitted> {
    if cal.table.rows.is_empty() {
        return Err(Error::EmptyInput("tradeoff table".into()));
    }
    let base = path.as_ref().with_extension("");
    let with = |ext: &str| PathBuf::from(format!("{}.{ext}", base.display()));
    let csv = with("csv");
    cal.table.write_csv(&csv)?;
    let aux = if cal.aux.is_empty() {
        None
    } else {
        let p = with("aux.csv");
        write_records(&p, &AUX_HEADER, &cal.aux)?;
        Some(p)
    };
    let plot = if plot {
        let p = with("svg");
        std::fs::write(&p, scatter_svg(&cal.table)).map_err(|e| Error::io(&p, e))?;
        Some(p)
    } else {
        None
    };
    Ok(Emitted { csv, aux, plot })
}

/// Utility against ROUGE-L, one colour and marker per mechanism.
pub fn scatter_svg(table: &TradeoffTable) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 50.0;
    let pts: Vec<(&TradeoffRow, f64, f64)> = table
        .rows
        .iter()
        .filter_map(|r| Some((r, r.rouge_l?, r.utility?)))
        .collect();
    let (ymin, ymax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.2), b.max(p.2)));
    let (ymin, ymax) = if ymin.is_finite() && ymax > ymin {
        (ymin, ymax)
    } else {
        (0.0, 1.0)
    };
    let sx = |x: f64| M + x * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - ymin) / (ymax - ymin) * (H - 2.0 * M);
    let utility_name = table.rows.first().map_or("utility", |r| r.utility_name.as_str());

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        t = M,
        b = H - M,
        r = W - M
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = ymin + f * (ymax - ymin);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{f:.2}</text>"#,
            sx(f),
            H - M + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.3}</text>"#,
            M - 6.0,
            sy(y) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ROUGE-L</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{utility_name}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (r, x, y) in &pts {
        let (cx, cy) = (sx(*x), sy(*y));
        let label = r.noise_param.map(|p| format!("{p}")).unwrap_or_default();
        match r.mechanism {
            NoiseKind::None => {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="8" height="8" fill="black"><title>baseline</title></rect>"#,
                    cx - 4.0,
                    cy - 4.0
                );
            }
            NoiseKind::Gaussian => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="4" style="fill:#1f77b4"><title>gaussian sigma={label}</title></circle>"#
                );
            }
            NoiseKind::Vmf => {
                let _ = writeln!(
                    s,
                    r#"<path d="M{:.1} {:.1} l5 9 h-10 z" style="fill:#d62728"><title>vmf kappa={label}</title></path>"#,
                    cx,
                    cy - 5.0
                );
            }
        }
    }
    let legend = [("baseline", "#000000"), ("gaussian", "#1f77b4"), ("vmf", "#d62728")];
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = M + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="8" height="8" style="fill:{color}"/>"#,
            W - M - 80.0,
            y - 8.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}">{name}</text>"#, W - M - 66.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::SyntheticCorpus;

    fn data() -> Dataset {
        let texts = SyntheticCorpus {
            examples: 300,
            ..Default::default()
        }
        .generate(2);
        Dataset::from_single(&texts, 0.6, 0.2, 2, 200).unwrap()
    }

    fn plan() -> CalibrationPlan {
        let mut p = CalibrationPlan::new(TrainConfig::new(0.5, 8, 1, NoiseSpec::none(), 0), vec![1, 2]);
        p.attack = AttackOptions {
            mia_samples: 40,
            reference_models: 1,
            probes: 4,
            ..Default::default()
        };
        p
    }

    fn row(mechanism: NoiseKind, noise_param: Option<f64>, utility: Option<f64>) -> TradeoffRow {
        TradeoffRow {
            mechanism,
            noise_param,
            target_epsilon: None,
            utility_name: "accuracy".into(),
            utility,
            auc: Some(0.5),
            leakage: None,
            jaccard: Some(1.0 / 3.0),
            cosine: Some(0.1 + 0.2),
            meteor: None,
            rouge_l: Some(0.25),
            n_seeds: 3,
            wall_time_s: None,
        }
    }

    #[test]
    fn one_point_per_mechanism_gives_three_rows() {
        let d = data();
        let mut p = plan();
        p.gaussian_sigmas = vec![1.0];
        p.vmf_kappas = vec![100.0];
        let cal = run_calibration(&d, &p, &EmbeddingTable::one_hot(d.vocab.tokens()).unwrap()).unwrap();
        let kinds: Vec<_> = cal.table.rows.iter().map(|r| r.mechanism).collect();
        assert_eq!(kinds, [NoiseKind::None, NoiseKind::Gaussian, NoiseKind::Vmf]);
        assert!(cal
            .table
            .rows
            .iter()
            .all(|r| r.n_seeds == 2 && r.utility.is_some() && r.wall_time_s.is_none()));
        assert_eq!(cal.table.rows[0].noise_param, None);
        assert!(cal.baseline_dominance.is_some());
    }

    #[test]
    fn epsilons_resolve_and_failures_stay_in_row() {
        let d = data();
        let mut p = plan();
        p.gaussian_epsilons = vec![10.0, 1e-9];
        p.vmf_kappas = vec![-1.0];
        let points = grid(&d, &p).unwrap();
        assert_eq!(points.len(), 4);
        assert!(points[1].noise_param.unwrap() > 0.0);
        assert_eq!(points[1].target_epsilon, Some(10.0));
        assert!(points[2].noise.is_err());
        let cal = run_calibration(&d, &p, &EmbeddingTable::one_hot(d.vocab.tokens()).unwrap()).unwrap();
        assert_eq!(cal.table.rows[2].n_seeds, 0);
        assert_eq!(cal.table.rows[2].utility, None);
        assert!(cal.aux[2].error.is_some());
        assert!(cal.aux[3].error.is_some());
        assert!(cal.aux[1].error.is_none());
    }

    #[test]
    fn csv_round_trip_and_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let table = TradeoffTable {
            rows: vec![
                row(NoiseKind::None, None, Some(0.9)),
                row(NoiseKind::Gaussian, Some(0.747), None),
                row(NoiseKind::Vmf, Some(1e6), Some(0.123_456_789_012_345_6)),
            ],
        };
        let cal = Calibration {
            table: table.clone(),
            aux: Vec::new(),
            baseline_dominance: None,
        };
        let out = emit(&cal, dir.path().join("t.csv"), true).unwrap();
        let text = std::fs::read_to_string(&out.csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert!(!text.contains("NaN"));
        assert_eq!(
            text.lines().nth(2).unwrap(),
            "gaussian,0.747,,accuracy,,0.5,,0.3333333333333333,0.30000000000000004,,0.25,3,"
        );
        assert_eq!(TradeoffTable::read_csv(&out.csv).unwrap(), table);
        assert!(std::fs::read_to_string(out.plot.unwrap()).unwrap().starts_with("<svg"));
    }

    #[test]
    fn seven_rows_for_two_mechanisms_by_three_levels() {
        let d = data();
        let mut p = plan();
        p.seeds = vec![0];
        p.attack.reference_models = 0;
        p.gaussian_sigmas = vec![0.5, 1.0, 2.0];
        p.vmf_kappas = vec![10.0, 100.0, 1000.0];
        let cal = run_calibration(&d, &p, &EmbeddingTable::one_hot(d.vocab.tokens()).unwrap()).unwrap();
        assert_eq!(cal.table.rows.len(), 7);
        let t = cal
            .table
            .trend(NoiseKind::Gaussian, Column::Utility, Trend::Decreasing)
            .unwrap();
        assert!((-1.0..=1.0).contains(&t.rho));
    }

    #[test]
    fn unwritable_path_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let cal = Calibration {
            table: TradeoffTable {
                rows: vec![row(NoiseKind::None, None, Some(1.0))],
            },
            aux: Vec::new(),
            baseline_dominance: None,
        };
        assert!(matches!(
            emit(&cal, dir.path().join("no/such/dir/t"), false),
            Err(Error::Io { .. })
        ));
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(TradeoffTable::read_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn parallel_runs_are_deterministic() {
        let d = data();
        let emb = EmbeddingTable::one_hot(d.vocab.tokens()).unwrap();
        let mut p = plan();
        p.gaussian_sigmas = vec![0.5];
        p.vmf_kappas = vec![50.0];
        p.jobs = Some(3);
        let a = run_calibration(&d, &p, &emb).unwrap();
        p.jobs = Some(1);
        assert_eq!(a, run_calibration(&d, &p, &emb).unwrap());
    }
}
