//! Simulated mixtures of network models and the scenario runner.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{run_em, EmConfig};
use crate::error::{NetmixError, Result};
use crate::glm::logistic;
use crate::population::{dyad_positions, CovariateSet, GraphPopulation};
use crate::selection::{purity, select_m};
use crate::specs::{BlockSource, CountingRule, NetworkModelSpec};

/// Generating parameters of one mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ComponentParams {
    P1 { theta: f64, alpha: Vec<f64> },
    /// `probs` is row-major over blocks.
    Sbm { blocks: Vec<usize>, probs: Vec<f64> },
    /// One probability per dyad position.
    Unconstrained { probs: Vec<f64> },
}

impl ComponentParams {
    fn edge_probability(&self, d: usize, i: usize, j: usize) -> f64 {
        match self {
            Self::P1 { theta, alpha } => logistic(theta + alpha[i] + alpha[j]),
            Self::Sbm { blocks, probs } => {
                let b = (probs.len() as f64).sqrt() as usize;
                probs[blocks[i] * b + blocks[j]]
            }
            Self::Unconstrained { probs } => probs[d],
        }
    }

    fn check(&self, v: usize, directed: bool) -> Result<()> {
        let in_unit = |p: &f64| (0.0..=1.0).contains(p);
        match self {
            Self::P1 { alpha, theta } => {
                if alpha.len() != v || !theta.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
                    return Err(NetmixError::InvalidArgument(format!("p1 needs {v} finite node effects")));
                }
                if directed {
                    return Err(NetmixError::InvalidArgument("p1 generator is undirected".into()));
                }
            }
            Self::Sbm { blocks, probs } => {
                let b = (probs.len() as f64).sqrt() as usize;
                if b * b != probs.len() || blocks.len() != v || blocks.iter().any(|&x| x >= b) {
                    return Err(NetmixError::InvalidArgument("block matrix does not match the blocks".into()));
                }
                if !probs.iter().all(in_unit) {
                    return Err(NetmixError::InvalidArgument("block probabilities must lie in [0, 1]".into()));
                }
            }
            Self::Unconstrained { probs } => {
                if probs.len() != crate::population::dyad_count(v, directed) {
                    return Err(NetmixError::InvalidArgument("one probability per dyad required".into()));
                }
                if !probs.iter().all(in_unit) {
                    return Err(NetmixError::InvalidArgument("dyad probabilities must lie in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub n_vertices: usize,
    pub directed: bool,
    pub components: Vec<ComponentParams>,
}

/// Draws `K` graphs; graph `k` comes from component `⌊k M / K⌋`, so the
/// subpopulations are contiguous and as equal in size as possible.
pub fn simulate_mixture(params: &MixtureParams, n_graphs: usize, seed: u64) -> Result<(GraphPopulation, Vec<usize>)> {
    let (v, directed) = (params.n_vertices, params.directed);
    let m = params.components.len();
    if m == 0 || n_graphs == 0 {
        return Err(NetmixError::InvalidArgument("need at least one component and one graph".into()));
    }
    for c in &params.components {
        c.check(v, directed)?;
    }
    let positions = dyad_positions(v, directed);
    let tables: Vec<Vec<f64>> = params
        .components
        .iter()
        .map(|c| positions.iter().enumerate().map(|(d, &(i, j))| c.edge_probability(d, i, j)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n_graphs).map(|k| k * m / n_graphs).collect();
    let adjacency = labels
        .iter()
        .map(|&label| {
            let mut a = vec![0u8; v * v];
            for (&(i, j), &p) in positions.iter().zip(&tables[label]) {
                if rng.random::<f64>() < p {
                    a[i * v + j] = 1;
                    if !directed {
                        a[j * v + i] = 1;
                    }
                }
            }
            a
        })
        .collect();
    Ok((GraphPopulation::from_matrices(v, directed, adjacency)?, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    P1,
    Sbm,
    Unconstrained,
}

/// Separation knobs of the generated components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub family: Family,
    /// Number of blocks (SBM only).
    pub blocks: usize,
    /// Logit-scale intercept shared by all components.
    pub base: f64,
    /// Standard deviation of the structure shared by all components.
    pub shared_sd: f64,
    /// Standard deviation of each component's own deviation.
    pub component_sd: f64,
}

impl Generator {
    /// Undirected generating parameters for `M` components on `v` vertices.
    pub fn params(&self, v: usize, n_components: usize, seed: u64) -> MixtureParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shared = Normal::new(0.0, self.shared_sd).expect("finite sd");
        let own = Normal::new(0.0, self.component_sd).expect("finite sd");
        let centered = |x: Vec<f64>| {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.into_iter().map(|a| a - mean).collect::<Vec<f64>>()
        };
        let components = match self.family {
            Family::P1 => {
                let base: Vec<f64> = (0..v).map(|_| shared.sample(&mut rng)).collect();
                (0..n_components)
                    .map(|_| ComponentParams::P1 {
                        theta: self.base,
                        alpha: centered(base.iter().map(|b| b + own.sample(&mut rng)).collect()),
                    })
                    .collect()
            }
            Family::Sbm => {
                let b = self.blocks.max(1);
                let blocks = sbm_blocks(v, b);
                let base: Vec<f64> = (0..b * b).map(|_| shared.sample(&mut rng)).collect();
                (0..n_components)
                    .map(|_| {
                        let mut probs = vec![0.0; b * b];
                        for r in 0..b {
                            for s in r..b {
                                let assortative = if r == s { 1.5 } else { 0.0 };
                                let p = logistic(self.base + assortative + base[r * b + s] + own.sample(&mut rng));
                                probs[r * b + s] = p;
                                probs[s * b + r] = p;
                            }
                        }
                        ComponentParams::Sbm { blocks: blocks.clone(), probs }
                    })
                    .collect()
            }
            Family::Unconstrained => {
                let d = v * (v - 1) / 2;
                let base: Vec<f64> = (0..d).map(|_| shared.sample(&mut rng)).collect();
                (0..n_components)
                    .map(|_| ComponentParams::Unconstrained {
                        probs: base.iter().map(|b| logistic(self.base + b + own.sample(&mut rng))).collect(),
                    })
                    .collect()
            }
        };
        MixtureParams {
            n_vertices: v,
            directed: false,
            components,
        }
    }

    /// Model spec that matches the generator.
    pub fn spec(&self, v: usize) -> NetworkModelSpec {
        match self.family {
            Family::P1 => NetworkModelSpec::P1,
            Family::Sbm => NetworkModelSpec::SbmApriori {
                blocks: BlockSource::Labels(sbm_blocks(v, self.blocks.max(1)).iter().map(|&b| b as i64).collect()),
            },
            Family::Unconstrained => NetworkModelSpec::Unconstrained,
        }
    }
}

/// Balanced contiguous block labels.
pub fn sbm_blocks(v: usize, b: usize) -> Vec<usize> {
    (0..v).map(|i| i * b / v).collect()
}

/// One grid point `(v, K, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub v: usize,
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub generator: Generator,
    pub grid: Vec<Cell>,
    pub replicates: usize,
    pub seed: u64,
    /// Seed of the generating parameters; fixed per scenario so every
    /// replicate of a cell shares them.
    pub param_seed: u64,
    pub timing: bool,
    /// Run model selection over `1..=max` components.
    pub select_up_to: Option<usize>,
    pub n_starts: usize,
}

fn scenario(id: &str, generator: Generator, grid: Vec<Cell>) -> ScenarioConfig {
    ScenarioConfig {
        id: id.to_string(),
        generator,
        grid,
        replicates: 10,
        seed: 1,
        param_seed: 2024,
        timing: false,
        select_up_to: None,
        n_starts: 10,
    }
}

const P1_GEN: Generator = Generator {
    family: Family::P1,
    blocks: 0,
    base: -0.5,
    shared_sd: 0.6,
    component_sd: 0.3,
};
const SBM_GEN: Generator = Generator {
    family: Family::Sbm,
    blocks: 3,
    base: -1.5,
    shared_sd: 0.3,
    component_sd: 0.4,
};
const UNC_GEN: Generator = Generator {
    family: Family::Unconstrained,
    blocks: 0,
    base: -1.0,
    shared_sd: 0.8,
    component_sd: 0.6,
};
/// Simulation J: three unconstrained components on 20 vertices.
pub const SIM_J_GEN: Generator = Generator {
    family: Family::Unconstrained,
    blocks: 0,
    base: -1.0,
    shared_sd: 0.8,
    component_sd: 1.3,
};
const TIMING_GEN: Generator = Generator {
    family: Family::Sbm,
    blocks: 5,
    base: -1.5,
    shared_sd: 0.3,
    component_sd: 0.3,
};

fn v_sweep(vs: &[usize], k: usize, m: usize) -> Vec<Cell> {
    vs.iter().map(|&v| Cell { v, k, m }).collect()
}
fn k_sweep(v: usize, ks: &[usize], m: usize) -> Vec<Cell> {
    ks.iter().map(|&k| Cell { v, k, m }).collect()
}
fn m_sweep(v: usize, ms: &[usize]) -> Vec<Cell> {
    ms.iter().map(|&m| Cell { v, k: 10 * m, m }).collect()
}

/// Desk-scale configuration of a named scenario (`A`..`L`).
pub fn scenario_config(id: &str) -> Result<ScenarioConfig> {
    let ks = [12, 24, 36, 48, 60];
    let ms = [2, 3, 4, 5, 6, 7];
    let vs = [10, 20, 30, 40];
    Ok(match id.to_ascii_uppercase().as_str() {
        "A" => scenario("A", P1_GEN, v_sweep(&vs, 50, 2)),
        "B" => scenario("B", P1_GEN, k_sweep(20, &ks, 2)),
        "C" => scenario("C", P1_GEN, m_sweep(30, &ms)),
        "D" => scenario("D", SBM_GEN, v_sweep(&vs, 50, 2)),
        "E" => scenario("E", SBM_GEN, k_sweep(20, &ks, 2)),
        "F" => scenario("F", SBM_GEN, m_sweep(30, &ms)),
        "G" => scenario("G", UNC_GEN, v_sweep(&vs, 50, 2)),
        "H" => scenario("H", UNC_GEN, k_sweep(15, &ks, 2)),
        "I" => scenario("I", UNC_GEN, m_sweep(15, &ms)),
        "J" => ScenarioConfig {
            replicates: 25,
            select_up_to: Some(5),
            ..scenario("J", SIM_J_GEN, k_sweep(20, &[30, 90], 3))
        },
        "K" => ScenarioConfig {
            replicates: 5,
            timing: true,
            ..scenario("K", TIMING_GEN, k_sweep(50, &[100, 200, 400, 800], 2))
        },
        "L" => ScenarioConfig {
            replicates: 5,
            timing: true,
            ..scenario("L", TIMING_GEN, v_sweep(&[100, 200, 300, 400], 50, 2))
        },
        other => return Err(NetmixError::InvalidArgument(format!("unknown scenario `{other}`"))),
    })
}

/// Full-scale variant: 50 replicates (100 for J, with `K` up to 300), and
/// the wider sweeps for K and L.
pub fn full_scale(mut config: ScenarioConfig) -> ScenarioConfig {
    config.replicates = if config.id == "J" { 100 } else { 50 };
    match config.id.as_str() {
        "J" => config.grid = k_sweep(20, &[30, 90, 180, 300], 3),
        "K" => config.grid = k_sweep(50, &[100, 200, 400, 600, 800, 1000], 2),
        "L" => config.grid = v_sweep(&[100, 200, 400, 600, 800, 1000], 50, 2),
        _ => {}
    }
    config
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub purity: Option<f64>,
    pub chosen_aic: Option<usize>,
    pub chosen_bic: Option<usize>,
    /// Wall-clock seconds of the fit (timing scenarios only).
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub replicates: Vec<ReplicateResult>,
    pub median_purity: Option<f64>,
    pub median_seconds: Option<f64>,
    /// `aic_counts[m - 1]`: replicates where AIC chose `m`.
    pub aic_counts: Vec<usize>,
    pub bic_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub cells: Vec<CellResult>,
}

impl ScenarioResult {
    /// One row per replicate and cell. Wall-clock times are left out so
    /// that reruns give identical files; they stay in the JSON form.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let optu = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = String::from("scenario,v,K,M,replicate,seed,purity,aic_M,bic_M,error\n");
        for c in &self.cells {
            for r in &c.replicates {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    self.config.id,
                    c.cell.v,
                    c.cell.k,
                    c.cell.m,
                    r.replicate,
                    r.seed,
                    opt(r.purity),
                    optu(r.chosen_aic),
                    optu(r.chosen_bic),
                    r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
                ));
            }
        }
        out
    }

    /// One row per cell: median purity and, when selecting, how often each
    /// `M` was chosen.
    pub fn summary_csv(&self) -> String {
        let max_m = self.config.select_up_to.unwrap_or(0);
        let mut out = String::from("scenario,v,K,M,replicates,failed,median_purity");
        for m in 1..=max_m {
            out.push_str(&format!(",aic_{m}"));
        }
        for m in 1..=max_m {
            out.push_str(&format!(",bic_{m}"));
        }
        out.push('\n');
        for c in &self.cells {
            let failed = c.replicates.iter().filter(|r| r.error.is_some()).count();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                self.config.id,
                c.cell.v,
                c.cell.k,
                c.cell.m,
                c.replicates.len(),
                failed,
                c.median_purity.map_or_else(String::new, |x| format!("{x:.6}"))
            ));
            for n in c.aic_counts.iter().chain(&c.bic_counts) {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

/// FNV-1a of the canonical JSON of a value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable config");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn replicate_seed(base: u64, cell: usize, rep: usize) -> u64 {
    base.wrapping_mul(1_000_003)
        .wrapping_add((cell as u64) << 20)
        .wrapping_add(rep as u64)
}

fn run_replicate(config: &ScenarioConfig, cell_index: usize, cell: Cell, rep: usize) -> ReplicateResult {
    let seed = replicate_seed(config.seed, cell_index, rep);
    let mut result = ReplicateResult {
        replicate: rep,
        seed,
        purity: None,
        chosen_aic: None,
        chosen_bic: None,
        seconds: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let params = config.generator.params(cell.v, cell.m, config.param_seed.wrapping_add(cell_index as u64));
        let (pop, truth) = simulate_mixture(&params, cell.k, seed)?;
        let model = config.generator.spec(cell.v).compile(&pop, &CovariateSet::default())?;
        let em = EmConfig {
            n_starts: config.n_starts,
            seed,
            ..EmConfig::default()
        };
        let clock = Instant::now();
        let fit = run_em(&pop, &model, cell.m, &em)?;
        if config.timing {
            result.seconds = Some(clock.elapsed().as_secs_f64());
        }
        result.purity = Some(purity(&fit.assignment, &truth)?);
        if let Some(max_m) = config.select_up_to {
            let (table, _) = select_m(&pop, &model, 1..=max_m.min(cell.k), &em, CountingRule::default())?;
            result.chosen_aic = table.chosen_aic;
            result.chosen_bic = table.chosen_bic;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result
}

/// Simulates and fits every replicate of every cell. Replicates run in
/// parallel except in timing scenarios, which run one at a time on a
/// single worker.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    if config.replicates == 0 || config.grid.is_empty() {
        return Err(NetmixError::InvalidArgument("scenario needs replicates and grid cells".into()));
    }
    if config.grid.iter().any(|c| c.v < 3 || c.k == 0 || c.m == 0 || c.m > c.k) {
        return Err(NetmixError::InvalidArgument("grid cells need v >= 3 and 1 <= M <= K".into()));
    }
    let jobs: Vec<(usize, Cell, usize)> = config
        .grid
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| (0..config.replicates).map(move |r| (i, c, r)))
        .collect();
    let results: Vec<ReplicateResult> = if config.timing {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| NetmixError::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| jobs.iter().map(|&(i, c, r)| run_replicate(config, i, c, r)).collect())
    } else {
        jobs.par_iter().map(|&(i, c, r)| run_replicate(config, i, c, r)).collect()
    };
    let mut cells = Vec::with_capacity(config.grid.len());
    for (i, &cell) in config.grid.iter().enumerate() {
        let reps: Vec<ReplicateResult> = results
            .iter()
            .zip(&jobs)
            .filter(|(_, job)| job.0 == i)
            .map(|(r, _)| r.clone())
            .collect();
        let mut purities: Vec<f64> = reps.iter().filter_map(|r| r.purity).collect();
        let mut seconds: Vec<f64> = reps.iter().filter_map(|r| r.seconds).collect();
        let max_m = config.select_up_to.unwrap_or(0);
        let count = |get: fn(&ReplicateResult) -> Option<usize>| {
            let mut counts = vec![0; max_m];
            for m in reps.iter().filter_map(get) {
                counts[m - 1] += 1;
            }
            counts
        };
        cells.push(CellResult {
            cell,
            median_purity: median(&mut purities),
            median_seconds: median(&mut seconds),
            aic_counts: count(|r| r.chosen_aic),
            bic_counts: count(|r| r.chosen_bic),
            replicates: reps,
        });
    }
    Ok(ScenarioResult {
        config_hash: config_hash(config),
        config: config.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log time` on `log x`.
pub fn timing_profile(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(NetmixError::InvalidArgument(format!(
            "timing profile needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, t)| !(x > 0.0 && t > 0.0)) {
        return Err(NetmixError::InvalidArgument("timing points must be positive".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, t)| (x.ln(), t.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(NetmixError::InvalidArgument("timing points share one x value".into()));
    }
    let slope = sxy / sxx;
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// `(swept value, median seconds)` for a timing scenario, sweeping `K` or
/// `v` depending on which varies across the grid.
pub fn timing_points(result: &ScenarioResult) -> Vec<(f64, f64)> {
    let sweeps_k = result.cells.windows(2).any(|w| w[0].cell.k != w[1].cell.k);
    result
        .cells
        .iter()
        .filter_map(|c| {
            let x = if sweeps_k { c.cell.k } else { c.cell.v };
            c.median_seconds.map(|t| (x as f64, t))
        })
        .collect()
}
