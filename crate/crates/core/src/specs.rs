//! Network model specifications and their compilation into designs.
//!
//! A [`NetworkModelSpec`] names one component family. Compiling it against
//! a population yields a [`CompiledModel`]: a design over distinct rows, a
//! map from every (graph, dyad) cell to its design row, and the random
//! factors of the mixed family.
//!
//! Specs have a small JSON form:
//!
//! ```
//! use netmix::specs::NetworkModelSpec;
//!
//! let spec: NetworkModelSpec = serde_json::from_str(
//!     r#"{"family":"covariate",
//!         "terms":["sender:age","receiver:age","sender:perceiver"],
//!         "random":{"sender":true,"receiver":true},
//!         "blocks":"department"}"#,
//! ).unwrap();
//! assert!(spec.has_random_effects());
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NetmixError, Result};
use crate::glm::Design;
use crate::glmm::RandomFactor;
use crate::linalg::collinear_columns;
use crate::population::{CovariateSet, GraphPopulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkModelSpec {
    /// `logit π_ij = θ + α_i + α_j`, `Σ α_i = 0` (undirected only).
    P1,
    /// One probability per (ordered, if directed) pair of known blocks.
    #[serde(alias = "sbm")]
    SbmApriori { blocks: BlockSource },
    /// One probability per dyad.
    Unconstrained,
    /// Logistic regression on node covariates, perceiver indicators and
    /// block effects, optionally with sender and receiver random
    /// intercepts.
    Covariate {
        #[serde(default)]
        terms: Vec<String>,
        #[serde(default)]
        random: RandomSpec,
        #[serde(default)]
        blocks: Option<BlockSource>,
        #[serde(default)]
        block_options: BlockOptions,
    },
}

/// Block memberships: a monadic covariate name or explicit labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSource {
    Covariate(String),
    Labels(Vec<i64>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSpec {
    pub sender: bool,
    pub receiver: bool,
}

/// How vertices outside every block are handled in block terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnassignedMode {
    /// Their dyads get zero block contributions.
    #[default]
    Drop,
    /// They form one extra block of their own.
    Singleton,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockOptions {
    /// Block label meaning "no block".
    pub unassigned: Option<i64>,
    pub mode: UnassignedMode,
}

impl NetworkModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NetmixError::InvalidArgument(format!("model spec: {e}")))
    }

    /// Accepts a bare family name (`p1`, `unconstrained`) or a JSON spec.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "p1" => Ok(Self::P1),
            "unconstrained" => Ok(Self::Unconstrained),
            t => Self::from_json(t),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::P1 => "p1",
            Self::SbmApriori { .. } => "sbm-apriori",
            Self::Unconstrained => "unconstrained",
            Self::Covariate { .. } => "covariate",
        }
    }

    pub fn has_random_effects(&self) -> bool {
        matches!(self, Self::Covariate { random, .. } if random.sender || random.receiver)
    }

    pub fn compile(&self, pop: &GraphPopulation, cov: &CovariateSet) -> Result<CompiledModel> {
        match self {
            Self::P1 => compile_p1(pop),
            Self::SbmApriori { blocks } => compile_sbm_apriori(pop, &resolve_blocks(blocks, pop, cov)?),
            Self::Unconstrained => compile_unconstrained(pop),
            Self::Covariate { .. } => compile_covariate_model(pop, cov, self),
        }
    }
}

/// Maps each (graph, dyad) cell to a design row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowMap {
    /// Dyad `d` of every graph uses row `d`.
    Shared,
    /// Graph-major table of length `K * D`.
    PerGraph(Vec<u32>),
}

/// A named linear combination of design coefficients. Free parameters are
/// unit combinations; constrained levels are negative sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParameter {
    pub name: String,
    pub weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    pub family: &'static str,
    pub design: Design,
    pub row_map: RowMap,
    pub n_graphs: usize,
    pub n_dyads: usize,
    pub random: Vec<RandomFactor>,
    /// Every reported parameter, including constrained levels.
    pub parameters: Vec<LinearParameter>,
    pub warnings: Vec<String>,
}

impl CompiledModel {
    #[inline]
    pub fn row(&self, k: usize, d: usize) -> usize {
        match &self.row_map {
            RowMap::Shared => d,
            RowMap::PerGraph(rows) => rows[k * self.n_dyads + d] as usize,
        }
    }

    /// Fixed-effect columns.
    pub fn n_fixed(&self) -> usize {
        self.design.n_cols()
    }

    /// Free parameters of one component: fixed effects plus one standard
    /// deviation per random factor.
    pub fn n_component_params(&self) -> usize {
        self.n_fixed() + self.random.len()
    }

    /// Evaluates every reported parameter with its standard error.
    pub fn expand(&self, coefficients: &[f64], covariance: &[f64]) -> Vec<ParameterEstimate> {
        let p = coefficients.len();
        self.parameters
            .iter()
            .map(|lp| {
                let estimate = lp.weights.iter().map(|&(j, w)| w * coefficients[j]).sum();
                let mut var = 0.0;
                for &(a, wa) in &lp.weights {
                    for &(b, wb) in &lp.weights {
                        var += wa * wb * covariance[a * p + b];
                    }
                }
                let std_error = if var > 0.0 { var.sqrt() } else { f64::NAN };
                ParameterEstimate {
                    name: lp.name.clone(),
                    estimate,
                    std_error,
                }
            })
            .collect()
    }
}

/// How free parameters are counted for information criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountingRule {
    /// Count each random-effect standard deviation.
    pub variance_components: bool,
    /// Count the `M - 1` free mixing proportions.
    pub mixing_proportions: bool,
}

impl Default for CountingRule {
    fn default() -> Self {
        Self {
            variance_components: true,
            mixing_proportions: true,
        }
    }
}

/// Number of free parameters of an `M`-component mixture.
pub fn count_parameters(model: &CompiledModel, n_components: usize, rule: CountingRule) -> usize {
    let per = model.n_fixed() + if rule.variance_components { model.random.len() } else { 0 };
    n_components * per + if rule.mixing_proportions { n_components.saturating_sub(1) } else { 0 }
}

fn unit(name: String, j: usize) -> LinearParameter {
    LinearParameter {
        name,
        weights: vec![(j, 1.0)],
    }
}

/// Deviation code of level `l` among `n` levels with columns starting at
/// `offset`: level `l < n - 1` is its own column, the last level is minus
/// all of them.
fn deviation(l: usize, n: usize, offset: usize) -> Vec<(usize, f64)> {
    if l + 1 < n {
        vec![(offset + l, 1.0)]
    } else {
        (0..n - 1).map(|c| (offset + c, -1.0)).collect()
    }
}

pub fn compile_p1(pop: &GraphPopulation) -> Result<CompiledModel> {
    if pop.directed() {
        return Err(NetmixError::InvalidArgument(
            "p1 is implemented for undirected populations; use the covariate family with sender and receiver random intercepts for directed data".into(),
        ));
    }
    let v = pop.n_vertices();
    if v < 3 {
        return Err(NetmixError::InvalidArgument("p1 needs at least three vertices".into()));
    }
    let labels = pop.vertex_labels();
    let mut names = vec!["theta".to_string()];
    names.extend(labels[..v - 1].iter().map(|l| format!("alpha[{l}]")));
    let positions = pop.dyad_positions();
    let mut values = vec![0.0; positions.len() * v];
    for (d, &(i, j)) in positions.iter().enumerate() {
        let row = &mut values[d * v..(d + 1) * v];
        row[0] = 1.0;
        for node in [i, j] {
            for (c, w) in deviation(node, v, 1) {
                row[c] += w;
            }
        }
    }
    let mut parameters = vec![unit("theta".into(), 0)];
    parameters.extend((0..v).map(|l| LinearParameter {
        name: format!("alpha[{}]", labels[l]),
        weights: deviation(l, v, 1),
    }));
    Ok(CompiledModel {
        family: "p1",
        design: Design::dense(names, positions.len(), values)?,
        row_map: RowMap::Shared,
        n_graphs: pop.n_graphs(),
        n_dyads: positions.len(),
        random: Vec::new(),
        parameters,
        warnings: Vec::new(),
    })
}

/// Block index per vertex from a spec's block source; labels are ranked in
/// ascending order.
fn resolve_blocks(source: &BlockSource, pop: &GraphPopulation, cov: &CovariateSet) -> Result<Vec<i64>> {
    let labels: Vec<i64> = match source {
        BlockSource::Labels(l) => l.clone(),
        BlockSource::Covariate(name) => cov
            .monadic(name)
            .ok_or_else(|| NetmixError::UnknownCovariate(name.clone()))?
            .iter()
            .map(|&x| {
                if x.fract() == 0.0 {
                    Ok(x as i64)
                } else {
                    Err(NetmixError::InvalidArgument(format!("block covariate `{name}` has non-integer value {x}")))
                }
            })
            .collect::<Result<_>>()?,
    };
    if labels.len() != pop.n_vertices() {
        return Err(NetmixError::Dimension(format!(
            "{} block labels for {} vertices",
            labels.len(),
            pop.n_vertices()
        )));
    }
    Ok(labels)
}

fn rank_blocks(labels: &[i64], exclude: Option<i64>) -> (Vec<Option<usize>>, Vec<i64>) {
    let distinct: Vec<i64> = {
        let mut d: Vec<i64> = labels.iter().copied().filter(|&l| Some(l) != exclude).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    let index = labels
        .iter()
        .map(|l| distinct.binary_search(l).ok())
        .collect();
    (index, distinct)
}

pub fn compile_sbm_apriori(pop: &GraphPopulation, blocks: &[i64]) -> Result<CompiledModel> {
    let v = pop.n_vertices();
    if blocks.len() != v {
        return Err(NetmixError::Dimension(format!("{} block labels for {v} vertices", blocks.len())));
    }
    let (index, distinct) = rank_blocks(blocks, None);
    let index: Vec<usize> = index.into_iter().map(|i| i.expect("every label ranked")).collect();
    let directed = pop.directed();
    let positions = pop.dyad_positions();
    let key = |i: usize, j: usize| {
        let (a, b) = (index[i], index[j]);
        if directed || a <= b { (a, b) } else { (b, a) }
    };
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(i, j) in &positions {
        *counts.entry(key(i, j)).or_default() += 1;
    }
    let p = distinct.len();
    let mut warnings = Vec::new();
    let mut column: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut names = Vec::new();
    for a in 0..p {
        for b in 0..p {
            if !directed && b < a {
                continue;
            }
            let name = format!("theta[{},{}]", distinct[a], distinct[b]);
            if counts.contains_key(&(a, b)) {
                column.insert((a, b), names.len() as u32);
                names.push(name);
            } else {
                let msg = format!("block pair ({},{}) has no dyads; column `{name}` dropped", distinct[a], distinct[b]);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let cell_of_row = positions.iter().map(|&(i, j)| column[&key(i, j)]).collect();
    let parameters = names.iter().enumerate().map(|(j, n)| unit(n.clone(), j)).collect();
    Ok(CompiledModel {
        family: "sbm-apriori",
        design: Design::cells(names, cell_of_row)?,
        row_map: RowMap::Shared,
        n_graphs: pop.n_graphs(),
        n_dyads: positions.len(),
        random: Vec::new(),
        parameters,
        warnings,
    })
}

pub fn compile_unconstrained(pop: &GraphPopulation) -> Result<CompiledModel> {
    let labels = pop.vertex_labels();
    let positions = pop.dyad_positions();
    let names: Vec<String> = positions
        .iter()
        .map(|&(i, j)| format!("pi[{},{}]", labels[i], labels[j]))
        .collect();
    let parameters = names.iter().enumerate().map(|(j, n)| unit(n.clone(), j)).collect();
    Ok(CompiledModel {
        family: "unconstrained",
        design: Design::cells(names, (0..positions.len() as u32).collect())?,
        row_map: RowMap::Shared,
        n_graphs: pop.n_graphs(),
        n_dyads: positions.len(),
        random: Vec::new(),
        parameters,
        warnings: Vec::new(),
    })
}

enum Term {
    Monadic { sender: bool, values: Vec<f64> },
    Dyadic(Vec<f64>),
    Perceiver { sender: bool },
}

/// Vertex perceived by each graph: a graph-level `perceiver` column of
/// 1-based vertex positions, or graph `k` ↔ vertex `k` when `K = v`.
fn perceivers(pop: &GraphPopulation, cov: &CovariateSet) -> Result<Vec<usize>> {
    let v = pop.n_vertices();
    match cov.graph_level("perceiver") {
        Some(col) => col
            .iter()
            .map(|&x| {
                if x.fract() == 0.0 && x >= 1.0 && x as usize <= v {
                    Ok(x as usize - 1)
                } else {
                    Err(NetmixError::InvalidArgument(format!(
                        "perceiver value {x} is not a vertex position in 1..={v}"
                    )))
                }
            })
            .collect(),
        None if pop.n_graphs() == v => Ok((0..v).collect()),
        None => Err(NetmixError::UnknownCovariate("perceiver".into())),
    }
}

pub fn compile_covariate_model(
    pop: &GraphPopulation,
    cov: &CovariateSet,
    spec: &NetworkModelSpec,
) -> Result<CompiledModel> {
    let NetworkModelSpec::Covariate {
        terms,
        random,
        blocks,
        block_options,
    } = spec
    else {
        return Err(NetmixError::InvalidArgument(format!(
            "expected a covariate spec, got `{}`",
            spec.family_name()
        )));
    };
    cov.check(pop)?;
    let v = pop.n_vertices();
    let k_graphs = pop.n_graphs();
    let positions = pop.dyad_positions();
    let n_dyads = positions.len();

    let mut names = vec!["beta0".to_string()];
    let mut parsed = Vec::new();
    for term in terms {
        let (role, name) = term
            .split_once(':')
            .ok_or_else(|| NetmixError::InvalidArgument(format!("term `{term}` is not `role:name`")))?;
        let t = match (role, name) {
            ("sender" | "receiver", "perceiver") => Term::Perceiver { sender: role == "sender" },
            ("sender" | "receiver", _) => Term::Monadic {
                sender: role == "sender",
                values: cov
                    .monadic(name)
                    .ok_or_else(|| NetmixError::UnknownCovariate(name.to_string()))?
                    .to_vec(),
            },
            ("dyadic", _) => Term::Dyadic(
                cov.dyadic(name)
                    .ok_or_else(|| NetmixError::UnknownCovariate(name.to_string()))?
                    .to_vec(),
            ),
            _ => {
                return Err(NetmixError::InvalidArgument(format!(
                    "term `{term}`: role must be sender, receiver or dyadic"
                )))
            }
        };
        if names.contains(term) {
            return Err(NetmixError::InvalidArgument(format!("duplicate term `{term}`")));
        }
        names.push(term.clone());
        parsed.push(t);
    }
    let uses_perceiver = parsed.iter().any(|t| matches!(t, Term::Perceiver { .. }));
    let perceiver = if uses_perceiver { perceivers(pop, cov)? } else { Vec::new() };

    let mut warnings = Vec::new();
    let (block_of, block_labels) = match blocks {
        None => (vec![None; v], Vec::new()),
        Some(src) => {
            let labels = resolve_blocks(src, pop, cov)?;
            match (block_options.unassigned, block_options.mode) {
                (Some(u), UnassignedMode::Drop) => {
                    let (idx, distinct) = rank_blocks(&labels, Some(u));
                    let outside: Vec<&str> = (0..v)
                        .filter(|&i| idx[i].is_none())
                        .map(|i| pop.vertex_labels()[i].as_str())
                        .collect();
                    if !outside.is_empty() {
                        warnings.push(format!(
                            "vertices {} belong to no block; their dyads carry no block effects",
                            outside.join(", ")
                        ));
                    }
                    (idx, distinct)
                }
                (Some(u), UnassignedMode::Singleton) => {
                    if labels.contains(&u) {
                        warnings.push(format!("unassigned label {u} treated as a block of its own"));
                    }
                    rank_blocks(&labels, None)
                }
                (None, _) => rank_blocks(&labels, None),
            }
        }
    };
    let n_blocks = block_labels.len();
    if blocks.is_some() && n_blocks < 2 {
        return Err(NetmixError::InvalidArgument("block terms need at least two blocks".into()));
    }
    let base = names.len();
    let free = n_blocks.saturating_sub(1);
    let (gamma0, delta0, xi0) = (base, base + free, base + 2 * free);
    let mut parameters: Vec<LinearParameter> = names.iter().enumerate().map(|(j, n)| unit(n.clone(), j)).collect();
    if n_blocks > 0 {
        for (prefix, offset) in [("gamma", gamma0), ("delta", delta0)] {
            for l in 0..free {
                names.push(format!("{prefix}[{}]", block_labels[l]));
            }
            for l in 0..n_blocks {
                parameters.push(LinearParameter {
                    name: format!("{prefix}[{}]", block_labels[l]),
                    weights: deviation(l, n_blocks, offset),
                });
            }
        }
        for r in 0..free {
            for s in 0..free {
                names.push(format!("xi[{},{}]", block_labels[r], block_labels[s]));
            }
        }
        for r in 0..n_blocks {
            for s in 0..n_blocks {
                let weights = product_code(r, s, n_blocks, xi0);
                parameters.push(LinearParameter {
                    name: format!("xi[{},{}]", block_labels[r], block_labels[s]),
                    weights,
                });
            }
        }
    }
    let p = names.len();

    // Rows: one per dyad, and with perceiver terms one per (dyad, perceiver
    // role) with variant 0 = neither endpoint, 1 = sender, 2 = receiver.
    let variants = if uses_perceiver { 3 } else { 1 };
    let n_rows = n_dyads * variants;
    let mut values = vec![0.0; n_rows * p];
    for (d, &(i, j)) in positions.iter().enumerate() {
        for variant in 0..variants {
            let row = &mut values[(d * variants + variant) * p..(d * variants + variant + 1) * p];
            row[0] = 1.0;
            for (t, term) in parsed.iter().enumerate() {
                row[1 + t] = match term {
                    Term::Monadic { sender, values } => values[if *sender { i } else { j }],
                    Term::Dyadic(values) => values[i * v + j],
                    Term::Perceiver { sender } => f64::from(u8::from((variant == 1 && *sender) || (variant == 2 && !*sender))),
                };
            }
            if n_blocks > 0 {
                if let Some(bi) = block_of[i] {
                    for (c, w) in deviation(bi, n_blocks, gamma0) {
                        row[c] += w;
                    }
                }
                if let Some(bj) = block_of[j] {
                    for (c, w) in deviation(bj, n_blocks, delta0) {
                        row[c] += w;
                    }
                }
                if let (Some(bi), Some(bj)) = (block_of[i], block_of[j]) {
                    for (c, w) in product_code(bi, bj, n_blocks, xi0) {
                        row[c] += w;
                    }
                }
            }
        }
    }

    let row_map = if uses_perceiver {
        let mut rows = Vec::with_capacity(k_graphs * n_dyads);
        for &who in &perceiver {
            for (d, &(i, j)) in positions.iter().enumerate() {
                let variant = if i == who { 1 } else if j == who { 2 } else { 0 };
                rows.push((d * variants + variant) as u32);
            }
        }
        RowMap::PerGraph(rows)
    } else {
        RowMap::Shared
    };

    // Drop identically-zero columns over the rows that occur.
    let mut used = vec![false; n_rows];
    match &row_map {
        RowMap::Shared => used.iter_mut().for_each(|u| *u = true),
        RowMap::PerGraph(rows) => rows.iter().for_each(|&r| used[r as usize] = true),
    }
    let zero_cols: Vec<usize> = (1..p)
        .filter(|&c| (0..n_rows).all(|r| !used[r] || values[r * p + c] == 0.0))
        .collect();
    let (names, values, parameters) = if zero_cols.is_empty() {
        (names, values, parameters)
    } else {
        for &c in &zero_cols {
            let msg = format!("column `{}` is identically zero and was dropped", names[c]);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        drop_columns(names, values, parameters, &zero_cols)
    };
    let p = names.len();

    let mut gram = nalgebra::DMatrix::<f64>::zeros(p, p);
    for (_, x) in values.chunks(p).enumerate().filter(|(r, _)| used[*r]) {
        for a in 0..p {
            if x[a] != 0.0 {
                for c in 0..p {
                    gram[(a, c)] += x[a] * x[c];
                }
            }
        }
    }
    let collinear = collinear_columns(&gram);
    let singleton = block_options.mode == UnassignedMode::Singleton && block_options.unassigned.is_some();
    if singleton && !collinear.is_empty() && collinear.iter().all(|&c| names[c].starts_with("xi[")) {
        // a one-vertex block has no within-block dyads, so some interaction
        // contrasts are aliased with the main effects
        for &c in &collinear {
            let msg = format!("interaction column `{}` is aliased by an empty block pair and was dropped", names[c]);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let (names, values, parameters) = drop_columns(names, values, parameters, &collinear);
        return finish_covariate(pop, random, positions, variants, names, values, row_map, parameters, warnings);
    }
    if !collinear.is_empty() {
        return Err(NetmixError::RankDeficient(collinear.iter().map(|&c| names[c].clone()).collect()));
    }

    finish_covariate(pop, random, positions, variants, names, values, row_map, parameters, warnings)
}

#[allow(clippy::too_many_arguments)]
fn finish_covariate(
    pop: &GraphPopulation,
    random: &RandomSpec,
    positions: Vec<(usize, usize)>,
    variants: usize,
    names: Vec<String>,
    values: Vec<f64>,
    row_map: RowMap,
    parameters: Vec<LinearParameter>,
    warnings: Vec<String>,
) -> Result<CompiledModel> {
    let v = pop.n_vertices();
    let n_dyads = positions.len();
    let n_rows = n_dyads * variants;
    let endpoint = |sender: bool| -> Vec<u32> {
        (0..n_rows)
            .map(|r| {
                let (i, j) = positions[r / variants];
                (if sender { i } else { j }) as u32
            })
            .collect()
    };
    let mut factors = Vec::new();
    if random.sender {
        factors.push(RandomFactor { name: "sender".into(), n_levels: v, level_of_row: endpoint(true) });
    }
    if random.receiver {
        factors.push(RandomFactor { name: "receiver".into(), n_levels: v, level_of_row: endpoint(false) });
    }
    Ok(CompiledModel {
        family: "covariate",
        design: Design::dense(names, n_rows, values)?,
        row_map,
        n_graphs: pop.n_graphs(),
        n_dyads,
        random: factors,
        parameters,
        warnings,
    })
}

/// Interaction code: product of the two deviation codes.
fn product_code(r: usize, s: usize, n: usize, offset: usize) -> Vec<(usize, f64)> {
    let free = n - 1;
    let mut out = Vec::new();
    for (a, wa) in deviation(r, n, 0) {
        for (b, wb) in deviation(s, n, 0) {
            out.push((offset + a * free + b, wa * wb));
        }
    }
    out
}

fn drop_columns(
    names: Vec<String>,
    values: Vec<f64>,
    parameters: Vec<LinearParameter>,
    drop: &[usize],
) -> (Vec<String>, Vec<f64>, Vec<LinearParameter>) {
    let p = names.len();
    let keep: Vec<usize> = (0..p).filter(|c| !drop.contains(c)).collect();
    let mut new_index = vec![None; p];
    for (n, &c) in keep.iter().enumerate() {
        new_index[c] = Some(n);
    }
    let new_names = keep.iter().map(|&c| names[c].clone()).collect();
    let new_values = values
        .chunks(p)
        .flat_map(|row| keep.iter().map(move |&c| row[c]))
        .collect();
    let new_params = parameters
        .into_iter()
        .filter_map(|lp| {
            let weights: Vec<(usize, f64)> = lp
                .weights
                .iter()
                .filter_map(|&(c, w)| new_index[c].map(|n| (n, w)))
                .collect();
            (!weights.is_empty()).then_some(LinearParameter { name: lp.name, weights })
        })
        .collect();
    (new_names, new_values, new_params)
}
