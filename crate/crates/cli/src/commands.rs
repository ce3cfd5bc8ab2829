use std::fs;
use std::path::Path;
use std::time::Instant;

use netmix::application::{run_application, ApplicationConfig};
use netmix::em::{EmConfig, MixtureFit};
use netmix::init::{all_distances, partitions_from_distances, Metric};
use netmix::io::{load_population, parse_stacked_matrices, save_population, Format, SCHEMA_VERSION};
use netmix::sim::{config_hash, full_scale, run_scenario, scenario_config, timing_points, timing_profile};
use netmix::specs::{CompiledModel, CountingRule, UnassignedMode};
use netmix::{select_m, CovariateSet, GraphPopulation, NetworkModelSpec};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::manifest::{digest_inputs, verify, OutputDir, RunManifest};
use crate::{Command, EmArgs, ExecutiveBlock, Input, InputFormat};

pub fn run(command: Command, arguments: &[String]) -> Result<(), CliError> {
    let clock = Instant::now();
    let name = command_name(&command);
    let (out, config_hash, seed, inputs) = match command {
        Command::Fit { input, model, m, em, output } => {
            let run = fit(&input, &model, m, &em, &output)?;
            (run.0, run.1, Some(em.seed), digest_inputs(&input.input)?)
        }
        Command::Select { input, model, m_range, em, output } => {
            let run = select(&input, &model, &m_range, &em, &output)?;
            (run.0, run.1, Some(em.seed), digest_inputs(&input.input)?)
        }
        Command::Distances { input, m, output } => {
            let run = distances(&input, m, &output)?;
            (run.0, run.1, None, digest_inputs(&input.input)?)
        }
        Command::Sim { scenario, full, replicates, seed, starts, output } => {
            let run = sim(&scenario, full, replicates, seed, starts, &output)?;
            (run.0, run.1, Some(run.2), Vec::new())
        }
        Command::Application { input, m_range, unassigned, em, output } => {
            let run = application(&input, &m_range, unassigned, &em, &output)?;
            (run.0, run.1, Some(em.seed), digest_inputs(&input)?)
        }
        Command::Import { matrices, attributes, undirected, output } => {
            return import(&matrices, attributes.as_deref(), !undirected, &output);
        }
        Command::Verify { manifest } => {
            let bad = verify(&manifest)?;
            if bad.is_empty() {
                println!("ok: {}", manifest.display());
                return Ok(());
            }
            return Err(CliError::data(bad.join("\n")));
        }
    };
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: name.to_string(),
        arguments: arguments.to_vec(),
        config_hash,
        seed,
        inputs,
        outputs: Vec::new(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    let path = out.finish(manifest)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Fit { .. } => "fit",
        Command::Select { .. } => "select",
        Command::Distances { .. } => "distances",
        Command::Sim { .. } => "sim",
        Command::Application { .. } => "application",
        Command::Import { .. } => "import",
        Command::Verify { .. } => "verify",
    }
}

fn load(input: &Input) -> Result<(GraphPopulation, CovariateSet), CliError> {
    let format = match input.format {
        InputFormat::Auto => Format::detect(&input.input),
        InputFormat::DenseJson => Format::DenseJson,
        InputFormat::EdgeList => Format::EdgeListCsv,
    };
    Ok(load_population(&input.input, format)?)
}

fn parse_model(text: &str) -> Result<NetworkModelSpec, CliError> {
    match text.strip_prefix('@') {
        Some(path) => {
            let body = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {path}: {e}")))?;
            Ok(NetworkModelSpec::from_json(&body)?)
        }
        None => Ok(NetworkModelSpec::parse(text)?),
    }
}

fn em_config(args: &EmArgs) -> Result<EmConfig, CliError> {
    let config = EmConfig {
        max_iter: args.max_iter,
        rel_tol: args.tol,
        variant: args.variant,
        n_starts: args.starts,
        seed: args.seed,
        ..EmConfig::default()
    };
    config.validate()?;
    Ok(config)
}

/// `a..b`, `a..=b` or `a-b`, inclusive.
fn parse_range(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::usage(format!("invalid range `{text}`; expected e.g. 1..4"));
    let (a, b) = text
        .split_once("..=")
        .or_else(|| text.split_once(".."))
        .or_else(|| text.split_once('-'))
        .ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a == 0 || b < a {
        return Err(bad());
    }
    Ok((a, b))
}

fn check_m(m: usize) -> Result<(), CliError> {
    if m == 0 {
        return Err(CliError::usage("--M must be at least 1"));
    }
    Ok(())
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::numerical(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::numerical(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::numerical(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::numerical(e.to_string()))
}

fn memberships_csv(pop: &GraphPopulation, fit: &MixtureFit) -> Result<String, CliError> {
    let m = fit.n_components;
    let mut header = vec!["graph".to_string(), "cluster".to_string()];
    header.extend((1..=m).map(|c| format!("p_{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(
        &header,
        pop.graph_ids().iter().enumerate().map(|(k, id)| {
            let mut row = vec![id.clone(), (fit.assignment[k] + 1).to_string()];
            row.extend((0..m).map(|c| num(fit.responsibility(k, c))));
            row
        }),
    )
}

fn parameters_csv(model: &CompiledModel, fit: &MixtureFit) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for (m, comp) in fit.components.iter().enumerate() {
        let f = comp.fixed();
        for p in model.expand(&f.coefficients, &f.covariance) {
            rows.push(vec![(m + 1).to_string(), p.name, num(p.estimate), num(p.std_error)]);
        }
        if let Some(g) = comp.glmm() {
            for (name, sd) in g.factor_names.iter().zip(&g.sd) {
                rows.push(vec![(m + 1).to_string(), format!("sd[{name}]"), num(*sd), String::new()]);
            }
        }
    }
    csv_string(&["component", "parameter", "estimate", "std_error"], rows)
}

type Run = (OutputDir, String);

fn fit(input: &Input, model_text: &str, m: usize, args: &EmArgs, output: &Path) -> Result<Run, CliError> {
    check_m(m)?;
    let spec = parse_model(model_text)?;
    let config = em_config(args)?;
    let (pop, cov) = load(input)?;
    let model = spec.compile(&pop, &cov)?;
    let fit = netmix::run_em(&pop, &model, m, &config)?;
    let hash = config_hash(&json!({ "model": spec, "M": m, "em": config }));
    let mut out = OutputDir::create(output)?;
    out.write_json(
        "fit.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "model": spec,
            "warnings": model.warnings,
            "fit": fit,
        }),
    )?;
    out.write("memberships.csv", &memberships_csv(&pop, &fit)?)?;
    out.write("parameters.csv", &parameters_csv(&model, &fit)?)?;
    Ok((out, hash))
}

fn select(input: &Input, model_text: &str, range: &str, args: &EmArgs, output: &Path) -> Result<Run, CliError> {
    let (lo, hi) = parse_range(range)?;
    let spec = parse_model(model_text)?;
    let config = em_config(args)?;
    let (pop, cov) = load(input)?;
    let model = spec.compile(&pop, &cov)?;
    let rule = CountingRule::default();
    let (table, _) = select_m(&pop, &model, lo..=hi, &config, rule)?;
    let hash = config_hash(&json!({ "model": spec, "range": [lo, hi], "em": config, "counting": rule }));
    let mut out = OutputDir::create(output)?;
    out.write("selection.csv", &table.to_csv())?;
    out.write_json(
        "selection.json",
        &json!({ "schema_version": SCHEMA_VERSION, "model": spec, "counting": rule, "selection": table }),
    )?;
    Ok((out, hash))
}

fn distances(input: &Input, m: Option<usize>, output: &Path) -> Result<Run, CliError> {
    if let Some(m) = m {
        check_m(m)?;
    }
    let (pop, _) = load(input)?;
    let matrices = all_distances(&pop);
    let mut out = OutputDir::create(output)?;
    let ids = pop.graph_ids();
    for d in &matrices {
        let mut header = vec!["graph"];
        header.extend(ids.iter().map(String::as_str));
        let rows = d.rows().zip(ids).map(|(row, id)| {
            let mut cells = vec![id.clone()];
            cells.extend(row.iter().map(|&x| num(x)));
            cells
        });
        out.write(&format!("distance_{}.csv", d.metric().name()), &csv_string(&header, rows)?)?;
    }
    if let Some(m) = m {
        let partitions = partitions_from_distances(&matrices, m)?;
        let mut header = vec!["graph"];
        header.extend(Metric::ALL.iter().map(|metric| metric.name()));
        let rows = ids.iter().enumerate().map(|(k, id)| {
            let mut cells = vec![id.clone()];
            cells.extend(partitions.iter().map(|(_, labels)| (labels[k] + 1).to_string()));
            cells
        });
        out.write("pam.csv", &csv_string(&header, rows)?)?;
    }
    Ok((out, config_hash(&json!({ "M": m }))))
}

fn sim(
    id: &str,
    full: bool,
    replicates: Option<usize>,
    seed: Option<u64>,
    starts: Option<usize>,
    output: &Path,
) -> Result<(OutputDir, String, u64), CliError> {
    let mut config = scenario_config(id)?;
    if full {
        config = full_scale(config);
    }
    if let Some(r) = replicates {
        config.replicates = r;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(s) = starts {
        config.n_starts = s;
    }
    let result = run_scenario(&config)?;
    let mut out = OutputDir::create(output)?;
    out.write("replicates.csv", &result.to_csv())?;
    out.write("summary.csv", &result.summary_csv())?;
    out.write_json("scenario.json", &json!({ "schema_version": SCHEMA_VERSION, "result": result }))?;
    if config.timing {
        let points = timing_points(&result);
        let scaling = timing_profile(&points).ok();
        out.write_json(
            "timing.json",
            &json!({
                "schema_version": SCHEMA_VERSION,
                "points": points,
                "log_log_slope": scaling.map(|s| s.slope),
                "intercept": scaling.map(|s| s.intercept),
            }),
        )?;
    }
    Ok((out, result.config_hash.clone(), config.seed))
}

#[derive(Serialize)]
struct ApplicationSummary<'a> {
    schema_version: u32,
    chosen_components: usize,
    warnings: &'a [String],
    screen_converged: bool,
    fit_converged: bool,
    fit_iterations: usize,
    objective: f64,
    mixing: &'a [f64],
}

fn application(
    input: &Path,
    range: &str,
    unassigned: ExecutiveBlock,
    args: &EmArgs,
    output: &Path,
) -> Result<Run, CliError> {
    let (lo, hi) = parse_range(range)?;
    let mode = match unassigned {
        ExecutiveBlock::Drop => UnassignedMode::Drop,
        ExecutiveBlock::Singleton => UnassignedMode::Singleton,
    };
    let config = ApplicationConfig {
        min_components: lo,
        max_components: hi,
        em: em_config(args)?,
        ..ApplicationConfig::with_unassigned_mode(mode)
    };
    let (pop, cov) = load(&Input {
        input: input.to_path_buf(),
        format: InputFormat::Auto,
    })?;
    let report = run_application(&pop, &cov, &config)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = OutputDir::create(output)?;
    out.write("selection.csv", &report.selection.to_csv())?;
    out.write("memberships.csv", &report.memberships_csv())?;
    out.write("parameters.csv", &report.parameter_table_csv())?;
    out.write("block_signs.csv", &report.sign_grid_csv())?;
    out.write("probabilities.csv", &report.probabilities_csv())?;
    out.write("random_effects.csv", &report.blups_csv())?;
    out.write_json(
        "application.json",
        &ApplicationSummary {
            schema_version: SCHEMA_VERSION,
            chosen_components: report.n_components,
            warnings: &report.warnings,
            screen_converged: report.screen.converged,
            fit_converged: report.fit.converged,
            fit_iterations: report.fit.n_iter,
            objective: report.fit.objective,
            mixing: &report.fit.mixing,
        },
    )?;
    Ok((out, config_hash(&config)))
}

fn import(matrices: &Path, attributes: Option<&Path>, directed: bool, output: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(matrices).map_err(|e| CliError::data(format!("cannot read {}: {e}", matrices.display())))?;
    let adjacency = parse_stacked_matrices(&text)?;
    let v = (adjacency[0].len() as f64).sqrt() as usize;
    let mut labels: Vec<String> = (1..=v).map(|i| i.to_string()).collect();
    let mut cov = CovariateSet::default();
    if let Some(path) = attributes {
        let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns: Vec<Vec<String>> = vec![Vec::new(); header.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), line + 2)))?;
            for (c, cell) in record.iter().enumerate() {
                columns[c].push(cell.trim().to_string());
            }
        }
        if columns.first().is_some_and(|c| c.len() != v) {
            return Err(CliError::data(format!(
                "{}: {} vertex rows for {v} vertices",
                path.display(),
                columns[0].len()
            )));
        }
        for (name, values) in header.iter().zip(columns) {
            if name == "label" {
                labels = values;
                continue;
            }
            let parsed = values
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    x.parse::<f64>().map_err(|_| {
                        CliError::data(format!("{}:{}: `{x}` in column `{name}` is not a number", path.display(), i + 2))
                    })
                })
                .collect::<Result<Vec<f64>, CliError>>()?;
            cov.push_monadic(name.clone(), parsed);
        }
    }
    let ids = (1..=adjacency.len()).map(|k| k.to_string()).collect();
    let pop = GraphPopulation::new(v, directed, adjacency, ids, labels)?;
    save_population(output, Format::DenseJson, &pop, &cov)?;
    println!("wrote {} ({} graphs on {v} vertices)", output.display(), pop.n_graphs());
    Ok(())
}
