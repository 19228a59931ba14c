//! Text tables, SVG forest plots and the four command entry points used by
//! the `dosemeta` binary.
//!
//! Every `cmd_*` function computes its full output before returning it, so
//! a failing command never leaves partial tables behind. Numbers are
//! formatted with [`format_sig`] (four significant digits, `.` separator).

mod forest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dose_response::{fit_logistic, mtd_from_fit, DoseTransform, FitConfig, FitMethod};
use crate::error::{Error, Result};
use crate::meta_analysis::{
    analyze, bridge, sensitivity_filter, BridgeGroup, MetaInput, MetaResult, PriorSpec, Summary,
};
use crate::study_data::{parse_csv, DoseToxicityDataset};
use crate::trial_sim::{
    run_grid, summarize_cells, write_results_csv, CellSpec, ScenarioName, SimulationConfig,
    Simulator,
};

pub use forest::{render_forest_svg, ForestPlotSpec, ForestRow};

/// Formats `x` with `digits` significant digits in fixed notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1) as i32;
    if x == 0.0 {
        return format!("{:.*}", (digits - 1) as usize, 0.0);
    }
    let decimals = |v: f64| (digits - 1 - v.abs().log10().floor() as i32).max(0) as usize;
    let d = decimals(x);
    let s = format!("{x:.d$}");
    // rounding can carry into the next power of ten (9.9996 -> 10.000)
    let rounded: f64 = s.parse().unwrap_or(x);
    match decimals(rounded) {
        d2 if d2 < d => format!("{x:.d2$}"),
        _ => s,
    }
}

fn sig(x: f64) -> String {
    format_sig(x, 4)
}

fn percent(w: f64) -> String {
    format!("{:.1}%", 100.0 * w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    /// Space-padded columns, first column left-aligned.
    #[default]
    Aligned,
    /// Tab-separated values, no padding.
    Tsv,
}

/// A rectangular table of pre-formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; short rows are padded with empty cells.
    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let mut row: Vec<String> = row.into_iter().map(Into::into).collect();
        row.resize(self.header.len().max(row.len()), String::new());
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self, format: TableFormat) -> String {
        let mut out = String::new();
        match format {
            TableFormat::Tsv => {
                for row in std::iter::once(&self.header).chain(&self.rows) {
                    out.push_str(&row.join("\t"));
                    out.push('\n');
                }
            }
            TableFormat::Aligned => {
                let n = self.header.len();
                let mut widths = vec![0; n];
                for row in std::iter::once(&self.header).chain(&self.rows) {
                    for (w, cell) in widths.iter_mut().zip(row) {
                        *w = (*w).max(cell.chars().count());
                    }
                }
                for row in std::iter::once(&self.header).chain(&self.rows) {
                    let cells: Vec<String> = row
                        .iter()
                        .zip(&widths)
                        .enumerate()
                        .map(|(i, (c, &w))| match i {
                            0 => format!("{c:<w$}"),
                            _ => format!("{c:>w$}"),
                        })
                        .collect();
                    out.push_str(cells.join("  ").trim_end());
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn read_datasets(path: &Path) -> Result<Vec<DoseToxicityDataset>> {
    let text = fs::read_to_string(path)?;
    let datasets = parse_csv(text.as_bytes())?;
    if datasets.is_empty() {
        return Err(Error::Validation(format!(
            "no studies found in `{}`",
            path.display()
        )));
    }
    Ok(datasets)
}

fn study_label(ds: &DoseToxicityDataset) -> String {
    match ds.year {
        Some(y) => format!("{} ({y})", ds.label),
        None => ds.label.clone(),
    }
}

/// Stage-one estimates of every dataset with a single fitting method.
pub fn estimate_all(datasets: &[DoseToxicityDataset], cfg: &FitConfig) -> Result<MetaInput> {
    let estimates = datasets
        .iter()
        .map(|ds| fit_logistic(ds, cfg).and_then(|fit| mtd_from_fit(&fit, cfg)))
        .collect::<Result<Vec<_>>>()?;
    MetaInput::new(estimates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub methods: Vec<FitMethod>,
    pub transform: DoseTransform,
    pub target: f64,
    pub format: TableFormat,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            methods: vec![FitMethod::Flac],
            transform: DoseTransform::Log,
            target: 0.33,
            format: TableFormat::Aligned,
        }
    }
}

/// Per-study table: design totals, then estimate, standard error and a fit
/// flag (`ok`, `separation`, `no-convergence`) for each requested method.
pub fn fit_table(datasets: &[DoseToxicityDataset], opts: &FitOptions) -> Result<Table> {
    if opts.methods.is_empty() {
        return Err(Error::Config("no fitting method requested".into()));
    }
    let mut header: Vec<String> = ["study_id", "publication", "year", "doses", "patients", "events"]
        .map(String::from)
        .to_vec();
    for m in &opts.methods {
        header.extend([format!("{}_mtd", m.name()), format!("{}_se", m.name()), format!("{}_flag", m.name())]);
    }
    let mut table = Table::new(header);
    for ds in datasets {
        let s = ds.summarize();
        let mut row = vec![
            ds.study_id.clone(),
            ds.label.clone(),
            ds.year.map(|y| y.to_string()).unwrap_or_default(),
            s.n_doses.to_string(),
            s.n_patients.to_string(),
            s.n_events.to_string(),
        ];
        for &method in &opts.methods {
            let cfg = FitConfig::default()
                .with_method(method)
                .with_transform(opts.transform)
                .with_target(opts.target);
            let fit = fit_logistic(ds, &cfg)?;
            let mtd = mtd_from_fit(&fit, &cfg)?;
            let flag = if fit.separation_detected {
                "separation"
            } else if !fit.converged {
                "no-convergence"
            } else {
                "ok"
            };
            row.extend([sig(mtd.estimate), sig(mtd.std_err), flag.to_string()]);
        }
        table.push(row);
    }
    Ok(table)
}

pub fn cmd_fit(path: &Path, opts: &FitOptions) -> Result<String> {
    let datasets = read_datasets(path)?;
    Ok(fit_table(&datasets, opts)?.render(opts.format))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaOptions {
    pub method: FitMethod,
    pub target: f64,
    pub prior: PriorSpec,
    pub drop_se_above: Option<f64>,
    pub svg: Option<PathBuf>,
    pub format: TableFormat,
}

impl Default for MetaOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::Flac,
            target: 0.33,
            prior: PriorSpec::uniform(),
            drop_se_above: None,
            svg: None,
            format: TableFormat::Aligned,
        }
    }
}

fn summary_row(name: &str, s: &Summary, exp: bool) -> Vec<String> {
    let mut row = vec![
        name.to_string(),
        sig(s.median),
        sig(s.mean),
        sig(s.sd),
        sig(s.central.lower),
        sig(s.central.upper),
        sig(s.shortest.lower),
        sig(s.shortest.upper),
    ];
    if exp {
        let e = s.exp();
        row.extend([sig(e.median), sig(e.central.lower), sig(e.central.upper)]);
    }
    row
}

/// Log-dose meta-analysis of all studies in `path`: parameter summaries,
/// then per-study estimates, weights and shrinkage intervals.
pub fn cmd_meta(path: &Path, opts: &MetaOptions) -> Result<String> {
    let datasets = read_datasets(path)?;
    let (input, result) = meta_from_datasets(&datasets, opts)?;

    let mut out = String::new();
    writeln!(
        out,
        "studies: {} ({} fits, log dose, target {})",
        input.k(),
        opts.method.name(),
        opts.target
    )
    .unwrap();
    if let Some(w) = &result.warning {
        writeln!(out, "warning: {w}").unwrap();
    }
    out.push('\n');

    let mut params = Table::new([
        "parameter", "median", "mean", "sd", "lower", "upper", "hpd_lower", "hpd_upper",
        "exp_median", "exp_lower", "exp_upper",
    ]);
    params.push(summary_row("mu", &result.mu, true));
    params.push(summary_row("tau", &result.tau, false));
    params.push(summary_row("prediction", &result.prediction, true));
    out.push_str(&params.render(opts.format));
    out.push('\n');

    let mut studies = Table::new([
        "study_id", "mtd", "se", "weight", "shrunk_median", "shrunk_lower", "shrunk_upper",
        "exp_median", "exp_lower", "exp_upper",
    ]);
    for (i, e) in input.estimates().iter().enumerate() {
        let s = &result.shrinkage[i];
        let x = s.exp();
        studies.push([
            e.study_id.clone(),
            sig(e.estimate),
            sig(e.std_err),
            percent(result.weights[i]),
            sig(s.median),
            sig(s.central.lower),
            sig(s.central.upper),
            sig(x.median),
            sig(x.central.lower),
            sig(x.central.upper),
        ]);
    }
    out.push_str(&studies.render(opts.format));

    if let Some(svg_path) = &opts.svg {
        let labels: Vec<String> = input
            .estimates()
            .iter()
            .map(|e| {
                datasets
                    .iter()
                    .find(|d| d.study_id == e.study_id)
                    .map(study_label)
                    .unwrap_or_else(|| e.study_id.clone())
            })
            .collect();
        let spec = ForestPlotSpec::from_meta(&input, &result, &labels);
        fs::write(svg_path, render_forest_svg(&spec))?;
    }
    Ok(out)
}

/// Summaries computed by [`cmd_meta`], for callers that want numbers
/// rather than text.
pub fn meta_from_datasets(
    datasets: &[DoseToxicityDataset],
    opts: &MetaOptions,
) -> Result<(MetaInput, MetaResult)> {
    let cfg = FitConfig::default()
        .with_method(opts.method)
        .with_transform(DoseTransform::Log)
        .with_target(opts.target);
    let mut input = estimate_all(datasets, &cfg)?;
    if let Some(t) = opts.drop_se_above {
        input = sensitivity_filter(&input, t)?;
    }
    let result = analyze(&input, &opts.prior)?;
    Ok((input, result))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeOptions {
    pub method: FitMethod,
    pub target_toxicity: f64,
    pub target_group: String,
    /// Half-normal scale of the first-stage `tau` prior for groups with at
    /// most two studies; larger groups use uniform priors.
    pub small_group_tau_scale: f64,
    pub second_stage_prior: PriorSpec,
    pub format: TableFormat,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            method: FitMethod::Flac,
            target_toxicity: 0.33,
            target_group: "japanese".into(),
            small_group_tau_scale: 0.2,
            second_stage_prior: PriorSpec::half_normal(0.2),
            format: TableFormat::Aligned,
        }
    }
}

/// Splits datasets by `group_tag`, in order of first appearance.
pub fn bridge_groups(datasets: &[DoseToxicityDataset], opts: &BridgeOptions) -> Result<Vec<BridgeGroup>> {
    let cfg = FitConfig::default()
        .with_method(opts.method)
        .with_transform(DoseTransform::Log)
        .with_target(opts.target_toxicity);
    let mut tags: Vec<&str> = Vec::new();
    for ds in datasets {
        let tag = ds.group_tag.as_deref().ok_or_else(|| {
            Error::Validation(format!("study `{}` has no group tag", ds.study_id))
        })?;
        if !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    tags.iter()
        .map(|&tag| {
            let members: Vec<DoseToxicityDataset> = datasets
                .iter()
                .filter(|d| d.group_tag.as_deref() == Some(tag))
                .cloned()
                .collect();
            let input = estimate_all(&members, &cfg)?;
            let prior = match input.k() {
                0..=2 => PriorSpec::half_normal(opts.small_group_tau_scale),
                _ => PriorSpec::uniform(),
            };
            Ok(BridgeGroup::new(tag, input, prior))
        })
        .collect()
}

pub fn cmd_bridge(path: &Path, opts: &BridgeOptions) -> Result<String> {
    let datasets = read_datasets(path)?;
    let groups = bridge_groups(&datasets, opts)?;
    let res = bridge(&groups, &opts.second_stage_prior, &opts.target_group)?;

    let mut table = Table::new([
        "estimate", "k", "mean", "sd", "exp_median", "exp_lower", "exp_upper", "weight",
    ]);
    for (s, w) in res.stage_one.iter().zip(&res.overall_weights) {
        let e = s.mu.exp();
        table.push([
            s.label.clone(),
            s.k.to_string(),
            sig(s.mu.mean),
            sig(s.mu.sd),
            sig(e.median),
            sig(e.central.lower),
            sig(e.central.upper),
            percent(*w),
        ]);
    }
    let e = res.shrinkage.exp();
    table.push([
        format!("{} (shrinkage)", res.target),
        String::new(),
        sig(res.shrinkage.mean),
        sig(res.shrinkage.sd),
        sig(e.median),
        sig(e.central.lower),
        sig(e.central.upper),
        percent(res.target_weight),
    ]);

    let mut out = table.render(opts.format);
    writeln!(
        out,
        "\n{}'s own estimate contributes {} to its shrinkage estimate",
        res.target,
        percent(res.target_weight)
    )
    .unwrap();
    Ok(out)
}

fn default_scenarios() -> Vec<ScenarioName> {
    ScenarioName::ALL.to_vec()
}

fn default_mix() -> [f64; 3] {
    [1.0; 3]
}

fn default_method() -> String {
    "flac".into()
}

/// JSON configuration of `simulate`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioName>,
    pub k: Vec<usize>,
    pub tau: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    /// Relative frequencies of 3+3, CRM and BLRM.
    #[serde(default = "default_mix")]
    pub design_mix: [f64; 3],
    #[serde(default = "default_method")]
    pub method: String,
}

impl SimulateConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Expands the configuration into grid cells: scenario-major, then `k`,
    /// then `tau`.
    pub fn cells(&self) -> Result<Vec<CellSpec>> {
        if self.scenarios.is_empty() || self.k.is_empty() || self.tau.is_empty() {
            return Err(Error::Config("scenarios, k and tau must be non-empty".into()));
        }
        let method: FitMethod = self.method.parse()?;
        let mut cells = Vec::new();
        for &scenario in &self.scenarios {
            for &k in &self.k {
                for &tau in &self.tau {
                    let mut config = SimulationConfig::new(k, tau, self.replications, self.master_seed);
                    config.design_mix = self.design_mix;
                    config.fit.method = method;
                    config.validate()?;
                    cells.push(CellSpec { scenario, config });
                }
            }
        }
        Ok(cells)
    }
}

/// Runs the grid in `config`, writes the per-replication CSV to `out_csv`
/// and returns the per-cell summary table.
pub fn cmd_simulate(config: &Path, out_csv: &Path, format: TableFormat) -> Result<String> {
    let cfg = SimulateConfig::from_json(&fs::read_to_string(config)?)?;
    let cells = cfg.cells()?;
    let results = run_grid(&cells, &Simulator::standard())?;

    let mut buf = Vec::new();
    write_results_csv(&results, &mut buf)?;
    fs::write(out_csv, buf)?;

    let mut table = Table::new([
        "scenario", "k", "tau", "target", "n", "mean_error", "mean_abs_error", "dlt_at_estimate",
        "ci_width", "coverage",
    ]);
    for c in summarize_cells(&results) {
        table.push([
            c.scenario.name().to_string(),
            c.k.to_string(),
            c.tau.to_string(),
            c.target.name().to_string(),
            c.n.to_string(),
            sig(c.mean_error),
            sig(c.mean_abs_error),
            sig(c.mean_dlt_at_estimate),
            sig(c.mean_ci_width),
            sig(c.coverage),
        ]);
    }
    Ok(table.render(format))
}
