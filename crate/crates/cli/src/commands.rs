use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use flatlab_core::continual::{
    correlate, forgetting_magnitude, make_task, probe_batch, run_followup, run_sequence, train_base, wise_ft_merge,
    ProbeData, RunReport, SummaryRow,
};
use flatlab_core::flatness::FLATNESS_CSV_HEADER;
use flatlab_core::landscape::{emit_contour, evaluate_surface, fmt_f64, sample_directions};
use flatlab_core::{flatness_report, DirectionKind, GridSpec, LossSurface, ModelSpec, ParamVector};
use rayon::prelude::*;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Process-wide settings read once from the environment.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub output_root: Option<PathBuf>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn checkpoint(spec: &ModelSpec, params: &ParamVector) -> Result<Checkpoint> {
    let spec = ModelSpec { init_seed: 0, ..spec.clone() };
    Ok(Checkpoint::new(spec, params.clone())?)
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Trains the base and follow-up stages for every configured seed.
///
/// Per seed: `base.flnd`, `base_trace.csv`, `followup.flnd`,
/// `followup_trace.csv`, plus `merged.flnd` when merging is on.
pub fn cmd_train(ctx: &Context, config_path: &Path) -> Result<Vec<PathBuf>> {
    let config = ExperimentConfig::load(config_path)?;
    let out = config.output_path(ctx.output_root.as_deref());
    let mut written = vec![write(&out.join("resolved.toml"), config.to_toml())?];
    for &seed in &config.seeds {
        let plan = config.plan().with_seed(seed);
        let base = train_base(&plan)?;
        let outcome = run_followup(&plan, &base).map_err(|f| f.error)?;
        let dir = seed_dir(&out, seed);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let base_ck = checkpoint(&base.spec, &base.params)?;
        save_checkpoint(&dir.join("base.flnd"), &base_ck)?;
        written.push(dir.join("base.flnd"));
        written.push(write(&dir.join("base_trace.csv"), base.trace.to_csv())?);
        save_checkpoint(&dir.join("followup.flnd"), &checkpoint(&base.spec, &outcome.followup_params)?)?;
        written.push(dir.join("followup.flnd"));
        written.push(write(&dir.join("followup_trace.csv"), outcome.followup_trace.to_csv())?);
        if plan.wiseft_lambda.is_some() {
            save_checkpoint(&dir.join("merged.flnd"), &checkpoint(&base.spec, &outcome.final_params)?)?;
            written.push(dir.join("merged.flnd"));
        }
    }
    Ok(written)
}

/// Overrides for the config's probe section.
#[derive(Debug, Clone, Default)]
pub struct LandscapeArgs {
    pub seed: Option<u64>,
    pub data: Option<ProbeData>,
    pub directions: Option<DirectionKind>,
    pub direction_seed: Option<u64>,
    pub radius: Option<f64>,
    pub n_per_axis: Option<usize>,
    pub levels: Option<usize>,
    pub out: Option<PathBuf>,
}

fn checkpoint_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "checkpoint".into(), |s| s.to_string_lossy().into_owned())
}

/// Probes a checkpoint: writes `surface.csv`, `contour.svg` and `flatness.csv`.
pub fn cmd_landscape(ctx: &Context, checkpoint_path: &Path, config_path: &Path, args: &LandscapeArgs) -> Result<Vec<PathBuf>> {
    let config = ExperimentConfig::load(config_path)?;
    let ck = load_checkpoint(checkpoint_path)?;
    let seed = args.seed.unwrap_or(config.seeds[0]);
    let plan = config.plan().with_seed(seed);
    let prior = make_task(&plan.base_task)?;
    let new = make_task(&plan.followup_task)?;
    if ck.spec.input_dim() != plan.base_task.input_dim || ck.spec.output_dim() != plan.base_task.n_classes {
        return Err(CliError::Usage(format!(
            "checkpoint {} maps {} inputs to {} outputs; the configured tasks need {} to {}",
            checkpoint_path.display(),
            ck.spec.input_dim(),
            ck.spec.output_dim(),
            plan.base_task.input_dim,
            plan.base_task.n_classes
        )));
    }

    let mut grid = config.probe.grid();
    if let Some(r) = args.radius {
        grid = GridSpec::symmetric(r, grid.n_per_axis);
    }
    if let Some(n) = args.n_per_axis {
        grid.n_per_axis = n;
    }
    let data = args.data.unwrap_or(config.probe.data);
    let kind = args.directions.unwrap_or(config.probe.directions);
    let direction_seed = args.direction_seed.unwrap_or(config.probe.direction_seed);
    let levels = args.levels.unwrap_or(config.probe.contour_levels);

    let batch = probe_batch(data, &prior, &new)?;
    let dirs = sample_directions(&ck.spec, &ck.params, direction_seed, kind)?;
    let surface = evaluate_surface(&ck.params, &ck.spec, &batch, data.id(), &dirs, &grid)?;
    let report = flatness_report(&surface)?;
    let svg = emit_contour(&surface, levels)?;

    let id = checkpoint_id(checkpoint_path);
    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => config.output_path(ctx.output_root.as_deref()).join("landscape").join(&id),
    };
    Ok(vec![
        write(&out.join("surface.csv"), surface.to_csv())?,
        write(&out.join("contour.svg"), svg)?,
        write(&out.join("flatness.csv"), format!("{FLATNESS_CSV_HEADER}\n{}\n", report.csv_row(&id)))?,
    ])
}

/// Flatness row for an existing surface CSV.
pub fn cmd_flatness(surface_path: &Path, id: Option<&str>) -> Result<String> {
    let text = fs::read_to_string(surface_path).map_err(|e| CliError::io(surface_path, e))?;
    let surface = LossSurface::from_csv(&text, surface_path.display().to_string()).map_err(|e| CliError::Schema {
        path: surface_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let report = flatness_report(&surface)?;
    let id = id.map_or_else(|| checkpoint_id(surface_path), str::to_string);
    Ok(format!("{FLATNESS_CSV_HEADER}\n{}\n", report.csv_row(&id)))
}

/// Wise-FT merge of two checkpoints of the same architecture.
pub fn cmd_merge(a: &Path, b: &Path, lambda: f64, out: &Path) -> Result<PathBuf> {
    let ca = load_checkpoint(a)?;
    let cb = load_checkpoint(b)?;
    if ca.spec != cb.spec {
        return Err(CliError::Usage(format!(
            "cannot merge {} and {}: architectures differ",
            a.display(),
            b.display()
        )));
    }
    let merged = wise_ft_merge(&ca.params, &cb.params, lambda)?;
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    save_checkpoint(out, &Checkpoint::new(ca.spec, merged)?)?;
    Ok(out.to_path_buf())
}

fn report_toml(report: &RunReport) -> String {
    toml::to_string(report).expect("report serializes")
}

/// Runs every seed's sequence; writes `reports/seed-<s>.toml` and `summary.csv`.
///
/// Failed seeds still get a report (marked incomplete, error in `warnings`),
/// are left out of the summary, and make the command fail.
pub fn cmd_sequence(ctx: &Context, config_path: &Path) -> Result<Vec<PathBuf>> {
    let config = ExperimentConfig::load(config_path)?;
    let out = config.output_path(ctx.output_root.as_deref());
    let mut written = vec![write(&out.join("resolved.toml"), config.to_toml())?];
    let plan = config.plan();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", config.workers)))?;

    let results: Vec<Result<(PathBuf, Option<RunReport>)>> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let (report, ok) = match run_sequence(&plan.with_seed(seed)) {
                    Ok(r) => (r, true),
                    Err(failure) => {
                        let mut partial = failure.partial;
                        partial.warnings.push(format!("error: {}", failure.error));
                        (partial, false)
                    }
                };
                let path = write(&out.join("reports").join(format!("seed-{seed}.toml")), report_toml(&report))?;
                Ok((path, ok.then_some(report)))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failed = 0;
    for result in results {
        let (path, report) = result?;
        written.push(path);
        match report {
            Some(r) => rows.push(SummaryRow::from_report(&r)?),
            None => failed += 1,
        }
    }
    written.push(write(&out.join("summary.csv"), SummaryRow::to_csv(&rows))?);
    if failed > 0 {
        return Err(CliError::SeedsFailed {
            failed,
            total: config.seeds.len(),
        });
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    pub method: String,
    pub n: usize,
    pub delta_mean: f64,
    pub delta_std: f64,
    pub magnitude_mean: f64,
    pub composite_mean: f64,
    pub composite_std: f64,
    /// `(spearman, pearson)` over this method's rows, when defined.
    pub correlation: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Sorted by mean forgetting magnitude, smallest first.
    pub methods: Vec<MethodStats>,
    pub pooled: MethodStats,
    pub warnings: Vec<String>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn stats(method: &str, rows: &[&SummaryRow]) -> MethodStats {
    let deltas: Vec<f64> = rows.iter().map(|r| r.forgetting_delta).collect();
    let mags: Vec<f64> = deltas.iter().map(|&d| forgetting_magnitude(d)).collect();
    let comps: Vec<f64> = rows.iter().map(|r| r.composite).collect();
    let (delta_mean, delta_std) = mean_std(&deltas);
    let (composite_mean, composite_std) = mean_std(&comps);
    MethodStats {
        method: method.to_string(),
        n: rows.len(),
        delta_mean,
        delta_std,
        magnitude_mean: mags.iter().sum::<f64>() / mags.len() as f64,
        composite_mean,
        composite_std,
        correlation: correlate(&comps, &mags).ok(),
    }
}

/// Aggregates summary rows per method and correlates sharpness with forgetting.
pub fn compare_rows(rows: &[SummaryRow]) -> Comparison {
    let mut groups: BTreeMap<&str, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.method).or_default().push(r);
    }
    let mut methods: Vec<MethodStats> = groups.iter().map(|(m, rs)| stats(m, rs)).collect();
    methods.sort_by(|a, b| {
        a.magnitude_mean
            .total_cmp(&b.magnitude_mean)
            .then_with(|| a.method.cmp(&b.method))
    });

    let all: Vec<&SummaryRow> = rows.iter().collect();
    let pooled = stats("all", &all);
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    let duplicates = rows
        .iter()
        .filter(|r| !seen.insert((r.plan_id.as_str(), r.seed, r.gap.to_bits(), r.method.as_str())))
        .count();
    if duplicates > 0 {
        warnings.push(format!(
            "degenerate input: {duplicates} duplicated rows; correlations are computed over the repeated pairs"
        ));
    }
    if pooled.correlation.is_none() {
        let comps: Vec<f64> = rows.iter().map(|r| r.composite).collect();
        let mags: Vec<f64> = rows.iter().map(|r| forgetting_magnitude(r.forgetting_delta)).collect();
        if let Err(e) = correlate(&comps, &mags) {
            warnings.push(format!("pooled correlation: {e}"));
        }
    }
    Comparison {
        methods,
        pooled,
        warnings,
    }
}

pub const COMPARE_CSV_HEADER: &str =
    "method,n,delta_mean,delta_std,magnitude_mean,composite_mean,composite_std,spearman,pearson";

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>4} {:>20} {:>10} {:>20}",
            "method", "n", "delta (pp)", "|delta|", "composite"
        );
        for m in self.methods.iter().chain(std::iter::once(&self.pooled)) {
            let _ = writeln!(
                out,
                "{:<28} {:>4} {:>9.3} ± {:<8.3} {:>10.3} {:>9.4} ± {:.4}",
                m.method, m.n, m.delta_mean, m.delta_std, m.magnitude_mean, m.composite_mean, m.composite_std
            );
        }
        match self.pooled.correlation {
            Some((s, p)) => {
                let _ = writeln!(out, "pooled ({} pairs): spearman {s:+.4}  pearson {p:+.4}", self.pooled.n);
            }
            None => {
                let _ = writeln!(out, "pooled ({} pairs): correlation undefined", self.pooled.n);
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{COMPARE_CSV_HEADER}\n");
        for m in self.methods.iter().chain(std::iter::once(&self.pooled)) {
            let (s, p) = m
                .correlation
                .map_or((String::new(), String::new()), |(s, p)| (fmt_f64(s), fmt_f64(p)));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{s},{p}",
                m.method,
                m.n,
                fmt_f64(m.delta_mean),
                fmt_f64(m.delta_std),
                fmt_f64(m.magnitude_mean),
                fmt_f64(m.composite_mean),
                fmt_f64(m.composite_std)
            );
        }
        out
    }
}

/// Reads summary CSVs and compares them. Returns the text table.
pub fn cmd_compare(summaries: &[PathBuf], csv_out: Option<&Path>) -> Result<String> {
    if summaries.is_empty() {
        return Err(CliError::Usage("compare needs at least one summary CSV".into()));
    }
    let mut rows = Vec::new();
    for path in summaries {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let parsed = SummaryRow::parse_csv(&text).map_err(|e| CliError::Schema {
            path: path.clone(),
            message: e.to_string(),
        })?;
        rows.extend(parsed);
    }
    if rows.len() < 2 {
        return Err(CliError::Usage(format!("compare needs at least two summary rows, got {}", rows.len())));
    }
    let comparison = compare_rows(&rows);
    if let Some(path) = csv_out {
        write(path, comparison.to_csv())?;
    }
    Ok(comparison.to_text())
}
