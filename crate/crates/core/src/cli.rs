//! Command-line pipeline: generate, label, train, solve, bench.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::driver::{solve, SolveConfig, SolveMode, SolveReport};
use crate::gnn::{checkpoint, Model};
use crate::graph::{parse_instance, serialize_instance, TimeSpaceGraph};
use crate::instgen::{generate, GenConfig};
use crate::reduce::{predict_valid_edges, scores_csv, ReductionConfig};
use crate::trainer::{build_dataset, load_dataset, log_csv, parallel_map, train, TrainConfig, TrainGraph};

pub const BENCH_HEADER: &str = "instance,mode,lp_obj,ip_obj,iters,cols,t_total_s,t_price_s,t_lp_s,t_ip_s";

#[derive(Debug, Parser)]
#[command(name = "cgp", about = "Column generation for crew scheduling with learned graph reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded random instances.
    Generate(GenerateArgs),
    /// Solve instances with Baseline column generation and write edge labels.
    Label(LabelArgs),
    /// Train the edge classifier on labeled instances.
    Train(TrainArgs),
    /// Solve one instance.
    Solve(SolveArgs),
    /// Run several modes over a set of instances and write a report.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Edge-count multiplier; 2 gives the double-size generalization set.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    /// Instance files or directories containing `*.json` instances.
    #[arg(long, num_args = 1.., required = true)]
    pub instances: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Directory of `*.labels` files.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to the checkpoint path with `.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_graphs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub w_neg: Option<f64>,
    #[arg(long)]
    pub h_conv: Option<usize>,
    #[arg(long)]
    pub h_mlp: Option<usize>,
    #[arg(long)]
    pub l_conv: Option<usize>,
    #[arg(long)]
    pub l_mlp: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_graphs: self.batch_graphs.unwrap_or(d.batch_graphs),
            lr: self.lr.unwrap_or(d.lr),
            w_neg: self.w_neg.unwrap_or(d.w_neg),
            h_conv: self.h_conv.unwrap_or(d.h_conv),
            h_mlp: self.h_mlp.unwrap_or(d.h_mlp),
            l_conv: self.l_conv.unwrap_or(d.l_conv),
            l_mlp: self.l_mlp.unwrap_or(d.l_mlp),
            seed: self.seed.unwrap_or(d.seed),
            val_fraction: self.val_fraction.unwrap_or(d.val_fraction),
            patience: self.patience.or(d.patience),
            recall_threshold: d.recall_threshold,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "baseline")]
    pub mode: SolveMode,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trajectory CSV output.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// JSON report output; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Edge-score CSV output (needs --model).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = crate::reduce::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub instances: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,optimal,fast")]
    pub modes: Vec<SolveMode>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = crate::reduce::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Label(a) => cmd_label(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
    }
}

pub fn instance_file_name(seed: u64) -> String {
    format!("rcsp_{seed:06}.json")
}

/// Writes instances for seeds `seed..seed+count` and returns their paths.
pub fn cmd_generate(a: &GenerateArgs) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut paths = Vec::new();
    for seed in a.seed..a.seed + a.count {
        let mut cfg = GenConfig::with_seed(seed);
        if let Some(f) = a.scale {
            cfg = cfg.scaled(f);
        }
        let g = generate(&cfg)?;
        let path = a.out.join(instance_file_name(seed));
        std::fs::write(&path, serialize_instance(&g)).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    info!("wrote {} instances to {}", paths.len(), a.out.display());
    Ok(paths)
}

/// Expands directories into their `*.json` files, sorted.
pub fn collect_instances(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no instances found");
    }
    Ok(out)
}

pub fn cmd_label(a: &LabelArgs) -> anyhow::Result<usize> {
    let instances = collect_instances(&a.instances)?;
    let labeled = build_dataset(&instances, &a.out, a.workers)?;
    let pos: usize = labeled.iter().map(|l| l.labels.iter().filter(|&&x| x == 1).count()).sum();
    let total: usize = labeled.iter().map(|l| l.labels.len()).sum();
    info!(
        "labeled {}/{} instances, positive rate {:.4}",
        labeled.len(),
        instances.len(),
        pos as f64 / total.max(1) as f64
    );
    Ok(labeled.len())
}

pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".log.csv");
    PathBuf::from(s)
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.data)?;
    let graphs: Vec<TrainGraph> = data.iter().map(|(g, l)| TrainGraph::new(g, l.labels.clone())).collect();
    let out = train(&graphs, &a.config())?;
    checkpoint::save(&out.model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let log_path = a.log.clone().unwrap_or_else(|| default_log_path(&a.out));
    std::fs::write(&log_path, log_csv(&out.log))?;
    if out.diverged {
        bail!("training diverged; kept the checkpoint of epoch {}", out.best_epoch);
    }
    info!("best epoch {}; checkpoint {}", out.best_epoch, a.out.display());
    Ok(())
}

fn load_graph(path: &Path) -> anyhow::Result<TimeSpaceGraph> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(mode_needs: bool, path: Option<&PathBuf>) -> anyhow::Result<Option<Model>> {
    match path {
        Some(p) => Ok(Some(checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?)),
        None if mode_needs => bail!("this mode needs --model"),
        None => Ok(None),
    }
}

fn solve_config(threshold: f64) -> anyhow::Result<SolveConfig> {
    if !(threshold > 0.0 && threshold < 1.0) {
        bail!("--threshold must lie strictly between 0 and 1");
    }
    Ok(SolveConfig {
        reduction: ReductionConfig { threshold, ..Default::default() },
        ..Default::default()
    })
}

pub fn cmd_solve(a: &SolveArgs) -> anyhow::Result<()> {
    let model = load_model(a.mode.needs_model(), a.model.as_ref())?;
    let cfg = solve_config(a.threshold)?;
    let g = load_graph(&a.instance)?;
    let out = solve(&g, a.mode, model.as_ref(), &cfg)?;
    if let Some(p) = &a.log {
        std::fs::write(p, out.report.trajectory_csv())?;
    }
    if let Some(p) = &a.scores {
        let Some(m) = &model else { bail!("--scores needs --model") };
        std::fs::write(p, scores_csv(&g, &predict_valid_edges(m, &g)?, None))?;
    }
    let json = serde_json::to_string_pretty(&out.report)?;
    match &a.report {
        Some(p) => std::fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// One bench row; objectives and times are NaN when the solve failed.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance: String,
    pub mode: SolveMode,
    pub lp_obj: f64,
    pub ip_obj: f64,
    pub iters: usize,
    pub cols: usize,
    pub t_total_s: f64,
    pub t_price_s: f64,
    pub t_lp_s: f64,
    pub t_ip_s: f64,
}

impl BenchRow {
    pub fn from_report(instance: &str, r: &SolveReport) -> Self {
        BenchRow {
            instance: instance.to_string(),
            mode: r.mode,
            lp_obj: r.lp_objective,
            ip_obj: r.ip_objective,
            iters: r.iterations,
            cols: r.columns_generated,
            t_total_s: r.times.total_s,
            t_price_s: r.times.pricing_s,
            t_lp_s: r.times.lp_s,
            t_ip_s: r.times.ip_s,
        }
    }

    pub fn failed(instance: &str, mode: SolveMode) -> Self {
        BenchRow {
            instance: instance.to_string(),
            mode,
            lp_obj: f64::NAN,
            ip_obj: f64::NAN,
            iters: 0,
            cols: 0,
            t_total_s: f64::NAN,
            t_price_s: f64::NAN,
            t_lp_s: f64::NAN,
            t_ip_s: f64::NAN,
        }
    }

    pub fn ok(&self) -> bool {
        self.ip_obj.is_finite()
    }
}

/// Mean statistics of one mode against Baseline on the instances where both
/// succeeded. Ratios and gaps are computed per instance, then averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSummary {
    pub mode: SolveMode,
    pub instances: usize,
    pub failures: usize,
    pub mean_ip: f64,
    pub mean_gap_pct: f64,
    pub mean_ratio_pct: f64,
    pub max_abs_lp_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BENCH_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.instance, r.mode, r.lp_obj, r.ip_obj, r.iters, r.cols, r.t_total_s, r.t_price_s, r.t_lp_s, r.t_ip_s
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> anyhow::Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(BENCH_HEADER) {
            bail!("unexpected bench header");
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                bail!("row {}: expected 10 fields", k + 1);
            }
            let num = |i: usize| -> anyhow::Result<f64> { f[i].parse::<f64>().with_context(|| format!("row {}: field {}", k + 1, i + 1)) };
            rows.push(BenchRow {
                instance: f[0].to_string(),
                mode: f[1].parse().map_err(anyhow::Error::msg)?,
                lp_obj: num(2)?,
                ip_obj: num(3)?,
                iters: f[4].parse()?,
                cols: f[5].parse()?,
                t_total_s: num(6)?,
                t_price_s: num(7)?,
                t_lp_s: num(8)?,
                t_ip_s: num(9)?,
            });
        }
        Ok(BenchReport { rows })
    }

    pub fn summaries(&self) -> Vec<ModeSummary> {
        let base: BTreeMap<&str, &BenchRow> = self
            .rows
            .iter()
            .filter(|r| r.mode == SolveMode::Baseline && r.ok())
            .map(|r| (r.instance.as_str(), r))
            .collect();
        let mut out = Vec::new();
        for mode in SolveMode::ALL {
            let rows: Vec<&BenchRow> = self.rows.iter().filter(|r| r.mode == mode).collect();
            if rows.is_empty() {
                continue;
            }
            let paired: Vec<(&BenchRow, &BenchRow)> = rows
                .iter()
                .filter(|r| r.ok())
                .filter_map(|r| base.get(r.instance.as_str()).map(|b| (*r, *b)))
                .collect();
            let n = paired.len().max(1) as f64;
            out.push(ModeSummary {
                mode,
                instances: paired.len(),
                failures: rows.iter().filter(|r| !r.ok()).count(),
                mean_ip: paired.iter().map(|(r, _)| r.ip_obj).sum::<f64>() / n,
                mean_gap_pct: paired.iter().map(|(r, b)| 100.0 * (r.ip_obj - b.ip_obj) / b.ip_obj).sum::<f64>() / n,
                mean_ratio_pct: paired.iter().map(|(r, b)| 100.0 * r.t_total_s / b.t_total_s).sum::<f64>() / n,
                max_abs_lp_diff: paired.iter().map(|(r, b)| (r.lp_obj - b.lp_obj).abs()).fold(0.0, f64::max),
            });
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::from(
            "# gap% = 100*(ip_mode - ip_baseline)/ip_baseline and ratio% = 100*t_mode/t_baseline,\n\
             # computed per instance and then averaged over instances solved by both modes.\n\
             mode,instances,failures,mean_ip,mean_gap_pct,mean_ratio_pct,max_abs_lp_diff\n",
        );
        for s in self.summaries() {
            writeln!(
                out,
                "{},{},{},{:.6},{:.4},{:.4},{:.3e}",
                s.mode, s.instances, s.failures, s.mean_ip, s.mean_gap_pct, s.mean_ratio_pct, s.max_abs_lp_diff
            )
            .unwrap();
        }
        out
    }
}

fn sidecar(report: &Path, suffix: &str) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Runs every mode on every instance. Writes the row CSV to `--report`, the
/// aggregates to `<report>.summary.csv` and trajectories to
/// `<report>.traj/<instance>.<mode>.csv`.
pub fn cmd_bench(a: &BenchArgs) -> anyhow::Result<BenchReport> {
    let needs_model = a.modes.iter().any(|m| m.needs_model());
    let model = load_model(needs_model, a.model.as_ref())?;
    let cfg = solve_config(a.threshold)?;
    let instances = collect_instances(&a.instances)?;
    let traj_dir = sidecar(&a.report, ".traj");
    std::fs::create_dir_all(&traj_dir)?;
    let mut modes = a.modes.clone();
    modes.sort_by_key(|m| SolveMode::ALL.iter().position(|x| x == m));
    modes.dedup();

    let per_instance = parallel_map(&instances, a.workers, |path| {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let g = match load_graph(path) {
            Ok(g) => g,
            Err(e) => {
                warn!("{name}: {e:#}");
                return modes.iter().map(|&m| (BenchRow::failed(&name, m), None)).collect::<Vec<_>>();
            }
        };
        modes
            .iter()
            .map(|&mode| match solve(&g, mode, model.as_ref(), &cfg) {
                Ok(out) => (BenchRow::from_report(&name, &out.report), Some(out.report.trajectory_csv())),
                Err(e) => {
                    warn!("{name} {mode}: {e}");
                    (BenchRow::failed(&name, mode), None)
                }
            })
            .collect()
    });

    let mut report = BenchReport::default();
    for (row, traj) in per_instance.into_iter().flatten() {
        if let Some(t) = traj {
            std::fs::write(traj_dir.join(format!("{}.{}.csv", row.instance, row.mode)), t)?;
        }
        report.rows.push(row);
    }
    std::fs::write(&a.report, report.to_csv())?;
    std::fs::write(sidecar(&a.report, ".summary.csv"), report.summary_text())?;
    print!("{}", report.summary_text());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(instance: &str, mode: SolveMode, ip: f64, t: f64) -> BenchRow {
        BenchRow { instance: instance.into(), mode, lp_obj: ip - 0.5, ip_obj: ip, iters: 3, cols: 30, t_total_s: t, t_price_s: t / 2.0, t_lp_s: t / 4.0, t_ip_s: t / 8.0 }
    }

    #[test]
    fn summaries_use_per_instance_means() {
        let report = BenchReport {
            rows: vec![
                row("a", SolveMode::Baseline, 40.0, 1.0),
                row("a", SolveMode::Fast, 44.0, 0.1),
                row("b", SolveMode::Baseline, 20.0, 4.0),
                row("b", SolveMode::Fast, 20.0, 2.0),
                BenchRow::failed("c", SolveMode::Fast),
            ],
        };
        let s = report.summaries();
        assert_eq!(s[0].mode, SolveMode::Baseline);
        assert_eq!((s[0].mean_gap_pct, s[0].mean_ratio_pct), (0.0, 100.0));
        let fast = s[1];
        assert_eq!(fast.instances, 2);
        assert_eq!(fast.failures, 1);
        assert!((fast.mean_gap_pct - 5.0).abs() < 1e-12);
        assert!((fast.mean_ratio_pct - 30.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_keeps_aggregates() {
        let report = BenchReport {
            rows: vec![
                row("x", SolveMode::Baseline, 31.5, 0.0123),
                row("x", SolveMode::Optimal, 31.5, 0.0101),
                BenchRow::failed("y", SolveMode::Optimal),
            ],
        };
        let text = report.to_csv();
        assert!(text.starts_with(BENCH_HEADER));
        let back = BenchReport::from_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 3);
        assert_eq!(back.summaries(), report.summaries());
    }

    #[test]
    fn fast_mode_needs_model() {
        let cli = Cli::try_parse_from(["cgp", "solve", "--instance", "x.json", "--mode", "fast"]).unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        let err = cmd_solve(&a).unwrap_err();
        assert!(err.to_string().contains("--model"));
        assert!(Cli::try_parse_from(["cgp", "solve", "--instance", "x.json", "--mode", "quick"]).is_err());
    }
}
