//! Subcommand implementations. Each one validates its configuration, does
//! all the work in memory, and only then writes its artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ctxboot::counting::{build_empirical_tree, default_h_star, CountedTree};
use ctxboot::gausslab::{
    anticoncentration_bound, band_frequency, coupling_distance, sample_maxima, EquicorrelatedSigns,
    GaussianDesign, GaussianSteps, MartingaleGenerator, RademacherSteps,
};
use ctxboot::manymeans::{bands, Panel};
use ctxboot::penalties::{cf_bootstrap, selfnorm_table, BootCfg, PenaltySource, TuningRule, MIN_REPLICATES};
use ctxboot::pruning::prune;
use ctxboot::reference;
use ctxboot::rng::derive_seed;
use ctxboot::sequences::{sample_vlmc, Alphabet, VlmcModel};

use crate::args::{BandsArgs, Command, FiguresArgs, FitArgs, ReplayArgs, SimulateArgs, VerifyArgs};
use crate::artifacts::{digest_file, finish, read_text, ArtifactSet, Manifest, MANIFEST};
use crate::error::{CliError, CliResult};

/// Runs one subcommand and returns the paths it wrote.
pub fn run(command: &Command) -> CliResult<Vec<PathBuf>> {
    match command {
        Command::Fit(a) => fit(a, command),
        Command::Figures(a) => figures(a),
        Command::Simulate(a) => simulate(a, command),
        Command::Bands(a) => run_bands(a, command),
        Command::VerifyClt(a) => verify_clt(a, command),
        Command::VerifyAnticonc(a) => verify_anticonc(a, command),
        Command::Replay(a) => replay(a),
    }
}

fn check_delta(delta: f64) -> CliResult<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("--delta must lie in (0, 1), got {delta}")))
    }
}

fn check_replicates(b: usize) -> CliResult<()> {
    if b >= MIN_REPLICATES {
        Ok(())
    } else {
        Err(CliError::Config(format!("--B must be at least {MIN_REPLICATES}, got {b}")))
    }
}

fn parse_tuning(tn: &str) -> CliResult<TuningRule> {
    match tn {
        "sqrt" => Ok(TuningRule::SqrtN),
        other => other
            .parse::<u64>()
            .map(TuningRule::MinCount)
            .map_err(|_| CliError::Config(format!("--tn must be \"sqrt\" or a count, got {other:?}"))),
    }
}

/// Text with `#` comment lines removed.
fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits a sequence file into tokens.
///
/// `auto` reads single characters when a declared alphabet has only
/// one-character tokens and whitespace-separated tokens otherwise.
pub fn tokenize<'a>(text: &'a str, delimiter: &str, declared: Option<&Alphabet>) -> Vec<&'a str> {
    let char_mode = match delimiter {
        "char" => true,
        "auto" => declared.is_some_and(|a| a.tokens().iter().all(|t| t.chars().count() == 1)),
        _ => false,
    };
    if char_mode {
        return text
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| &text[i..i + c.len_utf8()])
            .collect();
    }
    match delimiter {
        "auto" | "whitespace" => text.split_whitespace().collect(),
        sep => text
            .split(sep)
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect(),
    }
}

#[derive(Serialize, Deserialize)]
struct PenaltyCsvRow {
    path: String,
    depth: usize,
    n_ctx: u64,
    cf_selfnorm: f64,
    cf_bootstrap: f64,
    source: String,
}

#[derive(Serialize)]
struct TreeArtifact<'a> {
    alphabet: &'a [String],
    n: usize,
    h_star: usize,
    nodes: Vec<ctxboot::counting::NodeDump>,
}

#[derive(Serialize)]
struct FitSummary {
    n: usize,
    h_star: usize,
    nodes: usize,
    tuning_nodes: usize,
    cv_hat: Option<f64>,
    kept_nodes: usize,
    model_leaves: usize,
    delta: f64,
    replicates: usize,
    c: f64,
    seed: u64,
}

fn fit(a: &FitArgs, command: &Command) -> CliResult<Vec<PathBuf>> {
    check_delta(a.delta)?;
    check_replicates(a.replicates)?;
    if a.c.is_nan() || a.c <= 1.0 {
        return Err(CliError::Config(format!("--c must exceed 1, got {}", a.c)));
    }
    if a.h_star == Some(0) {
        return Err(CliError::Config("--h-star must be at least 1".into()));
    }
    let tuning = parse_tuning(&a.tn)?;
    let declared = a
        .alphabet
        .as_deref()
        .map(|s| Alphabet::new(s.split(',').map(str::trim)))
        .transpose()?;
    let input = digest_file(&a.input)?;
    let text = strip_comments(&read_text(&a.input)?);
    let tokens = tokenize(&text, &a.delimiter, declared.as_ref());
    let alphabet = match declared {
        Some(al) => al,
        None => Alphabet::infer(tokens.iter().copied())?,
    };
    let sample = alphabet.encode_all(tokens.iter().copied())?;
    let h = a.h_star.unwrap_or_else(|| default_h_star(sample.len(), alphabet.len()));
    let tree = build_empirical_tree(&sample, &alphabet, h)?;
    let selfnorm = selfnorm_table(&tree, a.delta)?;
    let mut cfg = BootCfg::new(a.replicates, a.delta, a.seed);
    cfg.tuning = tuning;
    let boot = cf_bootstrap(&tree, &cfg)?;
    let est = prune(&tree, &boot, a.c)?;
    let model = est.to_model()?;

    let manifest = Manifest::new(command, vec![input]);
    let mut set = ArtifactSet::new(&manifest.hash);
    set.json(
        "tree.json",
        TreeArtifact {
            alphabet: alphabet.tokens(),
            n: tree.sample_len(),
            h_star: h,
            nodes: tree.dump(),
        },
    );
    set.csv("penalties.csv", penalty_rows(&tree, &selfnorm, &boot))?;
    set.json("estimate.json", serde_json::from_str::<serde_json::Value>(&model.to_json()).expect("model json"));
    set.json(
        "summary.json",
        FitSummary {
            n: tree.sample_len(),
            h_star: h,
            nodes: tree.len(),
            tuning_nodes: boot
                .entries
                .iter()
                .filter(|p| p.source == PenaltySource::Bootstrap)
                .count(),
            cv_hat: boot.cv_hat,
            kept_nodes: est.len(),
            model_leaves: model.leaves().len(),
            delta: a.delta,
            replicates: a.replicates,
            c: a.c,
            seed: a.seed,
        },
    );
    finish(set, &manifest, &a.out)
}

fn penalty_rows(
    tree: &CountedTree,
    selfnorm: &ctxboot::penalties::PenaltyTable,
    boot: &ctxboot::penalties::PenaltyTable,
) -> Vec<PenaltyCsvRow> {
    tree.node_ids()
        .map(|id| PenaltyCsvRow {
            path: tree.path_text(id),
            depth: tree.depth(id),
            n_ctx: tree.count_ctx(id),
            cf_selfnorm: selfnorm.cf(id),
            cf_bootstrap: boot.cf(id),
            source: boot.entries[id.index()].source.as_str().into(),
        })
        .collect()
}

#[derive(Serialize)]
struct Figure1Row<'a> {
    path: &'a str,
    n_ctx: u64,
    cf_selfnorm: f64,
    cf_bootstrap: f64,
}

#[derive(Serialize)]
struct Figure2Row<'a> {
    rank: usize,
    path: &'a str,
    n_ctx: u64,
    source: &'a str,
    ratio: f64,
}

#[derive(Serialize)]
struct FigureSummary {
    nodes: usize,
    bootstrap_nodes: usize,
    median_ratio_bootstrap: Option<f64>,
    median_ratio_all: Option<f64>,
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn figures(a: &FiguresArgs) -> CliResult<Vec<PathBuf>> {
    let manifest_path = a.run.join(MANIFEST);
    let pen_path = a.run.join("penalties.csv");
    for p in [&manifest_path, &pen_path] {
        if !p.is_file() {
            return Err(CliError::MissingArtifacts(p.clone()));
        }
    }
    let manifest = Manifest::read(&manifest_path)?;
    let rows = read_penalties(&pen_path)?;
    let mut set = ArtifactSet::new(&manifest.hash);
    set.csv(
        "figure1_penalties.csv",
        rows.iter().map(|r| Figure1Row {
            path: &r.path,
            n_ctx: r.n_ctx,
            cf_selfnorm: r.cf_selfnorm,
            cf_bootstrap: r.cf_bootstrap,
        }),
    )?;
    let mut ratios: Vec<(f64, &PenaltyCsvRow)> =
        rows.iter().map(|r| (r.cf_selfnorm / r.cf_bootstrap, r)).collect();
    ratios.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.path.cmp(&y.1.path)));
    set.csv(
        "figure2_ratios.csv",
        ratios.iter().enumerate().map(|(i, (ratio, r))| Figure2Row {
            rank: i + 1,
            path: &r.path,
            n_ctx: r.n_ctx,
            source: &r.source,
            ratio: *ratio,
        }),
    )?;
    let boot: Vec<f64> = ratios
        .iter()
        .filter(|(_, r)| r.source == PenaltySource::Bootstrap.as_str())
        .map(|(x, _)| *x)
        .collect();
    let all: Vec<f64> = ratios.iter().map(|(x, _)| *x).collect();
    set.json(
        "figures.json",
        FigureSummary {
            nodes: rows.len(),
            bootstrap_nodes: boot.len(),
            median_ratio_bootstrap: median(&boot),
            median_ratio_all: median(&all),
        },
    );
    set.write(&a.out)
}

fn read_penalties(path: &Path) -> CliResult<Vec<PenaltyCsvRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    rdr.deserialize()
        .collect::<Result<Vec<PenaltyCsvRow>, _>>()
        .map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct SimulationInfo<'a> {
    n: usize,
    burn_in: usize,
    seed: u64,
    model_depth: usize,
    prefix: Vec<&'a str>,
}

fn simulate(a: &SimulateArgs, command: &Command) -> CliResult<Vec<PathBuf>> {
    if a.n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    let (model, inputs) = match (&a.model, a.reference.as_deref()) {
        (Some(path), None) => (VlmcModel::from_json(&read_text(path)?)?, vec![digest_file(path)?]),
        (None, Some("order3")) => (reference::order3_binary(), Vec::new()),
        (None, Some(other)) => {
            return Err(CliError::Config(format!("unknown reference model {other:?}; try \"order3\"")))
        }
        _ => return Err(CliError::Config("give exactly one of --model or --reference".into())),
    };
    let burn_in = a.burn_in.unwrap_or_else(|| ctxboot::sequences::default_burn_in(&model));
    let path = sample_vlmc(&model, a.n, Some(burn_in), a.seed)?;
    let alpha = model.alphabet();
    let mut body = String::new();
    for chunk in path.symbols.chunks(50) {
        let line: Vec<&str> = chunk.iter().map(|&s| alpha.token(s)).collect();
        body.push_str(&line.join(" "));
        body.push('\n');
    }
    let manifest = Manifest::new(command, inputs);
    let mut set = ArtifactSet::new(&manifest.hash);
    set.text("sequence.txt", &body);
    set.json(
        "simulation.json",
        SimulationInfo {
            n: a.n,
            burn_in,
            seed: a.seed,
            model_depth: model.depth(),
            prefix: path.prefix.iter().map(|&s| alpha.token(s)).collect(),
        },
    );
    if a.emit_model {
        let full = model.with_leaf_pi()?;
        set.json("model.json", serde_json::from_str::<serde_json::Value>(&full.to_json()).expect("model json"));
    }
    finish(set, &manifest, &a.out)
}

#[derive(Serialize)]
struct BandRow<'a> {
    name: &'a str,
    mu_hat: f64,
    sigma_hat: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct BandSidecar {
    cv_hat: f64,
    delta: f64,
    replicates: usize,
    seed: u64,
    n: usize,
    d: usize,
}

/// Reads a numeric CSV panel with a header row.
pub fn read_panel(path: &Path) -> CliResult<(Vec<String>, Panel)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| {
                CliError::Domain(ctxboot::Error::OutOfDomain(format!("row {}: {e}", i + 1)))
            })?;
        rows.push(row);
    }
    Ok((names, Panel::from_rows(&rows)?))
}

fn run_bands(a: &BandsArgs, command: &Command) -> CliResult<Vec<PathBuf>> {
    check_delta(a.delta)?;
    check_replicates(a.replicates)?;
    let input = digest_file(&a.input)?;
    let (names, panel) = read_panel(&a.input)?;
    let res = bands(&panel, &BootCfg::new(a.replicates, a.delta, a.seed))?;
    let manifest = Manifest::new(command, vec![input]);
    let mut set = ArtifactSet::new(&manifest.hash);
    set.csv(
        "bands.csv",
        names.iter().enumerate().map(|(j, name)| BandRow {
            name,
            mu_hat: res.mu_hat[j],
            sigma_hat: res.sigma_hat[j],
            lower: res.lower[j],
            upper: res.upper[j],
        }),
    )?;
    set.json(
        "bands.json",
        BandSidecar {
            cv_hat: res.cv_hat,
            delta: a.delta,
            replicates: a.replicates,
            seed: a.seed,
            n: panel.n(),
            d: panel.d(),
        },
    );
    finish(set, &manifest, &a.out)
}

/// Martingale designs for `verify-clt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CltDesign {
    /// Bounded equicorrelated increments with a predictable sign flip.
    EquicorrelatedSigns { d: usize, n: usize, rho: f64 },
    /// One-dimensional fair ±1 steps.
    Rademacher { n: usize },
    /// Independent Gaussian steps with equicorrelated covariance.
    GaussianSteps { d: usize, n: usize, rho: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltSetting {
    pub name: String,
    pub design: CltDesign,
    /// Largest acceptable Kolmogorov distance.
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltConfig {
    pub draws: usize,
    pub settings: Vec<CltSetting>,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            draws: 10_000,
            settings: vec![
                CltSetting {
                    name: "equicorrelated-signs-d50-n2000".into(),
                    design: CltDesign::EquicorrelatedSigns { d: 50, n: 2000, rho: 0.5 },
                    target: 0.03,
                },
                CltSetting {
                    name: "rademacher-d1-n2000".into(),
                    design: CltDesign::Rademacher { n: 2000 },
                    target: 0.02,
                },
            ],
        }
    }
}

/// Gaussian designs for `verify-anticonc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnticoncDesign {
    Equicorrelated { d: usize, rho: f64, sigma: f64 },
    /// Independent coordinates with standard deviations spread evenly
    /// between `sigma_min` and `sigma_max`.
    Independent { d: usize, sigma_min: f64, sigma_max: f64 },
}

impl AnticoncDesign {
    pub fn build(&self) -> GaussianDesign {
        match *self {
            Self::Equicorrelated { d, rho, sigma } => GaussianDesign::Equicorrelated { d, rho, sigma },
            Self::Independent { d, sigma_min, sigma_max } => GaussianDesign::Independent {
                sigmas: (0..d)
                    .map(|j| sigma_min + (sigma_max - sigma_min) * j as f64 / (d.max(2) - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticoncSetting {
    pub name: String,
    pub design: AnticoncDesign,
    pub t: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticoncConfig {
    pub draws: usize,
    pub settings: Vec<AnticoncSetting>,
}

impl Default for AnticoncConfig {
    /// Twelve `(d, t, ε)` cells, each for an equicorrelated and an
    /// independent heteroscedastic design.
    fn default() -> Self {
        let mut settings = Vec::new();
        for d in [2usize, 20, 100] {
            for (t, eps) in [(2.0, 0.05), (2.0, 0.2), (2.5, 0.3), (3.0, 0.1)] {
                settings.push(AnticoncSetting {
                    name: format!("equicorrelated-d{d}-t{t}-eps{eps}"),
                    design: AnticoncDesign::Equicorrelated { d, rho: 0.3, sigma: 1.0 },
                    t,
                    eps,
                });
                settings.push(AnticoncSetting {
                    name: format!("independent-d{d}-t{t}-eps{eps}"),
                    design: AnticoncDesign::Independent { d, sigma_min: 0.1, sigma_max: 1.0 },
                    t,
                    eps,
                });
            }
        }
        Self {
            draws: 100_000,
            settings,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub setting: String,
    pub statistic: f64,
    pub target: f64,
    pub pass: bool,
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&PathBuf>) -> CliResult<(T, Vec<crate::artifacts::InputDigest>)> {
    match path {
        None => Ok((T::default(), Vec::new())),
        Some(p) => {
            let cfg = serde_json::from_str(&read_text(p)?)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", p.display())))?;
            Ok((cfg, vec![digest_file(p)?]))
        }
    }
}

/// Runs the coupling checks of a config.
pub fn clt_rows(cfg: &CltConfig, seed: u64) -> Vec<CheckRow> {
    cfg.settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = derive_seed(seed, i as u64);
            let (gen, reference): (Box<dyn MartingaleGenerator>, GaussianDesign) = match s.design {
                CltDesign::EquicorrelatedSigns { d, n, rho } => {
                    let g = EquicorrelatedSigns { d, n, rho };
                    (Box::new(g), g.covariance())
                }
                CltDesign::Rademacher { n } => (
                    Box::new(RademacherSteps { n }),
                    GaussianDesign::Independent { sigmas: vec![1.0] },
                ),
                CltDesign::GaussianSteps { d, n, rho } => {
                    let design = GaussianDesign::Equicorrelated { d, rho, sigma: 1.0 };
                    (Box::new(GaussianSteps { design: design.clone(), n }), design)
                }
            };
            let dist = coupling_distance(gen.as_ref(), &reference, cfg.draws, seed);
            CheckRow {
                setting: s.name.clone(),
                statistic: dist,
                target: s.target,
                pass: dist <= s.target,
            }
        })
        .collect()
}

/// Runs the anti-concentration checks of a config.
pub fn anticonc_rows(cfg: &AnticoncConfig, seed: u64) -> ctxboot::Result<Vec<CheckRow>> {
    cfg.settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let design = s.design.build();
            let bound = anticoncentration_bound(design.dim(), design.sigma_bar(), s.t, s.eps)?;
            let maxima = sample_maxima(&design, cfg.draws, derive_seed(seed, i as u64));
            let freq = band_frequency(&maxima, s.t, s.eps);
            Ok(CheckRow {
                setting: s.name.clone(),
                statistic: freq,
                target: bound,
                pass: freq <= bound,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct CheckSummary {
    settings: usize,
    passed: usize,
    all_pass: bool,
}

fn write_checks(name: &str, rows: Vec<CheckRow>, manifest: &Manifest, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut set = ArtifactSet::new(&manifest.hash);
    let passed = rows.iter().filter(|r| r.pass).count();
    let summary = CheckSummary {
        settings: rows.len(),
        passed,
        all_pass: passed == rows.len(),
    };
    set.csv(&format!("{name}.csv"), rows)?;
    set.json(&format!("{name}.json"), summary);
    finish(set, manifest, out)
}

fn verify_clt(a: &VerifyArgs, command: &Command) -> CliResult<Vec<PathBuf>> {
    let (cfg, inputs): (CltConfig, _) = load_config(a.config.as_ref())?;
    if cfg.draws < 100 {
        return Err(CliError::Config("draws must be at least 100".into()));
    }
    let rows = clt_rows(&cfg, a.seed);
    write_checks("clt", rows, &Manifest::new(command, inputs), &a.out)
}

fn verify_anticonc(a: &VerifyArgs, command: &Command) -> CliResult<Vec<PathBuf>> {
    let (cfg, inputs): (AnticoncConfig, _) = load_config(a.config.as_ref())?;
    if cfg.draws < 100 {
        return Err(CliError::Config("draws must be at least 100".into()));
    }
    let rows = anticonc_rows(&cfg, a.seed)?;
    write_checks("anticonc", rows, &Manifest::new(command, inputs), &a.out)
}

fn replay(a: &ReplayArgs) -> CliResult<Vec<PathBuf>> {
    let manifest = Manifest::read(&a.manifest)?;
    for input in &manifest.inputs {
        let now = digest_file(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(CliError::io(&input.path, "input changed since the recorded run"));
        }
    }
    let mut command = manifest.command.clone();
    if matches!(command, Command::Replay(_)) {
        return Err(CliError::Config("a replay manifest cannot be replayed".into()));
    }
    command.set_out(a.out.clone());
    run(&command)
}
