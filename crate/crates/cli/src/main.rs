//! Command-line front end: exponents for covariance pairs or imaged scenes,
//! sorter-angle sweeps with the figure presets, Monte Carlo error decay, and
//! the number-basis oracle check.
//!
//! Every output CSV starts with `#` manifest lines recording the command,
//! the fully resolved parameters, the seed, the tool version, and a
//! timestamp. Only the timestamp varies between identical runs; the body
//! below the comments is deterministic, so reruns are byte-comparable after
//! dropping `#` lines.
//!
//! Exit codes: 0 success, 2 usage error, 3 domain or input error,
//! 4 failed verification check.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use subray::chernoff::{commute_check, qcb_commuting, qcb_general, ChernoffResult};
use subray::cov::{position_covariance, read_cov_csv, BasisTag, CovMatrix, GaussianPsf, OutGrid};
use subray::fock::{acceptance_family, mode_rotation_fock, qcb_fock, two_mode_thermal, uniform_s_grid};
use subray::io::{fmt_real, read_kv_file};
use subray::sim::{estimate_error_exponent, write_sim_csv, MeasurementBasis, SamplingMode, SimConfig};
use subray::source::{load_source_config, IntensityGrid};
use subray::subdiff::{
    fig2_preset, fig3_preset, qcb_subdiff, spade_exponent, spade_optimal, write_sweep_csv,
    ScenarioParams, SweepRow,
};

const OUT_DIR_ENV: &str = "SUBRAY_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "subray",
    version,
    about = "Chernoff exponents for telling two faint sources apart through a diffraction-limited aperture"
)]
struct Cli {
    /// Key-value file that can supply any long flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Cap on worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for output files (else $SUBRAY_OUT_DIR, else `.`).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exponent between two states given as covariance CSVs or scene configs.
    Qcb(QcbArgs),
    /// Closed-form scenario record: xi_Q, best sorter exponent, angle, gap.
    Subdiff(SubdiffArgs),
    /// Gap curves over the sorter angle, with figure presets.
    Sweep(SweepArgs),
    /// Monte Carlo error decay of the photon-counting test.
    Simulate(SimulateArgs),
    /// Check the closed-form engine against the number-basis route.
    OracleCheck(OracleCheckArgs),
}

#[derive(Args)]
struct QcbArgs {
    /// First covariance CSV (pairs with --cov2).
    #[arg(long, value_name = "FILE")]
    cov1: Option<PathBuf>,

    /// Second covariance CSV.
    #[arg(long, value_name = "FILE")]
    cov2: Option<PathBuf>,

    /// First scene config (pairs with --source2 and --sigma).
    #[arg(long, value_name = "FILE")]
    source1: Option<PathBuf>,

    /// Second scene config.
    #[arg(long, value_name = "FILE")]
    source2: Option<PathBuf>,

    /// Point-spread width for the scene route.
    #[arg(long)]
    sigma: Option<f64>,

    /// Detector pixels along x for the scene route.
    #[arg(long)]
    nx: Option<usize>,

    /// Detector pixels along y for the scene route.
    #[arg(long)]
    ny: Option<usize>,

    /// auto | general | commuting.
    #[arg(long)]
    method: Option<String>,

    /// Output file name inside the output directory.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Scenario flags shared by subdiff, sweep, and simulate. Variances are
/// required; frames default to 0, intensity to 1, size parameter to 0.1.
#[derive(Args)]
struct ScenarioArgs {
    /// Principal-frame x variance of the first image.
    #[arg(long)]
    v1x: Option<f64>,

    /// Principal-frame y variance of the first image.
    #[arg(long)]
    v1y: Option<f64>,

    /// Principal-frame x variance of the second image.
    #[arg(long)]
    v2x: Option<f64>,

    /// Principal-frame y variance of the second image.
    #[arg(long)]
    v2y: Option<f64>,

    /// Frame angle of the first image.
    #[arg(long, allow_negative_numbers = true)]
    theta1: Option<f64>,

    /// Frame angle of the second image.
    #[arg(long, allow_negative_numbers = true)]
    theta2: Option<f64>,

    /// Photons per detection window.
    #[arg(long)]
    i0: Option<f64>,

    /// Source-size parameter of the small-image expansion.
    #[arg(long)]
    chi: Option<f64>,
}

#[derive(Args)]
struct SubdiffArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Output file name inside the output directory.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// fig2 | fig3; omit for a custom scenario sweep.
    #[arg(long)]
    preset: Option<String>,

    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Grid points over the sorter angle.
    #[arg(long)]
    points: Option<usize>,

    /// Lower sorter-angle bound for a custom sweep.
    #[arg(long, allow_negative_numbers = true)]
    theta0_min: Option<f64>,

    /// Upper sorter-angle bound for a custom sweep.
    #[arg(long, allow_negative_numbers = true)]
    theta0_max: Option<f64>,

    /// Output file name for a custom sweep; presets name files by curve.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Sorter angle; defaults to the optimal angle for the scenario.
    #[arg(long, allow_negative_numbers = true)]
    theta0: Option<f64>,

    /// Per-hypothesis trials at each sample size.
    #[arg(long)]
    trials: Option<usize>,

    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Comma-separated sample sizes.
    #[arg(long)]
    sizes: Option<String>,

    /// closed | exact.
    #[arg(long)]
    sampling: Option<String>,

    /// Output file name inside the output directory.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleCheckArgs {
    /// Total-photon truncation of the number-basis route.
    #[arg(long)]
    cutoff: Option<usize>,

    /// s-grid points for the brute-force minimization.
    #[arg(long)]
    s_points: Option<usize>,

    /// Acceptance tolerance on the worst family deviation.
    #[arg(long)]
    tol: Option<f64>,

    /// Shift added to every number-basis value; a negative control.
    #[arg(long, allow_negative_numbers = true)]
    perturb: Option<f64>,

    /// Sweep reduced cutoffs and require deviations to shrink.
    #[arg(long)]
    sensitivity: bool,

    /// Comma-separated cutoff ladder for --sensitivity.
    #[arg(long)]
    cutoffs: Option<String>,

    /// Output file name inside the output directory.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// One failure channel per exit code. Library errors keep their own
/// rendering; the other two get a short prefix.
enum Failure {
    Usage(String),
    Lib(subray::Error),
    Check(String),
}

impl From<subray::Error> for Failure {
    fn from(e: subray::Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ov = Overlay::load(cli.config.as_deref())?;
    if let Some(n) = ov.opt_value::<usize>("threads", cli.threads)? {
        if n == 0 {
            return Err(Failure::Usage("thread cap must be positive".into()));
        }
        // a second global-pool init is a no-op; the first cap stays in force
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let dir = resolve_out_dir(&ov, cli.out_dir)?;
    match cli.cmd {
        Cmd::Qcb(a) => run_qcb(&ov, &dir, a),
        Cmd::Subdiff(a) => run_subdiff(&ov, &dir, a),
        Cmd::Sweep(a) => run_sweep(&ov, &dir, a),
        Cmd::Simulate(a) => run_simulate(&ov, &dir, a),
        Cmd::OracleCheck(a) => run_oracle_check(&ov, &dir, a),
    }
}

/// Config-file layer under the explicit flags. Keys are the long flag
/// names; a flag that was given on the command line always wins.
struct Overlay {
    map: BTreeMap<String, String>,
    origin: PathBuf,
}

impl Overlay {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            for (k, v) in read_kv_file(p)? {
                map.insert(k, v);
            }
        }
        Ok(Overlay {
            map,
            origin: path.map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    fn opt_value<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Failure::Lib(subray::Error::parse(
                    format!("{}: key `{key}`", self.origin.display()),
                    format!("invalid value `{raw}`"),
                ))
            }),
        }
    }

    fn value<T: FromStr>(&self, key: &str, flag: Option<T>, default: Option<T>) -> Result<T, Failure> {
        match self.opt_value(key, flag)? {
            Some(v) => Ok(v),
            None => default.ok_or_else(|| Failure::Usage(format!("missing value for `--{key}`"))),
        }
    }

    fn path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.map.get(key).map(PathBuf::from))
    }

    fn flag(&self, key: &str, set: bool) -> Result<bool, Failure> {
        if set {
            return Ok(true);
        }
        match self.map.get(key).map(String::as_str) {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(other) => Err(Failure::Lib(subray::Error::parse(
                format!("{}: key `{key}`", self.origin.display()),
                format!("expected a boolean, got `{other}`"),
            ))),
        }
    }
}

fn resolve_out_dir(ov: &Overlay, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = ov
        .path("out-dir", flag)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(subray::Error::from)?;
    Ok(dir)
}

/// Manifest comment lines for an output file. The parameter echo is the
/// resolved configuration, not the raw argv, so a run started from a config
/// file is reproducible from the artifact alone.
fn manifest(command: &str, params: &[(&str, String)], seed: Option<u64>) -> Vec<String> {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let echo: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    vec![
        format!("command: {command}"),
        format!("params: {}", echo.join(" ")),
        format!("seed: {}", seed.map_or_else(|| "none".to_string(), |s| s.to_string())),
        format!("version: {}", env!("CARGO_PKG_VERSION")),
        format!("timestamp: {ts}"),
    ]
}

fn write_csv(
    path: &Path,
    comments: &[String],
    header: &str,
    rows: &[Vec<String>],
) -> Result<(), Failure> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(subray::Error::from)?;
    Ok(())
}

fn resolve_scenario(ov: &Overlay, a: &ScenarioArgs) -> Result<ScenarioParams, Failure> {
    Ok(ScenarioParams {
        v1x: ov.value("v1x", a.v1x, None)?,
        v1y: ov.value("v1y", a.v1y, None)?,
        v2x: ov.value("v2x", a.v2x, None)?,
        v2y: ov.value("v2y", a.v2y, None)?,
        theta1: ov.value("theta1", a.theta1, Some(0.0))?,
        theta2: ov.value("theta2", a.theta2, Some(0.0))?,
        i0: ov.value("i0", a.i0, Some(1.0))?,
        chi: ov.value("chi", a.chi, Some(0.1))?,
    })
}

fn scenario_echo(p: &ScenarioParams) -> Vec<(&'static str, String)> {
    vec![
        ("v1x", fmt_real(p.v1x)),
        ("v1y", fmt_real(p.v1y)),
        ("v2x", fmt_real(p.v2x)),
        ("v2y", fmt_real(p.v2y)),
        ("theta1", fmt_real(p.theta1)),
        ("theta2", fmt_real(p.theta2)),
        ("i0", fmt_real(p.i0)),
        ("chi", fmt_real(p.chi)),
    ]
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Failure> {
    let mut out = Vec::new();
    for item in raw.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        out.push(
            item.parse()
                .map_err(|_| Failure::Usage(format!("invalid {what} `{item}`")))?,
        );
    }
    if out.is_empty() {
        return Err(Failure::Usage(format!("empty {what} list")));
    }
    Ok(out)
}

enum Method {
    Auto,
    General,
    Commuting,
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    match s {
        "auto" => Ok(Method::Auto),
        "general" => Ok(Method::General),
        "commuting" => Ok(Method::Commuting),
        other => Err(Failure::Usage(format!("unknown method `{other}`"))),
    }
}

/// Shared detector grid for a scene pair: union of the two boxes padded by
/// five psf widths, so both covariances live on the same pixel modes.
fn union_grid(
    a: &IntensityGrid,
    b: &IntensityGrid,
    psf: &GaussianPsf,
    nx: usize,
    ny: usize,
) -> Result<OutGrid, subray::Error> {
    let pad = 5.0 * psf.sigma;
    let x0 = a.x_coords[0].min(b.x_coords[0]) - pad;
    let x1 = a.x_coords.last().unwrap().max(*b.x_coords.last().unwrap()) + pad;
    let y0 = a.y_coords[0].min(b.y_coords[0]) - pad;
    let y1 = a.y_coords.last().unwrap().max(*b.y_coords.last().unwrap()) + pad;
    OutGrid::new(x0, x1, nx, y0, y1, ny)
}

fn run_qcb(ov: &Overlay, dir: &Path, a: QcbArgs) -> Result<(), Failure> {
    let method_name = ov.value("method", a.method, Some("auto".into()))?;
    let method = parse_method(&method_name)?;
    let out = ov.path("out", a.out).unwrap_or_else(|| PathBuf::from("qcb.csv"));

    let cov1 = ov.path("cov1", a.cov1);
    let cov2 = ov.path("cov2", a.cov2);
    let source1 = ov.path("source1", a.source1);
    let source2 = ov.path("source2", a.source2);
    let (g1, g2, mut params) = match (cov1, cov2, source1, source2) {
        (Some(c1), Some(c2), None, None) => {
            let g1 = read_cov_csv(&c1)?;
            let g2 = read_cov_csv(&c2)?;
            let params = vec![
                ("cov1", c1.display().to_string()),
                ("cov2", c2.display().to_string()),
            ];
            (g1, g2, params)
        }
        (None, None, Some(s1), Some(s2)) => {
            let sigma = ov.value("sigma", a.sigma, None)?;
            let nx = ov.value("nx", a.nx, Some(16))?;
            let ny = ov.value("ny", a.ny, Some(16))?;
            let src1 = load_source_config(&s1)?;
            let src2 = load_source_config(&s2)?;
            let psf = GaussianPsf::new(sigma)?;
            let grid = union_grid(&src1, &src2, &psf, nx, ny)?;
            let g1 = position_covariance(&src1, &psf, &grid)?;
            let g2 = position_covariance(&src2, &psf, &grid)?;
            let params = vec![
                ("source1", s1.display().to_string()),
                ("source2", s2.display().to_string()),
                ("sigma", fmt_real(sigma)),
                ("nx", nx.to_string()),
                ("ny", ny.to_string()),
            ];
            (g1, g2, params)
        }
        _ => {
            return Err(Failure::Usage(
                "pass either --cov1/--cov2 or --source1/--source2 with --sigma".into(),
            ))
        }
    };
    params.push(("method", method_name.clone()));

    let r: ChernoffResult = match method {
        Method::General => qcb_general(&g1, &g2)?,
        Method::Commuting => qcb_commuting(&g1, &g2)?,
        Method::Auto => {
            if commute_check(&g1, &g2, 1e-8)? {
                qcb_commuting(&g1, &g2)?
            } else {
                qcb_general(&g1, &g2)?
            }
        }
    };

    let path = dir.join(out);
    write_csv(
        &path,
        &manifest("qcb", &params, None),
        "exponent,s_star,method",
        &[vec![
            fmt_real(r.exponent),
            fmt_real(r.s_star),
            r.method.as_str().to_string(),
        ]],
    )?;
    println!("exponent = {}", fmt_real(r.exponent));
    println!("s_star = {}", fmt_real(r.s_star));
    println!("method = {}", r.method.as_str());
    println!("wrote {}", path.display());
    Ok(())
}

fn run_subdiff(ov: &Overlay, dir: &Path, a: SubdiffArgs) -> Result<(), Failure> {
    let p = resolve_scenario(ov, &a.scenario)?;
    // this command's contract treats bad parameters as a usage error
    p.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out = ov
        .path("out", a.out)
        .unwrap_or_else(|| PathBuf::from("subdiff.csv"));

    let q = qcb_subdiff(&p)?;
    let m = spade_optimal(&p)?;
    let theta0 = m.theta0_star.unwrap_or(f64::NAN);
    let gap = if q.exponent > 0.0 {
        (q.exponent - m.exponent) / q.exponent
    } else {
        0.0
    };

    let path = dir.join(out);
    write_csv(
        &path,
        &manifest("subdiff", &scenario_echo(&p), None),
        "xi_q,xi_spade,theta0_star,gap",
        &[vec![
            fmt_real(q.exponent),
            fmt_real(m.exponent),
            fmt_real(theta0),
            fmt_real(gap),
        ]],
    )?;
    println!("xi_q = {}", fmt_real(q.exponent));
    println!("xi_spade = {}", fmt_real(m.exponent));
    println!("theta0_star = {}", fmt_real(theta0));
    println!("gap = {}", fmt_real(gap));
    println!("wrote {}", path.display());
    Ok(())
}

fn run_sweep(ov: &Overlay, dir: &Path, mut a: SweepArgs) -> Result<(), Failure> {
    let preset = ov.opt_value::<String>("preset", a.preset.take())?;
    let points = ov.value("points", a.points, Some(361))?;
    if points == 0 {
        return Err(Failure::Usage("empty sorter-angle grid".into()));
    }
    match preset.as_deref() {
        Some("fig2") => run_sweep_preset(dir, fig2_preset(), points),
        Some("fig3") => run_sweep_preset(dir, fig3_preset(), points),
        Some(other) => Err(Failure::Usage(format!("unknown preset `{other}`"))),
        None => run_sweep_custom(ov, dir, a, points),
    }
}

fn run_sweep_preset(
    dir: &Path,
    curves: Vec<(String, ScenarioParams)>,
    points: usize,
) -> Result<(), Failure> {
    if points < 2 {
        return Err(Failure::Usage("preset sweeps need at least 2 grid points".into()));
    }
    let swept = curves
        .par_iter()
        .map(|(label, p)| subray::subdiff::sweep_theta0(p, points).map(|rows| (label, p, rows)))
        .collect::<Result<Vec<_>, subray::Error>>()?;
    for (label, p, rows) in swept {
        let mut params = scenario_echo(p);
        params.push(("points", points.to_string()));
        let path = dir.join(format!("{label}.csv"));
        write_sweep_csv(&path, &rows, &manifest("sweep", &params, None))?;
        println!("wrote {} ({} points)", path.display(), rows.len());
    }
    Ok(())
}

fn run_sweep_custom(ov: &Overlay, dir: &Path, a: SweepArgs, points: usize) -> Result<(), Failure> {
    let p = resolve_scenario(ov, &a.scenario)?;
    let lo = ov.value("theta0-min", a.theta0_min, Some(0.0))?;
    let hi = ov.value("theta0-max", a.theta0_max, Some(FRAC_PI_2))?;
    if !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Failure::Usage("sorter-angle bounds are not an interval".into()));
    }
    if points == 1 && hi != lo {
        return Err(Failure::Usage(
            "a 1-point grid needs --theta0-min equal to --theta0-max".into(),
        ));
    }
    if points > 1 && hi == lo {
        return Err(Failure::Usage("grid bounds coincide; use --points 1".into()));
    }
    let out = ov
        .path("out", a.out)
        .unwrap_or_else(|| PathBuf::from("sweep_custom.csv"));

    let xi_q = qcb_subdiff(&p)?.exponent;
    if !(xi_q > 0.0) {
        return Err(subray::Error::domain(
            "hypotheses are indistinguishable; sweep gap is undefined",
        )
        .into());
    }
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let theta0 = if i == points - 1 { hi } else { lo + step * i as f64 };
        let r = spade_exponent(&p, theta0)?;
        rows.push(SweepRow {
            sweep_variable: p.theta1 + p.theta2 - 2.0 * theta0,
            xi_q,
            xi_spade: r.exponent,
            gap: (xi_q - r.exponent) / xi_q,
            s_star: r.s_star,
            theta0,
        });
    }

    let mut params = scenario_echo(&p);
    params.push(("points", points.to_string()));
    params.push(("theta0-min", fmt_real(lo)));
    params.push(("theta0-max", fmt_real(hi)));
    let path = dir.join(out);
    write_sweep_csv(&path, &rows, &manifest("sweep", &params, None))?;
    println!("wrote {} ({} points)", path.display(), rows.len());
    Ok(())
}

fn run_simulate(ov: &Overlay, dir: &Path, a: SimulateArgs) -> Result<(), Failure> {
    let p = resolve_scenario(ov, &a.scenario)?;
    let theta0 = match ov.opt_value::<f64>("theta0", a.theta0)? {
        Some(t) => t,
        None => spade_optimal(&p)?.theta0_star.unwrap_or(0.0),
    };
    let trials = ov.value("trials", a.trials, Some(200_000))?;
    let seed = ov.value("seed", a.seed, Some(1))?;
    let sizes_raw = ov.value("sizes", a.sizes, Some("200,400,800,1600".into()))?;
    let sizes: Vec<usize> = parse_list(&sizes_raw, "sample size")?;
    let sampling_name = ov.value("sampling", a.sampling, Some("closed".into()))?;
    let sampling = match sampling_name.as_str() {
        "closed" => SamplingMode::ClosedFormProbs,
        "exact" => SamplingMode::PFunctionExact,
        other => return Err(Failure::Usage(format!("unknown sampling mode `{other}`"))),
    };
    let out = ov.path("out", a.out).unwrap_or_else(|| PathBuf::from("sim.csv"));

    let cfg = SimConfig {
        frames_per_trial: 0,
        trials,
        seed,
        sampling_mode: sampling,
    };
    let fit = estimate_error_exponent(&p, &MeasurementBasis { theta0 }, &cfg, &sizes)?;

    let mut params = scenario_echo(&p);
    params.push(("theta0", fmt_real(theta0)));
    params.push(("trials", trials.to_string()));
    params.push(("sizes", sizes_raw.clone()));
    params.push(("sampling", sampling_name.clone()));
    let path = dir.join(out);
    write_sim_csv(&path, &fit, &cfg, &manifest("simulate", &params, Some(seed)))?;

    for r in &fit.rows {
        println!(
            "N = {:>7}  trials = {}  errors = {}+{}  p_hat = {}",
            r.n,
            r.trials,
            r.errors_h1,
            r.errors_h2,
            fmt_real(r.p_hat)
        );
    }
    println!("slope = {} +- {}", fmt_real(fit.slope), fmt_real(fit.slope_stderr));
    println!("raw_slope = {}", fmt_real(fit.raw_slope));
    println!("xi_theory = {}", fmt_real(fit.xi_theory));
    println!("agreement = {}", fmt_real(fit.agreement()));
    println!("wrote {}", path.display());
    Ok(())
}

/// Two-mode covariance on the first-order mode pair.
fn hg_pair_cov(entries: DMatrix<f64>) -> CovMatrix {
    CovMatrix {
        i0: entries.trace(),
        basis: BasisTag::HermiteGauss {
            pairs: vec![(1, 0), (0, 1)],
        },
        psd_slack: 0.0,
        chi: None,
        entries,
    }
}

fn closed_exponent(m1: f64, m2: f64, angle: f64) -> Result<f64, subray::Error> {
    let g1 = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[m1, m2]));
    let (sin, cos) = angle.sin_cos();
    let rot = DMatrix::from_row_slice(2, 2, &[cos, -sin, sin, cos]);
    let g2 = &rot * &g1 * rot.transpose();
    Ok(qcb_general(&hg_pair_cov(g1), &hg_pair_cov(g2))?.exponent)
}

fn number_basis_exponent(
    m1: f64,
    m2: f64,
    angle: f64,
    cutoff: usize,
    s_grid: &[f64],
) -> Result<f64, subray::Error> {
    let rho1 = two_mode_thermal(m1, m2, cutoff)?;
    let u = mode_rotation_fock(angle, cutoff);
    let rho2 = &u * &rho1 * u.transpose();
    Ok(qcb_fock(&rho1, &rho2, s_grid)?.0)
}

fn run_oracle_check(ov: &Overlay, dir: &Path, a: OracleCheckArgs) -> Result<(), Failure> {
    let cutoff = ov.value("cutoff", a.cutoff, Some(25))?;
    let s_points = ov.value("s-points", a.s_points, Some(1001))?;
    let tol = ov.value("tol", a.tol, Some(1e-5))?;
    let perturb = ov.opt_value::<f64>("perturb", a.perturb)?.unwrap_or(0.0);
    let sensitivity = ov.flag("sensitivity", a.sensitivity)?;

    let family = acceptance_family();
    let closed = family
        .par_iter()
        .map(|&(m1, m2, angle)| closed_exponent(m1, m2, angle))
        .collect::<Result<Vec<_>, _>>()?;
    let s_grid = uniform_s_grid(s_points);

    let mut params = vec![
        ("cutoff", cutoff.to_string()),
        ("s-points", s_points.to_string()),
        ("tol", fmt_real(tol)),
        ("perturb", fmt_real(perturb)),
    ];

    if sensitivity {
        let ladder_raw = ov.value("cutoffs", a.cutoffs, Some("8,12,16,20".into()))?;
        let mut ladder: Vec<usize> = parse_list(&ladder_raw, "cutoff")?;
        ladder.push(cutoff);
        ladder.sort_unstable();
        ladder.dedup();
        params.push(("cutoffs", ladder_raw.clone()));

        let mut rows = Vec::new();
        let mut devs = Vec::new();
        for &c in &ladder {
            let worst = family
                .par_iter()
                .zip(&closed)
                .map(|(&(m1, m2, angle), &cl)| {
                    number_basis_exponent(m1, m2, angle, c, &s_grid)
                        .map(|b| (cl - (b + perturb)).abs())
                })
                .try_reduce(|| 0.0, |x, y| Ok(x.max(y)))?;
            println!("cutoff {c:>3}: max deviation = {worst:.3e}");
            rows.push(vec![c.to_string(), fmt_real(worst)]);
            devs.push(worst);
        }
        let path = dir.join(ov.path("out", a.out).unwrap_or_else(|| PathBuf::from("oracle_check.csv")));
        write_csv(
            &path,
            &manifest("oracle-check", &params, None),
            "cutoff,max_deviation",
            &rows,
        )?;
        println!("wrote {}", path.display());

        let monotone = devs.windows(2).all(|w| w[1] <= w[0]);
        let converged = *devs.last().unwrap() <= tol;
        if !monotone {
            return Err(Failure::Check(
                "deviations do not shrink monotonically with the cutoff".into(),
            ));
        }
        if !converged {
            return Err(Failure::Check(format!(
                "deviation {:.3e} at cutoff {} exceeds {tol:.1e}",
                devs.last().unwrap(),
                ladder.last().unwrap()
            )));
        }
        println!("PASS");
        return Ok(());
    }

    let checked = family
        .par_iter()
        .zip(&closed)
        .map(|(&(m1, m2, angle), &cl)| {
            number_basis_exponent(m1, m2, angle, cutoff, &s_grid).map(|b| (b + perturb, cl))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    let mut worst = (0usize, 0.0f64);
    for (i, &(brute, cl)) in checked.iter().enumerate() {
        let (m1, m2, angle) = family[i];
        let dev = (cl - brute).abs();
        println!(
            "mean1 = {m1:.2}  mean2 = {m2:.2}  angle = {angle:.4}  deviation = {dev:.3e}"
        );
        rows.push(vec![
            fmt_real(m1),
            fmt_real(m2),
            fmt_real(angle),
            fmt_real(cl),
            fmt_real(brute),
            fmt_real(dev),
        ]);
        if dev > worst.1 {
            worst = (i, dev);
        }
    }
    let path = dir.join(ov.path("out", a.out).unwrap_or_else(|| PathBuf::from("oracle_check.csv")));
    write_csv(
        &path,
        &manifest("oracle-check", &params, None),
        "mean1,mean2,angle,closed,number_basis,deviation",
        &rows,
    )?;
    println!("max deviation = {:.3e} (tolerance {tol:.1e})", worst.1);
    println!("wrote {}", path.display());
    if worst.1 > tol {
        let (m1, m2, angle) = family[worst.0];
        return Err(Failure::Check(format!(
            "deviation {:.3e} at mean1={m1} mean2={m2} angle={angle} exceeds {tol:.1e}",
            worst.1
        )));
    }
    println!("PASS");
    Ok(())
}
