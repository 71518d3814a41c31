//! Command-line front end.
//!
//! Every command resolves an [`ExperimentConfig`] from defaults, an optional
//! JSON config file, and explicit flags (in increasing precedence), then
//! writes CSV/JSON artifacts into the output directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bep::{sweep_csv, Bep, BepSolution, Space};
use crate::error::{Error, Result};
use crate::experiments::{
    builtin_magnetization, edge_amplitude, estimate_moment, noisy_estimate_bound, reproduce_tables,
    NoiseShape, NoiseSpec, TABLE_AXIS,
};
use crate::geometry::{Geometry, VerticalAxis};
use crate::operators::{
    forward_coeffs, uniform_grid, FieldSamples, Magnetization, Target, DEFAULT_SAMPLES,
};
use crate::spectral::{gram_assemble, rhs_vector, GramCache, GramMatrix, GramOptions};

/// Reference truncation order.
pub const DEFAULT_ORDER: usize = 250;

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub order: usize,
    pub space: Space,
    pub lambda: Option<f64>,
    pub target_m: Option<f64>,
    pub magnetization: Option<String>,
    pub noise: Option<NoiseSpec>,
    pub output: PathBuf,
    pub seed: u64,
    pub drop_zero_mode: bool,
    pub use_cache: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::reference(),
            order: DEFAULT_ORDER,
            space: Space::L2,
            lambda: None,
            target_m: None,
            magnetization: None,
            noise: None,
            output: PathBuf::from("."),
            seed: 0,
            drop_zero_mode: false,
            use_cache: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.order == 0 {
            return Err(Error::Parse("order must be at least 1".into()));
        }
        if self.lambda.is_some() && self.target_m.is_some() {
            return Err(Error::Parse(
                "give either lambda or target M, not both".into(),
            ));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Parse(format!("lambda must be positive, got {l}")));
            }
        }
        if let Some(m) = self.target_m {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Parse(format!("target M must be positive, got {m}")));
            }
        }
        Ok(())
    }

    /// Multiplier used when neither `λ` nor `M` is given.
    pub fn default_lambda(&self) -> f64 {
        match self.space {
            Space::L2 => 1e-5,
            Space::W012 => 1e-8,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "netmoment",
    version,
    about = "Net-moment estimation from planar field data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for e₁ and e₂ over a list of multipliers and tabulate M and residual.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated multipliers.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        lambdas: Vec<f64>,
    },
    /// Solve for φ₁, φ₂ and write coefficients plus sampled curves.
    Estimator {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Tabulate the field of a magnetization on K.
    Forward {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rerun the published moment tables and compare.
    ReproduceTables {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Eigenvalues of the Gram matrix.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// "s,q,h".
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    /// l2 or w012.
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long, conflicts_with = "target_m")]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub target_m: Option<f64>,
    /// Builtin name or path to a JSON magnetization.
    #[arg(long)]
    pub magnetization: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Assemble the Gram matrix even if a cached copy exists.
    #[arg(long)]
    pub no_cache: bool,
    /// up or down.
    #[arg(long)]
    pub axis: Option<String>,
    /// Exclude the constant mode from W012 solves.
    #[arg(long)]
    pub drop_zero_mode: bool,
    /// L²(K) norm of additive noise.
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// gaussian or mode:N.
    #[arg(long)]
    pub noise_shape: Option<String>,
}

fn parse_noise_shape(s: &str) -> Result<NoiseShape> {
    if s == "gaussian" {
        return Ok(NoiseShape::GaussianGrid);
    }
    if let Some(n) = s.strip_prefix("mode:") {
        let n = n
            .parse()
            .map_err(|_| Error::Parse(format!("bad mode index in '{s}'")))?;
        return Ok(NoiseShape::SingleFrequency { n });
    }
    Err(Error::Parse(format!(
        "unknown noise shape '{s}' (expected gaussian|mode:N)"
    )))
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::read(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(g) = &self.geometry {
            let axis = cfg.geometry.axis;
            cfg.geometry = Geometry::parse(g)?.with_axis(axis);
        }
        if let Some(a) = &self.axis {
            cfg.geometry.axis = VerticalAxis::parse(a)?;
        }
        if let Some(n) = self.order {
            cfg.order = n;
        }
        if let Some(s) = &self.space {
            cfg.space = Space::parse(s)?;
        }
        if self.lambda.is_some() {
            cfg.lambda = self.lambda;
            cfg.target_m = None;
        }
        if self.target_m.is_some() {
            cfg.target_m = self.target_m;
            cfg.lambda = None;
        }
        if let Some(m) = &self.magnetization {
            cfg.magnetization = Some(m.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if self.no_cache {
            cfg.use_cache = false;
        }
        if self.drop_zero_mode {
            cfg.drop_zero_mode = true;
        }
        if self.noise_level.is_some() || self.noise_shape.is_some() {
            let shape = match &self.noise_shape {
                Some(s) => parse_noise_shape(s)?,
                None => cfg.noise.map_or(NoiseShape::GaussianGrid, |n| n.shape),
            };
            let level = self
                .noise_level
                .or(cfg.noise.map(|n| n.level))
                .unwrap_or(0.0);
            cfg.noise = Some(NoiseSpec {
                level,
                seed: cfg.seed,
                shape,
            });
        }
        if let Some(n) = cfg.noise.as_mut() {
            n.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Builtin name or JSON file.
pub fn resolve_magnetization(spec: &str) -> Result<Magnetization> {
    match builtin_magnetization(spec) {
        Ok(m) => Ok(m),
        Err(_) if Path::new(spec).exists() => Magnetization::read(Path::new(spec)),
        Err(e) => Err(e),
    }
}

fn gram_for(cfg: &ExperimentConfig) -> Result<GramMatrix> {
    let t = Instant::now();
    let opts = GramOptions::default();
    let g = if cfg.use_cache {
        GramCache::from_env().get_or_assemble(&cfg.geometry, cfg.order, &opts)?
    } else {
        gram_assemble(&cfg.geometry, cfg.order, &opts)?
    };
    eprintln!(
        "gram: order {} grid {} in {:.3}s{}",
        g.order(),
        g.key().grid,
        t.elapsed().as_secs_f64(),
        if cfg.use_cache {
            ""
        } else {
            " (cache disabled)"
        }
    );
    Ok(g)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, contents)?;
    Ok(p)
}

fn bep_for<'a>(cfg: &ExperimentConfig, gram: &'a GramMatrix, target: Target) -> Result<Bep<'a>> {
    let r = rhs_vector(&cfg.geometry, cfg.order, &target)?;
    Ok(
        Bep::new(gram, r, target.norm_sq(&cfg.geometry)?, cfg.space)?
            .with_zero_mode_dropped(cfg.drop_zero_mode),
    )
}

fn cmd_sweep(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Parse(
            "sweep needs a non-empty --lambdas list".into(),
        ));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Parse(format!("lambda must be positive, got {l}")));
    }
    let gram = gram_for(cfg)?;
    let mut out = String::from("target,lambda,M,residual\n");
    let mut failures = Vec::new();
    for t in [Target::E1, Target::E2] {
        let label = t.label();
        let rows = bep_for(cfg, &gram, t)?.sweep(lambdas);
        for line in sweep_csv(&rows).lines().skip(1) {
            out.push_str(&format!("{label},{line}\n"));
        }
        failures.extend(
            rows.into_iter()
                .filter_map(|r| r.error.map(|e| (label, r.lambda, e))),
        );
    }
    let p = write(&cfg.output, "sweep.csv", &out)?;
    eprintln!("wrote {}", p.display());
    if let Some((label, lambda, e)) = failures.into_iter().next() {
        return Err(Error::Solver(format!("{label} at lambda={lambda:e}: {e}")));
    }
    Ok(())
}

fn solve_one(cfg: &ExperimentConfig, gram: &GramMatrix, target: Target) -> Result<BepSolution> {
    let bep = bep_for(cfg, gram, target)?;
    match cfg.target_m {
        Some(m) => bep.solve_for_m(m),
        None => bep.solve(cfg.lambda.unwrap_or_else(|| cfg.default_lambda())),
    }
}

fn phi_series(sol: &BepSolution) -> (String, f64) {
    let q = sol.geometry.q;
    let mut s = String::from("x,phi\n");
    let mut worst_im: f64 = 0.0;
    for x in uniform_grid(-q, q, DEFAULT_SAMPLES + 1) {
        let v = sol.coeffs.eval(x, q);
        worst_im = worst_im.max(v.im.abs());
        s.push_str(&format!("{x:.16e},{:.16e}\n", v.re));
    }
    (s, worst_im)
}

fn cmd_estimator(cfg: &ExperimentConfig) -> Result<()> {
    let gram = gram_for(cfg)?;
    let (a, b) = rayon::join(
        || solve_one(cfg, &gram, Target::E1),
        || solve_one(cfg, &gram, Target::E2),
    );
    let sols = [a?, b?];
    let q = cfg.geometry.q;
    for (i, sol) in sols.iter().enumerate() {
        let idx = i + 1;
        write(&cfg.output, &format!("phi_{idx}.json"), &sol.to_json()?)?;
        let (csv, im) = phi_series(sol);
        write(&cfg.output, &format!("phi_{idx}.csv"), &csv)?;
        println!(
            "phi_{idx}: space={} lambda={:.6e} M={:.6e} residual={:.6e} |phi(-q)|={:.6e} |phi(q)|={:.6e} edge5%={:.6e} max|Im|={:.2e}",
            sol.space,
            sol.lambda,
            sol.m_achieved,
            sol.residual,
            sol.eval(-q).abs(),
            sol.eval(q).abs(),
            edge_amplitude(sol, 0.05, 400),
            im
        );
    }
    if let Some(name) = &cfg.magnetization {
        let m = resolve_magnetization(name)?;
        let data = forward_coeffs(&m, &cfg.geometry, cfg.order)?;
        let (m1, m2) = m.moments();
        let mut report = serde_json::Map::new();
        for (sol, truth, t, key) in [
            (&sols[0], m1, Target::E1, "m1"),
            (&sols[1], m2, Target::E2, "m2"),
        ] {
            let est = estimate_moment(&data, sol)?;
            let mut entry = serde_json::json!({ "true": truth, "estimate": est });
            if let Some(noise) = &cfg.noise {
                let nb = noisy_estimate_bound(&m, &cfg.geometry, sol, noise, t)?;
                entry["noisy_observed_error"] = nb.observed.into();
                entry["noisy_bound"] = nb.bound.into();
            }
            println!("{key}: true={truth:.6e} estimate={est:.6e}");
            report.insert(key.into(), entry);
        }
        write(
            &cfg.output,
            "estimate.json",
            &serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(())
}

fn cmd_forward(cfg: &ExperimentConfig) -> Result<()> {
    let name = cfg.magnetization.as_deref().unwrap_or("constant");
    let m = resolve_magnetization(name)?;
    let samples = FieldSamples::from_magnetization(&m, &cfg.geometry, DEFAULT_SAMPLES + 1)?;
    let mut field = String::from("x,b2\n");
    for (x, v) in samples.grid().iter().zip(&samples.values) {
        field.push_str(&format!("{x:.16e},{v:.16e}\n"));
    }
    write(&cfg.output, "field.csv", &field)?;
    write(&cfg.output, "field.json", &samples.to_json()?)?;

    let s = cfg.geometry.s;
    let mut xs = vec![-s, s];
    xs.extend(m.breakpoints());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut stair = String::from("x,m1,m2\n");
    for w in xs.windows(2) {
        let (a, b) = m.value_at(0.5 * (w[0] + w[1]));
        stair.push_str(&format!(
            "{:.16e},{a:.16e},{b:.16e}\n{:.16e},{a:.16e},{b:.16e}\n",
            w[0], w[1]
        ));
    }
    write(&cfg.output, "magnetization.csv", &stair)?;
    let (m1, m2) = m.moments();
    println!(
        "{name}: <m1>={m1:.6e} <m2>={m2:.6e} samples={}",
        samples.len()
    );
    Ok(())
}

fn cmd_reproduce(cfg: &ExperimentConfig, axis_given: bool) -> Result<()> {
    let mut cfg = cfg.clone();
    if !axis_given {
        cfg.geometry.axis = TABLE_AXIS;
    }
    let gram = gram_for(&cfg)?;

    let mut t1 = String::from("space,lambda,M1,M2\n");
    for (space, lams) in [(Space::L2, [1e-3, 1e-5]), (Space::W012, [1e-8, 1e-9])] {
        let c = ExperimentConfig {
            space,
            ..cfg.clone()
        };
        let e1 = bep_for(&c, &gram, Target::E1)?;
        let e2 = bep_for(&c, &gram, Target::E2)?;
        for l in lams {
            t1.push_str(&format!(
                "{space},{l:.16e},{:.16e},{:.16e}\n",
                e1.constraint_at(l)?,
                e2.constraint_at(l)?
            ));
        }
    }
    write(&cfg.output, "table1.csv", &t1)?;

    let run = reproduce_tables(&gram, &cfg.geometry, cfg.drop_zero_mode)?;
    for t in 2..=5u8 {
        write(&cfg.output, &format!("table{t}.csv"), &run.table_csv(t))?;
    }
    write(
        &cfg.output,
        "comparison.json",
        &serde_json::to_string_pretty(&run)?,
    )?;
    for r in &run.rows {
        println!(
            "table {} {:<13} {:<4} m1e={:+.5} (published {:+.5}) m2e={:+.5} (published {:+.5}) {}{}",
            r.table,
            r.magnetization,
            r.space.label(),
            r.computed.estimated.0,
            r.published.m1e,
            r.computed.estimated.1,
            r.published.m2e,
            if r.pass { "PASS" } else { "FAIL" },
            r.flag
                .as_deref()
                .map(|f| format!(" [{f}]"))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<()> {
    let gram = gram_for(cfg)?;
    let ev = crate::bep::spectral_decay(&gram);
    let mut s = String::from("index,eigenvalue\n");
    for (i, v) in ev.iter().enumerate() {
        s.push_str(&format!("{},{v:.16e}\n", i + 1));
    }
    write(&cfg.output, "spectrum.csv", &s)?;
    if ev.len() >= 50 {
        println!("lambda_50/lambda_1 = {:.6e}", ev[49] / ev[0]);
    }
    println!(
        "lambda_1 = {:.6e}, lambda_min = {:.6e}",
        ev[0],
        ev[ev.len() - 1]
    );
    Ok(())
}

/// Dispatches a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { common, lambdas } => cmd_sweep(&common.resolve()?, &lambdas),
        Command::Estimator { common } => cmd_estimator(&common.resolve()?),
        Command::Forward { common } => cmd_forward(&common.resolve()?),
        Command::ReproduceTables { common } => {
            // The tables use the flipped axis unless one is asked for explicitly.
            let axis_given = common.axis.is_some();
            cmd_reproduce(&common.resolve()?, axis_given)
        }
        Command::Spectrum { common } => cmd_spectrum(&common.resolve()?),
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        match e {
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

/// Parses `args`, runs, and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("netmoment").chain(args.iter().copied()))
    }

    #[test]
    fn defaults_are_reference() {
        let cfg = CommonArgs::default().resolve().unwrap();
        assert_eq!(cfg.geometry, Geometry::reference());
        assert_eq!(cfg.order, 250);
        assert_eq!(cfg.space, Space::L2);
        assert_eq!(cfg.default_lambda(), 1e-5);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"order": 40, "space": "w012", "lambda": 1e-6}"#).unwrap();
        let args = CommonArgs {
            config: Some(p),
            order: Some(32),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.order, 32);
        assert_eq!(cfg.space, Space::W012);
        assert_eq!(cfg.lambda, Some(1e-6));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(parse(&["sweep", "--bogus"]).is_err());
        assert!(parse(&["estimator", "--lambda", "1", "--target-m", "2"]).is_err());
        let bad = CommonArgs {
            space: Some("h2".into()),
            ..Default::default()
        };
        assert!(matches!(bad.resolve(), Err(Error::Parse(_))));
        let zero = CommonArgs {
            order: Some(0),
            ..Default::default()
        };
        assert!(zero.resolve().is_err());
    }

    #[test]
    fn noise_flags() {
        let a = CommonArgs {
            noise_level: Some(0.1),
            noise_shape: Some("mode:4".into()),
            seed: Some(9),
            ..Default::default()
        };
        let n = a.resolve().unwrap().noise.unwrap();
        assert_eq!(n.shape, NoiseShape::SingleFrequency { n: 4 });
        assert_eq!((n.level, n.seed), (0.1, 9));
        assert!(parse_noise_shape("pink").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
        assert_eq!(exit_code(&Error::Solver("x".into())), 3);
        assert_eq!(main_with(["netmoment", "sweep", "--nope"]), 2);
        assert_eq!(main_with(["netmoment", "--help"]), 0);
    }
}
