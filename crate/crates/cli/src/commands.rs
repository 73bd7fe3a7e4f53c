use std::fmt::Write as _;

use serde::Serialize;

use aaa_core::baseline::{self, ComparisonParams};
use aaa_core::equivocation::{self, EXACT_CAP};
use aaa_core::keygen;
use aaa_core::leakage;
use aaa_core::rng::derive_seed;
use aaa_core::sources::{Erasure, LeakDist, MarkovParams};

use crate::config::{ExperimentConfig, Format, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Closed-form equivocation surfaces over an (alpha, mu) grid.
    Sweep,
    /// Closed forms and Monte Carlo against exact enumeration.
    Verify,
    /// Monte Carlo equivocation across a ladder of packet counts.
    Theorem,
    /// Probability that partial leakage reaches full rank.
    Leakage,
    /// AAA against reciprocal-channel key generation.
    Compare,
    /// End-to-end key sessions, one JSON line each.
    Simulate,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl From<aaa_core::Error> for CliError {
    fn from(e: aaa_core::Error) -> Self {
        match e {
            aaa_core::Error::ResourceCap { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Result of a subcommand: the data written to the output, diagnostic
/// lines for stderr, and whether every check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub body: String,
    pub notes: Vec<String>,
    pub ok: bool,
}

impl Report {
    fn data(body: String) -> Self {
        Self {
            body,
            notes: Vec::new(),
            ok: true,
        }
    }
}

/// CSV float: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn single_mu(cfg: &ExperimentConfig, default: f64) -> Result<f64, CliError> {
    match cfg.mu.as_deref() {
        None => Ok(default),
        Some([m]) => Ok(*m),
        Some(v) => Err(CliError::Validation(format!(
            "expected a single mu for this command, got {} values",
            v.len()
        ))),
    }
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig, seed: u64) -> Result<Report, CliError> {
    match cmd {
        Command::Sweep => sweep(cfg),
        Command::Verify => verify(cfg, seed),
        Command::Theorem => theorem(cfg, seed),
        Command::Leakage => leakage_curve(cfg, seed),
        Command::Compare => compare(cfg),
        Command::Simulate => simulate(cfg, seed),
    }
}

const DEFAULT_GRID: Grid = Grid::Linspace {
    start: 0.02,
    stop: 0.98,
    count: 49,
};

fn sweep(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let alphas = cfg.alpha_grid.clone().unwrap_or(DEFAULT_GRID).values();
    let mus = cfg.mu_grid.clone().unwrap_or(DEFAULT_GRID).values();
    let points = equivocation::sweep_surface(&alphas, &mus)?;

    let body = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => json(&points),
        Format::Csv => {
            let mut s = String::from("alpha,mu,eps2,eps3,r21,r32\n");
            for p in &points {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    num(p.alpha),
                    num(p.mu),
                    num(p.eps2),
                    num(p.eps3),
                    num(p.r21),
                    num(p.r32)
                );
            }
            s
        }
    };
    let below = points.iter().filter(|p| p.r32 < 1.0).count();
    let mut report = Report::data(body);
    report.notes = vec![
        format!("points: {}", points.len()),
        format!("points with eps3/eps2 < 1: {below}"),
        format!(
            "area with eps2 > 0.9: {:.4}, eps3 > 0.9: {:.4}",
            equivocation::area_fraction(&points, |p| p.eps2, 0.9),
            equivocation::area_fraction(&points, |p| p.eps3, 0.9)
        ),
    ];
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    check: &'static str,
    n: usize,
    points: usize,
    max_dev: f64,
    threshold: f64,
    pass: bool,
}

fn verify(cfg: &ExperimentConfig, seed: u64) -> Result<Report, CliError> {
    let k = cfg.exact_points.unwrap_or(9);
    let mc_n = cfg.mc_n.unwrap_or(6);
    let trials = cfg.trials.unwrap_or(100_000);
    if mc_n > EXACT_CAP {
        return Err(aaa_core::Error::ResourceCap {
            n: mc_n,
            cap: EXACT_CAP,
        }
        .into());
    }
    let axis = Grid::Linspace {
        start: 0.1,
        stop: 0.9,
        count: k,
    }
    .values();
    let grid: Vec<(f64, f64)> = axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&m| (a, m)))
        .collect();

    let max_dev = |n: usize, f: &dyn Fn(f64, f64) -> f64| -> Result<f64, CliError> {
        let mut worst = 0.0f64;
        for &(a, m) in &grid {
            let exact = equivocation::exact_eps(n, a, &Erasure::Uniform(m))?;
            worst = worst.max((f(a, m) - exact).abs());
        }
        Ok(worst)
    };
    let exact_check = |check, n, dev: f64| Check {
        check,
        n,
        points: grid.len(),
        max_dev: dev,
        threshold: 1e-12,
        pass: dev < 1e-12,
    };
    let mut checks = vec![
        exact_check(
            "eps2_closed_form",
            2,
            max_dev(2, &|a, m| equivocation::eps2(a, m, m))?,
        ),
        exact_check(
            "eps2_corrected",
            2,
            max_dev(2, &|a, m| equivocation::eps2_exact(a, m, m))?,
        ),
        exact_check("eps3_closed_form", 3, max_dev(3, &equivocation::eps3)?),
    ];

    // Monte Carlo: worst deviation in units of the estimate's standard error.
    let mc_grid: Vec<(f64, f64)> = [0.3, 0.6, 0.9]
        .iter()
        .flat_map(|&a| [0.2, 0.5, 0.8].map(move |m| (a, m)))
        .collect();
    let mut worst_z = 0.0f64;
    for (i, &(a, m)) in mc_grid.iter().enumerate() {
        let mu = Erasure::Uniform(m);
        let exact = equivocation::exact_eps(mc_n, a, &mu)?;
        let est = equivocation::mc_eps(mc_n, a, &mu, trials, derive_seed(seed, i as u64))?;
        let dev = (est.value - exact).abs();
        let z = if est.std_err > 0.0 {
            dev / est.std_err
        } else if dev < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z);
    }
    checks.push(Check {
        check: "mc_vs_exact_sigmas",
        n: mc_n,
        points: mc_grid.len(),
        max_dev: worst_z,
        threshold: 4.0,
        pass: worst_z <= 4.0,
    });

    let body = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => json(&checks),
        Format::Csv => {
            let mut s = String::from("check,n,points,max_dev,threshold,pass\n");
            for c in &checks {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    c.check,
                    c.n,
                    c.points,
                    num(c.max_dev),
                    num(c.threshold),
                    c.pass
                );
            }
            s
        }
    };
    let mut report = Report::data(body);
    report.notes = checks
        .iter()
        .map(|c| {
            format!(
                "{} {} (n={}, max deviation {:.3e}, threshold {:e})",
                if c.pass { "PASS" } else { "FAIL" },
                c.check,
                c.n,
                c.max_dev,
                c.threshold
            )
        })
        .collect();
    report.ok = checks.iter().all(|c| c.pass);
    Ok(report)
}

fn theorem(cfg: &ExperimentConfig, seed: u64) -> Result<Report, CliError> {
    let alpha = cfg.alpha.unwrap_or(0.9);
    let mu = single_mu(cfg, 0.3)?;
    let ladder = cfg.ladder.clone().unwrap_or_else(|| vec![5, 10, 20, 40]);
    if ladder.is_empty() {
        return Err(CliError::Validation("empty n ladder".into()));
    }
    let trials = cfg.trials.unwrap_or(100_000);
    let rows = equivocation::mc_ladder(&ladder, alpha, mu, trials, seed)?;
    let body = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from("n,eps_hat,std_err\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{}", r.n, num(r.value), num(r.std_err));
            }
            s
        }
    };
    Ok(Report::data(body))
}

fn leakage_curve(cfg: &ExperimentConfig, seed: u64) -> Result<Report, CliError> {
    let key_len = cfg.key_len.unwrap_or(8);
    let dist = cfg.l_dist.unwrap_or(LeakDist::Fixed(1));
    let n_max = cfg.n_max.unwrap_or(32);
    let trials = cfg.trials.unwrap_or(10_000);
    let rows = leakage::estimate_pn(key_len, &dist, n_max, trials, seed)?;
    let body = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from("n,p_hat,std_err\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{}", r.n, num(r.p_hat), num(r.std_err));
            }
            s
        }
    };
    Ok(Report::data(body))
}

/// Eve's amplitude factor giving per-period erasure rate `mu_e`.
fn gamma_for_mu_e(rate: f64, power: f64, mu_e: f64) -> Result<f64, CliError> {
    if !(mu_e > 0.0 && mu_e < 1.0) {
        return Err(CliError::Validation(format!(
            "mu_e must be in (0, 1), got {mu_e}"
        )));
    }
    Ok(((rate.exp2() - 1.0) / (power * -(-mu_e).ln_1p())).sqrt())
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Validation(format!("missing parameter `{key}`")))
}

#[derive(Debug, Serialize)]
struct CompareSweep {
    rows: Vec<baseline::SweepRow>,
    crossover: Option<usize>,
}

fn compare(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = require(&cfg.symbols, "symbols")?;
    let p = require(&cfg.power, "power")?;
    let m = require(&cfg.periods, "periods")?;
    let r = require(&cfg.rate, "rate")?;
    let gamma = cfg.gamma.unwrap_or(1.0);
    let gamma_m = match (&cfg.gamma_m, cfg.mu_e) {
        (Some(g), _) if g.len() == 1 => vec![g[0]; m],
        (Some(g), _) => g.clone(),
        (None, Some(mu_e)) => vec![gamma_for_mu_e(r, p, mu_e)?; m],
        (None, None) => return Err(CliError::Validation("set gamma_m or mu_e".into())),
    };
    let params = ComparisonParams {
        s,
        p,
        m,
        r,
        gamma,
        gamma_m,
    };

    let Some(span) = cfg.sweep else {
        let res = baseline::compare(&params)?;
        let body = match cfg.format.unwrap_or(Format::Json) {
            Format::Json => json(&res),
            Format::Csv => format!(
                "C1,L1,mu_U,eps_M,L2,preferred,cascade_advised\n{},{},{},{},{},{},{}\n",
                num(res.c1),
                num(res.l1),
                num(res.mu_u),
                num(res.eps_m),
                num(res.l2),
                res.preferred,
                res.cascade_advised
            ),
        };
        let mut report = Report::data(body);
        report.notes.push(format!("preferred: {}", res.preferred));
        return Ok(report);
    };

    let gamma_e = match params.gamma_m.as_slice() {
        [first, rest @ ..] if rest.iter().all(|g| g == first) => *first,
        _ => {
            return Err(CliError::Validation(
                "an M sweep needs one Eve amplitude factor for every period".into(),
            ))
        }
    };
    let rows = baseline::sweep_periods(&params, gamma_e, span.iter())?;
    let crossover = baseline::crossover(&rows);
    let body = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => json(&CompareSweep {
            rows: rows.clone(),
            crossover,
        }),
        Format::Csv => {
            let mut s = String::from("M,L1,L2,preferred\n");
            for row in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    row.m,
                    num(row.l1),
                    num(row.l2),
                    row.preferred
                );
            }
            s
        }
    };
    let mut report = Report::data(body);
    report.notes.push(match crossover {
        Some(m) => format!("crossover: L1 first exceeds L2 at M = {m}"),
        None => format!("crossover: none in M = {span}"),
    });
    Ok(report)
}

fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Report, CliError> {
    let mu = match cfg.mu.as_deref() {
        None => Erasure::Uniform(0.3),
        Some([m]) => Erasure::Uniform(*m),
        Some(v) => Erasure::PerPacket(v.to_vec()),
    };
    let params = MarkovParams::new(
        cfg.key_len.unwrap_or(128),
        cfg.n.unwrap_or(50),
        cfg.alpha.unwrap_or(0.5),
        mu,
    );
    let sessions = cfg.sessions.unwrap_or(100);
    let format = cfg.format.unwrap_or(Format::Json);
    let mut body = match format {
        Format::Json => String::new(),
        Format::Csv => String::from("session,n,missed_count,keys_agree,key\n"),
    };
    let mut agree = 0u64;
    let mut missed = 0usize;
    for k in 0..sessions {
        let rep = keygen::run_session(&params, derive_seed(seed, k))?;
        agree += u64::from(rep.keys_agree());
        missed += rep.missed_count;
        match format {
            Format::Json => {
                body.push_str(&serde_json::to_string(&rep).expect("reports serialize"));
                body.push('\n');
            }
            Format::Csv => {
                let _ = writeln!(
                    body,
                    "{k},{},{},{},{}",
                    rep.n,
                    rep.missed_count,
                    rep.keys_agree(),
                    rep.alice_key.to_hex()
                );
            }
        }
    }
    let mut report = Report::data(body);
    report
        .notes
        .push(format!("sessions: {sessions}, keys agree: {agree}"));
    if sessions > 0 {
        report.notes.push(format!(
            "mean missed packets: {:.4}",
            missed as f64 / sessions as f64
        ));
    }
    report.ok = agree == sessions;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn sweep_rows() {
        let r = execute(
            Command::Sweep,
            &cfg("alpha_grid = 0.1:0.9:5\nmu_grid = 0.2,0.6"),
            0,
        )
        .unwrap();
        assert_eq!(r.body.lines().count(), 11);
        assert!(r.body.starts_with("alpha,mu,eps2,eps3,r21,r32\n"));
    }

    #[test]
    fn sweep_rejects_zero_mu() {
        let e = execute(Command::Sweep, &cfg("mu_grid = 0,0.5"), 0).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn verify_cap() {
        let e = execute(Command::Verify, &cfg("mc_n = 13"), 0).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn wifi_like_compare() {
        let preset = ExperimentConfig::preset("wifi").unwrap();
        let r = execute(Command::Compare, &preset, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
        assert_eq!(v["preferred"], "AAA");
        let l2 = v["L2"].as_f64().unwrap();
        assert!((l2 / 12000.0 - 0.9015).abs() < 1e-3, "{l2}");
    }

    #[test]
    fn gamma_inverts_mu_e() {
        let g = gamma_for_mu_e(2.0, 10.0, 0.1).unwrap();
        assert!((baseline::mu_e(2.0, 10.0, g) - 0.1).abs() < 1e-14);
        assert!(gamma_for_mu_e(2.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn simulate_all_agree() {
        let r = execute(
            Command::Simulate,
            &cfg("sessions = 5\nmu = 0\nkey_len = 16\nn = 10"),
            1,
        )
        .unwrap();
        assert!(r.ok);
        for line in r.body.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["missed_count"], 0);
        }
    }
}
