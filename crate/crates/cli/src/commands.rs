use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use secrange::attack::{bound_report, optimize_attack, AttackSearch};
use secrange::detection::protocol::{estimate_error_probability, ErrorSummary, ProtocolConfig};
use secrange::detection::{score_fisher_information, MeasurementSetup};
use secrange::metrology::{
    default_fd_step, fi_closed_form_measurement, qfi_closed_form_balanced, qfi_closed_form_single_sided,
    qfi_finite_difference, qfi_general_expression,
};
use secrange::oracle::certify;
use secrange::ProbeSpec;

use crate::config::{build_ensemble, Config};
use crate::CliError;

pub struct Output {
    dir: PathBuf,
    name: &'static str,
}

impl Output {
    pub fn new(dir: &Path, name: &'static str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), name })
    }

    fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.name))
    }

    fn csv<T: Serialize>(&self, rows: &[T]) -> Result<(), CliError> {
        let path = self.path("csv");
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(&self, summary: &T) -> Result<(), CliError> {
        let path = self.path("json");
        let mut text = serde_json::to_string_pretty(summary).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

/// Rejects any non-finite value before it reaches an output file.
fn finite(what: &str, values: &[(&str, f64)]) -> Result<(), CliError> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((col, v)) => Err(CliError::Numeric(format!("{what}: {col} = {v}"))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct QfiRow {
    n: u32,
    beta: f64,
    psi_l: f64,
    psi_r: f64,
    phase: f64,
    y: f64,
    f_closed: f64,
    f_finite_diff: f64,
    rel_err: f64,
    f_single_sided: f64,
    single_sided_ratio: f64,
    step_warning: bool,
}

pub fn qfi(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let c = &cfg.qfi;
    c.validate()?;
    let u = c.unitary.build()?;
    let mut rows = Vec::new();
    for &n in &c.n {
        let probe = c.probe.build(n, c.beta)?;
        let closed = qfi_general_expression(&u, &probe, c.y)?.value;
        let fd = qfi_finite_difference(&u, &probe, c.y, c.dy.unwrap_or_else(|| default_fd_step(&probe)))?;
        let single = qfi_closed_form_single_sided(&ProbeSpec::single_sided(n, c.beta)?)?.value;
        let row = QfiRow {
            n,
            beta: c.beta,
            psi_l: probe.amp_l().norm(),
            psi_r: probe.amp_r().norm(),
            phase: c.probe.phase,
            y: c.y,
            f_closed: closed,
            f_finite_diff: fd.value,
            rel_err: (fd.value - closed).abs() / closed.abs(),
            f_single_sided: single,
            single_sided_ratio: single / closed,
            step_warning: fd.step_warning,
        };
        finite(
            &format!("qfi N={n}"),
            &[("f_closed", closed), ("f_finite_diff", fd.value), ("rel_err", row.rel_err), ("single_sided_ratio", row.single_sided_ratio)],
        )?;
        eprintln!("qfi N={n}: closed {closed:.6}, finite difference {:.6}", fd.value);
        rows.push(row);
    }
    out.csv(&rows)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a crate::config::QfiConfig,
        rows: usize,
        max_rel_err: f64,
        balanced_closed_form_matches: Option<bool>,
    }
    let balanced = matches!(c.unitary, crate::config::UnitarySpec::Named(crate::config::NamedUnitary::Balanced));
    let matches = if balanced {
        let mut ok = true;
        for r in &rows {
            let want = qfi_closed_form_balanced(&c.probe.build(r.n, c.beta)?).value;
            ok &= (r.f_closed - want).abs() <= 1e-9 * want;
        }
        Some(ok)
    } else {
        None
    };
    out.json(&Summary {
        config: c,
        rows: rows.len(),
        max_rel_err: rows.iter().map(|r| r.rel_err).fold(0.0, f64::max),
        balanced_closed_form_matches: matches,
    })
}

#[derive(Serialize)]
struct FiRow {
    n: u32,
    beta: f64,
    y: f64,
    samples: usize,
    fi_monte_carlo: f64,
    fi_stderr: f64,
    fi_closed: f64,
    z_score: f64,
    qfi_balanced: f64,
}

pub fn fi(cfg: &Config, seed: u64, out: &Output) -> Result<(), CliError> {
    let c = &cfg.fi;
    c.validate()?;
    let setup = MeasurementSetup::balanced();
    let mut rows = Vec::new();
    for &n in &c.n {
        let probe = c.probe.build(n, c.beta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        let mc = score_fisher_information(&setup, &probe, c.y, c.samples, &mut rng)?;
        let se = mc.stderr.unwrap_or(0.0);
        let closed = fi_closed_form_measurement(&probe).value;
        let z = if se > 0.0 { (mc.value - closed) / se } else { 0.0 };
        finite(&format!("fi N={n}"), &[("fi_monte_carlo", mc.value), ("fi_stderr", se), ("z_score", z)])?;
        eprintln!("fi N={n}: {:.4} ± {se:.4} (closed {closed:.4})", mc.value);
        rows.push(FiRow {
            n,
            beta: c.beta,
            y: c.y,
            samples: c.samples,
            fi_monte_carlo: mc.value,
            fi_stderr: se,
            fi_closed: closed,
            z_score: z,
            qfi_balanced: qfi_closed_form_balanced(&probe).value,
        });
    }
    out.csv(&rows)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a crate::config::FiConfig,
        seed: u64,
        max_abs_z: f64,
    }
    out.json(&Summary { config: c, seed, max_abs_z: rows.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max) })
}

#[derive(Serialize)]
struct AttackRow {
    n: u32,
    best_fidelity: f64,
    p1_bound: f64,
    p2_upper: f64,
    p2_lower: f64,
    p2_forgery: f64,
    restart: Option<usize>,
    converged: bool,
    evaluations: usize,
}

pub fn attack(cfg: &Config, seed: u64, out: &Output) -> Result<(), CliError> {
    let c = &cfg.attack;
    c.validate()?;
    let u = c.unitary.build()?;
    let search = AttackSearch { restarts: c.restarts, evals_per_restart: c.evals_per_restart, seed };
    let mut rows = Vec::new();
    let mut strategies = Vec::new();
    for &n in &c.n {
        let ens = build_ensemble(&c.ensemble, n, c.beta)?;
        let best = optimize_attack(&u, &ens, c.y_est, c.y_fake, &search)?;
        let b = bound_report(&ens, &u, c.y_est)?;
        finite(
            &format!("attack N={n}"),
            &[
                ("best_fidelity", best.fidelity),
                ("p1_bound", b.p1_upper),
                ("p2_upper", b.p2_upper),
                ("p2_lower", b.p2_lower),
                ("p2_forgery", b.p2_exact_for_measurement),
            ],
        )?;
        eprintln!("attack N={n}: best fidelity {:.6}, p1 bound {:.6}", best.fidelity, b.p1_upper);
        rows.push(AttackRow {
            n,
            best_fidelity: best.fidelity,
            p1_bound: b.p1_upper,
            p2_upper: b.p2_upper,
            p2_lower: b.p2_lower,
            p2_forgery: b.p2_exact_for_measurement,
            restart: best.restart,
            converged: best.converged,
            evaluations: best.evaluations,
        });
        strategies.push((n, best.strategy));
    }
    out.csv(&rows)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a crate::config::AttackConfig,
        seed: u64,
        best_strategies: Vec<(u32, secrange::attack::AttackStrategy)>,
    }
    out.json(&Summary { config: c, seed, best_strategies: strategies })
}

#[derive(Serialize)]
struct DetectRow {
    m: usize,
    trials: usize,
    epsilon: f64,
    p_false_alarm: f64,
    p_miss_attack: f64,
    p_miss_forge: f64,
    p_total: f64,
    bound_false_alarm: f64,
    bound_attack: f64,
    bound_forge: f64,
    bound_total: f64,
    xi1: f64,
    xi2: f64,
}

impl From<&ErrorSummary> for DetectRow {
    fn from(s: &ErrorSummary) -> Self {
        Self {
            m: s.m_samples,
            trials: s.trials,
            epsilon: s.epsilon,
            p_false_alarm: s.p_false_alarm,
            p_miss_attack: s.p_miss_attack,
            p_miss_forge: s.p_miss_forge,
            p_total: s.p_total,
            bound_false_alarm: s.bound_false_alarm,
            bound_attack: s.bound_attack,
            bound_forge: s.bound_forge,
            bound_total: s.bound_total,
            xi1: s.exponents.xi1,
            xi2: s.exponents.xi2,
        }
    }
}

/// Least-squares slope of `ln p` against `M` over the rows with `p > 0`.
#[derive(Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn fit_exponent(ms: &[usize], ps: &[f64]) -> Option<ExponentFit> {
    let pts: Vec<(f64, f64)> = ms.iter().zip(ps).filter(|(_, &p)| p > 0.0).map(|(&m, &p)| (m as f64, p.ln())).collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some(ExponentFit { slope, intercept: my - slope * mx, points: pts.len() })
}

pub fn detect(cfg: &Config, seed: u64, out: &Output) -> Result<(), CliError> {
    let c = &cfg.detect;
    c.validate()?;
    let ens = build_ensemble(&c.ensemble, c.n, c.beta)?;
    let mut pc = ProtocolConfig::new(ens, c.geometry()?)?;
    pc.epsilon = c.epsilon;
    pc.overhead_fraction = c.overhead_fraction;
    pc.validate()?;

    let mut summaries = Vec::new();
    for &m in &c.m {
        eprintln!("detect M={m}: {} trials per scenario", c.trials);
        let s = estimate_error_probability(&pc, m, c.trials, seed)?;
        finite(
            &format!("detect M={m}"),
            &[("epsilon", s.epsilon), ("bound_total", s.bound_total), ("xi1", s.exponents.xi1), ("xi2", s.exponents.xi2)],
        )?;
        eprintln!("detect M={m}: total error {:.4}, bound {:.4}", s.p_total, s.bound_total);
        summaries.push(s);
    }
    let rows: Vec<DetectRow> = summaries.iter().map(DetectRow::from).collect();
    out.csv(&rows)?;

    let ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    let col = |f: fn(&DetectRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    #[derive(Serialize)]
    struct Fits {
        false_alarm: Option<ExponentFit>,
        miss_attack: Option<ExponentFit>,
        miss_forge: Option<ExponentFit>,
        total: Option<ExponentFit>,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a crate::config::DetectConfig,
        seed: u64,
        /// Empirical total error at most the bound wherever the bound is below one.
        bounds_hold: bool,
        exponent_fits: Fits,
        runs: &'a [ErrorSummary],
    }
    out.json(&Summary {
        config: c,
        seed,
        bounds_hold: rows.iter().all(|r| r.bound_total > 1.0 || r.p_total <= r.bound_total),
        exponent_fits: Fits {
            false_alarm: fit_exponent(&ms, &col(|r| r.p_false_alarm)),
            miss_attack: fit_exponent(&ms, &col(|r| r.p_miss_attack)),
            miss_forge: fit_exponent(&ms, &col(|r| r.p_miss_forge)),
            total: fit_exponent(&ms, &col(|r| r.p_total)),
        },
        runs: &summaries,
    })
}

pub fn oracle_check(cfg: &Config, seed: u64, out: &Output) -> Result<(), CliError> {
    let instances = cfg.oracle_check.instances;
    if instances == 0 {
        return Err(CliError::Config("oracle_check.instances must be positive".into()));
    }
    eprintln!("oracle-check: {instances} instances per check");
    let rows = certify(instances, seed)?;

    #[derive(Serialize)]
    struct Row<'a> {
        check: &'a str,
        instances: usize,
        max_deviation: f64,
        tolerance: f64,
        pass: bool,
    }
    let table: Vec<Row> = rows
        .iter()
        .map(|r| Row { check: r.check, instances: r.instances, max_deviation: r.max_deviation, tolerance: r.tolerance, pass: r.passed() })
        .collect();
    for r in &table {
        finite(r.check, &[("max_deviation", r.max_deviation)])?;
        eprintln!("{}: max deviation {:.3e} (tolerance {:.0e})", r.check, r.max_deviation, r.tolerance);
    }
    out.csv(&table)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        seed: u64,
        all_pass: bool,
        checks: &'a [Row<'a>],
    }
    let all_pass = table.iter().all(|r| r.pass);
    out.json(&Summary { seed, all_pass, checks: &table })?;
    if !all_pass {
        let failed: Vec<&str> = table.iter().filter(|r| !r.pass).map(|r| r.check).collect();
        return Err(CliError::Check(failed.join(", ")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_fit_recovers_slope() {
        let ms = [64, 256, 1024];
        let ps: Vec<f64> = ms.iter().map(|&m| 0.5 * (-0.01 * m as f64).exp()).collect();
        let f = fit_exponent(&ms, &ps).unwrap();
        assert!((f.slope + 0.01).abs() < 1e-12);
        assert!((f.intercept - 0.5f64.ln()).abs() < 1e-10);
        assert_eq!(f.points, 3);
    }

    #[test]
    fn exponent_fit_skips_zeros() {
        assert_eq!(fit_exponent(&[64, 256, 1024], &[0.1, 0.0, 0.0]), None);
        assert_eq!(fit_exponent(&[64, 256, 1024], &[0.1, 0.05, 0.0]).unwrap().points, 2);
    }

    #[test]
    fn finite_names_the_column() {
        let e = finite("row", &[("a", 1.0), ("b", f64::NAN)]).unwrap_err();
        assert!(matches!(e, CliError::Numeric(ref m) if m.contains("b = NaN")));
    }
}
