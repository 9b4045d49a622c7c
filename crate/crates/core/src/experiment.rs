//! Experiment runner behind the CLI: presets, layered configuration and the
//! CSV / JSON artifacts of each subcommand.
//!
//! Configuration is resolved as preset defaults, then a JSON config file, then
//! command-line flags; later layers win field by field.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::binomial;
use crate::continuum::cauchy::{analytic_profile, CauchyData, CauchyOptions, Kernel};
use crate::continuum::{telegraph_params, TelegraphParams};
use crate::crosscheck::{observed_orders, ComparisonCase};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lattice::{gaussian_initial, GridSpec, JointDensity2, MomentSeries, RateForm, RateSpec2};
use crate::moments::{predicted_mean_velocity, predicted_second_moment, snapshot_moments, MomentPrediction};
use crate::multinomial::{
    self, energy_check_observables, newton_check_observables, observe, MultiDensity, NewtonMixing, NewtonRates,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest tolerated `|total mass - 1|` over a run before exiting with code 3.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Example1,
    Example2,
    Example3,
    /// Asymmetric rates; `alpha` and `beta` must be given explicitly.
    Example4,
    Newton,
    Energy,
    AnalyticCompare,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
            Preset::Example4 => "example4",
            Preset::Newton => "newton",
            Preset::Energy => "energy",
            Preset::AnalyticCompare => "analytic-compare",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `V = s·x`.
    Linear,
    /// `V = s·x²/2`.
    Harmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Analytic,
    Compare,
    Moments,
    Newton,
    Energy,
}

impl Command {
    pub fn default_preset(self) -> Preset {
        match self {
            Command::Simulate | Command::Moments => Preset::Example1,
            Command::Analytic | Command::Compare => Preset::AnalyticCompare,
            Command::Newton => Preset::Newton,
            Command::Energy => Preset::Energy,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Analytic => "analytic",
            Command::Compare => "compare",
            Command::Moments => "moments",
            Command::Newton => "newton",
            Command::Energy => "energy",
        }
    }
}

/// One configuration layer. Unset fields fall through to the layer below.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub rate_form: Option<RateForm>,
    pub sigma: Option<f64>,
    pub support_half_width: Option<f64>,
    pub n_steps: Option<usize>,
    /// Steps between snapshot dumps; 0 writes the final snapshot only.
    /// Multi-velocity presets leave it unset and write no snapshots.
    pub dump_interval: Option<usize>,
    pub dump_all: Option<bool>,
    pub theta: Option<f64>,
    pub potential: Option<PotentialKind>,
    /// Slope `g` of a linear potential or stiffness `κ` of a harmonic one.
    pub strength: Option<f64>,
    pub j_max: Option<i32>,
    pub t: Option<f64>,
    pub kernel: Option<Kernel>,
    pub panels: Option<usize>,
    pub levels: Option<usize>,
}

macro_rules! layer {
    ($base:expr, $top:expr; $($f:ident),*) => {
        Overrides { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Overrides {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// `self` overlaid by the fields set in `top`.
    pub fn layered(self, top: Overrides) -> Overrides {
        layer!(self, top; preset, dx, dt, alpha, beta, rate_form, sigma, support_half_width, n_steps,
            dump_interval, dump_all, theta, potential, strength, j_max, t, kernel, panels, levels)
    }
}

pub fn preset_defaults(preset: Preset) -> Overrides {
    let example = |sigma: f64, hw: f64, rate: Option<f64>| Overrides {
        preset: Some(preset),
        dx: Some(0.3),
        dt: Some(0.003),
        alpha: rate,
        beta: rate,
        rate_form: Some(RateForm::StepProbability),
        sigma: Some(sigma),
        support_half_width: Some(hw),
        n_steps: Some(150),
        dump_interval: Some(10),
        ..Overrides::default()
    };
    match preset {
        Preset::Example1 | Preset::Custom => example(0.6, 6.9, Some(0.006)),
        // a single occupied node: the Gaussian with sigma 0.1 is truncated to its centre
        Preset::Example2 => example(0.1, 0.0, Some(0.006)),
        Preset::Example3 => example(1.5, 6.9, Some(0.015)),
        Preset::Example4 => example(1.5, 6.9, None),
        Preset::AnalyticCompare => Overrides {
            alpha: Some(2.0),
            beta: Some(2.0),
            rate_form: Some(RateForm::ContinuumRate),
            t: Some(0.45),
            ..example(0.6, 6.9, None)
        },
        Preset::Newton | Preset::Energy => Overrides {
            preset: Some(preset),
            dx: Some(1e-3),
            dt: Some(1e-3),
            n_steps: Some(300),
            theta: Some(10.0),
            potential: Some(PotentialKind::Linear),
            strength: Some(2.0),
            j_max: Some(20),
            ..Overrides::default()
        },
    }
}

/// Fully resolved run parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub dx: f64,
    pub dt: f64,
    pub c: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub rate_form: RateForm,
    pub sigma: f64,
    pub support_half_width: f64,
    pub n_steps: usize,
    pub dump_interval: Option<usize>,
    pub dump_all: bool,
    pub theta: f64,
    pub potential: PotentialKind,
    pub strength: f64,
    pub j_max: i32,
    pub t: f64,
    pub kernel: Kernel,
    pub panels: usize,
    pub levels: usize,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Preset defaults for `command` (or the preset named in `layers`) overlaid by `layers`.
    pub fn resolve(command: Command, layers: &Overrides) -> Result<Self> {
        let preset = layers.preset.unwrap_or(command.default_preset());
        let o = preset_defaults(preset).layered(layers.clone());
        let dx = positive("dx", o.dx.unwrap_or(0.3))?;
        let dt = positive("dt", o.dt.unwrap_or(0.003))?;
        let n_steps = o.n_steps.unwrap_or(150);
        let sigma = positive("sigma", o.sigma.unwrap_or(0.6))?;
        let support_half_width = o.support_half_width.unwrap_or(6.9);
        if !(support_half_width >= 0.0 && support_half_width.is_finite()) {
            return Err(Error::Config(format!(
                "support_half_width must be >= 0, got {support_half_width}"
            )));
        }
        let j_max = o.j_max.unwrap_or(20);
        if j_max < 1 {
            return Err(Error::Config(format!("j_max must be >= 1, got {j_max}")));
        }
        let panels = o.panels.unwrap_or(2048);
        if panels < 2 || panels % 2 == 1 {
            return Err(Error::Config(format!("panels must be even and >= 2, got {panels}")));
        }
        let levels = o.levels.unwrap_or(3);
        if levels < 2 {
            return Err(Error::Config(format!("levels must be >= 2, got {levels}")));
        }
        let t = o.t.unwrap_or(n_steps as f64 * dt);
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("t must be >= 0, got {t}")));
        }
        for (name, v) in [("alpha", o.alpha), ("beta", o.beta)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        Ok(ExperimentConfig {
            preset,
            dx,
            dt,
            c: dx / dt,
            alpha: o.alpha,
            beta: o.beta,
            rate_form: o.rate_form.unwrap_or(RateForm::StepProbability),
            sigma,
            support_half_width,
            n_steps,
            dump_interval: o.dump_interval,
            dump_all: o.dump_all.unwrap_or(false),
            theta: positive("theta", o.theta.unwrap_or(10.0))?,
            potential: o.potential.unwrap_or(PotentialKind::Linear),
            strength: o.strength.unwrap_or(2.0),
            j_max,
            t,
            kernel: o.kernel.unwrap_or_default(),
            panels,
            levels,
        })
    }

    fn switching(&self) -> Result<(f64, f64)> {
        match (self.alpha, self.beta) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Config(format!(
                "preset {} has no default switching rates; pass --alpha and --beta",
                self.preset.name()
            ))),
        }
    }

    pub fn rate_spec(&self) -> Result<RateSpec2> {
        let (a, b) = self.switching()?;
        Ok(RateSpec2::constant(a, b, self.rate_form))
    }

    /// Switching rates per unit time.
    pub fn continuum_rates(&self) -> Result<(f64, f64)> {
        let (a, b) = self.switching()?;
        Ok(match self.rate_form {
            RateForm::StepProbability => (a / self.dt, b / self.dt),
            RateForm::ContinuumRate => (a, b),
        })
    }

    pub fn telegraph(&self) -> Result<TelegraphParams> {
        let (a, b) = self.continuum_rates()?;
        telegraph_params(a, b, self.c)
    }

    fn half_nodes(&self) -> i64 {
        (self.support_half_width / self.dx * (1.0 + 1e-12) + 1e-9).floor() as i64
    }

    /// Velocity-symmetric truncated Gaussian on `|x| <= support_half_width`.
    pub fn initial(&self) -> Result<JointDensity2> {
        let half = self.half_nodes();
        let grid = GridSpec::new(self.dx, self.dt, -half, half)?;
        gaussian_initial(grid, self.sigma, self.support_half_width)
    }

    pub fn newton_rates(&self) -> Result<NewtonRates> {
        match self.potential {
            PotentialKind::Linear => NewtonRates::linear(self.theta, self.c, self.strength),
            PotentialKind::Harmonic => NewtonRates::harmonic(self.theta, self.c, self.strength),
        }
    }

    fn dumps(&self, k: usize) -> bool {
        match self.dump_interval {
            _ if self.dump_all => true,
            Some(0) => k == self.n_steps,
            Some(i) => k == self.n_steps || k.is_multiple_of(i),
            None => false,
        }
    }
}

/// Run `command` and write its artifacts plus `summary.json` into `out`.
/// Returns the summary.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<Value> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let outcome = match command {
        Command::Simulate => run_two_velocity(cfg, out, exec, true),
        Command::Moments => run_two_velocity(cfg, out, exec, false),
        Command::Analytic => run_analytic(cfg, out, exec),
        Command::Compare => run_compare(cfg, out, exec),
        Command::Newton | Command::Energy => run_newton(command, cfg, out, exec),
    }?;
    let mut summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.name(),
        "preset": cfg.preset.name(),
        "config": cfg,
    });
    if let (Value::Object(s), Value::Object(extra)) = (&mut summary, outcome.fields) {
        s.extend(extra);
        s.insert("wall_time_s".into(), json!(start.elapsed().as_secs_f64()));
    }
    write_json(&out.join("summary.json"), &summary)?;
    if let Some(err) = outcome.breach {
        return Err(err);
    }
    Ok(summary)
}

struct Outcome {
    fields: Value,
    /// Set when a numerical invariant failed; reported after the summary is written.
    breach: Option<Error>,
}

fn check_mass(error: f64) -> Option<Error> {
    (error > MASS_TOLERANCE).then_some(Error::ConservationBreach {
        error,
        tolerance: MASS_TOLERANCE,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_density_csv<W: Write>(w: &mut W, t: f64, q: &JointDensity2) -> Result<()> {
    writeln!(w, "t,node_index,x,q_plus,q_minus,rho,phi")?;
    for i in 0..q.grid.len() {
        let (p, m) = (q.q_plus[i], q.q_minus[i]);
        writeln!(
            w,
            "{t:.16e},{},{:.16e},{p:.16e},{m:.16e},{:.16e},{:.16e}",
            q.grid.node(i),
            q.grid.x_at(i),
            p + m,
            p - m
        )?;
    }
    Ok(())
}

/// Nonzero entries only.
pub fn write_multi_csv<W: Write>(w: &mut W, t: f64, q: &MultiDensity) -> Result<()> {
    writeln!(w, "t,j,v_j,node_index,x,q")?;
    for i in 0..q.grid.len() {
        for (k, v) in q.column(i).iter().enumerate() {
            if *v != 0.0 {
                let j = k as i32 - q.j_max;
                writeln!(
                    w,
                    "{t:.16e},{j},{:.16e},{},{:.16e},{v:.16e}",
                    q.velocity(j),
                    q.grid.node(i),
                    q.grid.x_at(i)
                )?;
            }
        }
    }
    Ok(())
}

/// Moment rows with the constant-rate predictions; NaN where no prediction exists.
pub fn write_moment_csv<W: Write>(w: &mut W, series: &MomentSeries, prediction: Option<(&MomentPrediction, f64, f64)>) -> Result<()> {
    writeln!(w, "t,mean,variance,mean_velocity,predicted_velocity,predicted_x2")?;
    for k in 0..series.len() {
        let t = series.times[k];
        let (pv, px2) = match prediction {
            Some((p, ex0, var0)) => (
                predicted_mean_velocity(p, t)?,
                predicted_second_moment(p, ex0, t)?.value + var0,
            ),
            None => (f64::NAN, f64::NAN),
        };
        writeln!(
            w,
            "{t:.16e},{:.16e},{:.16e},{:.16e},{pv:.16e},{px2:.16e}",
            series.mean[k], series.variance[k], series.mean_velocity[k]
        )?;
    }
    Ok(())
}

fn create_csv(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_two_velocity(cfg: &ExperimentConfig, out: &Path, exec: Exec, snapshots: bool) -> Result<Outcome> {
    let rates = cfg.rate_spec()?;
    let q0 = cfg.initial()?;
    let snap_dir = out.join("snapshots");
    if snapshots {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut series = MomentSeries::default();
    let mut written = Vec::new();
    let mut io_error: Option<Error> = None;
    let mut mass_error: f64 = 0.0;
    let mut min_entry = f64::INFINITY;
    let last = binomial::simulate_observed(&q0, &rates, cfg.n_steps, exec, |k, q| {
        let t = q.grid.time(k);
        series.push(t, q);
        mass_error = mass_error.max((q.total_mass() - 1.0).abs());
        min_entry = min_entry.min(q.min_entry());
        if snapshots && io_error.is_none() && cfg.dumps(k) {
            let name = format!("step_{k:06}.csv");
            let res = create_csv(&snap_dir.join(&name)).and_then(|mut w| {
                write_density_csv(&mut w, t, q)?;
                Ok(w.flush()?)
            });
            match res {
                Ok(()) => written.push(format!("snapshots/{name}")),
                Err(e) => io_error = Some(e),
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }

    let p = cfg.telegraph()?;
    let (ex0, var0, _) = snapshot_moments(&q0);
    let pred = MomentPrediction::from_initial(&p, &q0);
    let prediction = (p.gamma > 0.0).then_some((&pred, ex0, var0));
    let mut w = create_csv(&out.join("moments.csv"))?;
    write_moment_csv(&mut w, &series, prediction)?;
    w.flush()?;

    let (upper, lower) = binomial::ballistic_lobe_masses(&q0, &rates, cfg.n_steps, exec)?;
    let support = last.support().map(|(lo, hi)| [last.grid.x(lo), last.grid.x(hi)]);
    if snapshots {
        write_json(
            &out.join("manifest.json"),
            &json!({
                "dx": cfg.dx,
                "dt": cfg.dt,
                "c": cfg.c,
                "alpha": cfg.alpha,
                "beta": cfg.beta,
                "rate_form": cfg.rate_form,
                "n_steps": cfg.n_steps,
                "sigma": cfg.sigma,
                "support_half_width": cfg.support_half_width,
                "preset": cfg.preset.name(),
                "snapshots": written,
            }),
        )?;
    }
    let n = series.len() - 1;
    Ok(Outcome {
        fields: json!({
            "final_mean": series.mean[n],
            "final_variance": series.variance[n],
            "final_mean_velocity": series.mean_velocity[n],
            "predicted_terminal_velocity": if p.gamma > 0.0 { Some(pred.terminal_velocity()?) } else { None },
            "lobe_masses": { "upper": upper, "lower": lower },
            "conservation_error": mass_error,
            "min_entry": min_entry,
            "final_support": support,
            "snapshots_written": written.len(),
        }),
        breach: check_mass(mass_error),
    })
}

fn run_analytic(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let p = cfg.telegraph()?;
    let data = CauchyData::gaussian(cfg.sigma, cfg.support_half_width)?;
    let opts = CauchyOptions {
        kernel: cfg.kernel,
        panels: cfg.panels,
    };
    let reach = cfg.half_nodes() + (cfg.c * cfg.t / cfg.dx * (1.0 - 1e-12)).ceil() as i64;
    let xs: Vec<f64> = (-reach..=reach).map(|m| m as f64 * cfg.dx).collect();
    let values = analytic_profile(&data, &p, cfg.t, &xs, &opts, exec)?;
    let mut w = create_csv(&out.join("analytic.csv"))?;
    writeln!(w, "t,x,q_plus,q_minus,rho")?;
    for (x, v) in xs.iter().zip(&values) {
        writeln!(w, "{:.16e},{x:.16e},{:.16e},{:.16e},{:.16e}", cfg.t, v.q_plus, v.q_minus, v.rho)?;
    }
    w.flush()?;
    let mass = crate::exec::sum(values.iter().map(|v| v.rho * cfg.dx));
    Ok(Outcome {
        fields: json!({
            "t": cfg.t,
            "points": xs.len(),
            "mass_riemann": mass,
            "telegraph": p,
        }),
        breach: None,
    })
}

fn run_compare(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let (alpha, beta) = cfg.continuum_rates()?;
    let case = ComparisonCase {
        alpha,
        beta,
        c: cfg.c,
        sigma: cfg.sigma,
        support_half_width: cfg.support_half_width,
        t: cfg.t,
    };
    let opts = CauchyOptions {
        kernel: cfg.kernel,
        panels: cfg.panels,
    };
    let levels = case.refinement(cfg.dx, cfg.levels, &opts, exec)?;
    let orders = observed_orders(&levels);
    write_json(&out.join("compare.json"), &json!({ "case": case, "levels": levels, "orders": orders }))?;
    Ok(Outcome {
        fields: json!({
            "l1": levels.iter().map(|l| l.l1).collect::<Vec<_>>(),
            "orders": orders,
            "min_order": orders.iter().copied().fold(f64::INFINITY, f64::min),
        }),
        breach: None,
    })
}

/// Largest relative error between `|a|` and `|b|` over the rows `[n/4, 3n/4]`.
fn middle_half<T>(rows: &[T], pair: impl Fn(&T) -> Option<(f64, f64)>) -> Option<f64> {
    let n = rows.len();
    rows[n / 4..=(3 * n / 4).min(n.saturating_sub(1))]
        .iter()
        .filter_map(pair)
        .map(|(a, b)| (a.abs() - b.abs()).abs() / b.abs())
        .reduce(f64::max)
}

fn run_newton(command: Command, cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let nr = cfg.newton_rates()?;
    let grid = GridSpec::new(cfg.dx, cfg.dt, 0, 0)?;
    let q0 = MultiDensity::point(grid, cfg.j_max, 0, 0)?;
    let full = multinomial::required_grid(&q0, cfg.n_steps);
    let mixing = NewtonMixing::new(nr.clone(), cfg.j_max, &full)?;
    let dir = out.join("multi");
    if cfg.dump_all || cfg.dump_interval.is_some() {
        fs::create_dir_all(&dir)?;
    }
    let mut obs = Vec::with_capacity(cfg.n_steps + 1);
    let mut written = Vec::new();
    let mut io_error: Option<Error> = None;
    let mut mass_error: f64 = 0.0;
    let mut min_entry = f64::INFINITY;
    multinomial::simulate_multi_observed(&q0, &mixing, cfg.n_steps, exec, |k, q| {
        let t = q.grid.time(k);
        let o = observe(q, &nr, t);
        mass_error = mass_error.max((o.mass - 1.0).abs());
        min_entry = min_entry.min(o.min_entry);
        obs.push(o);
        if io_error.is_none() && cfg.dumps(k) {
            let name = format!("step_{k:06}.csv");
            let res = create_csv(&dir.join(&name)).and_then(|mut w| {
                write_multi_csv(&mut w, t, q)?;
                Ok(w.flush()?)
            });
            match res {
                Ok(()) => written.push(format!("multi/{name}")),
                Err(e) => io_error = Some(e),
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let mut fields = json!({
        "theta": cfg.theta,
        "c": cfg.c,
        "potential": cfg.potential,
        "strength": cfg.strength,
        "conservation_error": mass_error,
        "min_entry": min_entry,
        "snapshots": written,
    });
    let extra = if command == Command::Newton {
        let report = newton_check_observables(&obs, cfg.dt)?;
        write_json(&out.join("newton.json"), &report.rows)?;
        json!({
            "empirical_sign": report.empirical_sign,
            "max_rel_error": report.max_rel_error,
            "middle_half_rel_error": middle_half(&report.rows, |r| r.d2ex_dt2.map(|d| (d, r.e_vprime))),
            "max_edge_occupancy": report.max_edge_occupancy,
            "edge_flagged": report.edge_flagged,
        })
    } else {
        let report = energy_check_observables(&obs, &nr, cfg.dt)?;
        write_json(&out.join("energy.json"), &report.rows)?;
        let predicted = report.predicted_drift;
        json!({
            "predicted_drift": predicted,
            "middle_half_rel_error": middle_half(&report.rows, |r| r.drift.map(|d| (d, predicted))),
            "max_edge_occupancy": report.max_edge_occupancy,
            "edge_flagged": report.edge_flagged,
        })
    };
    if let (Value::Object(f), Value::Object(e)) = (&mut fields, extra) {
        f.extend(e);
    }
    Ok(Outcome {
        fields,
        breach: check_mass(mass_error),
    })
}
