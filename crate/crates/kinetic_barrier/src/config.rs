//! `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment and blank lines are
//! ignored. Lists are comma separated. Unknown keys are rejected so that a
//! typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::barrier::{Amplitude, Barrier, BarrierForm, EpsSchedule};
use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::grid::{GridDistribution, Interpolation, VelocityGrid};
use crate::kernel::{cancellation_constant, CancellationConstant};
use crate::operator::OperatorOptions;
use crate::params::{validate_params, KernelParams};
use crate::solver::{SolverConfig, Stepper};
use crate::suite::SuiteSettings;
use crate::verifier::{VerifyContext, DEFAULT_SPREAD_CAP};

/// Every accepted key with its default, in manifest order.
const KEYS: &[(&str, &str)] = &[
    ("d", "2"),
    ("gamma", "0.5"),
    ("s", "0.3"),
    ("seed", "0"),
    ("output_dir", "."),
    ("verbosity", "0"),
    ("threads", "0"),
    ("fixture", "maxwellian"),
    ("grid_radius", "auto"),
    ("grid_nodes", "auto"),
    ("theta_min", "0"),
    ("n_dir", "64"),
    ("n_plane_dirs", "12"),
    ("radial_order", "4"),
    ("q", "2"),
    ("oracle", "true"),
    ("per_speed", "2"),
    ("lemma_q", "8"),
    ("barrier_n", "1"),
    ("eps_ratio", "0.1"),
    ("contact_nodes", "64"),
    ("spread_cap", "1000"),
    ("t_end", "1"),
    ("solver_theta_min", "0.2"),
    ("dt", "auto"),
    ("stability_factor", "0.2"),
    ("stepper", "euler"),
    ("interpolation", "multilinear"),
    ("conservative", "true"),
    ("clip_negative", "true"),
    ("moment_orders", "auto"),
    ("snapshot_times", "0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"),
    ("barrier_amplitude", "constant"),
    ("barrier_n0", "1"),
    ("barrier_beta", "0"),
    ("eps0", "0.1"),
    ("eta", "0.5"),
    ("q0", "auto"),
];

/// Raw key/value pairs after defaults are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        RawConfig { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RawConfig::defaults();
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_string(), lineno).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        RawConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key listed in KEYS")
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
    }

    fn auto<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.num(key).map(Some)
        }
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let v = self.get(key);
        if v == "auto" {
            return Ok(None);
        }
        v.split(',')
            .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{x}`"))))
            .collect::<Result<Vec<f64>>>()
            .map(Some)
    }

    /// All keys in manifest order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|(k, _)| (*k, self.get(k).to_string())).collect()
    }
}

/// Typed configuration shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub config_path: Option<PathBuf>,
    pub params: KernelParams,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub verbosity: u8,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub fixture: Fixture,
    pub grid_radius: Option<f64>,
    pub grid_nodes: Option<usize>,
    pub opts: OperatorOptions,
    pub q: f64,
    pub oracle: bool,
    pub suite: SuiteSettings,
    pub spread_cap: f64,
    pub t_end: f64,
    pub solver_theta_min: f64,
    pub dt: Option<f64>,
    pub stability_factor: f64,
    pub stepper: Stepper,
    pub interpolation: Interpolation,
    pub conservative: bool,
    pub clip_negative: bool,
    pub moment_orders: Option<Vec<f64>>,
    pub snapshot_times: Vec<f64>,
    pub barrier_amplitude: String,
    pub barrier_n0: f64,
    pub barrier_beta: f64,
    pub eps0: f64,
    pub eta: f64,
    pub q0: Option<f64>,
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig, config_path: Option<PathBuf>) -> Result<Self> {
        let d: usize = raw.num("d")?;
        let params = KernelParams::new(d, raw.num("gamma")?, raw.num("s")?);
        validate_params(&params)?;
        let fixture = Fixture::from_name(raw.get("fixture"))?;
        let opts = OperatorOptions {
            theta_min: raw.num("theta_min")?,
            n_dir: raw.num("n_dir")?,
            n_plane_dirs: raw.num("n_plane_dirs")?,
            radial_order: raw.num("radial_order")?,
            ..OperatorOptions::default()
        };
        if opts.n_dir < 4 || opts.radial_order < 3 || opts.n_plane_dirs < 2 {
            return Err(Error::Config("n_dir >= 4, n_plane_dirs >= 2 and radial_order >= 3 are required".into()));
        }
        let threads: usize = raw.num("threads")?;
        let suite = SuiteSettings {
            fixture,
            seed: raw.num("seed")?,
            per_speed: raw.num("per_speed")?,
            lemma_q: raw.num("lemma_q")?,
            barrier_n: raw.num("barrier_n")?,
            eps_ratio: raw.num("eps_ratio")?,
            contact_nodes: raw.num("contact_nodes")?,
        };
        if suite.per_speed == 0 {
            return Err(Error::Config("per_speed must be positive".into()));
        }
        let stepper = match raw.get("stepper") {
            "euler" => Stepper::ExplicitEuler,
            "rk2" => Stepper::Rk2,
            v => return Err(Error::Config(format!("`stepper`: expected euler or rk2, got `{v}`"))),
        };
        let interpolation = match raw.get("interpolation") {
            "multilinear" => Interpolation::Multilinear,
            "tricubic" => Interpolation::Tricubic,
            v => return Err(Error::Config(format!("`interpolation`: expected multilinear or tricubic, got `{v}`"))),
        };
        let barrier_amplitude = raw.get("barrier_amplitude").to_string();
        if !["constant", "power", "shifted"].contains(&barrier_amplitude.as_str()) {
            return Err(Error::Config(format!(
                "`barrier_amplitude`: expected constant, power or shifted, got `{barrier_amplitude}`"
            )));
        }
        let spread_cap: f64 = raw.num("spread_cap")?;
        Ok(RunConfig {
            params,
            seed: suite.seed,
            output_dir: PathBuf::from(raw.get("output_dir")),
            verbosity: raw.num("verbosity")?,
            threads: (threads > 0).then_some(threads),
            fixture,
            grid_radius: raw.auto("grid_radius")?,
            grid_nodes: raw.auto("grid_nodes")?,
            opts,
            q: raw.num("q")?,
            oracle: raw.flag("oracle")?,
            suite,
            spread_cap: if spread_cap > 0.0 { spread_cap } else { DEFAULT_SPREAD_CAP },
            t_end: raw.num("t_end")?,
            solver_theta_min: raw.num("solver_theta_min")?,
            dt: raw.auto("dt")?,
            stability_factor: raw.num("stability_factor")?,
            stepper,
            interpolation,
            conservative: raw.flag("conservative")?,
            clip_negative: raw.flag("clip_negative")?,
            moment_orders: raw.list("moment_orders")?,
            snapshot_times: raw.list("snapshot_times")?.unwrap_or_default(),
            barrier_amplitude,
            barrier_n0: raw.num("barrier_n0")?,
            barrier_beta: raw.num("barrier_beta")?,
            eps0: raw.num("eps0")?,
            eta: raw.num("eta")?,
            q0: raw.auto("q0")?,
            raw,
            config_path,
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let raw = match path {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::defaults(),
        };
        RunConfig::from_raw(raw, path.map(Path::to_path_buf))
    }

    pub fn cancellation(&self) -> Result<CancellationConstant> {
        cancellation_constant(&self.params)
    }

    pub fn verify_context(&self) -> Result<VerifyContext> {
        let mut ctx = VerifyContext::new(self.params, self.cancellation()?);
        ctx.opts = self.opts;
        ctx.spread_cap = self.spread_cap;
        Ok(ctx)
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        let default = self.fixture.default_grid(self.params.d)?;
        VelocityGrid::new(
            self.params.d,
            self.grid_radius.unwrap_or(default.r_max),
            self.grid_nodes.unwrap_or(default.n_per_axis),
        )
    }

    /// The configured fixture on the configured grid.
    pub fn initial_datum(&self) -> Result<GridDistribution> {
        Ok(self.fixture.sample(self.grid()?).with_interpolation(self.interpolation))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.params, self.grid()?);
        cfg.t_end = self.t_end;
        cfg.theta_min = self.solver_theta_min;
        cfg.dt = self.dt;
        cfg.stability_factor = self.stability_factor;
        cfg.stepper = self.stepper;
        cfg.interpolation = self.interpolation;
        cfg.conservative = self.conservative;
        cfg.clip_negative = self.clip_negative;
        if let Some(orders) = &self.moment_orders {
            cfg.moment_orders = orders.clone();
        }
        cfg.snapshot_times = self.snapshot_times.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Barrier of the given form (`plain`, `const`, `power` or `q0`) built
    /// from the `barrier_*`, `eps0`, `eta` and `q0` keys.
    pub fn barrier(&self, form: &str) -> Result<Barrier> {
        let amplitude = match self.barrier_amplitude.as_str() {
            "constant" => Amplitude::Constant(self.barrier_n0),
            "power" => Amplitude::Power { n0: self.barrier_n0, beta: self.barrier_beta },
            _ => Amplitude::ShiftedPower { n0: self.barrier_n0, beta: self.barrier_beta },
        };
        let form = match form {
            "plain" => BarrierForm::Plain,
            "const" => BarrierForm::ConstCorrector,
            "power" => BarrierForm::PowerCorrector { d: self.params.d, eta: self.eta },
            "q0" => BarrierForm::Q0Corrector { q0: self.q0.unwrap_or(self.q + 1.0) },
            other => {
                return Err(Error::Config(format!(
                    "unknown barrier form `{other}` (expected plain, const, power, q0 or linfty)"
                )))
            }
        };
        let b = Barrier { form, amplitude, q: self.q, eps: EpsSchedule::Constant(self.eps0) };
        b.validate()?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let raw = RawConfig::parse("# kernel\nd = 3\ngamma=-0.5 # soft\n\ns = 0.4\nsnapshot_times = 0.1, 0.5\n").unwrap();
        let cfg = RunConfig::from_raw(raw, None).unwrap();
        assert_eq!(cfg.params.d, 3);
        assert_eq!(cfg.params.gamma, -0.5);
        assert_eq!(cfg.snapshot_times, vec![0.1, 0.5]);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(RawConfig::parse("gama = 1"), Err(Error::Config(_))));
        assert!(matches!(RawConfig::parse("d = 2\nd = 3"), Err(Error::Config(_))));
        assert!(matches!(RawConfig::parse("d 2"), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_values() {
        let raw = RawConfig::parse("stepper = leapfrog").unwrap();
        assert!(RunConfig::from_raw(raw, None).is_err());
        let raw = RawConfig::parse("s = 1.5").unwrap();
        assert!(RunConfig::from_raw(raw, None).is_err());
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = RunConfig::load(Some(Path::new("/nonexistent/run.cfg"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn barrier_forms() {
        let cfg = RunConfig::load(None).unwrap();
        for form in ["plain", "const", "power", "q0"] {
            assert!(cfg.barrier(form).is_ok());
        }
        assert!(cfg.barrier("spline").is_err());
    }
}
