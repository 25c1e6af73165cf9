//! `key=value` run configuration with `#` comments.

use std::fmt;
use std::path::PathBuf;

use crate::expr::{format_velocity, parse_velocity, Expr, VelocityTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Solve,
    Galerkin,
    Helmholtz,
    Thinfilm,
}

impl Command {
    pub const ALL: [Command; 5] = [Command::Verify, Command::Solve, Command::Galerkin, Command::Helmholtz, Command::Thinfilm];

    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Galerkin => "galerkin",
            Command::Helmholtz => "helmholtz",
            Command::Thinfilm => "thinfilm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Sphere,
    Torus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub surface: Surface,
    pub radius: f64,
    pub bandlimit: usize,
    pub major: f64,
    pub minor: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub nu: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Thickness weight of the limit equations.
    pub g_expr: String,
    /// Thin-film sheets `eps g0 < r < eps g1`.
    pub g0_expr: String,
    pub g1_expr: String,
    pub f_expr: String,
    pub v0: Vec<VelocityTerm>,
    pub dt: f64,
    pub t_final: f64,
    pub nonlinear: bool,
    pub dealias: bool,
    pub snapshot_every: usize,
    pub k: usize,
    pub samples: usize,
    pub refine: bool,
    pub epsilons: Vec<f64>,
    pub nr: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Verify,
            surface: Surface::Sphere,
            radius: 1.0,
            bandlimit: 32,
            major: 2.0,
            minor: 1.0,
            n_theta: 64,
            n_phi: 64,
            nu: 0.1,
            gamma0: 0.0,
            gamma1: 0.0,
            g_expr: "1".into(),
            g0_expr: "0".into(),
            g1_expr: "1".into(),
            f_expr: "0".into(),
            v0: vec![VelocityTerm::Killing([0.0, 0.0, 1.0])],
            dt: 1e-3,
            t_final: 1.0,
            nonlinear: true,
            dealias: true,
            snapshot_every: 0,
            k: 30,
            samples: 100,
            refine: false,
            epsilons: surfns::thinfilm::DEFAULT_EPSILONS.to_vec(),
            nr: surfns::thinfilm::DEFAULT_RADIAL_NODES,
            seed: surfns::random::DEFAULT_SEED,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            match issue.line {
                Some(l) => write!(f, "line {l}: {}", issue.message)?,
                None => write!(f, "{}", issue.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for surfns::Error {
    fn from(e: ConfigErrors) -> Self {
        surfns::Error::Config(e.to_string())
    }
}

const KEYS: [&str; 29] = [
    "command", "surface", "radius", "bandlimit", "R", "r", "n_theta", "n_phi", "nu", "gamma0", "gamma1", "g_expr", "g0_expr", "g1_expr",
    "f_expr", "v0_expr", "dt", "T", "nonlinear", "dealias", "snapshot_every", "k", "samples", "refine", "epsilons", "nr", "seed", "out",
    "preset",
];

struct Parser {
    cfg: RunConfig,
    issues: Vec<ConfigIssue>,
    lines: std::collections::HashMap<&'static str, usize>,
}

impl Parser {
    fn fail(&mut self, line: Option<usize>, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.lines.get(key).copied()
    }

    fn num<T: std::str::FromStr>(&mut self, line: usize, key: &str, value: &str, kind: &str) -> Option<T> {
        match value.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(Some(line), format!("{key}: expected {kind}, got '{value}'"));
                None
            }
        }
    }

    fn flag(&mut self, line: usize, key: &str, value: &str) -> Option<bool> {
        match value {
            "true" | "1" | "yes" => Some(true),
            "false" | "0" | "no" => Some(false),
            _ => {
                self.fail(Some(line), format!("{key}: expected true or false, got '{value}'"));
                None
            }
        }
    }

    fn set(&mut self, line: usize, key: &'static str, value: &str) {
        macro_rules! assign {
            ($field:ident, $ty:ty, $kind:expr) => {
                if let Some(v) = self.num::<$ty>(line, key, value, $kind) {
                    self.cfg.$field = v;
                }
            };
        }
        match key {
            "command" => match Command::from_name(value) {
                Some(c) => self.cfg.command = c,
                None => self.fail(Some(line), format!("command: unknown command '{value}' (verify, solve, galerkin, helmholtz, thinfilm)")),
            },
            "surface" => match value {
                "sphere" => self.cfg.surface = Surface::Sphere,
                "torus" => self.cfg.surface = Surface::Torus,
                _ => self.fail(Some(line), format!("surface: expected sphere or torus, got '{value}'")),
            },
            "radius" => assign!(radius, f64, "a number"),
            "bandlimit" => assign!(bandlimit, usize, "a nonnegative integer"),
            "R" => assign!(major, f64, "a number"),
            "r" => assign!(minor, f64, "a number"),
            "n_theta" => assign!(n_theta, usize, "a nonnegative integer"),
            "n_phi" => assign!(n_phi, usize, "a nonnegative integer"),
            "nu" => assign!(nu, f64, "a number"),
            "gamma0" => assign!(gamma0, f64, "a number"),
            "gamma1" => assign!(gamma1, f64, "a number"),
            "g_expr" | "g0_expr" | "g1_expr" | "f_expr" => match Expr::parse(value) {
                Ok(_) => match key {
                    "g_expr" => self.cfg.g_expr = value.into(),
                    "g0_expr" => self.cfg.g0_expr = value.into(),
                    "g1_expr" => self.cfg.g1_expr = value.into(),
                    _ => self.cfg.f_expr = value.into(),
                },
                Err(e) => self.fail(Some(line), format!("{key}: {e}")),
            },
            "v0_expr" => match parse_velocity(value) {
                Ok(t) => self.cfg.v0 = t,
                Err(e) => self.fail(Some(line), format!("v0_expr: {e}")),
            },
            "dt" => assign!(dt, f64, "a number"),
            "T" => assign!(t_final, f64, "a number"),
            "nonlinear" => {
                if let Some(b) = self.flag(line, key, value) {
                    self.cfg.nonlinear = b;
                }
            }
            "dealias" => {
                if let Some(b) = self.flag(line, key, value) {
                    self.cfg.dealias = b;
                }
            }
            "refine" => {
                if let Some(b) = self.flag(line, key, value) {
                    self.cfg.refine = b;
                }
            }
            "snapshot_every" => assign!(snapshot_every, usize, "a nonnegative integer"),
            "k" => assign!(k, usize, "a nonnegative integer"),
            "samples" => assign!(samples, usize, "a nonnegative integer"),
            "nr" => assign!(nr, usize, "a nonnegative integer"),
            "seed" => {
                let v = value.strip_prefix("0x").map_or_else(|| value.parse::<u64>().ok(), |h| u64::from_str_radix(h, 16).ok());
                match v {
                    Some(s) => self.cfg.seed = s,
                    None => self.fail(Some(line), format!("seed: expected an unsigned integer, got '{value}'")),
                }
            }
            "epsilons" => {
                let parsed: Result<Vec<f64>, _> = value.split(',').map(|s| s.trim().parse::<f64>()).collect();
                match parsed {
                    Ok(v) => self.cfg.epsilons = v,
                    Err(_) => self.fail(Some(line), format!("epsilons: expected a comma-separated list of numbers, got '{value}'")),
                }
            }
            "out" => self.cfg.out = PathBuf::from(value),
            _ => unreachable!("key list checked by caller"),
        }
    }

    fn validate(&mut self) {
        let c = self.cfg.clone();
        let mut check = |ok: bool, key: &str, msg: String| {
            if !ok {
                let line = self.lines.get(key).copied();
                self.issues.push(ConfigIssue { line, message: msg });
            }
        };
        match c.surface {
            Surface::Sphere => {
                check(c.radius > 0.0, "radius", format!("radius must be positive (a > 0), got {}", c.radius));
                check(c.bandlimit >= 8, "bandlimit", format!("bandlimit must be at least 8, got {}", c.bandlimit));
            }
            Surface::Torus => {
                let key = if self.lines.contains_key("r") { "r" } else { "R" };
                check(c.minor > 0.0 && c.minor < c.major, key, format!("torus radii need 0 < r < R, got R={} r={}", c.major, c.minor));
                for (key, n) in [("n_theta", c.n_theta), ("n_phi", c.n_phi)] {
                    check(n >= 32 && n % 2 == 0, key, format!("{key} must be even and at least 32, got {n}"));
                }
            }
        }
        check(c.nu > 0.0, "nu", format!("viscosity must be positive (nu > 0), got {}", c.nu));
        check(c.gamma0 >= 0.0, "gamma0", format!("gamma0 must be nonnegative, got {}", c.gamma0));
        check(c.gamma1 >= 0.0, "gamma1", format!("gamma1 must be nonnegative, got {}", c.gamma1));
        check(c.dt > 0.0, "dt", format!("time step must be positive, got {}", c.dt));
        check(c.t_final >= 0.0, "T", format!("final time must be nonnegative, got {}", c.t_final));
        check(c.k >= 1, "k", "Galerkin dimension k must be at least 1".into());
        check(c.samples >= 1, "samples", "samples must be at least 1".into());
        check(c.nr >= 1, "nr", "radial node count nr must be at least 1".into());
        check(
            c.epsilons.len() >= 2 && c.epsilons.iter().all(|e| *e > 0.0 && *e <= 1.0),
            "epsilons",
            "epsilons needs at least two values in (0, 1]".into(),
        );
        let needs_sphere = matches!(c.command, Command::Solve | Command::Galerkin);
        check(
            !(needs_sphere && c.surface == Surface::Torus),
            "surface",
            format!("command {} needs the sphere surface", c.command.name()),
        );
    }
}

/// Parse and validate a config, reporting every violation.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_over(RunConfig::default(), text)
}

/// Parse `text` as overrides on top of `base`. A `preset=<name>` line
/// selects the base and must come before any other key.
pub fn parse_over(base: RunConfig, text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut p = Parser { cfg: base, issues: Vec::new(), lines: Default::default() };
    let mut seen_other = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            p.fail(Some(line), format!("expected key=value, got '{body}'"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(key) = KEYS.iter().copied().find(|x| *x == k) else {
            p.fail(Some(line), format!("unknown key '{k}'"));
            continue;
        };
        if let Some(prev) = p.line_of(key) {
            p.fail(Some(line), format!("duplicate key '{key}' (first set on line {prev})"));
            continue;
        }
        p.lines.insert(key, line);
        if key == "preset" {
            if seen_other {
                p.fail(Some(line), "preset must precede all other keys".into());
            } else {
                match preset(v) {
                    Some(cfg) => p.cfg = cfg,
                    None => p.fail(Some(line), format!("unknown preset '{v}' ({})", PRESETS.map(|(n, _)| n).join(", "))),
                }
            }
            continue;
        }
        seen_other = true;
        p.set(line, key, v);
    }
    p.validate();
    if p.issues.is_empty() {
        Ok(p.cfg)
    } else {
        Err(ConfigErrors(p.issues))
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Canonical text form; `parse_config(cfg.to_text())` returns `cfg`.
    pub fn to_text(&self) -> String {
        let mut s = self.hashed_text();
        s.push_str(&format!("out={}\n", self.out.display()));
        s
    }

    /// Canonical text without the output directory, used for the run id.
    pub fn hashed_text(&self) -> String {
        let eps: Vec<String> = self.epsilons.iter().map(|e| fmt_f(*e)).collect();
        let surface = match self.surface {
            Surface::Sphere => "sphere",
            Surface::Torus => "torus",
        };
        let lines = [
            ("command", self.command.name().to_string()),
            ("surface", surface.to_string()),
            ("radius", fmt_f(self.radius)),
            ("bandlimit", self.bandlimit.to_string()),
            ("R", fmt_f(self.major)),
            ("r", fmt_f(self.minor)),
            ("n_theta", self.n_theta.to_string()),
            ("n_phi", self.n_phi.to_string()),
            ("nu", fmt_f(self.nu)),
            ("gamma0", fmt_f(self.gamma0)),
            ("gamma1", fmt_f(self.gamma1)),
            ("g_expr", self.g_expr.clone()),
            ("g0_expr", self.g0_expr.clone()),
            ("g1_expr", self.g1_expr.clone()),
            ("f_expr", self.f_expr.clone()),
            ("v0_expr", format_velocity(&self.v0)),
            ("dt", fmt_f(self.dt)),
            ("T", fmt_f(self.t_final)),
            ("nonlinear", self.nonlinear.to_string()),
            ("dealias", self.dealias.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
            ("k", self.k.to_string()),
            ("samples", self.samples.to_string()),
            ("refine", self.refine.to_string()),
            ("epsilons", eps.join(",")),
            ("nr", self.nr.to_string()),
            ("seed", self.seed.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Shipped presets, one per acceptance experiment.
pub const PRESETS: [(&str, &str); 5] = [
    (
        "killing-stationary",
        "command=solve\nsurface=sphere\nbandlimit=32\nnu=0.1\nv0_expr=killing(0,0,1)\ndt=0.001\nT=1\nsnapshot_every=100\n",
    ),
    (
        "mode-decay-l2",
        "command=solve\nsurface=sphere\nbandlimit=32\nnu=0.1\nnonlinear=false\nv0_expr=toroidal(2,0,1)\ndt=0.001\nT=1\nsnapshot_every=100\n",
    ),
    (
        "manufactured-g",
        "command=helmholtz\nsurface=sphere\nbandlimit=32\ng_expr=1 + 0.15*(3*z*z - 1)\nsamples=100\n",
    ),
    ("torus-identities", "command=verify\nsurface=torus\nR=2\nr=1\nn_theta=64\nn_phi=64\nrefine=true\n"),
    (
        "thinfilm-rates",
        "command=thinfilm\nsurface=sphere\nbandlimit=32\ng0_expr=0\ng1_expr=1 + 0.15*(3*z*z - 1)\nepsilons=0.1,0.05,0.025,0.0125\nnr=16\n",
    ),
];

pub fn preset(name: &str) -> Option<RunConfig> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name)?;
    Some(parse_config(text).expect("shipped presets are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = parse_config("command=verify\nsurface=sphere\nbandlimit=32").unwrap();
        assert_eq!(c.command, Command::Verify);
        assert_eq!(c.bandlimit, 32);
    }

    #[test]
    fn reports_every_violation_with_lines() {
        let e = parse_config("# header\nnu=-1\nsurface=torus\nR=1\nr=2\nbogus=3\ndt=abc\n").unwrap_err();
        let text = e.to_string();
        assert!(text.contains("line 2: viscosity must be positive (nu > 0)"), "{text}");
        assert!(text.contains("line 5: torus radii need 0 < r < R"), "{text}");
        assert!(text.contains("line 6: unknown key 'bogus'"), "{text}");
        assert!(text.contains("line 7: dt: expected a number"), "{text}");
    }

    #[test]
    fn round_trip() {
        for (name, _) in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(parse_config(&c.to_text()).unwrap(), c, "{name}");
        }
        let c = parse_config("seed=0x5EED\nepsilons=0.2, 0.1\nv0_expr=random(3,0.5);poloidal(1,-1,2)\nout=/tmp/x y").unwrap();
        assert_eq!(c.seed, 0x5EED);
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn preset_overrides() {
        let c = parse_config("preset=mode-decay-l2\nnu=0.05").unwrap();
        assert!(!c.nonlinear);
        assert_eq!(c.nu, 0.05);
        assert!(parse_config("nu=0.05\npreset=mode-decay-l2").is_err());
        assert!(parse_config("nu=0.1\nnu=0.2").is_err());
    }
}
