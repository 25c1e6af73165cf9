//! Field expressions in config files.
//!
//! Scalar and vector data use `evalexpr` syntax in the variables `x, y, z`
//! (and `t` for forces); vectors are 3-tuples such as `(0, 0, z)`. Integer
//! literals follow integer arithmetic, so write `0.5` rather than `1/2`.
//!
//! Initial velocities use a small term grammar, terms separated by `;`:
//! `killing(a1,a2,a3)`, `toroidal(l,m,amp)`, `poloidal(l,m,amp)`,
//! `random(degree,amp)`. Negative `m` selects the sine harmonic.

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use surfns::random::FieldSampler;
use surfns::sphere::SphCoeffs;
use surfns::{Error, Result, SurfaceGrid, TangentField, Vec3};

#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    node: Node<DefaultNumericTypes>,
}

impl Expr {
    pub fn parse(src: &str) -> std::result::Result<Self, String> {
        let node = build_operator_tree::<DefaultNumericTypes>(src).map_err(|e| format!("bad expression '{src}': {e}"))?;
        for id in node.iter_variable_identifiers() {
            if !matches!(id, "x" | "y" | "z" | "t") {
                return Err(format!("unknown variable '{id}' in '{src}'"));
            }
        }
        Ok(Self { src: src.to_string(), node })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn uses_time(&self) -> bool {
        self.node.iter_variable_identifiers().any(|v| v == "t")
    }

    fn eval(&self, p: &Vec3, t: f64) -> std::result::Result<Value, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (k, v) in [("x", p.x), ("y", p.y), ("z", p.z), ("t", t)] {
            ctx.set_value(k.into(), Value::Float(v)).map_err(|e| e.to_string())?;
        }
        self.node.eval_with_context(&ctx).map_err(|e| format!("evaluating '{}': {e}", self.src))
    }

    pub fn scalar_at(&self, p: &Vec3, t: f64) -> std::result::Result<f64, String> {
        as_float(self.eval(p, t)?, &self.src)
    }

    /// A 3-tuple, or the scalar `0` for the zero vector.
    pub fn vector_at(&self, p: &Vec3, t: f64) -> std::result::Result<Vec3, String> {
        match self.eval(p, t)? {
            Value::Tuple(items) if items.len() == 3 => {
                let mut out = Vec3::zeros();
                for (k, v) in items.into_iter().enumerate() {
                    out[k] = as_float(v, &self.src)?;
                }
                Ok(out)
            }
            v => match as_float(v, &self.src) {
                Ok(x) if x == 0.0 => Ok(Vec3::zeros()),
                _ => Err(format!("'{}' must evaluate to a 3-tuple", self.src)),
            },
        }
    }

    pub fn sample_scalar(&self, grid: &SurfaceGrid) -> Result<Vec<f64>> {
        grid.nodes.iter().map(|p| self.scalar_at(p, 0.0).map_err(Error::Config)).collect()
    }

    pub fn sample_vector(&self, grid: &SurfaceGrid, t: f64) -> Result<Vec<Vec3>> {
        grid.nodes.iter().map(|p| self.vector_at(p, t).map_err(Error::Config)).collect()
    }
}

fn as_float(v: Value, src: &str) -> std::result::Result<f64, String> {
    match v {
        Value::Float(x) => Ok(x),
        Value::Int(i) => Ok(i as f64),
        other => Err(format!("'{src}' must evaluate to a number, got {other}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelocityTerm {
    Killing([f64; 3]),
    Toroidal { l: usize, m: i64, amp: f64 },
    Poloidal { l: usize, m: i64, amp: f64 },
    Random { degree: usize, amp: f64 },
}

pub fn parse_velocity(src: &str) -> std::result::Result<Vec<VelocityTerm>, String> {
    let mut terms = Vec::new();
    for raw in src.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, rest) = raw.split_once('(').ok_or_else(|| format!("term '{raw}' needs arguments"))?;
        let args = rest.strip_suffix(')').ok_or_else(|| format!("term '{raw}' is missing ')'"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| format!("bad number '{}' in '{raw}'", a.trim())))
            .collect::<std::result::Result<_, _>>()?;
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(format!("'{}' takes {n} arguments, got {}", name.trim(), nums.len()))
            }
        };
        let degree = |x: f64, what: &str| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(format!("{what} must be a nonnegative integer in '{raw}'"))
            }
        };
        let term = match name.trim() {
            "killing" => {
                arity(3)?;
                VelocityTerm::Killing([nums[0], nums[1], nums[2]])
            }
            kind @ ("toroidal" | "poloidal") => {
                arity(3)?;
                let l = degree(nums[0], "degree")?;
                if l == 0 || nums[1].fract() != 0.0 || nums[1].abs() > l as f64 {
                    return Err(format!("need l >= 1 and integer |m| <= l in '{raw}'"));
                }
                let (m, amp) = (nums[1] as i64, nums[2]);
                if kind == "toroidal" {
                    VelocityTerm::Toroidal { l, m, amp }
                } else {
                    VelocityTerm::Poloidal { l, m, amp }
                }
            }
            "random" => {
                arity(2)?;
                VelocityTerm::Random { degree: degree(nums[0], "degree")?, amp: nums[1] }
            }
            other => return Err(format!("unknown velocity term '{other}'")),
        };
        terms.push(term);
    }
    Ok(terms)
}

pub fn format_velocity(terms: &[VelocityTerm]) -> String {
    terms
        .iter()
        .map(|t| match t {
            VelocityTerm::Killing([a, b, c]) => format!("killing({a},{b},{c})"),
            VelocityTerm::Toroidal { l, m, amp } => format!("toroidal({l},{m},{amp})"),
            VelocityTerm::Poloidal { l, m, amp } => format!("poloidal({l},{m},{amp})"),
            VelocityTerm::Random { degree, amp } => format!("random({degree},{amp})"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Sample the initial velocity on `grid`. Harmonic terms need the sphere.
pub fn build_velocity(grid: &SurfaceGrid, terms: &[VelocityTerm], seed: u64) -> Result<TangentField> {
    let mut v = vec![Vec3::zeros(); grid.len()];
    for term in terms {
        let add: Vec<Vec3> = match term {
            VelocityTerm::Killing(a) => {
                let a = Vec3::new(a[0], a[1], a[2]);
                grid.nodes.iter().map(|y| a.cross(y)).collect()
            }
            VelocityTerm::Toroidal { l, m, amp } | VelocityTerm::Poloidal { l, m, amp } => {
                let s = grid
                    .sphere_data()
                    .ok_or_else(|| Error::Config("harmonic velocity terms need the sphere backend".into()))?;
                if *l > s.transform.lmax {
                    return Err(Error::Config(format!("degree {l} exceeds the bandlimit {}", s.transform.lmax)));
                }
                let mut c = SphCoeffs::zeros(s.transform.lmax);
                let mu = m.unsigned_abs() as usize;
                if *m < 0 {
                    c.set(*l, mu, 0.0, *amp);
                } else {
                    c.set(*l, mu, *amp, 0.0);
                }
                let gr = grid.sphere_grad_coeffs(&c);
                if matches!(term, VelocityTerm::Toroidal { .. }) {
                    gr.iter().zip(&grid.normals).map(|(d, n)| n.cross(d)).collect()
                } else {
                    gr
                }
            }
            VelocityTerm::Random { degree, amp } => {
                let mut sampler = FieldSampler::new(grid, seed ^ (*degree as u64).rotate_left(32), *degree);
                sampler.tangent().values().iter().map(|x| x * *amp).collect()
            }
        };
        v.iter_mut().zip(add).for_each(|(a, b)| *a += b);
    }
    grid.tangent(v)
}
