//! Problem definitions in TOML.
//!
//! ```toml
//! name = "example"
//! n = 1
//! m = 1
//! horizon = 2.0
//! x0 = [-1.0]
//! # one list of monomials per component of f; powers over x then u
//! f = [[{ coef = 1.0, u = [1] }]]
//! g = [{ coef = 1.0, x = [1] }]
//! phi = [{ coef = -2.0, x = [1] }]
//! c = [[{ coef = 1.0, u = [1] }, { coef = -1.0 }],
//!      [{ coef = -1.0, u = [1] }, { coef = -1.0 }]]
//!
//! [box_hull]
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [solver]
//! n_arc = 200
//! ```
//!
//! Omitted powers are zero. `c` may be empty (`l = 0`).

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::poly::{PolyMap, Polynomial};
use crate::problem::{BoxHull, ProblemSpec};
use crate::solve::SolverOptions;
use crate::verify::{Tolerances, VerifyOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialConfig {
    pub coef: f64,
    #[serde(default)]
    pub x: Vec<u32>,
    #[serde(default)]
    pub u: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub f: Vec<Vec<MonomialConfig>>,
    pub g: Vec<MonomialConfig>,
    #[serde(default)]
    pub phi: Vec<MonomialConfig>,
    #[serde(default)]
    pub c: Vec<Vec<MonomialConfig>>,
    pub box_hull: Option<BoxConfig>,
    pub solver: Option<SolverOptions>,
    pub tolerances: Option<Tolerances>,
    pub verify: Option<VerifyOptions>,
}

fn default_name() -> String {
    "config".to_string()
}

fn polynomial(
    terms: &[MonomialConfig],
    n_x: usize,
    n_u: usize,
    what: &str,
) -> Result<Polynomial> {
    let mut p = Polynomial::new(n_x + n_u);
    for t in terms {
        if t.x.len() > n_x || t.u.len() > n_u {
            return Err(Error::Config(format!(
                "{what}: monomial has {} x powers and {} u powers, at most {n_x} and {n_u} allowed",
                t.x.len(),
                t.u.len()
            )));
        }
        let mut powers = vec![0; n_x + n_u];
        powers[..t.x.len()].copy_from_slice(&t.x);
        powers[n_x..n_x + t.u.len()].copy_from_slice(&t.u);
        p = p.term(t.coef, &powers);
    }
    Ok(p)
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let (n, m) = (self.n, self.m);
        let f = self
            .f
            .iter()
            .enumerate()
            .map(|(i, c)| polynomial(c, n, m, &format!("f[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let c = self
            .c
            .iter()
            .enumerate()
            .map(|(i, c)| polynomial(c, 0, m, &format!("c[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let spec = ProblemSpec {
            name: self.name.clone(),
            n,
            m,
            l: c.len(),
            f: Arc::new(PolyMap::new(n + m, f)),
            g: Arc::new(PolyMap::new(n, vec![polynomial(&self.g, n, 0, "g")?])),
            c: Arc::new(PolyMap::new(m, c)),
            phi: Arc::new(PolyMap::new(n, vec![polynomial(&self.phi, n, 0, "phi")?])),
            x0: self.x0.clone(),
            horizon: self.horizon,
            box_hull: self
                .box_hull
                .as_ref()
                .map(|b| BoxHull::new(b.lower.clone(), b.upper.clone())),
            initial_guess: None,
        };
        spec.check()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;

    const LINEAR: &str = r#"
name = "linear_from_toml"
n = 1
m = 1
horizon = 2.0
x0 = [-1.0]
f = [[{ coef = 1.0, u = [1] }]]
g = [{ coef = 1.0, x = [1] }]
phi = [{ coef = -2.0, x = [1] }]
c = [[{ coef = 1.0, u = [1] }, { coef = -1.0 }],
     [{ coef = -1.0, u = [1] }, { coef = -1.0 }]]

[box_hull]
lower = [-1.0]
upper = [1.0]

[solver]
n_arc = 64
"#;

    #[test]
    fn toml_matches_catalog() {
        let cfg = ProblemConfig::parse(LINEAR).unwrap();
        assert_eq!(cfg.solver.as_ref().unwrap().n_arc, 64);
        let a = cfg.to_spec().unwrap();
        let b = catalog("linear_payoff_1d").unwrap();
        for x in [-1.3, 0.0, 0.7] {
            for u in [-1.0, 0.25, 1.0] {
                assert_eq!(a.dynamics(&[x], &[u]), b.dynamics(&[x], &[u]));
                assert_eq!(a.constraints(&[u]), b.constraints(&[u]));
            }
            assert_eq!(a.g(&[x]), b.g(&[x]));
            assert_eq!(a.phi(&[x]), b.phi(&[x]));
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ProblemConfig::parse("n = 1").is_err());
        let too_many = LINEAR.replace("u = [1] }]]", "u = [1, 1] }]]");
        assert!(ProblemConfig::parse(&too_many).unwrap().to_spec().is_err());
        let bad_x0 = LINEAR.replace("x0 = [-1.0]", "x0 = [-1.0, 0.0]");
        assert!(ProblemConfig::parse(&bad_x0).unwrap().to_spec().is_err());
    }
}
