//! Model registry: built-in names and model-parameter files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{MeanFieldSection, SigmaChoice};
use crate::error::{Error, Result};
use crate::meanfield::{logistic_model, mf_model, ou_benchmark, MeanFieldParams};
use crate::model::ModelSpec;

pub const BUILTIN_MODELS: &[&str] = &["ou_benchmark", "logistic", "zero_noise", "meanfield"];

/// Contents of a model-parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFile {
    Ou { theta: Vec<f64>, sigma: Vec<f64>, q: Vec<Vec<f64>>, rate_bound: f64 },
    Logistic { a: Vec<f64>, b: Vec<f64>, sigma: Vec<f64>, q: Vec<Vec<f64>>, rate_bound: f64 },
    /// No drift, no noise, no switching.
    ZeroNoise { dim: usize },
}

impl ModelFile {
    pub fn build(&self) -> Result<ModelSpec> {
        match self.clone() {
            ModelFile::Ou { theta, sigma, q, rate_bound } => Ok(ou_benchmark(theta, sigma, q, rate_bound)?.0),
            ModelFile::Logistic { a, b, sigma, q, rate_bound } => logistic_model(a, b, sigma, q, rate_bound),
            ModelFile::ZeroNoise { dim } => Ok(ModelSpec::new(dim, 1.0)?.named("zero_noise").with_regimes(1)),
        }
    }
}

pub fn mean_field_params(s: &MeanFieldSection) -> Result<MeanFieldParams> {
    let mut p = MeanFieldParams::new(s.n, s.alpha.clone(), s.beta.clone(), s.lambda0)?;
    if let Some(l) = s.lambda {
        p = p.with_lambda(l)?;
    }
    Ok(match s.sigma {
        SigmaChoice::Unit => p,
        SigmaChoice::Sine { amplitude } => p.with_sigma(move |x, _, out| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = 1.0 + amplitude * v.sin();
            }
        }),
        SigmaChoice::Growing => p.with_sigma(|x, _, out| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = (1.0 + v * v).sqrt();
            }
        }),
    })
}

/// Resolves a built-in name, else reads the path as a TOML or JSON model file.
pub fn resolve_model(name: &str, mf: &MeanFieldSection) -> Result<ModelSpec> {
    let builtin = match name {
        "ou_benchmark" => Some(ModelFile::Ou {
            theta: vec![1.0, 2.0],
            sigma: vec![2f64.sqrt(), 1.0],
            q: vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            rate_bound: 0.5,
        }),
        "logistic" => Some(ModelFile::Logistic {
            a: vec![1.0, 0.5],
            b: vec![1.0, 1.0],
            sigma: vec![0.3, 0.5],
            q: vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            rate_bound: 0.5,
        }),
        "zero_noise" => Some(ModelFile::ZeroNoise { dim: 1 }),
        "meanfield" => return Ok(mf_model(&mean_field_params(mf)?, 1000, 0)?.spec),
        _ => None,
    };
    if let Some(m) = builtin {
        return m.build();
    }
    let path = Path::new(name);
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!(
            "model '{name}' is neither a built-in ({}) nor a readable file: {e}",
            BUILTIN_MODELS.join(", ")
        ))
    })?;
    let file: ModelFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{name}: {e}")))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{name}: {e}")))?
    };
    file.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    #[test]
    fn builtins_resolve() {
        let mf = MeanFieldSection::default();
        for name in BUILTIN_MODELS {
            let m = resolve_model(name, &mf).unwrap();
            assert!(m.dim() >= 1);
        }
        assert!(resolve_model("no_such_model", &mf).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let f = ModelFile::Ou { theta: vec![1.0], sigma: vec![1.0], q: vec![vec![0.0]], rate_bound: 1.0 };
        let text = toml::to_string(&f).unwrap();
        assert_eq!(toml::from_str::<ModelFile>(&text).unwrap(), f);
        assert!(toml::from_str::<ModelFile>("kind = \"zero_noise\"\ndim = 1\nextra = 2").is_err());
    }
}
