//! Versioned, self-describing JSON envelope for trained models.
//!
//! ```text
//! {"format":"knobctl-model","version":1,"kind":"cost_tree","scalar":"f64","model":{...}}
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::fitness::{FitnessTable, M5Fitness};
use super::linear::{LinearCostModel, LinearFitnessModel};
use super::tree::TreeCostModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT: &str = "knobctl-model";
pub const VERSION: u32 = 1;

/// A model type that can be written to and read from disk.
pub trait Persisted: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn scalar_name() -> &'static str;

    /// Structural checks run after loading.
    fn check(&self) -> Result<()>;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'static str,
    version: u32,
    kind: &'static str,
    scalar: &'static str,
    model: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    scalar: String,
    model: T,
}

pub fn to_string<T: Persisted>(model: &T) -> Result<String> {
    let env = EnvelopeRef {
        format: FORMAT,
        version: VERSION,
        kind: T::KIND,
        scalar: T::scalar_name(),
        model,
    };
    Ok(serde_json::to_string_pretty(&env)? + "\n")
}

pub fn from_str<T: Persisted>(text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.format != FORMAT {
        return Err(Error::Model(format!("unknown model format `{}`", env.format)));
    }
    if env.version != VERSION {
        return Err(Error::Model(format!(
            "unsupported model version {} (expected {VERSION})",
            env.version
        )));
    }
    if env.kind != T::KIND {
        return Err(Error::Model(format!(
            "expected a `{}` model, found `{}`",
            T::KIND,
            env.kind
        )));
    }
    if env.scalar != T::scalar_name() {
        return Err(Error::Model(format!(
            "model stored as {}, requested {}",
            env.scalar,
            T::scalar_name()
        )));
    }
    let model: T = serde_json::from_value(env.model)?;
    model.check()?;
    Ok(model)
}

pub fn save<T: Persisted>(model: &T, path: &Path) -> Result<()> {
    fs::write(path, to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Persisted>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}

fn scalar<F: Scalar>() -> &'static str {
    std::any::type_name::<F>()
}

impl<F: Scalar> Persisted for TreeCostModel<F> {
    const KIND: &'static str = "cost_tree";

    fn scalar_name() -> &'static str {
        scalar::<F>()
    }

    fn check(&self) -> Result<()> {
        self.space.validate()?;
        self.tree.validate()?;
        if self.tree.dim < self.space.arity() {
            return Err(Error::Model("tree dimension smaller than knob count".into()));
        }
        Ok(())
    }
}

impl<F: Scalar> Persisted for LinearCostModel<F> {
    const KIND: &'static str = "cost_linear";

    fn scalar_name() -> &'static str {
        scalar::<F>()
    }

    fn check(&self) -> Result<()> {
        self.space.validate()
    }
}

impl<F: Scalar> Persisted for LinearFitnessModel<F> {
    const KIND: &'static str = "fitness_linear";

    fn scalar_name() -> &'static str {
        scalar::<F>()
    }

    fn check(&self) -> Result<()> {
        self.space.validate()?;
        if self.model.coefs.len() != self.space.arity() + 1 {
            return Err(Error::Model("fitness model expects knob values plus epsilon".into()));
        }
        Ok(())
    }
}

impl<F: Scalar> Persisted for FitnessTable<F> {
    const KIND: &'static str = "fitness_table";

    fn scalar_name() -> &'static str {
        scalar::<F>()
    }

    fn check(&self) -> Result<()> {
        self.space.validate()?;
        for (s, row) in &self.rows {
            self.space.check(s)?;
            if row.len() != self.epsilon_grid.len() {
                return Err(Error::Model(format!("row {s} does not match the epsilon grid")));
            }
        }
        Ok(())
    }
}

impl<F: Scalar> Persisted for M5Fitness<F> {
    const KIND: &'static str = "fitness_m5";

    fn scalar_name() -> &'static str {
        scalar::<F>()
    }

    fn check(&self) -> Result<()> {
        self.space.validate()?;
        self.tree.validate()?;
        if self.tree.dim != self.space.arity() + 1 {
            return Err(Error::Model("fitness tree expects knob values plus epsilon".into()));
        }
        Ok(())
    }
}
