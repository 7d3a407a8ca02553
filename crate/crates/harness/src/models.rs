//! Model files on disk. RankSVM files carry `w`; baseline files carry a
//! `kind` tag.

use std::path::Path;

use caserank::baselines::{LogisticModel, RankNetModel};
use caserank::{LinearModel, Scorer};

use crate::error::{HarnessError, Result};

pub fn load_model(path: &Path) -> Result<Box<dyn Scorer + Send + Sync>> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(match value.get("kind").and_then(|k| k.as_str()) {
        None => Box::new(LinearModel::from_json(&text)?),
        Some("ranknet") => Box::new(RankNetModel::from_json(&text)?),
        Some("logistic") => Box::new(LogisticModel::from_json(&text)?),
        Some(other) => {
            return Err(HarnessError::Config(format!(
                "{}: unknown model kind {other:?}",
                path.display()
            )))
        }
    })
}
