use std::fs;
use std::path::Path;

use modalmeta_core::meta::ExperimentConfig;

use crate::error::{AppError, AppResult};

/// Reads and validates a JSON experiment config. Absent fields take their
/// defaults; unknown fields are rejected.
pub fn load_config(path: &Path) -> AppResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| AppError::ConfigIo {
        path: path.into(),
        source,
    })?;
    parse_config(&text).map_err(|detail| AppError::Config {
        path: path.into(),
        detail,
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(parse_config("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(parse_config(r#"{"sed": 3}"#).is_err());
        assert!(parse_config(r#"{"inner": {"alpah": 0.1}}"#).is_err());
    }

    #[test]
    fn partial_override() {
        let c = parse_config(r#"{"seed": 7, "meta": {"meta_batch": 4, "trainer": "maml"}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.meta.meta_batch, 4);
        assert_eq!(c.meta.meta_lr, 0.001);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse_config(r#"{"meta": {"meta_batch": 0}}"#).is_err());
        assert!(parse_config(r#"{"architecture": {"widths": [2, 1]}}"#).is_err());
    }
}
