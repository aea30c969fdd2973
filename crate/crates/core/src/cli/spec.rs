//! Predictor SPEC mini-language:
//! `lexicon:PATH` | `patchint:THRESH` | `fusion:ALPHA:SPEC:SPEC` | `model:PATH` | `external:CMD`.
//!
//! `external:` takes the rest of the string, so inside `fusion` it can only be the image side.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};

use crate::predictor::{
    external_predictor, late_fusion_fixed, lexicon_predictor, patch_intensity_predictor, trained_predictor, ExternalConfig, ModelParams,
    PredictorHandle,
};

#[derive(Debug, Clone, Copy)]
pub struct SpecContext {
    /// Bridge processes for `external:` predictors.
    pub workers: usize,
    pub timeout: Duration,
}

/// Lexicon file: a JSON object mapping words to finite weights.
pub fn load_lexicon(path: &Path) -> Result<BTreeMap<String, f64>> {
    let body = std::fs::read_to_string(path).with_context(|| format!("reading lexicon {}", path.display()))?;
    let lex: BTreeMap<String, f64> = serde_json::from_str(&body).with_context(|| format!("parsing lexicon {}", path.display()))?;
    if let Some((w, v)) = lex.iter().find(|(_, v)| !v.is_finite()) {
        bail!("lexicon weight for {w:?} is not finite: {v}");
    }
    Ok(lex)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let body = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let params: ModelParams = serde_json::from_str(&body).with_context(|| format!("parsing model {}", path.display()))?;
    if !params.is_finite() {
        bail!("model {} has non-finite parameters", path.display());
    }
    Ok(params)
}

pub fn parse_predictor(spec: &str, ctx: &SpecContext) -> Result<PredictorHandle> {
    let parts: Vec<&str> = spec.split(':').collect();
    let (handle, used) = parse_at(&parts, ctx).with_context(|| format!("predictor spec {spec:?}"))?;
    if used != parts.len() {
        bail!("trailing input {:?} in predictor spec {spec:?}", parts[used..].join(":"));
    }
    Ok(handle)
}

fn arg<'a>(parts: &[&'a str], i: usize, what: &str) -> Result<&'a str> {
    match parts.get(i) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => bail!("missing {what}"),
    }
}

fn parse_at(parts: &[&str], ctx: &SpecContext) -> Result<(PredictorHandle, usize)> {
    let kind = arg(parts, 0, "predictor kind")?;
    match kind {
        "lexicon" => {
            let lex = load_lexicon(Path::new(arg(parts, 1, "lexicon path")?))?;
            Ok((lexicon_predictor(lex), 2))
        }
        "patchint" => {
            let t: f64 = arg(parts, 1, "threshold")?.parse().context("patchint threshold")?;
            Ok((patch_intensity_predictor(t), 2))
        }
        "model" => Ok((trained_predictor(load_model(Path::new(arg(parts, 1, "model path")?))?), 2)),
        "external" => {
            let cmd = parts[1..].join(":");
            if cmd.trim().is_empty() {
                bail!("missing bridge command");
            }
            let cfg = ExternalConfig { command: cmd, timeout: ctx.timeout, connections: ctx.workers.max(1) };
            Ok((external_predictor(cfg)?, parts.len()))
        }
        "fusion" => {
            let alpha: f64 = arg(parts, 1, "fusion alpha")?.parse().context("fusion alpha")?;
            if !(0.0..=1.0).contains(&alpha) {
                bail!("fusion alpha {alpha} must lie in [0, 1]");
            }
            let (text, a) = parse_at(&parts[2..], ctx)?;
            let (image, b) = parse_at(&parts[2 + a..], ctx)?;
            Ok((late_fusion_fixed(alpha, text, image), 2 + a + b))
        }
        other => bail!("unknown predictor kind {other:?} (lexicon|patchint|fusion|model|external)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::Scorer;

    fn ctx() -> SpecContext {
        SpecContext { workers: 1, timeout: Duration::from_secs(5) }
    }

    #[test]
    fn nested_fusion() {
        let dir = tempfile::tempdir().unwrap();
        let lex = dir.path().join("lex.json");
        std::fs::write(&lex, r#"{"virus": 2.0}"#).unwrap();
        let spec = format!("fusion:0.7:lexicon:{}:patchint:100", lex.display());
        let h = parse_predictor(&spec, &ctx()).unwrap();
        match h.scorer {
            Scorer::LateFusionFixed { alpha, text, image } => {
                assert_eq!(alpha, 0.7);
                assert_eq!(text.kind(), "lexicon");
                assert_eq!(image.kind(), "patch_intensity");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_specs() {
        for bad in ["", "nope:1", "patchint", "patchint:x", "fusion:2:patchint:1:patchint:1", "fusion:0.5:patchint:1", "patchint:1:extra", "lexicon:/does/not/exist.json"] {
            assert!(parse_predictor(bad, &ctx()).is_err(), "{bad}");
        }
    }
}
