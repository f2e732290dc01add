//! Ready-made [`MethodRunner`]s and the `kind:path` method syntax used by
//! `cave eval`.

use std::path::{Path, PathBuf};

use super::{binarize, MethodRunner};
use crate::baseline::{cascade_kmeans, frangi_kmeans_pipeline, BaselineParams};
use crate::data::{load_mask, AvMask, DsaSeries};
use crate::error::{CaveError, Result};
use crate::model::{load_checkpoint, SegNet};

/// CAVE or U-Net checkpoint, thresholded per channel.
pub struct NetRunner {
    pub name: String,
    pub model: SegNet,
    pub threshold: f32,
}

impl MethodRunner for NetRunner {
    fn name(&self) -> &str {
        &self.name
    }
    fn segment(&mut self, series: &DsaSeries) -> Result<AvMask> {
        binarize(self.model.predict(series)?.view(), self.threshold)
    }
}

/// U-Net vessel mask (channel union) followed by curve clustering.
pub struct CascadeRunner {
    pub name: String,
    pub unet: SegNet,
    pub params: BaselineParams,
    pub threshold: f32,
}

impl MethodRunner for CascadeRunner {
    fn name(&self) -> &str {
        &self.name
    }
    fn segment(&mut self, series: &DsaSeries) -> Result<AvMask> {
        let vessels = binarize(self.unet.predict(series)?.view(), self.threshold)?.union();
        Ok(cascade_kmeans(&vessels, series, &self.params.kmeans)?.mask)
    }
}

pub struct FrangiKmeansRunner {
    pub name: String,
    pub params: BaselineParams,
}

impl MethodRunner for FrangiKmeansRunner {
    fn name(&self) -> &str {
        &self.name
    }
    fn segment(&mut self, series: &DsaSeries) -> Result<AvMask> {
        Ok(frangi_kmeans_pipeline(series, &self.params.frangi, &self.params.kmeans)?.mask)
    }
}

/// Precomputed predictions stored as `<dir>/<series_id>.png`.
pub struct MaskDirRunner {
    pub name: String,
    pub dir: PathBuf,
}

impl MethodRunner for MaskDirRunner {
    fn name(&self) -> &str {
        &self.name
    }
    fn segment(&mut self, series: &DsaSeries) -> Result<AvMask> {
        load_mask(self.dir.join(format!("{}.png", series.series_id)))
    }
}

pub fn load_baseline_params(path: Option<&Path>) -> Result<BaselineParams> {
    let params: BaselineParams = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CaveError::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => BaselineParams::default(),
    };
    params.frangi.validate()?;
    params.kmeans.validate()?;
    Ok(params)
}

/// Parse `kind[:path]`, with an optional `label=` prefix, into a runner.
///
/// Kinds: `cave:<ckpt>`, `unet:<ckpt>`, `unet-kmeans:<ckpt>[+<params.json>]`,
/// `frangi-kmeans[:<params.json>]`, `masks:<dir>`.
pub fn parse_method(method: &str) -> Result<Box<dyn MethodRunner>> {
    let (label, rest) = match method.split_once('=') {
        Some((l, r)) if !l.contains(':') => (Some(l.to_string()), r),
        _ => (None, method),
    };
    let (kind, arg) = match rest.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (rest, None),
    };
    let name = label.unwrap_or_else(|| kind.to_string());
    let need = |what: &str| {
        arg.filter(|a| !a.is_empty())
            .ok_or_else(|| CaveError::Validation(format!("method {kind:?} needs {what}")))
    };
    Ok(match kind {
        "cave" | "unet" => {
            let model = load_checkpoint(need("a checkpoint path")?)?.model;
            if (kind == "cave") != model.config().is_temporal() {
                return Err(CaveError::Validation(format!(
                    "checkpoint for {kind:?} has temporal module {}",
                    model.config().temporal_module.as_str()
                )));
            }
            Box::new(NetRunner {
                name,
                model,
                threshold: 0.5,
            })
        }
        "unet-kmeans" => {
            let a = need("a checkpoint path")?;
            let (ckpt, params) = match a.split_once('+') {
                Some((c, p)) => (c, Some(Path::new(p))),
                None => (a, None),
            };
            let unet = load_checkpoint(ckpt)?.model;
            if unet.config().is_temporal() {
                return Err(CaveError::Validation("unet-kmeans needs a U-Net checkpoint".into()));
            }
            Box::new(CascadeRunner {
                name,
                unet,
                params: load_baseline_params(params)?,
                threshold: 0.5,
            })
        }
        "frangi-kmeans" => Box::new(FrangiKmeansRunner {
            name,
            params: load_baseline_params(arg.filter(|a| !a.is_empty()).map(Path::new))?,
        }),
        "masks" => Box::new(MaskDirRunner {
            name,
            dir: PathBuf::from(need("a directory")?),
        }),
        other => return Err(CaveError::Validation(format!("unknown method kind {other:?}"))),
    })
}
