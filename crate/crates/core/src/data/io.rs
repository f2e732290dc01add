//! On-disk containers: a directory of `frame_%04d.png` files plus a
//! `meta.json` sidecar for series, and a single RGB PNG for masks
//! (artery in red, vein in blue).

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Rgb, RgbImage};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{AvMask, DsaSeries, View};
use crate::error::{CaveError, Result};

pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub fps: f64,
    #[serde(default)]
    pub view: View,
    #[serde(default)]
    pub series_id: String,
    #[serde(default)]
    pub patient_id: String,
}

fn frame_index(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn load_series(dir: impl AsRef<Path>) -> Result<DsaSeries> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CaveError::Format(format!("missing {}", meta_path.display()))
        } else {
            CaveError::io(&meta_path, e)
        }
    })?;
    let meta: SeriesMeta = serde_json::from_str(&meta_text)
        .map_err(|e| CaveError::Format(format!("{}: {e}", meta_path.display())))?;

    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CaveError::io(dir, e))? {
        let path = entry.map_err(|e| CaveError::io(dir, e))?.path();
        if frame_index(&path).is_some() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, path));
        }
    }
    // zero-padded names: lexical order is frame order
    files.sort();
    if files.is_empty() {
        return Err(CaveError::EmptySeries);
    }

    let mut frames: Vec<GrayImage> = Vec::with_capacity(files.len());
    for (_, path) in &files {
        let img = image::open(path).map_err(|e| CaveError::image(path, e))?;
        frames.push(img.to_luma8());
    }
    let (w, h) = frames[0].dimensions();
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dimensions() != (w, h)) {
        return Err(CaveError::Validation(format!(
            "frame {} is {:?}, expected {:?}",
            files[i].0,
            f.dimensions(),
            (w, h)
        )));
    }
    let (h, w) = (h as usize, w as usize);
    let mut stack = Array3::<f32>::zeros((frames.len(), h, w));
    for (t, frame) in frames.iter().enumerate() {
        for (dst, src) in stack
            .index_axis_mut(ndarray::Axis(0), t)
            .iter_mut()
            .zip(frame.as_raw())
        {
            *dst = *src as f32;
        }
    }
    let series = DsaSeries {
        frames: stack,
        fps: meta.fps,
        view: meta.view,
        series_id: meta.series_id,
        patient_id: meta.patient_id,
    };
    series.validate()?;
    Ok(series)
}

fn quantize(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn save_series(series: &DsaSeries, dir: impl AsRef<Path>) -> Result<()> {
    series.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CaveError::io(dir, e))?;
    let (h, w) = (series.height(), series.width());
    for (t, frame) in series.frames.outer_iter().enumerate() {
        let raw: Vec<u8> = frame.iter().map(|&v| quantize(v)).collect();
        let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer matches frame size");
        let path = dir.join(format!("frame_{t:04}.png"));
        img.save(&path).map_err(|e| CaveError::image(&path, e))?;
    }
    let meta = SeriesMeta {
        fps: series.fps,
        view: series.view,
        series_id: series.series_id.clone(),
        patient_id: series.patient_id.clone(),
    };
    let path = dir.join(META_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| CaveError::io(&path, e))
}

pub fn mask_to_rgb(mask: &AvMask) -> RgbImage {
    let (h, w) = mask.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let red = if mask.artery[[r, c]] { 255 } else { 0 };
        let blue = if mask.vein[[r, c]] { 255 } else { 0 };
        Rgb([red, 0, blue])
    })
}

pub fn mask_from_rgb(img: &RgbImage) -> AvMask {
    let (w, h) = img.dimensions();
    let (h, w) = (h as usize, w as usize);
    let mut artery = Array2::from_elem((h, w), false);
    let mut vein = Array2::from_elem((h, w), false);
    for (x, y, px) in img.enumerate_pixels() {
        let (r, c) = (y as usize, x as usize);
        artery[[r, c]] = px[0] >= 128;
        vein[[r, c]] = px[2] >= 128;
    }
    AvMask { artery, vein }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<AvMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| CaveError::image(path, e))?;
    if !img.color().has_color() {
        return Err(CaveError::Format(format!(
            "{}: mask must be an RGB image, found {:?}",
            path.display(),
            img.color()
        )));
    }
    Ok(mask_from_rgb(&img.to_rgb8()))
}

pub fn save_mask(mask: &AvMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CaveError::io(parent, e))?;
    }
    mask_to_rgb(mask)
        .save(path)
        .map_err(|e| CaveError::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(t: usize, h: usize, w: usize) -> DsaSeries {
        let frames = Array3::from_shape_fn((t, h, w), |(k, i, j)| ((k * 31 + i * 7 + j * 3) % 256) as f32);
        DsaSeries::new(frames, 2.0).unwrap().with_ids("s1", "p1")
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = series(10, 24, 20);
        save_series(&s, dir.path()).unwrap();
        let back = load_series(dir.path()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.n_frames(), 10);
        assert_eq!(back.fps, 2.0);
    }

    #[test]
    fn single_frame_series_writes_one_file() {
        let dir = tempfile::tempdir().unwrap();
        save_series(&series(1, 8, 8), dir.path()).unwrap();
        assert!(dir.path().join("frame_0000.png").exists());
        assert!(!dir.path().join("frame_0001.png").exists());
        assert!(dir.path().join(META_FILE).exists());
    }

    #[test]
    fn missing_meta_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_series(&series(2, 8, 8), dir.path()).unwrap();
        fs::remove_file(dir.path().join(META_FILE)).unwrap();
        assert!(matches!(load_series(dir.path()), Err(CaveError::Format(_))));
    }

    #[test]
    fn missing_view_defaults_to_unknown() {
        let dir = tempfile::tempdir().unwrap();
        save_series(&series(2, 8, 8), dir.path()).unwrap();
        fs::write(dir.path().join(META_FILE), r#"{"fps": 2.0, "series_id": "a", "patient_id": "b"}"#).unwrap();
        let s = load_series(dir.path()).unwrap();
        assert_eq!(s.view, View::Unknown);
        assert_eq!(s.series_id, "a");
    }

    #[test]
    fn view_round_trips_through_meta() {
        let m: SeriesMeta = serde_json::from_str(r#"{"fps": 1, "view": "LATERAL"}"#).unwrap();
        assert_eq!(m.view, View::Lateral);
        let m: SeriesMeta = serde_json::from_str(r#"{"fps": 1, "view": "AP"}"#).unwrap();
        assert_eq!(m.view, View::Ap);
        assert!(serde_json::to_string(&m).unwrap().contains("\"AP\""));
    }

    #[test]
    fn mixed_frame_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_series(&series(2, 8, 8), dir.path()).unwrap();
        GrayImage::new(9, 8).save(dir.path().join("frame_0002.png")).unwrap();
        assert!(matches!(load_series(dir.path()), Err(CaveError::Validation(_))));
    }

    #[test]
    fn empty_directory_with_meta_is_empty_series() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(META_FILE), r#"{"fps": 1.0}"#).unwrap();
        assert!(matches!(load_series(dir.path()), Err(CaveError::EmptySeries)));
    }

    #[test]
    fn mask_code_points() {
        let mut img = RgbImage::new(4, 1);
        img.put_pixel(0, 0, Rgb([255, 0, 0]));
        img.put_pixel(1, 0, Rgb([0, 0, 255]));
        img.put_pixel(2, 0, Rgb([255, 0, 255]));
        img.put_pixel(3, 0, Rgb([0, 0, 0]));
        let m = mask_from_rgb(&img);
        assert_eq!(m.artery.row(0).to_vec(), vec![true, false, true, false]);
        assert_eq!(m.vein.row(0).to_vec(), vec![false, true, true, false]);
        assert_eq!(mask_to_rgb(&m), img);
    }

    #[test]
    fn grayscale_mask_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        GrayImage::new(4, 4).save(&p).unwrap();
        assert!(matches!(load_mask(&p), Err(CaveError::Format(_))));
    }
}
