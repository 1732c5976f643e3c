//! Folder evaluation: every image through every model, one report row each.
//!
//! Report format (UTF-8, tab separated, one header row):
//!
//! | column | per-image row | mean row |
//! |---|---|---|
//! | `kind` | `image` | `mean` |
//! | `image` | file name | `*` |
//! | `model` | model label | model label |
//! | `width`, `height` | original extent | `-` |
//! | `bytes` | container size | mean container size |
//! | `bpp` | `8·bytes / (width·height)` | mean of the per-image bpp |
//! | `psnr_db` | RGB PSNR, `inf` when exact | mean |
//! | `ms_ssim` | MS-SSIM with as many scales as fit (≤ 5) | mean |
//! | `scales` | scale count used | `-` |
//!
//! Reconstructions are rounded to 8 bits before scoring, as written by the
//! decoder. Numbers are printed in shortest round-trip form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::ms_ssim::{max_levels, ms_ssim_levels};
use crate::metrics::psnr::psnr;
use crate::par;
use crate::pipeline::image_io::{from_rgb8, load_image, to_rgb8};
use crate::pipeline::{Codec, DecodeOptions, EncodeOptions};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pnm"];
pub const TSV_HEADER: &str = "kind\timage\tmodel\twidth\theight\tbytes\tbpp\tpsnr_db\tms_ssim\tscales";

/// One rate point of the ladder, usually one λ.
pub struct CorpusModel<'a> {
    pub label: String,
    pub codec: &'a Codec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub image: String,
    pub model: String,
    pub width: usize,
    pub height: usize,
    pub bytes: usize,
    pub bpp: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
    pub scales: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanRow {
    pub model: String,
    pub bytes: f64,
    pub bpp: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    /// Sorted by file name, then in model order.
    pub rows: Vec<ReportRow>,
    /// One per model, in model order.
    pub means: Vec<MeanRow>,
    pub skipped: Vec<PathBuf>,
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn eval_image(path: &Path, models: &[CorpusModel], enc: &EncodeOptions, dec: &DecodeOptions) -> Result<Vec<ReportRow>> {
    let image = load_image(path)?;
    let [_, _, h, w] = image.shape();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let scales = max_levels(h.min(w));
    models
        .iter()
        .map(|m| {
            let encoded = m.codec.encode(&image, enc)?;
            let decoded = m.codec.decode(&encoded.bytes, dec)?;
            let recon = from_rgb8(&to_rgb8(&decoded.image)?);
            Ok(ReportRow {
                image: name.clone(),
                model: m.label.clone(),
                width: w,
                height: h,
                bytes: encoded.bytes.len(),
                bpp: crate::container::bpp(encoded.bytes.len(), w as u32, h as u32),
                psnr: psnr(&image, &recon)?,
                ms_ssim: ms_ssim_levels(&image, &recon, scales)?,
                scales,
            })
        })
        .collect()
}

/// Evaluates every PNG/PPM image in `dir` (non-recursive) with every model.
///
/// Images are processed in parallel; unreadable or failing images are
/// skipped with a warning. Errors when no image is found or all fail.
pub fn eval_corpus(dir: &Path, models: &[CorpusModel], enc: &EncodeOptions, dec: &DecodeOptions) -> Result<Report> {
    if models.is_empty() {
        return Err(Error::config("evaluation needs at least one model"));
    }
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Metric(format!("no png/ppm images in {}", dir.display())));
    }
    let results = par::map(&files, |p| eval_image(p, models, enc, dec));
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(r) => rows.extend(r),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(path.clone());
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Metric(format!("all {} images in {} failed", files.len(), dir.display())));
    }
    let means = models
        .iter()
        .map(|m| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.model == m.label).collect();
            let k = mine.len() as f64;
            let mean = |f: fn(&ReportRow) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / k;
            MeanRow {
                model: m.label.clone(),
                bytes: mean(|r| r.bytes as f64),
                bpp: mean(|r| r.bpp),
                psnr: mean(|r| r.psnr),
                ms_ssim: mean(|r| r.ms_ssim),
            }
        })
        .collect();
    Ok(Report { rows, means, skipped })
}

impl Report {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(TSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "image\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.image, r.model, r.width, r.height, r.bytes, r.bpp, r.psnr, r.ms_ssim, r.scales
            );
        }
        for m in &self.means {
            let _ = writeln!(
                s,
                "mean\t*\t{}\t-\t-\t{}\t{}\t{}\t{}\t-",
                m.model, m.bytes, m.bpp, m.psnr, m.ms_ssim
            );
        }
        s
    }

    /// Rate-PSNR curve through the per-model means, ordered by bpp.
    pub fn to_svg(&self) -> String {
        let mut pts: Vec<(f64, f64, &str)> = self
            .means
            .iter()
            .filter(|m| m.bpp.is_finite() && m.psnr.is_finite())
            .map(|m| (m.bpp, m.psnr, m.model.as_str()))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
        };
        let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
        let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
        let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <text x=\"{cx}\" y=\"{tb}\" text-anchor=\"middle\" font-size=\"12\">bpp ({x0:.4} to {x1:.4})</text>\n\
             <text x=\"12\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">PSNR dB ({y0:.2} to {y1:.2})</text>\n",
            b = h - pad,
            r = w - pad,
            cx = w / 2.0,
            tb = h - 15.0,
            cy = h / 2.0,
        );
        if !pts.is_empty() {
            let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
            let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", line.join(" "));
            for p in &pts {
                let _ = writeln!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"steelblue\"><title>{}</title></circle>",
                    px(p.0),
                    py(p.1),
                    p.2
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}
