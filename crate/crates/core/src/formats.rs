//! JSON wire format for instance sets.
//!
//! ```json
//! {"width":W,"height":H,"instances":[
//!   {"id":1,"class_id":1,"score":0.97,"polygon":[[x,y],...]},
//!   {"id":2,"class_id":1,"mask_png":"path-or-base64"}
//! ]}
//! ```
//!
//! Each instance carries either a polygon (rasterized on load) or a mask
//! referenced as a PNG file path (relative paths resolve against the JSON
//! file) or inline base64 PNG data. On save, instances whose mask is a
//! single hole-free component are written as polygons, everything else as
//! inline base64 PNG.

use std::io::Cursor;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Instance, InstanceSet};
use crate::raster::{extract_contours, rasterize, BinaryMask, Polygon};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSetDoc {
    pub width: u32,
    pub height: u32,
    pub instances: Vec<InstanceDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub id: u32,
    pub class_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_png: Option<String>,
}

fn decode_mask(doc: &InstanceDoc, width: u32, height: u32, base_dir: &Path) -> Result<BinaryMask> {
    match (&doc.polygon, &doc.mask_png) {
        (Some(points), None) => {
            let vertices = points.iter().map(|p| (p[0], p[1])).collect();
            rasterize(&Polygon::new(vertices)?, width, height)
        }
        (None, Some(source)) => {
            let candidate = base_dir.join(source);
            let mask = if candidate.is_file() {
                BinaryMask::load_png(&candidate)?
            } else {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(source)
                    .map_err(|e| {
                        Error::invalid(format!(
                            "instance {}: mask_png is neither a readable file nor base64: {e}",
                            doc.id
                        ))
                    })?;
                let img = image::load_from_memory(&bytes)
                    .map_err(|e| Error::invalid(format!("instance {}: bad PNG data: {e}", doc.id)))?
                    .into_luma8();
                let (w, h) = img.dimensions();
                BinaryMask::from_bits(w, h, img.as_raw().iter().map(|&v| v != 0).collect())?
            };
            if mask.width() != width || mask.height() != height {
                return Err(Error::DimensionMismatch(
                    width,
                    height,
                    mask.width(),
                    mask.height(),
                ));
            }
            Ok(mask)
        }
        _ => Err(Error::invalid(format!(
            "instance {}: exactly one of polygon or mask_png is required",
            doc.id
        ))),
    }
}

pub fn instance_set_from_doc(doc: &InstanceSetDoc, base_dir: &Path) -> Result<InstanceSet> {
    let mut instances = Vec::with_capacity(doc.instances.len());
    for inst in &doc.instances {
        let mask = decode_mask(inst, doc.width, doc.height, base_dir)?;
        instances.push(Instance::new(inst.id, inst.class_id, inst.score, mask)?);
    }
    InstanceSet::new(doc.width, doc.height, instances)
}

pub fn load_instance_set(path: &Path) -> Result<InstanceSet> {
    let data = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: InstanceSetDoc = serde_json::from_str(&data)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    instance_set_from_doc(&doc, base_dir)
}

fn mask_to_base64_png(mask: &BinaryMask) -> String {
    let raw: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width(), mask.height(), raw)
        .expect("buffer sized from mask dimensions");
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn instance_set_to_doc(set: &InstanceSet) -> InstanceSetDoc {
    let instances = set
        .instances()
        .iter()
        .map(|inst| {
            let contours = extract_contours(inst.mask());
            // a single contour reproduces the mask exactly only if the
            // component is hole-free; verify before committing to a polygon
            let polygon = if contours.len() == 1 {
                let back = rasterize(&contours[0], set.width(), set.height()).unwrap();
                (&back == inst.mask()).then(|| {
                    contours[0]
                        .vertices()
                        .iter()
                        .map(|&(x, y)| [x, y])
                        .collect::<Vec<_>>()
                })
            } else {
                None
            };
            let mask_png = polygon
                .is_none()
                .then(|| mask_to_base64_png(inst.mask()));
            InstanceDoc {
                id: inst.id,
                class_id: inst.class_id,
                score: inst.score,
                polygon,
                mask_png,
            }
        })
        .collect();
    InstanceSetDoc {
        width: set.width(),
        height: set.height(),
        instances,
    }
}

pub fn save_instance_set(set: &InstanceSet, path: &Path) -> Result<()> {
    let doc = instance_set_to_doc(set);
    let data = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, data).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
