//! Box annotation files: a small COCO-like subset.
//!
//! ```json
//! {"num_classes": 20,
//!  "images": [{"id": 1, "width": 320, "height": 240,
//!              "objects": [{"bbox": [x1, y1, x2, y2], "class": 3}]}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::geometry::BBox;
use crate::weakseg::{GroundTruth, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    bbox: [f64; 4],
    class: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: i64,
    width: f64,
    height: f64,
    #[serde(default)]
    objects: Vec<RawObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    num_classes: usize,
    images: Vec<RawImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub id: i64,
    pub scene: Scene,
}

pub fn parse_annotations_str(text: &str) -> Result<Vec<AnnotatedImage>, CliError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| CliError::Parse(format!("annotations: {e}")))?;
    if raw.num_classes == 0 {
        return Err(CliError::Parse("annotations: num_classes must be >= 1".into()));
    }
    raw.images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let at = |j: usize| format!("images[{i}] (id {}) objects[{j}]", img.id);
            let objects = img
                .objects
                .iter()
                .enumerate()
                .map(|(j, o)| {
                    if o.class < 1 || o.class as usize > raw.num_classes {
                        return Err(CliError::Parse(format!(
                            "{}: class {} outside 1..={} (0 is reserved for background)",
                            at(j),
                            o.class,
                            raw.num_classes
                        )));
                    }
                    let [x1, y1, x2, y2] = o.bbox;
                    let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| CliError::Parse(format!("{}: {e}", at(j))))?;
                    Ok(GroundTruth {
                        bbox,
                        class: o.class as u32,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let scene = Scene::new(img.width, img.height, raw.num_classes, objects)
                .map_err(|e| CliError::Parse(format!("images[{i}] (id {}): {e}", img.id)))?;
            Ok(AnnotatedImage { id: img.id, scene })
        })
        .collect()
}

/// Reads and validates an annotation file; boxes are clipped to their image.
pub fn parse_annotations(path: &Path) -> Result<Vec<AnnotatedImage>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read annotations {}: {e}", path.display())))?;
    parse_annotations_str(&text)
}

/// Serializes scenes back into the annotation format. All images must share
/// one class count.
pub fn write_annotations(images: &[AnnotatedImage]) -> String {
    let num_classes = images.first().map_or(1, |i| i.scene.num_classes());
    let raw = RawFile {
        num_classes,
        images: images
            .iter()
            .map(|img| RawImage {
                id: img.id,
                width: img.scene.width(),
                height: img.scene.height(),
                objects: img
                    .scene
                    .objects()
                    .iter()
                    .map(|o| RawObject {
                        bbox: o.bbox.corners(),
                        class: o.class as i64,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("annotation structs always serialize")
}
