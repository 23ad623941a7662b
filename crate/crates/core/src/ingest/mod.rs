//! COCO-format annotation I/O and synthetic corpora.

mod synth;

pub use synth::{max_ray_crossings, synth_shapes, ShapeFamily};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{parts_bounding_box, BoundingBox, PolygonContour};
use crate::landmarks::KeypointInstance;

/// One instance annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: u64,
    pub image_id: u64,
    pub category: u64,
    pub bbox: Option<BoundingBox>,
    /// Simply-connected polygon parts; holes are not represented.
    pub parts: Vec<PolygonContour>,
    pub keypoints: Option<KeypointInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<AnnotationRecord>,
    pub source: String,
    /// Annotations left out: RLE segmentations, crowd regions, or nothing
    /// usable at all.
    pub skipped: usize,
    /// Polygon parts dropped for having fewer than 3 vertices or zero area.
    pub dropped_parts: usize,
}

impl Dataset {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            records: Vec::new(),
            source: source.into(),
            skipped: 0,
            dropped_parts: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(instance_id, parts)` view for the quantization study.
    pub fn instance_parts(&self) -> Vec<(u64, &[PolygonContour])> {
        self.records
            .iter()
            .map(|r| (r.instance_id, r.parts.as_slice()))
            .collect()
    }

    pub fn find(&self, instance_id: u64) -> Option<&AnnotationRecord> {
        self.records.iter().find(|r| r.instance_id == instance_id)
    }
}

#[derive(Deserialize)]
struct RawFile {
    #[serde(default)]
    info: Option<RawInfo>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

#[derive(Deserialize)]
struct RawInfo {
    #[serde(default)]
    description: Option<String>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: u64,
    #[serde(default)]
    image_id: u64,
    #[serde(default)]
    category_id: u64,
    #[serde(default)]
    bbox: Option<Vec<f64>>,
    #[serde(default)]
    segmentation: Option<Value>,
    #[serde(default, deserialize_with = "crowd_flag")]
    iscrowd: bool,
    #[serde(default)]
    keypoints: Option<Vec<f64>>,
}

fn crowd_flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::Bool(b) => b,
        Value::Number(n) => n.as_f64().is_some_and(|v| v != 0.0),
        _ => false,
    })
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

fn parse_error(bytes: &[u8], e: serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    }
}

enum Segmentation {
    None,
    Polygons(Vec<Vec<f64>>),
    Rle,
}

fn classify_segmentation(v: Option<Value>) -> std::result::Result<Segmentation, String> {
    match v {
        None | Some(Value::Null) => Ok(Segmentation::None),
        Some(Value::Object(_)) => Ok(Segmentation::Rle),
        Some(Value::Array(items)) => {
            let mut polys = Vec::with_capacity(items.len());
            for item in items {
                let coords: Vec<f64> = serde_json::from_value(item)
                    .map_err(|e| format!("polygon segmentation: {e}"))?;
                polys.push(coords);
            }
            Ok(Segmentation::Polygons(polys))
        }
        Some(other) => Err(format!("unsupported segmentation value {other}")),
    }
}

/// Parses a COCO-layout annotation file.
///
/// Boxes become corner form, polygon segmentations become parts and keypoint
/// triples become a [`KeypointInstance`] with scale `sqrt(bbox area)`. RLE
/// and crowd annotations are counted in `skipped`.
pub fn parse_coco(bytes: &[u8]) -> Result<Dataset> {
    let raw: RawFile = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, e))?;
    let source = raw
        .info
        .and_then(|i| i.description)
        .unwrap_or_else(|| "bytes".to_string());
    let mut ds = Dataset::new(source);
    let mut seen = HashSet::new();
    for ann in raw.annotations {
        if !seen.insert(ann.id) {
            return Err(Error::Parse {
                offset: 0,
                message: format!("duplicate annotation id {}", ann.id),
            });
        }
        if ann.iscrowd {
            ds.skipped += 1;
            continue;
        }
        let seg = classify_segmentation(ann.segmentation).map_err(|message| Error::Parse {
            offset: 0,
            message: format!("annotation {}: {message}", ann.id),
        })?;
        let polys = match seg {
            Segmentation::Rle => {
                ds.skipped += 1;
                continue;
            }
            Segmentation::None => Vec::new(),
            Segmentation::Polygons(p) => p,
        };
        let mut parts = Vec::with_capacity(polys.len());
        for coords in polys {
            match PolygonContour::from_flat(&coords) {
                Ok(p) => parts.push(p),
                Err(_) => ds.dropped_parts += 1,
            }
        }
        let bbox = match ann.bbox.as_deref() {
            Some([x, y, w, h]) => BoundingBox::from_xywh(*x, *y, *w, *h).ok(),
            _ => None,
        };
        let keypoints = match (&ann.keypoints, &bbox) {
            (Some(values), Some(b)) if b.area() > 0.0 => {
                KeypointInstance::from_flat(values, b.area().sqrt()).ok()
            }
            _ => None,
        };
        if bbox.is_none() && parts.is_empty() && keypoints.is_none() {
            ds.skipped += 1;
            continue;
        }
        ds.records.push(AnnotationRecord {
            instance_id: ann.id,
            image_id: ann.image_id,
            category: ann.category_id,
            bbox,
            parts,
            keypoints,
        });
    }
    Ok(ds)
}

pub fn read_coco_file(path: &Path) -> std::result::Result<Dataset, ReadError> {
    let bytes = std::fs::read(path).map_err(|e| ReadError::Io(path.display().to_string(), e))?;
    let mut ds = parse_coco(&bytes).map_err(ReadError::Parse)?;
    if ds.source == "bytes" {
        ds.source = path.display().to_string();
    }
    Ok(ds)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Parse(Error),
}

/// Serializes a dataset in the COCO layout. Coordinates use shortest
/// round-trip formatting.
pub fn write_dataset(d: &Dataset) -> Vec<u8> {
    let mut image_extent: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut categories = BTreeSet::new();
    let mut annotations = Vec::with_capacity(d.records.len());
    for r in &d.records {
        categories.insert(r.category);
        let geometry_box = if r.parts.is_empty() {
            r.bbox
        } else {
            parts_bounding_box(&r.parts).ok()
        };
        let extent = image_extent.entry(r.image_id).or_insert((1.0, 1.0));
        for b in [r.bbox, geometry_box].into_iter().flatten() {
            extent.0 = extent.0.max(b.x_max.ceil());
            extent.1 = extent.1.max(b.y_max.ceil());
        }

        let mut ann = serde_json::Map::new();
        ann.insert("id".into(), json!(r.instance_id));
        ann.insert("image_id".into(), json!(r.image_id));
        ann.insert("category_id".into(), json!(r.category));
        ann.insert("iscrowd".into(), json!(0));
        if let Some(b) = r.bbox {
            ann.insert("bbox".into(), json!(b.to_xywh()));
        }
        let area = if r.parts.is_empty() {
            r.bbox.map_or(0.0, |b| b.area())
        } else {
            r.parts.iter().map(PolygonContour::area).sum()
        };
        ann.insert("area".into(), json!(area));
        if !r.parts.is_empty() {
            let polys: Vec<Vec<f64>> = r.parts.iter().map(PolygonContour::flat_coords).collect();
            ann.insert("segmentation".into(), json!(polys));
        }
        if let Some(k) = &r.keypoints {
            ann.insert("keypoints".into(), json!(k.to_flat()));
            ann.insert("num_keypoints".into(), json!(k.visible_count()));
        }
        annotations.push(Value::Object(ann));
    }
    let images: Vec<Value> = image_extent
        .iter()
        .map(|(id, (w, h))| json!({"id": id, "width": *w as u64, "height": *h as u64}))
        .collect();
    let categories: Vec<Value> = categories
        .iter()
        .map(|id| json!({"id": id, "name": format!("category_{id}")}))
        .collect();
    let doc = json!({
        "info": {"description": d.source},
        "images": images,
        "annotations": annotations,
        "categories": categories,
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("JSON values serialize");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_POLYGON: &str = r#"{
        "images": [{"id": 1, "width": 10, "height": 10}],
        "annotations": [
            {"id": 7, "image_id": 1, "category_id": 3, "bbox": [1, 2, 4, 5],
             "segmentation": [[1, 2, 5, 2, 5, 7, 1, 7]], "iscrowd": 0, "area": 20,
             "some_future_field": {"x": 1}}
        ],
        "categories": [{"id": 3, "name": "thing"}]
    }"#;

    #[test]
    fn parses_minimal_polygon_file() {
        let ds = parse_coco(ONE_POLYGON.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.skipped, 0);
        let r = &ds.records[0];
        assert_eq!((r.instance_id, r.image_id, r.category), (7, 1, 3));
        assert_eq!(r.bbox, Some(BoundingBox::new(1., 2., 5., 7.).unwrap()));
        assert_eq!(r.parts.len(), 1);
        assert_eq!(r.parts[0].len(), 4);
        assert!(r.keypoints.is_none());
    }

    #[test]
    fn rle_and_crowd_are_skipped() {
        let text = r#"{"annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0,0,2,2],
             "segmentation": {"counts": [0, 4], "size": [2, 2]}, "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [0,0,2,2],
             "segmentation": [[0,0,2,0,2,2]], "iscrowd": 1}
        ]}"#;
        let ds = parse_coco(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 0);
        assert_eq!(ds.skipped, 2);
    }

    #[test]
    fn degenerate_parts_are_dropped() {
        let text = r#"{"annotations": [
            {"id": 1, "bbox": [0,0,2,2], "segmentation": [[0,0,1,1], [0,0,1,1,2,2], [0,0,2,0,2,2]]}
        ]}"#;
        let ds = parse_coco(text.as_bytes()).unwrap();
        assert_eq!(ds.records[0].parts.len(), 1);
        assert_eq!(ds.dropped_parts, 2);
    }

    #[test]
    fn keypoints_get_sqrt_box_area_scale() {
        let mut kp = vec![0.0; 51];
        kp[0] = 3.0;
        kp[1] = 4.0;
        kp[2] = 2.0;
        let text = json!({"annotations": [
            {"id": 5, "bbox": [0, 0, 4, 9], "keypoints": kp, "num_keypoints": 1}
        ]})
        .to_string();
        let ds = parse_coco(text.as_bytes()).unwrap();
        let k = ds.records[0].keypoints.as_ref().unwrap();
        assert_eq!(k.scale(), 6.0);
        assert_eq!(k.visible_count(), 1);
    }

    #[test]
    fn malformed_file_reports_byte_offset() {
        let text = b"{\n  \"annotations\": [\n    {\"id\": 1,, }\n  ]\n}";
        match parse_coco(text) {
            Err(Error::Parse { offset, .. }) => {
                // the stray comma sits at byte 35
                assert_eq!(text[offset], b',');
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_coco(b"[1, 2]"), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_coco(br#"{"annotations": [{"id": 1}, {"id": 1}]}"#),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = Dataset::new("empty");
        let bytes = write_dataset(&ds);
        let back = parse_coco(&bytes).unwrap();
        assert_eq!(back, ds);
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["annotations"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn multi_part_record_writes_one_annotation() {
        let ds = synth_shapes(3, 11, ShapeFamily::MultiPart).unwrap();
        let bytes = write_dataset(&ds);
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        let anns = v["annotations"].as_array().unwrap();
        assert_eq!(anns.len(), 3);
        for (a, r) in anns.iter().zip(&ds.records) {
            assert_eq!(a["segmentation"].as_array().unwrap().len(), r.parts.len());
        }
        let back = parse_coco(&bytes).unwrap();
        for (a, b) in back.records.iter().zip(&ds.records) {
            assert_eq!(a.parts.len(), b.parts.len());
        }
    }
}
