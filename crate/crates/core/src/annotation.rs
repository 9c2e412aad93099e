//! VIA (VGG Image Annotator) v2 project exports: parsing and rasterization.
//!
//! Two layouts are accepted: the bare image map produced by "Export
//! annotations as JSON" (keys are `filename + size`), and the full project file
//! where the same map sits under `_via_img_metadata`. Regions may be given as
//! an array or as a map keyed by index, as older exports did.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::Point;
use crate::mask::{Instance, InstanceSet, LabelMask};
use crate::raster::fill_polygon;
use crate::taxonomy::LabelTaxonomy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("malformed VIA document: {0}")]
    MalformedDocument(String),
    #[error("image `{image}` region {region}: unsupported shape `{shape}`")]
    UnsupportedShape { image: String, region: usize, shape: String },
    #[error("image `{image}` region {region}: {detail}")]
    UnknownClass { image: String, region: usize, detail: String },
    #[error("image `{image}` region {region}: fewer than 3 distinct points")]
    TooFewPoints { image: String, region: usize },
    #[error("image `{0}` has no width/height and no default dimensions were given")]
    MissingDimensions(String),
    #[error("image `{image}` region {region}: polygon covers no pixel centers on the canvas")]
    DegeneratePolygon { image: String, region: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonAnnotation {
    pub points: Vec<Point>,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub regions: Vec<PolygonAnnotation>,
}

/// Parses a VIA export. Image dimensions are read from `width`/`height` on the
/// image record or in its `file_attributes`.
pub fn parse_via(document: &str, taxonomy: &LabelTaxonomy) -> Result<Vec<AnnotationSet>, AnnotationError> {
    parse_via_with_dims(document, taxonomy, None)
}

/// Like [`parse_via`], falling back to `default_dims` for records without
/// stored dimensions (VIA itself only records the file size).
pub fn parse_via_with_dims(
    document: &str,
    taxonomy: &LabelTaxonomy,
    default_dims: Option<(usize, usize)>,
) -> Result<Vec<AnnotationSet>, AnnotationError> {
    let root: Value = serde_json::from_str(document).map_err(|e| malformed(e.to_string()))?;
    let root = root.as_object().ok_or_else(|| malformed("top level is not an object"))?;
    let images = match root.get("_via_img_metadata") {
        Some(v) => v.as_object().ok_or_else(|| malformed("_via_img_metadata is not an object"))?,
        None => root,
    };
    images
        .iter()
        .map(|(key, record)| parse_image(key, record, taxonomy, default_dims))
        .collect()
}

fn malformed(msg: impl Into<String>) -> AnnotationError {
    AnnotationError::MalformedDocument(msg.into())
}

fn parse_image(
    key: &str,
    record: &Value,
    taxonomy: &LabelTaxonomy,
    default_dims: Option<(usize, usize)>,
) -> Result<AnnotationSet, AnnotationError> {
    let record = record.as_object().ok_or_else(|| malformed(format!("image record `{key}` is not an object")))?;
    let image_id = match record.get("filename") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed(format!("`{key}`: filename is not a string"))),
        None => return Err(malformed(format!("`{key}`: missing filename"))),
    };
    let attrs = record.get("file_attributes").and_then(Value::as_object);
    let dim = |name: &str| -> Option<usize> {
        record.get(name).and_then(as_dimension).or_else(|| attrs.and_then(|a| a.get(name)).and_then(as_dimension))
    };
    let (width, height) = match (dim("width"), dim("height")) {
        (Some(w), Some(h)) => (w, h),
        _ => default_dims.ok_or_else(|| AnnotationError::MissingDimensions(image_id.clone()))?,
    };
    if width == 0 || height == 0 {
        return Err(malformed(format!("`{image_id}`: zero image dimension")));
    }

    let regions: Vec<&Value> = match record.get("regions") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.iter().collect(),
        Some(Value::Object(m)) => {
            let mut entries: Vec<(&String, &Value)> = m.iter().collect();
            entries.sort_by_key(|(k, _)| k.parse::<u64>().unwrap_or(u64::MAX));
            entries.into_iter().map(|(_, v)| v).collect()
        }
        Some(_) => return Err(malformed(format!("`{image_id}`: regions is neither array nor object"))),
    };
    let regions = regions
        .into_iter()
        .enumerate()
        .map(|(i, r)| parse_region(&image_id, i, r, taxonomy))
        .collect::<Result<_, _>>()?;
    Ok(AnnotationSet { image_id, width, height, regions })
}

fn as_dimension(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn parse_region(
    image: &str,
    index: usize,
    region: &Value,
    taxonomy: &LabelTaxonomy,
) -> Result<PolygonAnnotation, AnnotationError> {
    let region = region.as_object().ok_or_else(|| malformed(format!("`{image}` region {index} is not an object")))?;
    let shape = region
        .get("shape_attributes")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(format!("`{image}` region {index}: missing shape_attributes")))?;
    let name = shape.get("name").and_then(Value::as_str).unwrap_or("");
    if name != "polygon" && name != "polyline" {
        return Err(AnnotationError::UnsupportedShape { image: image.to_string(), region: index, shape: name.to_string() });
    }
    let coords = |key: &str| -> Result<Vec<f64>, AnnotationError> {
        shape
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(format!("`{image}` region {index}: missing {key}")))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| malformed(format!("`{image}` region {index}: non-numeric {key}"))))
            .collect()
    };
    let xs = coords("all_points_x")?;
    let ys = coords("all_points_y")?;
    if xs.len() != ys.len() {
        return Err(malformed(format!("`{image}` region {index}: point arrays differ in length")));
    }
    let mut points: Vec<Point> = Vec::with_capacity(xs.len());
    for (x, y) in xs.into_iter().zip(ys) {
        let p = Point::new(x, y);
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    // Polylines and some polygon exports repeat the first point at the end.
    while points.len() > 1 && points.first() == points.last() {
        points.pop();
    }
    if points.len() < 3 {
        return Err(AnnotationError::TooFewPoints { image: image.to_string(), region: index });
    }

    let class_name = resolve_class(region.get("region_attributes"), taxonomy)
        .map_err(|detail| AnnotationError::UnknownClass { image: image.to_string(), region: index, detail })?;
    Ok(PolygonAnnotation { points, class_name })
}

/// Picks the class from the first attribute whose value names a taxonomy
/// class. Attributes naming different classes make the region ambiguous.
fn resolve_class(attrs: Option<&Value>, taxonomy: &LabelTaxonomy) -> Result<String, String> {
    let empty = Map::new();
    let attrs = match attrs {
        Some(Value::Object(m)) => m,
        None | Some(Value::Null) => &empty,
        Some(_) => return Err("region_attributes is not an object".into()),
    };
    let mut found: Vec<(&str, &str)> = Vec::new();
    for (key, value) in attrs {
        match value {
            Value::String(s) if taxonomy.index_of(s.trim()).is_some() => found.push((key, s.trim())),
            // Checkbox attributes: {"cage": true}
            Value::Object(opts) => {
                for (opt, on) in opts {
                    if on.as_bool() == Some(true) && taxonomy.index_of(opt).is_some() {
                        found.push((key, opt));
                    }
                }
            }
            _ => {}
        }
    }
    let Some(&(_, first)) = found.first() else {
        let shown: Vec<String> = attrs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        return Err(format!("no region attribute names a known class ({})", shown.join(", ")));
    };
    if let Some((key, other)) = found.iter().find(|(_, c)| *c != first) {
        return Err(format!("ambiguous class: `{first}` and `{other}` (attribute `{key}`)"));
    }
    Ok(first.to_string())
}

/// Fills every region. Instances get ids `1..=n` in region order; the semantic
/// mask takes the class of the last region painted over each pixel.
pub fn rasterize(ann: &AnnotationSet, taxonomy: &LabelTaxonomy) -> Result<(LabelMask, InstanceSet), AnnotationError> {
    let mut semantic = LabelMask::new(ann.width, ann.height);
    let mut set = InstanceSet::new(ann.width, ann.height);
    for (i, region) in ann.regions.iter().enumerate() {
        let class = taxonomy.index_of(&region.class_name).ok_or_else(|| AnnotationError::UnknownClass {
            image: ann.image_id.clone(),
            region: i,
            detail: format!("class `{}` not in taxonomy", region.class_name),
        })?;
        let mask = fill_polygon(&region.points, ann.width, ann.height);
        if mask.is_empty() {
            return Err(AnnotationError::DegeneratePolygon { image: ann.image_id.clone(), region: i });
        }
        semantic.paint(&mask, class);
        let inst = Instance::new(i as u32 + 1, class, None, mask).expect("non-empty mask with class >= 1");
        set.push(inst).expect("fresh ids on matching canvas");
    }
    Ok((semantic, set))
}
