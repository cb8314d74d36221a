//! VGG Image Annotator 2.x project files.
//!
//! Each frame with at least one observation becomes an image entry keyed
//! `<filename>-1` (size unknown). Every observation becomes a `rect` region
//! carrying `track_id`, `decision` and `score` as region attributes. Scores
//! are written with shortest round-trip formatting so re-import is exact.

use serde_json::{json, Map, Value};

use super::ExportBundle;
use crate::error::{Error, Result};
use crate::identity::Decision;
use crate::model::{frame_file_name, BBox};

const VIA_FORMAT_VERSION: &str = "2.0.10";

fn image_key(filename: &str) -> String {
    format!("{filename}-1")
}

pub fn export_via(bundle: &ExportBundle) -> Result<Value> {
    bundle.validate()?;
    let mut images: Map<String, Value> = Map::new();
    for t in &bundle.tracklets {
        let score = bundle.decision_for(&t.track_id);
        for o in &t.observations {
            let filename = frame_file_name(o.frame);
            let entry = images.entry(image_key(&filename)).or_insert_with(|| {
                json!({
                    "filename": filename,
                    "size": -1,
                    "regions": [],
                    "file_attributes": {},
                })
            });
            entry["regions"].as_array_mut().expect("regions array").push(json!({
                "shape_attributes": {
                    "name": "rect",
                    "x": o.bbox.x,
                    "y": o.bbox.y,
                    "width": o.bbox.w,
                    "height": o.bbox.h,
                },
                "region_attributes": {
                    "track_id": t.track_id,
                    "decision": score.map(|s| s.decision.to_string()).unwrap_or_default(),
                    "score": score.and_then(|s| s.score).map(|v| v.to_string()).unwrap_or_default(),
                },
            }));
        }
    }
    let ids: Vec<String> = images.keys().cloned().collect();
    let text_attr = |description: &str| json!({"type": "text", "description": description, "default_value": ""});
    Ok(json!({
        "_via_settings": {
            "ui": {
                "annotation_editor_height": 25,
                "annotation_editor_fontsize": 0.8,
                "leftsidebar_width": 18,
                "image_grid": {"img_height": 80, "rshape_fill": "none", "rshape_fill_opacity": 0.3,
                    "rshape_stroke": "yellow", "rshape_stroke_width": 2, "show_region_shape": true,
                    "show_image_policy": "all"},
                "image": {"region_label": "track_id", "region_color": "decision",
                    "region_label_font": "10px Sans", "on_image_annotation_editor_placement": "NEAR_REGION"},
            },
            "core": {"buffer_size": 18, "filepath": {}, "default_filepath": bundle.image_dir},
            "project": {"name": "anonymise"},
        },
        "_via_img_metadata": images,
        "_via_attributes": {
            "region": {
                "track_id": text_attr("tracklet id"),
                "decision": text_attr("match, non_match or protected"),
                "score": text_attr("similarity to the references"),
            },
            "file": {},
        },
        "_via_data_format_version": VIA_FORMAT_VERSION,
        "_via_image_id_list": ids,
    }))
}

/// A region read back from a VIA project.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaRegion {
    pub filename: String,
    pub bbox: BBox,
    pub track_id: String,
    pub decision: Option<Decision>,
    pub score: Option<f64>,
}

fn field<'a>(v: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::invalid(format!("{ctx}: missing {key}")))
}

fn number(v: &Value, key: &str, ctx: &str) -> Result<f64> {
    field(v, key, ctx)?
        .as_f64()
        .ok_or_else(|| Error::invalid(format!("{ctx}: {key} is not a number")))
}

fn string_attr(attrs: &Value, key: &str) -> String {
    attrs.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

/// Parses and structurally validates a VIA project. Regions come back in
/// image-list order, then region order.
pub fn parse_via(project: &Value) -> Result<Vec<ViaRegion>> {
    let meta = field(project, "_via_img_metadata", "project")?
        .as_object()
        .ok_or_else(|| Error::invalid("_via_img_metadata is not an object"))?;
    let ids = field(project, "_via_image_id_list", "project")?
        .as_array()
        .ok_or_else(|| Error::invalid("_via_image_id_list is not an array"))?;
    if ids.len() != meta.len() {
        return Err(Error::invalid("image id list and metadata disagree"));
    }
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        let id = id.as_str().ok_or_else(|| Error::invalid("image id is not a string"))?;
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate image id {id}")));
        }
        let entry = meta
            .get(id)
            .ok_or_else(|| Error::invalid(format!("image id {id} has no metadata")))?;
        let filename = field(entry, "filename", id)?
            .as_str()
            .ok_or_else(|| Error::invalid(format!("{id}: filename is not a string")))?;
        let regions = field(entry, "regions", id)?
            .as_array()
            .ok_or_else(|| Error::invalid(format!("{id}: regions is not an array")))?;
        for r in regions {
            let shape = field(r, "shape_attributes", id)?;
            if shape.get("name").and_then(Value::as_str) != Some("rect") {
                return Err(Error::invalid(format!("{id}: only rect regions are supported")));
            }
            let bbox = BBox::new(
                number(shape, "x", id)?,
                number(shape, "y", id)?,
                number(shape, "width", id)?,
                number(shape, "height", id)?,
            )?;
            let attrs = field(r, "region_attributes", id)?;
            let decision = match string_attr(attrs, "decision").as_str() {
                "" => None,
                s => Some(s.parse()?),
            };
            let score = match string_attr(attrs, "score").as_str() {
                "" => None,
                s => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("{id}: bad score {s:?}")))?,
                ),
            };
            out.push(ViaRegion {
                filename: filename.to_string(),
                bbox,
                track_id: string_attr(attrs, "track_id"),
                decision,
                score,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{Aggregator, TrackScore};
    use crate::model::{Manifest, Observation, Tracklet};

    fn manifest() -> Manifest {
        Manifest {
            fps: 25.0,
            width: 640,
            height: 480,
            total_frames: 100,
            audio: None,
        }
    }

    fn track(id: &str, frames: &[u64]) -> Tracklet {
        Tracklet {
            track_id: id.into(),
            scene_id: 0,
            observations: frames
                .iter()
                .map(|&f| Observation {
                    frame: f,
                    bbox: BBox::new(10.5 + f as f64, 20.0, 30.25, 40.0).unwrap(),
                    det: Some(format!("d-{f}-0")),
                    interpolated: false,
                })
                .collect(),
        }
    }

    #[test]
    fn one_track_two_observations() {
        let mut b = ExportBundle::new(manifest());
        b.tracklets.push(track("t-0-0", &[3, 4]));
        let v = export_via(&b).unwrap();
        assert_eq!(v["_via_img_metadata"].as_object().unwrap().len(), 2);
        assert_eq!(v["_via_image_id_list"][0], "frame_000003.png-1");
        assert_eq!(parse_via(&v).unwrap().len(), 2);
    }

    #[test]
    fn empty_bundle_is_valid_project() {
        let v = export_via(&ExportBundle::new(manifest())).unwrap();
        assert!(parse_via(&v).unwrap().is_empty());
        assert_eq!(v["_via_data_format_version"], VIA_FORMAT_VERSION);
    }

    #[test]
    fn attributes_round_trip() {
        let mut b = ExportBundle::new(manifest());
        b.tracklets.push(track("t-0-0", &[1, 2, 3]));
        b.tracklets.push(track("t-0-1", &[2]));
        b.decisions.push(TrackScore {
            track_id: "t-0-0".into(),
            score: Some(0.1 + 0.2),
            aggregator: Aggregator::Min,
            decision: Decision::Match,
        });
        let text = serde_json::to_string(&export_via(&b).unwrap()).unwrap();
        let regions = parse_via(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(regions.len(), 4);
        for r in &regions {
            let t = b.tracklets.iter().find(|t| t.track_id == r.track_id).unwrap();
            let o = t.observations.iter().find(|o| frame_file_name(o.frame) == r.filename).unwrap();
            assert_eq!(o.bbox, r.bbox);
            if r.track_id == "t-0-0" {
                assert_eq!(r.decision, Some(Decision::Match));
                assert_eq!(r.score, Some(0.1 + 0.2));
            } else {
                assert_eq!((r.decision, r.score), (None, None));
            }
        }
    }

    #[test]
    fn rejects_unknown_references() {
        let mut b = ExportBundle::new(manifest());
        b.decisions.push(TrackScore {
            track_id: "ghost".into(),
            score: None,
            aggregator: Aggregator::Min,
            decision: Decision::Match,
        });
        assert!(export_via(&b).is_err());
    }

    #[test]
    fn validator_catches_broken_projects() {
        let mut b = ExportBundle::new(manifest());
        b.tracklets.push(track("t-0-0", &[1]));
        let good = export_via(&b).unwrap();

        let mut v = good.clone();
        v["_via_image_id_list"] = json!(["nope-1"]);
        assert!(parse_via(&v).is_err());

        let mut v = good.clone();
        v["_via_img_metadata"]["frame_000001.png-1"]["regions"][0]["shape_attributes"]["name"] = json!("circle");
        assert!(parse_via(&v).is_err());

        let mut v = good;
        v.as_object_mut().unwrap().remove("_via_img_metadata");
        assert!(parse_via(&v).is_err());
    }
}
