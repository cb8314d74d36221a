//! ELAN annotation documents (EAF 3.0).
//!
//! One tier `SPK<cluster>` per diarised speaker plus an `ANONYMISE` tier
//! holding the silence set. Every annotation owns two time slots. Times are
//! floored to whole milliseconds, both ends, which keeps durations stable.

use std::collections::{BTreeMap, BTreeSet};

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use super::ExportBundle;
use crate::error::{Error, Result};
use crate::model::SEGMENT_EPS;

pub const ANONYMISE_TIER: &str = "ANONYMISE";
const LINGUISTIC_TYPE: &str = "default-lt";
const FIXED_DATE: &str = "1970-01-01T00:00:00+00:00";

/// Seconds to whole milliseconds, rounding down. The small epsilon keeps
/// values like 0.29 s (289.99999... after scaling) at 290.
pub fn to_millis(seconds: f64) -> u64 {
    (seconds * 1000.0 + 1e-6).floor().max(0.0) as u64
}

pub fn tier_name(cluster_id: i64) -> String {
    format!("SPK{cluster_id}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EafAnnotation {
    pub id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EafTier {
    pub id: String,
    pub annotations: Vec<EafAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EafDocument {
    pub media_url: Option<String>,
    pub time_slots: usize,
    pub tiers: Vec<EafTier>,
}

impl EafDocument {
    pub fn tier(&self, id: &str) -> Option<&EafTier> {
        self.tiers.iter().find(|t| t.id == id)
    }
}

fn xml_err(e: impl std::fmt::Display) -> Error {
    Error::Xml(e.to_string())
}

struct PendingAnnotation {
    tier: usize,
    start: u64,
    end: u64,
    value: &'static str,
}

/// Renders the bundle's speaker segments and silence set. Picked clusters
/// are labelled `redact`, the rest `keep`.
pub fn export_eaf(bundle: &ExportBundle, duration: f64) -> Result<String> {
    bundle.validate()?;
    if let Some(s) = bundle.segments.iter().find(|s| s.end > duration + SEGMENT_EPS) {
        return Err(Error::invalid(format!(
            "segment [{}, {}] ends after media duration {duration}",
            s.start, s.end
        )));
    }
    if let Some(i) = bundle.silence.iter().find(|i| i.end > duration + SEGMENT_EPS) {
        return Err(Error::invalid(format!(
            "silence interval [{}, {}] ends after media duration {duration}",
            i.start, i.end
        )));
    }

    let clusters: BTreeSet<i64> = bundle.segments.iter().map(|s| s.cluster_id).collect();
    let picked: BTreeSet<i64> = bundle.picked_clusters.iter().copied().collect();
    let mut tier_ids: Vec<String> = clusters.iter().map(|&c| tier_name(c)).collect();
    tier_ids.push(ANONYMISE_TIER.to_string());
    let tier_index: BTreeMap<i64, usize> = clusters.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut pending: Vec<PendingAnnotation> = bundle
        .segments
        .iter()
        .map(|s| PendingAnnotation {
            tier: tier_index[&s.cluster_id],
            start: to_millis(s.start),
            end: to_millis(s.end),
            value: if picked.contains(&s.cluster_id) { "redact" } else { "keep" },
        })
        .collect();
    pending.extend(bundle.silence.iter().map(|i| PendingAnnotation {
        tier: clusters.len(),
        start: to_millis(i.start),
        end: to_millis(i.end),
        value: "silence",
    }));

    // slots numbered in time order; each annotation owns its two slots
    let mut slots: Vec<(u64, usize, bool)> = Vec::with_capacity(2 * pending.len());
    for (k, a) in pending.iter().enumerate() {
        slots.push((a.start, k, false));
        slots.push((a.end, k, true));
    }
    slots.sort();
    let mut slot_refs = vec![(0usize, 0usize); pending.len()];
    for (n, &(_, k, is_end)) in slots.iter().enumerate() {
        if is_end {
            slot_refs[k].1 = n + 1;
        } else {
            slot_refs[k].0 = n + 1;
        }
    }

    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(xml_err)?;
    w.write_event(Event::Comment(BytesText::new(
        " Times are in whole milliseconds, floored from seconds at both interval ends. ",
    )))
    .map_err(xml_err)?;
    w.write_event(Event::Start(BytesStart::new("ANNOTATION_DOCUMENT").with_attributes([
        ("AUTHOR", "anonymise"),
        ("DATE", FIXED_DATE),
        ("FORMAT", "3.0"),
        ("VERSION", "3.0"),
        ("xmlns:xsi", "http://www.w3.org/2001/XMLSchema-instance"),
        ("xsi:noNamespaceSchemaLocation", "http://www.mpi.nl/tools/elan/EAFv3.0.xsd"),
    ])))
    .map_err(xml_err)?;

    w.write_event(Event::Start(
        BytesStart::new("HEADER").with_attributes([("MEDIA_FILE", ""), ("TIME_UNITS", "milliseconds")]),
    ))
    .map_err(xml_err)?;
    if let Some(audio) = &bundle.manifest.audio {
        let url = format!("file://{}", audio.path);
        w.write_event(Event::Empty(
            BytesStart::new("MEDIA_DESCRIPTOR").with_attributes([("MEDIA_URL", url.as_str()), ("MIME_TYPE", "audio/x-wav")]),
        ))
        .map_err(xml_err)?;
    }
    let duration_ms = to_millis(duration).to_string();
    w.write_event(Event::Start(BytesStart::new("PROPERTY").with_attributes([("NAME", "duration_ms")])))
        .map_err(xml_err)?;
    w.write_event(Event::Text(BytesText::new(&duration_ms))).map_err(xml_err)?;
    w.write_event(Event::End(BytesEnd::new("PROPERTY"))).map_err(xml_err)?;
    w.write_event(Event::End(BytesEnd::new("HEADER"))).map_err(xml_err)?;

    if slots.is_empty() {
        w.write_event(Event::Empty(BytesStart::new("TIME_ORDER"))).map_err(xml_err)?;
    } else {
        w.write_event(Event::Start(BytesStart::new("TIME_ORDER"))).map_err(xml_err)?;
        for (n, &(ms, _, _)) in slots.iter().enumerate() {
            let id = format!("ts{}", n + 1);
            let value = ms.to_string();
            w.write_event(Event::Empty(
                BytesStart::new("TIME_SLOT").with_attributes([("TIME_SLOT_ID", id.as_str()), ("TIME_VALUE", value.as_str())]),
            ))
            .map_err(xml_err)?;
        }
        w.write_event(Event::End(BytesEnd::new("TIME_ORDER"))).map_err(xml_err)?;
    }

    let mut next_annotation = 1usize;
    for (t, tier_id) in tier_ids.iter().enumerate() {
        let tier_start =
            BytesStart::new("TIER").with_attributes([("LINGUISTIC_TYPE_REF", LINGUISTIC_TYPE), ("TIER_ID", tier_id.as_str())]);
        let members: Vec<usize> = (0..pending.len()).filter(|&k| pending[k].tier == t).collect();
        if members.is_empty() {
            w.write_event(Event::Empty(tier_start)).map_err(xml_err)?;
            continue;
        }
        w.write_event(Event::Start(tier_start)).map_err(xml_err)?;
        for k in members {
            let id = format!("a{next_annotation}");
            next_annotation += 1;
            let r1 = format!("ts{}", slot_refs[k].0);
            let r2 = format!("ts{}", slot_refs[k].1);
            w.write_event(Event::Start(BytesStart::new("ANNOTATION"))).map_err(xml_err)?;
            w.write_event(Event::Start(BytesStart::new("ALIGNABLE_ANNOTATION").with_attributes([
                ("ANNOTATION_ID", id.as_str()),
                ("TIME_SLOT_REF1", r1.as_str()),
                ("TIME_SLOT_REF2", r2.as_str()),
            ])))
            .map_err(xml_err)?;
            w.write_event(Event::Start(BytesStart::new("ANNOTATION_VALUE"))).map_err(xml_err)?;
            w.write_event(Event::Text(BytesText::new(pending[k].value))).map_err(xml_err)?;
            w.write_event(Event::End(BytesEnd::new("ANNOTATION_VALUE"))).map_err(xml_err)?;
            w.write_event(Event::End(BytesEnd::new("ALIGNABLE_ANNOTATION"))).map_err(xml_err)?;
            w.write_event(Event::End(BytesEnd::new("ANNOTATION"))).map_err(xml_err)?;
        }
        w.write_event(Event::End(BytesEnd::new("TIER"))).map_err(xml_err)?;
    }

    w.write_event(Event::Empty(
        BytesStart::new("LINGUISTIC_TYPE").with_attributes([
            ("GRAPHIC_REFERENCES", "false"),
            ("LINGUISTIC_TYPE_ID", LINGUISTIC_TYPE),
            ("TIME_ALIGNABLE", "true"),
        ]),
    ))
    .map_err(xml_err)?;
    w.write_event(Event::End(BytesEnd::new("ANNOTATION_DOCUMENT"))).map_err(xml_err)?;

    let mut out = String::from_utf8(w.into_inner()).map_err(xml_err)?;
    out.push('\n');
    Ok(out)
}

fn attrs(e: &BytesStart<'_>) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a.unescape_value().map_err(xml_err)?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn required(map: &BTreeMap<String, String>, key: &str, element: &str) -> Result<String> {
    map.get(key)
        .cloned()
        .ok_or_else(|| Error::Xml(format!("{element} without {key}")))
}

struct RawAnnotation {
    tier: usize,
    id: String,
    ref1: String,
    ref2: String,
    value: String,
}

/// Parses an EAF document and checks its structure: root, header and time
/// order present, ids unique, every time-slot and linguistic-type reference
/// resolved, and no annotation ending before it starts.
pub fn parse_eaf(text: &str) -> Result<EafDocument> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<String> = Vec::new();
    let mut saw_root = false;
    let mut saw_header = false;
    let mut saw_time_order = false;
    let mut media_url = None;
    let mut slots: BTreeMap<String, Option<u64>> = BTreeMap::new();
    let mut slot_count = 0usize;
    let mut tiers: Vec<(String, String)> = Vec::new();
    let mut types: BTreeSet<String> = BTreeSet::new();
    let mut raw: Vec<RawAnnotation> = Vec::new();

    loop {
        let event = reader.read_event().map_err(xml_err)?;
        let (start, is_empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
            let a = attrs(&e)?;
            match name.as_str() {
                "ANNOTATION_DOCUMENT" => {
                    if !stack.is_empty() || saw_root {
                        return Err(Error::Xml("misplaced ANNOTATION_DOCUMENT".into()));
                    }
                    saw_root = true;
                }
                "HEADER" => saw_header = true,
                "MEDIA_DESCRIPTOR" => media_url = a.get("MEDIA_URL").cloned(),
                "TIME_ORDER" => saw_time_order = true,
                "TIME_SLOT" => {
                    let id = required(&a, "TIME_SLOT_ID", "TIME_SLOT")?;
                    let value = match a.get("TIME_VALUE") {
                        Some(v) => Some(v.parse::<u64>().map_err(|_| Error::Xml(format!("bad TIME_VALUE {v:?}")))?),
                        None => None,
                    };
                    if slots.insert(id.clone(), value).is_some() {
                        return Err(Error::Xml(format!("duplicate time slot {id}")));
                    }
                    slot_count += 1;
                }
                "TIER" => tiers.push((
                    required(&a, "TIER_ID", "TIER")?,
                    required(&a, "LINGUISTIC_TYPE_REF", "TIER")?,
                )),
                "ALIGNABLE_ANNOTATION" => {
                    if tiers.is_empty() || stack.last().map(String::as_str) != Some("ANNOTATION") {
                        return Err(Error::Xml("annotation outside a tier".into()));
                    }
                    raw.push(RawAnnotation {
                        tier: tiers.len() - 1,
                        id: required(&a, "ANNOTATION_ID", "ALIGNABLE_ANNOTATION")?,
                        ref1: required(&a, "TIME_SLOT_REF1", "ALIGNABLE_ANNOTATION")?,
                        ref2: required(&a, "TIME_SLOT_REF2", "ALIGNABLE_ANNOTATION")?,
                        value: String::new(),
                    });
                }
                "LINGUISTIC_TYPE" => {
                    types.insert(required(&a, "LINGUISTIC_TYPE_ID", "LINGUISTIC_TYPE")?);
                }
                _ => {}
            }
            if !saw_root {
                return Err(Error::Xml(format!("root element is {name}, expected ANNOTATION_DOCUMENT")));
            }
            if !is_empty {
                stack.push(name);
            }
            continue;
        }
        match event {
            Event::Text(t) => {
                if stack.last().map(String::as_str) == Some("ANNOTATION_VALUE") {
                    if let Some(last) = raw.last_mut() {
                        last.value = t.unescape().map_err(xml_err)?.into_owned();
                    }
                }
            }
            Event::End(_) => {
                stack.pop();
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if !saw_root {
        return Err(Error::Xml("missing ANNOTATION_DOCUMENT".into()));
    }
    if !saw_header {
        return Err(Error::Xml("missing HEADER".into()));
    }
    if !saw_time_order {
        return Err(Error::Xml("missing TIME_ORDER".into()));
    }
    let mut tier_ids = BTreeSet::new();
    for (id, lt) in &tiers {
        if !tier_ids.insert(id) {
            return Err(Error::Xml(format!("duplicate tier {id}")));
        }
        if !types.contains(lt) {
            return Err(Error::Xml(format!("tier {id} references unknown linguistic type {lt}")));
        }
    }
    let mut ann_ids = BTreeSet::new();
    let mut doc_tiers: Vec<EafTier> = tiers
        .iter()
        .map(|(id, _)| EafTier {
            id: id.clone(),
            annotations: Vec::new(),
        })
        .collect();
    for a in raw {
        if !ann_ids.insert(a.id.clone()) {
            return Err(Error::Xml(format!("duplicate annotation id {}", a.id)));
        }
        let resolve = |r: &str| -> Result<u64> {
            slots
                .get(r)
                .ok_or_else(|| Error::Xml(format!("annotation {} references missing slot {r}", a.id)))?
                .ok_or_else(|| Error::Xml(format!("slot {r} has no time value")))
        };
        let (start_ms, end_ms) = (resolve(&a.ref1)?, resolve(&a.ref2)?);
        if end_ms < start_ms {
            return Err(Error::Xml(format!("annotation {} ends before it starts", a.id)));
        }
        doc_tiers[a.tier].annotations.push(EafAnnotation {
            id: a.id,
            start_ms,
            end_ms,
            value: a.value,
        });
    }
    Ok(EafDocument {
        media_url,
        time_slots: slot_count,
        tiers: doc_tiers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AudioRef, Interval, Manifest, SpeakerSegment};

    fn bundle() -> ExportBundle {
        ExportBundle::new(Manifest {
            fps: 25.0,
            width: 64,
            height: 64,
            total_frames: 250,
            audio: Some(AudioRef {
                path: "audio.wav".into(),
                sample_rate: 16_000,
            }),
        })
    }

    fn seg(start: f64, end: f64, c: i64) -> SpeakerSegment {
        SpeakerSegment::new(start, end, c)
    }

    #[test]
    fn millisecond_floor() {
        assert_eq!(to_millis(1.2345), 1234);
        assert_eq!(to_millis(0.29), 290);
        assert_eq!(to_millis(0.0), 0);
        assert_eq!(to_millis(2.9999), 2999);
    }

    #[test]
    fn two_clusters_three_segments() {
        let mut b = bundle();
        b.segments = vec![seg(0.0, 1.0, 0), seg(1.5, 2.0, 1), seg(3.0, 4.2, 0)];
        let text = export_eaf(&b, 10.0).unwrap();
        let doc = parse_eaf(&text).unwrap();
        let names: Vec<&str> = doc.tiers.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(names, ["SPK0", "SPK1", ANONYMISE_TIER]);
        assert_eq!(doc.time_slots, 6);
        assert_eq!(doc.tier("SPK0").unwrap().annotations.len(), 2);
        assert_eq!(doc.media_url.as_deref(), Some("file://audio.wav"));
    }

    #[test]
    fn empty_segments() {
        let text = export_eaf(&bundle(), 10.0).unwrap();
        assert!(text.contains("<HEADER") && text.contains("<TIME_ORDER/>"));
        let doc = parse_eaf(&text).unwrap();
        assert_eq!(doc.time_slots, 0);
        assert_eq!(doc.tiers.len(), 1);
        assert!(doc.tiers[0].annotations.is_empty());
    }

    #[test]
    fn segment_past_duration_rejected() {
        let mut b = bundle();
        b.segments = vec![seg(9.0, 11.0, 0)];
        assert!(export_eaf(&b, 10.0).is_err());
    }

    #[test]
    fn round_trip_with_silence_and_picks() {
        let mut b = bundle();
        b.segments = vec![seg(0.1234, 1.5678, 3), seg(2.0, 2.5, 7)];
        b.picked_clusters = vec![7];
        b.silence = vec![Interval { start: 1.85, end: 2.65 }];
        let doc = parse_eaf(&export_eaf(&b, 10.0).unwrap()).unwrap();
        let spk3 = &doc.tier("SPK3").unwrap().annotations[0];
        assert_eq!((spk3.start_ms, spk3.end_ms, spk3.value.as_str()), (123, 1567, "keep"));
        let spk7 = &doc.tier("SPK7").unwrap().annotations[0];
        assert_eq!((spk7.start_ms, spk7.end_ms, spk7.value.as_str()), (2000, 2500, "redact"));
        let anon = &doc.tier(ANONYMISE_TIER).unwrap().annotations[0];
        assert_eq!((anon.start_ms, anon.end_ms), (1850, 2650));
    }

    #[test]
    fn validator_rejects_broken_documents() {
        let mut b = bundle();
        b.segments = vec![seg(0.0, 1.0, 0)];
        let good = export_eaf(&b, 10.0).unwrap();
        assert!(parse_eaf(&good.replace("TIME_SLOT_REF2=\"ts2\"", "TIME_SLOT_REF2=\"ts9\"")).is_err());
        assert!(parse_eaf(&good.replace("TIME_SLOT_ID=\"ts2\"", "TIME_SLOT_ID=\"ts1\"")).is_err());
        assert!(parse_eaf(&good.replace("LINGUISTIC_TYPE_ID=\"default-lt\"", "LINGUISTIC_TYPE_ID=\"x\"")).is_err());
        assert!(parse_eaf("<FOO/>").is_err());
        assert!(parse_eaf(&good.replace("TIER_ID=\"ANONYMISE\"", "TIER_ID=\"SPK0\"")).is_err());
    }
}
