use super::{BoundingBox, DataError};

pub const MANIFEST_HEADER: &str = "video_id,frame_timestamp,entity_id,label,fx1,fy1,fx2,fy2";
pub const MANIFEST_HEADER_BODY: &str =
    "video_id,frame_timestamp,entity_id,label,fx1,fy1,fx2,fy2,bx1,by1,bx2,by2";

/// Frame-level speaking annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakingLabel {
    Speaking,
    NotSpeaking,
}

impl SpeakingLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpeakingLabel::Speaking => "SPEAKING_AUDIBLE",
            SpeakingLabel::NotSpeaking => "NOT_SPEAKING",
        }
    }

    pub fn is_speaking(&self) -> bool {
        matches!(self, SpeakingLabel::Speaking)
    }
}

/// One annotation row: a face (and optionally body) box for one entity in
/// one frame, with its speaking label.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub video_id: String,
    pub frame_timestamp: f64,
    pub entity_id: String,
    pub label: SpeakingLabel,
    pub face_box: BoundingBox,
    pub body_box: Option<BoundingBox>,
}

/// Parse manifest CSV content. Expects a header row followed by rows of 8
/// columns (no body box) or 12 columns (with body box).
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, DataError> {
    let mut records = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header))
            if header.trim() == MANIFEST_HEADER || header.trim() == MANIFEST_HEADER_BODY => {}
        Some((_, header)) => {
            return Err(DataError::ManifestParse {
                line: 1,
                reason: format!("unexpected header '{}'", header.trim()),
            })
        }
        None => {
            return Err(DataError::ManifestParse {
                line: 1,
                reason: "empty manifest".into(),
            })
        }
    }
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_row(line, lineno)?);
    }
    check_key_uniqueness(&records)?;
    Ok(records)
}

fn parse_row(line: &str, lineno: usize) -> Result<ManifestRecord, DataError> {
    let err = |reason: String| DataError::ManifestParse {
        line: lineno,
        reason,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 8 && fields.len() != 12 {
        return Err(err(format!(
            "expected 8 or 12 comma-separated fields, found {}",
            fields.len()
        )));
    }
    let num = |s: &str, what: &str| -> Result<f64, DataError> {
        s.parse::<f64>()
            .map_err(|_| err(format!("cannot parse {what} '{s}' as a number")))
    };
    let timestamp = num(fields[1], "frame_timestamp")?;
    if !(timestamp >= 0.0) {
        return Err(err(format!("negative frame_timestamp {timestamp}")));
    }
    let label = match fields[3] {
        "SPEAKING_AUDIBLE" => SpeakingLabel::Speaking,
        "NOT_SPEAKING" => SpeakingLabel::NotSpeaking,
        other => return Err(err(format!("unknown label '{other}'"))),
    };
    let boxed = |a, b, c, d| -> Result<BoundingBox, DataError> {
        BoundingBox::new(a, b, c, d).map_err(|e| err(e.to_string()))
    };
    let face_box = boxed(
        num(fields[4], "fx1")?,
        num(fields[5], "fy1")?,
        num(fields[6], "fx2")?,
        num(fields[7], "fy2")?,
    )?;
    let body_box = if fields.len() == 12 {
        Some(boxed(
            num(fields[8], "bx1")?,
            num(fields[9], "by1")?,
            num(fields[10], "bx2")?,
            num(fields[11], "by2")?,
        )?)
    } else {
        None
    };
    Ok(ManifestRecord {
        video_id: fields[0].to_string(),
        frame_timestamp: timestamp,
        entity_id: fields[2].to_string(),
        label,
        face_box,
        body_box,
    })
}

fn check_key_uniqueness(records: &[ManifestRecord]) -> Result<(), DataError> {
    let mut keys: Vec<(&str, &str, u64)> = records
        .iter()
        .map(|r| {
            (
                r.video_id.as_str(),
                r.entity_id.as_str(),
                r.frame_timestamp.to_bits(),
            )
        })
        .collect();
    keys.sort_unstable();
    for pair in keys.windows(2) {
        if pair[0] == pair[1] {
            return Err(DataError::ManifestParse {
                line: 0,
                reason: format!(
                    "duplicate (video_id, entity_id, frame_timestamp) key ({}, {}, {})",
                    pair[0].0,
                    pair[0].1,
                    f64::from_bits(pair[0].2)
                ),
            });
        }
    }
    Ok(())
}

/// Render records back to CSV. Uses the 12-column header when any record
/// carries a body box; float formatting is shortest-roundtrip, so
/// `parse_manifest(serialize_manifest(r)) == r`.
pub fn serialize_manifest(records: &[ManifestRecord]) -> String {
    let with_body = records.iter().any(|r| r.body_box.is_some());
    let mut out = String::new();
    out.push_str(if with_body {
        MANIFEST_HEADER_BODY
    } else {
        MANIFEST_HEADER
    });
    out.push('\n');
    for r in records {
        let f = &r.face_box;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            r.video_id,
            r.frame_timestamp,
            r.entity_id,
            r.label.as_str(),
            f.x1,
            f.y1,
            f.x2,
            f.y2
        ));
        if with_body {
            // A record without a body box in a mixed manifest repeats the
            // face box; the synthetic generator always sets body boxes.
            let b = r.body_box.as_ref().unwrap_or(f);
            out.push_str(&format!(",{},{},{},{}", b.x1, b.y1, b.x2, b.y2));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_plus_one_row() {
        let text = format!("{MANIFEST_HEADER}\nvid,0.04,e0,SPEAKING_AUDIBLE,0.1,0.1,0.5,0.5\n");
        let recs = parse_manifest(&text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].video_id, "vid");
        assert!(recs[0].label.is_speaking());
        assert!(recs[0].body_box.is_none());
    }

    #[test]
    fn header_only_is_empty() {
        let recs = parse_manifest(&format!("{MANIFEST_HEADER}\n")).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn inverted_box_is_validation_error() {
        let text = format!("{MANIFEST_HEADER}\nvid,0.0,e0,NOT_SPEAKING,0.6,0.1,0.5,0.5\n");
        let err = parse_manifest(&text).unwrap_err();
        assert!(matches!(err, DataError::ManifestParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = format!(
            "{MANIFEST_HEADER}\nvid,0.0,e0,NOT_SPEAKING,0.1,0.1,0.5,0.5\nvid,xx,e0,NOT_SPEAKING,0.1,0.1,0.5,0.5\n"
        );
        match parse_manifest(&text).unwrap_err() {
            DataError::ManifestParse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let row = "vid,0.04,e0,NOT_SPEAKING,0.1,0.1,0.5,0.5";
        let text = format!("{MANIFEST_HEADER}\n{row}\n{row}\n");
        assert!(parse_manifest(&text).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f64..0.49, 0.0f64..0.49, 0.51f64..1.0, 0.51f64..1.0)
            .prop_map(|(x1, y1, x2, y2)| BoundingBox::new(x1, y1, x2, y2).unwrap())
    }

    proptest! {
        // Round-trip: serialize -> parse -> identical records.
        #[test]
        fn roundtrip(
            n in 1usize..6,
            boxes in proptest::collection::vec(arb_box(), 6),
            body in proptest::collection::vec(arb_box(), 6),
            speaking in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let records: Vec<ManifestRecord> = (0..n)
                .map(|i| ManifestRecord {
                    video_id: format!("v{i}"),
                    frame_timestamp: i as f64 * 0.04,
                    entity_id: "e0".into(),
                    label: if speaking[i] { SpeakingLabel::Speaking } else { SpeakingLabel::NotSpeaking },
                    face_box: boxes[i],
                    body_box: Some(body[i]),
                })
                .collect();
            let text = serialize_manifest(&records);
            let parsed = parse_manifest(&text).unwrap();
            prop_assert_eq!(parsed, records);
        }
    }
}
