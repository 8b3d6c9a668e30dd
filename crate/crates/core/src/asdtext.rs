//! Action taxonomy and deterministic caption-template bank.
//!
//! Fourteen speaking-related actions grouped by body part, with three
//! authored captions per action and gender. The template sentences are
//! versioned here; tests pin the catalog with a checksum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsdTextError {
    #[error("unknown action id {0} (valid: 1..=14)")]
    UnknownAction(u8),
    #[error("image '{0}' has an empty action set")]
    EmptyActions(String),
    #[error("duplicate image id '{0}'")]
    DuplicateImage(String),
    #[error("need at least 10 records to split, found {0}")]
    TooFewRecords(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyPart {
    Hand,
    Mouth,
    Arms,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    fn subject(self) -> &'static str {
        match self {
            Gender::Female => "woman",
            Gender::Male => "man",
        }
    }

    fn possessive(self) -> &'static str {
        match self {
            Gender::Female => "her",
            Gender::Male => "his",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

/// One catalog row: id, body-part group and canonical label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLabel {
    pub id: u8,
    pub body_part: BodyPart,
    pub text: &'static str,
}

const CATALOG: [(u8, BodyPart, &str); 14] = [
    (1, BodyPart::Hand, "Hand raised in the air"),
    (2, BodyPart::Hand, "Hand touching the face"),
    (3, BodyPart::Hand, "Hand raised with object"),
    (4, BodyPart::Hand, "Hand movement (not raised)"),
    (5, BodyPart::Mouth, "Mouth occlusion with object"),
    (6, BodyPart::Mouth, "Mouth occlusion with hand"),
    (7, BodyPart::Mouth, "Mouth move from speech"),
    (8, BodyPart::Mouth, "Mouth move from expression"),
    (9, BodyPart::Mouth, "Mouth not moving"),
    (10, BodyPart::Arms, "Crossed arms"),
    (11, BodyPart::Arms, "Arms behind back"),
    (12, BodyPart::Body, "Body in relaxed position"),
    (13, BodyPart::Body, "Body facing forward"),
    (14, BodyPart::Body, "Wild body movement"),
];

/// The full frozen catalog of 14 actions.
pub fn action_catalog() -> Vec<ActionLabel> {
    CATALOG
        .iter()
        .map(|(id, part, text)| ActionLabel {
            id: *id,
            body_part: *part,
            text,
        })
        .collect()
}

pub fn action_by_id(id: u8) -> Result<ActionLabel, AsdTextError> {
    action_catalog()
        .into_iter()
        .find(|a| a.id == id)
        .ok_or(AsdTextError::UnknownAction(id))
}

/// Three caption patterns per action; `{s}` is the subject noun, `{p}` the
/// possessive pronoun.
const PATTERNS: [[&str; 3]; 14] = [
    [
        "a {s} with {p} hand raised in the air",
        "a {s} raising {p} hand above {p} head",
        "a {s} holding {p} hand up high",
    ],
    [
        "a {s} touching {p} face with {p} hand",
        "a {s} with a hand resting on {p} face",
        "a {s} bringing {p} hand to {p} face",
    ],
    [
        "a {s} raising an object in {p} hand",
        "a {s} with {p} hand raised while holding an object",
        "a {s} lifting an object up with {p} hand",
    ],
    [
        "a {s} moving {p} hand without raising it",
        "a {s} gesturing with {p} hand kept low",
        "a {s} shifting {p} hand at waist level",
    ],
    [
        "a {s} with {p} mouth occluded by an object",
        "a {s} holding an object in front of {p} mouth",
        "a {s} whose mouth is hidden behind an object",
    ],
    [
        "a {s} covering {p} mouth with {p} hand",
        "a {s} with a hand over {p} mouth",
        "a {s} pressing {p} hand against {p} mouth",
    ],
    [
        "a {s} moving {p} mouth while speaking",
        "a {s} whose mouth moves from speech",
        "a {s} talking with {p} mouth clearly moving",
    ],
    [
        "a {s} moving {p} mouth with a facial expression",
        "a {s} whose mouth moves from an expression rather than speech",
        "a {s} showing an expression that moves {p} mouth",
    ],
    [
        "a {s} with {p} mouth not moving",
        "a {s} keeping {p} mouth still",
        "a {s} whose mouth stays closed and motionless",
    ],
    [
        "a {s} with {p} arms crossed",
        "a {s} crossing {p} arms over {p} chest",
        "a {s} standing with crossed arms",
    ],
    [
        "a {s} with {p} arms behind {p} back",
        "a {s} holding {p} arms behind {p} back",
        "a {s} keeping both arms behind {p} back",
    ],
    [
        "a {s} with {p} body in a relaxed position",
        "a {s} standing in a relaxed posture",
        "a {s} resting in a relaxed body position",
    ],
    [
        "a {s} with {p} body facing forward",
        "a {s} facing the camera directly",
        "a {s} oriented straight toward the front",
    ],
    [
        "a {s} making wild body movements",
        "a {s} moving {p} whole body energetically",
        "a {s} swinging {p} body around wildly",
    ],
];

/// The three gendered captions for one action.
pub fn templates_for(action: &ActionLabel, gender: Gender) -> [String; 3] {
    let patterns = PATTERNS[(action.id - 1) as usize];
    patterns.map(|p| {
        p.replace("{s}", gender.subject())
            .replace("{p}", gender.possessive())
    })
}

/// One annotated image: gender, its actions and the caption list.
#[derive(Debug, Clone)]
pub struct CaptionRecord {
    pub image_id: String,
    pub gender: Gender,
    pub actions: Vec<ActionLabel>,
    pub captions: Vec<String>,
}

/// Expand per-image (gender, action-set) annotations into caption records:
/// the captions of an image are the union of the templates of its actions.
/// `seed` only shuffles caption order within each record.
pub fn build_annotations(
    annotations: &[(String, Gender, Vec<u8>)],
    seed: u64,
) -> Result<Vec<CaptionRecord>, AsdTextError> {
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::with_capacity(annotations.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (image_id, gender, action_ids) in annotations {
        if action_ids.is_empty() {
            return Err(AsdTextError::EmptyActions(image_id.clone()));
        }
        if !seen.insert(image_id.clone()) {
            return Err(AsdTextError::DuplicateImage(image_id.clone()));
        }
        let mut actions = Vec::with_capacity(action_ids.len());
        let mut captions = Vec::with_capacity(3 * action_ids.len());
        for id in action_ids {
            let action = action_by_id(*id)?;
            captions.extend(templates_for(&action, *gender));
            actions.push(action);
        }
        captions.shuffle(&mut rng);
        records.push(CaptionRecord {
            image_id: image_id.clone(),
            gender: *gender,
            actions,
            captions,
        });
    }
    Ok(records)
}

/// Deterministic 90/10 split by image: seeded shuffle, first
/// `floor(0.9 N)` records become the train side.
pub fn split_90_10(
    records: &[CaptionRecord],
    seed: u64,
) -> Result<(Vec<CaptionRecord>, Vec<CaptionRecord>), AsdTextError> {
    if records.len() < 10 {
        return Err(AsdTextError::TooFewRecords(records.len()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = (records.len() as f64 * 0.9).floor() as usize;
    let train = order[..cut].iter().map(|&i| records[i].clone()).collect();
    let test = order[cut..].iter().map(|&i| records[i].clone()).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};
    use std::collections::HashSet;

    #[test]
    fn catalog_has_fourteen_pinned_rows() {
        let catalog = action_catalog();
        assert_eq!(catalog.len(), 14);
        assert_eq!(action_by_id(5).unwrap().text, "Mouth occlusion with object");
        assert_eq!(action_by_id(7).unwrap().text, "Mouth move from speech");
        assert_eq!(action_by_id(1).unwrap().text, "Hand raised in the air");
        assert_eq!(action_by_id(10).unwrap().text, "Crossed arms");
        for id in 12..=14 {
            assert_eq!(action_by_id(id).unwrap().body_part, BodyPart::Body);
        }
        let hand: Vec<u8> = catalog
            .iter()
            .filter(|a| a.body_part == BodyPart::Hand)
            .map(|a| a.id)
            .collect();
        assert_eq!(hand, vec![1, 2, 3, 4]);
        let mouth: Vec<u8> = catalog
            .iter()
            .filter(|a| a.body_part == BodyPart::Mouth)
            .map(|a| a.id)
            .collect();
        assert_eq!(mouth, vec![5, 6, 7, 8, 9]);
        let arms: Vec<u8> = catalog
            .iter()
            .filter(|a| a.body_part == BodyPart::Arms)
            .map(|a| a.id)
            .collect();
        assert_eq!(arms, vec![10, 11]);
    }

    #[test]
    fn catalog_checksum_is_frozen() {
        let mut hasher = Sha256::new();
        for a in action_catalog() {
            hasher.update(format!("{}|{:?}|{}\n", a.id, a.body_part, a.text));
        }
        let hex = format!("{:x}", hasher.finalize());
        assert_eq!(
            hex,
            "ab1b41763b0bdd6ec383930f7beaff99e65427b8cd57080c350c1ac21c067f3b",
            "catalog changed; the taxonomy is frozen"
        );
    }

    #[test]
    fn bank_is_84_unique_templates() {
        let mut all = HashSet::new();
        for action in action_catalog() {
            for gender in [Gender::Female, Gender::Male] {
                let three = templates_for(&action, gender);
                let distinct: HashSet<&String> = three.iter().collect();
                assert_eq!(distinct.len(), 3, "duplicate slot in {}", action.text);
                for t in three {
                    assert!(!t.is_empty());
                    assert!(all.insert(t), "duplicate template across the bank");
                }
            }
        }
        assert_eq!(all.len(), 84);
    }

    #[test]
    fn raised_hand_templates_mention_hands() {
        let action = action_by_id(1).unwrap();
        for t in templates_for(&action, Gender::Female) {
            let lower = t.to_lowercase();
            assert!(lower.contains("hand"), "{t}");
            assert!(lower.contains("rais") || lower.contains("up"), "{t}");
            assert!(lower.contains("woman") || lower.contains("her"), "{t}");
        }
    }

    #[test]
    fn annotations_expand_three_captions_per_action() {
        let ann = vec![
            ("img0".to_string(), Gender::Female, vec![7u8]),
            ("img1".to_string(), Gender::Male, vec![1, 10]),
        ];
        let records = build_annotations(&ann, 3).unwrap();
        assert_eq!(records[0].captions.len(), 3);
        assert_eq!(records[1].captions.len(), 6);
        // Deterministic given the seed.
        let again = build_annotations(&ann, 3).unwrap();
        assert_eq!(records[1].captions, again[1].captions);
    }

    #[test]
    fn empty_action_set_rejected() {
        let ann = vec![("img0".to_string(), Gender::Female, vec![])];
        assert!(matches!(
            build_annotations(&ann, 0),
            Err(AsdTextError::EmptyActions(_))
        ));
    }

    #[test]
    fn split_is_nine_to_one_and_leak_free() {
        let ann: Vec<(String, Gender, Vec<u8>)> = (0..100)
            .map(|i| {
                (
                    format!("img{i:03}"),
                    if i % 2 == 0 { Gender::Female } else { Gender::Male },
                    vec![(i % 14) as u8 + 1],
                )
            })
            .collect();
        let records = build_annotations(&ann, 1).unwrap();
        let (train, test) = split_90_10(&records, 11).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(test.len(), 10);
        let train_ids: HashSet<&String> = train.iter().map(|r| &r.image_id).collect();
        for r in &test {
            assert!(!train_ids.contains(&r.image_id), "image leaked across split");
        }
        // Same seed, same split.
        let (train2, _) = split_90_10(&records, 11).unwrap();
        let ids: Vec<&String> = train.iter().map(|r| &r.image_id).collect();
        let ids2: Vec<&String> = train2.iter().map(|r| &r.image_id).collect();
        assert_eq!(ids, ids2);
    }

    #[test]
    fn split_needs_ten_records() {
        let ann: Vec<(String, Gender, Vec<u8>)> = (0..5)
            .map(|i| (format!("i{i}"), Gender::Female, vec![1]))
            .collect();
        let records = build_annotations(&ann, 0).unwrap();
        assert!(matches!(
            split_90_10(&records, 0),
            Err(AsdTextError::TooFewRecords(5))
        ));
    }
}
