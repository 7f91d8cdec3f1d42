//! Instruction-tuning examples for the five STSG grounding objectives.
//!
//! * `L1`: is this STSG paired with this video (yes/no, with sampled negatives)
//! * `L2`: generate the whole STSG expression
//! * `L3`: caption in, tracklet out
//! * `L4`: target in, caption plus tracklet out
//! * `L5`: box in, category label plus tracklet out

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{render, PromptError};
use crate::query::extract_tracklet;
use crate::stsg::{category_of, BBox, Stsg};
use crate::text::serialize;

pub const DATAGEN_PLACEHOLDERS: &[&str] = &["Caption", "Target", "Video", "Frame", "BBox"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl Objective {
    pub const ALL: [Objective; 5] = [Self::L1, Self::L2, Self::L3, Self::L4, Self::L5];

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown objective {s:?} (expected L1..L5)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCaption {
    pub text: String,
    pub target_id: String,
    /// Inclusive frame range.
    pub span: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoStsgPair {
    pub video_id: String,
    pub stsg: Stsg,
    #[serde(default)]
    pub action_captions: Vec<ActionCaption>,
}

impl VideoStsgPair {
    fn check(&self) -> Result<(), DatagenError> {
        let invalid = |reason: String| DatagenError::InvalidPair {
            video_id: self.video_id.clone(),
            reason,
        };
        if let Some(v) = crate::stsg::validate(&self.stsg).first() {
            return Err(invalid(format!("{}: {}", v.code, v.detail)));
        }
        let range = match (self.stsg.frames.first(), self.stsg.frames.last()) {
            (Some(a), Some(b)) => Some((a.frame_index, b.frame_index)),
            _ => None,
        };
        for c in &self.action_captions {
            if !self.stsg.contains_instance(&c.target_id) {
                return Err(invalid(format!("caption target {} is not in the STSG", c.target_id)));
            }
            let (s, e) = c.span;
            let inside = range.is_some_and(|(lo, hi)| lo <= s && s <= e && e <= hi);
            if !inside {
                return Err(invalid(format!("caption span ({s}, {e}) outside the STSG frame range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExampleContext {
    Stsg { text: String },
    Bbox { frame_index: u32, bbox: BBox },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningExample {
    pub objective: Objective,
    pub instruction: String,
    pub video_id: String,
    pub context: Option<ExampleContext>,
    pub expected: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("pair {video_id} has no action captions")]
    MissingCaptions { video_id: String },
    #[error("L1 negatives need at least two pairs")]
    SingletonCorpus,
    #[error("no other pair has an STSG different from {video_id}")]
    NoDistinctNegative { video_id: String },
    #[error("negative_ratio must be a finite number >= 0, got {0}")]
    InvalidRatio(f64),
    #[error("invalid pair {video_id}: {reason}")]
    InvalidPair { video_id: String, reason: String },
    #[error(transparent)]
    Template(#[from] PromptError),
}

impl DatagenError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyCorpus => "EMPTY_CORPUS",
            Self::MissingCaptions { .. } => "MISSING_CAPTIONS",
            Self::SingletonCorpus => "SINGLETON_CORPUS",
            Self::NoDistinctNegative { .. } => "NO_DISTINCT_NEGATIVE",
            Self::InvalidRatio(_) => "INVALID_RATIO",
            Self::InvalidPair { .. } => "INVALID_PAIR",
            Self::Template(_) => "TEMPLATE_ERROR",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct DatagenTemplates {
    pub version: String,
    #[serde(rename = "L1")]
    pub l1: Vec<String>,
    #[serde(rename = "L2")]
    pub l2: Vec<String>,
    #[serde(rename = "L3")]
    pub l3: Vec<String>,
    #[serde(rename = "L4")]
    pub l4: Vec<String>,
    #[serde(rename = "L5")]
    pub l5: Vec<String>,
}

impl DatagenTemplates {
    pub fn builtin() -> &'static DatagenTemplates {
        static SET: OnceLock<DatagenTemplates> = OnceLock::new();
        SET.get_or_init(|| {
            toml::from_str(include_str!("../assets/datagen_templates.toml")).expect("bundled datagen asset parses")
        })
    }

    pub fn variants(&self, objective: Objective) -> &[String] {
        match objective {
            Objective::L1 => &self.l1,
            Objective::L2 => &self.l2,
            Objective::L3 => &self.l3,
            Objective::L4 => &self.l4,
            Objective::L5 => &self.l5,
        }
    }
}

/// Independent generator per (seed, objective, corpus item).
fn item_rng(seed: u64, objective: Objective, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((objective.stream() << 40) | index as u64);
    rng
}

fn instruction(objective: Objective, rng: &mut ChaCha8Rng, values: &[(&str, &str)]) -> Result<String, DatagenError> {
    let variants = DatagenTemplates::builtin().variants(objective);
    let template = &variants[rng.random_range(0..variants.len())];
    Ok(render(&objective.to_string(), template, DATAGEN_PLACEHOLDERS, values)?)
}

fn expression(stsg: &Stsg, video_id: &str) -> Result<String, DatagenError> {
    serialize(stsg).map_err(|e| DatagenError::InvalidPair {
        video_id: video_id.to_string(),
        reason: e.to_string(),
    })
}

fn tracklet_expression(pair: &VideoStsgPair, target: &str) -> Result<String, DatagenError> {
    let tracklet = extract_tracklet(&pair.stsg, target).map_err(|e| DatagenError::InvalidPair {
        video_id: pair.video_id.clone(),
        reason: e.to_string(),
    })?;
    expression(&tracklet.to_stsg(), &pair.video_id)
}

/// L1 negative count for item `i`: the cumulative floor of `i * ratio`
/// spreads a fractional ratio evenly and sums to `floor(n * ratio)`.
fn negatives_for(i: usize, ratio: f64) -> usize {
    ((i as f64 + 1.0) * ratio).floor() as usize - (i as f64 * ratio).floor() as usize
}

pub fn gen_examples(
    objective: Objective,
    corpus: &[VideoStsgPair],
    negative_ratio: f64,
    seed: u64,
) -> Result<Vec<TuningExample>, DatagenError> {
    if corpus.is_empty() {
        return Err(DatagenError::EmptyCorpus);
    }
    if !(negative_ratio.is_finite() && negative_ratio >= 0.0) {
        return Err(DatagenError::InvalidRatio(negative_ratio));
    }
    for pair in corpus {
        pair.check()?;
        if matches!(objective, Objective::L3 | Objective::L4) && pair.action_captions.is_empty() {
            return Err(DatagenError::MissingCaptions {
                video_id: pair.video_id.clone(),
            });
        }
    }
    if objective == Objective::L1 && negative_ratio > 0.0 && corpus.len() == 1 {
        return Err(DatagenError::SingletonCorpus);
    }

    let graphs: Vec<Stsg> = if objective == Objective::L1 && negative_ratio > 0.0 {
        corpus.iter().map(|p| p.stsg.without_features().canonical()).collect()
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    for (i, pair) in corpus.iter().enumerate() {
        let mut rng = item_rng(seed, objective, i);
        let video = pair.video_id.as_str();
        match objective {
            Objective::L1 => {
                let own = expression(&pair.stsg, video)?;
                out.push(TuningExample {
                    objective,
                    instruction: instruction(objective, &mut rng, &[("Video", video)])?,
                    video_id: video.to_string(),
                    context: Some(ExampleContext::Stsg { text: own }),
                    expected: "yes".into(),
                });
                let n_neg = negatives_for(i, negative_ratio);
                if n_neg == 0 {
                    continue;
                }
                let others: Vec<&VideoStsgPair> = corpus
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i && graphs[*j] != graphs[i])
                    .map(|(_, other)| other)
                    .collect();
                if others.is_empty() {
                    return Err(DatagenError::NoDistinctNegative {
                        video_id: video.to_string(),
                    });
                }
                for _ in 0..n_neg {
                    let other = others[rng.random_range(0..others.len())];
                    out.push(TuningExample {
                        objective,
                        instruction: instruction(objective, &mut rng, &[("Video", video)])?,
                        video_id: video.to_string(),
                        context: Some(ExampleContext::Stsg {
                            text: expression(&other.stsg, &other.video_id)?,
                        }),
                        expected: "no".into(),
                    });
                }
            }
            Objective::L2 => {
                let expected = expression(&pair.stsg, video)?;
                if expected.is_empty() {
                    return Err(DatagenError::InvalidPair {
                        video_id: video.to_string(),
                        reason: "STSG has no frames".into(),
                    });
                }
                out.push(TuningExample {
                    objective,
                    instruction: instruction(objective, &mut rng, &[("Video", video)])?,
                    video_id: video.to_string(),
                    context: None,
                    expected,
                });
            }
            Objective::L3 | Objective::L4 => {
                for caption in &pair.action_captions {
                    let tracklet = tracklet_expression(pair, &caption.target_id)?;
                    let (values, expected) = if objective == Objective::L3 {
                        ([("Video", video), ("Caption", caption.text.as_str())], tracklet)
                    } else {
                        (
                            [("Video", video), ("Target", caption.target_id.as_str())],
                            format!("{}\n{tracklet}", caption.text),
                        )
                    };
                    out.push(TuningExample {
                        objective,
                        instruction: instruction(objective, &mut rng, &values)?,
                        video_id: video.to_string(),
                        context: None,
                        expected,
                    });
                }
            }
            Objective::L5 => {
                let mut seen = std::collections::HashSet::new();
                for frame in &pair.stsg.frames {
                    for node in &frame.nodes {
                        if !seen.insert(node.instance_id.as_str()) {
                            continue;
                        }
                        let Some(bbox) = node.bbox else {
                            continue;
                        };
                        let tracklet = tracklet_expression(pair, &node.instance_id)?;
                        let frame_text = frame.frame_index.to_string();
                        let bbox_text = format!("[{:.1}, {:.1}, {:.1}, {:.1}]", bbox.x, bbox.y, bbox.w, bbox.h);
                        out.push(TuningExample {
                            objective,
                            instruction: instruction(
                                objective,
                                &mut rng,
                                &[("Video", video), ("Frame", &frame_text), ("BBox", &bbox_text)],
                            )?,
                            video_id: video.to_string(),
                            context: Some(ExampleContext::Bbox {
                                frame_index: frame.frame_index,
                                bbox,
                            }),
                            expected: format!("{}\n{tracklet}", category_of(&node.instance_id)),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One JSON object per line.
pub fn write_jsonl(examples: &[TuningExample], mut w: impl Write) -> std::io::Result<()> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(examples: &[TuningExample]) -> String {
    let mut buf = Vec::new();
    write_jsonl(examples, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn load_corpus(text: &str) -> Result<Vec<VideoStsgPair>, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stsg::{link_coreferences, FrameSceneGraph, ObjectNode};
    use crate::text::parse;

    fn exemplar() -> VideoStsgPair {
        let f1 = FrameSceneGraph::new(1)
            .with_node(ObjectNode::boxed("car-1", BBox::new(0.0, 13.4, 7.0, 8.1)))
            .with_node(ObjectNode::stuff("street"))
            .with_edge("car-1", "on the left", "street");
        let f2 = FrameSceneGraph::new(2)
            .with_node(ObjectNode::boxed("car-1", BBox::new(1.0, 13.4, 7.0, 8.1)))
            .with_node(ObjectNode::boxed("person-1", BBox::new(9.0, 2.0, 3.0, 8.0)))
            .with_edge("person-1", "next to", "car-1");
        VideoStsgPair {
            video_id: "v1".into(),
            stsg: link_coreferences(vec![f1, f2]).unwrap(),
            action_captions: vec![ActionCaption {
                text: "a car drives along the street".into(),
                target_id: "car-1".into(),
                span: (1, 2),
            }],
        }
    }

    fn other(video_id: &str, x: f64) -> VideoStsgPair {
        let f = FrameSceneGraph::new(1).with_node(ObjectNode::boxed("dog-1", BBox::new(x, 0.0, 2.0, 2.0)));
        VideoStsgPair {
            video_id: video_id.into(),
            stsg: link_coreferences(vec![f]).unwrap(),
            action_captions: vec![ActionCaption {
                text: "a dog sits".into(),
                target_id: "dog-1".into(),
                span: (1, 1),
            }],
        }
    }

    #[test]
    fn l5_exemplar_contains_label_and_tracklet() {
        let pair = exemplar();
        let ex = gen_examples(Objective::L5, std::slice::from_ref(&pair), 0.0, 3).unwrap();
        assert_eq!(ex.len(), 2);
        let car = &ex[0];
        assert_eq!(
            car.context,
            Some(ExampleContext::Bbox {
                frame_index: 1,
                bbox: BBox::new(0.0, 13.4, 7.0, 8.1)
            })
        );
        let expected_tracklet = serialize(&extract_tracklet(&pair.stsg, "car-1").unwrap().to_stsg()).unwrap();
        assert_eq!(car.expected, format!("car\n{expected_tracklet}"));
        assert!(car.instruction.contains("[0.0, 13.4, 7.0, 8.1]"));
    }

    #[test]
    fn l2_round_trips() {
        let pair = exemplar();
        let ex = gen_examples(Objective::L2, std::slice::from_ref(&pair), 0.0, 1).unwrap();
        assert_eq!(parse(&ex[0].expected).unwrap(), pair.stsg.without_features());
    }

    #[test]
    fn l1_counts_and_negatives() {
        let corpus = vec![exemplar(), other("v2", 0.0), other("v3", 5.0)];
        let ex = gen_examples(Objective::L1, &corpus, 1.0, 9).unwrap();
        assert_eq!(ex.len(), 6);
        assert_eq!(ex.iter().filter(|e| e.expected == "no").count(), 3);
        for e in ex.iter().filter(|e| e.expected == "no") {
            let own = corpus.iter().find(|p| p.video_id == e.video_id).unwrap();
            let Some(ExampleContext::Stsg { text }) = &e.context else { panic!() };
            assert_ne!(parse(text).unwrap(), own.stsg.without_features());
        }
        let half = gen_examples(Objective::L1, &corpus, 0.5, 9).unwrap();
        assert_eq!(half.len(), 3 + 1);
    }

    #[test]
    fn l3_l4_follow_captions() {
        let corpus = vec![exemplar(), other("v2", 0.0)];
        let l3 = gen_examples(Objective::L3, &corpus, 0.0, 2).unwrap();
        assert_eq!(l3.len(), 2);
        assert!(l3[0].instruction.contains("a car drives along the street"));
        let l4 = gen_examples(Objective::L4, &corpus, 0.0, 2).unwrap();
        assert!(l4[0].instruction.contains("car-1"));
        assert!(l4[0].expected.starts_with("a car drives along the street\nFrame 1:"));
    }

    #[test]
    fn error_cases() {
        assert_eq!(gen_examples(Objective::L2, &[], 0.0, 0).unwrap_err().code(), "EMPTY_CORPUS");
        assert_eq!(
            gen_examples(Objective::L1, &[exemplar()], 1.0, 0).unwrap_err().code(),
            "SINGLETON_CORPUS"
        );
        let mut bare = exemplar();
        bare.action_captions.clear();
        assert_eq!(gen_examples(Objective::L3, &[bare], 0.0, 0).unwrap_err().code(), "MISSING_CAPTIONS");
        let mut bad = exemplar();
        bad.action_captions[0].span = (1, 9);
        assert_eq!(gen_examples(Objective::L4, &[bad], 0.0, 0).unwrap_err().code(), "INVALID_PAIR");
        let same = vec![other("a", 0.0), other("b", 0.0)];
        assert_eq!(gen_examples(Objective::L1, &same, 1.0, 0).unwrap_err().code(), "NO_DISTINCT_NEGATIVE");
    }

    #[test]
    fn seed_determinism() {
        let corpus = vec![exemplar(), other("v2", 0.0), other("v3", 5.0)];
        for objective in Objective::ALL {
            let a = to_jsonl(&gen_examples(objective, &corpus, 2.0, 11).unwrap());
            let b = to_jsonl(&gen_examples(objective, &corpus, 2.0, 11).unwrap());
            assert_eq!(a, b);
        }
        assert_eq!("l3".parse::<Objective>().unwrap(), Objective::L3);
    }
}
