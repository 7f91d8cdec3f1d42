//! Spatial-temporal scene graph data model.
//!
//! An [`Stsg`] is an ordered list of per-frame scene graphs plus temporal
//! coreference links that tie the occurrences of one instance together
//! across frames. Nodes are object proposals (category, optional box,
//! optional opaque feature vector); edges are `subject-predicate-object`
//! triplets inside one frame.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned box `(x, y, w, h)` in abstract coordinate units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Finite with non-negative extent. Zero-area boxes are valid.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.w >= 0.0 && self.h >= 0.0
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Splits an instance id of the form `<category>-<positive integer>`.
///
/// The category part may itself contain hyphens (`"t-shirt-2"` splits into
/// `("t-shirt", 2)`).
pub fn split_instance_id(id: &str) -> Option<(&str, u64)> {
    let (category, index) = id.rsplit_once('-')?;
    if category.is_empty() || index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index: u64 = index.parse().ok()?;
    (index > 0).then_some((category, index))
}

/// Category implied by an instance id: the prefix before `-<n>`, or the
/// whole id for bare labels such as `"street"`.
pub fn category_of(id: &str) -> &str {
    split_instance_id(id).map_or(id, |(category, _)| category)
}

/// Object proposal inside one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectNode {
    pub instance_id: String,
    pub category: String,
    pub bbox: Option<BBox>,
    pub feature: Option<Vec<f64>>,
    /// Set for triplet endpoints registered without a box (e.g. `"street"`).
    pub is_stuff: bool,
}

impl ObjectNode {
    /// Boxed node; the category is taken from the id prefix.
    pub fn boxed(instance_id: impl Into<String>, bbox: BBox) -> Self {
        let instance_id = instance_id.into();
        Self {
            category: category_of(&instance_id).to_string(),
            instance_id,
            bbox: Some(bbox),
            feature: None,
            is_stuff: false,
        }
    }

    /// Box-less stuff node.
    pub fn stuff(instance_id: impl Into<String>) -> Self {
        let instance_id = instance_id.into();
        Self {
            category: category_of(&instance_id).to_string(),
            instance_id,
            bbox: None,
            feature: None,
            is_stuff: true,
        }
    }

    pub fn with_feature(mut self, feature: Vec<f64>) -> Self {
        self.feature = Some(feature);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredicateEdge {
    pub subject_id: String,
    pub predicate: String,
    pub object_id: String,
}

impl PredicateEdge {
    pub fn new(
        subject_id: impl Into<String>,
        predicate: impl Into<String>,
        object_id: impl Into<String>,
    ) -> Self {
        Self {
            subject_id: subject_id.into(),
            predicate: predicate.into(),
            object_id: object_id.into(),
        }
    }

    pub fn touches(&self, id: &str) -> bool {
        self.subject_id == id || self.object_id == id
    }
}

/// Scene graph of the `k`-th sampled frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSceneGraph {
    pub frame_index: u32,
    pub nodes: Vec<ObjectNode>,
    pub edges: Vec<PredicateEdge>,
}

impl FrameSceneGraph {
    pub fn new(frame_index: u32) -> Self {
        Self {
            frame_index,
            ..Default::default()
        }
    }

    pub fn with_node(mut self, node: ObjectNode) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn with_edge(mut self, subject: &str, predicate: &str, object: &str) -> Self {
        self.edges.push(PredicateEdge::new(subject, predicate, object));
        self
    }

    pub fn node(&self, id: &str) -> Option<&ObjectNode> {
        self.nodes.iter().find(|n| n.instance_id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    /// Nodes sorted by id and edges sorted lexicographically.
    pub fn canonical(&self) -> Self {
        let mut out = self.clone();
        out.nodes.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        out.edges.sort();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoreferenceLink {
    #[serde(rename = "id")]
    pub instance_id: String,
    #[serde(rename = "from")]
    pub from_frame: u32,
    #[serde(rename = "to")]
    pub to_frame: u32,
}

impl CoreferenceLink {
    pub fn new(instance_id: impl Into<String>, from_frame: u32, to_frame: u32) -> Self {
        Self {
            instance_id: instance_id.into(),
            from_frame,
            to_frame,
        }
    }
}

/// Spatial-temporal scene graph.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "StsgDoc", into = "StsgDoc")]
pub struct Stsg {
    pub frames: Vec<FrameSceneGraph>,
    pub coref: Vec<CoreferenceLink>,
    pub source_fps: Option<f64>,
}

impl Stsg {
    pub fn frame(&self, frame_index: u32) -> Option<&FrameSceneGraph> {
        self.frames.iter().find(|f| f.frame_index == frame_index)
    }

    /// Frame indices at which `id` occurs, in frame order.
    pub fn occurrences(&self, id: &str) -> Vec<u32> {
        self.frames
            .iter()
            .filter(|f| f.contains(id))
            .map(|f| f.frame_index)
            .collect()
    }

    pub fn contains_instance(&self, id: &str) -> bool {
        self.frames.iter().any(|f| f.contains(id))
    }

    /// Frames canonicalised, coref links sorted. Two STSGs describing the
    /// same sets compare equal after this.
    pub fn canonical(&self) -> Self {
        let mut coref = self.coref.clone();
        coref.sort();
        Self {
            frames: self.frames.iter().map(FrameSceneGraph::canonical).collect(),
            coref,
            source_fps: self.source_fps,
        }
    }

    /// Copy with every feature vector dropped.
    pub fn without_features(&self) -> Self {
        let mut out = self.clone();
        for node in out.frames.iter_mut().flat_map(|f| f.nodes.iter_mut()) {
            node.feature = None;
        }
        out
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stsg serialises")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StsgError {
    #[error("duplicate frame index {0}")]
    DuplicateFrameIndex(u32),
    #[error("frame indices not increasing: {previous} followed by {next}")]
    UnorderedFrames { previous: u32, next: u32 },
    #[error("stsg has no source fps")]
    MissingSourceFps,
    #[error("invalid frame rate {0}")]
    InvalidFps(f64),
}

impl StsgError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateFrameIndex(_) => "DUPLICATE_FRAME_INDEX",
            Self::UnorderedFrames { .. } => "UNORDERED_FRAMES",
            Self::MissingSourceFps => "MISSING_SOURCE_FPS",
            Self::InvalidFps(_) => "INVALID_FPS",
        }
    }
}

fn check_frame_order(frames: &[FrameSceneGraph]) -> Result<(), StsgError> {
    for pair in frames.windows(2) {
        let (previous, next) = (pair[0].frame_index, pair[1].frame_index);
        if previous == next {
            return Err(StsgError::DuplicateFrameIndex(next));
        }
        if previous > next {
            return Err(StsgError::UnorderedFrames { previous, next });
        }
    }
    Ok(())
}

/// Builds an STSG whose coreference links join each instance's consecutive
/// occurrences. Gaps are allowed: an instance seen in frames 1 and 3 only
/// gets the single link `1 -> 3`.
pub fn link_coreferences(frames: Vec<FrameSceneGraph>) -> Result<Stsg, StsgError> {
    check_frame_order(&frames)?;
    let mut last_seen: HashMap<&str, u32> = HashMap::new();
    let mut coref = Vec::new();
    for frame in &frames {
        let mut seen_here = HashSet::new();
        for node in &frame.nodes {
            let id = node.instance_id.as_str();
            if !seen_here.insert(id) {
                continue;
            }
            if let Some(prev) = last_seen.insert(id, frame.frame_index) {
                coref.push(CoreferenceLink::new(id, prev, frame.frame_index));
            }
        }
    }
    coref.sort();
    Ok(Stsg {
        frames,
        coref,
        source_fps: None,
    })
}

/// Keeps every `floor(source_fps / target_fps)`-th frame, starting with the
/// first, and relinks coreferences over the surviving frames.
pub fn subsample(stsg: &Stsg, target_fps: f64) -> Result<Stsg, StsgError> {
    let source_fps = stsg.source_fps.ok_or(StsgError::MissingSourceFps)?;
    if !(source_fps.is_finite() && source_fps > 0.0) {
        return Err(StsgError::InvalidFps(source_fps));
    }
    if !(target_fps.is_finite() && target_fps > 0.0) {
        return Err(StsgError::InvalidFps(target_fps));
    }
    let stride = ((source_fps / target_fps).floor() as usize).max(1);
    let kept = stsg.frames.iter().step_by(stride).cloned().collect();
    let mut out = link_coreferences(kept)?;
    out.source_fps = Some(if stride > 1 { target_fps } else { source_fps });
    Ok(out)
}

/// Stable violation codes reported by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    NonFiniteBbox,
    NegativeBboxSize,
    MalformedInstanceId,
    CategoryMismatch,
    StuffBboxMismatch,
    FeatureLengthMismatch,
    DuplicateInstance,
    SelfLoop,
    DanglingEndpoint,
    DuplicateTriplet,
    NonIncreasingFrames,
    InvalidSourceFps,
    CorefOrder,
    CorefMissingEndpoint,
    CorefSkipsOccurrence,
    DuplicateCoref,
    BrokenCorefChain,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NonFiniteBbox => "NON_FINITE_BBOX",
            Self::NegativeBboxSize => "NEGATIVE_BBOX_SIZE",
            Self::MalformedInstanceId => "MALFORMED_INSTANCE_ID",
            Self::CategoryMismatch => "CATEGORY_MISMATCH",
            Self::StuffBboxMismatch => "STUFF_BBOX_MISMATCH",
            Self::FeatureLengthMismatch => "FEATURE_LENGTH_MISMATCH",
            Self::DuplicateInstance => "DUPLICATE_INSTANCE",
            Self::SelfLoop => "SELF_LOOP",
            Self::DanglingEndpoint => "DANGLING_ENDPOINT",
            Self::DuplicateTriplet => "DUPLICATE_TRIPLET",
            Self::NonIncreasingFrames => "NON_INCREASING_FRAMES",
            Self::InvalidSourceFps => "INVALID_SOURCE_FPS",
            Self::CorefOrder => "COREF_ORDER",
            Self::CorefMissingEndpoint => "COREF_MISSING_ENDPOINT",
            Self::CorefSkipsOccurrence => "COREF_SKIPS_OCCURRENCE",
            Self::DuplicateCoref => "DUPLICATE_COREF",
            Self::BrokenCorefChain => "BROKEN_COREF_CHAIN",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub frame_index: Option<u32>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: ViolationCode, frame_index: Option<u32>, detail: impl Into<String>) {
        self.0.push(Violation {
            code,
            frame_index,
            detail: detail.into(),
        });
    }
}

fn validate_node(node: &ObjectNode, frame: u32, out: &mut Collector) {
    let id = &node.instance_id;
    let at = Some(frame);
    match split_instance_id(id) {
        Some((prefix, _)) => {
            if !prefix.eq_ignore_ascii_case(&node.category) {
                out.push(
                    ViolationCode::CategoryMismatch,
                    at,
                    format!("{id}: id prefix {prefix:?} differs from category {:?}", node.category),
                );
            }
        }
        // Stuff nodes may carry a bare label as their id.
        None if node.is_stuff && !id.is_empty() => {
            if !id.eq_ignore_ascii_case(&node.category) {
                out.push(
                    ViolationCode::CategoryMismatch,
                    at,
                    format!("{id}: label differs from category {:?}", node.category),
                );
            }
        }
        None => out.push(
            ViolationCode::MalformedInstanceId,
            at,
            format!("{id:?} is not of the form <category>-<n>"),
        ),
    }
    if node.bbox.is_none() != node.is_stuff {
        out.push(
            ViolationCode::StuffBboxMismatch,
            at,
            format!("{id}: is_stuff={} but bbox present={}", node.is_stuff, node.bbox.is_some()),
        );
    }
    if let Some(b) = node.bbox {
        if !b.is_finite() {
            out.push(ViolationCode::NonFiniteBbox, at, format!("{id}: {b:?}"));
        } else if b.w < 0.0 || b.h < 0.0 {
            out.push(ViolationCode::NegativeBboxSize, at, format!("{id}: {b:?}"));
        }
    }
}

/// Checks every structural invariant and returns all violations found.
pub fn validate(stsg: &Stsg) -> ValidationReport {
    let mut out = Collector(Vec::new());

    if let Some(fps) = stsg.source_fps {
        if !(fps.is_finite() && fps > 0.0) {
            out.push(ViolationCode::InvalidSourceFps, None, format!("source_fps {fps}"));
        }
    }

    for pair in stsg.frames.windows(2) {
        if pair[0].frame_index >= pair[1].frame_index {
            out.push(
                ViolationCode::NonIncreasingFrames,
                Some(pair[1].frame_index),
                format!("frame {} follows frame {}", pair[1].frame_index, pair[0].frame_index),
            );
        }
    }

    let mut feature_len: Option<usize> = None;
    for frame in &stsg.frames {
        let k = frame.frame_index;
        let mut ids = HashSet::new();
        for node in &frame.nodes {
            validate_node(node, k, &mut out);
            if !ids.insert(node.instance_id.as_str()) {
                out.push(ViolationCode::DuplicateInstance, Some(k), node.instance_id.clone());
            }
            if let Some(f) = &node.feature {
                match feature_len {
                    None => feature_len = Some(f.len()),
                    Some(n) if n != f.len() => out.push(
                        ViolationCode::FeatureLengthMismatch,
                        Some(k),
                        format!("{}: length {} vs {n}", node.instance_id, f.len()),
                    ),
                    Some(_) => {}
                }
            }
        }
        let mut triples = HashSet::new();
        for e in &frame.edges {
            if e.subject_id == e.object_id {
                out.push(
                    ViolationCode::SelfLoop,
                    Some(k),
                    format!("({}, {}, {})", e.subject_id, e.predicate, e.object_id),
                );
            }
            for end in [&e.subject_id, &e.object_id] {
                if !ids.contains(end.as_str()) {
                    out.push(ViolationCode::DanglingEndpoint, Some(k), format!("{end} is not a node"));
                }
            }
            if !triples.insert(e) {
                out.push(
                    ViolationCode::DuplicateTriplet,
                    Some(k),
                    format!("({}, {}, {})", e.subject_id, e.predicate, e.object_id),
                );
            }
        }
    }

    validate_coref(stsg, &mut out);

    ValidationReport {
        ok: out.0.is_empty(),
        violations: out.0,
    }
}

fn validate_coref(stsg: &Stsg, out: &mut Collector) {
    // id -> sorted occurrence frames
    let mut occurrences: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for frame in &stsg.frames {
        let mut seen = HashSet::new();
        for node in &frame.nodes {
            if seen.insert(node.instance_id.as_str()) {
                occurrences
                    .entry(node.instance_id.as_str())
                    .or_default()
                    .push(frame.frame_index);
            }
        }
    }
    for occ in occurrences.values_mut() {
        occ.sort_unstable();
    }

    let mut links = BTreeSet::new();
    for link in &stsg.coref {
        let id = link.instance_id.as_str();
        if !links.insert((id, link.from_frame, link.to_frame)) {
            out.push(
                ViolationCode::DuplicateCoref,
                Some(link.from_frame),
                format!("{id}: {} -> {}", link.from_frame, link.to_frame),
            );
            continue;
        }
        if link.from_frame >= link.to_frame {
            out.push(
                ViolationCode::CorefOrder,
                Some(link.from_frame),
                format!("{id}: {} -> {}", link.from_frame, link.to_frame),
            );
            continue;
        }
        let occ = occurrences.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let from = occ.binary_search(&link.from_frame);
        let to = occ.binary_search(&link.to_frame);
        match (from, to) {
            (Ok(i), Ok(j)) => {
                if j != i + 1 {
                    out.push(
                        ViolationCode::CorefSkipsOccurrence,
                        Some(link.from_frame),
                        format!("{id}: {} -> {} skips {} occurrence(s)", link.from_frame, link.to_frame, j - i - 1),
                    );
                }
            }
            _ => out.push(
                ViolationCode::CorefMissingEndpoint,
                Some(link.from_frame),
                format!("{id}: {} -> {} endpoint frame lacks the instance", link.from_frame, link.to_frame),
            ),
        }
    }

    for (id, occ) in &occurrences {
        for pair in occ.windows(2) {
            if !links.contains(&(*id, pair[0], pair[1])) {
                out.push(
                    ViolationCode::BrokenCorefChain,
                    Some(pair[0]),
                    format!("{id}: no link {} -> {}", pair[0], pair[1]),
                );
            }
        }
    }
}

// --- JSON interchange document -------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StsgDoc {
    #[serde(default)]
    source_fps: Option<f64>,
    #[serde(default)]
    frames: Vec<FrameDoc>,
    #[serde(default)]
    coref: Vec<CoreferenceLink>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameDoc {
    frame_index: u32,
    #[serde(default)]
    objects: Vec<ObjectDoc>,
    #[serde(default)]
    triplets: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectDoc {
    id: String,
    category: String,
    bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<Vec<f64>>,
}

impl From<StsgDoc> for Stsg {
    fn from(doc: StsgDoc) -> Self {
        let frames = doc
            .frames
            .into_iter()
            .map(|f| FrameSceneGraph {
                frame_index: f.frame_index,
                nodes: f
                    .objects
                    .into_iter()
                    .map(|o| ObjectNode {
                        is_stuff: o.bbox.is_none(),
                        instance_id: o.id,
                        category: o.category,
                        bbox: o.bbox,
                        feature: o.feature,
                    })
                    .collect(),
                edges: f
                    .triplets
                    .into_iter()
                    .map(|(s, p, o)| PredicateEdge::new(s, p, o))
                    .collect(),
            })
            .collect();
        Stsg {
            frames,
            coref: doc.coref,
            source_fps: doc.source_fps,
        }
    }
}

impl From<Stsg> for StsgDoc {
    fn from(stsg: Stsg) -> Self {
        StsgDoc {
            source_fps: stsg.source_fps,
            frames: stsg
                .frames
                .into_iter()
                .map(|f| FrameDoc {
                    frame_index: f.frame_index,
                    objects: f
                        .nodes
                        .into_iter()
                        .map(|n| ObjectDoc {
                            id: n.instance_id,
                            category: n.category,
                            bbox: n.bbox,
                            feature: n.feature,
                        })
                        .collect(),
                    triplets: f
                        .edges
                        .into_iter()
                        .map(|e| (e.subject_id, e.predicate, e.object_id))
                        .collect(),
                })
                .collect(),
            coref: stsg.coref,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with(k: u32, ids: &[&str]) -> FrameSceneGraph {
        ids.iter().fold(FrameSceneGraph::new(k), |f, id| {
            f.with_node(ObjectNode::boxed(*id, BBox::new(0.0, 0.0, 1.0, 1.0)))
        })
    }

    #[test]
    fn empty_stsg_is_valid() {
        assert!(validate(&Stsg::default()).ok);
    }

    #[test]
    fn self_loop_is_reported() {
        let frame = frame_with(1, &["car-1"]).with_edge("car-1", "on", "car-1");
        let stsg = link_coreferences(vec![frame]).unwrap();
        let report = validate(&stsg);
        assert!(!report.ok);
        assert!(report.has(ViolationCode::SelfLoop));
    }

    #[test]
    fn missing_link_breaks_chain() {
        let stsg = Stsg {
            frames: vec![frame_with(1, &["dog-1"]), frame_with(2, &[]), frame_with(3, &["dog-1"])],
            coref: vec![],
            source_fps: None,
        };
        let report = validate(&stsg);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::BrokenCorefChain);
        assert_eq!(report.violations[0].frame_index, Some(1));
    }

    #[test]
    fn skipped_occurrence_is_reported() {
        let mut stsg = link_coreferences(vec![
            frame_with(1, &["dog-1"]),
            frame_with(2, &["dog-1"]),
            frame_with(3, &["dog-1"]),
        ])
        .unwrap();
        stsg.coref.push(CoreferenceLink::new("dog-1", 1, 3));
        let report = validate(&stsg);
        assert!(report.has(ViolationCode::CorefSkipsOccurrence));
    }

    #[test]
    fn links_consecutive_presence() {
        let stsg = link_coreferences(vec![
            frame_with(1, &["dog-1"]),
            frame_with(2, &["dog-1"]),
            frame_with(3, &["dog-1"]),
        ])
        .unwrap();
        assert_eq!(
            stsg.coref,
            vec![CoreferenceLink::new("dog-1", 1, 2), CoreferenceLink::new("dog-1", 2, 3)]
        );
    }

    #[test]
    fn links_across_gap() {
        let stsg = link_coreferences(vec![
            frame_with(1, &["dog-1"]),
            frame_with(2, &["cat-1"]),
            frame_with(3, &["dog-1"]),
        ])
        .unwrap();
        assert_eq!(stsg.coref, vec![CoreferenceLink::new("dog-1", 1, 3)]);
        assert!(validate(&stsg).ok);
    }

    #[test]
    fn singleton_gets_no_link() {
        let stsg = link_coreferences(vec![frame_with(1, &["dog-1"]), frame_with(2, &[])]).unwrap();
        assert!(stsg.coref.is_empty());
    }

    #[test]
    fn duplicate_frame_index_rejected() {
        let err = link_coreferences(vec![frame_with(1, &[]), frame_with(1, &[])]).unwrap_err();
        assert_eq!(err, StsgError::DuplicateFrameIndex(1));
        assert_eq!(err.code(), "DUPLICATE_FRAME_INDEX");
    }

    fn clip(n: u32, fps: Option<f64>) -> Stsg {
        let frames = (0..n).map(|k| frame_with(k, &["car-1"])).collect();
        let mut stsg = link_coreferences(frames).unwrap();
        stsg.source_fps = fps;
        stsg
    }

    #[test]
    fn subsample_24_to_8_keeps_every_third() {
        let out = subsample(&clip(10, Some(24.0)), 8.0).unwrap();
        let kept: Vec<u32> = out.frames.iter().map(|f| f.frame_index).collect();
        assert_eq!(kept, vec![0, 3, 6, 9]);
        assert_eq!(out.source_fps, Some(8.0));
        assert!(validate(&out).ok);
        assert_eq!(out.coref.len(), 3);
    }

    #[test]
    fn subsample_identity_when_target_not_lower() {
        let src = clip(5, Some(8.0));
        assert_eq!(subsample(&src, 8.0).unwrap().frames, src.frames);
        assert_eq!(subsample(&src, 30.0).unwrap().frames, src.frames);
    }

    #[test]
    fn subsample_requires_fps() {
        assert_eq!(subsample(&clip(3, None), 8.0).unwrap_err(), StsgError::MissingSourceFps);
        assert!(matches!(subsample(&clip(3, Some(8.0)), 0.0), Err(StsgError::InvalidFps(_))));
    }

    #[test]
    fn zero_area_box_validates() {
        let frame = FrameSceneGraph::new(0).with_node(ObjectNode::boxed("pen-1", BBox::new(1.0, 1.0, 0.0, 3.0)));
        assert!(validate(&link_coreferences(vec![frame]).unwrap()).ok);
    }

    #[test]
    fn node_invariants() {
        let mut bad = ObjectNode::boxed("car-1", BBox::new(0.0, 0.0, -1.0, 1.0));
        bad.category = "truck".into();
        let frame = FrameSceneGraph::new(0)
            .with_node(bad)
            .with_node(ObjectNode::boxed("car", BBox::new(0.0, 0.0, 1.0, 1.0)))
            .with_node(ObjectNode::stuff("street"))
            .with_edge("car-1", "on", "road");
        let report = validate(&link_coreferences(vec![frame]).unwrap());
        for code in [
            ViolationCode::CategoryMismatch,
            ViolationCode::NegativeBboxSize,
            ViolationCode::MalformedInstanceId,
            ViolationCode::DanglingEndpoint,
        ] {
            assert!(report.has(code), "missing {code}");
        }
        assert_eq!(report.violations.len(), 4);
    }

    #[test]
    fn instance_id_split() {
        assert_eq!(split_instance_id("car-1"), Some(("car", 1)));
        assert_eq!(split_instance_id("t-shirt-12"), Some(("t-shirt", 12)));
        assert_eq!(split_instance_id("car-0"), None);
        assert_eq!(split_instance_id("car"), None);
        assert_eq!(split_instance_id("-3"), None);
        assert_eq!(category_of("street"), "street");
    }

    #[test]
    fn json_schema_field_names() {
        let frame = frame_with(1, &["car-1"])
            .with_node(ObjectNode::stuff("street"))
            .with_edge("car-1", "on the left", "street");
        let mut stsg = link_coreferences(vec![frame]).unwrap();
        stsg.source_fps = Some(8.0);
        stsg.frames[0].nodes[0].feature = Some(vec![0.5, 1.0]);
        let value: serde_json::Value = serde_json::from_str(&stsg.to_json()).unwrap();
        assert_eq!(
            value,
            serde_json::json!({
                "source_fps": 8.0,
                "frames": [{
                    "frame_index": 1,
                    "objects": [
                        {"id": "car-1", "category": "car", "bbox": [0.0, 0.0, 1.0, 1.0], "feature": [0.5, 1.0]},
                        {"id": "street", "category": "street", "bbox": null}
                    ],
                    "triplets": [["car-1", "on the left", "street"]]
                }],
                "coref": []
            })
        );
        assert_eq!(Stsg::from_json(&stsg.to_json()).unwrap(), stsg);
    }
}
