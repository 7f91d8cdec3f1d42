//! Graph queries used for grounding: target resolution, tracklet
//! extraction, neighbour scenes and temporal extent.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::stsg::{
    link_coreferences, split_instance_id, CoreferenceLink, FrameSceneGraph, ObjectNode,
    PredicateEdge, Stsg,
};

pub const DEFAULT_HOPS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("frame {0} not found")]
    FrameNotFound(u32),
    #[error("tracklet is empty")]
    EmptyTracklet,
    #[error("hops must be positive")]
    InvalidHops,
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownInstance(_) => "UNKNOWN_INSTANCE",
            Self::FrameNotFound(_) => "FRAME_NOT_FOUND",
            Self::EmptyTracklet => "EMPTY_TRACKLET",
            Self::InvalidHops => "INVALID_HOPS",
        }
    }
}

const STOPWORDS: [&str; 5] = ["the", "a", "an", "this", "that"];

fn tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Phrase token `t` names category token `c`, allowing simple plurals.
fn token_matches(t: &str, c: &str) -> bool {
    t == c || t.strip_suffix('s') == Some(c) || t.strip_suffix("es") == Some(c)
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && hay.len() >= needle.len()
        && hay
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(t, c)| token_matches(t, c)))
}

/// Sort key putting `person-2` before `person-10`.
fn natural_key(id: &str) -> (&str, u64, &str) {
    match split_instance_id(id) {
        Some((category, index)) => (category, index, id),
        None => (id, 0, id),
    }
}

/// Maps a model-named target phrase (e.g. "the white truck") onto instance
/// ids by lexical category matching.
///
/// The phrase is lowercased, stopwords are removed and so is every token
/// that names no category in the graph (adjectives such as "white"). An
/// instance matches when its category occurs in the remaining phrase, or the
/// remaining phrase occurs in its category. Matches are ordered by first
/// appearance frame, then by id.
pub fn resolve_targets(phrase: &str, stsg: &Stsg) -> Vec<String> {
    // instance id -> (first frame position, category tokens)
    let mut instances: Vec<(usize, &str, Vec<String>)> = Vec::new();
    let mut seen = HashSet::new();
    for (pos, frame) in stsg.frames.iter().enumerate() {
        for node in &frame.nodes {
            if seen.insert(node.instance_id.as_str()) {
                instances.push((pos, node.instance_id.as_str(), tokens(&node.category)));
            }
        }
    }
    let vocabulary: HashSet<&str> = instances
        .iter()
        .flat_map(|(_, _, cat)| cat.iter().map(String::as_str))
        .collect();

    let remaining: Vec<String> = tokens(phrase)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .filter(|t| vocabulary.iter().any(|c| token_matches(t, c)))
        .collect();
    if remaining.is_empty() {
        return Vec::new();
    }

    let mut hits: Vec<(usize, &str)> = instances
        .iter()
        .filter(|(_, _, cat)| {
            contains_run(&remaining, cat)
                || (remaining.len() <= cat.len()
                    && cat
                        .windows(remaining.len())
                        .any(|w| w.iter().zip(&remaining).all(|(c, t)| token_matches(t, c))))
        })
        .map(|(pos, id, _)| (*pos, *id))
        .collect();
    hits.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| natural_key(a.1).cmp(&natural_key(b.1))));
    hits.into_iter().map(|(_, id)| id.to_string()).collect()
}

/// One frame of a tracklet: the target node, its incident edges and the
/// nodes at the other ends of those edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletEntry {
    pub frame_index: u32,
    pub node: ObjectNode,
    pub edges: Vec<PredicateEdge>,
    pub neighbors: Vec<ObjectNode>,
}

/// A single instance followed through the video.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub target_id: String,
    pub entries: Vec<TrackletEntry>,
    pub coref: Vec<CoreferenceLink>,
    pub source_fps: Option<f64>,
}

impl Tracklet {
    /// The partial STSG this tracklet describes.
    pub fn to_stsg(&self) -> Stsg {
        let frames = self
            .entries
            .iter()
            .map(|e| FrameSceneGraph {
                frame_index: e.frame_index,
                nodes: std::iter::once(e.node.clone()).chain(e.neighbors.iter().cloned()).collect(),
                edges: e.edges.clone(),
            })
            .collect();
        let mut stsg = link_coreferences(frames).expect("tracklet frames are ordered");
        stsg.source_fps = self.source_fps;
        stsg
    }

    pub fn frame_indices(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.frame_index).collect()
    }
}

fn incident(frame: &FrameSceneGraph, ids: &HashSet<&str>) -> (Vec<PredicateEdge>, Vec<ObjectNode>) {
    let edges: Vec<PredicateEdge> = frame
        .edges
        .iter()
        .filter(|e| ids.contains(e.subject_id.as_str()) || ids.contains(e.object_id.as_str()))
        .cloned()
        .collect();
    let mut wanted = BTreeSet::new();
    for e in &edges {
        wanted.insert(e.subject_id.as_str());
        wanted.insert(e.object_id.as_str());
    }
    let neighbors = frame
        .nodes
        .iter()
        .filter(|n| wanted.contains(n.instance_id.as_str()) && !ids.contains(n.instance_id.as_str()))
        .cloned()
        .collect();
    (edges, neighbors)
}

pub fn extract_tracklet(stsg: &Stsg, target_id: &str) -> Result<Tracklet, QueryError> {
    let ids: HashSet<&str> = [target_id].into();
    let mut entries = Vec::new();
    for frame in &stsg.frames {
        let Some(node) = frame.node(target_id) else {
            continue;
        };
        let (edges, neighbors) = incident(frame, &ids);
        entries.push(TrackletEntry {
            frame_index: frame.frame_index,
            node: node.clone(),
            edges,
            neighbors,
        });
    }
    if entries.is_empty() {
        return Err(QueryError::UnknownInstance(target_id.to_string()));
    }
    let coref = stsg
        .coref
        .iter()
        .filter(|l| l.instance_id == target_id)
        .cloned()
        .collect();
    Ok(Tracklet {
        target_id: target_id.to_string(),
        entries,
        coref,
        source_fps: stsg.source_fps,
    })
}

/// Partial STSG covering several instances at once: every frame containing
/// one of `ids`, with those nodes, their incident edges and edge endpoints.
/// For a single id this equals `extract_tracklet(..).to_stsg()`.
pub fn partial_stsg(stsg: &Stsg, ids: &[&str]) -> Result<Stsg, QueryError> {
    if let Some(missing) = ids.iter().find(|id| !stsg.contains_instance(id)) {
        return Err(QueryError::UnknownInstance(missing.to_string()));
    }
    let set: HashSet<&str> = ids.iter().copied().collect();
    let frames = stsg
        .frames
        .iter()
        .filter(|f| f.nodes.iter().any(|n| set.contains(n.instance_id.as_str())))
        .map(|f| {
            let (edges, neighbors) = incident(f, &set);
            let mut nodes: Vec<ObjectNode> = f
                .nodes
                .iter()
                .filter(|n| set.contains(n.instance_id.as_str()))
                .cloned()
                .collect();
            nodes.extend(neighbors);
            FrameSceneGraph {
                frame_index: f.frame_index,
                nodes,
                edges,
            }
        })
        .collect();
    let mut out = link_coreferences(frames).expect("source frames are ordered");
    out.source_fps = stsg.source_fps;
    Ok(out)
}

/// Nodes within `hops` undirected predicate edges of a centre node, as an
/// induced subgraph of that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborScene {
    pub center_id: String,
    pub frame_index: u32,
    pub hops: usize,
    pub subgraph: FrameSceneGraph,
}

impl NeighborScene {
    pub fn node_ids(&self) -> BTreeSet<&str> {
        self.subgraph.nodes.iter().map(|n| n.instance_id.as_str()).collect()
    }

    pub fn to_stsg(&self) -> Stsg {
        link_coreferences(vec![self.subgraph.clone()]).expect("single frame")
    }
}

pub fn neighbor_scene(
    stsg: &Stsg,
    target_id: &str,
    frame_index: u32,
    hops: usize,
) -> Result<NeighborScene, QueryError> {
    if hops == 0 {
        return Err(QueryError::InvalidHops);
    }
    let frame = stsg.frame(frame_index).ok_or(QueryError::FrameNotFound(frame_index))?;
    if !frame.contains(target_id) {
        return Err(QueryError::UnknownInstance(target_id.to_string()));
    }

    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &frame.edges {
        adjacency.entry(&e.subject_id).or_default().push(&e.object_id);
        adjacency.entry(&e.object_id).or_default().push(&e.subject_id);
    }
    let mut depth: HashMap<&str, usize> = HashMap::from([(target_id, 0)]);
    let mut queue = VecDeque::from([target_id]);
    while let Some(current) = queue.pop_front() {
        let d = depth[current];
        if d == hops {
            continue;
        }
        for &next in adjacency.get(current).map(Vec::as_slice).unwrap_or(&[]) {
            if !depth.contains_key(next) {
                depth.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }

    let subgraph = FrameSceneGraph {
        frame_index,
        nodes: frame
            .nodes
            .iter()
            .filter(|n| depth.contains_key(n.instance_id.as_str()))
            .cloned()
            .collect(),
        edges: frame
            .edges
            .iter()
            .filter(|e| depth.contains_key(e.subject_id.as_str()) && depth.contains_key(e.object_id.as_str()))
            .cloned()
            .collect(),
    };
    Ok(NeighborScene {
        center_id: target_id.to_string(),
        frame_index,
        hops,
        subgraph,
    })
}

/// Inclusive `(first, last)` frame of a tracklet.
pub fn temporal_extent(tracklet: &Tracklet) -> Result<(u32, u32), QueryError> {
    let indices = tracklet.entries.iter().map(|e| e.frame_index);
    let start = indices.clone().min().ok_or(QueryError::EmptyTracklet)?;
    let end = indices.max().ok_or(QueryError::EmptyTracklet)?;
    Ok((start, end))
}
