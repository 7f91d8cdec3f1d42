#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vot_core::backend::{MockBackend, MockEntry, MockScript, StepTag};
use vot_core::orchestrator::{QaInstance, QaOption};
use vot_core::{link_coreferences, BBox, FrameSceneGraph, ObjectNode, PredicateEdge, Stsg};

pub const CATEGORIES: &[&str] = &["person", "car", "dog", "cup", "truck", "ball"];
pub const STUFF: &[&str] = &["street", "grass", "sky"];
pub const PREDICATES: &[&str] = &["on", "next to", "holding", "behind", "on the left"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A multiple of 0.1 in `[lo, hi]`.
fn tenths(rng: &mut impl Rng, lo: u32, hi: u32) -> f64 {
    rng.random_range(lo * 10..=hi * 10) as f64 / 10.0
}

pub fn random_bbox(rng: &mut impl Rng) -> BBox {
    BBox::new(tenths(rng, 0, 50), tenths(rng, 0, 50), tenths(rng, 0, 20), tenths(rng, 0, 20))
}

/// A random valid STSG. Stuff nodes only appear as triplet endpoints, so the
/// textual form describes them completely.
pub fn random_stsg(rng: &mut impl Rng, max_frames: usize, max_nodes: usize, with_features: bool) -> Stsg {
    let n_frames = rng.random_range(1..=max_frames);
    let mut index = 0u32;
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        index += rng.random_range(1..=3);
        let mut frame = FrameSceneGraph::new(index);
        let n_nodes = rng.random_range(0..=max_nodes);
        let mut pool: Vec<String> = CATEGORIES
            .iter()
            .flat_map(|c| (1..=3).map(move |i| format!("{c}-{i}")))
            .collect();
        for _ in 0..n_nodes {
            let id = pool.swap_remove(rng.random_range(0..pool.len()));
            let mut node = ObjectNode::boxed(id, random_bbox(rng));
            if with_features && rng.random_bool(0.3) {
                node = node.with_feature(vec![rng.random::<f64>(); 3]);
            }
            frame.nodes.push(node);
        }
        let boxed: Vec<String> = frame.nodes.iter().map(|n| n.instance_id.clone()).collect();
        let mut edges = BTreeSet::new();
        if !boxed.is_empty() {
            for _ in 0..rng.random_range(0..=boxed.len() + 2) {
                let s = boxed.choose(rng).unwrap().clone();
                let o = if rng.random_bool(0.2) {
                    STUFF.choose(rng).unwrap().to_string()
                } else {
                    boxed.choose(rng).unwrap().clone()
                };
                if s == o {
                    continue;
                }
                edges.insert(PredicateEdge::new(&s, *PREDICATES.choose(rng).unwrap(), &o));
            }
        }
        for e in &edges {
            if !frame.contains(&e.object_id) {
                frame.nodes.push(ObjectNode::stuff(e.object_id.clone()));
            }
        }
        frame.edges = edges.into_iter().collect();
        frames.push(frame);
    }
    link_coreferences(frames).expect("generated frames are ordered")
}

/// Tracklet of `id` by direct definition: every frame holding it, restricted
/// to edges touching it and the endpoints of those edges; consecutive
/// occurrences chained as coreference links.
pub fn brute_tracklet(stsg: &Stsg, id: &str) -> Option<Stsg> {
    let mut frames = Vec::new();
    let mut coref = Vec::new();
    let mut last: Option<u32> = None;
    for f in &stsg.frames {
        if !f.nodes.iter().any(|n| n.instance_id == id) {
            continue;
        }
        let edges: Vec<PredicateEdge> = f
            .edges
            .iter()
            .filter(|e| e.subject_id == id || e.object_id == id)
            .cloned()
            .collect();
        let keep: BTreeSet<&str> = edges
            .iter()
            .flat_map(|e| [e.subject_id.as_str(), e.object_id.as_str()])
            .chain([id])
            .collect();
        let nodes = f
            .nodes
            .iter()
            .filter(|n| keep.contains(n.instance_id.as_str()))
            .cloned()
            .collect();
        frames.push(FrameSceneGraph {
            frame_index: f.frame_index,
            nodes,
            edges,
        });
        if let Some(prev) = last {
            coref.push((prev, f.frame_index));
        }
        last = Some(f.frame_index);
    }
    if frames.is_empty() {
        return None;
    }
    // Links between every pair of frames that both contain a node.
    let mut links = Vec::new();
    let mut seen: HashMap<&str, u32> = HashMap::new();
    for f in &frames {
        for n in &f.nodes {
            if let Some(prev) = seen.insert(n.instance_id.as_str(), f.frame_index) {
                links.push(vot_core::CoreferenceLink::new(n.instance_id.clone(), prev, f.frame_index));
            }
        }
    }
    let target_links = links.iter().filter(|l| l.instance_id == id).count();
    assert_eq!(target_links, coref.len());
    links.sort();
    Some(Stsg {
        frames,
        coref: links,
        source_fps: stsg.source_fps,
    })
}

/// Node ids within `hops` undirected edges of `center`, by iterated closure.
pub fn brute_reach(frame: &FrameSceneGraph, center: &str, hops: usize) -> BTreeSet<String> {
    let mut reach: BTreeSet<String> = [center.to_string()].into();
    for _ in 0..hops {
        let mut next = reach.clone();
        for e in &frame.edges {
            if reach.contains(&e.subject_id) {
                next.insert(e.object_id.clone());
            }
            if reach.contains(&e.object_id) {
                next.insert(e.subject_id.clone());
            }
        }
        reach = next;
    }
    reach
}

pub fn induced(frame: &FrameSceneGraph, ids: &BTreeSet<String>) -> FrameSceneGraph {
    FrameSceneGraph {
        frame_index: frame.frame_index,
        nodes: frame.nodes.iter().filter(|n| ids.contains(&n.instance_id)).cloned().collect(),
        edges: frame
            .edges
            .iter()
            .filter(|e| ids.contains(&e.subject_id) && ids.contains(&e.object_id))
            .cloned()
            .collect(),
    }
    .canonical()
}

/// IoU counted on a 0.01 raster.
pub fn grid_iou(a: &BBox, b: &BBox) -> f64 {
    let cells = |v: f64| (v * 100.0).round() as i64;
    let (ax0, ay0, ax1, ay1) = (cells(a.x), cells(a.y), cells(a.x + a.w), cells(a.y + a.h));
    let (bx0, by0, bx1, by1) = (cells(b.x), cells(b.y), cells(b.x + b.w), cells(b.y + b.h));
    let (mut inter, mut union) = (0u64, 0u64);
    for x in ax0.min(bx0)..ax1.max(bx1) {
        for y in ay0.min(by0)..ay1.max(by1) {
            let in_a = (ax0..ax1).contains(&x) && (ay0..ay1).contains(&y);
            let in_b = (bx0..bx1).contains(&x) && (by0..by1).contains(&y);
            inter += u64::from(in_a && in_b);
            union += u64::from(in_a || in_b);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Largest one-to-one matching over the allowed pairs, by exhaustive search.
pub fn optimal_matching(allowed: &[Vec<bool>]) -> usize {
    fn go(row: usize, allowed: &[Vec<bool>], used: &mut Vec<bool>) -> usize {
        if row == allowed.len() {
            return 0;
        }
        let mut best = go(row + 1, allowed, used);
        for col in 0..used.len() {
            if allowed[row][col] && !used[col] {
                used[col] = true;
                best = best.max(1 + go(row + 1, allowed, used));
                used[col] = false;
            }
        }
        best
    }
    let cols = allowed.first().map_or(0, Vec::len);
    go(0, allowed, &mut vec![false; cols])
}

pub const WHITE_TRUCK_QUESTION: &str = include_str!("../../assets/white_truck/question.json");
pub const WHITE_TRUCK_SCRIPT: &str = include_str!("../../assets/white_truck/script.json");

pub fn white_truck() -> (QaInstance, MockBackend) {
    (
        serde_json::from_str(WHITE_TRUCK_QUESTION).unwrap(),
        MockBackend::new(MockScript::from_json(WHITE_TRUCK_SCRIPT).unwrap()),
    )
}

pub const BENCH_SCORES: &[(&str, u8)] = &[
    ("Transportation", 5),
    ("Buildings", 2),
    ("Clean Services", 9),
    ("Entertainment Facilities", 3),
];

/// The white-truck steps 1-3, scores keyed on option text, and a STEP5
/// reply that rejects "Clean Services" once it is chosen.
pub fn bench_backend() -> MockBackend {
    let golden = MockScript::from_json(WHITE_TRUCK_SCRIPT).unwrap();
    let mut entries: Vec<MockEntry> = golden
        .entries
        .iter()
        .filter(|e| matches!(e.tag, StepTag::Step1 | StepTag::Step2 | StepTag::Step3))
        .cloned()
        .collect();
    for (text, score) in BENCH_SCORES {
        entries.push(MockEntry::matching(
            StepTag::Step4Score,
            format!(". {text}]"),
            format!("The rationality of this answer is {score}."),
        ));
    }
    entries.push(MockEntry::matching(
        StepTag::Step5,
        ". Clean Services] aligns",
        "GROUNDING: PASS\nCOMMONSENSE: FAIL",
    ));
    entries.push(MockEntry::new(StepTag::Step5, "GROUNDING: PASS\nCOMMONSENSE: PASS"));
    MockBackend::new(MockScript::new(entries))
}

/// Twenty instances over the white-truck script: option sets vary so that
/// answers, retries and failures differ between instances.
pub fn bench_dataset() -> Vec<QaInstance> {
    let (base, _) = white_truck();
    let texts = ["Transportation", "Buildings", "Clean Services", "Entertainment Facilities"];
    let categories = [Some("relationship"), Some("purpose"), None];
    (0..20)
        .map(|i| {
            let mut q = base.clone();
            q.id = format!("bench-{i:02}");
            q.category = categories[i % 3].map(str::to_string);
            let rotate = i % 4;
            let mut opts: Vec<&str> = texts.iter().copied().cycle().skip(rotate).take(4).collect();
            if i % 7 == 6 {
                opts.push("Sports");
            }
            if i % 5 == 4 {
                opts.truncate(2);
            }
            q.options = opts
                .iter()
                .enumerate()
                .map(|(k, t)| QaOption::new(char::from(b'A' + k as u8).to_string(), *t))
                .collect();
            q.gold = if i % 6 == 5 {
                None
            } else {
                Some(q.options[i % q.options.len()].letter.clone())
            };
            q
        })
        .collect()
}
