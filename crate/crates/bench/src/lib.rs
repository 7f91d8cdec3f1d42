//! Benchmark fixtures: deterministic scene graphs of configurable size and
//! the bundled white-truck session.

use vot_core::backend::{MockBackend, MockScript};
use vot_core::orchestrator::QaInstance;
use vot_core::{link_coreferences, BBox, FrameSceneGraph, ObjectNode, Stsg};

const CATEGORIES: [&str; 4] = ["person", "car", "dog", "cup"];
const PREDICATES: [&str; 3] = ["next to", "behind", "holding"];

/// `frames` frames of `nodes` objects each; objects drift one unit per frame
/// and each is related to its successor, plus one stuff endpoint.
pub fn scene(frames: u32, nodes: usize) -> Stsg {
    let frames = (1..=frames)
        .map(|k| {
            let mut f = FrameSceneGraph::new(k);
            let ids: Vec<String> = (0..nodes)
                .map(|i| format!("{}-{}", CATEGORIES[i % 4], i / 4 + 1))
                .collect();
            for (i, id) in ids.iter().enumerate() {
                let x = (i * 7) as f64 + f64::from(k);
                f = f.with_node(ObjectNode::boxed(id.clone(), BBox::new(x, (i % 3) as f64 * 5.0, 6.0, 4.5)));
            }
            for (i, pair) in ids.windows(2).enumerate() {
                f = f.with_edge(&pair[0], PREDICATES[i % 3], &pair[1]);
            }
            if let Some(first) = ids.first() {
                f = f.with_node(ObjectNode::stuff("street")).with_edge(first, "on", "street");
            }
            f
        })
        .collect();
    link_coreferences(frames).expect("frames are ordered")
}

/// `scene` with every box shifted, as a stand-in prediction.
pub fn shifted(stsg: &Stsg, dx: f64) -> Stsg {
    let mut out = stsg.clone();
    for node in out.frames.iter_mut().flat_map(|f| f.nodes.iter_mut()) {
        if let Some(b) = node.bbox.as_mut() {
            b.x += dx;
        }
    }
    out
}

pub fn white_truck() -> (QaInstance, MockBackend) {
    let q = serde_json::from_str(include_str!("../../core/assets/white_truck/question.json")).expect("question");
    let script = MockScript::from_json(include_str!("../../core/assets/white_truck/script.json")).expect("script");
    (q, MockBackend::new(script))
}
