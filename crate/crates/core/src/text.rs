//! Textual STSG expressions.
//!
//! This is the wire format exchanged with the chat model:
//!
//! ```text
//! Frame 1: {Objects: [{"car-1": [0.0,13.4,7.0,8.1]}], Triplets: [("car-1","on the left","street")]}
//! ```
//!
//! Grammar:
//!
//! ```text
//! stsg    := frame+
//! frame   := "Frame" INT ":" "{" "Objects:" "[" objlist? "]" "," "Triplets:" "[" triplist? "]" "}"
//! obj     := "{" STRING ":" "[" NUM "," NUM "," NUM "," NUM "]" "}"
//! trip    := "(" STRING "," STRING "," STRING ")"
//! ```
//!
//! Whitespace is free between tokens. The parser skips any prose before the
//! first `Frame <k>:` block and stops at the first thing after a frame that
//! is not another frame, so model answers such as
//! `The partial STSG is [Frame 1: {...}].` parse directly.

use std::fmt::Write as _;

use thiserror::Error;

use crate::stsg::{
    category_of, link_coreferences, validate, BBox, FrameSceneGraph, ObjectNode, PredicateEdge,
    Stsg, ValidationReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("no `Frame <k>:` block found")]
    EmptyInput,
    #[error("parse error at byte {offset}: expected {expected}, found {found}")]
    Parse {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("stsg fails validation: {}", .0.first().map(|v| v.detail.as_str()).unwrap_or(""))]
    InvalidStsg(ValidationReport),
}

impl TextError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyInput => "EMPTY_INPUT",
            Self::Parse { .. } => "PARSE_ERROR",
            Self::InvalidStsg(_) => "INVALID_STSG",
        }
    }
}

/// Serialises a valid STSG. Objects are sorted by id, triplets
/// lexicographically, and stuff nodes only appear inside triplets.
pub fn serialize(stsg: &Stsg) -> Result<String, TextError> {
    let report = validate(stsg);
    if !report.ok {
        return Err(TextError::InvalidStsg(report));
    }
    Ok(serialize_unchecked(stsg))
}

pub(crate) fn serialize_unchecked(stsg: &Stsg) -> String {
    let mut out = String::new();
    for (i, frame) in stsg.frames.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_frame(&mut out, frame);
    }
    out
}

fn write_frame(out: &mut String, frame: &FrameSceneGraph) {
    let mut nodes: Vec<&ObjectNode> = frame.nodes.iter().filter(|n| !n.is_stuff).collect();
    nodes.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut edges: Vec<&PredicateEdge> = frame.edges.iter().collect();
    edges.sort();

    let _ = write!(out, "Frame {}: {{Objects: [", frame.frame_index);
    for (i, node) in nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let b = node.bbox.unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0));
        out.push('{');
        write_string(out, &node.instance_id);
        let _ = write!(out, ": [{:.1},{:.1},{:.1},{:.1}]}}", b.x, b.y, b.w, b.h);
    }
    out.push_str("], Triplets: [");
    for (i, e) in edges.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('(');
        write_string(out, &e.subject_id);
        out.push(',');
        write_string(out, &e.predicate);
        out.push(',');
        write_string(out, &e.object_id);
        out.push(')');
    }
    out.push_str("]}");
}

fn write_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings serialise"));
}

/// Parses every `Frame` block in `text` into an STSG and relinks its
/// coreferences. The result always passes [`validate`].
pub fn parse(text: &str) -> Result<Stsg, TextError> {
    let start = find_frame_start(text, 0).ok_or(TextError::EmptyInput)?;
    let mut cursor = Cursor { src: text, pos: start };
    let mut raw_frames = Vec::new();
    loop {
        let frame_offset = cursor.pos;
        raw_frames.push((frame_offset, cursor.frame()?));
        cursor.skip_ws();
        if cursor.peek() == Some(b',') {
            cursor.pos += 1;
            cursor.skip_ws();
        }
        if !cursor.at_frame_header() {
            break;
        }
    }

    for pair in raw_frames.windows(2) {
        let (offset, next) = &pair[1];
        if next.frame_index <= pair[0].1.frame_index {
            return Err(TextError::Parse {
                offset: *offset,
                expected: format!("frame index greater than {}", pair[0].1.frame_index),
                found: next.frame_index.to_string(),
            });
        }
    }

    let offsets: Vec<(u32, usize)> = raw_frames.iter().map(|(o, f)| (f.frame_index, *o)).collect();
    let frames = raw_frames.into_iter().map(|(_, f)| f).collect();
    let stsg = link_coreferences(frames).map_err(|e| TextError::Parse {
        offset: start,
        expected: "strictly increasing frame indices".into(),
        found: e.to_string(),
    })?;

    let report = validate(&stsg);
    if let Some(v) = report.violations.first() {
        let offset = v
            .frame_index
            .and_then(|k| offsets.iter().find(|(idx, _)| *idx == k).map(|(_, o)| *o))
            .unwrap_or(start);
        return Err(TextError::Parse {
            offset,
            expected: "a well-formed scene graph".into(),
            found: format!("{}: {}", v.code, v.detail),
        });
    }
    Ok(stsg)
}

fn find_frame_start(text: &str, from: usize) -> Option<usize> {
    let mut search = from;
    while let Some(rel) = text.get(search..)?.find("Frame") {
        let at = search + rel;
        let cursor = Cursor { src: text, pos: at };
        if cursor.at_frame_header() {
            return Some(at);
        }
        search = at + "Frame".len();
    }
    None
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn found(&self) -> String {
        match self.src.get(self.pos..).and_then(|s| s.chars().next()) {
            Some(c) => format!("{c:?}"),
            None => "end of input".into(),
        }
    }

    fn error<T>(&self, expected: impl Into<String>) -> Result<T, TextError> {
        Err(TextError::Parse {
            offset: self.pos,
            expected: expected.into(),
            found: self.found(),
        })
    }

    /// `Frame` at a word boundary, followed by an integer and `:`.
    fn at_frame_header(&self) -> bool {
        let b = self.bytes();
        if !b[self.pos..].starts_with(b"Frame") {
            return false;
        }
        if self.pos > 0 && (b[self.pos - 1].is_ascii_alphanumeric() || b[self.pos - 1] == b'_') {
            return false;
        }
        let mut i = self.pos + "Frame".len();
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        let digits = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == digits {
            return false;
        }
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        b.get(i) == Some(&b':')
    }

    fn expect(&mut self, token: &str) -> Result<(), TextError> {
        self.skip_ws();
        if self.bytes()[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            Ok(())
        } else {
            self.error(format!("{token:?}"))
        }
    }

    /// Consumes `token` if it is next (after whitespace).
    fn eat(&mut self, token: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(token) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn integer(&mut self) -> Result<u32, TextError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.error("frame index");
        }
        self.src[start..self.pos].parse().map_err(|_| TextError::Parse {
            offset: start,
            expected: "frame index that fits in 32 bits".into(),
            found: self.src[start..self.pos].to_string(),
        })
    }

    fn number(&mut self) -> Result<f64, TextError> {
        self.skip_ws();
        let start = self.pos;
        let digits = |c: &mut Self| {
            let from = c.pos;
            while matches!(c.peek(), Some(b) if b.is_ascii_digit()) {
                c.pos += 1;
            }
            c.pos > from
        };
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        if !digits(self) {
            self.pos = start;
            return self.error("number");
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            if !digits(self) {
                return self.error("digit after decimal point");
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if !digits(self) {
                return self.error("exponent digits");
            }
        }
        let literal = &self.src[start..self.pos];
        match literal.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(TextError::Parse {
                offset: start,
                expected: "finite number".into(),
                found: literal.to_string(),
            }),
        }
    }

    fn string(&mut self) -> Result<String, TextError> {
        self.skip_ws();
        if self.peek() != Some(b'"') {
            return self.error("string");
        }
        let start = self.pos;
        let b = self.bytes();
        let mut i = start + 1;
        loop {
            match b.get(i) {
                None => {
                    return Err(TextError::Parse {
                        offset: start,
                        expected: "closing quote".into(),
                        found: "end of input".into(),
                    })
                }
                Some(b'\\') => i += 2,
                Some(b'"') => break,
                Some(_) => i += 1,
            }
        }
        let literal = &self.src[start..=i];
        let value: String = serde_json::from_str(literal).map_err(|e| TextError::Parse {
            offset: start,
            expected: "valid string literal".into(),
            found: e.to_string(),
        })?;
        self.pos = i + 1;
        Ok(value)
    }

    fn object(&mut self) -> Result<(usize, String, BBox), TextError> {
        self.expect("{")?;
        self.skip_ws();
        let at = self.pos;
        let id = self.string()?;
        self.expect(":")?;
        self.expect("[")?;
        let mut v = [0.0; 4];
        for (i, slot) in v.iter_mut().enumerate() {
            if i > 0 {
                self.expect(",")?;
            }
            *slot = self.number()?;
        }
        self.expect("]")?;
        self.expect("}")?;
        Ok((at, id, BBox::from(v)))
    }

    fn triplet(&mut self) -> Result<PredicateEdge, TextError> {
        self.expect("(")?;
        let subject = self.string()?;
        self.expect(",")?;
        let predicate = self.string()?;
        self.expect(",")?;
        let object = self.string()?;
        self.expect(")")?;
        Ok(PredicateEdge::new(subject, predicate, object))
    }

    /// Comma-separated list up to the closing `]`.
    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T, TextError>) -> Result<Vec<T>, TextError> {
        self.expect("[")?;
        let mut items = Vec::new();
        if self.eat(b']') {
            return Ok(items);
        }
        loop {
            items.push(item(self)?);
            if self.eat(b',') {
                continue;
            }
            if self.eat(b']') {
                return Ok(items);
            }
            return self.error("\",\" or \"]\"");
        }
    }

    fn frame(&mut self) -> Result<FrameSceneGraph, TextError> {
        self.expect("Frame")?;
        let frame_index = self.integer()?;
        self.expect(":")?;
        self.expect("{")?;
        self.expect("Objects")?;
        self.expect(":")?;
        let objects = self.list(Self::object)?;
        self.expect(",")?;
        self.expect("Triplets")?;
        self.expect(":")?;
        let triplets = self.list(Self::triplet)?;
        self.expect("}")?;

        let mut frame = FrameSceneGraph::new(frame_index);
        for (at, id, bbox) in objects {
            if frame.contains(&id) {
                return Err(TextError::Parse {
                    offset: at,
                    expected: "unique object id within the frame".into(),
                    found: id,
                });
            }
            frame.nodes.push(ObjectNode::boxed(id, bbox));
        }
        for edge in &triplets {
            for end in [&edge.subject_id, &edge.object_id] {
                if !frame.contains(end) {
                    frame.nodes.push(ObjectNode {
                        instance_id: end.clone(),
                        category: category_of(end).to_string(),
                        bbox: None,
                        feature: None,
                        is_stuff: true,
                    });
                }
            }
        }
        frame.edges = triplets;
        Ok(frame)
    }
}
