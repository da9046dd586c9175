//! Textual affordance grammar: paraphrase templates, rendering and parsing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::annotate::{
    AffordanceChain, BBox, GraspAffordance, MovementAffordance, ObjectAffordance, SpatialAffordance,
};
use crate::geometry::Vec2;

use super::PromptError;

/// Affordance component kinds in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Object,
    Grasp,
    Spatial,
    Movement,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Object, Kind::Grasp, Kind::Spatial, Kind::Movement];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn templates(self) -> &'static [&'static str; TEMPLATES_PER_KIND] {
        &TEMPLATES[self.index()]
    }
}

pub const TEMPLATES_PER_KIND: usize = 5;

/// Paraphrase pool. Placeholders: `{name}` object name, `{box}` bounding
/// box, `{points}` comma-separated points, `{path}` arrow-separated path.
pub const TEMPLATES: [[&str; TEMPLATES_PER_KIND]; 4] = [
    [
        "target {name} in box {box}",
        "the {name} lies within {box}",
        "locate the {name} inside {box}",
        "object {name} bounded by {box}",
        "find {name} at region {box}",
    ],
    [
        "grasp at {points}",
        "grip the object at {points}",
        "contact points {points}",
        "hold it by {points}",
        "pick up using {points}",
    ],
    [
        "place at {points}",
        "free space {points}",
        "set it down near {points}",
        "release over {points}",
        "placement spots {points}",
    ],
    [
        "move along {path}",
        "follow the route {path}",
        "trajectory {path}",
        "travel via {path}",
        "path through {path}",
    ],
];

pub const CLAUSE_SEPARATOR: &str = "; ";

/// A chain rendered as text, with the template chosen for each component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualAffordance {
    pub text: String,
    pub templates: [Option<usize>; 4],
}

/// Template index used for `kind` under a paraphrase seed.
pub fn template_index(kind: Kind, paraphrase_seed: u64) -> usize {
    ((paraphrase_seed % TEMPLATES_PER_KIND as u64) as usize + kind.index()) % TEMPLATES_PER_KIND
}

fn push_num(out: &mut String, v: f64) {
    write!(out, "{v:.3}").expect("writing to a String");
}

fn push_point(out: &mut String, p: Vec2) {
    out.push('(');
    push_num(out, p.x);
    out.push_str(", ");
    push_num(out, p.y);
    out.push(')');
}

fn push_points(out: &mut String, pts: &[Vec2], sep: &str) {
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        push_point(out, *p);
    }
}

fn fill(template: &str, chain: &AffordanceChain, kind: Kind) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("template placeholders are closed");
        match &rest[open + 1..close] {
            "name" => out.push_str(&chain.object.as_ref().expect("object present").name),
            "box" => {
                let b = chain.object.as_ref().expect("object present").bbox;
                out.push('(');
                for (i, v) in [b.x_min, b.y_min, b.x_max, b.y_max].into_iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    push_num(&mut out, v);
                }
                out.push(')');
            }
            "points" => {
                let pts = match kind {
                    Kind::Grasp => &chain.grasp.as_ref().expect("grasp present").points,
                    _ => &chain.spatial.as_ref().expect("spatial present").points,
                };
                push_points(&mut out, pts, ", ");
            }
            "path" => push_points(&mut out, &chain.movement.as_ref().expect("movement present").path, " -> "),
            other => unreachable!("unknown placeholder {other}"),
        }
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

/// Renders the present components in chain order, one clause each.
pub fn textualize(chain: &AffordanceChain, paraphrase_seed: u64) -> Result<TextualAffordance, PromptError> {
    let mask = chain.mask().bits();
    if !mask.iter().any(|b| *b) {
        return Err(PromptError::EmptyChain);
    }
    if let Some(o) = &chain.object {
        if o.name.trim().is_empty() || o.name.contains([';', '(', ')', ',']) || o.name.chars().any(|c| c.is_ascii_digit()) {
            return Err(PromptError::InvalidName(o.name.clone()));
        }
    }
    let empty_points = chain.grasp.as_ref().is_some_and(|g| g.points.is_empty())
        || chain.spatial.as_ref().is_some_and(|s| s.points.is_empty())
        || chain.movement.as_ref().is_some_and(|m| m.path.is_empty());
    if empty_points {
        return Err(PromptError::EmptyComponent);
    }
    let mut clauses = Vec::new();
    let mut templates = [None; 4];
    for kind in Kind::ALL {
        if mask[kind.index()] {
            let idx = template_index(kind, paraphrase_seed);
            templates[kind.index()] = Some(idx);
            clauses.push(fill(kind.templates()[idx], chain, kind));
        }
    }
    Ok(TextualAffordance { text: clauses.join(CLAUSE_SEPARATOR), templates })
}

enum Value {
    Name(String),
    Box(BBox),
    Points(Vec<Vec2>),
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn eat(&mut self, lit: &str) -> Option<()> {
        self.rest().starts_with(lit).then(|| self.pos += lit.len())
    }

    /// Strict `-?\d+\.\d{3}`.
    fn number(&mut self) -> Option<f64> {
        let r = self.rest().as_bytes();
        let mut i = usize::from(r.first() == Some(&b'-'));
        let int_start = i;
        while i < r.len() && r[i].is_ascii_digit() {
            i += 1;
        }
        if i == int_start || r.get(i) != Some(&b'.') {
            return None;
        }
        i += 1;
        let frac_start = i;
        while i < r.len() && r[i].is_ascii_digit() {
            i += 1;
        }
        if i - frac_start != 3 {
            return None;
        }
        let v: f64 = self.rest()[..i].parse().ok()?;
        self.pos += i;
        Some(v)
    }

    fn point(&mut self) -> Option<Vec2> {
        self.eat("(")?;
        let x = self.number()?;
        self.eat(", ")?;
        let y = self.number()?;
        self.eat(")")?;
        Some(Vec2::new(x, y))
    }

    fn points(&mut self, sep: &str) -> Option<Vec<Vec2>> {
        let mut pts = vec![self.point()?];
        while self.rest().starts_with(sep) {
            self.eat(sep)?;
            pts.push(self.point()?);
        }
        Some(pts)
    }

    fn bbox(&mut self) -> Option<BBox> {
        self.eat("(")?;
        let mut v = [0.0; 4];
        for (i, slot) in v.iter_mut().enumerate() {
            if i > 0 {
                self.eat(", ")?;
            }
            *slot = self.number()?;
        }
        self.eat(")")?;
        Some(BBox::new(v[0], v[1], v[2], v[3]))
    }
}

/// Matches one clause against one template.
fn match_template(template: &str, clause: &str) -> Option<Vec<Value>> {
    let mut cur = Cursor { s: clause, pos: 0 };
    let mut values = Vec::new();
    let mut rest = template;
    loop {
        let Some(open) = rest.find('{') else {
            cur.eat(rest)?;
            break;
        };
        cur.eat(&rest[..open])?;
        let close = open + rest[open..].find('}')?;
        let after = &rest[close + 1..];
        match &rest[open + 1..close] {
            "name" => {
                // Names run up to the next literal, which always follows.
                let lit_end = after.find('{').unwrap_or(after.len());
                let lit = &after[..lit_end];
                if lit.is_empty() {
                    return None;
                }
                let len = cur.rest().find(lit)?;
                if len == 0 {
                    return None;
                }
                values.push(Value::Name(cur.rest()[..len].to_string()));
                cur.pos += len;
            }
            "box" => values.push(Value::Box(cur.bbox()?)),
            "points" => values.push(Value::Points(cur.points(", ")?)),
            "path" => values.push(Value::Points(cur.points(" -> ")?)),
            _ => return None,
        }
        rest = after;
    }
    cur.rest().is_empty().then_some(values)
}

/// Identifies the component kind and template of a single clause.
pub fn classify_clause(clause: &str) -> Option<(Kind, usize)> {
    Kind::ALL.into_iter().find_map(|kind| {
        kind.templates()
            .iter()
            .position(|t| match_template(t, clause).is_some())
            .map(|i| (kind, i))
    })
}

/// Parses text produced by [`textualize`].
///
/// Object ids are not part of the textual form; `grasp.object` and
/// `spatial.receptacle` come back as 0.
pub fn parse_textual(text: &str) -> Result<AffordanceChain, PromptError> {
    let malformed = |why: &str| PromptError::MalformedText(format!("{why}: {text:?}"));
    let mut chain = AffordanceChain::default();
    let mut last: Option<Kind> = None;
    for clause in text.split(CLAUSE_SEPARATOR) {
        let (kind, values) = Kind::ALL
            .into_iter()
            .find_map(|kind| kind.templates().iter().find_map(|t| match_template(t, clause)).map(|v| (kind, v)))
            .ok_or_else(|| malformed("unrecognized clause"))?;
        if last.is_some_and(|l| l >= kind) {
            return Err(malformed("clauses out of order"));
        }
        last = Some(kind);
        let mut it = values.into_iter();
        match (kind, it.next(), it.next()) {
            (Kind::Object, Some(Value::Name(name)), Some(Value::Box(bbox))) => {
                chain.object = Some(ObjectAffordance { name, bbox })
            }
            (Kind::Grasp, Some(Value::Points(points)), None) => chain.grasp = Some(GraspAffordance { points, object: 0 }),
            (Kind::Spatial, Some(Value::Points(points)), None) => {
                chain.spatial = Some(SpatialAffordance { points, receptacle: 0 })
            }
            (Kind::Movement, Some(Value::Points(path)), None) => chain.movement = Some(MovementAffordance { path }),
            _ => return Err(malformed("unexpected fields")),
        }
    }
    Ok(chain)
}
