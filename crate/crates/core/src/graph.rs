//! Construction of the time-coverage reachability graph, deadlock flags, DOT
//! output and the text serialization shared by the generator and evaluator.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::firing::{enumerate_enablings, fire, Enabling};
use crate::lincons::{Conj, Endpoint, LinForm, Sym};
use crate::net::Net;
use crate::rational::{parse_rational, to_decimal_label, Rational};
use crate::symstate::{
    apply_ta_heuristics, includes, parse_state, strip_absolute, StateError, SymState,
};

/// Maximum number of disjuncts explored when checking whether enabling
/// conditions cover a state.
pub const DNF_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    pub use_ta: bool,
    /// States whose `TL - T0` is always beyond this value are left unexpanded.
    pub time_limit: Option<Rational>,
    pub max_nodes: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            use_ta: true,
            time_limit: None,
            max_nodes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Deadlock {
    #[default]
    None,
    /// No marking of the state enables anything.
    All,
    /// Some markings of the state enable nothing (possibly hidden behind
    /// outgoing edges).
    Some,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Flags {
    pub deadlock: Deadlock,
    pub no_expand: bool,
    /// The deadlock check gave up at [`DNF_CAP`] and reports `Some` conservatively.
    pub unverified: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub state: SymState,
    pub flags: Flags,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub transition: String,
    pub tail_black: bool,
    pub head_black: bool,
    pub dmin: Endpoint,
    pub dmax: Endpoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub places: Vec<String>,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub init: usize,
    /// States produced by the builder, merged or not.
    pub built: usize,
    /// False when the node budget stopped the construction.
    pub complete: bool,
    /// Expanded states whose only enablings belong to weak transitions.
    pub weak_only: usize,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Initial(#[from] StateError),
}

/// Progress snapshot passed to the builder callback.
#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub built: usize,
    pub nodes: usize,
    pub frontier: usize,
}

pub fn build_graph(net: &Net, opts: &BuildOptions) -> Result<Graph, BuildError> {
    build_graph_with(net, opts, &mut |_| {})
}

struct Pending {
    edge: Edge,
    /// Projections of the merged enabling conditions, for the tail color.
    sources: Vec<Conj>,
}

/// Breadth-first construction. `progress` is called every 1000 built states.
pub fn build_graph_with(
    net: &Net,
    opts: &BuildOptions,
    progress: &mut dyn FnMut(Progress),
) -> Result<Graph, BuildError> {
    let mut s0 = strip_absolute(net)?;
    if opts.use_ta {
        s0 = apply_ta_heuristics(s0, net);
    }
    let mut nodes = vec![Node {
        flags: Flags {
            no_expand: exceeds_limit(&s0, opts),
            ..Flags::default()
        },
        state: s0,
    }];
    let mut exact: HashMap<SymState, usize> = HashMap::new();
    exact.insert(nodes[0].state.clone(), 0);
    let mut by_shape: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    by_shape.entry(nodes[0].state.counts()).or_default().push(0);

    let mut queue = VecDeque::from([0usize]);
    let mut pending: Vec<Pending> = Vec::new();
    let mut edge_index: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut built = 1usize;
    let mut complete = true;
    let mut weak_only = 0usize;

    while let Some(id) = queue.pop_front() {
        if nodes[id].flags.no_expand {
            continue;
        }
        let state = nodes[id].state.clone();
        let enablings = enumerate_enablings(&state, net);
        let (deadlock, unverified) = detect_deadlock(&state, &enablings);
        nodes[id].flags.deadlock = deadlock;
        nodes[id].flags.unverified = unverified;
        if !enablings.is_empty()
            && enablings
                .iter()
                .all(|e| !net.transitions[e.transition].is_strong())
        {
            weak_only += 1;
        }
        for e in &enablings {
            let (succ, info) = fire(&state, net, e, opts.use_ta);
            built += 1;
            if built % 1000 == 0 {
                progress(Progress {
                    built,
                    nodes: nodes.len(),
                    frontier: queue.len(),
                });
            }
            let (dst, head_black) = if let Some(&n) = exact.get(&succ) {
                (n, true)
            } else {
                let shape = by_shape
                    .get(&succ.counts())
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                let equal = shape.iter().copied().find(|n| {
                    let other = &nodes[*n].state;
                    includes(other, &succ) && includes(&succ, other)
                });
                match equal {
                    Some(n) => (n, true),
                    None => match shape
                        .iter()
                        .copied()
                        .find(|n| includes(&nodes[*n].state, &succ))
                    {
                        Some(n) => (n, false),
                        None => {
                            if opts.max_nodes.is_some_and(|m| nodes.len() >= m) {
                                complete = false;
                                continue;
                            }
                            let n = nodes.len();
                            let flags = Flags {
                                no_expand: exceeds_limit(&succ, opts),
                                ..Flags::default()
                            };
                            exact.insert(succ.clone(), n);
                            by_shape.entry(succ.counts()).or_default().push(n);
                            nodes.push(Node { state: succ, flags });
                            queue.push_back(n);
                            (n, true)
                        }
                    },
                }
            };
            let projection = e.condition.project(|s| s != e.fire);
            let key = (id, dst, info.transition);
            match edge_index.get(&key) {
                Some(&at) => {
                    let p = &mut pending[at];
                    p.edge.head_black |= head_black;
                    p.edge.dmin = lower_min(&p.edge.dmin, &info.dmin);
                    p.edge.dmax = upper_max(&p.edge.dmax, &info.dmax);
                    p.edge.tail_black |= info.tail_black;
                    p.sources.push(projection);
                }
                None => {
                    edge_index.insert(key, pending.len());
                    pending.push(Pending {
                        edge: Edge {
                            src: id,
                            dst,
                            transition: net.transitions[info.transition].name.clone(),
                            tail_black: info.tail_black,
                            head_black,
                            dmin: info.dmin,
                            dmax: info.dmax,
                        },
                        sources: vec![projection],
                    });
                }
            }
        }
    }

    let edges = pending
        .into_iter()
        .map(|mut p| {
            if !p.edge.tail_black && p.sources.len() > 1 {
                let w = nodes[p.edge.src].state.full_constraint();
                p.edge.tail_black = covered_by_union(&w, &p.sources) == Some(true);
            }
            p.edge
        })
        .collect();
    Ok(Graph {
        places: net.places.clone(),
        nodes,
        edges,
        init: 0,
        built,
        complete,
        weak_only,
    })
}

fn exceeds_limit(s: &SymState, opts: &BuildOptions) -> bool {
    let Some(limit) = &opts.time_limit else {
        return false;
    };
    if s.k() == 0 {
        return false;
    }
    let spread = LinForm::var(Sym::Tl).minus(&LinForm::var(Sym::T(0)));
    // Only states lying entirely beyond the limit are cut: a weak transition
    // with a wide window would otherwise stop every branch at its first firing.
    match s.full_constraint().bounds(&spread) {
        Some((Endpoint::Closed(v), _)) => v > *limit,
        Some((Endpoint::Open(v), _)) => v >= *limit,
        _ => false,
    }
}

fn lower_min(a: &Endpoint, b: &Endpoint) -> Endpoint {
    match (a.value(), b.value()) {
        (Some(x), Some(y)) if x < y => a.clone(),
        (Some(x), Some(y)) if y < x => b.clone(),
        (Some(_), Some(_)) => {
            if a.is_open() {
                b.clone()
            } else {
                a.clone()
            }
        }
        _ => Endpoint::Infinite,
    }
}

fn upper_max(a: &Endpoint, b: &Endpoint) -> Endpoint {
    match (a.value(), b.value()) {
        (Some(x), Some(y)) if x > y => a.clone(),
        (Some(x), Some(y)) if y > x => b.clone(),
        (Some(_), Some(_)) => {
            if a.is_open() {
                b.clone()
            } else {
                a.clone()
            }
        }
        _ => Endpoint::Infinite,
    }
}

/// Whether `w` implies the disjunction of `parts`; `None` if the check
/// exceeded [`DNF_CAP`] disjuncts.
pub fn covered_by_union(w: &Conj, parts: &[Conj]) -> Option<bool> {
    if parts.iter().any(|p| w.implies(p)) {
        return Some(true);
    }
    let mut residue = vec![w.clone()];
    for p in parts {
        let mut next = Vec::new();
        for d in &residue {
            if !d.and(p).is_satisfiable() {
                next.push(d.clone());
                continue;
            }
            for neg in p.negate_to_dnf() {
                let c = d.and(&neg);
                if c.is_satisfiable() {
                    next.push(c);
                }
            }
            if next.len() > DNF_CAP {
                return None;
            }
        }
        if next.is_empty() {
            return Some(true);
        }
        residue = next;
    }
    Some(false)
}

/// `All` without enablings; `Some` when part of the state enables nothing.
/// The boolean reports that the check hit [`DNF_CAP`] (the answer is then `Some`).
pub fn detect_deadlock(s: &SymState, enablings: &[Enabling]) -> (Deadlock, bool) {
    if enablings.is_empty() {
        return (Deadlock::All, false);
    }
    let w = s.full_constraint();
    let mut parts: Vec<Conj> = Vec::new();
    for e in enablings {
        let p = e.condition.project(|x| x != e.fire).minimize();
        if !parts.contains(&p) {
            parts.push(p);
        }
    }
    match covered_by_union(&w, &parts) {
        Some(true) => (Deadlock::None, false),
        Some(false) => (Deadlock::Some, false),
        None => (Deadlock::Some, true),
    }
}

impl Graph {
    pub fn final_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn deadlock_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.flags.deadlock != Deadlock::None)
            .map(|(i, _)| i)
    }

    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.places.iter().position(|p| p == name)
    }

    pub fn successors(&self, id: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.src == id)
    }

    pub fn to_dot(&self) -> String {
        let mut out =
            String::from("digraph coverage {\n  node [shape=box, fontname=\"monospace\"];\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let mut attrs = vec![format!(
                "label=\"S{i}\\n{}\\n{}\"",
                escape(&n.state.render_marking(&self.places)),
                escape(&n.state.full_constraint().to_string())
            )];
            if n.flags.deadlock != Deadlock::None {
                attrs.push("peripheries=2".into());
            }
            if n.flags.no_expand {
                attrs.push("style=dashed".into());
            }
            writeln!(out, "  S{i} [{}];", attrs.join(", ")).unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "  S{} -> S{} [dir=both, arrowtail={}, arrowhead={}, label=\"{} {}\"];",
                e.src,
                e.dst,
                if e.tail_black { "dot" } else { "odot" },
                if e.head_black { "normal" } else { "onormal" },
                escape(&e.transition),
                interval_label(&e.dmin, &e.dmax)
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("TBGRAPH v1\n");
        writeln!(out, "PLACES {}", self.places.join(" ")).unwrap();
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(
                out,
                "NODE {i} flags={} ; {}",
                flags_text(&n.flags),
                n.state.render(&self.places)
            )
            .unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "EDGE {} {} {} tail={} head={} dmin={} dmax={}",
                e.src,
                e.dst,
                e.transition,
                if e.tail_black { "b" } else { "w" },
                if e.head_black { "b" } else { "w" },
                endpoint_text(&e.dmin),
                endpoint_text(&e.dmax)
            )
            .unwrap();
        }
        writeln!(out, "INIT {}", self.init).unwrap();
        writeln!(
            out,
            "STATS built={} final={} complete={} weakonly={}",
            self.built,
            self.nodes.len(),
            if self.complete { "yes" } else { "no" },
            self.weak_only
        )
        .unwrap();
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn interval_label(lo: &Endpoint, hi: &Endpoint) -> String {
    let left = match lo {
        Endpoint::Infinite => "(-inf".to_string(),
        Endpoint::Closed(v) => format!("[{}", to_decimal_label(v)),
        Endpoint::Open(v) => format!("({}", to_decimal_label(v)),
    };
    let right = match hi {
        Endpoint::Infinite => "inf)".to_string(),
        Endpoint::Closed(v) => format!("{}]", to_decimal_label(v)),
        Endpoint::Open(v) => format!("{})", to_decimal_label(v)),
    };
    format!("{left},{right}")
}

fn flags_text(f: &Flags) -> String {
    let mut parts = Vec::new();
    match f.deadlock {
        Deadlock::None => {}
        Deadlock::All => parts.push("dead"),
        Deadlock::Some => parts.push("maydead"),
    }
    if f.no_expand {
        parts.push("noexpand");
    }
    if f.unverified {
        parts.push("unverified");
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(",")
    }
}

fn endpoint_text(e: &Endpoint) -> String {
    match e {
        Endpoint::Infinite => "inf".into(),
        Endpoint::Closed(v) => v.to_string(),
        Endpoint::Open(v) => format!("{v}o"),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unsupported graph file header (expected `TBGRAPH v1`)")]
    Version,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn parse_endpoint(text: &str) -> Option<Endpoint> {
    if text == "inf" {
        return Some(Endpoint::Infinite);
    }
    match text.strip_suffix('o') {
        Some(v) => parse_rational(v).map(Endpoint::Open),
        None => parse_rational(text).map(Endpoint::Closed),
    }
}

pub fn deserialize(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "TBGRAPH v1")) => {}
        _ => return Err(GraphError::Version),
    }
    let bad = |line: usize, message: &str| GraphError::Malformed {
        line: line + 1,
        message: message.to_string(),
    };
    let mut g = Graph {
        places: Vec::new(),
        nodes: Vec::new(),
        edges: Vec::new(),
        init: 0,
        built: 0,
        complete: true,
        weak_only: 0,
    };
    let mut saw_init = false;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
        match kind {
            "PLACES" => g.places = rest.split_whitespace().map(str::to_string).collect(),
            "NODE" => {
                let mut parts = rest.splitn(3, ' ');
                let id: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(ln, "bad node id"))?;
                if id != g.nodes.len() {
                    return Err(bad(ln, "node ids must be consecutive"));
                }
                let flags_field = parts
                    .next()
                    .and_then(|s| s.strip_prefix("flags="))
                    .ok_or_else(|| bad(ln, "missing flags"))?;
                let mut flags = Flags::default();
                for f in flags_field.split(',') {
                    match f {
                        "none" => {}
                        "dead" => flags.deadlock = Deadlock::All,
                        "maydead" => flags.deadlock = Deadlock::Some,
                        "noexpand" => flags.no_expand = true,
                        "unverified" => flags.unverified = true,
                        other => return Err(bad(ln, &format!("unknown flag `{other}`"))),
                    }
                }
                let body = parts
                    .next()
                    .and_then(|s| s.strip_prefix("; "))
                    .ok_or_else(|| bad(ln, "missing state"))?;
                let state =
                    parse_state(body, &g.places, ln + 1).map_err(|e| bad(ln, &e.to_string()))?;
                g.nodes.push(Node { state, flags });
            }
            "EDGE" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 7 {
                    return Err(bad(ln, "expected 7 edge fields"));
                }
                let node = |s: &str| -> Result<usize, GraphError> {
                    s.parse::<usize>()
                        .ok()
                        .filter(|n| *n < g.nodes.len())
                        .ok_or_else(|| bad(ln, "bad node reference"))
                };
                let color = |s: &str, key: &str| -> Result<bool, GraphError> {
                    match s.strip_prefix(key) {
                        Some("b") => Ok(true),
                        Some("w") => Ok(false),
                        _ => Err(bad(ln, &format!("bad `{key}` field"))),
                    }
                };
                let end = |s: &str, key: &str| -> Result<Endpoint, GraphError> {
                    s.strip_prefix(key)
                        .and_then(parse_endpoint)
                        .ok_or_else(|| bad(ln, &format!("bad `{key}` field")))
                };
                g.edges.push(Edge {
                    src: node(f[0])?,
                    dst: node(f[1])?,
                    transition: f[2].to_string(),
                    tail_black: color(f[3], "tail=")?,
                    head_black: color(f[4], "head=")?,
                    dmin: end(f[5], "dmin=")?,
                    dmax: end(f[6], "dmax=")?,
                });
            }
            "INIT" => {
                g.init = rest
                    .trim()
                    .parse()
                    .map_err(|_| bad(ln, "bad initial node"))?;
                saw_init = true;
            }
            "STATS" => {
                for field in rest.split_whitespace() {
                    let (k, v) = field
                        .split_once('=')
                        .ok_or_else(|| bad(ln, "bad stats field"))?;
                    match k {
                        "built" => g.built = v.parse().map_err(|_| bad(ln, "bad built count"))?,
                        "final" => {
                            if v.parse::<usize>().ok() != Some(g.nodes.len()) {
                                return Err(bad(ln, "final count does not match the nodes"));
                            }
                        }
                        "complete" => g.complete = v == "yes",
                        "weakonly" => {
                            g.weak_only = v.parse().map_err(|_| bad(ln, "bad weakonly count"))?
                        }
                        _ => return Err(bad(ln, &format!("unknown stats field `{k}`"))),
                    }
                }
            }
            other => return Err(bad(ln, &format!("unknown record `{other}`"))),
        }
    }
    if !saw_init || g.init >= g.nodes.len() {
        return Err(GraphError::Malformed {
            line: text.lines().count(),
            message: "missing or invalid INIT".into(),
        });
    }
    Ok(g)
}
