//! Query language and property evaluation over a coverage graph.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::graph::{Edge, Graph};
use crate::lexer::{tokenize, Cursor, LexError, Pos, Tok};
use crate::lincons::{Atom, Endpoint, LinForm, Rel, Sym};
use crate::rational::Rational;
use crate::symstate::Token;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    fn from_tok(t: &Tok) -> Option<CmpOp> {
        Some(match t {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            _ => return None,
        })
    }

    fn holds<T: Ord>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

/// Integer linear expression over token counts.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CountExpr {
    pub terms: Vec<(i64, usize)>,
    pub constant: i64,
}

impl CountExpr {
    pub fn eval(&self, counts: &[usize]) -> i64 {
        self.terms
            .iter()
            .map(|(c, p)| c * counts[*p] as i64)
            .sum::<i64>()
            + self.constant
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pred {
    Const(bool),
    Cmp(CountExpr, CmpOp, CountExpr),
    /// Matches one node by id.
    Node(usize),
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

impl Pred {
    pub fn holds(&self, id: usize, counts: &[usize]) -> bool {
        match self {
            Pred::Const(b) => *b,
            Pred::Cmp(l, op, r) => op.holds(&l.eval(counts), &r.eval(counts)),
            Pred::Node(n) => *n == id,
            Pred::Not(p) => !p.holds(id, counts),
            Pred::And(a, b) => a.holds(id, counts) && b.holds(id, counts),
            Pred::Or(a, b) => a.holds(id, counts) || b.holds(id, counts),
        }
    }
}

/// `lhs - rhs OP 0` with `ts(place)` selectors on the left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TsRelation {
    pub terms: Vec<(Rational, usize)>,
    pub constant: Rational,
    pub op: CmpOp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Exists(Pred),
    Max(CountExpr, Option<Pred>),
    Min(CountExpr, Option<Pred>),
    Rel(TsRelation),
    PathTime(Pred, Pred),
    FlagPaths,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    No,
    Maybe,
    Yes,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::No => "no",
            Verdict::Maybe => "maybe",
            Verdict::Yes => "yes",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Exists {
        found: bool,
        witnesses: Vec<usize>,
    },
    Extremum {
        value: i64,
        witnesses: Vec<usize>,
    },
    Relation {
        verdict: Verdict,
        witnesses: Vec<usize>,
    },
    /// `max` is `None` when unbounded.
    PathTime {
        min: Rational,
        max: Option<Rational>,
        witnesses: Vec<usize>,
    },
    /// Edge index pairs `(into, out_of)` meeting at a node.
    Flagged(Vec<(usize, usize)>),
}

impl Outcome {
    /// Machine-parsable result line. Flagged pairs need the graph for node ids.
    pub fn render(&self, g: &Graph) -> String {
        let ids = |w: &[usize]| {
            if w.is_empty() {
                "-".to_string()
            } else {
                w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            }
        };
        match self {
            Outcome::Exists { found, witnesses } => {
                format!("result={found} witnesses={}", ids(witnesses))
            }
            Outcome::Extremum { value, witnesses } => {
                format!("result={value} witnesses={}", ids(witnesses))
            }
            Outcome::Relation { verdict, witnesses } => {
                format!("result={verdict} witnesses={}", ids(witnesses))
            }
            Outcome::PathTime {
                min,
                max,
                witnesses,
            } => format!(
                "result=min:{min},max:{} witnesses={}",
                max.as_ref().map_or("inf".to_string(), Rational::to_string),
                ids(witnesses)
            ),
            Outcome::Flagged(pairs) => {
                let mids: Vec<usize> = pairs.iter().map(|(a, _)| g.edges[*a].dst).collect();
                let paths: Vec<String> = pairs
                    .iter()
                    .map(|(a, b)| {
                        format!(
                            "{}>{}>{}",
                            g.edges[*a].src, g.edges[*a].dst, g.edges[*b].dst
                        )
                    })
                    .collect();
                format!(
                    "result={} witnesses={} paths={}",
                    pairs.len(),
                    ids(&mids
                        .into_iter()
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect::<Vec<_>>()),
                    if paths.is_empty() {
                        "-".into()
                    } else {
                        paths.join(",")
                    }
                )
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("{pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("{pos}: unknown place `{name}`")]
    UnknownPlace { pos: Pos, name: String },
    #[error("no node satisfies the filter")]
    Empty,
    #[error("no path between the given node sets")]
    NoPath,
}

impl From<LexError> for QueryError {
    fn from(e: LexError) -> Self {
        QueryError::Syntax {
            pos: e.pos,
            message: e.message,
        }
    }
}

pub fn parse_query(text: &str, places: &[String], line: usize) -> Result<Query, QueryError> {
    let toks = tokenize(text, line)?;
    let end = Pos {
        line,
        column: text.chars().count() + 1,
    };
    let mut p = Parser {
        cur: Cursor::new(toks, end),
        places,
    };
    let q = p.query()?;
    if !p.cur.at_end() {
        return Err(p.cur.unexpected("end of query").into());
    }
    Ok(q)
}

struct Parser<'a> {
    cur: Cursor,
    places: &'a [String],
}

impl Parser<'_> {
    fn query(&mut self) -> Result<Query, QueryError> {
        if self.cur.eat_keyword("EXISTS") {
            return Ok(Query::Exists(self.pred()?));
        }
        for (word, is_max) in [("MAX", true), ("MIN", false)] {
            if self.cur.eat_keyword(word) {
                let e = self.count_expr()?;
                let filter = if self.cur.eat_keyword("WHERE") {
                    Some(self.pred()?)
                } else {
                    None
                };
                return Ok(if is_max {
                    Query::Max(e, filter)
                } else {
                    Query::Min(e, filter)
                });
            }
        }
        if self.cur.eat_keyword("REL") {
            return self.ts_relation().map(Query::Rel);
        }
        if self.cur.eat_keyword("PATHTIME") {
            let from = self.pred()?;
            self.cur.expect(&Tok::Arrow)?;
            let to = self.pred()?;
            return Ok(Query::PathTime(from, to));
        }
        if self.cur.eat_keyword("FLAGPATHS") {
            return Ok(Query::FlagPaths);
        }
        Err(self
            .cur
            .unexpected("EXISTS, MAX, MIN, REL, PATHTIME or FLAGPATHS")
            .into())
    }

    fn place(&mut self) -> Result<usize, QueryError> {
        let pos = self.cur.pos();
        let name = self.cur.expect_ident()?;
        self.places
            .iter()
            .position(|p| *p == name)
            .ok_or(QueryError::UnknownPlace { pos, name })
    }

    fn pred(&mut self) -> Result<Pred, QueryError> {
        let mut left = self.conjunction()?;
        while self.cur.eat(&Tok::Or) {
            left = Pred::Or(Box::new(left), Box::new(self.conjunction()?));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Pred, QueryError> {
        let mut left = self.unary()?;
        while self.cur.eat(&Tok::And) {
            left = Pred::And(Box::new(left), Box::new(self.unary()?));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Pred, QueryError> {
        if self.cur.eat(&Tok::Not) {
            return Ok(Pred::Not(Box::new(self.unary()?)));
        }
        if self.cur.eat(&Tok::LParen) {
            let p = self.pred()?;
            self.cur.expect(&Tok::RParen)?;
            return Ok(p);
        }
        if self.cur.eat_keyword("true") {
            return Ok(Pred::Const(true));
        }
        if self.cur.eat_keyword("false") {
            return Ok(Pred::Const(false));
        }
        if self.cur.eat(&Tok::At) {
            let pos = self.cur.pos();
            let n = self.cur.rational_literal()?;
            if !n.is_integer() {
                return Err(QueryError::Syntax {
                    pos,
                    message: "node id must be an integer".into(),
                });
            }
            let id = n.to_integer().try_into().map_err(|_| QueryError::Syntax {
                pos,
                message: "node id out of range".into(),
            })?;
            return Ok(Pred::Node(id));
        }
        let left = self.count_expr()?;
        let op = match self.cur.peek().and_then(CmpOp::from_tok) {
            Some(op) => op,
            None => return Err(self.cur.unexpected("a comparison operator").into()),
        };
        self.cur.next();
        let right = self.count_expr()?;
        Ok(Pred::Cmp(left, op, right))
    }

    fn integer(&mut self) -> Result<i64, QueryError> {
        let pos = self.cur.pos();
        let n = self.cur.rational_literal()?;
        if !n.is_integer() {
            return Err(QueryError::Syntax {
                pos,
                message: "token counts are compared with integers".into(),
            });
        }
        n.to_integer().try_into().map_err(|_| QueryError::Syntax {
            pos,
            message: "integer out of range".into(),
        })
    }

    fn count_expr(&mut self) -> Result<CountExpr, QueryError> {
        let mut e = CountExpr::default();
        let mut sign = if self.cur.eat(&Tok::Minus) { -1 } else { 1 };
        loop {
            if self.cur.eat(&Tok::Hash) {
                let p = self.place()?;
                e.terms.push((sign, p));
            } else {
                let n = self.integer()?;
                if self.cur.eat(&Tok::Star) {
                    self.cur.expect(&Tok::Hash)?;
                    let p = self.place()?;
                    e.terms.push((sign * n, p));
                } else {
                    e.constant += sign * n;
                }
            }
            sign = if self.cur.eat(&Tok::Plus) {
                1
            } else if self.cur.eat(&Tok::Minus) {
                -1
            } else {
                return Ok(e);
            };
        }
    }

    /// `ts` terms on either side, folded into `lhs - rhs`.
    fn ts_side(&mut self, scale: &Rational, rel: &mut TsRelation) -> Result<(), QueryError> {
        let mut sign = if self.cur.eat(&Tok::Minus) {
            -Rational::one()
        } else {
            Rational::one()
        };
        loop {
            let coeff = if matches!(self.cur.peek(), Some(Tok::Num(_))) {
                let n = self.cur.rational_literal()?;
                if !self.cur.eat(&Tok::Star) {
                    rel.constant += scale * &sign * n;
                    None
                } else {
                    Some(n)
                }
            } else {
                Some(Rational::one())
            };
            if let Some(c) = coeff {
                if !self.cur.eat_keyword("ts") {
                    return Err(self.cur.unexpected("`ts`").into());
                }
                self.cur.expect(&Tok::LParen)?;
                let p = self.place()?;
                self.cur.expect(&Tok::RParen)?;
                rel.terms.push((scale * &sign * c, p));
            }
            sign = if self.cur.eat(&Tok::Plus) {
                Rational::one()
            } else if self.cur.eat(&Tok::Minus) {
                -Rational::one()
            } else {
                return Ok(());
            };
        }
    }

    fn ts_relation(&mut self) -> Result<TsRelation, QueryError> {
        let mut rel = TsRelation {
            terms: Vec::new(),
            constant: Rational::zero(),
            op: CmpOp::Eq,
        };
        self.ts_side(&Rational::one(), &mut rel)?;
        rel.op = match self.cur.peek().and_then(CmpOp::from_tok) {
            Some(op) => op,
            None => return Err(self.cur.unexpected("a comparison operator").into()),
        };
        self.cur.next();
        self.ts_side(&-Rational::one(), &mut rel)?;
        if rel.terms.is_empty() {
            return Err(QueryError::Syntax {
                pos: self.cur.pos(),
                message: "relation mentions no `ts(place)`".into(),
            });
        }
        Ok(rel)
    }
}

pub fn evaluate(g: &Graph, q: &Query) -> Result<Outcome, QueryError> {
    Ok(match q {
        Query::Exists(p) => {
            let witnesses = matching(g, p);
            Outcome::Exists {
                found: !witnesses.is_empty(),
                witnesses,
            }
        }
        Query::Max(e, filter) => optimize(g, e, filter.as_ref(), true)?,
        Query::Min(e, filter) => optimize(g, e, filter.as_ref(), false)?,
        Query::Rel(r) => timestamp_relation(g, r),
        Query::PathTime(from, to) => path_time(g, from, to)?,
        Query::FlagPaths => Outcome::Flagged(flag_paths(g)),
    })
}

fn matching(g: &Graph, p: &Pred) -> Vec<usize> {
    (0..g.nodes.len())
        .filter(|i| p.holds(*i, &g.nodes[*i].state.counts()))
        .collect()
}

fn optimize(
    g: &Graph,
    e: &CountExpr,
    filter: Option<&Pred>,
    max: bool,
) -> Result<Outcome, QueryError> {
    let values: Vec<(usize, i64)> = (0..g.nodes.len())
        .filter_map(|i| {
            let counts = g.nodes[i].state.counts();
            filter
                .is_none_or(|p| p.holds(i, &counts))
                .then(|| (i, e.eval(&counts)))
        })
        .collect();
    let best = if max {
        values.iter().map(|v| v.1).max()
    } else {
        values.iter().map(|v| v.1).min()
    };
    let value = best.ok_or(QueryError::Empty)?;
    let witnesses = values
        .iter()
        .filter(|v| v.1 == value)
        .map(|v| v.0)
        .collect();
    Ok(Outcome::Extremum { value, witnesses })
}

/// Three-valued answer for one node; tokens of a place are chosen existentially.
pub fn relation_at(g: &Graph, id: usize, r: &TsRelation) -> Option<Verdict> {
    let state = &g.nodes[id].state;
    let mut referenced: Vec<usize> = r.terms.iter().map(|t| t.1).collect();
    referenced.sort_unstable();
    referenced.dedup();
    if referenced.iter().any(|p| state.marking[*p].is_empty()) {
        return None;
    }
    let c = state.full_constraint();
    let mut best = Verdict::No;
    let positions: Vec<Vec<usize>> = referenced
        .iter()
        .map(|p| (0..state.marking[*p].len()).collect())
        .collect();
    for choice in crate::net::cartesian(&positions) {
        let token = |p: usize| {
            let slot = referenced.iter().position(|q| *q == p).unwrap();
            state.marking[p][choice[slot]]
        };
        let verdict = if r.terms.iter().any(|(_, p)| token(*p) == Token::Ta) {
            Verdict::Maybe
        } else {
            let mut form = LinForm::constant(r.constant.clone());
            for (coeff, p) in &r.terms {
                if let Token::Ts(i) = token(*p) {
                    form.add_term(Sym::T(i), coeff.clone());
                }
            }
            three_valued(&c, &form, r.op)
        };
        best = best.max(verdict);
        if best == Verdict::Yes {
            break;
        }
    }
    Some(best)
}

fn three_valued(c: &crate::lincons::Conj, form: &LinForm, op: CmpOp) -> Verdict {
    let zero = LinForm::zero();
    let (holds, fails) = match op {
        CmpOp::Lt => (Atom::lt(form, &zero), Atom::ge(form, &zero)),
        CmpOp::Le => (Atom::le(form, &zero), Atom::gt(form, &zero)),
        CmpOp::Gt => (Atom::gt(form, &zero), Atom::le(form, &zero)),
        CmpOp::Ge => (Atom::ge(form, &zero), Atom::lt(form, &zero)),
        CmpOp::Eq => {
            let eq = Atom::eq(form, &zero);
            if c.implies_atom(&eq) {
                return Verdict::Yes;
            }
            return if c.clone().with(eq).is_satisfiable() {
                Verdict::Maybe
            } else {
                Verdict::No
            };
        }
        CmpOp::Ne => {
            let eq = Atom::eq(form, &zero);
            if !c.clone().with(eq.clone()).is_satisfiable() {
                return Verdict::Yes;
            }
            return if c.implies_atom(&eq) {
                Verdict::No
            } else {
                Verdict::Maybe
            };
        }
    };
    debug_assert!(holds.rel != Rel::Eq);
    if c.implies_atom(&holds) {
        Verdict::Yes
    } else if c.implies_atom(&fails) {
        Verdict::No
    } else {
        Verdict::Maybe
    }
}

pub fn timestamp_relation(g: &Graph, r: &TsRelation) -> Outcome {
    let per_node: Vec<(usize, Verdict)> = (0..g.nodes.len())
        .filter_map(|i| relation_at(g, i, r).map(|v| (i, v)))
        .collect();
    let verdict = per_node.iter().map(|v| v.1).max().unwrap_or(Verdict::No);
    let witnesses = if verdict == Verdict::No {
        Vec::new()
    } else {
        per_node
            .iter()
            .filter(|v| v.1 == verdict)
            .map(|v| v.0)
            .collect()
    };
    Outcome::Relation { verdict, witnesses }
}

/// Nodes of `from` first reached from the initial node, i.e. through paths
/// avoiding other `from` nodes.
fn entry_nodes(g: &Graph, from: &[bool]) -> Vec<usize> {
    let mut seen = vec![false; g.nodes.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::from([g.init]);
    seen[g.init] = true;
    while let Some(n) = queue.pop_front() {
        if from[n] {
            out.push(n);
            continue;
        }
        for e in g.successors(n) {
            if !seen[e.dst] {
                seen[e.dst] = true;
                queue.push_back(e.dst);
            }
        }
    }
    out.sort_unstable();
    out
}

fn lower(e: &Edge) -> Rational {
    e.dmin.value().cloned().unwrap_or_else(Rational::zero)
}

/// Conservative bounds on the time between first entering `from` and first
/// reaching `to` afterwards.
pub fn path_time(g: &Graph, from: &Pred, to: &Pred) -> Result<Outcome, QueryError> {
    let n = g.nodes.len();
    let in_from: Vec<bool> = (0..n)
        .map(|i| from.holds(i, &g.nodes[i].state.counts()))
        .collect();
    let in_to: Vec<bool> = (0..n)
        .map(|i| to.holds(i, &g.nodes[i].state.counts()))
        .collect();
    let sources = entry_nodes(g, &in_from);
    let mut out: Vec<Vec<&Edge>> = vec![Vec::new(); n];
    for e in &g.edges {
        if !in_to[e.src] {
            out[e.src].push(e);
        }
    }

    let mut dist: Vec<Option<Rational>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    for s in &sources {
        dist[*s] = Some(Rational::zero());
        heap.push(Reverse((Rational::zero(), *s)));
    }
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].as_ref() != Some(&d) {
            continue;
        }
        for e in &out[u] {
            let nd = &d + lower(e);
            if dist[e.dst].as_ref().is_none_or(|old| nd < *old) {
                dist[e.dst] = Some(nd.clone());
                heap.push(Reverse((nd, e.dst)));
            }
        }
    }
    let min = (0..n)
        .filter(|i| in_to[*i])
        .filter_map(|i| dist[i].clone())
        .min()
        .ok_or(QueryError::NoPath)?;
    let witnesses = (0..n)
        .filter(|i| in_to[*i] && dist[*i].as_ref() == Some(&min))
        .collect();

    // Longest path: restrict to nodes reachable from the sources that can
    // reach a target, then look for positive cycles or unbounded edges.
    let reach_fwd: Vec<bool> = dist.iter().map(Option::is_some).collect();
    let mut reach_bwd = in_to.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|i| in_to[*i]).collect();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, es) in out.iter().enumerate() {
        for e in es {
            preds[e.dst].push(u);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &u in &preds[v] {
            if !reach_bwd[u] {
                reach_bwd[u] = true;
                queue.push_back(u);
            }
        }
    }
    let relevant: Vec<bool> = (0..n).map(|i| reach_fwd[i] && reach_bwd[i]).collect();
    let max = longest_path(n, &out, &relevant, &sources, &in_to);
    Ok(Outcome::PathTime {
        min,
        max,
        witnesses,
    })
}

fn longest_path(
    n: usize,
    out: &[Vec<&Edge>],
    relevant: &[bool],
    sources: &[usize],
    targets: &[bool],
) -> Option<Rational> {
    let edges: Vec<&Edge> = out
        .iter()
        .flatten()
        .copied()
        .filter(|e| relevant[e.src] && relevant[e.dst])
        .collect();
    if edges.iter().any(|e| e.dmax == Endpoint::Infinite) {
        return None;
    }
    let comp = strongly_connected(n, &edges);
    for e in &edges {
        if comp[e.src] == comp[e.dst] && e.dmax.value().is_some_and(|v| !v.is_zero()) {
            return None;
        }
    }
    // Components come out of Tarjan in reverse topological order.
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut best: Vec<Option<Rational>> = vec![None; ncomp];
    for s in sources {
        if relevant[*s] {
            best[comp[*s]] = Some(Rational::zero());
        }
    }
    let mut by_comp: Vec<Vec<&Edge>> = vec![Vec::new(); ncomp];
    for e in &edges {
        by_comp[comp[e.src]].push(e);
    }
    for c in (0..ncomp).rev() {
        let Some(d) = best[c].clone() else { continue };
        for e in &by_comp[c] {
            if comp[e.dst] == c {
                continue;
            }
            let nd = &d + e.dmax.value().unwrap();
            if best[comp[e.dst]].as_ref().is_none_or(|old| nd > *old) {
                best[comp[e.dst]] = Some(nd);
            }
        }
    }
    (0..n)
        .filter(|i| targets[*i] && relevant[*i])
        .filter_map(|i| best[comp[i]].clone())
        .max()
}

/// Tarjan's algorithm; component ids are in reverse topological order.
fn strongly_connected(n: usize, edges: &[&Edge]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in edges {
        adj[e.src].push(e.dst);
    }
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = work.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Consecutive edge pairs entering a node through a white head and leaving it
/// through a white tail: the concatenated path may not be feasible.
pub fn flag_paths(g: &Graph) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, a) in g.edges.iter().enumerate() {
        if a.head_black {
            continue;
        }
        for (j, b) in g.edges.iter().enumerate() {
            if b.src == a.dst && !b.tail_black {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, BuildOptions, Flags, Node};
    use crate::net::parse_net;
    use crate::rational::{int, rat};
    use crate::symstate::parse_state;

    fn fig1_graph() -> Graph {
        let net = parse_net(include_str!("../fixtures/fig1.tbn")).unwrap();
        build_graph(&net, &BuildOptions::default()).unwrap()
    }

    fn run(g: &Graph, q: &str) -> Result<Outcome, QueryError> {
        evaluate(g, &parse_query(q, &g.places, 1)?)
    }

    #[test]
    fn exists_queries() {
        let g = fig1_graph();
        match run(&g, "EXISTS #Flame >= 1 && #BURN_PHASE_B >= 1").unwrap() {
            Outcome::Exists { found, witnesses } => {
                assert!(found);
                assert!(witnesses.contains(&3));
            }
            o => panic!("{o:?}"),
        }
        assert_eq!(
            run(&g, "EXISTS #Gas >= 2").unwrap(),
            Outcome::Exists {
                found: false,
                witnesses: vec![]
            }
        );
        assert!(matches!(
            run(&g, "EXISTS #NoSuchPlace >= 1"),
            Err(QueryError::UnknownPlace { .. })
        ));
    }

    #[test]
    fn extremum_queries() {
        let g = fig1_graph();
        let Outcome::Extremum { value, .. } = run(&g, "MIN #Gas").unwrap() else {
            panic!()
        };
        // Brute force over the nodes.
        let expected = g
            .nodes
            .iter()
            .map(|n| n.state.marking[g.place_index("Gas").unwrap()].len())
            .min()
            .unwrap();
        assert_eq!(value, expected as i64);
        let Outcome::Extremum { value, .. } =
            run(&g, "MAX #Gas + 2 * #Flame - 1 WHERE #Flame = 1").unwrap()
        else {
            panic!()
        };
        assert_eq!(value, 2);
        assert_eq!(run(&g, "MAX #Gas WHERE false"), Err(QueryError::Empty));
    }

    #[test]
    fn timestamp_relations() {
        let g = fig1_graph();
        let Outcome::Relation { verdict, witnesses } =
            run(&g, "REL ts(Flame) > ts(IGNITE_PHASE_S)").unwrap()
        else {
            panic!()
        };
        assert_eq!(verdict, Verdict::Yes);
        assert!(witnesses.contains(&9));
        let Outcome::Relation { verdict, .. } = run(&g, "REL ts(Gas) = ts(Ignition)").unwrap()
        else {
            panic!()
        };
        assert_eq!(verdict, Verdict::Maybe);
        let Outcome::Relation { verdict, .. } =
            run(&g, "REL ts(IGNITE_PHASE_S) = ts(IGNITE_PHASE_S)").unwrap()
        else {
            panic!()
        };
        assert_eq!(verdict, Verdict::Yes);
        let Outcome::Relation { verdict, .. } =
            run(&g, "REL ts(Flame) - ts(IGNITE_PHASE_S) > 5/2").unwrap()
        else {
            panic!()
        };
        assert_eq!(verdict, Verdict::No);
    }

    #[test]
    fn path_time_from_initial_to_gas_off() {
        let g = fig1_graph();
        let q = "PATHTIME #IGNITE_PHASE_S = 1 && #Gas = 1 && #Ignition = 1 && #NoFlame = 1 \
                 -> #IGNITE_PHASE_S = 0 && #BURN_PHASE_B = 0 && #Gas = 1 && #Ignition = 1 && #NoFlame = 1";
        let Outcome::PathTime { min, witnesses, .. } = run(&g, q).unwrap() else {
            panic!()
        };
        assert_eq!(min, rat(17, 10));
        assert_eq!(witnesses, vec![10]);
        let Outcome::PathTime { min, max, .. } = run(&g, "PATHTIME @4 -> @4").unwrap() else {
            panic!()
        };
        assert_eq!((min, max), (int(0), Some(int(0))));
        assert_eq!(run(&g, "PATHTIME @3 -> @0"), Err(QueryError::NoPath));
    }

    fn tiny_graph(edges: &[(usize, usize, bool, bool, i64, Option<i64>)], nodes: usize) -> Graph {
        let places = vec!["p".to_string()];
        let state = parse_state("p{T0} ; TL - T0 = 0", &places, 1).unwrap();
        Graph {
            places,
            nodes: (0..nodes)
                .map(|_| Node {
                    state: state.clone(),
                    flags: Flags::default(),
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(src, dst, tail_black, head_black, lo, hi)| Edge {
                    src,
                    dst,
                    transition: "t".into(),
                    tail_black,
                    head_black,
                    dmin: Endpoint::Closed(int(lo)),
                    dmax: hi.map_or(Endpoint::Infinite, |h| Endpoint::Closed(int(h))),
                })
                .collect(),
            init: 0,
            built: nodes,
            complete: true,
            weak_only: 0,
        }
    }

    #[test]
    fn max_time_unbounded_through_positive_cycle() {
        let g = tiny_graph(
            &[
                (0, 1, true, true, 1, Some(2)),
                (1, 2, true, true, 1, Some(1)),
                (2, 1, true, true, 0, Some(3)),
                (1, 3, true, true, 2, Some(5)),
            ],
            4,
        );
        let Outcome::PathTime { min, max, .. } =
            path_time(&g, &Pred::Node(0), &Pred::Node(3)).unwrap()
        else {
            panic!()
        };
        assert_eq!(min, int(3));
        assert_eq!(max, None);
        let Outcome::PathTime { max, .. } = path_time(&g, &Pred::Node(0), &Pred::Node(1)).unwrap()
        else {
            panic!()
        };
        assert_eq!(max, Some(int(2)));
    }

    #[test]
    fn max_time_over_dag() {
        let g = tiny_graph(
            &[
                (0, 1, true, true, 1, Some(2)),
                (0, 2, true, true, 0, Some(7)),
                (1, 3, true, true, 1, Some(1)),
                (2, 3, true, true, 1, Some(1)),
            ],
            4,
        );
        let Outcome::PathTime { min, max, .. } =
            path_time(&g, &Pred::Node(0), &Pred::Node(3)).unwrap()
        else {
            panic!()
        };
        assert_eq!((min, max), (int(1), Some(int(8))));
    }

    #[test]
    fn flags_white_head_then_white_tail() {
        let g = tiny_graph(
            &[
                (0, 1, true, false, 0, Some(1)),
                (1, 2, false, true, 0, Some(1)),
            ],
            3,
        );
        assert_eq!(flag_paths(&g), vec![(0, 1)]);
        let g = tiny_graph(
            &[
                (0, 1, true, true, 0, Some(1)),
                (1, 2, false, true, 0, Some(1)),
            ],
            3,
        );
        assert!(flag_paths(&g).is_empty());
    }

    #[test]
    fn syntax_errors_carry_column() {
        let places = vec!["a".to_string()];
        match parse_query("EXISTS #a >= ", &places, 1) {
            Err(QueryError::Syntax { pos, .. }) => assert_eq!(pos.column, 14),
            other => panic!("{other:?}"),
        }
        match parse_query("EXISTS #a >= 1 1", &places, 1) {
            Err(QueryError::Syntax { pos, .. }) => assert_eq!(pos.column, 16),
            other => panic!("{other:?}"),
        }
        assert!(parse_query("REL 3 > 2", &places, 1).is_err());
        assert!(parse_query("EXISTS !(#a = 1) || @0", &places, 1).is_ok());
    }
}
