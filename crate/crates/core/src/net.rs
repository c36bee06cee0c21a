//! TB nets: data model, the textual net format, and concrete timed semantics.
//!
//! Places and transitions are kept sorted by name, so indices double as the
//! deterministic iteration order used everywhere else.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lexer::{tokenize, Cursor, LexError, Pos, Tok};
use crate::lincons::{parse_conj_tokens, pick_between, Atom, Conj, LinForm, Sym};
use crate::rational::{int, rat, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ref {
    Place(usize),
    /// Maximum timestamp of the enabling tuple.
    Enab,
}

/// `Σ coeff·ref + offset`
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinTerm {
    pub coeffs: Vec<(Ref, Rational)>,
    pub offset: Rational,
}

impl LinTerm {
    fn constant(offset: Rational) -> Self {
        LinTerm {
            coeffs: Vec::new(),
            offset,
        }
    }

    fn reference(r: Ref) -> Self {
        LinTerm {
            coeffs: vec![(r, Rational::one())],
            offset: Rational::zero(),
        }
    }

    fn plus(&self, other: &LinTerm) -> LinTerm {
        let mut map: BTreeMap<Ref, Rational> = self.coeffs.iter().cloned().collect();
        for (r, c) in &other.coeffs {
            *map.entry(*r).or_insert_with(Rational::zero) += c;
        }
        LinTerm {
            coeffs: map.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
            offset: &self.offset + &other.offset,
        }
    }

    fn scaled(&self, factor: &Rational) -> LinTerm {
        LinTerm {
            coeffs: self
                .coeffs
                .iter()
                .map(|(r, c)| (*r, c * factor))
                .filter(|(_, c)| !c.is_zero())
                .collect(),
            offset: &self.offset * factor,
        }
    }

    pub fn refs(&self) -> impl Iterator<Item = Ref> + '_ {
        self.coeffs.iter().map(|(r, _)| *r)
    }

    pub fn mentions(&self, r: Ref) -> bool {
        self.coeffs.iter().any(|(x, _)| *x == r)
    }

    /// Value on concrete stamps; `stamp` maps preset places, `enab` is the tuple maximum.
    pub fn eval(&self, stamp: &impl Fn(usize) -> Rational, enab: &Rational) -> Rational {
        let mut acc = self.offset.clone();
        for (r, c) in &self.coeffs {
            acc += c * match r {
                Ref::Place(p) => stamp(*p),
                Ref::Enab => enab.clone(),
            };
        }
        acc
    }

    /// Symbolic value, `None` if a reference cannot be resolved.
    pub fn to_form(&self, sym_of: &impl Fn(Ref) -> Option<Sym>) -> Option<LinForm> {
        let mut form = LinForm::constant(self.offset.clone());
        for (r, c) in &self.coeffs {
            form.add_term(sym_of(*r)?, c.clone());
        }
        Some(form)
    }
}

/// Pointwise maximum of linear terms; always at least one term.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TimeExpr {
    pub terms: Vec<LinTerm>,
}

impl TimeExpr {
    fn new(terms: Vec<LinTerm>) -> Self {
        let set: BTreeSet<LinTerm> = terms.into_iter().collect();
        TimeExpr {
            terms: set.into_iter().collect(),
        }
    }

    pub fn refers_to(&self, r: Ref) -> bool {
        self.terms.iter().any(|t| t.mentions(r))
    }

    pub fn eval(&self, stamp: &impl Fn(usize) -> Rational, enab: &Rational) -> Rational {
        self.terms
            .iter()
            .map(|t| t.eval(stamp, enab))
            .max()
            .expect("time expression has a term")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Semantics {
    Strong,
    Weak,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub name: String,
    pub semantics: Semantics,
    /// Sorted place indices.
    pub pre: Vec<usize>,
    pub post: Vec<usize>,
    pub lb: TimeExpr,
    pub ub: TimeExpr,
}

impl Transition {
    pub fn is_strong(&self) -> bool {
        self.semantics == Semantics::Strong
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Net {
    pub name: String,
    /// Sorted names.
    pub places: Vec<String>,
    /// Sorted by name.
    pub transitions: Vec<Transition>,
    /// Initial symbol indices per place, ascending.
    pub init: Vec<Vec<u32>>,
    /// Over `T<i>` of the initial marking; may contain absolute constants.
    pub init_constraint: Conj,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("{pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("line {line}: unknown place `{name}`")]
    UnknownPlace { line: usize, name: String },
    #[error("line {line}: duplicate name `{name}`")]
    Duplicate { line: usize, name: String },
    #[error("transition `{transition}`: place `{place}` is used in the time function but is not in the preset")]
    NotInPreset { transition: String, place: String },
    #[error("transition `{transition}`: term `{term}` is an absolute-time reference")]
    AbsoluteTime { transition: String, term: String },
    #[error("transition `{transition}` has an empty preset")]
    EmptyPreset { transition: String },
    #[error("initial constraint mentions `{symbol}` which is not on the initial marking")]
    UnknownSymbol { symbol: String },
    #[error("initial constraint is unsatisfiable")]
    UnsatisfiableInit,
    #[error("missing `net` declaration")]
    MissingName,
}

impl From<LexError> for NetError {
    fn from(e: LexError) -> Self {
        NetError::Syntax {
            pos: e.pos,
            message: e.message,
        }
    }
}

impl Net {
    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.places.binary_search_by(|p| p.as_str().cmp(name)).ok()
    }

    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t.name == name)
    }

    /// Transitions having `place` in their preset.
    pub fn consumers(&self, place: usize) -> impl Iterator<Item = &Transition> + '_ {
        self.transitions
            .iter()
            .filter(move |t| t.pre.contains(&place))
    }

    /// Canonical text form; `parse_net(render())` reproduces the net.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "net {}", self.name).unwrap();
        writeln!(out, "place {}", self.places.join(" ")).unwrap();
        for t in &self.transitions {
            let names = |ps: &[usize]| {
                ps.iter()
                    .map(|p| self.places[*p].as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let sem = match t.semantics {
                Semantics::Strong => "strong",
                Semantics::Weak => "weak",
            };
            writeln!(
                out,
                "transition {} {sem} pre: {} post: {} tf: [ {} , {} ]",
                t.name,
                names(&t.pre),
                names(&t.post),
                self.render_expr(&t.lb),
                self.render_expr(&t.ub)
            )
            .unwrap();
        }
        let mut init = Vec::new();
        for (p, syms) in self.init.iter().enumerate() {
            if !syms.is_empty() {
                let list: Vec<String> = syms.iter().map(|i| format!("T{i}")).collect();
                init.push(format!("{}{{{}}}", self.places[p], list.join(",")));
            }
        }
        if !init.is_empty() {
            writeln!(out, "init {}", init.join(" ")).unwrap();
        }
        writeln!(out, "initconstraint {}", self.init_constraint).unwrap();
        out
    }

    pub fn render_expr(&self, e: &TimeExpr) -> String {
        let terms: Vec<String> = e.terms.iter().map(|t| self.render_term(t)).collect();
        if terms.len() == 1 {
            terms.into_iter().next().unwrap()
        } else {
            format!("max({})", terms.join(", "))
        }
    }

    fn render_term(&self, t: &LinTerm) -> String {
        let mut s = String::new();
        for (r, c) in &t.coeffs {
            let name = match r {
                Ref::Place(p) => self.places[*p].as_str(),
                Ref::Enab => "enab",
            };
            let magnitude = c.abs();
            if s.is_empty() {
                if c.is_negative() {
                    s.push('-');
                }
            } else {
                s.push_str(if c.is_negative() { " - " } else { " + " });
            }
            if !magnitude.is_one() {
                write!(s, "{magnitude}*").unwrap();
            }
            s.push_str(name);
        }
        if s.is_empty() {
            return t.offset.to_string();
        }
        if t.offset.is_positive() {
            write!(s, " + {}", t.offset).unwrap();
        } else if t.offset.is_negative() {
            write!(s, " - {}", -t.offset.clone()).unwrap();
        }
        s
    }
}

struct RawTransition {
    line: usize,
    name: String,
    semantics: Semantics,
    pre: Vec<String>,
    post: Vec<String>,
    lb: Vec<RawTerm>,
    ub: Vec<RawTerm>,
}

/// A linear term with unresolved names; `None` stands for `enab`.
type RawTerm = (Vec<(Option<String>, Rational)>, Rational);

pub fn parse_net(text: &str) -> Result<Net, NetError> {
    let mut name = None;
    let mut places: Vec<(String, usize)> = Vec::new();
    let mut raw_transitions: Vec<RawTransition> = Vec::new();
    let mut raw_init: Vec<(usize, String, Vec<u32>)> = Vec::new();
    let mut constraint_lines: Vec<(usize, Vec<(Tok, Pos)>, Pos)> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let toks = tokenize(line, line_no)?;
        let end = Pos {
            line: line_no,
            column: line.chars().count() + 1,
        };
        let mut cur = Cursor::new(toks, end);
        let keyword = cur.expect_ident()?;
        match keyword.as_str() {
            "net" => {
                name = Some(cur.expect_ident()?);
            }
            "place" => {
                while !cur.at_end() {
                    let p = cur.expect_ident()?;
                    cur.eat(&Tok::Comma);
                    places.push((p, line_no));
                }
            }
            "transition" => raw_transitions.push(parse_transition_line(&mut cur, line_no)?),
            "init" => {
                while !cur.at_end() {
                    let p = cur.expect_ident()?;
                    cur.expect(&Tok::LBrace)?;
                    let mut syms = Vec::new();
                    if !cur.eat(&Tok::RBrace) {
                        loop {
                            let pos = cur.pos();
                            let s = cur.expect_ident()?;
                            match s.strip_prefix('T').and_then(|d| d.parse::<u32>().ok()) {
                                Some(i) => syms.push(i),
                                None => {
                                    return Err(NetError::Syntax {
                                        pos,
                                        message: format!("expected a symbol `T<i>`, found `{s}`"),
                                    })
                                }
                            }
                            if cur.eat(&Tok::RBrace) {
                                break;
                            }
                            cur.expect(&Tok::Comma)?;
                        }
                    }
                    raw_init.push((line_no, p, syms));
                }
            }
            "initconstraint" => {
                let rest: Vec<(Tok, Pos)> = std::iter::from_fn(|| {
                    let pos = cur.pos();
                    cur.next().map(|t| (t, pos))
                })
                .collect();
                constraint_lines.push((line_no, rest, end));
            }
            other => {
                return Err(NetError::Syntax {
                    pos: Pos {
                        line: line_no,
                        column: 1,
                    },
                    message: format!("unknown declaration `{other}`"),
                })
            }
        }
        if !cur.at_end() {
            return Err(cur.unexpected("end of line").into());
        }
    }

    let name = name.ok_or(NetError::MissingName)?;
    let mut seen = BTreeSet::new();
    for (p, line) in &places {
        if !seen.insert(p.clone()) {
            return Err(NetError::Duplicate {
                line: *line,
                name: p.clone(),
            });
        }
    }
    let mut place_names: Vec<String> = places.into_iter().map(|(p, _)| p).collect();
    place_names.sort();
    let lookup = |name: &str, line: usize| -> Result<usize, NetError> {
        place_names
            .binary_search_by(|p| p.as_str().cmp(name))
            .map_err(|_| NetError::UnknownPlace {
                line,
                name: name.to_string(),
            })
    };

    let mut transitions = Vec::new();
    let mut tnames = BTreeSet::new();
    for raw in raw_transitions {
        if !tnames.insert(raw.name.clone()) {
            return Err(NetError::Duplicate {
                line: raw.line,
                name: raw.name,
            });
        }
        let resolve_set = |names: &[String]| -> Result<Vec<usize>, NetError> {
            let mut out = Vec::new();
            for n in names {
                let p = lookup(n, raw.line)?;
                if out.contains(&p) {
                    return Err(NetError::Duplicate {
                        line: raw.line,
                        name: n.clone(),
                    });
                }
                out.push(p);
            }
            out.sort();
            Ok(out)
        };
        let pre = resolve_set(&raw.pre)?;
        let post = resolve_set(&raw.post)?;
        if pre.is_empty() {
            return Err(NetError::EmptyPreset {
                transition: raw.name,
            });
        }
        let resolve_expr = |terms: &[RawTerm]| -> Result<TimeExpr, NetError> {
            let mut out = Vec::new();
            for (coeffs, offset) in terms {
                let mut term = LinTerm::constant(offset.clone());
                for (r, c) in coeffs {
                    let r = match r {
                        None => Ref::Enab,
                        Some(n) => {
                            let p = lookup(n, raw.line)?;
                            if !pre.contains(&p) {
                                return Err(NetError::NotInPreset {
                                    transition: raw.name.clone(),
                                    place: n.clone(),
                                });
                            }
                            Ref::Place(p)
                        }
                    };
                    term = term.plus(&LinTerm::reference(r).scaled(c));
                }
                out.push(term);
            }
            Ok(TimeExpr::new(out))
        };
        let lb = resolve_expr(&raw.lb)?;
        let ub = resolve_expr(&raw.ub)?;
        transitions.push(Transition {
            name: raw.name,
            semantics: raw.semantics,
            pre,
            post,
            lb,
            ub,
        });
    }
    transitions.sort_by(|a, b| a.name.cmp(&b.name));

    let mut net = Net {
        name,
        places: place_names.clone(),
        transitions,
        init: vec![Vec::new(); place_names.len()],
        init_constraint: Conj::top(),
    };
    for t in &net.transitions {
        for term in t.lb.terms.iter().chain(&t.ub.terms) {
            if term.coeffs.is_empty() {
                return Err(NetError::AbsoluteTime {
                    transition: t.name.clone(),
                    term: net.render_term(term),
                });
            }
        }
    }
    for (line, p, syms) in raw_init {
        let idx = lookup(&p, line)?;
        net.init[idx].extend(syms);
        net.init[idx].sort();
    }
    let init_syms: BTreeSet<u32> = net.init.iter().flatten().copied().collect();
    for (_, toks, end) in constraint_lines {
        let mut cur = Cursor::new(toks, end);
        let resolve = |n: &str| {
            n.strip_prefix('T')
                .and_then(|d| d.parse::<u32>().ok())
                .map(Sym::T)
        };
        let conj = parse_conj_tokens(&mut cur, &resolve)?;
        if !cur.at_end() {
            return Err(cur.unexpected("`&&` or end of line").into());
        }
        net.init_constraint = net.init_constraint.and(&conj);
    }
    for s in net.init_constraint.syms() {
        if !matches!(s, Sym::T(i) if init_syms.contains(&i)) {
            return Err(NetError::UnknownSymbol {
                symbol: s.to_string(),
            });
        }
    }
    let mut with_domain = net.init_constraint.clone();
    for i in &init_syms {
        with_domain.add(Atom::ge(&LinForm::var(Sym::T(*i)), &LinForm::zero()));
    }
    if !with_domain.is_satisfiable() {
        return Err(NetError::UnsatisfiableInit);
    }
    Ok(net)
}

fn parse_transition_line(cur: &mut Cursor, line: usize) -> Result<RawTransition, NetError> {
    let name = cur.expect_ident()?;
    let semantics = if cur.eat_keyword("strong") {
        Semantics::Strong
    } else if cur.eat_keyword("weak") {
        Semantics::Weak
    } else {
        return Err(cur.unexpected("`strong` or `weak`").into());
    };
    let place_list = |cur: &mut Cursor, label: &str| -> Result<Vec<String>, NetError> {
        if !cur.eat_keyword(label) {
            return Err(cur.unexpected(&format!("`{label}:`")).into());
        }
        cur.expect(&Tok::Colon)?;
        let mut out = Vec::new();
        while let Some(Tok::Ident(n)) = cur.peek() {
            if cur.peek_at(1) == Some(&Tok::Colon) {
                break;
            }
            out.push(n.clone());
            cur.next();
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    };
    let pre = place_list(cur, "pre")?;
    let post = place_list(cur, "post")?;
    if !cur.eat_keyword("tf") {
        return Err(cur.unexpected("`tf:`").into());
    }
    cur.expect(&Tok::Colon)?;
    cur.expect(&Tok::LBracket)?;
    let lb = parse_expr(cur)?;
    cur.expect(&Tok::Comma)?;
    let ub = parse_expr(cur)?;
    cur.expect(&Tok::RBracket)?;
    Ok(RawTransition {
        line,
        name,
        semantics,
        pre,
        post,
        lb,
        ub,
    })
}

/// A set of raw terms whose maximum is the value.
fn parse_expr(cur: &mut Cursor) -> Result<Vec<RawTerm>, NetError> {
    let mut negate = cur.eat(&Tok::Minus);
    let mut acc: Option<Vec<RawTerm>> = None;
    loop {
        let pos = cur.pos();
        let mut factor = parse_factor(cur)?;
        if negate {
            if factor.len() > 1 {
                return Err(NetError::Syntax {
                    pos,
                    message: "negated max is not supported".into(),
                });
            }
            factor = factor
                .into_iter()
                .map(|t| scale_raw(&t, &-Rational::one()))
                .collect();
        }
        acc = Some(match acc {
            None => factor,
            Some(prev) => {
                let mut out = Vec::new();
                for a in &prev {
                    for b in &factor {
                        let mut coeffs = a.0.clone();
                        coeffs.extend(b.0.iter().cloned());
                        out.push((coeffs, &a.1 + &b.1));
                    }
                }
                out
            }
        });
        if cur.eat(&Tok::Plus) {
            negate = false;
        } else if cur.eat(&Tok::Minus) {
            negate = true;
        } else {
            return Ok(acc.unwrap());
        }
    }
}

fn scale_raw(t: &RawTerm, k: &Rational) -> RawTerm {
    (
        t.0.iter().map(|(r, c)| (r.clone(), c * k)).collect(),
        &t.1 * k,
    )
}

fn parse_factor(cur: &mut Cursor) -> Result<Vec<RawTerm>, NetError> {
    match cur.peek().cloned() {
        Some(Tok::Num(_)) => {
            let value = cur.rational_literal()?;
            if cur.eat(&Tok::Star) {
                let inner = parse_factor(cur)?;
                if inner.len() > 1 && value.is_negative() {
                    return Err(cur.error("negated max is not supported").into());
                }
                Ok(inner.iter().map(|t| scale_raw(t, &value)).collect())
            } else {
                Ok(vec![(Vec::new(), value)])
            }
        }
        Some(Tok::LParen) => {
            cur.next();
            let inner = parse_expr(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(inner)
        }
        Some(Tok::Ident(name)) => {
            let pos = cur.pos();
            cur.next();
            if name == "min" {
                return Err(NetError::Syntax {
                    pos,
                    message: "`min` is not supported".into(),
                });
            }
            if name == "max" && cur.peek() == Some(&Tok::LParen) {
                cur.next();
                // `max({a, b})` is accepted as well as `max(a, b)`
                let braced = cur.eat(&Tok::LBrace);
                let mut terms = parse_expr(cur)?;
                while cur.eat(&Tok::Comma) {
                    terms.extend(parse_expr(cur)?);
                }
                if braced {
                    cur.expect(&Tok::RBrace)?;
                }
                cur.expect(&Tok::RParen)?;
                return Ok(terms);
            }
            let r = if name == "enab" { None } else { Some(name) };
            Ok(vec![(vec![(r, Rational::one())], Rational::zero())])
        }
        _ => Err(cur.unexpected("a time expression").into()),
    }
}

impl fmt::Display for Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// A concrete marking: exact stamps per place plus the last firing time.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrdinaryMarking {
    /// Sorted stamps per place.
    pub tokens: Vec<Vec<Rational>>,
    pub last_fire: Rational,
}

impl OrdinaryMarking {
    pub fn counts(&self) -> Vec<usize> {
        self.tokens.iter().map(Vec::len).collect()
    }

    pub fn render(&self, net: &Net) -> String {
        let mut parts = Vec::new();
        for (p, stamps) in self.tokens.iter().enumerate() {
            if !stamps.is_empty() {
                let list: Vec<String> = stamps.iter().map(|s| s.to_string()).collect();
                parts.push(format!("{}{{{}}}", net.places[p], list.join(",")));
            }
        }
        format!("{} @ {}", parts.join(" "), self.last_fire)
    }
}

/// One token choice per preset place (in preset order) with its firing window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteEnabling {
    pub transition: usize,
    pub tuple: Vec<Rational>,
    pub earliest: Rational,
    pub latest: Rational,
}

/// Every distinct enabling tuple of every transition whose firing window is non-empty.
pub fn concrete_enablings(m: &OrdinaryMarking, net: &Net) -> Vec<ConcreteEnabling> {
    let mut out = Vec::new();
    for (ti, t) in net.transitions.iter().enumerate() {
        let choices: Vec<Vec<Rational>> = t
            .pre
            .iter()
            .map(|p| {
                let mut v = m.tokens[*p].clone();
                v.dedup();
                v
            })
            .collect();
        if choices.iter().any(Vec::is_empty) {
            continue;
        }
        for tuple in cartesian(&choices) {
            let stamp = |p: usize| tuple[t.pre.iter().position(|q| *q == p).unwrap()].clone();
            let enab = tuple.iter().max().unwrap().clone();
            let lb = t.lb.eval(&stamp, &enab);
            let ub = t.ub.eval(&stamp, &enab);
            let earliest = [&m.last_fire, &enab, &lb]
                .into_iter()
                .max()
                .unwrap()
                .clone();
            if earliest <= ub {
                out.push(ConcreteEnabling {
                    transition: ti,
                    tuple: tuple.clone(),
                    earliest,
                    latest: ub,
                });
            }
        }
    }
    out
}

pub(crate) fn cartesian<T: Clone>(choices: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for options in choices {
        let mut next = Vec::with_capacity(out.len() * options.len());
        for prefix in &out {
            for o in options {
                let mut v = prefix.clone();
                v.push(o.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Latest admissible firing time under strong urgency, if any strong tuple is enabled.
pub fn urgency_deadline(enablings: &[ConcreteEnabling], net: &Net) -> Option<Rational> {
    enablings
        .iter()
        .filter(|e| net.transitions[e.transition].is_strong())
        .map(|e| e.latest.clone())
        .min()
}

/// Fires `e` at `time`, which must lie in its window.
pub fn fire_concrete(
    m: &OrdinaryMarking,
    net: &Net,
    e: &ConcreteEnabling,
    time: &Rational,
) -> OrdinaryMarking {
    let t = &net.transitions[e.transition];
    let mut next = m.clone();
    for (p, stamp) in t.pre.iter().zip(&e.tuple) {
        let pos = next.tokens[*p]
            .iter()
            .position(|s| s == stamp)
            .expect("tuple token present");
        next.tokens[*p].remove(pos);
    }
    for p in &t.post {
        let v = &mut next.tokens[*p];
        let at = v.partition_point(|s| s <= time);
        v.insert(at, time.clone());
    }
    next.last_fire = time.clone();
    next
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub transition: usize,
    pub tuple: Vec<Rational>,
    pub time: Rational,
    pub marking: OrdinaryMarking,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub initial: OrdinaryMarking,
    pub steps: Vec<Step>,
}

/// Number of equal slices used when drawing a rational inside an interval.
const GRID: i64 = 20;

fn grid_point(rng: &mut ChaCha8Rng) -> Rational {
    rat(rng.gen_range(0..=GRID), GRID)
}

/// Draws initial stamps satisfying the initial constraint with all stamps non-negative.
pub fn initial_marking(net: &Net, rng: &mut ChaCha8Rng) -> OrdinaryMarking {
    let mut conj = net.init_constraint.clone();
    let syms: BTreeSet<u32> = net.init.iter().flatten().copied().collect();
    for i in &syms {
        conj.add(Atom::ge(&LinForm::var(Sym::T(*i)), &LinForm::zero()));
    }
    let model = conj
        .find_model(|_, lo, hi| pick_between(lo, hi, &grid_point(rng)))
        .expect("initial constraint validated as satisfiable");
    let value = |i: u32| model.get(&Sym::T(i)).cloned().unwrap_or_else(|| int(0));
    let tokens: Vec<Vec<Rational>> = net
        .init
        .iter()
        .map(|syms| {
            let mut v: Vec<Rational> = syms.iter().map(|i| value(*i)).collect();
            v.sort();
            v
        })
        .collect();
    let last_fire = tokens
        .iter()
        .flatten()
        .max()
        .cloned()
        .unwrap_or_else(|| int(0));
    OrdinaryMarking { tokens, last_fire }
}

/// Random run honoring strong urgency. Stops after `max_steps` firings or at a
/// marking with no admissible firing.
pub fn simulate(net: &Net, seed: u64, max_steps: usize) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = initial_marking(net, &mut rng);
    let mut current = initial.clone();
    let mut steps = Vec::new();
    while steps.len() < max_steps {
        let enablings = concrete_enablings(&current, net);
        let deadline = urgency_deadline(&enablings, net);
        let admissible: Vec<&ConcreteEnabling> = enablings
            .iter()
            .filter(|e| deadline.as_ref().is_none_or(|d| e.earliest <= *d))
            .collect();
        if admissible.is_empty() {
            break;
        }
        let e = admissible[rng.gen_range(0..admissible.len())];
        let hi = match &deadline {
            Some(d) if *d < e.latest => d.clone(),
            _ => e.latest.clone(),
        };
        let time = &e.earliest + (&hi - &e.earliest) * grid_point(&mut rng);
        let next = fire_concrete(&current, net, e, &time);
        steps.push(Step {
            transition: e.transition,
            tuple: e.tuple.clone(),
            time,
            marking: next.clone(),
        });
        current = next;
    }
    Trace { initial, steps }
}
