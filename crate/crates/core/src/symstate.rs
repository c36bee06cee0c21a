//! Symbolic states: normal form, rebasing of absolute time, TA replacement,
//! inclusion between states and coverage of concrete markings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::firing::{erase, eval_tf, tuple_choices, Erased};
use crate::lexer::{tokenize, Cursor, LexError, Pos, Tok};
use crate::lincons::{parse_conj_tokens, parse_sym_name, Atom, Conj, Endpoint, LinForm, Sym};
use crate::net::{concrete_enablings, Net, OrdinaryMarking, Ref, TimeExpr, Transition};
use crate::rational::Rational;

/// A marking position: a timestamp symbol or the anonymous timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Ts(u32),
    Ta,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ts(i) => write!(f, "T{i}"),
            Token::Ta => write!(f, "TA"),
        }
    }
}

/// `⟨M, C⟩`. In normal form the symbols on the marking are `T0..Tk-1`, the
/// constraint implies `Ti <= Ti+1`, and `TL` appears in the constraint only
/// when it may differ from `Tk-1`; otherwise it is implicitly equal to it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymState {
    /// Sorted tokens per place.
    pub marking: Vec<Vec<Token>>,
    pub constraint: Conj,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("initial constraint is unsatisfiable")]
    Unsatisfiable,
    #[error("{pos}: {message}")]
    Syntax { pos: Pos, message: String },
}

impl From<LexError> for StateError {
    fn from(e: LexError) -> Self {
        StateError::Syntax {
            pos: e.pos,
            message: e.message,
        }
    }
}

impl SymState {
    /// Number of distinct timestamp symbols, assuming normal form.
    pub fn k(&self) -> u32 {
        self.symbols().last().map_or(0, |i| i + 1)
    }

    pub fn symbols(&self) -> BTreeSet<u32> {
        self.marking
            .iter()
            .flatten()
            .filter_map(|t| match t {
                Token::Ts(i) => Some(*i),
                Token::Ta => None,
            })
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.marking.iter().map(Vec::len).collect()
    }

    pub fn has_ta(&self) -> bool {
        self.marking.iter().flatten().any(|t| *t == Token::Ta)
    }

    pub fn explicit_tl(&self) -> bool {
        self.constraint.mentions(Sym::Tl)
    }

    /// The constraint with `TL` made explicit.
    pub fn full_constraint(&self) -> Conj {
        let k = self.k();
        if k == 0 || self.explicit_tl() {
            return self.constraint.clone();
        }
        self.constraint.clone().with(Atom::eq(
            &LinForm::var(Sym::Tl),
            &LinForm::var(Sym::T(k - 1)),
        ))
    }

    /// Marking text: `Gas{T0} Ignition{TA}`, places in name order, `-` when empty.
    pub fn render_marking(&self, places: &[String]) -> String {
        let mut parts = Vec::new();
        for (p, toks) in self.marking.iter().enumerate() {
            if !toks.is_empty() {
                let list: Vec<String> = toks.iter().map(Token::to_string).collect();
                parts.push(format!("{}{{{}}}", places[p], list.join(",")));
            }
        }
        if parts.is_empty() {
            "-".to_string()
        } else {
            parts.join(" ")
        }
    }

    /// `<marking> ; <constraint>` with `TL` always explicit.
    pub fn render(&self, places: &[String]) -> String {
        format!(
            "{} ; {}",
            self.render_marking(places),
            self.full_constraint()
        )
    }
}

/// Parses the form produced by [`SymState::render`] and restores implicit `TL`.
pub fn parse_state(text: &str, places: &[String], line: usize) -> Result<SymState, StateError> {
    let (marking_text, constraint_text) =
        text.split_once(';').ok_or_else(|| StateError::Syntax {
            pos: Pos { line, column: 1 },
            message: "expected `;`".into(),
        })?;
    let mut marking = vec![Vec::new(); places.len()];
    if marking_text.trim() != "-" {
        let toks = tokenize(marking_text, line)?;
        let mut cur = Cursor::new(
            toks,
            Pos {
                line,
                column: marking_text.len() + 1,
            },
        );
        while !cur.at_end() {
            let pos = cur.pos();
            let name = cur.expect_ident()?;
            let p = places
                .iter()
                .position(|x| *x == name)
                .ok_or_else(|| StateError::Syntax {
                    pos,
                    message: format!("unknown place `{name}`"),
                })?;
            cur.expect(&Tok::LBrace)?;
            loop {
                let pos = cur.pos();
                let s = cur.expect_ident()?;
                let tok = if s == "TA" {
                    Token::Ta
                } else {
                    match parse_sym_name(&s) {
                        Some(Sym::T(i)) => Token::Ts(i),
                        _ => {
                            return Err(StateError::Syntax {
                                pos,
                                message: format!("bad token `{s}`"),
                            })
                        }
                    }
                };
                marking[p].push(tok);
                if cur.eat(&Tok::RBrace) {
                    break;
                }
                cur.expect(&Tok::Comma)?;
            }
            marking[p].sort();
        }
    }
    let offset = marking_text.chars().count() + 1;
    let toks: Vec<(Tok, Pos)> = tokenize(constraint_text, line)?
        .into_iter()
        .map(|(t, p)| {
            (
                t,
                Pos {
                    line,
                    column: p.column + offset,
                },
            )
        })
        .collect();
    let mut cur = Cursor::new(
        toks,
        Pos {
            line,
            column: text.chars().count() + 1,
        },
    );
    let full = parse_conj_tokens(&mut cur, &|n| parse_sym_name(n))?;
    if !cur.at_end() {
        return Err(cur.unexpected("end of constraint").into());
    }
    let mut state = SymState {
        marking,
        constraint: full,
    };
    let k = state.k();
    if k > 0 {
        let newest = LinForm::var(Sym::T(k - 1));
        if state
            .constraint
            .implies_atom(&Atom::eq(&LinForm::var(Sym::Tl), &newest))
        {
            state.constraint = state.constraint.substitute(Sym::Tl, &newest);
        }
    }
    Ok(state)
}

/// Replaces absolute constants with offsets from an auxiliary zero, orders
/// the initial symbols, and returns the normalized initial state (before TA).
pub fn strip_absolute(net: &Net) -> Result<SymState, StateError> {
    let zero = Sym::Aux(0);
    let syms: BTreeSet<u32> = net.init.iter().flatten().copied().collect();
    let rank: BTreeMap<u32, u32> = syms
        .iter()
        .enumerate()
        .map(|(r, s)| (*s, r as u32))
        .collect();
    let rename = |s: Sym| match s {
        Sym::T(i) => Sym::T(rank[&i]),
        other => other,
    };
    let mut conj = Conj::top();
    for atom in net.init_constraint.atoms() {
        let form = atom.form.rename(&rename);
        let weight: Rational = form.terms().iter().map(|(_, c)| c.clone()).sum();
        let mut rebased = form.clone();
        rebased.add_term(zero, -weight);
        conj.add(Atom::new(rebased, atom.rel));
    }
    let k = syms.len() as u32;
    for i in 0..k {
        conj.add(Atom::ge(&LinForm::var(Sym::T(i)), &LinForm::var(zero)));
        if i + 1 < k {
            conj.add(Atom::le(
                &LinForm::var(Sym::T(i)),
                &LinForm::var(Sym::T(i + 1)),
            ));
        }
    }
    if !conj.is_satisfiable() {
        return Err(StateError::Unsatisfiable);
    }
    let marking = net
        .init
        .iter()
        .map(|ss| {
            let mut v: Vec<Token> = ss.iter().map(|s| Token::Ts(rank[s])).collect();
            v.sort();
            v
        })
        .collect();
    Ok(normalize(SymState {
        marking,
        constraint: conj,
    }))
}

/// Brings a raw state into normal form.
///
/// The raw constraint must make `TL` explicit whenever the marking does not
/// hold the newest symbol (the firing rule and [`apply_ta`] guarantee this).
/// Symbols are expected to be numbered in creation order, which is also the
/// order the constraint implies.
pub fn normalize(raw: SymState) -> SymState {
    let SymState {
        mut marking,
        constraint,
    } = raw;
    let on_marking: BTreeSet<u32> = marking
        .iter()
        .flatten()
        .filter_map(|t| if let Token::Ts(i) = t { Some(*i) } else { None })
        .collect();
    let mut conj = constraint.project(|s| match s {
        Sym::T(i) => on_marking.contains(&i),
        Sym::Tl => true,
        Sym::Aux(_) => false,
    });

    // merge symbols the constraint forces to be equal
    let mut order: Vec<u32> = on_marking.into_iter().collect();
    let mut idx = 1;
    while idx < order.len() {
        let (a, b) = (order[idx - 1], order[idx]);
        let diff = LinForm::var(Sym::T(b)).minus(&LinForm::var(Sym::T(a)));
        let equal = matches!(conj.bounds(&diff), Some((Endpoint::Closed(lo), Endpoint::Closed(hi))) if lo.is_zero() && hi.is_zero());
        if equal {
            conj = conj.substitute(Sym::T(b), &LinForm::var(Sym::T(a)));
            for toks in marking.iter_mut() {
                for t in toks.iter_mut() {
                    if *t == Token::Ts(b) {
                        *t = Token::Ts(a);
                    }
                }
            }
            order.remove(idx);
        } else {
            idx += 1;
        }
    }

    let k = order.len() as u32;
    if k == 0 {
        conj = conj.project(|s| s != Sym::Tl);
    } else if conj.mentions(Sym::Tl) {
        let newest = LinForm::var(Sym::T(*order.last().unwrap()));
        if conj.implies_atom(&Atom::le(&LinForm::var(Sym::Tl), &newest)) {
            conj = conj.substitute(Sym::Tl, &newest);
        }
    }

    let rank: BTreeMap<u32, u32> = order
        .iter()
        .enumerate()
        .map(|(r, s)| (*s, r as u32))
        .collect();
    let conj = conj.rename(&|s| match s {
        Sym::T(i) => Sym::T(rank[&i]),
        other => other,
    });
    for toks in marking.iter_mut() {
        for t in toks.iter_mut() {
            if let Token::Ts(i) = t {
                *t = Token::Ts(rank[i]);
            }
        }
        toks.sort();
    }
    SymState {
        marking,
        constraint: conj.minimize(),
    }
}

/// Replaces one occurrence of `Ti` at `place` with `TA` and re-normalizes.
/// Returns `None` if the occurrence is not on the marking.
pub fn apply_ta(s: &SymState, place: usize, sym: u32) -> Option<SymState> {
    let pos = s.marking[place].iter().position(|t| *t == Token::Ts(sym))?;
    let mut marking = s.marking.clone();
    marking[place][pos] = Token::Ta;
    marking[place].sort();
    Some(normalize(SymState {
        marking,
        constraint: s.full_constraint(),
    }))
}

/// Token occurrences `(place, Ti)` whose timestamp provably cannot affect any
/// firing time, in place order then symbol order.
pub fn ta_candidates(s: &SymState, net: &Net) -> Vec<(usize, u32)> {
    let full = s.full_constraint();
    let mut out = Vec::new();
    for (p, toks) in s.marking.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for t in toks {
            if let Token::Ts(i) = t {
                if seen.insert(*i) && replaceable(s, &full, net, p, *i) {
                    out.push((p, *i));
                }
            }
        }
    }
    out
}

/// Repeatedly applies the first TA candidate until none is left.
pub fn apply_ta_heuristics(mut s: SymState, net: &Net) -> SymState {
    while let Some((p, i)) = ta_candidates(&s, net).first().copied() {
        s = apply_ta(&s, p, i).expect("candidate occurrence is on the marking");
    }
    s
}

fn replaceable(s: &SymState, full: &Conj, net: &Net, p: usize, i: u32) -> bool {
    let consumers: Vec<&Transition> = net.consumers(p).collect();
    if consumers.is_empty() {
        // the token can never be consumed
        return true;
    }
    consumers.iter().all(|t| {
        structurally_redundant(s, full, t, p, i) && erasure_preserves_windows(s, full, t, p, i)
    })
}

/// Whether every place `q` holds only concrete tokens provably no older than `Ti`.
fn newer_witness(s: &SymState, full: &Conj, q: usize, i: u32) -> bool {
    let toks = &s.marking[q];
    !toks.is_empty()
        && toks.iter().all(|tok| match tok {
            Token::Ta => false,
            Token::Ts(j) => {
                *j >= i
                    || full.implies_atom(&Atom::ge(
                        &LinForm::var(Sym::T(*j)),
                        &LinForm::var(Sym::T(i)),
                    ))
            }
        })
}

/// Checks each term of `t`'s time function that involves `p` (directly or via
/// `enab`): enab terms need another preset place witnessing a newer token,
/// and a bare `p + c` term must be dominated by another term that survives
/// the erasure.
fn structurally_redundant(s: &SymState, full: &Conj, t: &Transition, p: usize, i: u32) -> bool {
    let witness = |q: usize| q != p && newer_witness(s, full, q, i);
    let enab_safe = t.pre.iter().any(|q| witness(*q));
    let check = |e: &TimeExpr| {
        e.terms.iter().all(|term| {
            let direct = term.mentions(Ref::Place(p));
            let via_enab = term.mentions(Ref::Enab);
            if !direct && !via_enab {
                return true;
            }
            if !direct {
                return enab_safe;
            }
            let bare =
                term.coeffs.len() == 1 && term.coeffs[0].1 == Rational::from_integer(1.into());
            if !bare {
                return false;
            }
            e.terms.iter().any(|other| {
                if other.mentions(Ref::Place(p))
                    || other.coeffs.len() != 1
                    || other.offset < term.offset
                {
                    return false;
                }
                let (r, c) = &other.coeffs[0];
                if *c != Rational::from_integer(1.into()) {
                    return false;
                }
                match r {
                    Ref::Enab => enab_safe,
                    Ref::Place(q) => witness(*q),
                }
            })
        })
    };
    check(&t.lb) && check(&t.ub)
}

/// Tuples of current tokens using `Ti` at `p` (with `p`'s slot fixed).
fn tuples_with(s: &SymState, t: &Transition, p: usize, i: u32) -> (usize, Vec<Vec<Token>>) {
    let mut choices = tuple_choices(s, t);
    let slot = t.pre.iter().position(|q| *q == p).unwrap();
    choices[slot] = vec![Token::Ts(i)];
    if choices.iter().any(Vec::is_empty) {
        return (slot, Vec::new());
    }
    (slot, crate::net::cartesian(&choices))
}

/// In the current state, evaluating `t` with `p`'s token erased yields the
/// same bounds as the full evaluation for every enumerable tuple using `Ti` at `p`.
fn erasure_preserves_windows(s: &SymState, full: &Conj, t: &Transition, p: usize, i: u32) -> bool {
    let (slot, tuples) = tuples_with(s, t, p, i);
    tuples
        .into_iter()
        .all(|tuple| erasure_agrees(full, t, &tuple, slot))
}

fn erasure_agrees(full: &Conj, t: &Transition, tuple: &[Token], slot: usize) -> bool {
    let Some(whole) = eval_tf(t, tuple) else {
        return true;
    };
    let mut erased_tuple = tuple.to_vec();
    erased_tuple[slot] = Token::Ta;
    let Some(erased) = eval_tf(t, &erased_tuple) else {
        return false;
    };
    same_max(full, &whole.lb, &erased.lb) && same_max(full, &whole.ub, &erased.ub)
}

/// Sufficient check that `max(a) = max(b)` on all models of `c`.
fn same_max(c: &Conj, a: &[LinForm], b: &[LinForm]) -> bool {
    let dominated = |xs: &[LinForm], ys: &[LinForm]| {
        xs.iter()
            .all(|x| ys.iter().any(|y| x == y || c.implies_atom(&Atom::le(x, y))))
    };
    dominated(a, b) && dominated(b, a)
}

/// Whether every concrete marking of `small` is a concrete marking of `big`.
///
/// Searches a substitution from `big`'s symbols to `small`'s (not necessarily
/// injective, order-preserving) together with a per-place token matching in
/// which `big`'s TA positions may absorb any token of `small`.
pub fn includes(big: &SymState, small: &SymState) -> bool {
    if big.marking.len() != small.marking.len() || big.counts() != small.counts() {
        return false;
    }
    let big_full = big.full_constraint();
    let small_full = small.full_constraint();
    let mut sigma = BTreeMap::new();
    search_matching(big, small, 0, &mut sigma, &mut |sigma| {
        let mapped = big_full.rename(&|s| match s {
            Sym::T(i) => Sym::T(sigma[&i]),
            other => other,
        });
        small_full.implies(&mapped)
    })
}

fn search_matching(
    big: &SymState,
    small: &SymState,
    place: usize,
    sigma: &mut BTreeMap<u32, u32>,
    accept: &mut dyn FnMut(&BTreeMap<u32, u32>) -> bool,
) -> bool {
    if place == big.marking.len() {
        return monotone(sigma) && accept(sigma);
    }
    let b = &big.marking[place];
    let sm = &small.marking[place];
    let b_ta = b.iter().filter(|t| **t == Token::Ta).count();
    let s_ta = sm.iter().filter(|t| **t == Token::Ta).count();
    if s_ta > b_ta {
        return false;
    }
    let b_ts: Vec<u32> = b
        .iter()
        .filter_map(|t| if let Token::Ts(i) = t { Some(*i) } else { None })
        .collect();
    let s_ts: Vec<u32> = sm
        .iter()
        .filter_map(|t| if let Token::Ts(i) = t { Some(*i) } else { None })
        .collect();
    // big TAs absorb all of small's TAs plus `extra` concrete tokens
    let extra = b_ta - s_ta;
    let mut tried = BTreeSet::new();
    for absorbed in combinations(s_ts.len(), extra) {
        let rest: Vec<u32> = s_ts
            .iter()
            .enumerate()
            .filter(|(j, _)| !absorbed.contains(j))
            .map(|(_, v)| *v)
            .collect();
        if !tried.insert(rest.clone()) {
            continue;
        }
        let mut added = Vec::new();
        let mut ok = true;
        for (bs, ss) in b_ts.iter().zip(&rest) {
            match sigma.get(bs) {
                Some(v) if v != ss => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    sigma.insert(*bs, *ss);
                    added.push(*bs);
                }
            }
        }
        if ok && monotone(sigma) && search_matching(big, small, place + 1, sigma, accept) {
            return true;
        }
        for bs in added {
            sigma.remove(&bs);
        }
    }
    false
}

fn monotone(sigma: &BTreeMap<u32, u32>) -> bool {
    sigma
        .values()
        .zip(sigma.values().skip(1))
        .all(|(a, b)| a <= b)
}

/// All `r`-subsets of `0..n`, as sorted index lists, in lexicographic order.
pub(crate) fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if r > n {
        return out;
    }
    let mut current: Vec<usize> = (0..r).collect();
    loop {
        out.push(current.clone());
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + n - r {
                break;
            }
            if i == 0 && current[0] == n - r {
                return out;
            }
        }
        current[i] += 1;
        for j in i + 1..r {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Whether the concrete marking `m` is represented by `s`: some substitution
/// of `s`'s symbols satisfies the constraint (with `TL` as the last firing
/// time) and reproduces `m`, with TA positions taking the remaining stamps,
/// and every concrete enabling evaluates identically with TA places erased.
pub fn covers_ordinary(s: &SymState, net: &Net, m: &OrdinaryMarking) -> bool {
    if s.counts() != m.counts() {
        return false;
    }
    let full = s.full_constraint();
    let enablings = concrete_enablings(m, net);
    let mut sigma = BTreeMap::new();
    let mut ta_stamps = vec![Vec::new(); net.places.len()];
    cover_search(
        s,
        m,
        0,
        &mut sigma,
        &mut ta_stamps,
        &mut |sigma, ta_stamps| {
            let value = |sym: Sym| match sym {
                Sym::T(i) => sigma.get(&i).cloned(),
                Sym::Tl => Some(m.last_fire.clone()),
                Sym::Aux(_) => None,
            };
            if full.holds(&value) != Some(true) {
                return false;
            }
            enablings
                .iter()
                .all(|e| erased_evaluation_agrees(s, net, e, sigma, ta_stamps))
        },
    )
}

fn cover_search(
    s: &SymState,
    m: &OrdinaryMarking,
    place: usize,
    sigma: &mut BTreeMap<u32, Rational>,
    ta_stamps: &mut Vec<Vec<Rational>>,
    accept: &mut dyn FnMut(&BTreeMap<u32, Rational>, &[Vec<Rational>]) -> bool,
) -> bool {
    if place == s.marking.len() {
        return accept(sigma, ta_stamps);
    }
    let toks = &s.marking[place];
    let stamps = &m.tokens[place];
    let n_ta = toks.iter().filter(|t| **t == Token::Ta).count();
    let ts: Vec<u32> = toks
        .iter()
        .filter_map(|t| if let Token::Ts(i) = t { Some(*i) } else { None })
        .collect();
    let mut tried = BTreeSet::new();
    for absorbed in combinations(stamps.len(), n_ta) {
        let taken: Vec<Rational> = absorbed.iter().map(|j| stamps[*j].clone()).collect();
        if !tried.insert(taken.clone()) {
            continue;
        }
        let rest: Vec<&Rational> = stamps
            .iter()
            .enumerate()
            .filter(|(j, _)| !absorbed.contains(j))
            .map(|(_, v)| v)
            .collect();
        let mut added = Vec::new();
        let mut ok = true;
        for (sym, v) in ts.iter().zip(rest) {
            match sigma.get(sym) {
                Some(x) if x != v => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    sigma.insert(*sym, v.clone());
                    added.push(*sym);
                }
            }
        }
        if ok {
            ta_stamps[place] = taken;
            if cover_search(s, m, place + 1, sigma, ta_stamps, accept) {
                return true;
            }
            ta_stamps[place].clear();
        }
        for sym in added {
            sigma.remove(&sym);
        }
    }
    false
}

/// For every symbolic tuple that `e` instantiates, the erased bounds are
/// well defined and agree with the full ones.
fn erased_evaluation_agrees(
    s: &SymState,
    net: &Net,
    e: &crate::net::ConcreteEnabling,
    sigma: &BTreeMap<u32, Rational>,
    ta_stamps: &[Vec<Rational>],
) -> bool {
    let t = &net.transitions[e.transition];
    let choices: Vec<Vec<Token>> = t
        .pre
        .iter()
        .zip(&e.tuple)
        .map(|(p, v)| {
            let mut opts: Vec<Token> = s.marking[*p]
                .iter()
                .filter(|tok| match tok {
                    Token::Ts(i) => sigma.get(i) == Some(v),
                    Token::Ta => ta_stamps[*p].contains(v),
                })
                .copied()
                .collect();
            opts.dedup();
            opts
        })
        .collect();
    let stamp = |p: usize| e.tuple[t.pre.iter().position(|q| *q == p).unwrap()].clone();
    let enab = e.tuple.iter().max().unwrap().clone();
    let lb = t.lb.eval(&stamp, &enab);
    let ub = t.ub.eval(&stamp, &enab);
    for tuple in crate::net::cartesian(&choices) {
        let victims: Vec<usize> = t
            .pre
            .iter()
            .zip(&tuple)
            .filter(|(_, tok)| **tok == Token::Ta)
            .map(|(p, _)| *p)
            .collect();
        let kept: Vec<Rational> = t
            .pre
            .iter()
            .zip(&e.tuple)
            .filter(|(p, _)| !victims.contains(p))
            .map(|(_, v)| v.clone())
            .collect();
        let enab_kept = kept.iter().max().cloned();
        let eval = |expr: &TimeExpr| -> Option<Rational> {
            match erase(expr, &victims, enab_kept.is_some()) {
                Erased::Undefined => None,
                Erased::Terms(terms) => {
                    let enab = enab_kept.clone().unwrap_or_else(Rational::zero);
                    terms.iter().map(|term| term.eval(&stamp, &enab)).max()
                }
            }
        };
        if eval(&t.lb) != Some(lb.clone()) || eval(&t.ub) != Some(ub.clone()) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lincons::parse_conj;
    use crate::net::parse_net;
    use crate::rational::{int, rat};

    fn fig1() -> Net {
        parse_net(include_str!("../fixtures/fig1.tbn")).unwrap()
    }

    fn state(net: &Net, text: &str) -> SymState {
        parse_state(text, &net.places, 1).unwrap()
    }

    fn raw(net: &Net, marking: &str, constraint: &str) -> SymState {
        let mut m = vec![Vec::new(); net.places.len()];
        for part in marking.split_whitespace() {
            let (p, rest) = part.split_once('{').unwrap();
            for tok in rest.trim_end_matches('}').split(',') {
                m[net.place_index(p).unwrap()].push(if tok == "TA" {
                    Token::Ta
                } else {
                    Token::Ts(tok[1..].parse().unwrap())
                });
            }
            m[net.place_index(p).unwrap()].sort();
        }
        SymState {
            marking: m,
            constraint: parse_conj(constraint).unwrap(),
        }
    }

    #[test]
    fn initial_state_loses_absolute_bounds() {
        let net = fig1();
        let s0 = strip_absolute(&net).unwrap();
        assert!(s0.constraint.is_top());
        assert_eq!(
            s0.render_marking(&net.places),
            "Gas{T0} IGNITE_PHASE_S{T0} Ignition{T0} NoFlame{T0}"
        );
    }

    #[test]
    fn rebasing_two_symbols() {
        let net =
            parse_net("net n\nplace a b\ninit a{T0} b{T1}\ninitconstraint T0 >= 2 && T1 <= 5\n")
                .unwrap();
        let s = strip_absolute(&net).unwrap();
        let expected = parse_conj("T1 - T0 <= 3 && T0 <= T1").unwrap();
        assert!(s.constraint.equivalent(&expected), "{}", s.constraint);
    }

    #[test]
    fn difference_only_constraint_unchanged() {
        let net = parse_net(
            "net n\nplace a b\ninit a{T0} b{T1}\ninitconstraint T1 - T0 >= 1 && T1 - T0 <= 2\n",
        )
        .unwrap();
        let s = strip_absolute(&net).unwrap();
        assert!(s.constraint.equivalent(&net.init_constraint));
    }

    #[test]
    fn normalizes_s10() {
        let net = fig1();
        let r = raw(
            &net,
            "Gas{T1} Ignition{TA} NoFlame{TA}",
            "T1 >= T0 + 1.5 && T1 <= T0 + 1.8 && T2 = T0 + 2 && TL = T2",
        );
        let s = normalize(r);
        assert_eq!(
            s.render_marking(&net.places),
            "Gas{T0} Ignition{TA} NoFlame{TA}"
        );
        assert_eq!(s.constraint.to_string(), "TL - T0 >= 1/5 && TL - T0 <= 1/2");
        assert_eq!(normalize(s.clone()), s);
    }

    #[test]
    fn s3_double_prime_normalizes_to_true() {
        let net = fig1();
        let r = raw(
            &net,
            "Gas{TA} BURN_PHASE_B{TA} Ignition{T1} Flame{T1}",
            "T1 >= T0 + 0.5 && T1 <= T0 + 100.5",
        );
        let s = normalize(r);
        assert!(s.constraint.is_top());
        assert_eq!(
            s.render_marking(&net.places),
            "BURN_PHASE_B{TA} Flame{T0} Gas{TA} Ignition{T0}"
        );
    }

    #[test]
    fn ta_heuristics_reproduce_s3() {
        let net = fig1();
        let s3_prime = normalize(raw(
            &net,
            "Gas{T0} BURN_PHASE_B{T1} Ignition{T0} Flame{T1}",
            "T1 >= T0 && T1 <= T0 + 0.1",
        ));
        let cands = ta_candidates(&s3_prime, &net);
        let burn = net.place_index("BURN_PHASE_B").unwrap();
        let gas = net.place_index("Gas").unwrap();
        assert!(cands.contains(&(burn, 1)));
        assert!(cands.contains(&(gas, 0)));
        let s3 = apply_ta_heuristics(s3_prime, &net);
        assert_eq!(
            s3.render_marking(&net.places),
            "BURN_PHASE_B{TA} Flame{T1} Gas{TA} Ignition{T0}"
        );
        assert!(s3
            .constraint
            .equivalent(&parse_conj("T1 >= T0 && T1 <= T0 + 0.1").unwrap()));
    }

    #[test]
    fn isolated_direct_reference_is_kept() {
        let net = parse_net("net n\nplace a b\ntransition t strong pre: a post: b tf: [ a + 1 , a + 2 ]\ninit a{T0}\ninitconstraint true\n").unwrap();
        let s = strip_absolute(&net).unwrap();
        assert!(ta_candidates(&s, &net).is_empty());
    }

    #[test]
    fn replacing_newest_symbol_keeps_tl() {
        let net =
            parse_net("net n\nplace a b\ninit a{T0} b{T1}\ninitconstraint T1 - T0 <= 1\n").unwrap();
        let s = strip_absolute(&net).unwrap();
        let b = net.place_index("b").unwrap();
        let after = apply_ta(&s, b, 1).unwrap();
        assert_eq!(after.k(), 1);
        assert!(after.explicit_tl());
        assert!(after
            .constraint
            .implies(&parse_conj("TL - T0 <= 1 && TL >= T0").unwrap()));
        let a = net.place_index("a").unwrap();
        let older = apply_ta(&s, a, 0).unwrap();
        assert!(!older.explicit_tl());
        assert!(older.constraint.is_top());
    }

    #[test]
    fn s3_includes_merged_variant() {
        let net = fig1();
        let s3 = state(&net, "BURN_PHASE_B{TA} Flame{T1} Gas{TA} Ignition{T0} ; T1 - T0 >= 0 && T1 - T0 <= 1/10 && TL - T1 = 0");
        let s3pp = state(
            &net,
            "BURN_PHASE_B{TA} Flame{T0} Gas{TA} Ignition{T0} ; TL - T0 = 0",
        );
        assert!(includes(&s3, &s3pp));
        assert!(!includes(&s3pp, &s3));
        assert!(includes(&s3, &s3));
    }

    #[test]
    fn unreduced_loop_states_are_incomparable() {
        let net = fig1();
        let s3p = normalize(raw(
            &net,
            "Gas{T0} BURN_PHASE_B{T1} Ignition{T0} Flame{T1}",
            "T1 >= T0 && T1 <= T0 + 0.1",
        ));
        let s3pp = normalize(raw(
            &net,
            "Gas{T1} BURN_PHASE_B{T0} Ignition{T1} Flame{T1}",
            "T1 >= T0 + 0.5 && T1 <= T0 + 100.5",
        ));
        assert!(!includes(&s3p, &s3pp));
        assert!(!includes(&s3pp, &s3p));
    }

    #[test]
    fn render_and_parse_round_trip() {
        let net = fig1();
        let s = normalize(raw(
            &net,
            "Gas{T1} Ignition{TA} NoFlame{TA}",
            "T1 >= T0 + 1.5 && T1 <= T0 + 1.8 && T2 = T0 + 2 && TL = T2",
        ));
        assert_eq!(
            parse_state(&s.render(&net.places), &net.places, 1).unwrap(),
            s
        );
        let implicit = normalize(raw(
            &net,
            "Gas{T1} IGNITE_PHASE_S{T0}",
            "T1 >= T0 + 1.5 && T1 <= T0 + 1.8",
        ));
        assert!(implicit.render(&net.places).contains("TL - T1 = 0"));
        assert_eq!(
            parse_state(&implicit.render(&net.places), &net.places, 1).unwrap(),
            implicit
        );
    }

    #[test]
    fn s8_covers_concrete_marking() {
        let net = fig1();
        let s8 = normalize(raw(
            &net,
            "IGNITE_PHASE_S{T0} Gas{T1} Ignition{TA} NoFlame{TA}",
            "T1 >= T0 + 1.5 && T1 <= T0 + 1.8",
        ));
        let mut tokens = vec![Vec::new(); net.places.len()];
        tokens[net.place_index("Gas").unwrap()].push(rat(8, 5));
        for p in ["IGNITE_PHASE_S", "Ignition", "NoFlame"] {
            tokens[net.place_index(p).unwrap()].push(int(0));
        }
        let m = OrdinaryMarking {
            tokens: tokens.clone(),
            last_fire: rat(8, 5),
        };
        assert!(covers_ordinary(&s8, &net, &m));
        tokens[net.place_index("Gas").unwrap()] = vec![int(3)];
        let far = OrdinaryMarking {
            tokens,
            last_fire: int(3),
        };
        assert!(!covers_ordinary(&s8, &net, &far));
    }

    #[test]
    fn combinations_enumerate_subsets() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(2, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(1, 2).is_empty());
    }
}
