//! Symbolic enabling and firing.
//!
//! A symbolic enabling pairs a transition and a tuple of marking tokens with
//! the exact condition, over the state symbols, `TL` and the fresh firing
//! symbol `Tk`, under which that tuple fires at `Tk`. Disjunctions coming from
//! `max` upper bounds and from strong urgency are split into separate
//! enablings, each with a purely conjunctive condition.

use std::collections::BTreeSet;

use crate::lincons::{Atom, Conj, Endpoint, LinForm, Sym};
use crate::net::{cartesian, LinTerm, Net, Ref, TimeExpr, Transition};
use crate::symstate::{apply_ta_heuristics, normalize, SymState, Token};

/// Result of erasing places from a time expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Erased {
    Terms(Vec<LinTerm>),
    /// The erasure would leave an operator without operands.
    Undefined,
}

/// Removes references to `victims` (and to `enab` when the tuple has no
/// concrete token left). Inside the maximum a term referring only to erased
/// places is dropped; a term mixing erased and kept references cannot be
/// split and makes the erasure undefined, as does an empty maximum.
pub fn erase(e: &TimeExpr, victims: &[usize], enab_available: bool) -> Erased {
    let is_victim = |r: Ref| match r {
        Ref::Place(p) => victims.contains(&p),
        Ref::Enab => !enab_available,
    };
    let mut kept = Vec::new();
    for term in &e.terms {
        let hit = term.refs().filter(|r| is_victim(*r)).count();
        if hit == 0 {
            kept.push(term.clone());
        } else if hit < term.coeffs.len() {
            return Erased::Undefined;
        }
    }
    if kept.is_empty() {
        Erased::Undefined
    } else {
        Erased::Terms(kept)
    }
}

/// Symbolic lower and upper bound terms; the bound is the maximum of each list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluated {
    pub lb: Vec<LinForm>,
    pub ub: Vec<LinForm>,
}

/// Evaluates `t`'s time function on a tuple (one token per preset place, in
/// preset order). TA places are erased first; `enab` becomes the newest
/// concrete symbol of the tuple. `None` when the erasure is undefined.
pub fn eval_tf(t: &Transition, tuple: &[Token]) -> Option<Evaluated> {
    let victims: Vec<usize> = t
        .pre
        .iter()
        .zip(tuple)
        .filter(|(_, tok)| **tok == Token::Ta)
        .map(|(p, _)| *p)
        .collect();
    let newest = tuple
        .iter()
        .filter_map(|tok| {
            if let Token::Ts(i) = tok {
                Some(*i)
            } else {
                None
            }
        })
        .max();
    let sym_of = |r: Ref| -> Option<Sym> {
        match r {
            Ref::Enab => newest.map(Sym::T),
            Ref::Place(p) => match tuple[t.pre.iter().position(|q| *q == p)?] {
                Token::Ts(i) => Some(Sym::T(i)),
                Token::Ta => None,
            },
        }
    };
    let forms = |e: &TimeExpr| -> Option<Vec<LinForm>> {
        match erase(e, &victims, newest.is_some()) {
            Erased::Undefined => None,
            Erased::Terms(terms) => {
                let set: BTreeSet<LinForm> = terms
                    .iter()
                    .map(|term| term.to_form(&sym_of))
                    .collect::<Option<_>>()?;
                Some(set.into_iter().collect())
            }
        }
    };
    Some(Evaluated {
        lb: forms(&t.lb)?,
        ub: forms(&t.ub)?,
    })
}

/// Distinct tokens available in each preset place of `t`.
pub fn tuple_choices(s: &SymState, t: &Transition) -> Vec<Vec<Token>> {
    t.pre
        .iter()
        .map(|p| {
            let mut v = s.marking[*p].clone();
            v.dedup();
            v
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enabling {
    pub transition: usize,
    pub tuple: Vec<Token>,
    /// The fresh symbol `Tk`.
    pub fire: Sym,
    /// Over the state's symbols, `TL` and `fire`.
    pub condition: Conj,
}

/// Annotation of a graph edge; the head color is decided by the graph builder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeInfo {
    pub transition: usize,
    /// Every marking of the source enables this firing.
    pub tail_black: bool,
    /// Infimum and supremum of the time elapsed since the previous firing.
    pub dmin: Endpoint,
    pub dmax: Endpoint,
}

struct Candidate {
    transition: usize,
    tuple: Vec<Token>,
    strong: bool,
    /// Latest firing time terms (maximum applies).
    ub: Vec<LinForm>,
    /// Earliest firing time terms, `TL` included.
    earliest: Vec<LinForm>,
    branches: Vec<Conj>,
}

/// Every symbolic enabling of `s`, in transition / tuple / branch order.
pub fn enumerate_enablings(s: &SymState, net: &Net) -> Vec<Enabling> {
    let w = s.full_constraint();
    let fire = Sym::T(s.k());
    let f = LinForm::var(fire);
    let tl = LinForm::var(Sym::Tl);

    let mut candidates = Vec::new();
    for (ti, t) in net.transitions.iter().enumerate() {
        let choices = tuple_choices(s, t);
        if choices.iter().any(Vec::is_empty) {
            continue;
        }
        for tuple in cartesian(&choices) {
            let Some(ev) = eval_tf(t, &tuple) else {
                continue;
            };
            let mut base = w.clone().with(Atom::le(&tl, &f));
            for l in &ev.lb {
                base.add(Atom::le(l, &f));
            }
            let mut branches: Vec<Conj> = Vec::new();
            for (i, u) in ev.ub.iter().enumerate() {
                let mut cond = base.clone().with(Atom::le(&f, u));
                for (j, other) in ev.ub.iter().enumerate() {
                    if j != i {
                        cond.add(if j < i {
                            Atom::lt(other, u)
                        } else {
                            Atom::le(other, u)
                        });
                    }
                }
                if cond.is_satisfiable() && !branches.iter().any(|b| b.equivalent(&cond)) {
                    branches.push(cond);
                }
            }
            if branches.is_empty() {
                continue;
            }
            let mut earliest = ev.lb.clone();
            earliest.push(tl.clone());
            candidates.push(Candidate {
                transition: ti,
                tuple,
                strong: t.is_strong(),
                ub: ev.ub,
                earliest,
                branches,
            });
        }
    }

    let mut out = Vec::new();
    for (ci, c) in candidates.iter().enumerate() {
        let rivals: Vec<&Candidate> = candidates
            .iter()
            .enumerate()
            .filter(|(j, o)| *j != ci && o.strong)
            .map(|(_, o)| o)
            .collect();
        let mut conditions: Vec<Conj> = Vec::new();
        for branch in &c.branches {
            for cond in urgency_split(branch, &rivals, &f, &w) {
                if !conditions.iter().any(|k| cond.implies(k)) {
                    conditions.retain(|k| !k.implies(&cond));
                    conditions.push(cond);
                }
            }
        }
        for condition in conditions {
            out.push(Enabling {
                transition: c.transition,
                tuple: c.tuple.clone(),
                fire,
                condition,
            });
        }
    }
    out
}

/// Refines `cond` so that the firing time does not pass the deadline of any
/// strong rival that is enabled in the same concrete marking. For each rival
/// either the firing happens no later than one of its upper terms, or the
/// rival is disabled (some earliest term exceeds all its upper terms).
fn urgency_split(cond: &Conj, rivals: &[&Candidate], f: &LinForm, w: &Conj) -> Vec<Conj> {
    let mut option_sets: Vec<Vec<Conj>> = Vec::new();
    for r in rivals {
        let mut options: Vec<Conj> =
            r.ub.iter()
                .map(|u| Conj::top().with(Atom::le(f, u)))
                .collect();
        let always_enabled = r
            .branches
            .iter()
            .any(|b| w.implies(&b.project(|s| s != f_sym(f))));
        if !always_enabled {
            for l in &r.earliest {
                options.push(Conj::from_atoms(r.ub.iter().map(|u| Atom::gt(l, u))));
            }
        }
        if options.iter().any(|o| cond.implies(o)) {
            continue;
        }
        let live: Vec<Conj> = options
            .into_iter()
            .filter(|o| cond.and(o).is_satisfiable())
            .collect();
        if live.is_empty() {
            return Vec::new();
        }
        option_sets.push(live);
    }
    let mut out = Vec::new();
    extend_options(cond.clone(), &option_sets, &mut out);
    out
}

fn f_sym(f: &LinForm) -> Sym {
    f.terms()[0].0
}

fn extend_options(cond: Conj, sets: &[Vec<Conj>], out: &mut Vec<Conj>) {
    let Some((first, rest)) = sets.split_first() else {
        out.push(cond);
        return;
    };
    if first.iter().any(|o| cond.implies(o)) {
        extend_options(cond, rest, out);
        return;
    }
    for o in first {
        let next = cond.and(o);
        if next.is_satisfiable() {
            extend_options(next, rest, out);
        }
    }
}

/// Fires `e` from `s`: returns the normalized, TA-reduced successor and the
/// edge annotation (head color left to the caller).
pub fn fire(s: &SymState, net: &Net, e: &Enabling, use_ta: bool) -> (SymState, EdgeInfo) {
    let t = &net.transitions[e.transition];
    let Sym::T(k) = e.fire else {
        unreachable!("fresh symbol is a timestamp")
    };
    let mut marking = s.marking.clone();
    for (p, tok) in t.pre.iter().zip(&e.tuple) {
        let pos = marking[*p]
            .iter()
            .position(|x| x == tok)
            .expect("tuple token on marking");
        marking[*p].remove(pos);
    }
    for p in &t.post {
        marking[*p].push(Token::Ts(k));
        marking[*p].sort();
    }

    let projected = e.condition.project(|x| x != e.fire);
    let tail_black = s.full_constraint().implies(&projected);
    let delay = LinForm::var(e.fire).minus(&LinForm::var(Sym::Tl));
    let (dmin, dmax) = e
        .condition
        .bounds(&delay)
        .expect("enabling condition is satisfiable");

    let previous = Sym::Aux(0);
    let constraint = e
        .condition
        .rename(&|x| if x == Sym::Tl { previous } else { x })
        .with(Atom::eq(&LinForm::var(Sym::Tl), &LinForm::var(e.fire)));
    let mut next = normalize(SymState {
        marking,
        constraint,
    });
    if use_ta {
        next = apply_ta_heuristics(next, net);
    }
    (
        next,
        EdgeInfo {
            transition: e.transition,
            tail_black,
            dmin,
            dmax,
        },
    )
}

/// All successors of `s`, one per enabling, in enumeration order.
pub fn successors(s: &SymState, net: &Net, use_ta: bool) -> Vec<(SymState, EdgeInfo)> {
    enumerate_enablings(s, net)
        .iter()
        .map(|e| fire(s, net, e, use_ta))
        .collect()
}
