//! Conjunctions of linear constraints over timestamp symbols with exact rational
//! coefficients.
//!
//! Every query (satisfiability, implication, projection, extremum) reduces to
//! Fourier–Motzkin elimination. Equalities are substituted away first; strict
//! inequalities are tracked through every combination step, so all answers are
//! exact over the rationals.
//!
//! A [`Conj`] is kept in a canonical shape: every atom is scaled so that the
//! coefficient of its greatest symbol is `+1`, and all atoms sharing the same
//! coefficient vector are folded into one interval. Duplicate or weaker
//! parallel atoms therefore never survive, and two opposite non-strict bounds
//! that meet become an equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::lexer::{tokenize, Cursor, LexError, Pos, Tok};
use crate::rational::Rational;

/// A constraint symbol. `T(i)` are timestamp symbols, `Tl` the time of the last
/// firing, `Aux` scratch symbols used during elimination and rebasing.
///
/// The anonymous timestamp never appears here: it lives only on markings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    T(u32),
    Tl,
    Aux(u32),
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sym::T(i) => write!(f, "T{i}"),
            Sym::Tl => write!(f, "TL"),
            Sym::Aux(i) => write!(f, "A{i}"),
        }
    }
}

/// `Σ coeff·sym + constant`, with terms sorted by symbol and no zero coefficients.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinForm {
    terms: Vec<(Sym, Rational)>,
    constant: Rational,
}

impl LinForm {
    pub fn zero() -> Self {
        LinForm::default()
    }

    pub fn constant(value: Rational) -> Self {
        LinForm {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(sym: Sym) -> Self {
        LinForm {
            terms: vec![(sym, Rational::one())],
            constant: Rational::zero(),
        }
    }

    /// `sym + offset`
    pub fn offset(sym: Sym, offset: Rational) -> Self {
        LinForm {
            terms: vec![(sym, Rational::one())],
            constant: offset,
        }
    }

    pub fn from_terms(
        terms: impl IntoIterator<Item = (Sym, Rational)>,
        constant: Rational,
    ) -> Self {
        let mut form = LinForm::constant(constant);
        for (sym, coeff) in terms {
            form.add_term(sym, coeff);
        }
        form
    }

    pub fn terms(&self) -> &[(Sym, Rational)] {
        &self.terms
    }

    pub fn constant_part(&self) -> &Rational {
        &self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, sym: Sym) -> Option<&Rational> {
        self.terms
            .binary_search_by(|(s, _)| s.cmp(&sym))
            .ok()
            .map(|i| &self.terms[i].1)
    }

    pub fn syms(&self) -> impl Iterator<Item = Sym> + '_ {
        self.terms.iter().map(|(s, _)| *s)
    }

    pub fn add_term(&mut self, sym: Sym, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.binary_search_by(|(s, _)| s.cmp(&sym)) {
            Ok(i) => {
                self.terms[i].1 += coeff;
                if self.terms[i].1.is_zero() {
                    self.terms.remove(i);
                }
            }
            Err(i) => self.terms.insert(i, (sym, coeff)),
        }
    }

    pub fn add_constant(&mut self, value: &Rational) {
        self.constant += value;
    }

    pub fn plus(&self, other: &LinForm) -> LinForm {
        let mut out = self.clone();
        for (sym, coeff) in &other.terms {
            out.add_term(*sym, coeff.clone());
        }
        out.constant += &other.constant;
        out
    }

    pub fn minus(&self, other: &LinForm) -> LinForm {
        self.plus(&other.scaled(&-Rational::one()))
    }

    pub fn scaled(&self, factor: &Rational) -> LinForm {
        if factor.is_zero() {
            return LinForm::zero();
        }
        LinForm {
            terms: self.terms.iter().map(|(s, c)| (*s, c * factor)).collect(),
            constant: &self.constant * factor,
        }
    }

    pub fn substitute(&self, sym: Sym, by: &LinForm) -> LinForm {
        match self.coeff(sym) {
            None => self.clone(),
            Some(c) => {
                let c = c.clone();
                let mut rest = self.clone();
                rest.add_term(sym, -c.clone());
                rest.plus(&by.scaled(&c))
            }
        }
    }

    pub fn rename(&self, map: &impl Fn(Sym) -> Sym) -> LinForm {
        LinForm::from_terms(
            self.terms.iter().map(|(s, c)| (map(*s), c.clone())),
            self.constant.clone(),
        )
    }

    /// Evaluates under a (partial) assignment; `None` if some symbol is unassigned.
    pub fn eval(&self, value_of: &impl Fn(Sym) -> Option<Rational>) -> Option<Rational> {
        let mut acc = self.constant.clone();
        for (sym, coeff) in &self.terms {
            acc += coeff * value_of(*sym)?;
        }
        Some(acc)
    }
}

fn write_terms<'a>(
    f: &mut fmt::Formatter<'_>,
    terms: impl Iterator<Item = &'a (Sym, Rational)>,
) -> Result<bool, fmt::Error> {
    let mut first = true;
    for (sym, coeff) in terms {
        let magnitude = coeff.abs();
        if first {
            if coeff.is_negative() {
                write!(f, "-")?;
            }
        } else if coeff.is_negative() {
            write!(f, " - ")?;
        } else {
            write!(f, " + ")?;
        }
        if magnitude.is_one() {
            write!(f, "{sym}")?;
        } else {
            write!(f, "{magnitude}*{sym}")?;
        }
        first = false;
    }
    Ok(!first)
}

impl fmt::Display for LinForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrote = write_terms(f, self.terms.iter().rev())?;
        if !wrote {
            write!(f, "{}", self.constant)
        } else if self.constant.is_negative() {
            write!(f, " - {}", -self.constant.clone())
        } else if !self.constant.is_zero() {
            write!(f, " + {}", self.constant)
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Le,
    Lt,
    Eq,
}

/// `form REL 0`
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub form: LinForm,
    pub rel: Rel,
}

impl Atom {
    pub fn new(form: LinForm, rel: Rel) -> Self {
        Atom { form, rel }
    }

    /// `lhs <= rhs`
    pub fn le(lhs: &LinForm, rhs: &LinForm) -> Self {
        Atom::new(lhs.minus(rhs), Rel::Le)
    }

    /// `lhs < rhs`
    pub fn lt(lhs: &LinForm, rhs: &LinForm) -> Self {
        Atom::new(lhs.minus(rhs), Rel::Lt)
    }

    /// `lhs >= rhs`
    pub fn ge(lhs: &LinForm, rhs: &LinForm) -> Self {
        Atom::le(rhs, lhs)
    }

    /// `lhs > rhs`
    pub fn gt(lhs: &LinForm, rhs: &LinForm) -> Self {
        Atom::lt(rhs, lhs)
    }

    /// `lhs = rhs`
    pub fn eq(lhs: &LinForm, rhs: &LinForm) -> Self {
        Atom::new(lhs.minus(rhs), Rel::Eq)
    }

    /// Complement as a disjunction of atoms.
    pub fn negate(&self) -> Vec<Atom> {
        let neg = self.form.scaled(&-Rational::one());
        match self.rel {
            Rel::Le => vec![Atom::new(neg, Rel::Lt)],
            Rel::Lt => vec![Atom::new(neg, Rel::Le)],
            Rel::Eq => vec![
                Atom::new(self.form.clone(), Rel::Lt),
                Atom::new(neg, Rel::Lt),
            ],
        }
    }

    pub fn holds(&self, value_of: &impl Fn(Sym) -> Option<Rational>) -> Option<bool> {
        let v = self.form.eval(value_of)?;
        Some(match self.rel {
            Rel::Le => !v.is_positive(),
            Rel::Lt => v.is_negative(),
            Rel::Eq => v.is_zero(),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.rel {
            Rel::Le => "<=",
            Rel::Lt => "<",
            Rel::Eq => "=",
        };
        write!(f, "{} {op} 0", self.form)
    }
}

/// A lower or upper limit of a linear form over the models of a constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Infinite,
    Closed(Rational),
    Open(Rational),
}

impl Endpoint {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            Endpoint::Infinite => None,
            Endpoint::Closed(v) | Endpoint::Open(v) => Some(v),
        }
    }

    pub fn is_open(&self) -> bool {
        matches!(self, Endpoint::Open(_))
    }

    fn from_bound(bound: Option<&Bound>) -> Endpoint {
        match bound {
            None => Endpoint::Infinite,
            Some(b) if b.strict => Endpoint::Open(b.value.clone()),
            Some(b) => Endpoint::Closed(b.value.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Bound {
    value: Rational,
    strict: bool,
}

/// Allowed values of one coefficient vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
struct Range {
    lo: Option<Bound>,
    hi: Option<Bound>,
}

impl Range {
    fn is_point(&self) -> bool {
        matches!((&self.lo, &self.hi), (Some(l), Some(h)) if l.value == h.value && !l.strict && !h.strict)
    }

    fn is_empty(&self) -> bool {
        match (&self.lo, &self.hi) {
            (Some(l), Some(h)) => {
                l.value > h.value || (l.value == h.value && (l.strict || h.strict))
            }
            _ => false,
        }
    }

    fn tighten_lo(&mut self, b: Bound) {
        let replace = match &self.lo {
            None => true,
            Some(cur) => b.value > cur.value || (b.value == cur.value && b.strict && !cur.strict),
        };
        if replace {
            self.lo = Some(b);
        }
    }

    fn tighten_hi(&mut self, b: Bound) {
        let replace = match &self.hi {
            None => true,
            Some(cur) => b.value < cur.value || (b.value == cur.value && b.strict && !cur.strict),
        };
        if replace {
            self.hi = Some(b);
        }
    }

    /// Whether every value in `[lower, upper]` lies in this range.
    fn contains_extent(&self, lower: &Endpoint, upper: &Endpoint) -> bool {
        let lo_ok = match &self.lo {
            None => true,
            Some(b) => match lower {
                Endpoint::Infinite => false,
                Endpoint::Closed(v) => *v > b.value || (*v == b.value && !b.strict),
                Endpoint::Open(v) => *v >= b.value,
            },
        };
        let hi_ok = match &self.hi {
            None => true,
            Some(b) => match upper {
                Endpoint::Infinite => false,
                Endpoint::Closed(v) => *v < b.value || (*v == b.value && !b.strict),
                Endpoint::Open(v) => *v <= b.value,
            },
        };
        lo_ok && hi_ok
    }

    fn within(&self, other: &Range) -> bool {
        other.contains_extent(
            &Endpoint::from_bound(self.lo.as_ref()),
            &Endpoint::from_bound(self.hi.as_ref()),
        )
    }
}

type Key = Vec<(Sym, Rational)>;

/// Scales an atom so its greatest symbol has coefficient +1. Returns the
/// coefficient vector and the resulting range, or the truth value of a
/// symbol-free atom.
fn canonical(atom: &Atom) -> Result<(Key, Range), bool> {
    let form = &atom.form;
    let Some((_, lead)) = form.terms.last() else {
        let c = &form.constant;
        return Err(match atom.rel {
            Rel::Le => !c.is_positive(),
            Rel::Lt => c.is_negative(),
            Rel::Eq => c.is_zero(),
        });
    };
    let positive = lead.is_positive();
    let scale = lead.recip();
    let key: Key = form.terms.iter().map(|(s, c)| (*s, c * &scale)).collect();
    // dividing by the lead flips the relation when it is negative
    let v = -(&form.constant * &scale);
    let mut range = Range::default();
    let bound = |strict| {
        Some(Bound {
            value: v.clone(),
            strict,
        })
    };
    match (atom.rel, positive) {
        (Rel::Eq, _) => {
            range.lo = bound(false);
            range.hi = bound(false);
        }
        (Rel::Le, true) => range.hi = bound(false),
        (Rel::Lt, true) => range.hi = bound(true),
        (Rel::Le, false) => range.lo = bound(false),
        (Rel::Lt, false) => range.lo = bound(true),
    }
    Ok((key, range))
}

fn key_form(key: &Key) -> LinForm {
    LinForm {
        terms: key.clone(),
        constant: Rational::zero(),
    }
}

fn row_atoms(key: &Key, range: &Range) -> Vec<Atom> {
    let form = key_form(key);
    if range.is_point() {
        let v = &range.lo.as_ref().unwrap().value;
        return vec![Atom::eq(&form, &LinForm::constant(v.clone()))];
    }
    let mut out = Vec::with_capacity(2);
    if let Some(b) = &range.lo {
        let bound = LinForm::constant(b.value.clone());
        out.push(if b.strict {
            Atom::gt(&form, &bound)
        } else {
            Atom::ge(&form, &bound)
        });
    }
    if let Some(b) = &range.hi {
        let bound = LinForm::constant(b.value.clone());
        out.push(if b.strict {
            Atom::lt(&form, &bound)
        } else {
            Atom::le(&form, &bound)
        });
    }
    out
}

/// A conjunction of linear atoms. The empty conjunction is `true`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Conj {
    rows: BTreeMap<Key, Range>,
    unsat: bool,
}

impl Conj {
    pub fn top() -> Self {
        Conj::default()
    }

    pub fn bottom() -> Self {
        Conj {
            rows: BTreeMap::new(),
            unsat: true,
        }
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut conj = Conj::top();
        for atom in atoms {
            conj.add(atom);
        }
        conj
    }

    /// `true` for the empty conjunction.
    pub fn is_top(&self) -> bool {
        !self.unsat && self.rows.is_empty()
    }

    /// Syntactically false (a contradiction was detected while folding atoms).
    /// A `false` result here is not a satisfiability proof; see [`Conj::is_satisfiable`].
    pub fn is_trivially_false(&self) -> bool {
        self.unsat
    }

    pub fn len(&self) -> usize {
        self.rows
            .values()
            .map(|r| {
                if r.is_point() {
                    1
                } else {
                    r.lo.is_some() as usize + r.hi.is_some() as usize
                }
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn add(&mut self, atom: Atom) {
        if self.unsat {
            return;
        }
        match canonical(&atom) {
            Err(true) => {}
            Err(false) => self.set_false(),
            Ok((key, range)) => self.insert_row(key, range),
        }
    }

    pub fn with(mut self, atom: Atom) -> Self {
        self.add(atom);
        self
    }

    pub fn and(&self, other: &Conj) -> Conj {
        let mut out = self.clone();
        if other.unsat {
            out.set_false();
            return out;
        }
        for (key, range) in &other.rows {
            out.insert_row(key.clone(), range.clone());
        }
        out
    }

    fn set_false(&mut self) {
        self.unsat = true;
        self.rows.clear();
    }

    fn insert_row(&mut self, key: Key, range: Range) {
        if self.unsat {
            return;
        }
        let entry = self.rows.entry(key).or_default();
        if let Some(lo) = range.lo {
            entry.tighten_lo(lo);
        }
        if let Some(hi) = range.hi {
            entry.tighten_hi(hi);
        }
        if entry.is_empty() {
            self.set_false();
        }
    }

    /// The atoms in canonical order. A false conjunction yields the single atom `1 <= 0`.
    pub fn atoms(&self) -> Vec<Atom> {
        if self.unsat {
            return vec![Atom::new(LinForm::constant(Rational::one()), Rel::Le)];
        }
        self.rows
            .iter()
            .flat_map(|(k, r)| row_atoms(k, r))
            .collect()
    }

    pub fn syms(&self) -> BTreeSet<Sym> {
        self.rows
            .keys()
            .flat_map(|k| k.iter().map(|(s, _)| *s))
            .collect()
    }

    pub fn mentions(&self, sym: Sym) -> bool {
        self.rows.keys().any(|k| k.iter().any(|(s, _)| *s == sym))
    }

    pub fn rename(&self, map: &impl Fn(Sym) -> Sym) -> Conj {
        if self.unsat {
            return Conj::bottom();
        }
        Conj::from_atoms(
            self.atoms()
                .into_iter()
                .map(|a| Atom::new(a.form.rename(map), a.rel)),
        )
    }

    pub fn substitute(&self, sym: Sym, by: &LinForm) -> Conj {
        if self.unsat {
            return Conj::bottom();
        }
        Conj::from_atoms(
            self.atoms()
                .into_iter()
                .map(|a| Atom::new(a.form.substitute(sym, by), a.rel)),
        )
    }

    /// Truth value under a full assignment of the mentioned symbols.
    pub fn holds(&self, value_of: &impl Fn(Sym) -> Option<Rational>) -> Option<bool> {
        if self.unsat {
            return Some(false);
        }
        let mut all = true;
        for atom in self.atoms() {
            all &= atom.holds(value_of)?;
        }
        Some(all)
    }

    fn eliminate_one(&self, x: Sym) -> Conj {
        if self.unsat {
            return Conj::bottom();
        }
        // Gaussian step: an equality mentioning x lets us substitute it away.
        let pivot = self
            .rows
            .iter()
            .filter(|(k, r)| r.is_point() && k.iter().any(|(s, _)| *s == x))
            .min_by_key(|(k, _)| k.len());
        if let Some((pivot_key, range)) = pivot {
            let value = range.lo.as_ref().unwrap().value.clone();
            let a = pivot_key.iter().find(|(s, _)| *s == x).unwrap().1.clone();
            let mut expr = LinForm::constant(value);
            for (s, c) in pivot_key {
                if *s != x {
                    expr.add_term(*s, -c.clone());
                }
            }
            let expr = expr.scaled(&a.recip());
            let mut out = Conj::top();
            for (key, range) in &self.rows {
                if key == pivot_key {
                    continue;
                }
                if key.iter().any(|(s, _)| *s == x) {
                    for atom in row_atoms(key, range) {
                        out.add(Atom::new(atom.form.substitute(x, &expr), atom.rel));
                    }
                } else {
                    out.insert_row(key.clone(), range.clone());
                }
                if out.unsat {
                    break;
                }
            }
            return out;
        }

        let mut out = Conj::top();
        let mut uppers: Vec<(LinForm, Rational, bool)> = Vec::new();
        let mut lowers: Vec<(LinForm, Rational, bool)> = Vec::new();
        for (key, range) in &self.rows {
            match key.iter().find(|(s, _)| *s == x) {
                None => out.insert_row(key.clone(), range.clone()),
                Some(_) => {
                    for atom in row_atoms(key, range) {
                        let strict = atom.rel == Rel::Lt;
                        let c = atom.form.coeff(x).unwrap().clone();
                        if c.is_positive() {
                            uppers.push((atom.form, c, strict));
                        } else {
                            lowers.push((atom.form, c, strict));
                        }
                    }
                }
            }
        }
        for (uf, uc, us) in &uppers {
            for (lf, lc, ls) in &lowers {
                if out.unsat {
                    return out;
                }
                // uc > 0, lc < 0: (-lc)·u + uc·l cancels x
                let combined = uf.scaled(&-lc.clone()).plus(&lf.scaled(uc));
                debug_assert!(combined.coeff(x).is_none());
                out.add(Atom::new(
                    combined,
                    if *us || *ls { Rel::Lt } else { Rel::Le },
                ));
            }
        }
        out
    }

    fn elimination_cost(&self, x: Sym) -> usize {
        let (mut pos, mut neg) = (0usize, 0usize);
        for (key, range) in &self.rows {
            if let Some((_, c)) = key.iter().find(|(s, _)| *s == x) {
                let up = range.hi.is_some() as usize;
                let down = range.lo.is_some() as usize;
                if c.is_positive() {
                    pos += up;
                    neg += down;
                } else {
                    pos += down;
                    neg += up;
                }
            }
        }
        (pos * neg).saturating_sub(pos + neg)
    }

    /// Exact projection onto the symbols for which `keep` holds.
    pub fn project(&self, keep: impl Fn(Sym) -> bool) -> Conj {
        let mut current = self.clone();
        loop {
            if current.unsat {
                return Conj::bottom();
            }
            let victims: Vec<Sym> = current.syms().into_iter().filter(|s| !keep(*s)).collect();
            if victims.is_empty() {
                return current;
            }
            let with_eq = victims.iter().copied().find(|v| {
                current
                    .rows
                    .iter()
                    .any(|(k, r)| r.is_point() && k.iter().any(|(s, _)| s == v))
            });
            let pick = with_eq.unwrap_or_else(|| {
                *victims
                    .iter()
                    .min_by_key(|v| (current.elimination_cost(**v), **v))
                    .unwrap()
            });
            current = current.eliminate_one(pick);
        }
    }

    /// Projects away `victims` and drops redundant atoms.
    pub fn eliminate(&self, victims: &BTreeSet<Sym>) -> Conj {
        self.project(|s| !victims.contains(&s)).minimize()
    }

    pub fn is_satisfiable(&self) -> bool {
        !self.project(|_| false).unsat
    }

    /// Exact infimum and supremum of `form` over the models; `None` if unsatisfiable.
    pub fn bounds(&self, form: &LinForm) -> Option<(Endpoint, Endpoint)> {
        if self.unsat {
            return None;
        }
        if form.is_constant() {
            if !self.is_satisfiable() {
                return None;
            }
            let c = form.constant.clone();
            return Some((Endpoint::Closed(c.clone()), Endpoint::Closed(c)));
        }
        let aux = Sym::Aux(u32::MAX);
        let joined = self.clone().with(Atom::eq(&LinForm::var(aux), form));
        let projected = joined.project(|s| s == aux);
        if projected.unsat {
            return None;
        }
        let key: Key = vec![(aux, Rational::one())];
        let range = projected.rows.get(&key).cloned().unwrap_or_default();
        Some((
            Endpoint::from_bound(range.lo.as_ref()),
            Endpoint::from_bound(range.hi.as_ref()),
        ))
    }

    fn range_implied(&self, key: &Key, range: &Range) -> bool {
        if let Some(own) = self.rows.get(key) {
            if own.within(range) {
                return true;
            }
        }
        match self.bounds(&key_form(key)) {
            None => true,
            Some((lo, hi)) => range.contains_extent(&lo, &hi),
        }
    }

    /// Every model of `self` is a model of `other`.
    pub fn implies(&self, other: &Conj) -> bool {
        if other.unsat {
            return !self.is_satisfiable();
        }
        if other.rows.is_empty() {
            return true;
        }
        if !self.is_satisfiable() {
            return true;
        }
        other.rows.iter().all(|(k, r)| self.range_implied(k, r))
    }

    pub fn implies_atom(&self, atom: &Atom) -> bool {
        self.implies(&Conj::top().with(atom.clone()))
    }

    pub fn equivalent(&self, other: &Conj) -> bool {
        self.implies(other) && other.implies(self)
    }

    /// One single-atom conjunction per bound; their union is the complement.
    pub fn negate_to_dnf(&self) -> Vec<Conj> {
        if self.unsat {
            return vec![Conj::top()];
        }
        let mut out = Vec::new();
        for atom in self.atoms() {
            for neg in atom.negate() {
                out.push(Conj::top().with(neg));
            }
        }
        out
    }

    /// Drops atoms implied by the remaining ones, scanning in canonical order.
    pub fn minimize(&self) -> Conj {
        if self.unsat
            || self.rows.len() <= 1
                && self
                    .rows
                    .values()
                    .all(|r| r.lo.is_none() || r.hi.is_none() || r.is_point())
        {
            return self.clone();
        }
        let mut current = self.clone();
        let keys: Vec<Key> = self.rows.keys().cloned().collect();
        for key in keys {
            let range = current.rows[&key].clone();
            if range.is_point() {
                let mut rest = current.clone();
                rest.rows.remove(&key);
                if rest.range_implied(&key, &range) {
                    current = rest;
                }
                continue;
            }
            for side in [false, true] {
                let present = if side {
                    range.hi.is_some()
                } else {
                    range.lo.is_some()
                };
                if !present {
                    continue;
                }
                let mut rest = current.clone();
                let entry = rest.rows.get_mut(&key).unwrap();
                let mut single = Range::default();
                if side {
                    single.hi = entry.hi.take();
                } else {
                    single.lo = entry.lo.take();
                }
                if entry.lo.is_none() && entry.hi.is_none() {
                    rest.rows.remove(&key);
                }
                if rest.range_implied(&key, &single) {
                    current = rest;
                }
            }
        }
        current
    }

    /// Builds one model by fixing symbols in ascending order, each inside its
    /// projected interval. `choose` picks a value strictly inside open ends.
    pub fn find_model(
        &self,
        mut choose: impl FnMut(Sym, &Endpoint, &Endpoint) -> Rational,
    ) -> Option<BTreeMap<Sym, Rational>> {
        if !self.is_satisfiable() {
            return None;
        }
        let syms: Vec<Sym> = self.syms().into_iter().collect();
        let mut current = self.clone();
        let mut model = BTreeMap::new();
        for (i, sym) in syms.iter().enumerate() {
            let later: BTreeSet<Sym> = syms[i + 1..].iter().copied().collect();
            let projected = current.project(|s| !later.contains(&s));
            let (lo, hi) = projected.bounds(&LinForm::var(*sym))?;
            let value = choose(*sym, &lo, &hi);
            current = current.substitute(*sym, &LinForm::constant(value.clone()));
            model.insert(*sym, value);
        }
        debug_assert!(self.holds(&|s| model.get(&s).cloned()).unwrap_or(false));
        Some(model)
    }
}

/// Picks `lo + frac·(hi − lo)`, moving inside open ends and using a unit-width
/// window when an end is infinite. `frac` must lie in `[0, 1]`.
pub fn pick_between(lo: &Endpoint, hi: &Endpoint, frac: &Rational) -> Rational {
    let one = Rational::one();
    let (a, b) = match (lo.value(), hi.value()) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        (Some(a), None) => (a.clone(), a + &one),
        (None, Some(b)) => (b - &one, b.clone()),
        (None, None) => (Rational::zero(), one.clone()),
    };
    let mut v = &a + (&b - &a) * frac;
    let width = &b - &a;
    if (lo.is_open() && v == a) || (hi.is_open() && v == b) {
        v = &a + width / Rational::from_integer(2.into());
    }
    v
}

impl fmt::Display for Conj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unsat {
            return write!(f, "false");
        }
        if self.rows.is_empty() {
            return write!(f, "true");
        }
        let mut first = true;
        for (key, range) in &self.rows {
            let mut emit = |f: &mut fmt::Formatter<'_>, op: &str, v: &Rational| -> fmt::Result {
                if !first {
                    write!(f, " && ")?;
                }
                first = false;
                write_terms(f, key.iter().rev())?;
                write!(f, " {op} {v}")
            };
            if range.is_point() {
                emit(f, "=", &range.lo.as_ref().unwrap().value)?;
                continue;
            }
            if let Some(b) = &range.lo {
                emit(f, if b.strict { ">" } else { ">=" }, &b.value)?;
            }
            if let Some(b) = &range.hi {
                emit(f, if b.strict { "<" } else { "<=" }, &b.value)?;
            }
        }
        Ok(())
    }
}

/// Parses `true`, `false`, or `&&`-joined (possibly chained) comparisons over
/// `T<i>`, `TL`, `A<i>` and rational constants.
pub fn parse_conj(text: &str) -> Result<Conj, LexError> {
    let toks = tokenize(text, 1)?;
    let end = Pos {
        line: 1,
        column: text.chars().count() + 1,
    };
    let mut cur = Cursor::new(toks, end);
    let conj = parse_conj_tokens(&mut cur, &|name| parse_sym_name(name))?;
    if !cur.at_end() {
        return Err(cur.unexpected("`&&` or end of constraint"));
    }
    Ok(conj)
}

pub fn parse_sym_name(name: &str) -> Option<Sym> {
    if name == "TL" {
        return Some(Sym::Tl);
    }
    let (prefix, digits) = name.split_at(1);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let index: u32 = digits.parse().ok()?;
    match prefix {
        "T" => Some(Sym::T(index)),
        "A" => Some(Sym::Aux(index)),
        _ => None,
    }
}

/// Shared by the constraint parser and the net's `initconstraint` line.
pub(crate) fn parse_conj_tokens(
    cur: &mut Cursor,
    resolve: &dyn Fn(&str) -> Option<Sym>,
) -> Result<Conj, LexError> {
    if cur.eat_keyword("true") {
        return Ok(Conj::top());
    }
    if cur.eat_keyword("false") {
        return Ok(Conj::bottom());
    }
    let mut conj = Conj::top();
    loop {
        let mut lhs = parse_lin(cur, resolve)?;
        let mut any = false;
        loop {
            let rel = match cur.peek() {
                Some(Tok::Le) => Tok::Le,
                Some(Tok::Lt) => Tok::Lt,
                Some(Tok::Ge) => Tok::Ge,
                Some(Tok::Gt) => Tok::Gt,
                Some(Tok::Eq) => Tok::Eq,
                _ => break,
            };
            cur.next();
            let rhs = parse_lin(cur, resolve)?;
            conj.add(match rel {
                Tok::Le => Atom::le(&lhs, &rhs),
                Tok::Lt => Atom::lt(&lhs, &rhs),
                Tok::Ge => Atom::ge(&lhs, &rhs),
                Tok::Gt => Atom::gt(&lhs, &rhs),
                _ => Atom::eq(&lhs, &rhs),
            });
            lhs = rhs;
            any = true;
        }
        if !any {
            return Err(cur.unexpected("a comparison operator"));
        }
        if !cur.eat(&Tok::And) {
            return Ok(conj);
        }
    }
}

fn parse_lin(cur: &mut Cursor, resolve: &dyn Fn(&str) -> Option<Sym>) -> Result<LinForm, LexError> {
    let mut form = LinForm::zero();
    let mut sign = Rational::one();
    if cur.eat(&Tok::Minus) {
        sign = -sign;
    }
    loop {
        let term = parse_lin_term(cur, resolve)?;
        form = form.plus(&term.scaled(&sign));
        if cur.eat(&Tok::Plus) {
            sign = Rational::one();
        } else if cur.eat(&Tok::Minus) {
            sign = -Rational::one();
        } else {
            return Ok(form);
        }
    }
}

fn parse_lin_term(
    cur: &mut Cursor,
    resolve: &dyn Fn(&str) -> Option<Sym>,
) -> Result<LinForm, LexError> {
    match cur.peek() {
        Some(Tok::Num(_)) => {
            let value = cur.rational_literal()?;
            if cur.eat(&Tok::Star) {
                let pos = cur.pos();
                let name = cur.expect_ident()?;
                let sym = resolve(&name).ok_or_else(|| LexError {
                    pos,
                    message: format!("unknown symbol `{name}`"),
                })?;
                Ok(LinForm::var(sym).scaled(&value))
            } else {
                Ok(LinForm::constant(value))
            }
        }
        Some(Tok::Ident(_)) => {
            let pos = cur.pos();
            let name = cur.expect_ident()?;
            let sym = resolve(&name).ok_or_else(|| LexError {
                pos,
                message: format!("unknown symbol `{name}`"),
            })?;
            Ok(LinForm::var(sym))
        }
        _ => Err(cur.unexpected("a number or symbol")),
    }
}
