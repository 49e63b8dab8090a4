use super::{Atom, Expr, Relation};

/// Merges the atoms of one conjunction per feature.
///
/// Numeric atoms on a feature collapse to the tightest `>` and `<=` bounds;
/// level atoms collapse to one set (intersection of the `IN` / `=` sets
/// minus every `NOT IN` set). An empty interval or set turns the whole
/// conjunction into `FALSE`. Non-atom members are kept as they are. The
/// merged atoms take the place of the feature's first atom.
pub fn simplify_conjunction(items: Vec<Expr>) -> Expr {
    #[derive(Default)]
    struct Bounds {
        lo: Option<f64>,
        hi: Option<f64>,
    }
    #[derive(Default)]
    struct Sets {
        within: Option<Vec<String>>,
        excluded: Vec<String>,
    }
    enum Slot {
        Num(String),
        Lev(String),
        Other(Expr),
    }

    let mut slots: Vec<Slot> = Vec::new();
    let mut bounds: Vec<(String, Bounds)> = Vec::new();
    let mut sets: Vec<(String, Sets)> = Vec::new();

    for item in items {
        let Expr::Atom(a) = item else {
            slots.push(Slot::Other(item));
            continue;
        };
        match a.relation {
            Relation::Le(_) | Relation::Gt(_) => {
                let idx = match bounds.iter().position(|(f, _)| *f == a.feature) {
                    Some(i) => i,
                    None => {
                        slots.push(Slot::Num(a.feature.clone()));
                        bounds.push((a.feature.clone(), Bounds::default()));
                        bounds.len() - 1
                    }
                };
                let b = &mut bounds[idx].1;
                match a.relation {
                    Relation::Le(v) => b.hi = Some(b.hi.map_or(v, |h| h.min(v))),
                    Relation::Gt(v) => b.lo = Some(b.lo.map_or(v, |l| l.max(v))),
                    _ => unreachable!(),
                }
            }
            Relation::In(_) | Relation::NotIn(_) | Relation::Eq(_) => {
                let idx = match sets.iter().position(|(f, _)| *f == a.feature) {
                    Some(i) => i,
                    None => {
                        slots.push(Slot::Lev(a.feature.clone()));
                        sets.push((a.feature.clone(), Sets::default()));
                        sets.len() - 1
                    }
                };
                let s = &mut sets[idx].1;
                let restrict = |s: &mut Sets, allowed: Vec<String>| {
                    s.within = Some(match s.within.take() {
                        None => allowed,
                        Some(w) => w.into_iter().filter(|l| allowed.contains(l)).collect(),
                    });
                };
                match a.relation {
                    Relation::In(v) => restrict(s, v),
                    Relation::Eq(l) => restrict(s, vec![l]),
                    Relation::NotIn(v) => {
                        for l in v {
                            if !s.excluded.contains(&l) {
                                s.excluded.push(l);
                            }
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    let mut out = Vec::new();
    for slot in slots {
        match slot {
            Slot::Other(e) => out.push(e),
            Slot::Num(f) => {
                let b = &bounds.iter().find(|(g, _)| *g == f).unwrap().1;
                if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
                    if lo >= hi {
                        return Expr::False;
                    }
                }
                if let Some(lo) = b.lo {
                    out.push(Expr::Atom(Atom::gt(f.clone(), lo)));
                }
                if let Some(hi) = b.hi {
                    out.push(Expr::Atom(Atom::le(f, hi)));
                }
            }
            Slot::Lev(f) => {
                let s = &sets.iter().find(|(g, _)| *g == f).unwrap().1;
                match &s.within {
                    Some(w) => {
                        let keep: Vec<String> = w.iter().filter(|l| !s.excluded.contains(l)).cloned().collect();
                        match keep.len() {
                            0 => return Expr::False,
                            1 => out.push(Expr::Atom(Atom::eq(f, keep[0].clone()))),
                            _ => out.push(Expr::Atom(Atom::new(f, Relation::In(keep)))),
                        }
                    }
                    None => out.push(Expr::Atom(Atom::new(f, Relation::NotIn(s.excluded.clone())))),
                }
            }
        }
    }
    Expr::and(out)
}

/// Applies [`simplify_conjunction`] inside every conjunction of the
/// expression and removes `TRUE` / `FALSE` constants. Disjunctions are
/// never merged.
pub fn simplify(expr: &Expr) -> Expr {
    match expr {
        Expr::True | Expr::False | Expr::Atom(_) => expr.clone(),
        Expr::And(xs) => {
            let mut items = Vec::new();
            for x in xs {
                match simplify(x) {
                    Expr::True => {}
                    Expr::False => return Expr::False,
                    Expr::And(inner) => items.extend(inner),
                    e => items.push(e),
                }
            }
            simplify_conjunction(items)
        }
        Expr::Or(xs) => {
            let mut items = Vec::new();
            for x in xs {
                match simplify(x) {
                    Expr::False => {}
                    Expr::True => return Expr::True,
                    Expr::Or(inner) => items.extend(inner),
                    e => items.push(e),
                }
            }
            Expr::or(items)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(a: Atom) -> Expr {
        Expr::Atom(a)
    }

    #[test]
    fn repeated_upper_bounds_keep_the_tightest() {
        let e = Expr::And(vec![
            atom(Atom::le("iadl_score_sum", 9.0)),
            atom(Atom::le("iadl_score_sum", 3.0)),
            atom(Atom::le("iadl_score_sum", 1.0)),
            atom(Atom::le("family_3", 2.0)),
        ]);
        assert_eq!(
            simplify(&e),
            Expr::And(vec![atom(Atom::le("iadl_score_sum", 1.0)), atom(Atom::le("family_3", 2.0))])
        );
    }

    #[test]
    fn contradiction_is_false() {
        let e = Expr::And(vec![atom(Atom::le("x", 5.0)), atom(Atom::gt("x", 5.0))]);
        assert_eq!(simplify(&e), Expr::False);
        let e = Expr::And(vec![
            atom(Atom::eq("g", "a")),
            atom(Atom::new("g", Relation::NotIn(vec!["a".into()]))),
        ]);
        assert_eq!(simplify(&e), Expr::False);
    }

    #[test]
    fn level_sets_intersect() {
        let e = Expr::And(vec![
            atom(Atom::new("g", Relation::In(vec!["a".into(), "b".into(), "c".into()]))),
            atom(Atom::new("g", Relation::NotIn(vec!["b".into()]))),
            atom(Atom::new("g", Relation::In(vec!["c".into(), "a".into()]))),
        ]);
        assert_eq!(
            simplify(&e),
            atom(Atom::new("g", Relation::In(vec!["a".into(), "c".into()])))
        );
    }

    #[test]
    fn disjunctions_are_left_alone() {
        let e = Expr::Or(vec![
            Expr::And(vec![atom(Atom::gt("lone_2", 1.0)), atom(Atom::le("work_1", 0.0))]),
            Expr::And(vec![atom(Atom::gt("lone_2", 1.0)), atom(Atom::gt("work_1", 0.0))]),
        ]);
        assert_eq!(simplify(&e), e);
    }
}
