use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{Name, Qualifier, Type};

/// `Gamma; xss; ys`. The mutable group is implicit: every `mut` variable
/// not placed in one of `groups`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeContext {
    pub gamma: BTreeMap<Name, Type>,
    pub groups: Vec<BTreeSet<Name>>,
    pub restricted: BTreeSet<Name>,
}

impl TypeContext {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_vars<'a>(vars: impl IntoIterator<Item = (&'a str, Type)>) -> Self {
        let mut c = Self::empty();
        for (x, t) in vars {
            c.gamma.insert(Name::new(x), t);
        }
        c
    }

    pub fn group(mut self, xs: &[&str]) -> Self {
        self.groups.push(xs.iter().map(|x| Name::new(x)).collect());
        self
    }

    pub fn restrict(mut self, xs: &[&str]) -> Self {
        self.restricted.extend(xs.iter().map(|x| Name::new(x)));
        self
    }

    pub fn is_mut(&self, x: &Name) -> bool {
        matches!(self.gamma.get(x), Some(Type::Class(Qualifier::Mut, _)))
    }

    pub fn in_group(&self, x: &Name) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(x))
    }

    pub fn mutable_group(&self) -> BTreeSet<Name> {
        self.gamma
            .iter()
            .filter(|(x, t)| matches!(t, Type::Class(Qualifier::Mut, _)) && self.in_group(x).is_none())
            .map(|(x, _)| x.clone())
            .collect()
    }

    /// Variables of qualifier at least `mut`.
    pub fn dom_ge_mut(&self) -> BTreeSet<Name> {
        self.gamma
            .iter()
            .filter(|(_, t)| t.qualifier().is_some_and(|q| Qualifier::Mut.leq(q)))
            .map(|(x, _)| x.clone())
            .collect()
    }

    /// Type of a variable as seen through the context: grouped `mut`
    /// variables read as `lent`, restricted ones are not visible.
    pub fn lookup(&self, x: &Name) -> Option<Type> {
        if self.restricted.contains(x) {
            return None;
        }
        let t = self.gamma.get(x)?;
        match t {
            Type::Class(Qualifier::Mut, c) if self.in_group(x).is_some() => {
                Some(Type::Class(Qualifier::Lent, c.clone()))
            }
            t => Some(t.clone()),
        }
    }

    pub(crate) fn push_group(&mut self, g: BTreeSet<Name>) {
        if !g.is_empty() {
            self.groups.push(g);
        }
    }

    /// The current mutable group becomes lent; nothing is mutable.
    pub fn recover_capsule(&self) -> TypeContext {
        let mut c = self.clone();
        c.push_group(self.mutable_group());
        c
    }

    pub fn recover_imm(&self) -> TypeContext {
        let mut c = self.recover_capsule();
        c.restricted = self.dom_ge_mut();
        c
    }

    /// Swaps the mutable group with the lent group containing `member`,
    /// or with the empty group when `member` is `None`.
    pub fn swap(&self, member: Option<&Name>) -> Option<TypeContext> {
        let mut c = self.clone();
        let old = self.mutable_group();
        if let Some(x) = member {
            let i = self.in_group(x)?;
            if self.groups[i].iter().any(|y| self.restricted.contains(y)) {
                return None;
            }
            c.groups.remove(i);
        } else if old.is_empty() {
            return None;
        }
        c.push_group(old);
        Some(c)
    }

    pub fn unrestrict(&self) -> TypeContext {
        let mut c = self.clone();
        c.restricted.clear();
        c
    }

    /// Removes the given names everywhere, as the block rule does for
    /// local declarations.
    pub fn without(&self, names: &BTreeSet<Name>) -> TypeContext {
        let mut c = self.clone();
        c.gamma.retain(|x, _| !names.contains(x));
        for g in &mut c.groups {
            g.retain(|x| !names.contains(x));
        }
        c.groups.retain(|g| !g.is_empty());
        c.restricted.retain(|x| !names.contains(x));
        c
    }

    /// Canonical form: groups sorted, empty groups dropped.
    pub fn normalized(&self) -> TypeContext {
        let mut c = self.clone();
        c.groups.retain(|g| !g.is_empty());
        c.groups.sort();
        c
    }

    pub fn equivalent(&self, other: &TypeContext) -> bool {
        self.normalized() == other.normalized()
    }
}

/// Groups contain only `mut` variables and are disjoint; restricted
/// variables have qualifier at least `mut`, and restricted `mut`
/// variables sit in a lent group.
pub fn wf_context(ctx: &TypeContext) -> bool {
    let mut seen = BTreeSet::new();
    for g in &ctx.groups {
        for x in g {
            if !ctx.is_mut(x) || !seen.insert(x.clone()) {
                return false;
            }
        }
    }
    ctx.restricted.iter().all(|y| match ctx.gamma.get(y) {
        Some(Type::Class(Qualifier::Mut, _)) => seen.contains(y),
        Some(Type::Class(q, _)) => Qualifier::Mut.leq(*q),
        _ => false,
    })
}

impl fmt::Display for TypeContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (x, t) in &self.gamma {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{}:{}", x, t)?;
        }
        f.write_str("; ")?;
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write_set(f, g)?;
        }
        f.write_str("; mutable ")?;
        write_set(f, &self.mutable_group())?;
        f.write_str("; restricted ")?;
        write_set(f, &self.restricted)
    }
}

fn write_set(f: &mut fmt::Formatter<'_>, s: &BTreeSet<Name>) -> fmt::Result {
    f.write_str("{")?;
    for (i, x) in s.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{}", x)?;
    }
    f.write_str("}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(c: &str) -> Type {
        Type::class(Qualifier::Mut, c)
    }

    #[test]
    fn mutable_group_is_complement() {
        let c =
            TypeContext::with_vars([("x", m("C")), ("y", m("C")), ("z", Type::class(Qualifier::Imm, "C"))])
                .group(&["x"]);
        assert_eq!(c.mutable_group().into_iter().collect::<Vec<_>>(), alloc::vec![Name::new("y")]);
        assert_eq!(c.lookup(&Name::new("x")), Some(Type::class(Qualifier::Lent, "C")));
    }

    #[test]
    fn wellformedness() {
        let base = TypeContext::with_vars([("x", m("C")), ("r", Type::class(Qualifier::Read, "C"))]);
        assert!(wf_context(&base));
        assert!(!wf_context(&base.clone().restrict(&["x"])));
        assert!(wf_context(&base.clone().group(&["x"]).restrict(&["x", "r"])));
        assert!(!wf_context(&base.clone().group(&["r"])));
        assert!(!wf_context(&base.group(&["x"]).group(&["x"])));
    }

    #[test]
    fn swap_refuses_restricted_group() {
        let c = TypeContext::with_vars([("x", m("C")), ("w", m("C"))]).group(&["x", "w"]).restrict(&["w"]);
        assert!(c.swap(Some(&Name::new("x"))).is_none());
        assert!(c.unrestrict().swap(Some(&Name::new("x"))).is_some());
    }
}
