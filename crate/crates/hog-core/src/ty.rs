//! Simple types and type orders.

use std::fmt;

/// A simple type: the ground type of trees, or a function type.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimpleType {
    Ground,
    Arrow(Box<SimpleType>, Box<SimpleType>),
}

impl SimpleType {
    pub fn arrow(dom: SimpleType, cod: SimpleType) -> SimpleType {
        SimpleType::Arrow(Box::new(dom), Box::new(cod))
    }

    /// Builds `k1 -> k2 -> ... -> Ground` from argument types.
    pub fn from_args(args: &[SimpleType]) -> SimpleType {
        args.iter()
            .rev()
            .fold(SimpleType::Ground, |acc, a| SimpleType::arrow(a.clone(), acc))
    }

    /// order(o) = 0, order(k1 -> k2) = max(order(k1)+1, order(k2)).
    pub fn order(&self) -> usize {
        match self {
            SimpleType::Ground => 0,
            SimpleType::Arrow(d, c) => (d.order() + 1).max(c.order()),
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, SimpleType::Ground)
    }

    /// Splits `k1 -> ... -> kn -> o` into (args, Ground).
    pub fn uncurry(&self) -> (Vec<&SimpleType>, &SimpleType) {
        let mut args = Vec::new();
        let mut cur = self;
        while let SimpleType::Arrow(d, c) = cur {
            args.push(d.as_ref());
            cur = c.as_ref();
        }
        (args, cur)
    }
}

impl fmt::Debug for SimpleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for SimpleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimpleType::Ground => write!(f, "o"),
            SimpleType::Arrow(d, c) => {
                if d.is_ground() {
                    write!(f, "o -> {}", c)
                } else {
                    write!(f, "({}) -> {}", d, c)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders() {
        let o = SimpleType::Ground;
        assert_eq!(o.order(), 0);
        let oo = SimpleType::arrow(o.clone(), o.clone());
        assert_eq!(oo.order(), 1);
        // (o -> o) -> o has order 2
        assert_eq!(SimpleType::arrow(oo.clone(), o.clone()).order(), 2);
        // o -> (o -> o) has order 1
        assert_eq!(SimpleType::arrow(o.clone(), oo).order(), 1);
    }
}
