use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CertError;

/// Credential risk tier. `T0` is the most sensitive; agents hold `T1..T3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    T0,
    T1,
    T2,
    T3,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::T0, Tier::T1, Tier::T2, Tier::T3];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u64) -> Option<Tier> {
        Tier::ALL.get(usize::try_from(i).ok()?).copied()
    }

    /// True when `self` grants no more privilege than `bound`
    /// (e.g. `T2.within(T1)`).
    pub fn within(self, bound: Tier) -> bool {
        self >= bound
    }

    /// One step less privileged, saturating at `T3`.
    pub fn downgraded(self) -> Tier {
        Tier::from_index(u64::from(self.index()) + 1).unwrap_or(Tier::T3)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.index())
    }
}

impl FromStr for Tier {
    type Err = CertError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T0" => Ok(Tier::T0),
            "T1" => Ok(Tier::T1),
            "T2" => Ok(Tier::T2),
            "T3" => Ok(Tier::T3),
            _ => Err(CertError::InvalidField(format!("unknown tier {s:?}"))),
        }
    }
}

/// Non-negative rational rate in requests per second, compared exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(pub Ratio<u64>);

impl Rate {
    pub fn new(numer: u64, denom: u64) -> Result<Rate, CertError> {
        if denom == 0 {
            return Err(CertError::InvalidField("rate denominator is zero".into()));
        }
        Ok(Rate(Ratio::new(numer, denom)))
    }

    pub fn per_second(n: u64) -> Rate {
        Rate(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Rate {
    type Err = CertError;

    /// Accepts `n`, `n/d` or a plain decimal such as `2.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CertError::InvalidField(format!("invalid rate {s:?}"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            return Rate::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        }
        if let Some((whole, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let denom = 10u64.pow(frac.len() as u32);
            let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
            let frac: u64 = frac.parse().map_err(|_| bad())?;
            let numer = whole
                .checked_mul(denom)
                .and_then(|w| w.checked_add(frac))
                .ok_or_else(bad)?;
            return Rate::new(numer, denom);
        }
        Ok(Rate::per_second(s.parse().map_err(|_| bad())?))
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(n) => Ok(Rate::per_second(n)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustConstraints {
    pub max_tier: Tier,
    pub max_depth: u32,
    pub allowed_models: BTreeSet<String>,
    pub max_rate: Rate,
}

impl TrustConstraints {
    pub fn new(max_tier: Tier, max_depth: u32, allowed_models: &[&str], max_rate: Rate) -> Self {
        Self {
            max_tier,
            max_depth,
            allowed_models: allowed_models.iter().map(|s| s.to_string()).collect(),
            max_rate,
        }
    }
}

/// `child ≤ parent`: tier no more privileged, delegation depth strictly
/// smaller, model set a subset, rate no higher.
pub fn constraint_leq(child: &TrustConstraints, parent: &TrustConstraints) -> bool {
    child.max_tier.within(parent.max_tier)
        && child.max_depth < parent.max_depth
        && child.allowed_models.is_subset(&parent.allowed_models)
        && child.max_rate <= parent.max_rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kappa(tier: Tier, depth: u32, models: &[&str], rate: u64) -> TrustConstraints {
        TrustConstraints::new(tier, depth, models, Rate::per_second(rate))
    }

    #[test]
    fn four_clauses() {
        let a = kappa(Tier::T2, 2, &["m1"], 10);
        let b = kappa(Tier::T1, 3, &["m1", "m2"], 10);
        assert!(constraint_leq(&a, &b));
        assert!(!constraint_leq(&b, &b));
        assert!(!constraint_leq(&kappa(Tier::T2, 2, &["m3"], 10), &kappa(Tier::T1, 3, &["m1"], 10)));
        assert!(!constraint_leq(&kappa(Tier::T1, 2, &["m1"], 10), &kappa(Tier::T2, 3, &["m1"], 10)));
        assert!(!constraint_leq(&kappa(Tier::T2, 2, &["m1"], 11), &b));
    }

    #[test]
    fn rates_compare_exactly() {
        let third: Rate = "1/3".parse().unwrap();
        let decimal: Rate = "0.333333333333333333".parse().unwrap();
        assert!(decimal < third);
        assert_eq!("2.5".parse::<Rate>().unwrap(), Rate::new(5, 2).unwrap());
        assert_eq!("10/4".parse::<Rate>().unwrap().to_string(), "5/2");
        assert!("1/0".parse::<Rate>().is_err());
        assert!("x".parse::<Rate>().is_err());
    }

    #[test]
    fn tier_downgrade_saturates() {
        assert_eq!(Tier::T1.downgraded(), Tier::T2);
        assert_eq!(Tier::T2.downgraded(), Tier::T3);
        assert_eq!(Tier::T3.downgraded(), Tier::T3);
    }

    fn arb_constraints() -> impl Strategy<Value = TrustConstraints> {
        (
            0u64..4,
            0u32..6,
            proptest::collection::btree_set("m[0-3]", 0..4),
            0u64..8,
            1u64..4,
        )
            .prop_map(|(t, d, models, n, den)| TrustConstraints {
                max_tier: Tier::from_index(t).unwrap(),
                max_depth: d,
                allowed_models: models,
                max_rate: Rate::new(n, den).unwrap(),
            })
    }

    proptest! {
        #[test]
        fn transitive(a in arb_constraints(), b in arb_constraints(), c in arb_constraints()) {
            if constraint_leq(&a, &b) && constraint_leq(&b, &c) {
                prop_assert!(constraint_leq(&a, &c));
            }
        }

        #[test]
        fn never_symmetric(a in arb_constraints(), b in arb_constraints()) {
            prop_assert!(!(constraint_leq(&a, &b) && constraint_leq(&b, &a)));
        }

        #[test]
        fn irreflexive(a in arb_constraints()) {
            prop_assert!(!constraint_leq(&a, &a));
        }
    }
}
