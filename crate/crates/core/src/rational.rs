//! Exact fractions for homophily values.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Serialize, Serializer};

/// Exact rational number. Edge counts comfortably fit in `i128` products.
pub type Rational = Ratio<i128>;

pub fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(num as i128, den as i128)
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `"num/den"` rendering used in reports.
pub fn to_fraction_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// A rational serialized as `{"ratio": "num/den", "value": float}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalValue(pub Rational);

impl From<Rational> for RationalValue {
    fn from(r: Rational) -> Self {
        RationalValue(r)
    }
}

impl Serialize for RationalValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Rational", 2)?;
        s.serialize_field("ratio", &to_fraction_string(&self.0))?;
        s.serialize_field("value", &to_f64(&self.0))?;
        s.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_both_forms() {
        let v = RationalValue(ratio(2, 6));
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"ratio":"1/3","value":0.3333333333333333}"#);
    }
}
