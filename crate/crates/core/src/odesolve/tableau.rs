use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Explicit fixed-step Runge–Kutta methods shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Midpoint,
    Rk4,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Euler, Method::Midpoint, Method::Rk4];

    pub fn order(self) -> u32 {
        match self {
            Method::Euler => 1,
            Method::Midpoint => 2,
            Method::Rk4 => 4,
        }
    }

    pub fn stages(self) -> usize {
        match self {
            Method::Euler => 1,
            Method::Midpoint => 2,
            Method::Rk4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Midpoint => "midpoint",
            Method::Rk4 => "rk4",
        }
    }

    pub fn tableau<T: Scalar>(self) -> ButcherTableau<T> {
        let l = T::lit;
        match self {
            Method::Euler => ButcherTableau {
                a: vec![vec![]],
                b: vec![l(1.0)],
                c: vec![l(0.0)],
                order: 1,
            },
            Method::Midpoint => ButcherTableau {
                a: vec![vec![], vec![l(0.5)]],
                b: vec![l(0.0), l(1.0)],
                c: vec![l(0.0), l(0.5)],
                order: 2,
            },
            // Classical fourth-order scheme.
            Method::Rk4 => ButcherTableau {
                a: vec![vec![], vec![l(0.5)], vec![l(0.0), l(0.5)], vec![l(0.0), l(0.0), l(1.0)]],
                b: vec![l(1.0 / 6.0), l(1.0 / 3.0), l(1.0 / 3.0), l(1.0 / 6.0)],
                c: vec![l(0.0), l(0.5), l(0.5), l(1.0)],
                order: 4,
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Method::Euler),
            "midpoint" => Ok(Method::Midpoint),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::InvalidConfig(format!("unknown solver `{other}`"))),
        }
    }
}

/// Coefficients of an explicit Runge–Kutta method. Row `i` of `a` holds the `i`
/// coefficients strictly below the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub order: u32,
}

impl<T: Scalar> ButcherTableau<T> {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Checks explicitness, `sum(b) = 1` and `c_i = sum_j a_ij` to within `tol`.
    pub fn validate(&self, tol: T) -> Result<()> {
        let s = self.stages();
        if self.a.len() != s || self.c.len() != s {
            return Err(Error::InvalidConfig("tableau arrays disagree on stage count".into()));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != i {
                return Err(Error::InvalidConfig(format!(
                    "tableau row {i} is not strictly lower-triangular"
                )));
            }
            let row_sum: T = row.iter().copied().sum();
            if (row_sum - self.c[i]).abs() > tol {
                return Err(Error::InvalidConfig(format!("row-sum condition fails at stage {i}")));
            }
        }
        let b_sum: T = self.b.iter().copied().sum();
        if (b_sum - T::one()).abs() > tol {
            return Err(Error::InvalidConfig("weights do not sum to one".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tableaux_are_consistent() {
        for m in Method::ALL {
            let t = m.tableau::<f64>();
            t.validate(1e-15).unwrap();
            assert_eq!(t.order, m.order());
            assert_eq!(t.stages(), m.stages());
            m.tableau::<f32>().validate(1e-7).unwrap();
        }
    }

    #[test]
    fn broken_tableau_is_rejected() {
        let mut t = Method::Rk4.tableau::<f64>();
        t.b[0] = 0.2;
        assert!(t.validate(1e-12).is_err());
        let mut t = Method::Midpoint.tableau::<f64>();
        t.c[1] = 0.4;
        assert!(t.validate(1e-12).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("dopri5".parse::<Method>().is_err());
    }
}
