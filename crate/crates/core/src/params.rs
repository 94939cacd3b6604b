//! Parameter validation and feasible-interval computation.
//!
//! System parameters: churn rate `alpha` (fraction of the system size that
//! may enter or leave per delay-bound window), failure fraction `delta`
//! (fraction of present nodes that may be crashed at any time), and the
//! minimum system size `n_min`. Algorithm parameters: join bound `gamma`
//! and quorum bound `beta`, both fractions of a node's local view.
//!
//! Seven constraints tie them together:
//!
//! 1. `alpha <= 1 - 2^(-1/4)`, evaluated exactly as `2*(1-alpha)^4 >= 1`
//! 2. `((1-alpha)^3 - delta*(1+alpha)^3) * n_min > 1`
//! 3. `gamma >= 1/(n_min*(1-alpha)^3) + (1+delta)*(1+alpha)^3/(1-alpha)^3 - 1`
//! 4. `gamma <= (1-alpha)^3/(1+alpha)^3 - delta`
//! 5. `beta <= (1-alpha)^3/(1+alpha)^2 - delta*(1+alpha)`
//! 6. `beta > ((1+alpha)^5 - 1)/(1-alpha)^4`
//! 7. `beta * (1-alpha)^2 * (1+alpha)^(-2) * (2+2*alpha+alpha^2) >
//!    (1+delta)*(1+alpha)^3 - (1-alpha)^3 + 1`
//!
//! Constraint 7 is also published elsewhere with a `(2-2*alpha+alpha^2)`
//! factor in the denominator; that variant rejects the known-good parameter
//! rows in [`TABLE1`], while the form above accepts them, so the form above
//! is authoritative here. Both are computed and the alternate one is
//! reported informationally as `7-alt`.
//!
//! All evaluation is exact rational arithmetic. Values within `eps` of a
//! violated boundary are graded `Marginal`, which still counts as valid;
//! this is what lets 3-decimal published parameter rows validate.

use crate::rational::{rational_to_string, to_f64, Rat};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("{name} must satisfy 0 <= {name} < 1, got {value}")]
    FractionOutOfRange { name: &'static str, value: String },
    #[error("{name} must satisfy 0 < {name} <= 1, got {value}")]
    BoundOutOfRange { name: &'static str, value: String },
    #[error("n_min must be >= 1")]
    BadNmin,
    #[error("d must be > 0")]
    BadDelay,
    #[error("eps must be >= 0, got {0}")]
    BadEps(String),
}

/// System-level parameters. `d_ticks` is the message-delay bound in
/// simulator ticks; the constraint math never uses it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    pub alpha: Rat,
    pub delta: Rat,
    pub n_min: u64,
    #[serde(default = "default_d_ticks")]
    pub d_ticks: u64,
}

pub fn default_d_ticks() -> u64 {
    1000
}

impl SystemParams {
    pub fn new(alpha: Rat, delta: Rat, n_min: u64, d_ticks: u64) -> Result<Self, ParamError> {
        check_fraction("alpha", &alpha)?;
        check_fraction("delta", &delta)?;
        if n_min < 1 {
            return Err(ParamError::BadNmin);
        }
        if d_ticks == 0 {
            return Err(ParamError::BadDelay);
        }
        Ok(SystemParams { alpha, delta, n_min, d_ticks })
    }

    pub fn validate_fields(&self) -> Result<(), ParamError> {
        check_fraction("alpha", &self.alpha)?;
        check_fraction("delta", &self.delta)?;
        if self.n_min < 1 {
            return Err(ParamError::BadNmin);
        }
        if self.d_ticks == 0 {
            return Err(ParamError::BadDelay);
        }
        Ok(())
    }
}

/// Join bound and quorum bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub gamma: Rat,
    pub beta: Rat,
}

impl AlgoParams {
    pub fn new(gamma: Rat, beta: Rat) -> Result<Self, ParamError> {
        check_bound("gamma", &gamma)?;
        check_bound("beta", &beta)?;
        Ok(AlgoParams { gamma, beta })
    }
}

fn check_fraction(name: &'static str, v: &Rat) -> Result<(), ParamError> {
    if v.0.is_negative() || v.0 >= BigRational::one() {
        return Err(ParamError::FractionOutOfRange { name, value: v.to_string() });
    }
    Ok(())
}

fn check_bound(name: &'static str, v: &Rat) -> Result<(), ParamError> {
    if !v.0.is_positive() || v.0 > BigRational::one() {
        return Err(ParamError::BoundOutOfRange { name, value: v.to_string() });
    }
    Ok(())
}

/// A rational interval with independently strict or inclusive endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Rat,
    pub lo_strict: bool,
    pub hi: Rat,
    pub hi_strict: bool,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.lo.0 > self.hi.0 || (self.lo.0 == self.hi.0 && (self.lo_strict || self.hi_strict))
    }

    pub fn contains(&self, v: &BigRational) -> bool {
        let above_lo = if self.lo_strict { *v > self.lo.0 } else { *v >= self.lo.0 };
        let below_hi = if self.hi_strict { *v < self.hi.0 } else { *v <= self.hi.0 };
        above_lo && below_hi
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return write!(f, "(empty)");
        }
        write!(
            f,
            "{}{:.6}, {:.6}{}",
            if self.lo_strict { '(' } else { '[' },
            to_f64(&self.lo.0),
            to_f64(&self.hi.0),
            if self.hi_strict { ')' } else { ']' },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Marginal,
    Violated,
}

impl Verdict {
    pub fn is_ok(self) -> bool {
        !matches!(self, Verdict::Violated)
    }
}

/// Outcome of one constraint check: the value that was tested, the boundary
/// it was tested against, and the grade.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub id: String,
    pub description: String,
    pub value: Rat,
    pub bound: Rat,
    pub verdict: Verdict,
    /// True when this row is informational only and does not affect the
    /// overall verdict.
    pub informational: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub constraints: Vec<ConstraintReport>,
    pub valid: bool,
}

impl ValidationReport {
    fn from_constraints(constraints: Vec<ConstraintReport>) -> Self {
        let valid = constraints.iter().all(|c| c.informational || c.verdict.is_ok());
        ValidationReport { constraints, valid }
    }

    pub fn first_violation(&self) -> Option<&ConstraintReport> {
        self.constraints.iter().find(|c| !c.informational && !c.verdict.is_ok())
    }
}

#[derive(Debug, Clone, Copy)]
enum Dir {
    /// value >= bound (inclusive) or value > bound (strict)
    AtLeast { strict: bool },
    /// value <= bound (inclusive) or value < bound (strict)
    AtMost { strict: bool },
}

fn grade(value: &BigRational, bound: &BigRational, dir: Dir, eps: &BigRational) -> Verdict {
    let holds = match dir {
        Dir::AtLeast { strict: false } => value >= bound,
        Dir::AtLeast { strict: true } => value > bound,
        Dir::AtMost { strict: false } => value <= bound,
        Dir::AtMost { strict: true } => value < bound,
    };
    if holds {
        Verdict::Satisfied
    } else if eps.is_positive() && (value - bound).abs() <= *eps {
        Verdict::Marginal
    } else {
        Verdict::Violated
    }
}

fn one() -> BigRational {
    BigRational::one()
}

fn powi(base: &BigRational, exp: u32) -> BigRational {
    let mut acc = one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Lower bound for `gamma` (constraint 3), inclusive.
pub fn gamma_lower(alpha: &BigRational, delta: &BigRational, n_min: u64) -> BigRational {
    let om = one() - alpha;
    let op = one() + alpha;
    let om3 = powi(&om, 3);
    let op3 = powi(&op, 3);
    one() / (BigRational::from_integer(BigInt::from(n_min)) * &om3) + (one() + delta) * op3 / om3
        - one()
}

/// Upper bound for `gamma` (constraint 4), inclusive.
pub fn gamma_upper(alpha: &BigRational, delta: &BigRational) -> BigRational {
    powi(&(one() - alpha), 3) / powi(&(one() + alpha), 3) - delta
}

/// Upper bound for `beta` (constraint 5), inclusive.
pub fn beta_upper(alpha: &BigRational, delta: &BigRational) -> BigRational {
    powi(&(one() - alpha), 3) / powi(&(one() + alpha), 2) - delta * (one() + alpha)
}

/// Lower bound for `beta` from constraint 6, exclusive.
pub fn beta_lower_entrants(alpha: &BigRational) -> BigRational {
    (powi(&(one() + alpha), 5) - one()) / powi(&(one() - alpha), 4)
}

/// Lower bound for `beta` from constraint 7, exclusive.
pub fn beta_lower_quorum(alpha: &BigRational, delta: &BigRational) -> BigRational {
    let num = (one() + delta) * powi(&(one() + alpha), 3) - powi(&(one() - alpha), 3) + one();
    let den = (BigRational::from_integer(BigInt::from(2)) + alpha + alpha + alpha * alpha)
        * powi(&(one() - alpha), 2)
        / powi(&(one() + alpha), 2);
    num / den
}

/// The alternate published form of constraint 7 with the
/// `(2-2*alpha+alpha^2)` factor. Informational only.
pub fn beta_lower_quorum_alt(alpha: &BigRational, delta: &BigRational) -> BigRational {
    let num = (one() + delta) * powi(&(one() + alpha), 3) - powi(&(one() - alpha), 3) + one();
    let den = (BigRational::from_integer(BigInt::from(2)) - alpha - alpha + alpha * alpha)
        * powi(&(one() - alpha), 2)
        / powi(&(one() + alpha), 2);
    num / den
}

/// Checks constraints 1 and 2. Field invariants are rejected up front.
pub fn validate_system(p: &SystemParams) -> Result<ValidationReport, ParamError> {
    p.validate_fields()?;
    let alpha = &p.alpha.0;
    let delta = &p.delta.0;
    let two = BigRational::from_integer(BigInt::from(2));
    let zero = BigRational::zero();

    // (1) alpha <= 1 - 2^(-1/4)  <=>  2*(1-alpha)^4 >= 1
    let c1_value = &two * powi(&(one() - alpha), 4);
    let c1 = ConstraintReport {
        id: "1".into(),
        description: "churn rate: 2*(1-alpha)^4 >= 1 (alpha <= 1 - 2^(-1/4) ~ 0.1591)".into(),
        value: Rat(c1_value.clone()),
        bound: Rat(one()),
        verdict: grade(&c1_value, &one(), Dir::AtLeast { strict: false }, &zero),
        informational: false,
    };

    // (2) ((1-alpha)^3 - delta*(1+alpha)^3) * n_min > 1
    let c2_value = (powi(&(one() - alpha), 3) - delta * powi(&(one() + alpha), 3))
        * BigRational::from_integer(BigInt::from(p.n_min));
    let c2 = ConstraintReport {
        id: "2".into(),
        description: "size floor: ((1-alpha)^3 - delta*(1+alpha)^3) * n_min > 1".into(),
        value: Rat(c2_value.clone()),
        bound: Rat(one()),
        verdict: grade(&c2_value, &one(), Dir::AtLeast { strict: true }, &zero),
        informational: false,
    };

    Ok(ValidationReport::from_constraints(vec![c1, c2]))
}

/// Feasible interval for `gamma`, both endpoints inclusive. Empty when the
/// bounds cross.
pub fn gamma_interval(p: &SystemParams) -> Result<Interval, ParamError> {
    p.validate_fields()?;
    Ok(Interval {
        lo: Rat(gamma_lower(&p.alpha.0, &p.delta.0, p.n_min)),
        lo_strict: false,
        hi: Rat(gamma_upper(&p.alpha.0, &p.delta.0)),
        hi_strict: false,
    })
}

/// Feasible interval for `beta`: exclusive lower bound (the larger of
/// constraints 6 and 7), inclusive upper bound (constraint 5). Does not
/// depend on `n_min`.
pub fn beta_interval(alpha: &BigRational, delta: &BigRational) -> Interval {
    let lo6 = beta_lower_entrants(alpha);
    let lo7 = beta_lower_quorum(alpha, delta);
    let lo = if lo6 > lo7 { lo6 } else { lo7 };
    Interval {
        lo: Rat(lo),
        lo_strict: true,
        hi: Rat(beta_upper(alpha, delta)),
        hi_strict: false,
    }
}

pub fn beta_interval_for(p: &SystemParams) -> Result<Interval, ParamError> {
    p.validate_fields()?;
    Ok(beta_interval(&p.alpha.0, &p.delta.0))
}

/// Full validation of system plus algorithm parameters with tolerance `eps`.
/// Emits verdicts for constraints 1 through 7 plus the informational
/// alternate form of constraint 7.
pub fn validate_algo(
    p: &SystemParams,
    a: &AlgoParams,
    eps: &BigRational,
) -> Result<ValidationReport, ParamError> {
    if eps.is_negative() {
        return Err(ParamError::BadEps(rational_to_string(eps)));
    }
    let mut constraints = validate_system(p)?.constraints;
    let alpha = &p.alpha.0;
    let delta = &p.delta.0;
    let gamma = &a.gamma.0;
    let beta = &a.beta.0;

    let lo3 = gamma_lower(alpha, delta, p.n_min);
    constraints.push(ConstraintReport {
        id: "3".into(),
        description: "join bound floor: gamma >= 1/(n_min*(1-alpha)^3) + (1+delta)*(1+alpha)^3/(1-alpha)^3 - 1".into(),
        value: Rat(gamma.clone()),
        verdict: grade(gamma, &lo3, Dir::AtLeast { strict: false }, eps),
        bound: Rat(lo3),
        informational: false,
    });

    let hi4 = gamma_upper(alpha, delta);
    constraints.push(ConstraintReport {
        id: "4".into(),
        description: "join bound ceiling: gamma <= (1-alpha)^3/(1+alpha)^3 - delta".into(),
        value: Rat(gamma.clone()),
        verdict: grade(gamma, &hi4, Dir::AtMost { strict: false }, eps),
        bound: Rat(hi4),
        informational: false,
    });

    let hi5 = beta_upper(alpha, delta);
    constraints.push(ConstraintReport {
        id: "5".into(),
        description: "quorum ceiling: beta <= (1-alpha)^3/(1+alpha)^2 - delta*(1+alpha)".into(),
        value: Rat(beta.clone()),
        verdict: grade(beta, &hi5, Dir::AtMost { strict: false }, eps),
        bound: Rat(hi5),
        informational: false,
    });

    let lo6 = beta_lower_entrants(alpha);
    constraints.push(ConstraintReport {
        id: "6".into(),
        description: "quorum floor vs entrants: beta > ((1+alpha)^5 - 1)/(1-alpha)^4".into(),
        value: Rat(beta.clone()),
        verdict: grade(beta, &lo6, Dir::AtLeast { strict: true }, eps),
        bound: Rat(lo6),
        informational: false,
    });

    let lo7 = beta_lower_quorum(alpha, delta);
    constraints.push(ConstraintReport {
        id: "7".into(),
        description: "quorum intersection floor: beta*(1-alpha)^2*(2+2*alpha+alpha^2)/(1+alpha)^2 > (1+delta)*(1+alpha)^3 - (1-alpha)^3 + 1".into(),
        value: Rat(beta.clone()),
        verdict: grade(beta, &lo7, Dir::AtLeast { strict: true }, eps),
        bound: Rat(lo7),
        informational: false,
    });

    let lo7_alt = beta_lower_quorum_alt(alpha, delta);
    constraints.push(ConstraintReport {
        id: "7-alt".into(),
        description: "alternate published floor with (2-2*alpha+alpha^2); informational".into(),
        value: Rat(beta.clone()),
        verdict: grade(beta, &lo7_alt, Dir::AtLeast { strict: true }, eps),
        bound: Rat(lo7_alt),
        informational: true,
    });

    Ok(ValidationReport::from_constraints(constraints))
}

/// One row of the known-good parameter table. The first row leaves `n_min`
/// and `gamma` unspecified and is validated for `beta` only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Row {
    pub alpha: Rat,
    pub delta: Rat,
    pub n_min: Option<u64>,
    pub gamma: Option<Rat>,
    pub beta: Rat,
}

pub fn table1() -> Vec<Table1Row> {
    let r = |s: &str| Rat::parse(s).expect("literal");
    vec![
        Table1Row { alpha: r("0"), delta: r("0.33"), n_min: None, gamma: None, beta: r("0.665") },
        Table1Row {
            alpha: r("0.01"),
            delta: r("0.26"),
            n_min: Some(7),
            gamma: Some(r("0.67")),
            beta: r("0.684"),
        },
        Table1Row {
            alpha: r("0.04"),
            delta: r("0.06"),
            n_min: Some(9),
            gamma: Some(r("0.72")),
            beta: r("0.737"),
        },
    ]
}

/// Validates a table row at tolerance `eps`. Rows without `n_min` check
/// constraint 1 and the `beta` constraints only.
pub fn validate_table1_row(row: &Table1Row, eps: &BigRational) -> Result<ValidationReport, ParamError> {
    match (row.n_min, &row.gamma) {
        (Some(n_min), Some(gamma)) => {
            let p = SystemParams::new(row.alpha.clone(), row.delta.clone(), n_min, default_d_ticks())?;
            let a = AlgoParams::new(gamma.clone(), row.beta.clone())?;
            validate_algo(&p, &a, eps)
        }
        _ => {
            check_fraction("alpha", &row.alpha)?;
            check_fraction("delta", &row.delta)?;
            check_bound("beta", &row.beta)?;
            let alpha = &row.alpha.0;
            let delta = &row.delta.0;
            let beta = &row.beta.0;
            let two = BigRational::from_integer(BigInt::from(2));
            let zero = BigRational::zero();
            let c1_value = &two * powi(&(one() - alpha), 4);
            let mut constraints = vec![ConstraintReport {
                id: "1".into(),
                description: "churn rate: 2*(1-alpha)^4 >= 1".into(),
                value: Rat(c1_value.clone()),
                bound: Rat(one()),
                verdict: grade(&c1_value, &one(), Dir::AtLeast { strict: false }, &zero),
                informational: false,
            }];
            let hi5 = beta_upper(alpha, delta);
            constraints.push(ConstraintReport {
                id: "5".into(),
                description: "quorum ceiling".into(),
                value: Rat(beta.clone()),
                verdict: grade(beta, &hi5, Dir::AtMost { strict: false }, eps),
                bound: Rat(hi5),
                informational: false,
            });
            let lo6 = beta_lower_entrants(alpha);
            constraints.push(ConstraintReport {
                id: "6".into(),
                description: "quorum floor vs entrants".into(),
                value: Rat(beta.clone()),
                verdict: grade(beta, &lo6, Dir::AtLeast { strict: true }, eps),
                bound: Rat(lo6),
                informational: false,
            });
            let lo7 = beta_lower_quorum(alpha, delta);
            constraints.push(ConstraintReport {
                id: "7".into(),
                description: "quorum intersection floor".into(),
                value: Rat(beta.clone()),
                verdict: grade(beta, &lo7, Dir::AtLeast { strict: true }, eps),
                bound: Rat(lo7),
                informational: false,
            });
            Ok(ValidationReport::from_constraints(constraints))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;
    use proptest::prelude::*;

    fn r(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn sys(alpha: &str, delta: &str, n_min: u64) -> SystemParams {
        SystemParams::new(Rat::parse(alpha).unwrap(), Rat::parse(delta).unwrap(), n_min, 1000)
            .unwrap()
    }

    // Frozen oracle values, computed by direct rational evaluation of the
    // bound formulas with an independent bignum implementation before this
    // module was written.
    #[test]
    fn row3_interval_regression() {
        let p = sys("0.04", "0.06", 9);
        let g = gamma_interval(&p).unwrap();
        assert_eq!(g.lo.0, r("1472101/3110400")); // ~0.473283501
        assert_eq!(g.hi.0, r("79809/109850")); // ~0.726527082
        assert!(!g.lo_strict && !g.hi_strict);

        let b = beta_interval(&p.alpha.0, &p.delta.0);
        assert_eq!(b.lo.0, r("28774447/39030000")); // ~0.737239226
        assert_eq!(b.hi.0, r("79809/105625")); // ~0.755588166
        assert!(b.lo_strict && !b.hi_strict);

        // Table row gamma=0.72 sits inside; beta=0.737 sits just below the
        // exclusive lower boundary (rounded down when published).
        assert!(g.contains(&r("0.72")));
        assert!(!b.contains(&r("0.737")));
        assert!(b.contains(&r("0.7373")));
    }

    #[test]
    fn validate_system_examples() {
        let rep = validate_system(&sys("0.04", "0.06", 9)).unwrap();
        assert!(rep.valid);
        assert_eq!(rep.constraints[1].value.0, r("2873124/390625")); // 7.35519744

        let rep = validate_system(&sys("0", "0", 2)).unwrap();
        assert!(rep.valid);
        assert_eq!(rep.constraints[1].value.0, r("2"));

        let rep = validate_system(&sys("0.2", "0.06", 9)).unwrap();
        assert!(!rep.valid);
        assert_eq!(rep.first_violation().unwrap().id, "1");
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(SystemParams::new(Rat::parse("-0.1").unwrap(), Rat::zero(), 3, 1000).is_err());
        assert!(SystemParams::new(Rat::parse("1").unwrap(), Rat::zero(), 3, 1000).is_err());
        assert!(SystemParams::new(Rat::zero(), Rat::parse("1.2").unwrap(), 3, 1000).is_err());
        assert!(SystemParams::new(Rat::zero(), Rat::zero(), 0, 1000).is_err());
        assert!(AlgoParams::new(Rat::zero(), Rat::parse("0.5").unwrap()).is_err());
        assert!(AlgoParams::new(Rat::parse("0.5").unwrap(), Rat::parse("1.01").unwrap()).is_err());
    }

    #[test]
    fn gamma_interval_examples() {
        let g = gamma_interval(&sys("0", "0.26", 7)).unwrap();
        assert_eq!(g.lo.0, r("1/7") + r("0.26"));
        assert_eq!(g.hi.0, r("0.74"));

        let g = gamma_interval(&sys("0.15", "0.3", 2)).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn beta_interval_examples() {
        let b = beta_interval(&r("0"), &r("0.33"));
        assert_eq!(b.lo.0, r("0.665"));
        assert!(b.lo_strict);
        assert_eq!(b.hi.0, r("0.67"));
        // The published beta=0.665 sits exactly on the exclusive boundary.
        assert!(!b.contains(&r("0.665")));

        let b = beta_interval(&r("0"), &r("0"));
        assert_eq!(b.lo.0, r("0.5"));
        assert_eq!(b.hi.0, r("1"));
    }

    #[test]
    fn quorum_floor_row2_boundary() {
        // beta floor for (0.01, 0.26) is ~0.684161; published row uses 0.684.
        let lo7 = beta_lower_quorum(&r("0.01"), &r("0.26"));
        assert_eq!(lo7, r("677285326613/989950005000"));
        let as_f = to_f64(&lo7);
        assert!((as_f - 0.684161).abs() < 1e-6);
    }

    #[test]
    fn alt_quorum_floor_rejects_published_rows() {
        // The alternate (2-2a+a^2) variant of constraint 7 pushes the floor
        // above the published beta for the two churn-bearing rows.
        let lo_alt = beta_lower_quorum_alt(&r("0.04"), &r("0.06"));
        assert!(lo_alt > r("0.755589")); // even above the constraint-5 ceiling
        let lo_alt = beta_lower_quorum_alt(&r("0.01"), &r("0.26"));
        assert!(lo_alt > r("0.684") + r("0.001"));
    }

    #[test]
    fn validate_algo_examples() {
        let eps = r("0.001");
        // Published row 2 validates with beta marginal on constraint 7.
        let rep = validate_algo(
            &sys("0.01", "0.26", 7),
            &AlgoParams::new(Rat::parse("0.67").unwrap(), Rat::parse("0.684").unwrap()).unwrap(),
            &eps,
        )
        .unwrap();
        assert!(rep.valid);
        let c7 = rep.constraints.iter().find(|c| c.id == "7").unwrap();
        assert_eq!(c7.verdict, Verdict::Marginal);

        // gamma above the ceiling is rejected.
        let rep = validate_algo(
            &sys("0.04", "0.06", 9),
            &AlgoParams::new(Rat::parse("0.80").unwrap(), Rat::parse("0.74").unwrap()).unwrap(),
            &eps,
        )
        .unwrap();
        assert!(!rep.valid);
        assert_eq!(rep.first_violation().unwrap().id, "4");

        // Static case with eps = 0.
        let rep = validate_algo(
            &sys("0", "0", 3),
            &AlgoParams::new(Rat::parse("0.5").unwrap(), Rat::parse("0.51").unwrap()).unwrap(),
            &r("0"),
        )
        .unwrap();
        assert!(rep.valid);
    }

    #[test]
    fn strict_mode_rejects_boundary_sitters() {
        // Row 1 beta sits exactly on the exclusive floor: marginal at
        // eps=1e-3, violated at eps=0.
        let rows = table1();
        let rep = validate_table1_row(&rows[0], &r("0.001")).unwrap();
        assert!(rep.valid);
        let c7 = rep.constraints.iter().find(|c| c.id == "7").unwrap();
        assert_eq!(c7.verdict, Verdict::Marginal);

        let rep = validate_table1_row(&rows[0], &r("0")).unwrap();
        assert!(!rep.valid);
    }

    #[test]
    fn table1_rows_validate_and_perturbations_fail() {
        let eps = r("0.001");
        for row in table1() {
            let rep = validate_table1_row(&row, &eps).unwrap();
            assert!(rep.valid, "row {row:?} should validate");

            // Lowering beta by 0.01 must invalidate the row.
            let mut lowered = row.clone();
            lowered.beta = Rat(lowered.beta.0 - r("0.01"));
            let rep = validate_table1_row(&lowered, &eps).unwrap();
            assert!(!rep.valid, "lowered beta should fail for {row:?}");

            // Raising gamma above the constraint-4 ceiling must invalidate.
            if let (Some(n_min), Some(_)) = (row.n_min, &row.gamma) {
                let mut raised = row.clone();
                let hi = gamma_upper(&row.alpha.0, &row.delta.0);
                raised.gamma = Some(Rat(hi + r("0.01")));
                let _ = n_min;
                let rep = validate_table1_row(&raised, &eps).unwrap();
                assert!(!rep.valid, "raised gamma should fail for {row:?}");
            }
        }
    }

    proptest! {
        // Increasing delta (alpha, n_min fixed) never widens either
        // feasible interval.
        #[test]
        fn delta_monotonicity(a in 0u32..150, d1 in 0u32..800, bump in 1u32..200, n_min in 1u64..60) {
            let alpha = BigRational::new(BigInt::from(a), BigInt::from(1000));
            let d2 = (d1 + bump).min(999);
            let delta1 = BigRational::new(BigInt::from(d1), BigInt::from(1000));
            let delta2 = BigRational::new(BigInt::from(d2), BigInt::from(1000));

            prop_assert!(gamma_lower(&alpha, &delta1, n_min) <= gamma_lower(&alpha, &delta2, n_min));
            prop_assert!(gamma_upper(&alpha, &delta1) >= gamma_upper(&alpha, &delta2));
            prop_assert!(beta_upper(&alpha, &delta1) >= beta_upper(&alpha, &delta2));
            prop_assert!(beta_lower_quorum(&alpha, &delta1) <= beta_lower_quorum(&alpha, &delta2));
        }

        // Bounds are finite positive rationals for every valid system, and
        // evaluating via an algebraically regrouped route agrees exactly.
        #[test]
        fn bounds_positive_and_order_independent(a in 0u32..159, d in 0u32..900, n_min in 1u64..100) {
            let alpha = BigRational::new(BigInt::from(a), BigInt::from(1000));
            let delta = BigRational::new(BigInt::from(d), BigInt::from(1000));
            let p = SystemParams::new(Rat(alpha.clone()), Rat(delta.clone()), n_min, 1000).unwrap();
            if validate_system(&p).unwrap().valid {
                let lo = gamma_lower(&alpha, &delta, n_min);
                prop_assert!(lo.is_positive());
                prop_assert!(beta_lower_quorum(&alpha, &delta).is_positive());

                // Regrouped: ((1 + n_min*(1+delta)*(1+alpha)^3) / (n_min*(1-alpha)^3)) - 1
                let om3 = powi(&(one() - &alpha), 3);
                let op3 = powi(&(one() + &alpha), 3);
                let n = BigRational::from_integer(BigInt::from(n_min));
                let regrouped = (one() + &n * (one() + &delta) * op3) / (&n * om3) - one();
                prop_assert_eq!(lo, regrouped);
            }
        }
    }
}
