use std::fmt;
use std::ops::Add;

use serde::Serialize;

/// A branch or apparent rate. Passive rates carry a weight so that several
/// unspecified branches out of one derivative can be compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateTerm {
    Finite(f64),
    Passive(f64),
}

impl RateTerm {
    pub fn is_passive(self) -> bool {
        matches!(self, RateTerm::Passive(_))
    }

    fn magnitude(self) -> f64 {
        match self {
            RateTerm::Finite(v) | RateTerm::Passive(v) => v,
        }
    }

    /// `branch / total` for two terms of the same kind.
    pub fn ratio(self, total: RateTerm) -> f64 {
        debug_assert_eq!(self.is_passive(), total.is_passive());
        self.magnitude() / total.magnitude()
    }
}

impl Add for RateTerm {
    type Output = Option<RateTerm>;

    fn add(self, rhs: RateTerm) -> Option<RateTerm> {
        match (self, rhs) {
            (RateTerm::Finite(a), RateTerm::Finite(b)) => Some(RateTerm::Finite(a + b)),
            (RateTerm::Passive(a), RateTerm::Passive(b)) => Some(RateTerm::Passive(a + b)),
            _ => None,
        }
    }
}

impl fmt::Display for RateTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateTerm::Finite(v) => write!(f, "{v}"),
            RateTerm::Passive(w) if *w == 1.0 => f.write_str("infty"),
            RateTerm::Passive(w) => write!(f, "{w}*infty"),
        }
    }
}

/// `x · ∞` compared against finite apparent rates: only whether `x > 0`
/// matters, and `0 · ∞ = 0`.
pub fn passive_times(count: f64) -> Option<f64> {
    if count > 0.0 {
        None
    } else {
        Some(0.0)
    }
}

/// `min{A·∞, r·B}`: `r·B` when `A > 0`, otherwise `0`.
pub fn min_passive(a: f64, rb: f64) -> f64 {
    match passive_times(a) {
        None => rb,
        Some(zero) => zero,
    }
}

/// One participant of a labelled activity: the chosen branch `pre -> post`
/// with its rate, and the total rate of the action out of `pre`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Participant {
    pub pre: usize,
    pub post: usize,
    pub branch: RateTerm,
    pub total: RateTerm,
}

/// Rate data of one labelled activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityRate {
    pub participants: Vec<Participant>,
    /// Product of the branch probabilities `branch / total`.
    probability: f64,
}

impl ActivityRate {
    pub(crate) fn new(participants: Vec<Participant>) -> Self {
        let probability = participants.iter().map(|p| p.branch.ratio(p.total)).product();
        ActivityRate { participants, probability }
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// Transition rate function at a (possibly non-integer) state.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if let [p] = self.participants.as_slice() {
            return match p.branch {
                RateTerm::Finite(r) => x[p.pre] * r,
                // rejected at derivation time
                RateTerm::Passive(_) => 0.0,
            };
        }
        let mut min = f64::INFINITY;
        for p in &self.participants {
            let count = x[p.pre];
            match p.total {
                RateTerm::Finite(r) => min = min.min(count * r),
                RateTerm::Passive(_) => {
                    if let Some(zero) = passive_times(count) {
                        return zero;
                    }
                }
            }
        }
        if min.is_finite() {
            self.probability * min
        } else {
            0.0
        }
    }
}

/// Transition rate functions of every labelled activity, in column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSpec {
    pub activities: Vec<ActivityRate>,
}

impl RateSpec {
    pub fn rate(&self, x: &[f64], column: usize) -> f64 {
        self.activities[column].eval(x)
    }

    /// Writes `f(x, l_j)` for every column into `out` and returns the total.
    pub fn rates_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (slot, a) in out.iter_mut().zip(&self.activities) {
            *slot = a.eval(x);
            total += *slot;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_with_passive_side() {
        // min{A∞, rB} = rB for A > 0
        assert_eq!(min_passive(3.0, 2.5), 2.5);
        assert_eq!(min_passive(1e-300, 7.0), 7.0);
        // ... and 0 for A = 0
        assert_eq!(min_passive(0.0, 2.5), 0.0);
    }

    #[test]
    fn zero_times_infinity_is_zero() {
        assert_eq!(passive_times(0.0), Some(0.0));
        assert_eq!(passive_times(2.0), None);
    }

    fn shared(branch_p: RateTerm, total_p: RateTerm, branch_q: RateTerm, total_q: RateTerm) -> ActivityRate {
        ActivityRate::new(vec![
            Participant { pre: 0, post: 1, branch: branch_p, total: total_p },
            Participant { pre: 2, post: 3, branch: branch_q, total: total_q },
        ])
    }

    #[test]
    fn shared_with_passive_partner() {
        let a = shared(RateTerm::Finite(1.0), RateTerm::Finite(4.0), RateTerm::Passive(1.0), RateTerm::Passive(1.0));
        // min{x[Q1]·∞, 4·x[P1]} with x[Q1] > 0 → 4·x[P1]; times 1/4
        assert_eq!(a.eval(&[2.0, 0.0, 5.0, 0.0]), 2.0);
        // x[Q1] = 0 → 0 regardless of the other counts
        assert_eq!(a.eval(&[100.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn passive_branch_probabilities_use_weights() {
        let a = shared(RateTerm::Finite(3.0), RateTerm::Finite(3.0), RateTerm::Passive(2.0), RateTerm::Passive(3.0));
        assert!((a.probability() - 2.0 / 3.0).abs() < 1e-15);
        assert!((a.eval(&[1.0, 0.0, 1.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn individual_rate() {
        let a = ActivityRate::new(vec![Participant {
            pre: 0,
            post: 1,
            branch: RateTerm::Finite(2.0),
            total: RateTerm::Finite(2.0),
        }]);
        assert_eq!(a.eval(&[3.0, 0.0]), 6.0);
    }

    #[test]
    fn term_addition() {
        assert_eq!(RateTerm::Finite(1.0) + RateTerm::Finite(2.0), Some(RateTerm::Finite(3.0)));
        assert_eq!(RateTerm::Passive(1.0) + RateTerm::Passive(1.0), Some(RateTerm::Passive(2.0)));
        assert_eq!(RateTerm::Finite(1.0) + RateTerm::Passive(1.0), None);
        assert_eq!(RateTerm::Passive(2.0).to_string(), "2*infty");
    }
}
