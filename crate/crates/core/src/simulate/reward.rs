use thiserror::Error;

use crate::derivation::ActivityMatrices;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("reward {0:?}: expected state:<derivative>=<coef>,... or throughput:<label>")]
    Syntax(String),
    #[error("reward {reward:?}: unknown local derivative {name}")]
    UnknownDerivative { reward: String, name: String },
    #[error("reward {reward:?}: no labelled activity matches {label}")]
    UnknownActivity { reward: String, label: String },
    #[error("reward {reward:?}: coefficient {coef} is not a finite number")]
    BadCoefficient { reward: String, coef: String },
}

/// A reward rate over states.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardSpec {
    /// `ρ(x) = Σ c_U · x[U]`, as (derivative index, coefficient) pairs.
    StateLinear(Vec<(usize, f64)>),
    /// `Σ f(x, l)` over the listed columns.
    Throughput(Vec<usize>),
}

/// A parsed reward together with the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Reward {
    pub name: String,
    pub spec: RewardSpec,
}

/// Parses `state:User1=1.0,User2=0.5`, `throughput:task1{User1->User2,Sever1->Sever2}`
/// or `throughput:task1`, the last summing every labelled activity of the
/// action.
pub fn parse_reward(text: &str, m: &ActivityMatrices) -> Result<Reward, RewardError> {
    let syntax = || RewardError::Syntax(text.to_string());
    let (kind, body) = text.split_once(':').ok_or_else(syntax)?;
    let body = body.trim();
    let spec = match kind.trim() {
        "state" => {
            let mut coefs = Vec::new();
            for item in body.split(',') {
                let (name, coef) = item.split_once('=').ok_or_else(syntax)?;
                let name = name.trim();
                let u = m.derivative_index(name).ok_or_else(|| RewardError::UnknownDerivative {
                    reward: text.to_string(),
                    name: name.to_string(),
                })?;
                let c: f64 = coef.trim().parse().ok().filter(|c: &f64| c.is_finite()).ok_or_else(|| {
                    RewardError::BadCoefficient { reward: text.to_string(), coef: coef.trim().to_string() }
                })?;
                coefs.push((u, c));
            }
            RewardSpec::StateLinear(coefs)
        }
        "throughput" => {
            if body.is_empty() {
                return Err(syntax());
            }
            let cols: Vec<usize> = if body.contains('{') {
                m.find(body).into_iter().collect()
            } else {
                (0..m.cols()).filter(|&j| m.activities[j].action.to_string() == body).collect()
            };
            if cols.is_empty() {
                return Err(RewardError::UnknownActivity { reward: text.to_string(), label: body.to_string() });
            }
            RewardSpec::Throughput(cols)
        }
        _ => return Err(syntax()),
    };
    Ok(Reward { name: text.to_string(), spec })
}

impl RewardSpec {
    /// Reward rate at `x`, given the column rates already evaluated there.
    pub fn rate(&self, x: &[f64], column_rates: &[f64]) -> f64 {
        match self {
            RewardSpec::StateLinear(c) => c.iter().map(|&(u, k)| k * x[u]).sum(),
            RewardSpec::Throughput(cols) => cols.iter().map(|&j| column_rates[j]).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivation::build_matrices;
    use crate::model::parse_model;

    fn matrices() -> ActivityMatrices {
        build_matrices(
            &parse_model(
                "User1 = (task1, 1).User2; User2 = (task2, 1).User1;
                 Sever1 = (task1, 1).Sever2; Sever2 = (reset, 1).Sever1;
                 system User1[2] <task1> Sever1[2];",
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn state_reward() {
        let m = matrices();
        let r = parse_reward("state:User1=1.0, Sever2=0.5", &m).unwrap();
        assert_eq!(r.spec, RewardSpec::StateLinear(vec![(0, 1.0), (3, 0.5)]));
        assert_eq!(r.spec.rate(&[2.0, 0.0, 1.0, 1.0], &[]), 2.5);
    }

    #[test]
    fn throughput_by_label_and_action() {
        let m = matrices();
        let by_label = parse_reward("throughput:task1{User1->User2,Sever1->Sever2}", &m).unwrap();
        let by_action = parse_reward("throughput:task1", &m).unwrap();
        assert_eq!(by_label.spec, by_action.spec);
        assert_eq!(by_label.spec, RewardSpec::Throughput(vec![1]));
    }

    #[test]
    fn errors() {
        let m = matrices();
        assert!(matches!(parse_reward("state:Nobody=1", &m), Err(RewardError::UnknownDerivative { .. })));
        assert!(matches!(parse_reward("state:User1=nan", &m), Err(RewardError::BadCoefficient { .. })));
        assert!(matches!(parse_reward("throughput:idle", &m), Err(RewardError::UnknownActivity { .. })));
        assert!(matches!(parse_reward("utilisation:User1", &m), Err(RewardError::Syntax(_))));
        assert!(matches!(parse_reward("state", &m), Err(RewardError::Syntax(_))));
    }
}
