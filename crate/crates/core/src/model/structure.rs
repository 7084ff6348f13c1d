use std::collections::{BTreeSet, HashMap, VecDeque};
use std::ops::Range;

use super::{ActionType, ModelError, ModelErrorKind, PepaModel, RateValue, SeqExpr, SystemExpr};

/// A local state of one sequential component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDerivative {
    pub component_type: String,
    pub name: String,
    pub index: usize,
}

/// One component type: a group of the system equation together with the
/// block of derivatives reachable from its initial constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentType {
    pub name: String,
    pub population: u64,
    pub derivatives: Range<usize>,
    /// Actions renamed to τ by hiding operators enclosing this group.
    pub hidden: BTreeSet<String>,
}

/// One syntactic transition `U --(action, rate)--> target` of a sequential
/// component. Duplicate derivations are kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMove {
    pub action: String,
    pub rate: RateValue,
    pub target: usize,
}

/// Local derivatives of every component type and their sequential
/// transitions, in the global derivative ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStructure {
    pub types: Vec<ComponentType>,
    pub derivatives: Vec<LocalDerivative>,
    pub moves: Vec<Vec<LocalMove>>,
    /// Initial derivative index of each component type.
    pub initial: Vec<usize>,
}

/// Ordered list of local derivatives: component types in order of first
/// appearance in the system equation, each block discovered breadth-first
/// from the initial constant.
pub fn local_derivatives(model: &PepaModel) -> Result<Vec<LocalDerivative>, ModelError> {
    Ok(LocalStructure::build(model)?.derivatives)
}

fn collect_hidden(expr: &SystemExpr, above: &BTreeSet<String>, out: &mut HashMap<String, BTreeSet<String>>) {
    match expr {
        SystemExpr::Group { component, .. } => {
            out.insert(component.clone(), above.clone());
        }
        SystemExpr::Coop { left, right, .. } => {
            collect_hidden(left, above, out);
            collect_hidden(right, above, out);
        }
        SystemExpr::Hide { inner, set } => {
            let mut s = above.clone();
            s.extend(set.iter().cloned());
            collect_hidden(inner, &s, out);
        }
    }
}

struct Builder<'m> {
    model: &'m PepaModel,
    /// derivative key -> index; named derivatives are keyed by name,
    /// anonymous ones by their printed expression.
    keys: HashMap<String, usize>,
    bodies: Vec<SeqExpr>,
    base: Vec<String>,
    anon_count: HashMap<String, usize>,
    derivatives: Vec<LocalDerivative>,
    owner: Vec<usize>,
}

impl<'m> Builder<'m> {
    fn expand(&self, expr: &SeqExpr, visiting: &mut Vec<String>, out: &mut Vec<(String, RateValue, SeqExpr)>) -> Result<(), ModelError> {
        match expr {
            SeqExpr::Prefix { action, rate, then } => {
                let rate = self.model.resolve_rate(rate).ok_or_else(|| {
                    ModelError::new(ModelErrorKind::UndefinedRate(rate.to_string()))
                })?;
                out.push((action.clone(), rate, (**then).clone()));
                Ok(())
            }
            SeqExpr::Choice(l, r) => {
                self.expand(l, visiting, out)?;
                self.expand(r, visiting, out)
            }
            SeqExpr::Const(c) => {
                if visiting.contains(c) {
                    return Err(ModelError::new(ModelErrorKind::UnguardedRecursion(c.clone())));
                }
                let body = self
                    .model
                    .definition(c)
                    .ok_or_else(|| ModelError::new(ModelErrorKind::UndefinedConstant(c.clone())))?;
                visiting.push(c.clone());
                self.expand(body, visiting, out)?;
                visiting.pop();
                Ok(())
            }
        }
    }

    fn add(&mut self, key: String, name: String, body: SeqExpr, base: String, ty: usize, type_name: &str) -> usize {
        let index = self.derivatives.len();
        self.keys.insert(key, index);
        self.bodies.push(body);
        self.base.push(base);
        self.owner.push(ty);
        self.derivatives.push(LocalDerivative { component_type: type_name.to_string(), name, index });
        index
    }
}

impl LocalStructure {
    pub fn build(model: &PepaModel) -> Result<LocalStructure, ModelError> {
        let mut hidden_of = HashMap::new();
        collect_hidden(&model.system, &BTreeSet::new(), &mut hidden_of);

        let mut b = Builder {
            model,
            keys: HashMap::new(),
            bodies: Vec::new(),
            base: Vec::new(),
            anon_count: HashMap::new(),
            derivatives: Vec::new(),
            owner: Vec::new(),
        };
        let mut types = Vec::new();
        let mut initial = Vec::new();
        let mut raw_moves: Vec<Vec<(String, RateValue, usize)>> = Vec::new();

        for (ty, (component, count)) in model.system.groups().into_iter().enumerate() {
            if let Some(&other) = b.keys.get(component) {
                return Err(ModelError::new(ModelErrorKind::OverlappingComponents {
                    first: types_name(&types, b.owner[other]),
                    second: component.to_string(),
                    derivative: component.to_string(),
                }));
            }
            let body = model
                .definition(component)
                .ok_or_else(|| ModelError::new(ModelErrorKind::UndefinedConstant(component.to_string())))?
                .clone();
            let start = b.derivatives.len();
            let root = b.add(component.to_string(), component.to_string(), body, component.to_string(), ty, component);
            initial.push(root);

            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                let mut expanded = Vec::new();
                let mut visiting = Vec::new();
                let body = b.bodies[u].clone();
                b.expand(&body, &mut visiting, &mut expanded)?;

                let mut fresh: Vec<(usize, usize, String, String, SeqExpr)> = Vec::new();
                let mut moves = Vec::with_capacity(expanded.len());
                for (k, (action, rate, then)) in expanded.into_iter().enumerate() {
                    let (key, named) = match &then {
                        SeqExpr::Const(c) => (c.clone(), true),
                        other => (other.to_string(), false),
                    };
                    let target = match b.keys.get(&key) {
                        Some(&idx) => {
                            if b.owner[idx] != ty {
                                return Err(ModelError::new(ModelErrorKind::OverlappingComponents {
                                    first: types_name(&types, b.owner[idx]),
                                    second: component.to_string(),
                                    derivative: b.derivatives[idx].name.clone(),
                                }));
                            }
                            Some(idx)
                        }
                        None => None,
                    };
                    match target {
                        Some(idx) => moves.push((action, rate, MoveTarget::Known(idx))),
                        None => {
                            let slot = match fresh.iter().position(|f| f.2 == key) {
                                Some(p) => p,
                                None => {
                                    let order = if named {
                                        model.definition_index(&key).unwrap_or(usize::MAX)
                                    } else {
                                        usize::MAX
                                    };
                                    let body = match &then {
                                        SeqExpr::Const(c) => model
                                            .definition(c)
                                            .ok_or_else(|| {
                                                ModelError::new(ModelErrorKind::UndefinedConstant(c.clone()))
                                            })?
                                            .clone(),
                                        other => other.clone(),
                                    };
                                    let name = if named { key.clone() } else { String::new() };
                                    fresh.push((order, k, key.clone(), name, body));
                                    fresh.len() - 1
                                }
                            };
                            moves.push((action, rate, MoveTarget::Fresh(slot)));
                        }
                    }
                }

                // ties among newly discovered derivatives: definition order,
                // anonymous ones after named ones in syntactic order
                let mut order: Vec<usize> = (0..fresh.len()).collect();
                order.sort_by_key(|&i| (fresh[i].0, fresh[i].1));
                let mut assigned = vec![0usize; fresh.len()];
                for i in order {
                    let (_, _, key, name, body) = fresh[i].clone();
                    let base = b.base[u].clone();
                    let (name, child_base) = if name.is_empty() {
                        let n = b.anon_count.entry(base.clone()).or_insert(0);
                        *n += 1;
                        (format!("{base}.{n}"), base)
                    } else {
                        (name.clone(), name)
                    };
                    let idx = b.add(key, name, body, child_base, ty, component);
                    assigned[i] = idx;
                    queue.push_back(idx);
                }

                let resolved = moves
                    .into_iter()
                    .map(|(a, r, t)| {
                        let target = match t {
                            MoveTarget::Known(i) => i,
                            MoveTarget::Fresh(s) => assigned[s],
                        };
                        (a, r, target)
                    })
                    .collect();
                if raw_moves.len() <= u {
                    raw_moves.resize(u + 1, Vec::new());
                }
                raw_moves[u] = resolved;
            }

            types.push(ComponentType {
                name: component.to_string(),
                population: count,
                derivatives: start..b.derivatives.len(),
                hidden: hidden_of.remove(component).unwrap_or_default(),
            });
        }

        raw_moves.resize(b.derivatives.len(), Vec::new());
        let moves = raw_moves
            .into_iter()
            .map(|ms| ms.into_iter().map(|(action, rate, target)| LocalMove { action, rate, target }).collect())
            .collect();

        Ok(LocalStructure { types, derivatives: b.derivatives, moves, initial })
    }

    pub fn dimension(&self) -> usize {
        self.derivatives.len()
    }

    /// Component type owning derivative `d`.
    pub fn type_of(&self, d: usize) -> usize {
        self.types
            .iter()
            .position(|t| t.derivatives.contains(&d))
            .expect("derivative index out of range")
    }

    /// The action type that a move on `action` performed by component type
    /// `ty` appears as at system level.
    pub fn action_type(&self, ty: usize, action: &str) -> ActionType {
        ActionType { name: action.to_string(), hidden: self.types[ty].hidden.contains(action) }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.derivatives.iter().position(|d| d.name == name)
    }

    /// Initial counts: each population on its initial derivative.
    pub fn initial_counts(&self) -> Vec<i64> {
        let mut x = vec![0i64; self.derivatives.len()];
        for (t, &d) in self.types.iter().zip(&self.initial) {
            x[d] = t.population as i64;
        }
        x
    }
}

enum MoveTarget {
    Known(usize),
    Fresh(usize),
}

fn types_name(types: &[ComponentType], idx: usize) -> String {
    types.get(idx).map(|t| t.name.clone()).unwrap_or_default()
}
