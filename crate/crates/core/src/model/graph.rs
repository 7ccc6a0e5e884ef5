use super::DiscreteModel;

/// Edge variables of the factor graph. Time indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Theta,
    X0,
    X(usize),
    Y(usize),
    U(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorKind {
    Theta,
    X0,
    Obs(usize),
    Dyn(usize),
    Action(usize),
    GoalX(usize),
    GoalY(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub kind: FactorKind,
    /// Indices into [`FactorGraph::edges`].
    pub scope: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGraph {
    pub horizon: usize,
    pub nodes: Vec<Factor>,
    pub edges: Vec<Variable>,
    /// `degrees[i]` is the number of factors incident on `edges[i]`.
    pub degrees: Vec<usize>,
}

impl FactorGraph {
    pub fn edge_index(&self, v: Variable) -> usize {
        let t_max = self.horizon;
        match v {
            Variable::Theta => 0,
            Variable::X0 => 1,
            Variable::X(t) | Variable::Y(t) | Variable::U(t) => {
                assert!((1..=t_max).contains(&t), "time index {t} out of 1..={t_max}");
                let off = match v {
                    Variable::X(_) => 0,
                    Variable::Y(_) => 1,
                    _ => 2,
                };
                2 + 3 * (t - 1) + off
            }
        }
    }

    pub fn degree(&self, v: Variable) -> usize {
        self.degrees[self.edge_index(v)]
    }
}

/// Builds the Forney-style factor graph of the model: `2 + 5T` factor nodes
/// and `2 + 3T` edges.
pub fn build_factor_graph(model: &DiscreteModel) -> FactorGraph {
    graph_for_horizon(model.cards.horizon)
}

pub(crate) fn graph_for_horizon(horizon: usize) -> FactorGraph {
    let mut edges = vec![Variable::Theta, Variable::X0];
    for t in 1..=horizon {
        edges.extend([Variable::X(t), Variable::Y(t), Variable::U(t)]);
    }
    let mut g = FactorGraph {
        horizon,
        nodes: Vec::with_capacity(2 + 5 * horizon),
        degrees: vec![0; edges.len()],
        edges,
    };

    let th = g.edge_index(Variable::Theta);
    let x0 = g.edge_index(Variable::X0);
    let mut nodes = vec![
        Factor { kind: FactorKind::Theta, scope: vec![th] },
        Factor { kind: FactorKind::X0, scope: vec![x0] },
    ];
    for t in 1..=horizon {
        let xt = g.edge_index(Variable::X(t));
        let yt = g.edge_index(Variable::Y(t));
        let ut = g.edge_index(Variable::U(t));
        let xprev = if t == 1 { x0 } else { g.edge_index(Variable::X(t - 1)) };
        nodes.push(Factor { kind: FactorKind::Obs(t), scope: vec![yt, xt, th] });
        nodes.push(Factor { kind: FactorKind::Dyn(t), scope: vec![xt, xprev, th, ut] });
        nodes.push(Factor { kind: FactorKind::Action(t), scope: vec![ut] });
        nodes.push(Factor { kind: FactorKind::GoalX(t), scope: vec![xt] });
        nodes.push(Factor { kind: FactorKind::GoalY(t), scope: vec![yt] });
    }
    for n in &nodes {
        for &i in &n.scope {
            g.degrees[i] += 1;
        }
    }
    g.nodes = nodes;
    g
}
