//! Tropical Viterbi recurrence with threshold pruning.
//!
//! One frame of decoding is `x(t) = P(σ_t) ⊞ Aᵀ ⊞ x(t−1)`: a min-plus
//! matrix-vector product with the transposed transition matrix followed by
//! the diagonal observation costs. After each step every state whose cost
//! exceeds `η = θ + min x(t)` is pruned to `+∞`.

use crate::error::{Error, Result};
use crate::tropical::{matvec, CostMatrix, StateVector};

/// Maps an observation symbol to a vector of per-state costs.
pub trait ObservationModel {
    type Symbol;

    fn costs(&self, symbol: &Self::Symbol) -> Result<StateVector>;
}

/// Observation costs for a discrete alphabet, indexed by symbol.
#[derive(Debug, Clone)]
pub struct CostTable(pub Vec<StateVector>);

impl ObservationModel for CostTable {
    type Symbol = usize;

    fn costs(&self, symbol: &usize) -> Result<StateVector> {
        self.0
            .get(*symbol)
            .cloned()
            .ok_or_else(|| Error::Domain(format!("unknown observation symbol {symbol}")))
    }
}

fn check_costs(context: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().find(|&&c| c < 0.0) {
        Some(&c) => Err(Error::Domain(format!("{context}: negative cost {c}"))),
        None => Ok(()),
    }
}

/// Initial, transition and observation costs of an `n`-state model.
///
/// `transition[i][j]` is the cost of moving from state `i` to state `j`.
/// All costs are negative log-probabilities, so never below zero.
#[derive(Debug, Clone)]
pub struct HmmCosts<O> {
    initial: StateVector,
    transition: CostMatrix,
    transition_t: CostMatrix,
    observation: O,
}

impl<O: ObservationModel> HmmCosts<O> {
    pub fn new(initial: StateVector, transition: CostMatrix, observation: O) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::Domain("model needs at least one state".into()));
        }
        if transition.rows() != n || transition.cols() != n {
            return Err(Error::Dimension {
                context: "transition matrix",
                expected: n,
                found: if transition.rows() != n {
                    transition.rows()
                } else {
                    transition.cols()
                },
            });
        }
        check_costs("initial", initial.as_slice())?;
        for i in 0..n {
            check_costs("transition", transition.row(i))?;
        }
        let transition_t = transition.transpose();
        Ok(HmmCosts {
            initial,
            transition,
            transition_t,
            observation,
        })
    }

    pub fn n(&self) -> usize {
        self.initial.len()
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn transition(&self) -> &CostMatrix {
        &self.transition
    }

    pub fn observation(&self) -> &O {
        &self.observation
    }

    /// Observation costs for one symbol, checked against the state count.
    pub fn observation_costs(&self, symbol: &O::Symbol) -> Result<StateVector> {
        let costs = self.observation.costs(symbol)?;
        if costs.len() != self.n() {
            return Err(Error::Dimension {
                context: "observation costs",
                expected: self.n(),
                found: costs.len(),
            });
        }
        check_costs("observation", costs.as_slice())?;
        Ok(costs)
    }
}

/// Frame-0 front: initial costs plus the first observation's costs.
pub fn initial_front<O: ObservationModel>(
    model: &HmmCosts<O>,
    sigma: &O::Symbol,
) -> Result<StateVector> {
    let x = model
        .initial
        .add_entrywise(&model.observation_costs(sigma)?)?;
    if !x.is_live() {
        return Err(Error::DeadFront);
    }
    Ok(x)
}

/// Result of one recurrence step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub x: StateVector,
    /// Best predecessor of each state (smallest index on ties).
    pub backpointers: Vec<usize>,
}

/// One Viterbi step `x(t) = P(σ_t) ⊞ Aᵀ ⊞ x(t−1)`.
pub fn step<O: ObservationModel>(
    x_prev: &StateVector,
    model: &HmmCosts<O>,
    sigma: &O::Symbol,
) -> Result<Step> {
    if !x_prev.is_live() {
        return Err(Error::DeadFront);
    }
    let propagated = matvec(&model.transition_t, x_prev)?;
    let x = propagated
        .values
        .add_entrywise(&model.observation_costs(sigma)?)?;
    Ok(Step {
        x,
        backpointers: propagated.argmins,
    })
}

/// Common value of the pruning vector, `η = θ + ½(xᵀ ⊞ x)`.
///
/// `xᵀ ⊞ x = 2·min x`, so this is `θ + min x`. `θ = +∞` disables pruning.
pub fn prune_threshold(x: &StateVector, theta: f64) -> Result<f64> {
    if theta.is_nan() || theta <= 1.0 {
        return Err(Error::Domain(format!(
            "leniency must exceed 1, got {theta}"
        )));
    }
    match x.argmin() {
        Some((_, m)) if m.is_finite() => Ok(theta + m),
        _ => Err(Error::DeadFront),
    }
}

/// Snapshot of the bounded solution space after pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub z: StateVector,
    pub eta: f64,
    /// Surviving state indices in ascending order.
    pub support: Vec<usize>,
    /// `η − z_i` for each state in `support`, same order.
    pub residuals: Vec<f64>,
}

impl PruneOutcome {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// Largest residual; equals θ up to rounding.
    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Post-pruning costs of the survivors, in support order.
    pub fn support_costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.support.iter().map(|&i| self.z[i])
    }
}

/// Drops every state with cost above `eta`. The boundary is inclusive.
pub fn prune(x: &StateVector, eta: f64) -> Result<PruneOutcome> {
    if eta.is_nan() {
        return Err(Error::InvalidValue(eta));
    }
    if !x.is_live() {
        return Err(Error::DeadFront);
    }
    let mut z = Vec::with_capacity(x.len());
    let mut support = Vec::new();
    let mut residuals = Vec::new();
    for (i, v) in x.iter().enumerate() {
        if v.is_finite() && v <= eta {
            z.push(v);
            support.push(i);
            residuals.push(eta - v);
        } else {
            z.push(f64::INFINITY);
        }
    }
    if support.is_empty() {
        // only reachable when eta sits below min x
        return Err(Error::DeadFront);
    }
    Ok(PruneOutcome {
        z: StateVector::new(z)?,
        eta,
        support,
        residuals,
    })
}

/// One stored frame of the decoding lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFrame {
    pub z: StateVector,
    /// Predecessor per state; `None` for pruned states. Absent at frame 0.
    pub backpointers: Option<Vec<Option<usize>>>,
    pub eta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lattice {
    frames: Vec<LatticeFrame>,
}

impl Lattice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[LatticeFrame] {
        &self.frames
    }

    pub fn last(&self) -> Option<&LatticeFrame> {
        self.frames.last()
    }

    /// Appends a pruned frame, keeping backpointers only for survivors.
    pub fn push(&mut self, outcome: &PruneOutcome, backpointers: Option<&[usize]>) -> Result<()> {
        let stored = match (self.frames.is_empty(), backpointers) {
            (true, None) => None,
            (false, Some(bp)) => {
                if bp.len() != outcome.z.len() {
                    return Err(Error::Dimension {
                        context: "backpointers",
                        expected: outcome.z.len(),
                        found: bp.len(),
                    });
                }
                Some(
                    outcome
                        .z
                        .iter()
                        .zip(bp)
                        .map(|(v, &p)| v.is_finite().then_some(p))
                        .collect(),
                )
            }
            (true, Some(_)) => return Err(Error::Domain("frame 0 carries no backpointers".into())),
            (false, None) => return Err(Error::Domain("frames after 0 need backpointers".into())),
        };
        self.frames.push(LatticeFrame {
            z: outcome.z.clone(),
            backpointers: stored,
            eta: outcome.eta,
        });
        Ok(())
    }
}

/// Follows backpointers from the cheapest final survivor back to frame 0.
pub fn backtrack(lattice: &Lattice) -> Result<Vec<usize>> {
    let last = lattice.last().ok_or(Error::EmptyLattice)?;
    let (mut state, cost) = last.z.argmin().ok_or(Error::EmptyLattice)?;
    if !cost.is_finite() {
        return Err(Error::DeadFront);
    }
    let mut path = vec![0; lattice.len()];
    for (t, frame) in lattice.frames().iter().enumerate().rev() {
        path[t] = state;
        if t == 0 {
            break;
        }
        state = frame
            .backpointers
            .as_ref()
            .and_then(|bp| bp[state])
            .ok_or_else(|| Error::Domain(format!("broken backpointer chain at frame {t}")))?;
    }
    Ok(path)
}

/// Viterbi decoding with a constant leniency (`+∞` disables pruning).
pub fn decode_fixed<O: ObservationModel>(
    model: &HmmCosts<O>,
    observations: &[O::Symbol],
    theta: f64,
) -> Result<(Vec<usize>, Lattice)> {
    let first = observations.first().ok_or(Error::ShortObservations {
        needed: 1,
        found: 0,
    })?;
    let mut lattice = Lattice::new();
    let x = initial_front(model, first)?;
    let mut outcome = prune(&x, prune_threshold(&x, theta)?)?;
    lattice.push(&outcome, None)?;
    for sigma in &observations[1..] {
        let s = step(&outcome.z, model, sigma)?;
        outcome = prune(&s.x, prune_threshold(&s.x, theta)?)?;
        lattice.push(&outcome, Some(&s.backpointers))?;
    }
    Ok((backtrack(&lattice)?, lattice))
}
