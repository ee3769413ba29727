use serde::{Deserialize, Serialize};

use crate::chain::ChainModel;
use crate::error::Result;
use crate::scalar::Real;

use super::Functional;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StoppingResult<T> {
    /// `V_0` at the start state.
    pub value: T,
    /// `values[i]` lists `(state id, V_i)` over `supp(X_i)`.
    pub values: Vec<Vec<(usize, T)>>,
    /// `stop[i]` lists `(state id, stop now)` over `supp(X_i)`; stopping wins ties.
    pub stop: Vec<Vec<(usize, bool)>>,
}

/// Backward induction for `min_τ E[Σ_{i<τ} k(X_i)Δt + g(X_τ)]` over stopping
/// times `τ ≤ n`: `V_n = g` and `V_i = min(g, kΔt + Σ P V_{i+1})`.
pub fn optimal_stopping_value<T: Real>(chain: &ChainModel<T>, k: &Functional<T>, g: &Functional<T>) -> Result<StoppingResult<T>> {
    let supports = chain.supports();
    let n = chain.n;
    let dt = chain.dt();
    let mut next = vec![T::zero(); chain.num_states()];
    let mut values = vec![Vec::new(); n + 1];
    let mut stop = vec![Vec::new(); n + 1];
    for &id in &supports[n] {
        let v = g.eval(&chain.state_point(id));
        next[id] = v;
        values[n].push((id, v));
        stop[n].push((id, true));
    }
    for i in (0..n).rev() {
        let mut row_values = Vec::with_capacity(supports[i].len());
        let mut row_stop = Vec::with_capacity(supports[i].len());
        for &id in &supports[i] {
            let x = chain.state_point(id);
            let cont = k.eval(&x) * dt + chain.rows[id].iter().map(|&(dst, p)| p * next[dst]).sum::<T>();
            let here = g.eval(&x);
            let halt = here <= cont;
            row_values.push((id, if halt { here } else { cont }));
            row_stop.push((id, halt));
        }
        for &(id, v) in &row_values {
            next[id] = v;
        }
        values[i] = row_values;
        stop[i] = row_stop;
    }
    // a state may sit in several supports; `next` now holds step-0 values
    Ok(StoppingResult { value: next[chain.start_id], values, stop })
}
