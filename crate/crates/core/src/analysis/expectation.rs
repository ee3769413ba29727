use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::Functional;

/// Sparse law of `X_i`: `(state id, probability)` in ascending id order.
pub type Distribution<T> = Vec<(usize, T)>;

const TRUNCATE: f64 = 1e-15;
const RENORMALIZE_EVERY: usize = 100;

/// Pushes a sparse law through one row application. Entries below `1e-15`
/// are dropped.
fn advance<T: Real>(chain: &ChainModel<T>, dist: &Distribution<T>, acc: &mut [T], touched: &mut Vec<usize>) -> Distribution<T> {
    for &(s, p) in dist {
        for &(dst, q) in &chain.rows[s] {
            if acc[dst] == T::zero() {
                touched.push(dst);
            }
            acc[dst] = acc[dst] + p * q;
        }
    }
    touched.sort_unstable();
    let cut = T::lit(TRUNCATE);
    let mut out = Vec::with_capacity(touched.len());
    for &id in touched.iter() {
        if acc[id] > cut {
            out.push((id, acc[id]));
        }
        acc[id] = T::zero();
    }
    touched.clear();
    out
}

fn renormalize<T: Real>(dist: &mut Distribution<T>) {
    let total: T = dist.iter().map(|e| e.1).sum();
    if total > T::zero() {
        for e in dist.iter_mut() {
            e.1 = e.1 / total;
        }
    }
}

/// Laws of `X_0, …, X_step`.
fn propagate<T: Real>(chain: &ChainModel<T>, step: usize) -> Result<Vec<Distribution<T>>> {
    if step > chain.n {
        return Err(Error::Range { step, n: chain.n });
    }
    let mut acc = vec![T::zero(); chain.num_states()];
    let mut touched = Vec::new();
    let mut out = vec![vec![(chain.start_id, T::one())]];
    for i in 1..=step {
        let mut next = advance(chain, out.last().unwrap(), &mut acc, &mut touched);
        if i % RENORMALIZE_EVERY == 0 {
            renormalize(&mut next);
        }
        out.push(next);
    }
    Ok(out)
}

/// Law of `X_step` started from the chain's initial state.
pub fn distribution_at<T: Real>(chain: &ChainModel<T>, step: usize) -> Result<Distribution<T>> {
    Ok(propagate(chain, step)?.pop().unwrap())
}

/// `E f(X_step)`.
pub fn chain_expectation<T: Real>(chain: &ChainModel<T>, f: &Functional<T>, step: usize) -> Result<T> {
    let dist = distribution_at(chain, step)?;
    Ok(dist.iter().map(|&(id, p)| p * f.eval(&chain.state_point(id))).sum())
}

/// `E f(X_i)` for `i = 0..=step`.
pub fn chain_expectations<T: Real>(chain: &ChainModel<T>, f: &Functional<T>, step: usize) -> Result<Vec<T>> {
    Ok(propagate(chain, step)?
        .iter()
        .map(|dist| dist.iter().map(|&(id, p)| p * f.eval(&chain.state_point(id))).sum())
        .collect())
}
