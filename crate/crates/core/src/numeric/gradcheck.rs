use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::NumericError;

/// Compares reverse-mode gradients against central finite differences.
///
/// `loss_fn` builds a scalar loss on a fresh graph from the current
/// parameter values and must be deterministic. Returns the maximum over all
/// coordinates of `|a - f| / max(1e-8, |a| + |f|)`.
pub fn grad_check<F>(store: &mut ParamStore, step: f64, mut loss_fn: F) -> Result<f64, NumericError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var, NumericError>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss)?.accumulate(&g, store, 1.0);
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).data().to_vec()).collect();
    store.zero_grads();

    let mut eval = |store: &ParamStore| -> Result<f64, NumericError> {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, store)?;
        Ok(g.value(loss).item())
    };

    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for (id, grads) in ids.into_iter().zip(analytic) {
        for (k, a) in grads.into_iter().enumerate() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + step;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig - step;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            let f = (plus - minus) / (2.0 * step);
            let err = (a - f).abs() / (a.abs() + f.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let err = grad_check(&mut store, 1e-5, |g, s| {
            let v = g.param(s, x);
            let sq = g.mul(v, v)?;
            g.sum(sq)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![0.5, -1.25, 2.0]));
        let err = grad_check(&mut store, 1e-5, |g, s| {
            let v = g.param(s, w);
            let c = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]))?;
            let p = g.mul(v, c)?;
            g.sum(p)
        })
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }
}
