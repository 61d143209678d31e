use super::{Graph, NodeId, ParamStore, TensorError};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// Check every coordinate of every parameter in `store`.
///
/// `f` builds a scalar graph from the current parameter values. The error
/// per coordinate is `|numeric - analytic| / max(1, |analytic|)`.
pub fn grad_check<F>(store: &mut ParamStore, f: F, h: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let root = f(&mut g, store)?;
        Ok(g.value(root).item())
    };

    store.zero_grad();
    let mut g = Graph::new();
    let root = f(&mut g, store)?;
    g.backward(root, store)?;

    let mut report = GradCheckReport {
        coordinates: 0,
        max_rel_error: 0.0,
        worst: None,
        tol,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).value.len() {
            let x0 = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = x0 + h;
            let up = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = x0 - h;
            let down = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * h);
            let analytic = store.get(id).grad.data()[k];
            let err = (numeric - analytic).abs() / analytic.abs().max(1.0);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.get(id).name.clone(), k));
            }
        }
    }
    store.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let p = store.add("x", Tensor::scalar(3.0));
        let r = grad_check(
            &mut store,
            |g, s| {
                let x = g.param(s, p);
                g.mul(x, x)
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.coordinates, 1);
    }

    #[test]
    fn softplus_at_zero() {
        let mut store = ParamStore::new();
        let p = store.add("x", Tensor::scalar(0.0));
        let r = grad_check(
            &mut store,
            |g, s| {
                let x = g.param(s, p);
                g.softplus(x)
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
