//! Finite-difference gradient checking for graph ops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;

pub(crate) fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
    )
}

/// Compares analytic gradients of `sum(w * f(inputs))` against central differences.
pub(crate) fn check_grads(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Var) {
    let eval = |inputs: &[Tensor], grad: bool| {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), grad)).collect();
        let out = f(&mut g, &vars);
        let w = rand_tensor(g.shape(out), 999);
        let wv = g.constant(w);
        let prod = g.mul(out, wv);
        let loss = g.sum_all(prod);
        (g, vars, loss)
    };
    let (g, vars, loss) = eval(&inputs, true);
    let grads = g.backward(loss);
    let h = 1e-2f32;
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(t.shape()));
        for j in 0..t.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= h;
            let (gp, _, lp) = eval(&plus, false);
            let (gm, _, lm) = eval(&minus, false);
            let fd = (gp.value(lp).item() as f64 - gm.value(lm).item() as f64) / (2.0 * h as f64);
            let an = analytic.data()[j] as f64;
            let tol = 2e-2 * (1.0 + fd.abs().max(an.abs()));
            assert!(
                (fd - an).abs() < tol,
                "input {i} element {j}: analytic {an} vs numeric {fd}"
            );
        }
    }
}
