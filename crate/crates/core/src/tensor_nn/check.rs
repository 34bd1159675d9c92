//! Finite-difference gradient checking.

use super::{Graph, NodeId};
use crate::error::{Error, Result};

/// Compare analytic gradients against central differences.
///
/// `build` assembles a scalar-valued graph from leaves created out of
/// `inputs` (shape, data). Every input coordinate is perturbed by
/// `±epsilon`; the result is the largest relative error
/// `|a - n| / max(|a|, |n|, 1e-8)` across all coordinates. Runs in `f64`.
pub fn grad_check<F>(build: F, inputs: &[([usize; 2], Vec<f64>)], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }

    let run = |data: &[Vec<f64>], with_grad: bool| -> Result<(f64, Option<Vec<Vec<f64>>>)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs
            .iter()
            .zip(data)
            .map(|((shape, _), d)| g.tensor_new(*shape, d.clone(), true))
            .collect::<Result<_>>()?;
        let out = build(&mut g, &ids)?;
        if g.shape(out) != [1, 1] {
            return Err(Error::Contract(format!(
                "gradient check requires a scalar output, got shape {:?}",
                g.shape(out)
            )));
        }
        let value = g.value(out)[0];
        if !with_grad {
            return Ok((value, None));
        }
        g.backward(out)?;
        let grads = ids
            .iter()
            .zip(inputs)
            .map(|(&id, (_, d))| g.grad(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; d.len()]))
            .collect();
        Ok((value, Some(grads)))
    };

    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    let (_, grads) = run(&base, true)?;
    let analytic = grads.unwrap();

    let mut max_rel = 0.0f64;
    let mut probe = base.clone();
    for ti in 0..inputs.len() {
        for ci in 0..inputs[ti].1.len() {
            let x = base[ti][ci];
            probe[ti][ci] = x + epsilon;
            let (fp, _) = run(&probe, false)?;
            probe[ti][ci] = x - epsilon;
            let (fm, _) = run(&probe, false)?;
            probe[ti][ci] = x;

            let numeric = (fp - fm) / (2.0 * epsilon);
            let a = analytic[ti][ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
