use crate::error::{Error, Result};
use crate::nn::ParameterSet;

/// `Φ_new = Φ_old + η · (1/B) Σ_p (θ_p − Φ_old)`.
///
/// Displacements are summed in task order, so the result does not depend
/// on how the adaptations were scheduled. A single task with `η = 1` is a
/// full step and yields that task's parameters exactly.
pub fn meta_update(
    phi_old: &ParameterSet,
    adapted: &[ParameterSet],
    outer_rate: f64,
) -> Result<ParameterSet> {
    if adapted.is_empty() {
        return Err(Error::Empty("meta-batch"));
    }
    for theta in adapted {
        phi_old.check_aligned(theta)?;
    }
    if adapted.len() == 1 && outer_rate == 1.0 {
        return Ok(adapted[0].clone());
    }
    let inv_b = 1.0 / adapted.len() as f64;
    let mut phi_new = phi_old.clone();
    let thetas: Vec<Vec<(&str, &crate::autodiff::Tensor)>> =
        adapted.iter().map(|t| t.iter().collect()).collect();
    for (slot, (_, phi)) in phi_new.iter_mut().enumerate() {
        let phi = phi.data_mut();
        for (j, value) in phi.iter_mut().enumerate() {
            let mut sum = 0.0;
            for theta in &thetas {
                sum += theta[slot].1.data()[j] - *value;
            }
            *value += outer_rate * (sum * inv_b);
        }
    }
    Ok(phi_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn set(values: Vec<f64>) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::vector(values));
        p
    }

    fn values(p: &ParameterSet) -> Vec<f64> {
        p.get("w").unwrap().data().to_vec()
    }

    #[test]
    fn converged_tasks_leave_phi_fixed() {
        let phi = set(vec![0.1, -0.3, 7.25]);
        let out = meta_update(&phi, &[phi.clone(), phi.clone(), phi.clone()], 0.37).unwrap();
        assert_eq!(out, phi);
    }

    #[test]
    fn full_step_with_one_task() {
        let phi = set(vec![0.1, 0.2]);
        let theta = set(vec![0.7, -0.3]);
        assert_eq!(meta_update(&phi, &[theta.clone()], 1.0).unwrap(), theta);
    }

    #[test]
    fn hand_arithmetic() {
        let out = meta_update(&set(vec![0.0]), &[set(vec![2.0]), set(vec![4.0])], 0.5).unwrap();
        assert_eq!(values(&out), vec![1.5]);
    }

    #[test]
    fn empty_batch_and_misaligned_sets_fail() {
        let phi = set(vec![0.0]);
        assert!(meta_update(&phi, &[], 0.1).is_err());
        assert!(meta_update(&phi, &[set(vec![1.0, 2.0])], 0.1).is_err());
    }
}
