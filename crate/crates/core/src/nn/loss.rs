use crate::error::{Error, Result};

fn check_groups(pred: &[&[f64]], truth: &[&[f64]]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} prediction groups vs {} target groups",
            pred.len(),
            truth.len()
        )));
    }
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(Error::Shape(format!("group {i}: {} predictions vs {} targets", p.len(), t.len())));
        }
    }
    Ok(())
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean over groups of `||pred - true|| / ||true||`.
pub fn mean_l2_relative_error(pred: &[&[f64]], truth: &[&[f64]]) -> Result<f64> {
    check_groups(pred, truth)?;
    let mut total = 0.0;
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let tn = norm(t.iter().copied());
        if tn == 0.0 {
            return Err(Error::Metric(format!("target group {i} has zero norm")));
        }
        total += norm(p.iter().zip(t.iter()).map(|(a, b)| a - b)) / tn;
    }
    Ok(total / pred.len() as f64)
}

/// Loss value and its gradient with respect to every prediction.
pub fn mean_l2_relative_error_grad(pred: &[&[f64]], truth: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_groups(pred, truth)?;
    let g = pred.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let tn = norm(t.iter().copied());
        if tn == 0.0 {
            return Err(Error::Metric(format!("target group {i} has zero norm")));
        }
        let rn = norm(p.iter().zip(t.iter()).map(|(a, b)| a - b));
        total += rn / tn;
        // subgradient zero at an exact fit
        let scale = if rn > 0.0 { 1.0 / (rn * tn * g) } else { 0.0 };
        grads.push(p.iter().zip(t.iter()).map(|(a, b)| (a - b) * scale).collect());
    }
    Ok((total / g, grads))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(mse_grad(pred, truth)?.0)
}

pub fn mse_grad(pred: &[f64], truth: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), truth.len())));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let grad = pred.iter().zip(truth).map(|(a, b)| 2.0 * (a - b) / n).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let t = [1.0, -2.0, 3.0];
        assert_eq!(mean_l2_relative_error(&[&t], &[&t]).unwrap(), 0.0);
        assert_eq!(mean_l2_relative_error(&[&[0.0; 3]], &[&t]).unwrap(), 1.0);
        let p: Vec<f64> = t.iter().map(|v| 1.1 * v).collect();
        assert!((mean_l2_relative_error(&[&p], &[&t]).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_group_is_named() {
        let err = mean_l2_relative_error(&[&[1.0], &[1.0]], &[&[1.0], &[0.0]]).unwrap_err();
        assert!(err.to_string().contains("group 1"));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p1 = vec![0.3, -0.2, 1.1];
        let p2 = vec![2.0, 0.1];
        let t1 = [0.5, -0.5, 1.0];
        let t2 = [1.5, 0.4];
        let (_, g) = mean_l2_relative_error_grad(&[&p1, &p2], &[&t1, &t2]).unwrap();
        let h = 1e-6;
        for (gi, group) in [&p1, &p2].iter().enumerate() {
            for k in 0..group.len() {
                let mut a = [p1.clone(), p2.clone()];
                let mut b = [p1.clone(), p2.clone()];
                a[gi][k] += h;
                b[gi][k] -= h;
                let fa = mean_l2_relative_error(&[&a[0], &a[1]], &[&t1, &t2]).unwrap();
                let fb = mean_l2_relative_error(&[&b[0], &b[1]], &[&t1, &t2]).unwrap();
                assert!(((fa - fb) / (2.0 * h) - g[gi][k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mse_values() {
        let (l, g) = mse_grad(&[1.0, 2.0], &[0.0, 4.0]).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, -2.0]);
        assert!(mse(&[1.0], &[]).is_err());
    }
}
