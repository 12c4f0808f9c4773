//! Entropy and divergence in bits, with `0 log 0 = 0`.

/// Shannon entropy of a probability vector, in bits.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum()
}

/// Binary entropy `H2(e)` in bits.
pub fn binary_entropy(e: f64) -> f64 {
    entropy(&[e, 1.0 - e])
}

/// `D(p || q)` in bits. `None` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return None;
            }
            d += a * (a / b).log2();
        }
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_of_uniform() {
        assert!((entropy(&[0.25; 4]) - 2.0).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn kl_reference_values() {
        let d = kl_divergence(&[1.0, 0.0], &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((d - (1.5f64).log2()).abs() < 1e-15);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_none());
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), Some(0.0));
    }
}
