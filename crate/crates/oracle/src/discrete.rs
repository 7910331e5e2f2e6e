/// Everything the two-variable binary example needs, computed by summing over
/// the four cells of the joint table.
#[derive(Clone, Copy, Debug)]
pub struct DiscreteEnumeration {
    pub delta: f64,
    /// `KL(q1 || q1*)` and `KL(q1* || q1)`.
    pub kl_first: (f64, f64),
    /// `KL(q2 || q2*)` and `KL(q2* || q2)`.
    pub kl_second: (f64, f64),
    pub tv_first: f64,
    pub tv_second: f64,
}

fn pmf(u: f64) -> [f64; 2] {
    [1.0 - u, u]
}

fn kl(a: [f64; 2], b: [f64; 2]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| x * (x / y).ln())
        .sum()
}

/// Enumerates a 2x2 target where equal values carry mass `(1 - p) / 2` and
/// unequal values `p / 2`. Each `q` argument is the probability of value 1.
pub fn enumerate_two_by_two(p: f64, q1: f64, q1_star: f64, q2: f64, q2_star: f64) -> DiscreteEnumeration {
    let target = [[(1.0 - p) / 2.0, p / 2.0], [p / 2.0, (1.0 - p) / 2.0]];
    let (a, a_star, b, b_star) = (pmf(q1), pmf(q1_star), pmf(q2), pmf(q2_star));
    let mut delta = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            delta += (a[i] - a_star[i]) * (b[j] - b_star[j]) * target[i][j].ln();
        }
    }
    DiscreteEnumeration {
        delta,
        kl_first: (kl(a, a_star), kl(a_star, a)),
        kl_second: (kl(b, b_star), kl(b_star, b)),
        tv_first: 0.5 * a.iter().zip(a_star).map(|(x, y)| (x - y).abs()).sum::<f64>(),
        tv_second: 0.5 * b.iter().zip(b_star).map(|(x, y)| (x - y).abs()).sum::<f64>(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_product_target_has_no_interaction() {
        let e = enumerate_two_by_two(0.5, 0.9, 0.5, 0.1, 0.5);
        assert!(e.delta.abs() < 1e-15);
        assert!((e.tv_first - 0.4).abs() < 1e-15);
    }
}
