//! Entropy and mutual-information helpers on finite distributions. All in nats.

/// Probabilities below this are treated as exact zeros.
pub const PROB_FLOOR: f64 = 1e-15;

#[inline]
fn plogp(p: f64) -> f64 {
    if p <= PROB_FLOOR {
        0.0
    } else {
        p * p.ln()
    }
}

pub fn entropy_nats(pmf: &[f64]) -> f64 {
    -pmf.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// Entropy of a Bernoulli(p) variable.
pub fn binary_entropy_nats(p: f64) -> f64 {
    -(plogp(p) + plogp(1.0 - p))
}

/// `I(X; Y)` for input pmf `px` and a row-major conditional `q(y | x)` with
/// `n_out` columns.
pub fn mutual_information_nats(px: &[f64], cond: &[f64], n_out: usize) -> f64 {
    debug_assert_eq!(px.len() * n_out, cond.len());
    let mut py = vec![0.0; n_out];
    for (x, &p) in px.iter().enumerate() {
        let row = &cond[x * n_out..(x + 1) * n_out];
        for (acc, &q) in py.iter_mut().zip(row) {
            *acc += p * q;
        }
    }
    let mut mi = 0.0;
    for (x, &p) in px.iter().enumerate() {
        if p <= PROB_FLOOR {
            continue;
        }
        let row = &cond[x * n_out..(x + 1) * n_out];
        for (&q, &r) in row.iter().zip(&py) {
            if q > PROB_FLOOR && r > 0.0 {
                mi += p * q * (q / r).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Mutual information of a joint pmf given as a row-major `rows x cols` table.
pub fn joint_mutual_information_nats(joint: &[f64], cols: usize) -> f64 {
    let rows = joint.len() / cols;
    let mut px = vec![0.0; rows];
    let mut py = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = joint[i * cols + j];
            px[i] += v;
            py[j] += v;
        }
    }
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let v = joint[i * cols + j];
            if v > PROB_FLOOR {
                mi += v * (v / (px[i] * py[j])).ln();
            }
        }
    }
    mi.max(0.0)
}
