//! Reach-avoid probabilities of a plain Markov chain by a direct solve.

use nalgebra::{DMatrix, DVector};

/// Probability of reaching a goal state before an avoid state. States that
/// cannot reach the goal through non-avoid states get 0; the rest solve
/// `(I - P_SS) x = P_S,goal`.
pub fn reach_avoid(p: &[Vec<f64>], goal: &[bool], avoid: &[bool]) -> Vec<f64> {
    let n = p.len();
    let mut can = goal.to_vec();
    loop {
        let mut grew = false;
        for i in 0..n {
            if !can[i] && !avoid[i] && (0..n).any(|j| p[i][j] > 0.0 && can[j]) {
                can[i] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&i| can[i] && !goal[i]).collect();
    let k = unknown.len();
    let mut out: Vec<f64> = goal.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    if k == 0 {
        return out;
    }
    let mut a = DMatrix::<f64>::identity(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (r, &i) in unknown.iter().enumerate() {
        for (c, &j) in unknown.iter().enumerate() {
            a[(r, c)] -= p[i][j];
        }
        b[r] = (0..n).filter(|&j| goal[j]).map(|j| p[i][j]).sum();
    }
    let x = a.lu().solve(&b).expect("transient block is invertible");
    for (r, &i) in unknown.iter().enumerate() {
        out[i] = x[r];
    }
    out
}
