use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenResult {
    pub x: f64,
    pub fx: f64,
    /// Every `(x, f(x))` pair in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Golden-section bracket reduction on `[lo, hi]`. Stops when the bracket is
/// narrower than `eps` or after `max_evals` evaluations, and returns the
/// better of the two interior points of the final bracket.
pub fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, eps: f64, max_evals: usize) -> Result<GoldenResult> {
    if !(lo < hi) {
        return Err(Error::range(format!("empty bracket [{lo}, {hi}]")));
    }
    if max_evals < 2 {
        return Err(Error::range("golden section needs at least two evaluations"));
    }
    let mut evals = Vec::new();
    let mut eval = |x: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = f(x)?;
        evals.push((x, v));
        Ok(v)
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut evals)?;
    let mut fd = eval(d, &mut evals)?;
    while b - a >= eps && evals.len() < max_evals {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut evals)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut evals)?;
        }
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    Ok(GoldenResult { x, fx, evaluations: evals })
}
