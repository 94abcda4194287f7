use super::{Coupling, DiscreteDistribution, OtSolution};

fn sorted_order(d: &DiscreteDistribution) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d.point(a)[0].total_cmp(&d.point(b)[0]));
    idx
}

/// Matches the two quantile functions on a merged grid of CDF breakpoints.
/// With `antitone` the target is traversed in decreasing order.
pub(crate) fn monotone<F>(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: F,
    antitone: bool,
) -> OtSolution
where
    F: Fn(f64, f64) -> f64,
{
    let ia = sorted_order(mu);
    let mut ib = sorted_order(nu);
    if antitone {
        ib.reverse();
    }
    let (wa, wb) = (mu.weights(), nu.weights());

    let mut mass = Vec::with_capacity(ia.len() + ib.len());
    let mut value = 0.0;
    let (mut i, mut j) = (0, 0);
    let (mut ca, mut cb) = (wa[ia[0]], wb[ib[0]]);
    let mut pos = 0.0;
    loop {
        let next = ca.min(cb);
        let m = next - pos;
        let (a, b) = (ia[i], ib[j]);
        if m > 0.0 {
            value += m * cost(mu.point(a)[0], nu.point(b)[0]);
            mass.push((a, b, m));
        }
        pos = next;
        if ca <= pos {
            i += 1;
            if i == ia.len() {
                break;
            }
            ca += wa[ia[i]];
        }
        if cb <= pos {
            j += 1;
            if j == ib.len() {
                break;
            }
            cb += wb[ib[j]];
        }
    }
    OtSolution {
        value,
        coupling: Coupling::new(mu.len(), nu.len(), mass),
    }
}
