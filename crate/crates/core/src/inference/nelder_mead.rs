//! Derivative-free simplex minimizer (Nelder-Mead) with the standard
//! reflection/expansion/contraction/shrink moves. The Monte-Carlo
//! likelihood surface is only piecewise smooth under common random
//! numbers, which is exactly the situation a simplex method tolerates.

#[derive(Debug, Clone, Copy)]
pub(crate) struct NmOptions {
    /// Convergence when the max coordinate spread of the simplex drops
    /// below this.
    pub tol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

const ALPHA: f64 = 1.0; // reflection
const GAMMA: f64 = 2.0; // expansion
const RHO: f64 = 0.5; // contraction
const SIGMA: f64 = 0.5; // shrink

pub(crate) fn minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    opts: NmOptions,
) -> NmResult {
    let dim = x0.len();
    assert!(dim >= 1);
    assert_eq!(step.len(), dim);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut converged = false;
    while evals < opts.max_evals {
        // order best..worst
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = (0..dim)
            .map(|d| {
                let coords: Vec<f64> = simplex.iter().map(|v| v[d]).collect();
                let max = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = coords.iter().cloned().fold(f64::INFINITY, f64::min);
                max - min
            })
            .fold(0.0, f64::max);
        if spread <= opts.tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|d| {
                order[..dim].iter().map(|&i| simplex[i][d]).sum::<f64>() / dim as f64
            })
            .collect();

        let reflected: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + ALPHA * (centroid[d] - simplex[worst][d]))
            .collect();
        let f_reflected = eval(&reflected, &mut evals);

        if f_reflected < values[best] {
            let expanded: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + GAMMA * (reflected[d] - centroid[d]))
                .collect();
            let f_expanded = eval(&expanded, &mut evals);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }

        // contraction toward the better of (worst, reflected)
        let (anchor, f_anchor) = if f_reflected < values[worst] {
            (&reflected, f_reflected)
        } else {
            (&simplex[worst], values[worst])
        };
        let contracted: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + RHO * (anchor[d] - centroid[d]))
            .collect();
        let f_contracted = eval(&contracted, &mut evals);
        if f_contracted < f_anchor {
            simplex[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }

        // shrink around the best vertex
        let best_point = simplex[best].clone();
        for i in 0..=dim {
            if i == best {
                continue;
            }
            for d in 0..dim {
                simplex[i][d] = best_point[d] + SIGMA * (simplex[i][d] - best_point[d]);
            }
            values[i] = eval(&simplex[i].clone(), &mut evals);
        }
    }

    let best = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    NmResult {
        x: simplex[best].clone(),
        value: values[best],
        evaluations: evals,
        converged,
    }
}
