//! Dense tensor-network contraction by greedy variable elimination.

use crate::C64;

#[derive(Clone, Debug)]
pub(crate) struct Tensor {
    pub vars: Vec<usize>,
    pub data: Vec<C64>,
}

impl Tensor {
    pub fn new(vars: Vec<usize>, data: Vec<C64>) -> Self {
        Tensor { vars, data }
    }
}

fn union_vars(group: &[&Tensor]) -> Vec<usize> {
    let mut u: Vec<usize> = group.iter().flat_map(|t| t.vars.iter().copied()).collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// `out[o] = sum_e prod_i T_i[o, e]` with output axes `out_vars` in order.
fn multiply_sum(group: &[&Tensor], out_vars: &[usize], sum_var: Option<usize>, dims: &[usize]) -> Tensor {
    let mut all = out_vars.to_vec();
    if let Some(e) = sum_var {
        all.push(e);
    }
    let strides: Vec<Vec<usize>> = group
        .iter()
        .map(|t| {
            let mut s = vec![0usize; all.len()];
            let mut acc = 1usize;
            for &v in t.vars.iter().rev() {
                let p = all.iter().position(|&a| a == v).expect("variable missing from union");
                s[p] = acc;
                acc *= dims[v];
            }
            s
        })
        .collect();
    let out_dims: Vec<usize> = out_vars.iter().map(|&v| dims[v]).collect();
    let out_len: usize = out_dims.iter().product();
    let (inner_len, inner_pos) = match sum_var {
        Some(e) => (dims[e], Some(all.len() - 1)),
        None => (1, None),
    };
    let mut out = vec![C64::new(0.0, 0.0); out_len];
    let mut idx = vec![0usize; out_vars.len()];
    let mut base = vec![0usize; group.len()];
    for slot in out.iter_mut() {
        for (b, s) in base.iter_mut().zip(&strides) {
            *b = idx.iter().zip(s.iter()).map(|(i, st)| i * st).sum();
        }
        let mut acc = C64::new(0.0, 0.0);
        match inner_pos {
            Some(p) => {
                for k in 0..inner_len {
                    let mut prod = C64::new(1.0, 0.0);
                    for (t, (b, s)) in group.iter().zip(base.iter().zip(&strides)) {
                        prod *= t.data[b + k * s[p]];
                    }
                    acc += prod;
                }
            }
            None => {
                let mut prod = C64::new(1.0, 0.0);
                for (t, b) in group.iter().zip(&base) {
                    prod *= t.data[*b];
                }
                acc = prod;
            }
        }
        *slot = acc;
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(out_vars.to_vec(), out)
}

/// Contracts all variables not listed in `open`; the result is laid out
/// row-major over `open` in the given order.
pub(crate) fn contract(mut tensors: Vec<Tensor>, dims: &[usize], open: &[usize]) -> Vec<C64> {
    let mut is_open = vec![false; dims.len()];
    for &v in open {
        is_open[v] = true;
    }
    loop {
        let mut present: Vec<usize> = tensors
            .iter()
            .flat_map(|t| t.vars.iter().copied())
            .filter(|&v| !is_open[v])
            .collect();
        present.sort_unstable();
        present.dedup();
        if present.is_empty() {
            break;
        }
        let mut best: Option<(usize, usize)> = None;
        for &e in &present {
            let group: Vec<&Tensor> = tensors.iter().filter(|t| t.vars.contains(&e)).collect();
            let cost: usize = union_vars(&group).iter().map(|&v| dims[v]).product();
            if best.map_or(true, |(_, c)| cost < c) {
                best = Some((e, cost));
            }
        }
        let e = best.unwrap().0;
        let (group, rest): (Vec<Tensor>, Vec<Tensor>) =
            tensors.into_iter().partition(|t| t.vars.contains(&e));
        let refs: Vec<&Tensor> = group.iter().collect();
        let out_vars: Vec<usize> = union_vars(&refs).into_iter().filter(|&v| v != e).collect();
        let t = multiply_sum(&refs, &out_vars, Some(e), dims);
        tensors = rest;
        tensors.push(t);
    }
    let refs: Vec<&Tensor> = tensors.iter().collect();
    let present = union_vars(&refs);
    let combined = multiply_sum(&refs, &present, None, dims);
    if present.as_slice() == open {
        return combined.data;
    }
    // Reorder, broadcasting over open variables that no tensor touches.
    let ones: Vec<Tensor> = open
        .iter()
        .filter(|v| !present.contains(v))
        .map(|&v| Tensor::new(vec![v], vec![C64::new(1.0, 0.0); dims[v]]))
        .collect();
    let mut all: Vec<&Tensor> = vec![&combined];
    all.extend(ones.iter());
    multiply_sum(&all, open, None, dims).data
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn matrix_chain() {
        // sum_{x,y} u(x) K(x,y) v(y)
        let u = Tensor::new(vec![0], vec![c(1.0), c(2.0)]);
        let k = Tensor::new(vec![0, 1], vec![c(1.0), c(2.0), c(3.0), c(4.0)]);
        let v = Tensor::new(vec![1], vec![c(5.0), c(6.0)]);
        let r = contract(vec![u, k, v], &[2, 2], &[]);
        // u^T K v = [1,2] [[1,2],[3,4]] [5,6] = [7,10].[5,6] = 95
        assert_eq!(r, vec![c(95.0)]);
    }

    #[test]
    fn open_reordering() {
        let k = Tensor::new(vec![0, 1], vec![c(1.0), c(2.0), c(3.0), c(4.0)]);
        let r = contract(vec![k], &[2, 2], &[1, 0]);
        assert_eq!(r, vec![c(1.0), c(3.0), c(2.0), c(4.0)]);
        let s = Tensor::new(vec![0], vec![c(2.0), c(3.0)]);
        let r = contract(vec![s], &[2, 3], &[0, 1]);
        assert_eq!(r.len(), 6);
        assert_eq!(r[4], c(3.0));
    }

    #[test]
    fn disconnected_scalars_multiply() {
        let a = Tensor::new(vec![0], vec![c(1.0), c(2.0)]);
        let b = Tensor::new(vec![1], vec![c(3.0), c(4.0), c(5.0)]);
        assert_eq!(contract(vec![a, b], &[2, 3], &[]), vec![c(36.0)]);
    }
}
