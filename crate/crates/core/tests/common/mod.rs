//! Reference implementations used as oracles by the integration tests.
//! Written straight from the element equations, sharing no code with the
//! library's kernels or integrator.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use wuxing_core::{Direction, ElementVector, NetworkGraph};

fn m5(i: isize) -> usize {
    i.rem_euclid(5) as usize
}

/// dE/dt of one neuron, spelled out term by term.
pub fn field(dir: Direction, e: &[f64; 5], k1: &[f64; 5], k2: &[f64; 5], k3: &[f64; 5], u: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for i in 0..5 {
        let ii = i as isize;
        out[i] = match dir {
            Direction::Forward => {
                let (a, b) = (m5(ii - 1), m5(ii - 2));
                k1[i] * e[a] - k2[i] * e[i] - k3[i] * e[i] * e[b] + u[i]
            }
            Direction::Inverse => {
                let (a, b) = (m5(ii + 1), m5(ii + 2));
                k1[a] * e[a] - k2[i] * e[i] - k3[b] * e[i] * e[b] + u[i]
            }
        };
    }
    out
}

/// Explicit Euler on the whole coupled network with left-endpoint sums of
/// the deviation. First order, so only meant for small `h`.
///
/// `g` must already be oriented for `dir` (use `reverse` for the inverse
/// direction); `drive` is indexed like `g.external_inputs`.
pub fn euler_integrals(
    g: &NetworkGraph,
    dir: Direction,
    b0: &[ElementVector],
    drive: &[f64],
    horizon: f64,
    h: f64,
) -> Vec<[f64; 5]> {
    let n = g.neuron_count();
    let mut e: Vec<[f64; 5]> = b0.iter().map(|b| b.to_array()).collect();
    let mut integral = vec![[0.0; 5]; n];
    let steps = (horizon / h).round() as usize;
    for _ in 0..steps {
        let mut u = vec![[0.0; 5]; n];
        for (port, v) in g.external_inputs.iter().zip(drive) {
            u[port.neuron][port.element] += v;
        }
        for edge in &g.edges {
            let d = e[edge.src_neuron][edge.src_element] - b0[edge.src_neuron][edge.src_element];
            u[edge.dst_neuron][edge.dst_element] += d;
        }
        let mut next = e.clone();
        for k in 0..n {
            let p = &g.neurons[k];
            let f = field(dir, &e[k], p.k1.as_array(), p.k2.as_array(), p.k3.as_array(), &u[k]);
            for i in 0..5 {
                integral[k][i] += h * (e[k][i] - b0[k][i]);
                next[k][i] = e[k][i] + h * f[i];
            }
        }
        e = next;
    }
    integral
}

/// Neurons reachable along edges from `start`.
pub fn reachable(g: &NetworkGraph, start: &[usize], forward: bool) -> BTreeSet<usize> {
    let n = g.neuron_count();
    let mut adj = vec![Vec::new(); n];
    for e in &g.edges {
        if forward {
            adj[e.src_neuron].push(e.dst_neuron);
        } else {
            adj[e.dst_neuron].push(e.src_neuron);
        }
    }
    let mut seen: BTreeSet<usize> = start.iter().copied().collect();
    let mut queue: VecDeque<usize> = start.iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}
