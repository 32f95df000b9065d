use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::corpus::LabeledExample;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Params {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 300,
            tol: 1e-7,
        }
    }
}

impl Params {
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        for (key, &value) in map {
            if !value.is_finite() || value < 0.0 {
                return Err(invalid(format!("hyperparameter {key} must be a non-negative number")));
            }
            match key.as_str() {
                "l2" => p.l2 = value,
                "max_iter" => p.max_iter = value as usize,
                "tol" => p.tol = value,
                other => return Err(invalid(format!("unknown linear hyperparameter {other:?}"))),
            }
        }
        Ok(p)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("l2".to_string(), self.l2),
            ("max_iter".to_string(), self.max_iter as f64),
            ("tol".to_string(), self.tol),
        ])
    }
}

/// Distinct tokens of `text`, each weighted `1/sqrt(k)` for `k` distinct
/// tokens so every non-empty document has unit norm.
fn features(text: &str) -> (BTreeSet<String>, f64) {
    let toks: BTreeSet<String> = tokenize(text).collect();
    let w = if toks.is_empty() { 0.0 } else { 1.0 / (toks.len() as f64).sqrt() };
    (toks, w)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + exp(z)) without overflow
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// L2-regularized logistic regression over unit-normalized word presence.
///
/// Fitted with full-batch L-BFGS from a zero start, so the result depends
/// only on the training data and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    bias: f64,
    weights: BTreeMap<String, f64>,
}

struct Doc {
    idx: Vec<usize>,
    value: f64,
    target: f64,
}

struct Objective {
    docs: Vec<Doc>,
    dim: usize,
    l2: f64,
}

impl Objective {
    // mean log loss + l2/2 * |w|^2, the bias (last coordinate) unpenalized
    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.docs.len() as f64;
        let bias = w[self.dim - 1];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for d in &self.docs {
            let z = bias + d.value * d.idx.iter().map(|&j| w[j]).sum::<f64>();
            loss += softplus(z) - d.target * z;
            let r = (sigmoid(z) - d.target) / n;
            for &j in &d.idx {
                grad[j] += r * d.value;
            }
            grad[self.dim - 1] += r;
        }
        loss /= n;
        for j in 0..self.dim - 1 {
            loss += 0.5 * self.l2 * w[j] * w[j];
            grad[j] += self.l2 * w[j];
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lbfgs(obj: &Objective, max_iter: usize, tol: f64) -> Vec<f64> {
    const MEMORY: usize = 10;
    let dim = obj.dim;
    let mut w = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut f = obj.eval(&w, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut w_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];

    for _ in 0..max_iter {
        if dot(&g, &g).sqrt() < tol {
            break;
        }
        // two-loop recursion
        let mut dir: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            history.clear();
            dir = g.iter().map(|x| -x).collect();
            slope = dot(&g, &dir);
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for j in 0..dim {
                w_new[j] = w[j] + step * dir[j];
            }
            let f_new = obj.eval(&w_new, &mut g_new);
            if f_new <= f + 1e-4 * step * slope {
                let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if history.len() == MEMORY {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut w, &mut w_new);
                std::mem::swap(&mut g, &mut g_new);
                let converged = (f - f_new).abs() <= tol * f.abs().max(1.0);
                f = f_new;
                accepted = true;
                if converged {
                    return w;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    w
}

impl LinearModel {
    pub(super) fn fit(examples: &[LabeledExample], params: &Params, _seed: u64) -> Self {
        let parsed: Vec<(BTreeSet<String>, f64, f64)> = examples
            .iter()
            .map(|ex| {
                let (toks, value) = features(&ex.text);
                (toks, value, ex.label.as_u8() as f64)
            })
            .collect();
        let vocab: BTreeMap<&str, usize> = parsed
            .iter()
            .flat_map(|(toks, _, _)| toks.iter().map(String::as_str))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        let docs = parsed
            .iter()
            .map(|(toks, value, target)| Doc {
                idx: toks.iter().map(|t| vocab[t.as_str()]).collect(),
                value: *value,
                target: *target,
            })
            .collect();
        let obj = Objective {
            docs,
            dim: vocab.len() + 1,
            l2: params.l2,
        };
        let w = lbfgs(&obj, params.max_iter, params.tol);
        Self {
            bias: w[vocab.len()],
            weights: vocab.iter().map(|(t, &i)| (t.to_string(), w[i])).collect(),
        }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weight(&self, token: &str) -> Option<f64> {
        self.weights.get(token).copied()
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, text: &str) -> f64 {
        let (toks, value) = features(text);
        self.bias + value * toks.iter().filter_map(|t| self.weights.get(t)).sum::<f64>()
    }

    pub fn score(&self, text: &str) -> f64 {
        sigmoid(self.logit(text))
    }
}
