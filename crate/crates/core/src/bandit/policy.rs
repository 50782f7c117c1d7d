use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DecisionRecord;
use crate::featuregen::{ActionVector, ContextVector, DENSE_DIM, HASH_DIM};
use crate::seed::{self, StableHasher};
use crate::tsv::{parse_int, parse_real, ParseError};

const HEADER: &str = "# rulesteer-policy v1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LearnParams {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 0.2,
            l2: 1e-6,
            seed: 0,
        }
    }
}

/// Linear scorer over hashed (context x action) features.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub params: LearnParams,
    pub dense_mean: Vec<f64>,
    pub dense_std: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy {0}")]
    Parse(#[from] ParseError),
    #[error("reading policy: {0}")]
    Io(#[from] std::io::Error),
}

fn token_hash(t: &str) -> u64 {
    StableHasher::new().str("action").str(t).finish()
}

fn slot(h: StableHasher) -> u32 {
    (h.finish() & (HASH_DIM as u64 - 1)) as u32
}

impl Policy {
    /// All weights zero: every action scores the same.
    pub fn untrained(params: LearnParams) -> Self {
        Self {
            params,
            dense_mean: vec![0.0; DENSE_DIM],
            dense_std: vec![1.0; DENSE_DIM],
            weights: vec![0.0; HASH_DIM],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The same policy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.weights.iter_mut().for_each(|w| *w *= factor);
        p
    }

    pub fn features(&self, ctx: &ContextVector, action: &ActionVector) -> Vec<(u32, f64)> {
        let z: Vec<f64> = ctx
            .dense
            .iter()
            .zip(self.dense_mean.iter().zip(&self.dense_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        let tokens = action.tokens();
        let mut out = Vec::with_capacity(tokens.len() * (1 + z.len() + ctx.sparse.len()));
        for t in &tokens {
            let th = StableHasher::new().u64(token_hash(t));
            out.push((slot(th.str("bias")), 1.0));
            for (k, v) in z.iter().enumerate() {
                out.push((slot(th.str("dense").u64(k as u64)), *v));
            }
            for &s in &ctx.sparse {
                out.push((slot(th.str("span").u64(u64::from(s))), 1.0));
            }
        }
        out
    }

    pub fn score(&self, ctx: &ContextVector, action: &ActionVector) -> f64 {
        self.features(ctx, action)
            .iter()
            .map(|&(i, v)| self.weights[i as usize] * v)
            .sum()
    }

    /// Index of the first highest-scoring action.
    pub fn argmax(&self, ctx: &ContextVector, actions: &[ActionVector]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, a) in actions.iter().enumerate() {
            let s = self.score(ctx, a);
            if s > best.1 {
                best = (i, s);
            }
        }
        best.0
    }

    /// IPS-weighted least squares of reward on the chosen action's
    /// features, fitted by AdaGrad.
    pub fn learn(log: &[DecisionRecord], params: LearnParams) -> Self {
        let mut p = Self::untrained(params);
        if log.is_empty() {
            return p;
        }
        let n = log.len() as f64;
        for k in 0..DENSE_DIM {
            let mean = log.iter().map(|r| r.context.dense[k]).sum::<f64>() / n;
            let var = log.iter().map(|r| (r.context.dense[k] - mean).powi(2)).sum::<f64>() / n;
            p.dense_mean[k] = mean;
            p.dense_std[k] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        let inv: Vec<f64> = log.iter().map(|r| 1.0 / r.propensity).collect();
        let mean_inv = inv.iter().sum::<f64>() / n;

        let examples: Vec<(Vec<(u32, f64)>, f64, f64)> = log
            .iter()
            .zip(&inv)
            .map(|(r, w)| (p.features(&r.context, &r.actions[r.chosen]), r.reward, w / mean_inv))
            .collect();
        let mut g2 = vec![0.0f64; HASH_DIM];
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = seed::rng(params.seed, &["learn"]);
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (feats, reward, weight) = &examples[i];
                let pred: f64 = feats.iter().map(|&(j, v)| p.weights[j as usize] * v).sum();
                let err = weight * (pred - reward);
                for &(j, v) in feats {
                    let j = j as usize;
                    let g = err * v + params.l2 * p.weights[j];
                    g2[j] += g * g;
                    p.weights[j] -= params.learning_rate * g / (g2[j].sqrt() + 1e-8);
                }
            }
        }
        p
    }

    pub fn save(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{HEADER}")?;
        writeln!(out, "epochs\t{}", self.params.epochs)?;
        writeln!(out, "learning_rate\t{:e}", self.params.learning_rate)?;
        writeln!(out, "l2\t{:e}", self.params.l2)?;
        writeln!(out, "seed\t{}", self.params.seed)?;
        for (k, (m, s)) in self.dense_mean.iter().zip(&self.dense_std).enumerate() {
            writeln!(out, "dense\t{k}\t{m:e}\t{s:e}")?;
        }
        for (i, w) in self.weights.iter().enumerate() {
            if *w != 0.0 {
                writeln!(out, "w\t{i}\t{w:e}")?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("policy is UTF-8")
    }

    pub fn load(input: impl BufRead) -> Result<Self, PolicyError> {
        let mut p = Self::untrained(LearnParams::default());
        let mut lines = input.lines();
        match lines.next().transpose()? {
            Some(l) if l.trim_end() == HEADER => {}
            _ => return Err(ParseError::new(1, format!("expected header {HEADER:?}")).into()),
        }
        for (i, line) in lines.enumerate() {
            let no = i + 2;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let want = |n: usize| {
                if f.len() == n {
                    Ok(())
                } else {
                    Err(ParseError::new(no, format!("{}: expected {n} fields, found {}", f[0], f.len())))
                }
            };
            match f[0] {
                "epochs" => {
                    want(2)?;
                    p.params.epochs = parse_int(f[1], "epochs", no)?;
                }
                "learning_rate" => {
                    want(2)?;
                    p.params.learning_rate = parse_real(f[1], "learning_rate", no)?;
                }
                "l2" => {
                    want(2)?;
                    p.params.l2 = parse_real(f[1], "l2", no)?;
                }
                "seed" => {
                    want(2)?;
                    p.params.seed = parse_int(f[1], "seed", no)?;
                }
                "dense" => {
                    want(4)?;
                    let k: usize = parse_int(f[1], "dense index", no)?;
                    if k >= DENSE_DIM {
                        return Err(ParseError::new(no, format!("dense index {k} out of range")).into());
                    }
                    p.dense_mean[k] = parse_real(f[2], "mean", no)?;
                    p.dense_std[k] = parse_real(f[3], "std", no)?;
                }
                "w" => {
                    want(3)?;
                    let j: usize = parse_int(f[1], "weight index", no)?;
                    if j >= HASH_DIM {
                        return Err(ParseError::new(no, format!("weight index {j} out of range")).into());
                    }
                    p.weights[j] = parse_real(f[2], "weight", no)?;
                }
                other => return Err(ParseError::new(no, format!("unknown key {other:?}")).into()),
            }
        }
        Ok(p)
    }
}
