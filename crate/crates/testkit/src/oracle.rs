//! Reference implementations written as plain index loops over nested
//! vectors. Nothing here calls into the library's numeric code.

use crate::Rows;

pub fn cos(u: &[f64], v: &[f64]) -> f64 {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for t in 0..u.len() {
        uv += u[t] * v[t];
        uu += u[t] * u[t];
        vv += v[t] * v[t];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

/// Softmax without max-shifting; inputs here are cosines in `[-1, 1]`.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    for v in x {
        total += v.exp();
    }
    x.iter().map(|v| v.exp() / total).collect()
}

pub fn clip(f: &[f64], prompts: &Rows) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..prompts.len() {
        out.push(cos(f, &prompts[j]));
    }
    out
}

pub fn cupl(f: &[f64], descriptions: &Rows) -> f64 {
    let mut total = 0.0;
    for j in 0..descriptions.len() {
        total += cos(f, &descriptions[j]);
    }
    total / descriptions.len() as f64
}

pub fn wca_crop_weights(f: &[f64], crops: &Rows) -> Vec<f64> {
    let sims: Vec<f64> = (0..crops.len()).map(|i| cos(f, &crops[i])).collect();
    softmax(&sims)
}

pub fn wca_desc_weights(prompt: &[f64], descriptions: &Rows) -> Vec<f64> {
    let sims: Vec<f64> = (0..descriptions.len()).map(|j| cos(prompt, &descriptions[j])).collect();
    softmax(&sims)
}

pub fn wca(crops: &Rows, descriptions: &Rows, w: &[f64], v: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..crops.len() {
        for j in 0..descriptions.len() {
            total += w[i] * v[j] * cos(&crops[i], &descriptions[j]);
        }
    }
    total
}

/// `None` when the CLS similarity sum is within `eps` of zero.
pub fn fair_weights(g: &[f64], crop_cls: &Rows, eps: f64) -> Option<Vec<f64>> {
    let mut sims = Vec::new();
    let mut total = 0.0;
    for i in 0..crop_cls.len() {
        let s = cos(g, &crop_cls[i]);
        sims.push(s);
        total += s;
    }
    if total.abs() <= eps {
        return None;
    }
    Some(sims.iter().map(|s| s / total).collect())
}

/// Repeatedly picks the largest remaining weight, earliest index first.
pub fn topk(w: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; w.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..w.len() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if w[i] <= w[b] => {}
                _ => best = Some(i),
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}

/// Masked double loop over all crops; `selected` flags the top-k.
pub fn las(crops: &Rows, anchors: &Rows, w: &[f64], selected: &[usize]) -> Vec<f64> {
    let mut mask = vec![0.0; crops.len()];
    for &i in selected {
        mask[i] = 1.0;
    }
    let mut out = vec![0.0; anchors.len()];
    for j in 0..anchors.len() {
        for i in 0..crops.len() {
            out[j] += mask[i] * w[i] * cos(&crops[i], &anchors[j]);
        }
    }
    out
}

pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// Everything the training loss depends on, in plain vectors.
#[derive(Debug, Clone)]
pub struct LossInstance {
    pub anchors: Rows,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub strong: Rows,
    pub labels: Vec<usize>,
    pub gamma: Vec<f64>,
    pub logit_scale: f64,
    /// `(momentum, previous pbar)` for the moving-average variant.
    pub ema: Option<(f64, Vec<f64>)>,
    pub raw_dot: bool,
}

/// `(L_st, L_reg)` evaluated term by term.
pub fn loss(inst: &LossInstance) -> (f64, f64) {
    let b_len = inst.strong.len();
    let c = inst.anchors.len();
    let mut l_st = 0.0;
    let mut mean = vec![0.0; c];
    for b in 0..b_len {
        let mut u = Vec::new();
        for t in 0..inst.strong[b].len() {
            u.push(inst.scale[t] * inst.strong[b][t] + inst.shift[t]);
        }
        let mut logits = Vec::new();
        for j in 0..c {
            let sim = if inst.raw_dot {
                let mut s = 0.0;
                for t in 0..u.len() {
                    s += u[t] * inst.anchors[j][t];
                }
                s
            } else {
                cos(&u, &inst.anchors[j])
            };
            logits.push(inst.logit_scale * sim);
        }
        let mut z = 0.0;
        for j in 0..c {
            z += logits[j].exp();
        }
        for j in 0..c {
            mean[j] += logits[j].exp() / z / b_len as f64;
        }
        l_st += inst.gamma[b] * -(logits[inst.labels[b]].exp() / z).ln();
    }
    l_st /= b_len as f64;
    let pbar: Vec<f64> = match &inst.ema {
        None => mean,
        Some((m, prev)) => (0..c).map(|j| m * prev[j] + (1.0 - m) * mean[j]).collect(),
    };
    let mut l_reg = 0.0;
    for j in 0..c {
        l_reg -= pbar[j].ln();
    }
    (l_st, l_reg / c as f64)
}
