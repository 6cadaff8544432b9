//! Exact information quantities over small explicit joints `q(x, y, m)`.
//!
//! Everything is computed by enumeration in bits. Terms with zero mass are
//! dropped (`0 log 0 = 0`) and conditionals on zero-probability events are
//! skipped. Conditional mutual information is computed along two independent
//! routes, an entropy difference and an expected KL divergence, and the two
//! are cross-checked on every call.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ALPHABET: usize = 16;
pub const SUM_TOLERANCE: f64 = 1e-12;
pub const DUAL_TOLERANCE: f64 = 1e-10;
pub const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfoError {
    #[error("alphabet sizes must be in 1..={MAX_ALPHABET}, got {0}x{1}x{2}")]
    Alphabet(usize, usize, usize),
    #[error("table has {actual} entries, expected {expected}")]
    TableSize { expected: usize, actual: usize },
    #[error("entry {index} is {value}; probabilities must be finite and >= 0")]
    Negative { index: usize, value: f64 },
    #[error("probabilities sum to {0}, not 1")]
    Sum(f64),
    #[error("conditional row (y={y}, m={m}) sums to {sum}")]
    ConditionalRow { y: usize, m: usize, sum: f64 },
    #[error("alphabet mismatch between joint and {0}")]
    Mismatch(&'static str),
    #[error("internal consistency: entropy-difference {via_entropy} vs KL {via_kl}")]
    Inconsistent { via_entropy: f64, via_kl: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    M,
}

/// Joint table over `X × Y × M`, stored as `prob[(x * ny + y) * nm + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    nx: usize,
    ny: usize,
    nm: usize,
    prob: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(nx: usize, ny: usize, nm: usize, prob: Vec<f64>) -> Result<Self, InfoError> {
        let ok = |n: usize| (1..=MAX_ALPHABET).contains(&n);
        if !(ok(nx) && ok(ny) && ok(nm)) {
            return Err(InfoError::Alphabet(nx, ny, nm));
        }
        Self::checked(nx, ny, nm, prob)
    }

    fn checked(nx: usize, ny: usize, nm: usize, prob: Vec<f64>) -> Result<Self, InfoError> {
        let expected = nx * ny * nm;
        if prob.len() != expected {
            return Err(InfoError::TableSize {
                expected,
                actual: prob.len(),
            });
        }
        if let Some((index, &value)) = prob
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= 0.0 && p.is_finite()))
        {
            return Err(InfoError::Negative { index, value });
        }
        let sum: f64 = prob.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(InfoError::Sum(sum));
        }
        Ok(Self { nx, ny, nm, prob })
    }

    /// Builds a joint from `f(x, y, m)`, normalizing the result.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        nm: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, InfoError> {
        let mut prob = Vec::with_capacity(nx * ny * nm);
        for x in 0..nx {
            for y in 0..ny {
                for m in 0..nm {
                    prob.push(f(x, y, m));
                }
            }
        }
        let sum: f64 = prob.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            for p in &mut prob {
                *p /= sum;
            }
        }
        Self::new(nx, ny, nm, prob)
    }

    /// Dirichlet(alpha, ..., alpha) sample over all cells.
    pub fn random_dirichlet<R: Rng + ?Sized>(
        nx: usize,
        ny: usize,
        nm: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self, InfoError> {
        let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
        loop {
            let draws: Vec<f64> = (0..nx * ny * nm).map(|_| gamma.sample(rng)).collect();
            let sum: f64 = draws.iter().sum();
            if sum > 0.0 && sum.is_finite() {
                return Self::new(nx, ny, nm, draws.into_iter().map(|g| g / sum).collect());
            }
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nm)
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, m: usize) -> f64 {
        self.prob[(x * self.ny + y) * self.nm + m]
    }

    pub fn table(&self) -> &[f64] {
        &self.prob
    }

    fn size_of(&self, v: Var) -> usize {
        match v {
            Var::X => self.nx,
            Var::Y => self.ny,
            Var::M => self.nm,
        }
    }

    fn value_of(v: Var, x: usize, y: usize, m: usize) -> usize {
        match v {
            Var::X => x,
            Var::Y => y,
            Var::M => m,
        }
    }

    /// Marginal over the listed variables, flattened in list order.
    pub fn marginal(&self, vars: &[Var]) -> Vec<f64> {
        let size: usize = vars.iter().map(|&v| self.size_of(v)).product();
        let mut out = vec![0.0; size];
        for x in 0..self.nx {
            for y in 0..self.ny {
                for m in 0..self.nm {
                    let mut idx = 0;
                    for &v in vars {
                        idx = idx * self.size_of(v) + Self::value_of(v, x, y, m);
                    }
                    out[idx] += self.p(x, y, m);
                }
            }
        }
        out
    }
}

/// Shannon entropy in bits of a (sub)probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}

/// `H(target | given)` by direct summation of `-q(t, s) log2 q(t | s)`.
pub fn cond_entropy(q: &DiscreteJoint, target: Var, given: &[Var]) -> f64 {
    let nt = q.size_of(target);
    let joint = {
        let mut vars = given.to_vec();
        vars.push(target);
        q.marginal(&vars)
    };
    let mut h = 0.0;
    for s in 0..joint.len() / nt {
        let row = &joint[s * nt..(s + 1) * nt];
        let ps: f64 = row.iter().sum();
        if ps <= 0.0 {
            continue;
        }
        for &pts in row {
            if pts > 0.0 {
                h -= pts * (pts / ps).log2();
            }
        }
    }
    h
}

/// `I(X; M | Y)` along both routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmiReport {
    pub via_entropy: f64,
    pub via_kl: f64,
}

impl CmiReport {
    pub fn value(&self) -> f64 {
        self.via_kl
    }
}

/// `E_Y[ KL( q(X,M|Y) || q(X|Y) q(M|Y) ) ]`.
pub fn cmi_via_kl(q: &DiscreteJoint) -> f64 {
    let (nx, ny, nm) = q.sizes();
    let mut total = 0.0;
    for y in 0..ny {
        let py: f64 = (0..nx)
            .flat_map(|x| (0..nm).map(move |m| (x, m)))
            .map(|(x, m)| q.p(x, y, m))
            .sum();
        if py <= 0.0 {
            continue;
        }
        let px_y: Vec<f64> = (0..nx).map(|x| (0..nm).map(|m| q.p(x, y, m)).sum::<f64>() / py).collect();
        let pm_y: Vec<f64> = (0..nm).map(|m| (0..nx).map(|x| q.p(x, y, m)).sum::<f64>() / py).collect();
        let mut kl = 0.0;
        for x in 0..nx {
            for m in 0..nm {
                let pxm = q.p(x, y, m) / py;
                if pxm > 0.0 {
                    kl += pxm * (pxm / (px_y[x] * pm_y[m])).log2();
                }
            }
        }
        total += py * kl;
    }
    total
}

/// Conditional mutual information with the dual-route cross-check.
pub fn cond_mutual_info(q: &DiscreteJoint) -> Result<CmiReport, InfoError> {
    let via_entropy = cond_entropy(q, Var::X, &[Var::Y]) - cond_entropy(q, Var::X, &[Var::Y, Var::M]);
    let via_kl = cmi_via_kl(q);
    if (via_entropy - via_kl).abs() > DUAL_TOLERANCE || via_kl < -SIGN_TOLERANCE {
        return Err(InfoError::Inconsistent { via_entropy, via_kl });
    }
    Ok(CmiReport { via_entropy, via_kl })
}

/// Acceptance predicate `v(y, m)`, stored as `accept[y * nm + m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateFunction {
    ny: usize,
    nm: usize,
    accept: Vec<bool>,
}

impl GateFunction {
    pub fn from_fn(ny: usize, nm: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut accept = Vec::with_capacity(ny * nm);
        for y in 0..ny {
            for m in 0..nm {
                accept.push(f(y, m));
            }
        }
        Self { ny, nm, accept }
    }

    pub fn constant(ny: usize, nm: usize, v: bool) -> Self {
        Self::from_fn(ny, nm, |_, _| v)
    }

    pub fn random<R: Rng + ?Sized>(ny: usize, nm: usize, p_accept: f64, rng: &mut R) -> Self {
        Self::from_fn(ny, nm, |_, _| rng.gen_bool(p_accept))
    }

    pub fn accepts(&self, y: usize, m: usize) -> bool {
        self.accept[y * self.nm + m]
    }
}

/// Joint over `X × Y × M̃` where `M̃ = M` when the gate accepts and `⊥`
/// otherwise. `⊥` is the last symbol of the extended alphabet (index `nm`).
pub fn apply_gate(q: &DiscreteJoint, v: &GateFunction) -> Result<DiscreteJoint, InfoError> {
    let (nx, ny, nm) = q.sizes();
    if v.ny != ny || v.nm != nm {
        return Err(InfoError::Mismatch("gate"));
    }
    let nm2 = nm + 1;
    let mut prob = vec![0.0; nx * ny * nm2];
    for x in 0..nx {
        for y in 0..ny {
            for m in 0..nm {
                let target = if v.accepts(y, m) { m } else { nm };
                prob[(x * ny + y) * nm2 + target] += q.p(x, y, m);
            }
        }
    }
    DiscreteJoint::checked(nx, ny, nm2, prob)
}

/// Model conditional `p(x | y, m)`, stored as `prob[(y * nm + m) * nx + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    nx: usize,
    ny: usize,
    nm: usize,
    prob: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(nx: usize, ny: usize, nm: usize, prob: Vec<f64>) -> Result<Self, InfoError> {
        let expected = nx * ny * nm;
        if prob.len() != expected {
            return Err(InfoError::TableSize {
                expected,
                actual: prob.len(),
            });
        }
        if let Some((index, &value)) = prob
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= 0.0 && p.is_finite()))
        {
            return Err(InfoError::Negative { index, value });
        }
        for y in 0..ny {
            for m in 0..nm {
                let sum: f64 = prob[(y * nm + m) * nx..(y * nm + m + 1) * nx].iter().sum();
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    return Err(InfoError::ConditionalRow { y, m, sum });
                }
            }
        }
        Ok(Self { nx, ny, nm, prob })
    }

    pub fn uniform(nx: usize, ny: usize, nm: usize) -> Self {
        Self {
            nx,
            ny,
            nm,
            prob: vec![1.0 / nx as f64; nx * ny * nm],
        }
    }

    /// `q(x | y, m)`; rows with zero `q(y, m)` fall back to uniform.
    pub fn exact_of(q: &DiscreteJoint) -> Self {
        let (nx, ny, nm) = q.sizes();
        let mut prob = vec![0.0; nx * ny * nm];
        for y in 0..ny {
            for m in 0..nm {
                let pym: f64 = (0..nx).map(|x| q.p(x, y, m)).sum();
                for x in 0..nx {
                    prob[(y * nm + m) * nx + x] = if pym > 0.0 {
                        q.p(x, y, m) / pym
                    } else {
                        1.0 / nx as f64
                    };
                }
            }
        }
        Self { nx, ny, nm, prob }
    }

    pub fn random_dirichlet<R: Rng + ?Sized>(
        nx: usize,
        ny: usize,
        nm: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Self {
        let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
        let mut prob = Vec::with_capacity(nx * ny * nm);
        for _ in 0..ny * nm {
            let row: Vec<f64> = (0..nx).map(|_| gamma.sample(rng)).collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 && sum.is_finite() {
                prob.extend(row.iter().map(|g| g / sum));
            } else {
                prob.extend(std::iter::repeat_n(1.0 / nx as f64, nx));
            }
        }
        Self { nx, ny, nm, prob }
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, m: usize) -> f64 {
        self.prob[(y * self.nm + m) * self.nx + x]
    }
}

/// Expected log-loss decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllGap {
    /// `E_q[-log2 p(X | Y, M)]`, `+inf` if `p` misses support of `q`.
    #[serde(with = "crate::serde_f64")]
    pub nll: f64,
    /// `H_q(X | Y, M)`.
    pub entropy: f64,
    /// `E_q[KL(q(·|Y,M) || p(·|Y,M))]`, `+inf` alongside `nll`.
    #[serde(with = "crate::serde_f64")]
    pub kl: f64,
}

impl NllGap {
    pub fn is_infinite(&self) -> bool {
        self.nll.is_infinite()
    }
}

/// Each term is computed on its own; the identity `nll = entropy + kl` is
/// checked by callers and tests rather than assumed.
pub fn nll_gap(q: &DiscreteJoint, p: &ConditionalTable) -> Result<NllGap, InfoError> {
    let (nx, ny, nm) = q.sizes();
    if (p.nx, p.ny, p.nm) != (nx, ny, nm) {
        return Err(InfoError::Mismatch("model conditional"));
    }
    let entropy = cond_entropy(q, Var::X, &[Var::Y, Var::M]);
    let mut nll = 0.0;
    let mut kl = 0.0;
    let mut infinite = false;
    for y in 0..ny {
        for m in 0..nm {
            let pym: f64 = (0..nx).map(|x| q.p(x, y, m)).sum();
            if pym <= 0.0 {
                continue;
            }
            let mut row_kl = 0.0;
            for x in 0..nx {
                let qxym = q.p(x, y, m);
                if qxym <= 0.0 {
                    continue;
                }
                let model = p.p(x, y, m);
                if model <= 0.0 {
                    infinite = true;
                    continue;
                }
                nll -= qxym * model.log2();
                let qc = qxym / pym;
                row_kl += qc * (qc / model).log2();
            }
            kl += pym * row_kl;
        }
    }
    if infinite {
        return Ok(NllGap {
            nll: f64::INFINITY,
            entropy,
            kl: f64::INFINITY,
        });
    }
    Ok(NllGap { nll, entropy, kl })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBound {
    pub i_xmy: f64,
    pub h_m: f64,
}

pub fn metadata_entropy_bound(q: &DiscreteJoint) -> Result<EntropyBound, InfoError> {
    Ok(EntropyBound {
        i_xmy: cond_mutual_info(q)?.value(),
        h_m: entropy(&q.marginal(&[Var::M])),
    })
}

// ---------------------------------------------------------------------------
// Randomized verification sweep
// ---------------------------------------------------------------------------

/// Worst observed slack per inequality. Slack is `rhs - lhs` for `lhs <= rhs`
/// statements, so a nonnegative value (up to tolerance) is a pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub samples: usize,
    pub seed: u64,
    pub alphabets: (usize, usize, usize),
    pub degenerate_cases: usize,
    pub min_entropy_reduction_slack: f64,
    pub min_cmi: f64,
    pub max_dual_gap: f64,
    pub min_gated_slack: f64,
    pub max_nll_identity_gap: f64,
    pub max_self_kl: f64,
    pub min_kl: f64,
    pub min_bitrate_bound_slack: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Hand-built edge cases: point masses, deterministic relations, zero rows,
/// independence, and near-degenerate tables.
pub fn degenerate_joints(nx: usize, ny: usize, nm: usize) -> Vec<DiscreteJoint> {
    let mut out = Vec::new();
    let mut push = |j: Result<DiscreteJoint, InfoError>| {
        if let Ok(j) = j {
            out.push(j);
        }
    };
    push(DiscreteJoint::from_fn(nx, ny, nm, |x, y, m| f64::from(u8::from(x == 0 && y == 0 && m == 0))));
    push(DiscreteJoint::from_fn(nx, ny, nm, |_, _, _| 1.0));
    let k = nx.min(nm);
    push(DiscreteJoint::from_fn(nx, ny, nm, |x, y, m| {
        f64::from(u8::from(x == m && x < k && y == 0))
    }));
    push(DiscreteJoint::from_fn(nx, ny, nm, |x, y, m| {
        f64::from(u8::from(x % ny.max(1) == y)) * (1.0 + m as f64)
    }));
    push(DiscreteJoint::from_fn(nx, ny, nm, |x, y, m| {
        if (x + y + m) % 2 == 0 {
            1.0
        } else {
            1e-300
        }
    }));
    push(DiscreteJoint::from_fn(nx, ny, nm, |x, y, m| {
        if x == 0 && m == nm - 1 {
            1.0 - 1e-9
        } else {
            1e-9 * (1 + x + y + m) as f64
        }
    }));
    push(DiscreteJoint::from_fn(nx, ny, nm, |x, y, m| {
        f64::from(u8::from((x ^ m) & 1 == y & 1))
    }));
    out
}

pub fn verify_theorem<R: Rng + ?Sized>(
    samples: usize,
    seed: u64,
    max_alphabets: (usize, usize, usize),
    rng: &mut R,
) -> Result<TheoremReport, InfoError> {
    let (ax, ay, am) = max_alphabets;
    let ok = |n: usize| (1..=MAX_ALPHABET).contains(&n);
    if !(ok(ax) && ok(ay) && ok(am)) {
        return Err(InfoError::Alphabet(ax, ay, am));
    }
    let mut r = TheoremReport {
        samples,
        seed,
        alphabets: max_alphabets,
        degenerate_cases: 0,
        min_entropy_reduction_slack: f64::INFINITY,
        min_cmi: f64::INFINITY,
        max_dual_gap: 0.0,
        min_gated_slack: f64::INFINITY,
        max_nll_identity_gap: 0.0,
        max_self_kl: 0.0,
        min_kl: f64::INFINITY,
        min_bitrate_bound_slack: f64::INFINITY,
        failures: Vec::new(),
        pass: true,
    };

    let mut joints: Vec<DiscreteJoint> = degenerate_joints(ax, ay, am);
    r.degenerate_cases = joints.len();
    for _ in 0..samples {
        let nx = rng.gen_range(1..=ax);
        let ny = rng.gen_range(1..=ay);
        let nm = rng.gen_range(1..=am);
        // small alpha produces near-degenerate tables
        let alpha = [0.05, 0.3, 1.0, 3.0][rng.gen_range(0..4)];
        joints.push(DiscreteJoint::random_dirichlet(nx, ny, nm, alpha, rng)?);
    }

    for (i, q) in joints.iter().enumerate() {
        let (nx, ny, nm) = q.sizes();
        let h_xy = cond_entropy(q, Var::X, &[Var::Y]);
        let h_xym = cond_entropy(q, Var::X, &[Var::Y, Var::M]);
        r.min_entropy_reduction_slack = r.min_entropy_reduction_slack.min(h_xy - h_xym);

        let via_entropy = h_xy - h_xym;
        let via_kl = cmi_via_kl(q);
        r.min_cmi = r.min_cmi.min(via_kl);
        r.max_dual_gap = r.max_dual_gap.max((via_entropy - via_kl).abs());

        let gate = GateFunction::random(ny, nm, rng.gen_range(0.0..=1.0), rng);
        let gated = apply_gate(q, &gate)?;
        let h_gated = cond_entropy(&gated, Var::X, &[Var::Y, Var::M]);
        r.min_gated_slack = r.min_gated_slack.min(h_xy - h_gated);

        let model = ConditionalTable::random_dirichlet(nx, ny, nm + 1, 1.0, rng);
        let g = nll_gap(&gated, &model)?;
        if !g.is_infinite() {
            r.max_nll_identity_gap = r.max_nll_identity_gap.max((g.nll - (g.entropy + g.kl)).abs());
            r.min_kl = r.min_kl.min(g.kl);
        }
        let exact = nll_gap(&gated, &ConditionalTable::exact_of(&gated))?;
        r.max_self_kl = r.max_self_kl.max(exact.kl.abs());

        let h_m = entropy(&q.marginal(&[Var::M]));
        r.min_bitrate_bound_slack = r.min_bitrate_bound_slack.min(h_m - via_kl);

        if h_xy - h_xym < -SIGN_TOLERANCE
            || via_kl < -SIGN_TOLERANCE
            || (via_entropy - via_kl).abs() > DUAL_TOLERANCE
            || h_xy - h_gated < -SIGN_TOLERANCE
            || h_m - via_kl < -SIGN_TOLERANCE
        {
            r.failures.push(format!("joint #{i} ({nx}x{ny}x{nm})"));
        }
    }
    r.pass = r.failures.is_empty()
        && r.max_nll_identity_gap <= DUAL_TOLERANCE
        && r.max_self_kl < SIGN_TOLERANCE
        && r.min_kl >= -SIGN_TOLERANCE;
    Ok(r)
}
